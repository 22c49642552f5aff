//! Diagnostics of a single representation matrix.
//!
//! The central quantity is the orthogonality gap
//!
//! ```text
//! V(H) = || H^T H / ||H||_F^2 - I / n ||_F
//! ```
//!
//! which is zero exactly when the columns are orthogonal with equal norms.
//! Writing `s_i` for the squared singular values of `H / ||H||_F`,
//! `V^2 = sum s_i^2 - 1/n`. The Lyapunov gap `1/n - sigma_n^2` is a cruder
//! potential that bounds `V` from above.

use alloc::vec::Vec;

use crate::chain::UNIT_NORM_TOL;
use crate::numerics::math;
use crate::numerics::{singular_values, Matrix, SingularSpectrum};
use crate::{Error, Result};

/// Symmetrized `H^T H`.
pub fn gram(h: &Matrix) -> Matrix {
    let g = h.t_matmul(h);
    let n = g.rows();
    let mut out = g.clone();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (g[(i, j)] + g[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    out
}

fn gap_of_normalized_gram(g: &Matrix, scale: f64) -> f64 {
    let n = g.rows();
    let inv_n = 1.0 / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { inv_n } else { 0.0 };
            let e = g[(i, j)] / scale - target;
            acc += e * e;
        }
    }
    math::sqrt(acc)
}

/// `|| H^T H / ||H||_F^2 - I_n / n ||_F`; invariant under `H -> c H`.
pub fn orthogonality_gap(h: &Matrix) -> Result<f64> {
    let g = gram(h);
    let ss = g.trace();
    if ss == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(gap_of_normalized_gram(&g, ss))
}

/// The same gap from singular values: `sqrt(sum s_i^2 - 1/n)` with
/// `s_i = sigma_i^2 / sum sigma_j^2`.
///
/// `n` may exceed the spectrum length; missing values count as zero.
pub fn orthogonality_gap_from_spectrum(sigma: &SingularSpectrum, n: usize) -> Result<f64> {
    if n < sigma.len() {
        return Err(Error::param("spectrum is longer than the batch size"));
    }
    let total = sigma.sum_of_squares();
    if total == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let quartic: f64 = sigma.values().iter().map(|s| (s * s / total) * (s * s / total)).sum();
    Ok(math::sqrt((quartic - 1.0 / n as f64).max(0.0)))
}

fn check_unit(h: &Matrix) -> Result<()> {
    let norm = h.frobenius_norm();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::NotUnitNorm { norm });
    }
    Ok(())
}

/// Squared minimum singular value over all `n` columns; zero when `d < n`.
fn sigma_n_squared(h: &Matrix) -> Result<f64> {
    if h.rows() < h.cols() {
        return Ok(0.0);
    }
    let s = singular_values(h)?.min();
    Ok(s * s)
}

/// `sum_i (sigma_i - 1/sqrt(n))^2` over all `n` singular values, counting
/// the ones a wide matrix lacks as zero.
pub fn coupling_cost(sigma: &SingularSpectrum, n: usize) -> f64 {
    let target = 1.0 / math::sqrt(n as f64);
    let present: f64 = sigma.values().iter().map(|s| (s - target) * (s - target)).sum();
    present + n.saturating_sub(sigma.len()) as f64 * target * target
}

/// `1/n - sigma_n(H)^2` for a unit-Frobenius `H`.
pub fn lyapunov_gap(h: &Matrix) -> Result<f64> {
    check_unit(h)?;
    Ok(1.0 / h.cols() as f64 - sigma_n_squared(h)?)
}

/// Cosine of every unordered column pair, in the order
/// `(0,1), (0,2), .., (0,n-1), (1,2), ..`.
pub fn pairwise_cosines(h: &Matrix) -> Result<Vec<f64>> {
    cosines_from_gram(&gram(h))
}

fn cosines_from_gram(g: &Matrix) -> Result<Vec<f64>> {
    let n = g.rows();
    if let Some(col) = (0..n).find(|&i| g[(i, i)] == 0.0) {
        return Err(Error::ZeroColumn { col });
    }
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let c = g[(i, j)] / math::sqrt(g[(i, i)] * g[(j, j)]);
            out.push(c.clamp(-1.0, 1.0));
        }
    }
    Ok(out)
}

/// Entry moments of a pre-normalization product against the Gaussian
/// reference whose entries have variance `1 / (n d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianityReport {
    pub entry_mean: f64,
    /// Unbiased sample variance of all entries.
    pub entry_var: f64,
    pub target_var: f64,
    /// Largest absolute Pearson correlation between two columns.
    pub max_column_crosscorr: f64,
    /// Set when the matrix has no spread at all.
    pub degenerate: bool,
}

pub fn gaussianity_diagnostics(m: &Matrix, n: usize, d: usize) -> GaussianityReport {
    let data = m.as_slice();
    let count = data.len() as f64;
    let mean = data.iter().sum::<f64>() / count;
    let var =
        if data.len() > 1 { data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (count - 1.0) } else { 0.0 };
    let rows = m.rows() as f64;
    let centered: Vec<Vec<f64>> = (0..m.cols())
        .map(|j| {
            let c = m.column(j);
            let mu = c.iter().sum::<f64>() / rows;
            c.into_iter().map(|x| x - mu).collect()
        })
        .collect();
    let mut cross = 0.0_f64;
    for i in 0..centered.len() {
        for j in i + 1..centered.len() {
            let a = &centered[i];
            let b = &centered[j];
            let num: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let den = math::sqrt(a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|x| x * x).sum::<f64>());
            if den > 0.0 {
                cross = cross.max((num / den).abs());
            }
        }
    }
    GaussianityReport {
        entry_mean: mean,
        entry_var: var,
        target_var: 1.0 / (n as f64 * d as f64),
        max_column_crosscorr: cross,
        degenerate: var == 0.0,
    }
}

/// Diagnostics recorded for one layer of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// 1 for the input.
    pub layer: usize,
    pub v_gap: f64,
    pub lyap_gap: f64,
    pub sigma_min: f64,
    pub frob_norm: f64,
    pub cosines: Vec<f64>,
    /// Distance of the spectrum from the flat one, `sum_i (sigma_i - 1/sqrt(n))^2`.
    pub coupling_cost: f64,
    /// Mean of the entries of the product that produced this layer.
    pub entry_mean: Option<f64>,
    /// Variance of the entries of the product that produced this layer.
    pub entry_var: Option<f64>,
}

impl LayerTrace {
    /// Measures a unit-norm state and, if given, the product it came from.
    pub fn measure(layer: usize, h: &Matrix, product: Option<&Matrix>) -> Result<LayerTrace> {
        check_unit(h)?;
        let g = gram(h);
        let v_gap = gap_of_normalized_gram(&g, g.trace());
        let n = h.cols();
        let spectrum = singular_values(h)?;
        let s2 = if h.rows() < n { 0.0 } else { spectrum.min() * spectrum.min() };
        let (entry_mean, entry_var) = match product {
            Some(p) => {
                let r = gaussianity_diagnostics(p, h.cols(), h.rows());
                (Some(r.entry_mean), Some(r.entry_var))
            }
            None => (None, None),
        };
        Ok(LayerTrace {
            layer,
            v_gap,
            lyap_gap: 1.0 / n as f64 - s2,
            sigma_min: math::sqrt(s2),
            frob_norm: h.frobenius_norm(),
            cosines: cosines_from_gram(&g)?,
            coupling_cost: coupling_cost(&spectrum, n),
            entry_mean,
            entry_var,
        })
    }
}

/// Number of post-burn-in layers [`conjecture_gap`] insists on.
pub const MIN_CONJECTURE_WINDOW: usize = 100;

/// `|| G_k - mean(G) ||_F` for every Gram matrix in the window, where the
/// mean runs over the same window.
pub fn conjecture_gap_window(grams: &[Matrix]) -> Result<Vec<f64>> {
    let first = grams.first().ok_or(Error::ChainTooShort { len: 0, required: 1 })?;
    let n = first.rows();
    if grams.iter().any(|g| g.shape() != (n, n)) {
        return Err(Error::shape("Gram matrices must all be n x n"));
    }
    let mut mean = Matrix::zeros(n, n);
    for g in grams {
        mean = mean.add(g);
    }
    mean.scale_in_place(1.0 / grams.len() as f64);
    Ok(grams.iter().map(|g| g.sub(&mean).frobenius_norm()).collect())
}

/// Conjecture gap after discarding the first `burn_in` layers.
///
/// Needs at least `burn_in + 100` Gram matrices.
pub fn conjecture_gap(grams: &[Matrix], burn_in: usize) -> Result<Vec<f64>> {
    let required = burn_in + MIN_CONJECTURE_WINDOW;
    if grams.len() < required {
        return Err(Error::ChainTooShort { len: grams.len(), required });
    }
    conjecture_gap_window(&grams[burn_in..])
}
