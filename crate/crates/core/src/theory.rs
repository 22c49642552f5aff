//! Closed-form bounds on the chain and Monte Carlo checks of them.
//!
//! # The p-vector
//!
//! For a state with singular values `sigma` the next Gram matrix, expressed
//! in the right singular basis of the state, has expected diagonal
//!
//! ```text
//! p_i = E[ sigma_i^2 w_i^2 / sum_k sigma_k^2 w_k^2 ],   w ~ N(0, I_n)
//! ```
//!
//! and zero expected off-diagonal. Writing the ratio through the joint
//! moment generating function of the `w_k^2` turns it into
//!
//! ```text
//! p_i = integral over theta in (-inf, 0] of
//!       sigma_i^2 / (1 - 2 theta sigma_i^2) * prod_j (1 - 2 theta sigma_j^2)^(-1/2)
//! ```
//!
//! which [`p_vector_quadrature`] evaluates after `theta = -t / (1 - t)`.
//! The entries sum to one and inherit the ordering of `sigma`.
//!
//! # Bound conventions
//!
//! `alpha` always denotes a floor on the *squared* minimum singular value of
//! unit-norm states, which is the quantity `1/n - V_hat` the contraction
//! argument actually uses. Layer bounds take the number of steps taken since
//! the input as their `depth`.

use alloc::vec;
use alloc::vec::Vec;

use crate::chain::{batch_norm, UNIT_NORM_TOL};
use crate::chain::{sample_product, Activation, Repr, WeightSampling};
use crate::metrics::{coupling_cost, gram, orthogonality_gap_from_spectrum, LayerTrace};
use crate::numerics::math::{self, CompensatedSum};
use crate::numerics::quad::{integrate_vec, MAX_INTERVALS};
use crate::numerics::{thin_svd, Matrix, SeededRng, SingularSpectrum};
use crate::{Error, Result};

/// Default absolute tolerance per p-vector component.
pub const P_VECTOR_TOL: f64 = 1e-8;

/// Monte Carlo slack, in standard errors, used by every [`BoundReport`].
pub const MC_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PMethod {
    Quadrature,
    MonteCarlo,
}

/// Expected diagonal of the next Gram matrix in the right singular basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PVector {
    pub values: Vec<f64>,
    pub method: PMethod,
    /// Zero for quadrature.
    pub std_errors: Vec<f64>,
}

impl PVector {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Standard error of the sum, assuming independent components.
    pub fn combined_std_error(&self) -> f64 {
        math::sqrt(self.std_errors.iter().map(|s| s * s).sum())
    }
}

fn check_unit_spectrum(sigma: &SingularSpectrum) -> Result<()> {
    let total = sigma.sum_of_squares();
    if (total - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::NotUnitNorm { norm: math::sqrt(total) });
    }
    Ok(())
}

fn p_integral(squares: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = squares.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let q = integrate_vec(
        |t, out: &mut [f64]| {
            let s = t / (1.0 - t);
            let jac = 1.0 / ((1.0 - t) * (1.0 - t));
            let log_prod: f64 = squares.iter().map(|&q| math::ln_1p(2.0 * s * q)).sum();
            let common = math::exp(-0.5 * log_prod) * jac;
            for (o, &q) in out.iter_mut().zip(squares) {
                *o = q / (1.0 + 2.0 * s * q) * common;
            }
        },
        0.0,
        1.0,
        n,
        tol,
        MAX_INTERVALS,
    )?;
    Ok(q.values)
}

/// p-vector by adaptive quadrature, each component to absolute error `tol`.
///
/// Requires a unit-norm spectrum with no zero singular value; see
/// [`p_vector_rank_aware`] for the general case.
pub fn p_vector_quadrature(sigma: &SingularSpectrum, tol: f64) -> Result<PVector> {
    check_unit_spectrum(sigma)?;
    if let Some(i) = sigma.values().iter().position(|&s| s == 0.0) {
        return Err(Error::param(alloc::format!("singular value {i} is zero; its p-vector entry is exactly 0")));
    }
    let values = p_integral(&sigma.squares(), tol)?;
    Ok(PVector { std_errors: vec![0.0; values.len()], values, method: PMethod::Quadrature })
}

/// p-vector for spectra with zero entries: those components get exactly 0
/// and the integral runs over the remaining ones, which is exact because the
/// ratio defining `p` is invariant under rescaling `sigma`.
pub fn p_vector_rank_aware(sigma: &SingularSpectrum, tol: f64) -> Result<PVector> {
    let squares = sigma.squares();
    let total: f64 = squares.iter().sum();
    if total == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let positive: Vec<f64> = squares.iter().filter(|&&q| q > 0.0).map(|q| q / total).collect();
    let inner = p_integral(&positive, tol)?;
    let mut values = vec![0.0; squares.len()];
    let mut it = inner.into_iter();
    for (v, &q) in values.iter_mut().zip(&squares) {
        if q > 0.0 {
            *v = it.next().expect("one value per positive component");
        }
    }
    Ok(PVector { std_errors: vec![0.0; values.len()], values, method: PMethod::Quadrature })
}

/// Minimum sample count accepted by [`p_vector_montecarlo`].
pub const MIN_MC_SAMPLES: usize = 10_000;

/// p-vector as a sample mean over `samples` Gaussian draws.
pub fn p_vector_montecarlo(sigma: &SingularSpectrum, samples: usize, rng: &mut SeededRng) -> Result<PVector> {
    if samples < MIN_MC_SAMPLES {
        return Err(Error::param(alloc::format!("need at least {MIN_MC_SAMPLES} samples, got {samples}")));
    }
    let squares = sigma.squares();
    if squares.iter().all(|&q| q == 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let n = squares.len();
    let mut sums = vec![CompensatedSum::default(); n];
    let mut sq_sums = vec![CompensatedSum::default(); n];
    let mut ratio = vec![0.0; n];
    for _ in 0..samples {
        let mut total = 0.0;
        for (r, &q) in ratio.iter_mut().zip(&squares) {
            let w = rng.standard_normal();
            *r = q * w * w;
            total += *r;
        }
        for i in 0..n {
            let x = ratio[i] / total;
            sums[i].add(x);
            sq_sums[i].add(x * x);
        }
    }
    let m = samples as f64;
    let mut values = Vec::with_capacity(n);
    let mut std_errors = Vec::with_capacity(n);
    for i in 0..n {
        let mean = sums[i].value() / m;
        let var = ((sq_sums[i].value() - m * mean * mean) / (m - 1.0)).max(0.0);
        values.push(mean);
        std_errors.push(math::sqrt(var / m));
    }
    Ok(PVector { values, method: PMethod::MonteCarlo, std_errors })
}

/// Comparison of an empirical quantity against an upper bound.
///
/// `satisfied` holds when `empirical <= bound + 3 mc_std_error + tolerance`,
/// where `tolerance` covers deterministic numerical error (quadrature,
/// floating point) and is zero for pure Monte Carlo checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub empirical: f64,
    pub bound: f64,
    pub satisfied: bool,
    /// `bound - empirical`.
    pub margin: f64,
    pub mc_std_error: f64,
    pub tolerance: f64,
}

impl BoundReport {
    pub fn new(empirical: f64, bound: f64, mc_std_error: f64) -> Self {
        BoundReport::with_tolerance(empirical, bound, mc_std_error, 0.0)
    }

    pub fn with_tolerance(empirical: f64, bound: f64, mc_std_error: f64, tolerance: f64) -> Self {
        BoundReport {
            empirical,
            bound,
            satisfied: empirical <= bound + MC_SIGMAS * mc_std_error + tolerance,
            margin: bound - empirical,
            mc_std_error,
            tolerance,
        }
    }
}

/// Expected next-layer Lyapunov gap bound: `(1 - 2/3 (1/n - lyap)) lyap + 1/sqrt(d)`.
pub fn single_step_bound(lyap: f64, n: usize, d: usize) -> f64 {
    let inv_n = 1.0 / n as f64;
    (1.0 - 2.0 / 3.0 * (inv_n - lyap)) * lyap + 1.0 / math::sqrt(d as f64)
}

fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, math::sqrt(var / m))
}

/// One linear normalized step, drawn through the factored sampler.
fn next_state(h: &Matrix, rng: &mut SeededRng) -> Result<Matrix> {
    let product = sample_product(h, rng, Activation::Linear, WeightSampling::Factored)?;
    Ok(batch_norm(&product)?.scaled(1.0 / math::sqrt(h.rows() as f64)))
}

fn lyap_of(h: &Matrix) -> Result<f64> {
    let n = h.cols();
    let s = if h.rows() < n { 0.0 } else { crate::numerics::min_singular_value(h)? };
    Ok(1.0 / n as f64 - s * s)
}

/// Minimum replicates for [`verify_single_step`].
pub const MIN_STEP_REPLICATES: usize = 100;

/// Monte Carlo mean of the next Lyapunov gap against [`single_step_bound`].
///
/// Replicate `r` draws its weights from `rng.derive(r)`.
pub fn verify_single_step(h: &Repr, replicates: usize, rng: &SeededRng) -> Result<BoundReport> {
    if replicates < MIN_STEP_REPLICATES {
        return Err(Error::param(alloc::format!("need at least {MIN_STEP_REPLICATES} replicates")));
    }
    let lyap = lyap_of(h.matrix())?;
    let samples = (0..replicates)
        .map(|r| {
            let next = next_state(h.matrix(), &mut rng.derive(r as u64))?;
            lyap_of(&next)
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, se) = mean_and_std_error(&samples);
    Ok(BoundReport::with_tolerance(mean, single_step_bound(lyap, h.n(), h.d()), se, 1e-12))
}

fn geometric(alpha: f64, depth: usize) -> f64 {
    let base = 1.0 - 2.0 / 3.0 * alpha;
    math::powi(base, depth.min(u32::MAX as usize) as u32)
}

/// `2 (1 - 2/3 alpha)^depth + 3 n / (alpha sqrt(d))`.
///
/// Infinite when `alpha <= 0`, which is how a chain without a positive
/// singular-value floor shows up.
pub fn theorem1_bound(alpha: f64, depth: usize, n: usize, d: usize) -> f64 {
    if !(alpha > 0.0) {
        return f64::INFINITY;
    }
    2.0 * geometric(alpha, depth) + theorem1_plateau(alpha, n, d)
}

/// The depth-independent term `3 n / (alpha sqrt(d))`.
pub fn theorem1_plateau(alpha: f64, n: usize, d: usize) -> f64 {
    if !(alpha > 0.0) {
        return f64::INFINITY;
    }
    3.0 * n as f64 / (alpha * math::sqrt(d as f64))
}

/// Variant with the additive term `3 n / (2 alpha sqrt(d))` that the
/// telescoping argument produces before constants are rounded up.
pub fn theorem1_bound_derived(alpha: f64, depth: usize, n: usize, d: usize) -> f64 {
    if !(alpha > 0.0) {
        return f64::INFINITY;
    }
    2.0 * geometric(alpha, depth) + 0.5 * theorem1_plateau(alpha, n, d)
}

/// `4 n (1 - 2/3 alpha)^depth + 6 n^2 / (alpha sqrt(d))`, a bound on the
/// squared Wasserstein-2 distance between the next product and a scaled
/// Gaussian matrix.
pub fn corollary_w2_bound(alpha: f64, depth: usize, n: usize, d: usize) -> f64 {
    if !(alpha > 0.0) {
        return f64::INFINITY;
    }
    let n = n as f64;
    4.0 * n * geometric(alpha, depth) + 6.0 * n * n / (alpha * math::sqrt(d as f64))
}

/// Terms of the coupling argument for one unit-norm spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingQuantities {
    /// `sum_i (sigma_i - 1/sqrt(n))^2`.
    pub coupling_cost: f64,
    pub v_gap: f64,
    /// `n V^2`.
    pub n_v_squared: f64,
    /// `2 n V`.
    pub v_bound: f64,
}

/// Coupling cost of a unit-norm spectrum padded with zeros to length `n`.
pub fn coupling_w2_quantities(sigma: &SingularSpectrum, n: usize) -> Result<CouplingQuantities> {
    check_unit_spectrum(sigma)?;
    let v = orthogonality_gap_from_spectrum(sigma, n)?;
    let nf = n as f64;
    Ok(CouplingQuantities {
        coupling_cost: coupling_cost(sigma, n),
        v_gap: v,
        n_v_squared: nf * v * v,
        v_bound: 2.0 * nf * v,
    })
}

/// Result of [`verify_gram_concentration`].
#[derive(Debug, Clone, PartialEq)]
pub struct GramConcentrationReport {
    /// `E || C - E C ||_F^2` against `1/d`.
    pub squared_deviation: BoundReport,
    /// Quadrature p-vector of the input state.
    pub p_expected: Vec<f64>,
    /// Mean diagonal of the next Gram matrix in the right singular basis.
    pub diag_mean: Vec<f64>,
    pub diag_std_error: Vec<f64>,
    /// Largest `|diag_mean_i - p_i| / std_error_i`.
    pub max_diag_z: f64,
    /// Largest `|offdiag_mean| / std_error` in the same basis.
    pub max_offdiag_z: f64,
    pub diagonal_ok: bool,
    pub offdiag_ok: bool,
}

/// Minimum replicates for [`verify_gram_concentration`].
pub const MIN_GRAM_REPLICATES: usize = 200;

/// Threshold, in standard errors, for the mean-Gram comparisons.
pub const GRAM_Z_LIMIT: f64 = 4.0;

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff.abs() / se
    } else if diff.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Monte Carlo spread and mean of the next Gram matrix `C = H'^T H'`.
///
/// The mean is compared in the right singular basis `V` of `H`, where
/// `E[V^T C V]` is the diagonal p-vector; the spread `E||C - EC||^2` is
/// basis independent and uses the unbiased `R / (R - 1)` correction.
pub fn verify_gram_concentration(h: &Repr, replicates: usize, rng: &SeededRng) -> Result<GramConcentrationReport> {
    if replicates < MIN_GRAM_REPLICATES {
        return Err(Error::param(alloc::format!("need at least {MIN_GRAM_REPLICATES} replicates")));
    }
    let n = h.n();
    let d = h.d();
    let svd = thin_svd(h.matrix())?;
    let v = svd.right;
    let p = p_vector_rank_aware(&svd.singulars, 1e-10)?.values;

    let rotated = (0..replicates)
        .map(|r| {
            let next = next_state(h.matrix(), &mut rng.derive(r as u64))?;
            let c = gram(&next);
            Ok(v.t_matmul(&c.matmul(&v)))
        })
        .collect::<Result<Vec<Matrix>>>()?;

    let rf = replicates as f64;
    let mut mean = Matrix::zeros(n, n);
    for c in &rotated {
        mean = mean.add(c);
    }
    mean.scale_in_place(1.0 / rf);

    let dev: Vec<f64> = rotated.iter().map(|c| c.sub(&mean).sum_of_squares() * rf / (rf - 1.0)).collect();
    let (dev_mean, dev_se) = mean_and_std_error(&dev);

    let mut diag_std_error = vec![0.0; n];
    let mut diag_mean = vec![0.0; n];
    let mut max_diag_z = 0.0_f64;
    let mut max_offdiag_z = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            let xs: Vec<f64> = rotated.iter().map(|c| c[(i, j)]).collect();
            let (m, se) = mean_and_std_error(&xs);
            if i == j {
                diag_mean[i] = m;
                diag_std_error[i] = se;
                max_diag_z = max_diag_z.max(z_score(m - p[i], se));
            } else {
                max_offdiag_z = max_offdiag_z.max(z_score(m, se));
            }
        }
    }
    Ok(GramConcentrationReport {
        squared_deviation: BoundReport::new(dev_mean, 1.0 / d as f64, dev_se),
        p_expected: p,
        diag_mean,
        diag_std_error,
        max_diag_z,
        max_offdiag_z,
        diagonal_ok: max_diag_z <= GRAM_Z_LIMIT,
        offdiag_ok: max_offdiag_z <= GRAM_Z_LIMIT,
    })
}

/// Both forms of the contraction-center inequality for one spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionCenterReport {
    /// `1/n - p_n`.
    pub lhs: f64,
    /// Against `(1 - 2/3 sigma_n^2)(1/n - sigma_n^2)`.
    pub stated: BoundReport,
    /// Against the sharper `(1 - 2n/(n+2) sigma_n^2)(1/n - sigma_n^2)`.
    pub proof: BoundReport,
}

impl ContractionCenterReport {
    pub fn satisfied(&self) -> bool {
        self.stated.satisfied && self.proof.satisfied
    }
}

const CONTRACTION_QUAD_TOL: f64 = 1e-11;

/// Evaluates `1/n - p_n(sigma)` by quadrature against both bounds.
///
/// `sigma` is padded with zeros up to length `n`.
pub fn verify_contraction_center(sigma: &SingularSpectrum, n: usize) -> Result<ContractionCenterReport> {
    check_unit_spectrum(sigma)?;
    if sigma.len() > n {
        return Err(Error::param("spectrum is longer than the batch size"));
    }
    let inv_n = 1.0 / n as f64;
    let (p_n, s2) = if sigma.len() < n {
        (0.0, 0.0)
    } else {
        let p = p_vector_rank_aware(sigma, CONTRACTION_QUAD_TOL)?;
        let s = sigma.min();
        (p.values[n - 1], s * s)
    };
    let lhs = inv_n - p_n;
    let lyap = inv_n - s2;
    let stated = (1.0 - 2.0 / 3.0 * s2) * lyap;
    let proof = (1.0 - 2.0 * n as f64 / (n as f64 + 2.0) * s2) * lyap;
    let tol = 10.0 * CONTRACTION_QUAD_TOL;
    Ok(ContractionCenterReport {
        lhs,
        stated: BoundReport::with_tolerance(lhs, stated, 0.0, tol),
        proof: BoundReport::with_tolerance(lhs, proof, 0.0, tol),
    })
}

/// `(1 + 2 theta (1/n - delta))^(-3/2) (1 + 2 theta (1/n + delta/(n-1)))^(-(n-1)/2)`
/// for `n >= 2`.
pub fn g(delta: f64, theta: f64, n: usize) -> f64 {
    let nf = n as f64;
    let a = 1.0 + 2.0 * theta * (1.0 / nf - delta);
    let b = 1.0 + 2.0 * theta * (1.0 / nf + delta / (nf - 1.0));
    math::powf(a, -1.5) * math::powf(b, -(nf - 1.0) / 2.0)
}

/// Smallest central second difference of `g` found by a grid scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityScan {
    pub min_second_difference: f64,
    pub theta: f64,
    pub delta: f64,
    pub step: f64,
}

/// Scans `(g(x+h) - 2g(x) + g(x-h)) / h^2` with `h = 1e-4 / n` over the grid.
pub fn g_convexity_scan(n: usize, thetas: &[f64], deltas: &[f64]) -> Result<ConvexityScan> {
    if n < 2 {
        return Err(Error::param("g is defined for n >= 2"));
    }
    if thetas.is_empty() || deltas.is_empty() {
        return Err(Error::param("empty grid"));
    }
    let inv_n = 1.0 / n as f64;
    if thetas.iter().any(|t| !(*t >= 0.0)) || deltas.iter().any(|x| !(*x >= 0.0 && *x <= inv_n)) {
        return Err(Error::param("theta must be >= 0 and delta in [0, 1/n]"));
    }
    let h = 1e-4 * inv_n;
    let mut best = ConvexityScan { min_second_difference: f64::INFINITY, theta: thetas[0], delta: deltas[0], step: h };
    for &theta in thetas {
        for &delta in deltas {
            let sd = (g(delta + h, theta, n) - 2.0 * g(delta, theta, n) + g(delta - h, theta, n)) / (h * h);
            if sd < best.min_second_difference {
                best.min_second_difference = sd;
                best.theta = theta;
                best.delta = delta;
            }
        }
    }
    Ok(best)
}

/// Running-average stability check, one entry per prefix length.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Entry `k` covers the first `k + 1` steps.
    pub prefixes: Vec<BoundReport>,
    pub satisfied: bool,
}

/// Minimum number of steps for [`no_assumption_stability`].
pub const MIN_STABILITY_STEPS: usize = 10;

/// Seed-averaged `(1/l) sum_{k=1..l} V_hat_k (1/n - V_hat_k)` against
/// `3 E[V_hat_0] / (2 l) + 3 / (2 sqrt(d))` for every prefix `l`.
///
/// Each run lists its layers from the input onward.
pub fn no_assumption_stability(runs: &[&[LayerTrace]], n: usize, d: usize) -> Result<StabilityReport> {
    let steps = runs.iter().map(|r| r.len()).min().unwrap_or(0).saturating_sub(1);
    if runs.is_empty() || steps < MIN_STABILITY_STEPS {
        return Err(Error::ChainTooShort { len: steps, required: MIN_STABILITY_STEPS });
    }
    let inv_n = 1.0 / n as f64;
    let v0 = runs.iter().map(|r| r[0].lyap_gap).sum::<f64>() / runs.len() as f64;
    let mut running = vec![0.0; runs.len()];
    let mut prefixes = Vec::with_capacity(steps);
    for l in 1..=steps {
        let per_run: Vec<f64> = runs
            .iter()
            .zip(running.iter_mut())
            .map(|(r, acc)| {
                let v = r[l].lyap_gap;
                *acc += v * (inv_n - v);
                *acc / l as f64
            })
            .collect();
        let (mean, se) = mean_and_std_error(&per_run);
        let rhs = 3.0 * v0 / (2.0 * l as f64) + 1.5 / math::sqrt(d as f64);
        prefixes.push(BoundReport::new(mean, rhs, se));
    }
    let satisfied = prefixes.iter().all(|p| p.satisfied);
    Ok(StabilityReport { prefixes, satisfied })
}

/// Smallest squared minimum singular value over all given layers.
pub fn estimate_alpha<'a, I>(traces: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a LayerTrace>,
{
    traces
        .into_iter()
        .map(|t| t.sigma_min * t.sigma_min)
        .reduce(f64::min)
        .ok_or_else(|| Error::param("no traces to estimate alpha from"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{sample_input, simulate_chain, ChainConfig, InputKind};

    fn spectrum(squares: &[f64]) -> SingularSpectrum {
        SingularSpectrum::from_squares(squares).unwrap()
    }

    #[test]
    fn p_vector_single_and_equal() {
        assert_eq!(p_vector_quadrature(&spectrum(&[1.0]), 1e-8).unwrap().values, vec![1.0]);
        for n in [2usize, 3, 5, 8] {
            let p = p_vector_quadrature(&spectrum(&vec![1.0 / n as f64; n]), 1e-10).unwrap();
            for v in p.values {
                assert!((v - 1.0 / n as f64).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn p_vector_two_dimensional_closed_form() {
        // For n = 2 the integral reduces to sigma_i / (sigma_1 + sigma_2).
        for s1 in [0.55, 0.7, 0.9, 0.99] {
            let sq = [s1, 1.0 - s1];
            let p = p_vector_quadrature(&spectrum(&sq), 1e-10).unwrap().values;
            let (a, b) = (math::sqrt(sq[0]), math::sqrt(sq[1]));
            assert!((p[0] - a / (a + b)).abs() < 1e-9);
            assert!((p[1] - b / (a + b)).abs() < 1e-9);
        }
    }

    #[test]
    fn p_vector_rejects_zero_and_non_unit() {
        assert!(p_vector_quadrature(&spectrum(&[1.0, 0.0]), 1e-8).is_err());
        assert!(p_vector_quadrature(&spectrum(&[0.5, 0.1]), 1e-8).is_err());
        let p = p_vector_rank_aware(&spectrum(&[0.6, 0.4, 0.0]), 1e-10).unwrap().values;
        assert_eq!(p[2], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn montecarlo_sums_to_one() {
        let s = spectrum(&[0.5, 0.3, 0.15, 0.05]);
        let p = p_vector_montecarlo(&s, 20_000, &mut SeededRng::new(3)).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-12);
        assert!(p_vector_montecarlo(&s, 100, &mut SeededRng::new(3)).is_err());
        let degenerate = SingularSpectrum::new(vec![1.0, 1e-6, 1e-6]).unwrap();
        let p = p_vector_montecarlo(&degenerate, 10_000, &mut SeededRng::new(1)).unwrap();
        assert!(p.values[0] > 0.999);
    }

    #[test]
    fn single_step_bound_values() {
        assert!((single_step_bound(0.0, 4, 256) - 1.0 / 16.0).abs() < 1e-15);
        assert!((single_step_bound(0.25, 4, 256) - (0.25 + 1.0 / 16.0)).abs() < 1e-15);
        assert!((single_step_bound(0.1, 4, 256) - 0.1525).abs() < 1e-15);
    }

    #[test]
    fn theorem1_values() {
        let b = theorem1_bound(0.2, 30, 4, 1024);
        let direct = 2.0 * (13.0f64 / 15.0).powi(30) + 12.0 / (0.2 * 32.0);
        assert!((b - direct).abs() < 1e-12);
        assert!((theorem1_bound(0.2, 0, 4, 1024) - (2.0 + 1.875)).abs() < 1e-12);
        assert!((theorem1_bound(0.2, 100_000, 4, 1024) - 1.875).abs() < 1e-12);
        assert!((theorem1_bound_derived(0.2, 100_000, 4, 1024) - 0.9375).abs() < 1e-12);
        assert_eq!(theorem1_bound(0.0, 3, 4, 1024), f64::INFINITY);
    }

    #[test]
    fn corollary_is_2n_times_theorem1() {
        for (a, l, n, d) in [(0.2, 30, 4, 1024), (0.4, 50, 2, 10_000), (0.1, 3, 8, 64)] {
            let c = corollary_w2_bound(a, l, n, d);
            assert!((c - 2.0 * n as f64 * theorem1_bound(a, l, n, d)).abs() < 1e-10 * c);
        }
        let plug_in = 8.0 * (1.0f64 - 0.8 / 3.0).powi(50) + 24.0 / (0.4 * 100.0);
        assert!((corollary_w2_bound(0.4, 50, 2, 10_000) - plug_in).abs() < 1e-12);
        assert!((corollary_w2_bound(0.4, usize::MAX, 2, 10_000) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn coupling_quantities() {
        let flat = coupling_w2_quantities(&spectrum(&[0.25; 4]), 4).unwrap();
        assert!(flat.coupling_cost < 1e-15);
        let r1 = coupling_w2_quantities(&spectrum(&[1.0, 0.0]), 2).unwrap();
        let expected = (1.0 - 1.0 / 2f64.sqrt()).powi(2) + 0.5;
        assert!((r1.coupling_cost - expected).abs() < 1e-12);
        assert!((r1.v_bound - 4.0 * 0.5f64.sqrt()).abs() < 1e-12);
        assert!(r1.coupling_cost <= r1.n_v_squared && r1.n_v_squared <= r1.v_bound);
    }

    #[test]
    fn contraction_center_examples() {
        let eq = verify_contraction_center(&spectrum(&[0.25; 4]), 4).unwrap();
        assert!(eq.lhs.abs() < 1e-9 && eq.satisfied());
        let r = verify_contraction_center(&spectrum(&[0.9, 0.1]), 2).unwrap();
        assert!((r.proof.bound - 0.36).abs() < 1e-12);
        // p_2 = sqrt(0.1) / (sqrt(0.9) + sqrt(0.1)) = 0.25 exactly.
        assert!((r.lhs - 0.25).abs() < 1e-9);
        assert!(r.satisfied());
    }

    #[test]
    fn convexity_scan() {
        let deltas: Vec<f64> = (0..200).map(|i| 0.5 * i as f64 / 199.0).collect();
        let s = g_convexity_scan(2, &[0.0, 1.0, 10.0, 100.0], &deltas).unwrap();
        assert!(s.min_second_difference >= -1e-6, "{s:?}");
        let flat = g_convexity_scan(3, &[0.0], &[0.1]).unwrap();
        assert_eq!(flat.min_second_difference, 0.0);
        assert!(g_convexity_scan(1, &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn single_step_at_fixed_point() {
        let h = sample_input(InputKind::Orthogonal, 64, 2, &mut SeededRng::new(1)).unwrap();
        let r = verify_single_step(&h, 200, &SeededRng::new(2)).unwrap();
        assert!(r.satisfied, "{r:?}");
    }

    #[test]
    fn gram_concentration_single_sample() {
        let h = sample_input(InputKind::Gaussian, 32, 1, &mut SeededRng::new(1)).unwrap();
        let r = verify_gram_concentration(&h, 200, &SeededRng::new(1)).unwrap();
        assert!(r.squared_deviation.empirical < 1e-24);
        assert!(r.diagonal_ok && r.offdiag_ok);
    }

    #[test]
    fn alpha_from_orthogonal_start() {
        let h = sample_input(InputKind::Orthogonal, 64, 4, &mut SeededRng::new(5)).unwrap();
        let traces = simulate_chain(&ChainConfig::new(64, 4, 1), Some(h)).unwrap();
        assert!((estimate_alpha(&traces).unwrap() - 0.25).abs() < 1e-12);
        assert!(estimate_alpha(&[]).is_err());
    }

    #[test]
    fn stability_requires_ten_steps() {
        let traces = simulate_chain(&ChainConfig::new(16, 2, 5), None).unwrap();
        assert!(no_assumption_stability(&[&traces], 2, 16).is_err());
        let traces = simulate_chain(&ChainConfig::new(16, 2, 30), None).unwrap();
        let r = no_assumption_stability(&[&traces], 2, 16).unwrap();
        assert_eq!(r.prefixes.len(), 29);
    }
}
