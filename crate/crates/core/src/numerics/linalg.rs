//! Householder QR and one-sided Jacobi SVD.
//!
//! The SVD of a tall `m x n` matrix first reduces to the `n x n` triangular
//! factor `R`, then orthogonalises the columns of `R` with Jacobi rotations.
//! Every matrix this crate decomposes is tall and thin (`d x n` with small
//! `n`) or is transposed into that form, so the cost is dominated by the QR
//! step and stays `O(m n^2)`.

use alloc::vec;
use alloc::vec::Vec;

use super::math;
use super::{Matrix, SeededRng};
use crate::{Error, Result};

/// Singular values below this fraction of the largest are flagged as
/// numerically zero.
pub const TINY_SINGULAR_RATIO: f64 = 1e-12;

const MAX_SWEEPS: usize = 80;

/// Singular values in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum {
    values: Vec<f64>,
}

impl SingularSpectrum {
    /// Accepts any order; rejects negative or non-finite values.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("spectrum must be non-empty"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param("singular values must be finite and non-negative"));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(SingularSpectrum { values })
    }

    /// Spectrum with the given squared singular values.
    pub fn from_squares(squares: &[f64]) -> Result<Self> {
        if squares.iter().any(|s| *s < 0.0) {
            return Err(Error::param("squared singular values must be non-negative"));
        }
        SingularSpectrum::new(squares.iter().map(|&s| math::sqrt(s)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.values.iter().map(|s| s * s).sum()
    }

    pub fn squares(&self) -> Vec<f64> {
        self.values.iter().map(|s| s * s).collect()
    }

    /// Indices of values below [`TINY_SINGULAR_RATIO`] times the largest.
    pub fn tiny_indices(&self) -> Vec<usize> {
        let cut = TINY_SINGULAR_RATIO * self.max();
        (0..self.values.len()).filter(|&i| self.values[i] < cut || self.values[i] == 0.0).collect()
    }
}

/// Thin SVD `M = left * diag(singulars) * right^T` with `r = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub left: Matrix,
    pub singulars: SingularSpectrum,
    pub right: Matrix,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> Matrix {
        let mut scaled = self.left.clone();
        let s = self.singulars.values();
        for i in 0..scaled.rows() {
            for (x, &sv) in scaled.row_mut(i).iter_mut().zip(s) {
                *x *= sv;
            }
        }
        scaled.matmul(&self.right.transpose())
    }

    /// Number of singular values flagged as numerically zero.
    pub fn tiny_count(&self) -> usize {
        self.singulars.tiny_indices().len()
    }
}

/// Thin QR factors of a tall matrix: `q` is `m x n` with orthonormal columns
/// and `r` is `n x n` upper triangular.
#[derive(Debug, Clone)]
pub struct Qr {
    pub q: Matrix,
    pub r: Matrix,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn columns_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.cols()).map(|j| m.column(j)).collect()
}

struct Householder {
    /// Triangular factor, column-major.
    r_cols: Vec<Vec<f64>>,
    reflectors: Vec<(Vec<f64>, f64)>,
    rows: usize,
}

fn householder(m: &Matrix) -> Result<Householder> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(Error::shape(alloc::format!("QR needs rows >= cols, got {rows}x{cols}")));
    }
    m.check_finite()?;
    let mut a = columns_of(m);
    let mut reflectors = Vec::with_capacity(cols);
    for k in 0..cols {
        let norm = math::norm2(a[k][k..].iter().copied());
        if norm == 0.0 {
            reflectors.push((Vec::new(), 0.0));
            continue;
        }
        let alpha = if a[k][k] >= 0.0 { -norm } else { norm };
        let mut v = a[k][k..].to_vec();
        v[0] -= alpha;
        let vv = dot(&v, &v);
        let beta = if vv > 0.0 { 2.0 / vv } else { 0.0 };
        for col in a.iter_mut().skip(k + 1) {
            let s = beta * dot(&v, &col[k..]);
            for (x, vi) in col[k..].iter_mut().zip(&v) {
                *x -= s * vi;
            }
        }
        a[k][k] = alpha;
        for x in a[k][k + 1..].iter_mut() {
            *x = 0.0;
        }
        reflectors.push((v, beta));
    }
    let r_cols = a.into_iter().map(|mut c| {
        c.truncate(cols);
        c
    });
    Ok(Householder { r_cols: r_cols.collect(), reflectors, rows })
}

impl Householder {
    fn r(&self) -> Matrix {
        let n = self.r_cols.len();
        Matrix::from_fn(n, n, |i, j| if i <= j { self.r_cols[j][i] } else { 0.0 })
    }

    /// Applies `Q` to the columns of `x` (each of length `rows`), in place.
    fn apply_q(&self, cols: &mut [Vec<f64>]) {
        for (k, (v, beta)) in self.reflectors.iter().enumerate().rev() {
            if *beta == 0.0 {
                continue;
            }
            for col in cols.iter_mut() {
                let s = beta * dot(v, &col[k..]);
                for (x, vi) in col[k..].iter_mut().zip(v) {
                    *x -= s * vi;
                }
            }
        }
    }

    fn q(&self) -> Matrix {
        let n = self.r_cols.len();
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut e = vec![0.0; self.rows];
                e[j] = 1.0;
                e
            })
            .collect();
        self.apply_q(&mut cols);
        columns_to_matrix(&cols)
    }
}

fn columns_to_matrix(cols: &[Vec<f64>]) -> Matrix {
    let rows = cols[0].len();
    Matrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Thin Householder QR of a tall matrix.
pub fn qr(m: &Matrix) -> Result<Qr> {
    let h = householder(m)?;
    Ok(Qr { q: h.q(), r: h.r() })
}

/// Only the triangular factor of the thin QR; `R^T R = M^T M`.
pub fn r_factor(m: &Matrix) -> Result<Matrix> {
    Ok(householder(m)?.r())
}

/// One-sided Jacobi: rotates column pairs until all are mutually orthogonal.
fn jacobi_orthogonalize(a: &mut [Vec<f64>], mut v: Option<&mut [Vec<f64>]>) -> Result<()> {
    let n = a.len();
    if n < 2 {
        return Ok(());
    }
    let len = a[0].len();
    let tol = f64::EPSILON * (len.max(4) as f64);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= tol * math::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + math::hypot(1.0, zeta));
                let c = 1.0 / math::hypot(1.0, t);
                let s = c * t;
                rotate(a, p, q, c, s);
                if let Some(v) = v.as_deref_mut() {
                    rotate(v, p, q, c, s);
                }
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::SvdConvergence { sweeps: MAX_SWEEPS })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Descending order, ties broken by original index.
fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    idx
}

fn tall_singular_values(m: &Matrix) -> Result<Vec<f64>> {
    let mut a = householder(m)?.r_cols;
    jacobi_orthogonalize(&mut a, None)?;
    let mut s: Vec<f64> = a.iter().map(|c| math::norm2(c.iter().copied())).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Singular values only, identical to `thin_svd(m).singulars`.
pub fn singular_values(m: &Matrix) -> Result<SingularSpectrum> {
    let values = if m.rows() >= m.cols() { tall_singular_values(m)? } else { tall_singular_values(&m.transpose())? };
    Ok(SingularSpectrum { values })
}

pub fn min_singular_value(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.min())
}

fn tall_svd(m: &Matrix) -> Result<SvdFactors> {
    let n = m.cols();
    let h = householder(m)?;
    let mut a = h.r_cols.clone();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    jacobi_orthogonalize(&mut a, Some(&mut v))?;

    let sigma: Vec<f64> = a.iter().map(|c| math::norm2(c.iter().copied())).collect();
    let order = descending_order(&sigma);
    let smax = sigma[order[0]];

    // Left vectors of R: normalised columns, with numerically-zero ones
    // replaced by a completion of the orthonormal set.
    let mut u_r: Vec<Vec<f64>> = Vec::with_capacity(n);
    for &j in &order {
        let s = sigma[j];
        let mut cand = if s > 0.0 && s >= smax * TINY_SINGULAR_RATIO {
            a[j].iter().map(|x| x / s).collect::<Vec<_>>()
        } else {
            Vec::new()
        };
        if !cand.is_empty() {
            orthogonalize_against(&mut cand, &u_r);
            let norm = math::norm2(cand.iter().copied());
            if norm > 0.5 {
                cand.iter_mut().for_each(|x| *x /= norm);
            } else {
                cand.clear();
            }
        }
        if cand.is_empty() {
            cand = complete_basis(&u_r, n);
        }
        u_r.push(cand);
    }

    let mut u_cols: Vec<Vec<f64>> = u_r
        .into_iter()
        .map(|c| {
            let mut full = vec![0.0; m.rows()];
            full[..n].copy_from_slice(&c);
            full
        })
        .collect();
    h.apply_q(&mut u_cols);

    let v_sorted: Vec<Vec<f64>> = order.iter().map(|&j| v[j].clone()).collect();
    let singulars = SingularSpectrum { values: order.iter().map(|&j| sigma[j]).collect() };
    Ok(SvdFactors { left: columns_to_matrix(&u_cols), singulars, right: columns_to_matrix(&v_sorted) })
}

fn orthogonalize_against(x: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(x, b);
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi -= c * bi;
            }
        }
    }
}

/// A unit vector orthogonal to `basis` (which has fewer than `dim` vectors).
fn complete_basis(basis: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in 0..dim {
        let mut e = vec![0.0; dim];
        e[k] = 1.0;
        orthogonalize_against(&mut e, basis);
        let norm = math::norm2(e.iter().copied());
        if best.as_ref().map_or(true, |(b, _)| norm > *b) {
            best = Some((norm, e));
        }
        if norm > 0.7 {
            break;
        }
    }
    let (norm, mut e) = best.expect("dim >= 1");
    e.iter_mut().for_each(|x| *x /= norm);
    e
}

/// Thin SVD of any finite matrix.
///
/// No sign convention is imposed on the singular vectors.
pub fn thin_svd(m: &Matrix) -> Result<SvdFactors> {
    if m.rows() >= m.cols() {
        tall_svd(m)
    } else {
        let t = tall_svd(&m.transpose())?;
        Ok(SvdFactors { left: t.right, singulars: t.singulars, right: t.left })
    }
}

/// Haar-distributed `k x k` orthogonal matrix (QR of a Gaussian matrix with
/// the signs of `diag(R)` folded into `Q`).
pub fn haar_orthogonal(k: usize, rng: &mut SeededRng) -> Matrix {
    let mut g = Matrix::zeros(k, k);
    for i in 0..k {
        rng.fill_normal(g.row_mut(i), 1.0);
    }
    let Qr { mut q, r } = qr(&g).expect("square Gaussian matrix is finite");
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            for i in 0..k {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{sample_gaussian_matrix, Variance};

    fn orthonormality_error(m: &Matrix) -> f64 {
        m.t_matmul(m).sub(&Matrix::identity(m.cols())).frobenius_norm()
    }

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
        sample_gaussian_matrix(rows, cols, Variance::new(1.0).unwrap(), &mut SeededRng::new(seed))
    }

    #[test]
    fn qr_reconstructs_and_is_orthonormal() {
        let m = gaussian(20, 6, 1);
        let Qr { q, r } = qr(&m).unwrap();
        assert!(orthonormality_error(&q) < 1e-13);
        assert!(q.matmul(&r).sub(&m).frobenius_norm() < 1e-12 * m.frobenius_norm());
        for i in 0..6 {
            for j in 0..i {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
        assert!(qr(&gaussian(3, 5, 2)).is_err());
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let svd = thin_svd(&Matrix::identity(4)).unwrap();
        assert_eq!(svd.singulars.values(), &[1.0; 4]);
    }

    #[test]
    fn rank_one_outer_product() {
        let u = [0.6, 0.8, 0.0];
        let v = [1.0 / 2f64.sqrt(), 0.0, 0.0, -1.0 / 2f64.sqrt()];
        let m = Matrix::from_fn(3, 4, |i, j| u[i] * v[j]);
        let svd = thin_svd(&m).unwrap();
        let s = svd.singulars.values();
        assert!((s[0] - 1.0).abs() < 1e-14);
        assert!(s[1..].iter().all(|x| x.abs() < 1e-14));
        assert_eq!(svd.tiny_count(), 2);
        assert!(orthonormality_error(&svd.left) < 1e-10);
        assert!(orthonormality_error(&svd.right) < 1e-10);
    }

    #[test]
    fn duplicated_column_gives_zero_min_singular_value() {
        let mut m = gaussian(6, 3, 5);
        for i in 0..6 {
            m[(i, 2)] = m[(i, 0)];
        }
        assert!(min_singular_value(&m).unwrap() < 1e-10);
        let svd = thin_svd(&m).unwrap();
        assert!(orthonormality_error(&svd.left) < 1e-10);
        assert!(svd.reconstruct().sub(&m).frobenius_norm() < 1e-10 * m.frobenius_norm());
    }

    #[test]
    fn min_singular_value_of_identity() {
        assert_eq!(min_singular_value(&Matrix::identity(3)).unwrap(), 1.0);
    }

    #[test]
    fn known_spectrum_from_factors() {
        let mut rng = SeededRng::new(9);
        let u = qr(&gaussian(7, 2, 3)).unwrap().q;
        let v = haar_orthogonal(2, &mut rng);
        let h = u.matmul(&Matrix::from_diag(&[0.8, 0.6])).matmul(&v.transpose());
        assert!((min_singular_value(&h).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn wide_matrices_use_transpose() {
        let m = gaussian(5, 12, 8);
        let svd = thin_svd(&m).unwrap();
        assert_eq!(svd.left.shape(), (5, 5));
        assert_eq!(svd.right.shape(), (12, 5));
        assert!(svd.reconstruct().sub(&m).frobenius_norm() < 1e-12 * m.frobenius_norm());
        assert_eq!(singular_values(&m).unwrap(), svd.singulars);
    }

    #[test]
    fn haar_matrix_is_orthogonal() {
        let q = haar_orthogonal(10, &mut SeededRng::new(4));
        assert!(orthonormality_error(&q) < 1e-13);
    }

    #[test]
    fn zero_matrix_decomposes() {
        let svd = thin_svd(&Matrix::zeros(4, 2)).unwrap();
        assert_eq!(svd.singulars.values(), &[0.0, 0.0]);
        assert!(orthonormality_error(&svd.left) < 1e-12);
    }

    #[test]
    fn spectrum_constructor_sorts_and_validates() {
        let s = SingularSpectrum::new(alloc::vec![0.1, 0.9, 0.3]).unwrap();
        assert_eq!(s.values(), &[0.9, 0.3, 0.1]);
        assert!(SingularSpectrum::new(alloc::vec![-0.1]).is_err());
        assert!(SingularSpectrum::new(alloc::vec![]).is_err());
    }
}
