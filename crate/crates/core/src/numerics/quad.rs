//! Globally adaptive Gauss–Kronrod (7/15) quadrature for vector-valued
//! integrands on a finite interval.
//!
//! The interval with the largest error estimate is bisected until the summed
//! estimate falls below the absolute tolerance in every component. Nodes are
//! interior, so integrable endpoint singularities are never evaluated.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Default cap on the number of subintervals.
pub const MAX_INTERVALS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub values: Vec<f64>,
    /// Summed per-component error estimate.
    pub errors: Vec<f64>,
    pub intervals: usize,
}

impl Quadrature {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    worst: f64,
}

fn gk15<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    for (k, (&x, &wk)) in XGK.iter().zip(&WGK).enumerate() {
        let offsets: &[f64] = if x == 0.0 { &[0.0] } else { &[-1.0, 1.0] };
        for &sign in offsets {
            f(center + sign * half * x, buf);
            for c in 0..dim {
                kronrod[c] += wk * buf[c];
                if k % 2 == 1 {
                    gauss[c] += WG[k / 2] * buf[c];
                }
            }
        }
    }
    let mut error = vec![0.0; dim];
    let mut worst = 0.0_f64;
    for c in 0..dim {
        kronrod[c] *= half;
        gauss[c] *= half;
        error[c] = (kronrod[c] - gauss[c]).abs();
        worst = worst.max(error[c]);
    }
    Segment { a, b, value: kronrod, error, worst }
}

/// Integrates `f` over `[a, b]`; `f(x, out)` writes `dim` components.
///
/// Fails with [`Error::Quadrature`] when `max_intervals` subdivisions do not
/// bring every component's error estimate below `tol`, or when the integrand
/// produces non-finite values.
pub fn integrate_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    a: f64,
    b: f64,
    dim: usize,
    tol: f64,
    max_intervals: usize,
) -> Result<Quadrature> {
    if !(tol > 0.0) || !a.is_finite() || !b.is_finite() || !(b > a) || dim == 0 {
        return Err(Error::param("quadrature needs a < b, dim >= 1 and tol > 0"));
    }
    let mut buf = vec![0.0; dim];
    let mut segments = vec![gk15(&mut f, a, b, dim, &mut buf)];
    loop {
        let mut values = vec![0.0; dim];
        let mut errors = vec![0.0; dim];
        for s in &segments {
            for c in 0..dim {
                values[c] += s.value[c];
                errors[c] += s.error[c];
            }
        }
        let total = errors.iter().copied().fold(0.0, f64::max);
        if !total.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Quadrature { tol, estimate: f64::INFINITY });
        }
        if total <= tol {
            return Ok(Quadrature { values, errors, intervals: segments.len() });
        }
        if segments.len() >= max_intervals {
            return Err(Error::Quadrature { tol, estimate: total });
        }
        let (idx, _) = segments.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, s)| {
            if s.worst > best.1 {
                (i, s.worst)
            } else {
                best
            }
        });
        let s = segments.swap_remove(idx);
        let mid = 0.5 * (s.a + s.b);
        if !(mid > s.a && mid < s.b) {
            // Interval can no longer be split in floating point.
            return Err(Error::Quadrature { tol, estimate: total });
        }
        segments.push(gk15(&mut f, s.a, mid, dim, &mut buf));
        segments.push(gk15(&mut f, mid, s.b, dim, &mut buf));
    }
}

/// Scalar convenience wrapper over [`integrate_vec`].
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    integrate_vec(|x, out| out[0] = f(x), a, b, 1, tol, MAX_INTERVALS).map(|q| q.values[0])
}
