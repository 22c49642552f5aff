//! Least-squares fits and small summary statistics.

use orthochain_core::SeededRng;

use crate::error::{ExperimentError, Result};

/// Ordinary least squares of `ln y` on `ln x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 2 {
        return Err(ExperimentError::TooFewPoints(points.len()));
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(ExperimentError::NonPositive { x, y });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    ols(&xs, &ys)
}

/// Straight-line fit. Errors when every `x` is the same.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(ExperimentError::spec("cannot fit a slope through a single abscissa"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LogLogFit { slope, intercept, r_squared })
}

/// Exponential decay of a per-layer series down to its plateau.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Mean over the final half of the series.
    pub plateau: f64,
    /// Length of the leading run of values above three times the plateau.
    pub segment_len: usize,
    /// Slope of `ln v` per layer over that run, if it has two or more points.
    pub slope: Option<f64>,
}

impl DecayFit {
    /// Per-layer contraction factor `exp(slope)`.
    pub fn rate(&self) -> Option<f64> {
        self.slope.map(f64::exp)
    }
}

pub fn fit_decay(series: &[f64]) -> Result<DecayFit> {
    if series.len() < 2 {
        return Err(ExperimentError::TooFewPoints(series.len()));
    }
    if let Some(&v) = series.iter().find(|v| v.is_nan() || **v <= 0.0) {
        return Err(ExperimentError::NonPositive { x: 0.0, y: v });
    }
    let tail = &series[series.len() / 2..];
    let plateau = tail.iter().sum::<f64>() / tail.len() as f64;
    let segment_len = series.iter().take_while(|&&v| v > 3.0 * plateau).count();
    let slope = if segment_len >= 2 {
        let xs: Vec<f64> = (0..segment_len).map(|i| i as f64).collect();
        let ys: Vec<f64> = series[..segment_len].iter().map(|v| v.ln()).collect();
        Some(ols(&xs, &ys)?.slope)
    } else {
        None
    };
    Ok(DecayFit { plateau, segment_len, slope })
}

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(data: &[f64], q: f64) -> f64 {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub fn mean(data: &[f64]) -> f64 {
    data.iter().sum::<f64>() / data.len() as f64
}

/// Percentile interval of the log-log slope when each point's replicates
/// are resampled with replacement.
///
/// `replicates[i]` holds the per-seed values measured at `xs[i]`.
pub fn bootstrap_slope_ci(
    xs: &[f64],
    replicates: &[Vec<f64>],
    resamples: usize,
    level: f64,
    rng: &mut SeededRng,
) -> Result<(f64, f64)> {
    if resamples == 0 {
        return Err(ExperimentError::spec("bootstrap needs at least one resample"));
    }
    let mut slopes = Vec::with_capacity(resamples);
    let mut points = Vec::with_capacity(xs.len());
    for _ in 0..resamples {
        points.clear();
        for (&x, reps) in xs.iter().zip(replicates) {
            let total: f64 = (0..reps.len()).map(|_| reps[rng.below(reps.len())]).sum();
            points.push((x, total / reps.len() as f64));
        }
        slopes.push(fit_loglog_slope(&points)?.slope);
    }
    slopes.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Ok((quantile_sorted(&slopes, tail), quantile_sorted(&slopes, 1.0 - tail)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> =
            [32.0, 64.0, 128.0, 256.0, 512.0, 1024.0].iter().map(|&d: &f64| (d, 0.7 * d.powf(-0.5))).collect();
        let fit = fit_loglog_slope(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() <= 1e-12);
        assert!((fit.intercept - 0.7f64.ln()).abs() <= 1e-12);
        assert!((fit.r_squared - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn two_points_interpolate() {
        let fit = fit_loglog_slope(&[(2.0, 3.0), (5.0, 1.0)]).unwrap();
        assert!((fit.slope - (1.0f64 / 3.0).ln() / 2.5f64.ln()).abs() <= 1e-14);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn noisy_power_law() {
        let mut rng = SeededRng::new(17);
        let pts: Vec<(f64, f64)> = [32.0, 64.0, 128.0, 256.0, 512.0, 1024.0]
            .iter()
            .map(|&d: &f64| (d, 2.0 * d.powf(-0.46) * (1.0 + 0.01 * rng.standard_normal())))
            .collect();
        assert!((fit_loglog_slope(&pts).unwrap().slope + 0.46).abs() <= 0.05);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(fit_loglog_slope(&[(1.0, 1.0)]), Err(ExperimentError::TooFewPoints(1))));
        assert!(matches!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.0)]), Err(ExperimentError::NonPositive { .. })));
        assert!(fit_loglog_slope(&[(-1.0, 1.0), (2.0, 1.0)]).is_err());
    }

    #[test]
    fn decay_rate_of_exact_geometric_series() {
        let series: Vec<f64> = (0..500).map(|l| 0.9 * 0.8f64.powi(l)).collect();
        let fit = fit_decay(&series).unwrap();
        assert!((fit.rate().unwrap() / 0.8 - 1.0).abs() <= 0.01);
        assert!(fit.segment_len > 100);
    }

    #[test]
    fn flat_series_has_no_segment() {
        let fit = fit_decay(&[0.1; 20]).unwrap();
        assert_eq!((fit.segment_len, fit.slope), (0, None));
        assert!((fit.plateau - 0.1).abs() < 1e-15);
    }

    #[test]
    fn quantiles_interpolate() {
        let data = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&data, 0.0), 1.0);
        assert_eq!(quantile(&data, 1.0), 4.0);
        assert_eq!(quantile(&data, 0.5), 2.5);
    }

    #[test]
    fn bootstrap_interval_shrinks_with_more_replicates() {
        let xs = [32.0, 64.0, 128.0, 256.0];
        let draw = |reps: usize, seed: u64| {
            let mut rng = SeededRng::new(seed);
            let data: Vec<Vec<f64>> = xs
                .iter()
                .map(|&d: &f64| (0..reps).map(|_| d.powf(-0.5) * (1.0 + 0.2 * rng.standard_normal()).abs()).collect())
                .collect();
            let (lo, hi) = bootstrap_slope_ci(&xs, &data, 500, 0.95, &mut SeededRng::new(seed + 1)).unwrap();
            (
                lo,
                hi,
                fit_loglog_slope(&xs.iter().zip(&data).map(|(&x, r)| (x, mean(r))).collect::<Vec<_>>()).unwrap().slope,
            )
        };
        let (lo20, hi20, s20) = draw(20, 3);
        let (lo40, hi40, s40) = draw(40, 3);
        assert!(hi40 - lo40 < hi20 - lo20);
        assert!(lo20 <= s20 && s20 <= hi20);
        assert!(lo40 <= s40 && s40 <= hi40);
    }
}
