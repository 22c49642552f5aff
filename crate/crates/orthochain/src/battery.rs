//! Pass/fail battery over every verifier in `orthochain_core::theory`.
//!
//! Failed checks are collected, never raised. Only a simulation error
//! aborts the battery.

use orthochain_core::chain::{batch_norm, sample_input, sample_product, Activation, InputKind, Repr, WeightSampling};
use orthochain_core::metrics::LayerTrace;
use orthochain_core::numerics::{haar_orthogonal, mix_seed, qr, sample_gaussian_matrix, Variance};
use orthochain_core::theory::{
    g_convexity_scan, no_assumption_stability, p_vector_montecarlo, p_vector_quadrature, verify_contraction_center,
    verify_gram_concentration, verify_single_step, MC_SIGMAS, P_VECTOR_TOL,
};
use orthochain_core::{Matrix, SeededRng, SingularSpectrum};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, WithContext};
use crate::record::RunRecord;
use crate::runners::{with_meta, ExperimentOutput, LemmaTally};
use crate::spec::ExperimentSpec;

/// Allowed drift of `||H||_F` from 1 on battery chains.
pub const UNIT_NORM_CHECK_TOL: f64 = 1e-10;
/// Allowed deviation of the quadrature p-vector sum from 1.
pub const P_SUM_TOL: f64 = 1e-6;
/// Allowed deviation from `1/n` on a flat spectrum.
pub const P_EQUAL_TOL: f64 = 1e-8;
/// Smallest second difference accepted by the convexity scan.
pub const CONVEXITY_TOL: f64 = -1e-6;

/// Sample sizes of the individual checks.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryOptions {
    /// Random states per `(n, d)` for the single-step bound.
    pub step_states: usize,
    pub step_replicates: usize,
    /// Random states per `(n, d)` for Gram concentration.
    pub gram_states: usize,
    pub gram_replicates: usize,
    /// Random spectra per `n` for the contraction-center inequality.
    pub center_spectra: usize,
    /// Grid points in `delta` for the convexity scan.
    pub convexity_points: usize,
    /// Random spectra per `n` for quadrature against Monte Carlo.
    pub mc_spectra: usize,
    pub mc_samples: usize,
    /// Negative control: skip the `1/sqrt(d)` rescale after batch norm.
    pub omit_bn_scaling: bool,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        BatteryOptions {
            step_states: 10,
            step_replicates: 500,
            gram_states: 3,
            gram_replicates: 500,
            center_spectra: 100,
            convexity_points: 200,
            mc_spectra: 5,
            mc_samples: 100_000,
            omit_bn_scaling: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub n: usize,
    /// 0 for checks that do not depend on a width.
    pub d: usize,
    pub seed: u64,
    pub passed: bool,
    /// Measured quantity and the bound it was held to.
    pub empirical: f64,
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct BatteryReport {
    pub checks: Vec<CheckOutcome>,
}

impl BatteryReport {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn failed(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn records(&self, spec: &ExperimentSpec) -> Vec<RunRecord> {
        let kind = spec.kind;
        let mut rows: Vec<RunRecord> = self
            .checks
            .iter()
            .map(|c| {
                RunRecord::new(kind, c.n, c.d, 0, c.seed, format!("check:{}", c.name), if c.passed { 1.0 } else { 0.0 })
            })
            .collect();
        rows.push(RunRecord::new(kind, 0, 0, 0, spec.master_seed, "failures", self.failures() as f64));
        rows
    }

    pub fn into_output(self, spec: &ExperimentSpec) -> ExperimentOutput {
        let mut failed: Vec<&str> = self.failed().map(|c| c.name).collect();
        failed.dedup();
        let summary = if failed.is_empty() {
            format!("theory-check: {} checks, 0 failures", self.checks.len())
        } else {
            format!("theory-check: {} checks, {} failures ({})", self.checks.len(), self.failures(), failed.join(", "))
        };
        ExperimentOutput { records: with_meta(spec, self.records(spec)), summary, failures: self.failures() }
    }
}

/// Unit-norm spectrum `sigma_i^2 proportional to exp(s z_i)` with a random spread `s`.
pub fn random_spectrum(n: usize, rng: &mut SeededRng) -> SingularSpectrum {
    let spread = 3.0 * rng.uniform();
    let raw: Vec<f64> = (0..n).map(|_| (spread * rng.standard_normal()).exp()).collect();
    let total: f64 = raw.iter().sum();
    SingularSpectrum::from_squares(&raw.iter().map(|x| x / total).collect::<Vec<_>>())
        .expect("positive finite squares form a valid spectrum")
}

/// Unit-norm `d x n` state. Even indices use the Gaussian chain input,
/// odd ones a Haar-rotated [`random_spectrum`].
pub fn random_state(n: usize, d: usize, index: usize, rng: &mut SeededRng) -> orthochain_core::Result<Repr> {
    if index % 2 == 0 {
        return sample_input(InputKind::Gaussian, d, n, rng);
    }
    let sigma = random_spectrum(n, rng);
    let u = qr(&sample_gaussian_matrix(d, n, Variance::new(1.0)?, rng))?.q;
    let v = haar_orthogonal(n, rng);
    Repr::normalized(u.matmul(&Matrix::from_diag(sigma.values())).matmul(&v.transpose()))
}

/// Two-sided z threshold with the false-alarm rate of a single
/// `MC_SIGMAS` test, spread over `comparisons` tests.
pub fn familywise_z(comparisons: usize) -> f64 {
    let normal = Normal::standard();
    let alpha = 2.0 * (1.0 - normal.cdf(MC_SIGMAS));
    normal.inverse_cdf(1.0 - alpha / (2.0 * comparisons.max(1) as f64))
}

struct ChainCheck {
    traces: Vec<LayerTrace>,
    max_norm_error: f64,
}

/// BN chain from a Gaussian input, measured on unit-norm copies of every layer.
fn battery_chain(
    n: usize,
    d: usize,
    depth: usize,
    act: Activation,
    sampling: WeightSampling,
    seed: u64,
    omit_scaling: bool,
) -> orthochain_core::Result<ChainCheck> {
    let mut rng = SeededRng::new(seed);
    let mut h = sample_input(InputKind::Gaussian, d, n, &mut rng)?.into_matrix();
    let mut traces = vec![LayerTrace::measure(1, &h, None)?];
    let mut max_norm_error = (h.frobenius_norm() - 1.0).abs();
    let scale = if omit_scaling { 1.0 } else { 1.0 / (d as f64).sqrt() };
    for layer in 2..=depth {
        let product = sample_product(&h, &mut rng, act, sampling)?;
        let next = batch_norm(&product)?.scaled(scale);
        max_norm_error = max_norm_error.max((next.frobenius_norm() - 1.0).abs());
        let unit = Repr::normalized(next.clone())?;
        traces.push(LayerTrace::measure(layer, unit.matrix(), Some(&product))?);
        h = next;
    }
    Ok(ChainCheck { traces, max_norm_error })
}

fn distinct_ns(spec: &ExperimentSpec) -> Vec<usize> {
    let mut ns: Vec<usize> = spec.pairs().iter().map(|p| p.0).collect();
    ns.sort_unstable();
    ns.dedup();
    ns
}

/// Runs every check for the `(n, d)` pairs of `spec`.
pub fn run_theory_battery(spec: &ExperimentSpec, opts: &BatteryOptions) -> Result<BatteryReport> {
    spec.validate()?;
    let pairs = spec.pairs();
    let ns = distinct_ns(spec);
    let seed_for =
        |check: u64, n: usize, d: usize, i: usize| mix_seed(spec.stream_seed(check), &[n as u64, d as u64, i as u64]);
    let mut checks = Vec::new();

    // Single-step contraction.
    let jobs: Vec<(usize, usize, usize)> =
        pairs.iter().flat_map(|&(n, d)| (0..opts.step_states).map(move |i| (n, d, i))).collect();
    let found: Vec<CheckOutcome> = jobs
        .par_iter()
        .map(|&(n, d, i)| {
            let seed = seed_for(1, n, d, i);
            let ctx = || format!("single step n={n} d={d} state {i}");
            let mut rng = SeededRng::new(seed);
            let h = random_state(n, d, i, &mut rng).context(ctx)?;
            let r = verify_single_step(&h, opts.step_replicates, &rng.derive(1)).context(ctx)?;
            Ok(CheckOutcome {
                name: "single_step",
                n,
                d,
                seed,
                passed: r.satisfied,
                empirical: r.empirical,
                bound: r.bound,
            })
        })
        .collect::<Result<_>>()?;
    checks.extend(found);

    // Gram concentration.
    let jobs: Vec<(usize, usize, usize)> =
        pairs.iter().flat_map(|&(n, d)| (0..opts.gram_states).map(move |i| (n, d, i))).collect();
    let found: Vec<Vec<CheckOutcome>> = jobs
        .par_iter()
        .map(|&(n, d, i)| {
            let seed = seed_for(2, n, d, i);
            let ctx = || format!("gram concentration n={n} d={d} state {i}");
            let mut rng = SeededRng::new(seed);
            let h = random_state(n, d, i, &mut rng).context(ctx)?;
            let r = verify_gram_concentration(&h, opts.gram_replicates, &rng.derive(1)).context(ctx)?;
            let sq = r.squared_deviation;
            Ok(vec![
                CheckOutcome {
                    name: "gram_squared_deviation",
                    n,
                    d,
                    seed,
                    passed: sq.satisfied,
                    empirical: sq.empirical,
                    bound: sq.bound,
                },
                CheckOutcome {
                    name: "gram_diagonal",
                    n,
                    d,
                    seed,
                    passed: r.diagonal_ok,
                    empirical: r.max_diag_z,
                    bound: orthochain_core::theory::GRAM_Z_LIMIT,
                },
                CheckOutcome {
                    name: "gram_offdiagonal",
                    n,
                    d,
                    seed,
                    passed: r.offdiag_ok,
                    empirical: r.max_offdiag_z,
                    bound: orthochain_core::theory::GRAM_Z_LIMIT,
                },
            ])
        })
        .collect::<Result<_>>()?;
    checks.extend(found.into_iter().flatten());

    // Contraction center and convexity of g.
    for &n in &ns {
        let seed = seed_for(3, n, 0, 0);
        let mut rng = SeededRng::new(seed);
        for i in 0..opts.center_spectra {
            let sigma = random_spectrum(n, &mut rng);
            let r =
                verify_contraction_center(&sigma, n).context(|| format!("contraction center n={n} spectrum {i}"))?;
            checks.push(CheckOutcome {
                name: "contraction_center",
                n,
                d: 0,
                seed,
                passed: r.satisfied(),
                empirical: r.lhs,
                bound: r.stated.bound,
            });
        }
        let points = opts.convexity_points.max(3);
        let deltas: Vec<f64> = (0..points).map(|i| i as f64 / ((points - 1) as f64 * n as f64)).collect();
        let scan = g_convexity_scan(n, &[0.0, 1.0, 10.0, 100.0], &deltas).context(|| format!("convexity n={n}"))?;
        checks.push(CheckOutcome {
            name: "g_convexity",
            n,
            d: 0,
            seed: 0,
            passed: scan.min_second_difference >= CONVEXITY_TOL,
            empirical: scan.min_second_difference,
            bound: CONVEXITY_TOL,
        });
    }

    // Quadrature against Monte Carlo.
    let comparisons: usize = ns.iter().map(|&n| n * opts.mc_spectra).sum();
    let z = familywise_z(comparisons);
    let jobs: Vec<(usize, usize)> = ns.iter().flat_map(|&n| (0..opts.mc_spectra).map(move |i| (n, i))).collect();
    let found: Vec<Vec<CheckOutcome>> = jobs
        .par_iter()
        .map(|&(n, i)| {
            let seed = seed_for(4, n, 0, i);
            let ctx = || format!("p-vector n={n} spectrum {i}");
            let mut rng = SeededRng::new(seed);
            let sigma = random_spectrum(n, &mut rng);
            let q = p_vector_quadrature(&sigma, P_VECTOR_TOL).context(ctx)?;
            let mc = p_vector_montecarlo(&sigma, opts.mc_samples, &mut rng).context(ctx)?;
            let worst_z = q
                .values
                .iter()
                .zip(&mc.values)
                .zip(&mc.std_errors)
                .map(|((a, b), se)| (a - b).abs() / se)
                .fold(0.0, f64::max);
            let sum_err = (q.sum() - 1.0).abs();
            Ok(vec![
                CheckOutcome {
                    name: "p_vector_agreement",
                    n,
                    d: 0,
                    seed,
                    passed: worst_z <= z,
                    empirical: worst_z,
                    bound: z,
                },
                CheckOutcome {
                    name: "p_vector_sum",
                    n,
                    d: 0,
                    seed,
                    passed: sum_err <= P_SUM_TOL,
                    empirical: sum_err,
                    bound: P_SUM_TOL,
                },
            ])
        })
        .collect::<Result<_>>()?;
    checks.extend(found.into_iter().flatten());
    for &n in &ns {
        let flat =
            SingularSpectrum::from_squares(&vec![1.0 / n as f64; n]).context(|| format!("flat spectrum n={n}"))?;
        let p = p_vector_quadrature(&flat, P_VECTOR_TOL).context(|| format!("flat p-vector n={n}"))?;
        let err = p.values.iter().map(|v| (v - 1.0 / n as f64).abs()).fold(0.0, f64::max);
        checks.push(CheckOutcome {
            name: "p_vector_equal",
            n,
            d: 0,
            seed: 0,
            passed: err <= P_EQUAL_TOL,
            empirical: err,
            bound: P_EQUAL_TOL,
        });
    }

    // Chains: unit norm, per-layer lemmas, running-average stability.
    let act = spec.activations[0];
    let reps = spec.replicates();
    let jobs: Vec<(usize, usize, usize)> = pairs.iter().flat_map(|&(n, d)| (0..reps).map(move |r| (n, d, r))).collect();
    let chains: Vec<(u64, ChainCheck)> = jobs
        .par_iter()
        .map(|&(n, d, r)| {
            let seed = spec.run_seed(&[n as u64, d as u64, act as u64], r);
            let c = battery_chain(n, d, spec.depth, act, spec.sampling, seed, opts.omit_bn_scaling)
                .context(|| format!("battery chain n={n} d={d} seed={seed}"))?;
            Ok((seed, c))
        })
        .collect::<Result<_>>()?;
    for (chunk, &(n, d)) in chains.chunks(reps).zip(&pairs) {
        for (seed, c) in chunk {
            let tally = LemmaTally::of(&c.traces, n);
            let seed = *seed;
            checks.push(CheckOutcome {
                name: "unit_norm",
                n,
                d,
                seed,
                passed: c.max_norm_error <= UNIT_NORM_CHECK_TOL,
                empirical: c.max_norm_error,
                bound: UNIT_NORM_CHECK_TOL,
            });
            checks.push(CheckOutcome {
                name: "lemma_gap",
                n,
                d,
                seed,
                passed: tally.gap_violations == 0,
                empirical: tally.gap_violations as f64,
                bound: 0.0,
            });
            checks.push(CheckOutcome {
                name: "lemma_coupling",
                n,
                d,
                seed,
                passed: tally.coupling_violations == 0,
                empirical: tally.coupling_violations as f64,
                bound: 0.0,
            });
        }
        let runs: Vec<&[LayerTrace]> = chunk.iter().map(|(_, c)| c.traces.as_slice()).collect();
        let r = no_assumption_stability(&runs, n, d).context(|| format!("stability n={n} d={d}"))?;
        let last = r.prefixes.last().expect("stability reports at least one prefix");
        checks.push(CheckOutcome {
            name: "stability",
            n,
            d,
            seed: spec.master_seed,
            passed: r.satisfied,
            empirical: last.empirical,
            bound: last.bound,
        });
    }
    Ok(BatteryReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{ExperimentKind, SeedPlan};

    fn quick() -> BatteryOptions {
        BatteryOptions {
            step_states: 2,
            step_replicates: 100,
            gram_states: 1,
            gram_replicates: 200,
            center_spectra: 5,
            convexity_points: 50,
            mc_spectra: 1,
            mc_samples: 20_000,
            omit_bn_scaling: false,
        }
    }

    fn small_spec() -> ExperimentSpec {
        ExperimentSpec {
            n: vec![2, 4],
            d: vec![16, 64],
            depth: 30,
            seeds: SeedPlan::Count(4),
            ..ExperimentSpec::defaults(ExperimentKind::TheoryBattery)
        }
    }

    #[test]
    fn small_battery_passes_and_repeats() {
        let spec = small_spec();
        let a = run_theory_battery(&spec, &quick()).unwrap();
        assert_eq!(a.failures(), 0, "{:?}", a.failed().collect::<Vec<_>>());
        let b = run_theory_battery(&spec, &quick()).unwrap();
        assert_eq!(a.checks, b.checks);
    }

    #[test]
    fn omitting_the_bn_rescale_is_caught() {
        let opts = BatteryOptions { omit_bn_scaling: true, ..quick() };
        let r = run_theory_battery(&small_spec(), &opts).unwrap();
        assert!(r.failed().any(|c| c.name == "unit_norm"));
        assert!(r.failed().all(|c| c.name == "unit_norm"));
    }

    #[test]
    fn familywise_threshold_grows_with_the_family() {
        assert!((familywise_z(1) - MC_SIGMAS).abs() < 1e-9);
        assert!(familywise_z(100) > familywise_z(10));
    }

    #[test]
    fn random_states_have_unit_norm() {
        let mut rng = SeededRng::new(3);
        for i in 0..4 {
            let h = random_state(4, 32, i, &mut rng).unwrap();
            assert!((h.matrix().frobenius_norm() - 1.0).abs() < 1e-12);
        }
    }
}
