//! Sweep runners.
//!
//! Every runner expands its spec into a list of independent jobs, one per
//! sweep point and replicate, runs them on the rayon pool and keeps results
//! in job order. Records are therefore ordered by parameter tuple, then
//! seed, then layer, no matter how the pool schedules the work.

use orthochain_core::chain::{
    run_chain, sample_input, simulate_chain, Activation, ChainConfig, ChainKind, InputKind, Repr,
};
use orthochain_core::init::{propagate_orthogonal_init, rank_floor, InitKind, InitScheme, GAP_EPS};
use orthochain_core::metrics::{conjecture_gap, gram, orthogonality_gap, LayerTrace};
use orthochain_core::numerics::{mix_seed, sample_gaussian_matrix, Variance};
use orthochain_core::theory::{estimate_alpha, theorem1_bound, theorem1_plateau};
use orthochain_core::SeededRng;
use rayon::prelude::*;

use crate::error::{ExperimentError, Result, WithContext};
use crate::fit::{bootstrap_slope_ci, fit_decay, fit_loglog_slope, mean, quantile, DecayFit, LogLogFit};
use crate::record::RunRecord;
use crate::spec::{init_name, ExperimentKind, ExperimentSpec, DEFAULT_EPS};

/// Slack on `V <= 2 n V_hat`.
pub const LEMMA_A_TOL: f64 = 1e-8;
/// Slack on `coupling_cost <= n V^2 <= 2 n V`.
pub const COUPLING_TOL: f64 = 1e-10;
pub const BOOTSTRAP_RESAMPLES: usize = 500;
/// Deepest layer at which the depth sweep compares against the finite-depth bound.
pub const THEOREM1_CHECK_DEPTH: usize = 100;

const INPUT_STREAM: u64 = 0x1a9u64;
const BOOTSTRAP_STREAM: u64 = 1;

/// Result of any runner in the form the CLI needs.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub summary: String,
    /// Failed checks. Only the theory battery reports any.
    pub failures: usize,
}

/// Per-layer inequalities that hold for every unit-norm state, counted over
/// all layers a runner simulated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LemmaTally {
    pub layers: usize,
    /// Layers with `V > 2 n V_hat`.
    pub gap_violations: usize,
    /// Layers with `coupling_cost > n V^2` or `> 2 n V`.
    pub coupling_violations: usize,
}

impl LemmaTally {
    pub fn observe(&mut self, t: &LayerTrace, n: usize) {
        let nf = n as f64;
        self.layers += 1;
        if t.v_gap > 2.0 * nf * t.lyap_gap + LEMMA_A_TOL {
            self.gap_violations += 1;
        }
        let squared = nf * t.v_gap * t.v_gap;
        if t.coupling_cost > squared + COUPLING_TOL || t.coupling_cost > 2.0 * nf * t.v_gap + COUPLING_TOL {
            self.coupling_violations += 1;
        }
    }

    pub fn of(traces: &[LayerTrace], n: usize) -> Self {
        let mut tally = LemmaTally::default();
        traces.iter().for_each(|t| tally.observe(t, n));
        tally
    }

    pub fn merge(self, other: LemmaTally) -> Self {
        LemmaTally {
            layers: self.layers + other.layers,
            gap_violations: self.gap_violations + other.gap_violations,
            coupling_violations: self.coupling_violations + other.coupling_violations,
        }
    }

    pub fn violations(&self) -> usize {
        self.gap_violations + self.coupling_violations
    }

    fn records(&self, kind: ExperimentKind, n: usize, seed: u64) -> Vec<RunRecord> {
        vec![
            RunRecord::new(kind, n, 0, 0, seed, "lemma_layers_checked", self.layers as f64),
            RunRecord::new(kind, n, 0, 0, seed, "lemma_gap_violations", self.gap_violations as f64),
            RunRecord::new(kind, n, 0, 0, seed, "lemma_coupling_violations", self.coupling_violations as f64),
        ]
    }
}

/// Input state for a run. The Gaussian input comes from the chain's own
/// stream, the others from a stream derived from the run seed.
pub fn chain_input(kind: InputKind, d: usize, n: usize, seed: u64) -> orthochain_core::Result<Option<Repr>> {
    match kind {
        InputKind::Gaussian => Ok(None),
        other => sample_input(other, d, n, &mut SeededRng::new(mix_seed(seed, &[INPUT_STREAM]))).map(Some),
    }
}

fn trace_run(config: &ChainConfig, input: InputKind) -> Result<Vec<LayerTrace>> {
    let ctx = || format!("n={} d={} activation={} seed={}", config.n, config.d, config.activation, config.seed);
    let h0 = chain_input(input, config.d, config.n, config.seed).context(ctx)?;
    simulate_chain(config, h0).context(ctx)
}

fn par_jobs<J, T, F>(jobs: &[J], f: F) -> Result<Vec<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync + Send,
{
    jobs.par_iter().map(f).collect()
}

/// Rows recording the settings a CSV was produced with.
pub fn meta_records(spec: &ExperimentSpec) -> Vec<RunRecord> {
    let kind = spec.kind;
    let n = spec.n.first().copied().unwrap_or(0);
    let seed = spec.master_seed;
    let row = |metric: String, value: f64| RunRecord::new(kind, n, 0, 0, seed, metric, value);
    let mut rows = vec![
        row("meta:depth".into(), spec.depth as f64),
        row("meta:replicates".into(), spec.replicates() as f64),
        row("meta:burn_in".into(), spec.burn_in as f64),
        row(format!("meta:chain={}", spec.chain_kind.name()), 1.0),
        row(format!("meta:sampling={}", spec.sampling.name()), 1.0),
        row(format!("meta:input={}", spec.input.name()), 1.0),
        row(format!("meta:init={}", init_name(spec.init)), 1.0),
    ];
    if let InputKind::Correlated { eps } = spec.input {
        rows.push(row("meta:eps".into(), eps));
    }
    rows.extend(spec.activations.iter().map(|a| row(format!("meta:activation={a}"), 1.0)));
    rows
}

/// Runs any experiment kind.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let output = match spec.kind {
        ExperimentKind::Chain => run_chain_experiment(spec)?.into_output(spec),
        ExperimentKind::WidthSweep => run_width_sweep(spec)?.into_output(spec),
        ExperimentKind::DepthSweep => run_depth_sweep(spec)?.into_output(spec),
        ExperimentKind::CosineContrast => run_cosine_contrast(spec)?.into_output(spec),
        ExperimentKind::ConjectureSweep => run_conjecture_sweep(spec)?.into_output(spec),
        ExperimentKind::TheoryBattery => {
            crate::battery::run_theory_battery(spec, &crate::battery::BatteryOptions::default())?.into_output(spec)
        }
        ExperimentKind::InitDemo => run_init_demo(spec)?.into_output(spec),
    };
    Ok(output)
}

pub(crate) fn with_meta(spec: &ExperimentSpec, records: Vec<RunRecord>) -> Vec<RunRecord> {
    let mut all = meta_records(spec);
    all.extend(records);
    all
}

// ---------------------------------------------------------------- chain

#[derive(Debug, Clone)]
pub struct ChainRun {
    pub seed: u64,
    pub traces: Vec<LayerTrace>,
}

#[derive(Debug, Clone)]
pub struct ChainResult {
    pub records: Vec<RunRecord>,
    pub runs: Vec<ChainRun>,
    pub alpha_hat: f64,
    pub lemmas: LemmaTally,
}

/// Replicates of one chain with every per-layer diagnostic recorded.
pub fn run_chain_experiment(spec: &ExperimentSpec) -> Result<ChainResult> {
    spec.validate()?;
    let (n, d, act) = (spec.batch(), spec.d[0], spec.activations[0]);
    let params = [n as u64, d as u64, act as u64, spec.chain_kind as u64];
    let reps: Vec<usize> = (0..spec.replicates()).collect();
    let runs = par_jobs(&reps, |&r| {
        let seed = spec.run_seed(&params, r);
        let traces = trace_run(&spec.chain_config(n, d, act, seed), spec.input)?;
        Ok(ChainRun { seed, traces })
    })?;
    let kind = spec.kind;
    let mut records = Vec::new();
    let mut lemmas = LemmaTally::default();
    for run in &runs {
        lemmas = lemmas.merge(LemmaTally::of(&run.traces, n));
        for t in &run.traces {
            let row = |metric: String, value: f64| RunRecord::new(kind, n, d, t.layer, run.seed, metric, value);
            records.push(row("v_gap".into(), t.v_gap));
            records.push(row("lyap_gap".into(), t.lyap_gap));
            records.push(row("sigma_min".into(), t.sigma_min));
            records.push(row("frob_norm".into(), t.frob_norm));
            records.push(row("coupling_cost".into(), t.coupling_cost));
            let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
            for ((i, j), c) in pairs.zip(&t.cosines) {
                records.push(row(format!("cos:{i}:{j}"), *c));
            }
            if let (Some(m), Some(v)) = (t.entry_mean, t.entry_var) {
                records.push(row("entry_mean".into(), m));
                records.push(row("entry_var".into(), v));
            }
        }
    }
    let alpha_hat = estimate_alpha(runs.iter().flat_map(|r| &r.traces)).context(|| "alpha".into())?;
    records.push(RunRecord::new(kind, n, d, 0, spec.master_seed, "alpha_hat", alpha_hat));
    records.extend(lemmas.records(kind, n, spec.master_seed));
    Ok(ChainResult { records, runs, alpha_hat, lemmas })
}

impl ChainResult {
    pub fn final_mean_v(&self) -> f64 {
        mean(&self.runs.iter().map(|r| r.traces.last().unwrap().v_gap).collect::<Vec<_>>())
    }

    fn into_output(self, spec: &ExperimentSpec) -> ExperimentOutput {
        let summary = format!(
            "chain n={} d={} depth={}: mean V at final layer {:.4e}, alpha_hat {:.4e}, lemma violations {}",
            spec.batch(),
            spec.d[0],
            spec.depth,
            self.final_mean_v(),
            self.alpha_hat,
            self.lemmas.violations()
        );
        ExperimentOutput { records: with_meta(spec, self.records), summary, failures: 0 }
    }
}

// ---------------------------------------------------------------- width sweep

#[derive(Debug, Clone, PartialEq)]
pub struct WidthPoint {
    pub d: usize,
    pub seeds: Vec<u64>,
    /// Mean of V over all layers, one entry per replicate.
    pub mean_v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct WidthSweepResult {
    pub records: Vec<RunRecord>,
    pub points: Vec<WidthPoint>,
    pub fit: LogLogFit,
    /// 95% bootstrap interval of the slope over replicates.
    pub slope_ci: (f64, f64),
    pub lemmas: LemmaTally,
}

/// Layer-averaged gap against width, with a log-log fit across widths.
pub fn run_width_sweep(spec: &ExperimentSpec) -> Result<WidthSweepResult> {
    spec.validate()?;
    if spec.d.len() < 2 {
        return Err(ExperimentError::TooFewPoints(spec.d.len()));
    }
    let (n, act) = (spec.batch(), spec.activations[0]);
    let reps = spec.replicates();
    let jobs: Vec<(usize, usize)> = spec.d.iter().flat_map(|&d| (0..reps).map(move |r| (d, r))).collect();
    let runs = par_jobs(&jobs, |&(d, r)| {
        let seed = spec.run_seed(&[n as u64, d as u64, act as u64, spec.chain_kind as u64], r);
        let traces = trace_run(&spec.chain_config(n, d, act, seed), spec.input)?;
        let v: Vec<f64> = traces.iter().map(|t| t.v_gap).collect();
        Ok((seed, mean(&v), LemmaTally::of(&traces, n)))
    })?;

    let kind = spec.kind;
    let mut records = Vec::new();
    let mut points = Vec::new();
    let mut lemmas = LemmaTally::default();
    for (chunk, &d) in runs.chunks(reps).zip(&spec.d) {
        let mut point = WidthPoint { d, seeds: Vec::new(), mean_v: Vec::new() };
        for &(seed, mv, tally) in chunk {
            records.push(RunRecord::new(kind, n, d, 0, seed, "mean_v", mv));
            point.seeds.push(seed);
            point.mean_v.push(mv);
            lemmas = lemmas.merge(tally);
        }
        records.push(RunRecord::new(kind, n, d, 0, spec.master_seed, "mean_v_over_seeds", mean(&point.mean_v)));
        points.push(point);
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.d as f64, mean(&p.mean_v))).collect();
    let fit = fit_loglog_slope(&xy)?;
    let xs: Vec<f64> = xy.iter().map(|p| p.0).collect();
    let per_seed: Vec<Vec<f64>> = points.iter().map(|p| p.mean_v.clone()).collect();
    let mut boot_rng = SeededRng::new(spec.stream_seed(BOOTSTRAP_STREAM));
    let slope_ci = bootstrap_slope_ci(&xs, &per_seed, BOOTSTRAP_RESAMPLES, 0.95, &mut boot_rng)?;

    let summary_row = |metric: &str, value: f64| RunRecord::new(kind, n, 0, 0, spec.master_seed, metric, value);
    records.push(summary_row("slope", fit.slope));
    records.push(summary_row("intercept", fit.intercept));
    records.push(summary_row("r2", fit.r_squared));
    records.push(summary_row("slope_ci_low", slope_ci.0));
    records.push(summary_row("slope_ci_high", slope_ci.1));
    records.extend(lemmas.records(kind, n, spec.master_seed));
    Ok(WidthSweepResult { records, points, fit, slope_ci, lemmas })
}

impl WidthSweepResult {
    fn into_output(self, spec: &ExperimentSpec) -> ExperimentOutput {
        let summary = format!(
            "width-sweep n={} d={:?}: slope {:.4} (95% CI [{:.4}, {:.4}]), intercept {:.4}, r2 {:.4}, lemma violations {}",
            spec.batch(),
            spec.d,
            self.fit.slope,
            self.slope_ci.0,
            self.slope_ci.1,
            self.fit.intercept,
            self.fit.r_squared,
            self.lemmas.violations()
        );
        ExperimentOutput { records: with_meta(spec, self.records), summary, failures: 0 }
    }
}

// ---------------------------------------------------------------- depth sweep

#[derive(Debug, Clone, PartialEq)]
pub struct DepthPoint {
    pub d: usize,
    /// Mean V across replicates, index 0 is the input layer.
    pub mean_v: Vec<f64>,
    /// Mean of `ln V` across replicates.
    pub mean_log_v: Vec<f64>,
    pub decay: DecayFit,
    /// Smallest squared minimum singular value over every layer and replicate.
    pub alpha_hat: f64,
    /// `3 n / (alpha_hat sqrt d)`.
    pub plateau_bound: f64,
    /// Layers up to [`THEOREM1_CHECK_DEPTH`] where mean V exceeds the finite-depth bound.
    pub theorem1_violations: usize,
}

impl DepthPoint {
    /// Mean V at 1-based layer `layer` over mean V at the input.
    pub fn ratio_to_input(&self, layer: usize) -> Option<f64> {
        self.mean_v.get(layer - 1).map(|v| v / self.mean_v[0])
    }
}

#[derive(Debug, Clone)]
pub struct DepthSweepResult {
    pub records: Vec<RunRecord>,
    pub points: Vec<DepthPoint>,
    pub lemmas: LemmaTally,
}

/// Per-layer gap profiles, their decay rate and plateau at every width.
pub fn run_depth_sweep(spec: &ExperimentSpec) -> Result<DepthSweepResult> {
    spec.validate()?;
    let (n, act) = (spec.batch(), spec.activations[0]);
    let reps = spec.replicates();
    let jobs: Vec<(usize, usize)> = spec.d.iter().flat_map(|&d| (0..reps).map(move |r| (d, r))).collect();
    let runs = par_jobs(&jobs, |&(d, r)| {
        let seed = spec.run_seed(&[n as u64, d as u64, act as u64, spec.chain_kind as u64], r);
        Ok((seed, trace_run(&spec.chain_config(n, d, act, seed), spec.input)?))
    })?;

    let kind = spec.kind;
    let mut records = Vec::new();
    let mut points = Vec::new();
    let mut lemmas = LemmaTally::default();
    for (chunk, &d) in runs.chunks(reps).zip(&spec.d) {
        for (seed, traces) in chunk {
            lemmas = lemmas.merge(LemmaTally::of(traces, n));
            for t in traces {
                records.push(RunRecord::new(kind, n, d, t.layer, *seed, "v_gap", t.v_gap));
                records.push(RunRecord::new(kind, n, d, t.layer, *seed, "lyap_gap", t.lyap_gap));
            }
        }
        let depth = spec.depth;
        let mean_v: Vec<f64> =
            (0..depth).map(|l| mean(&chunk.iter().map(|(_, t)| t[l].v_gap).collect::<Vec<_>>())).collect();
        let mean_log_v: Vec<f64> =
            (0..depth).map(|l| mean(&chunk.iter().map(|(_, t)| t[l].v_gap.ln()).collect::<Vec<_>>())).collect();
        for l in 0..depth {
            records.push(RunRecord::new(kind, n, d, l + 1, spec.master_seed, "mean_v", mean_v[l]));
            records.push(RunRecord::new(kind, n, d, l + 1, spec.master_seed, "mean_log_v", mean_log_v[l]));
        }
        let decay = fit_decay(&mean_v)?;
        let alpha_hat = estimate_alpha(chunk.iter().flat_map(|(_, t)| t)).context(|| format!("d={d}"))?;
        let plateau_bound = theorem1_plateau(alpha_hat, n, d);
        let theorem1_violations = (1..=depth.min(THEOREM1_CHECK_DEPTH))
            .filter(|&l| mean_v[l - 1] > theorem1_bound(alpha_hat, l - 1, n, d))
            .count();
        let row = |metric: &str, value: f64| RunRecord::new(kind, n, d, 0, spec.master_seed, metric, value);
        records.push(row("plateau", decay.plateau));
        records.push(row("pre_plateau_layers", decay.segment_len as f64));
        records.push(row("decay_slope", decay.slope.unwrap_or(f64::NAN)));
        records.push(row("alpha_hat", alpha_hat));
        records.push(row("plateau_bound", plateau_bound));
        records.push(row("theorem1_violations", theorem1_violations as f64));
        points.push(DepthPoint { d, mean_v, mean_log_v, decay, alpha_hat, plateau_bound, theorem1_violations });
    }
    records.extend(lemmas.records(kind, n, spec.master_seed));
    Ok(DepthSweepResult { records, points, lemmas })
}

impl DepthSweepResult {
    fn into_output(self, spec: &ExperimentSpec) -> ExperimentOutput {
        let parts: Vec<String> = self
            .points
            .iter()
            .map(|p| {
                format!(
                    "d={} plateau {:.4e} (bound {:.4e}) decay rate {} theorem1 violations {}",
                    p.d,
                    p.decay.plateau,
                    p.plateau_bound,
                    p.decay.rate().map_or("n/a".into(), |r| format!("{r:.4}")),
                    p.theorem1_violations
                )
            })
            .collect();
        let summary = format!("depth-sweep n={}: {}", spec.batch(), parts.join("; "));
        ExperimentOutput { records: with_meta(spec, self.records), summary, failures: 0 }
    }
}

// ---------------------------------------------------------------- cosine contrast

#[derive(Debug, Clone, PartialEq)]
pub struct CosineSeries {
    pub chain: ChainKind,
    /// `|cos|` per replicate per layer.
    pub per_seed: Vec<Vec<f64>>,
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CosineContrastResult {
    pub records: Vec<RunRecord>,
    pub bn: CosineSeries,
    pub vanilla: CosineSeries,
    pub lemmas: LemmaTally,
}

/// `|cos|` between two samples through a BN chain fed nearly parallel
/// inputs and a vanilla chain fed orthogonal ones.
pub fn run_cosine_contrast(spec: &ExperimentSpec) -> Result<CosineContrastResult> {
    spec.validate()?;
    let (n, d, act) = (2, spec.d[0], spec.activations[0]);
    let eps = match spec.input {
        InputKind::Correlated { eps } => eps,
        _ => DEFAULT_EPS,
    };
    let arms = [(ChainKind::Bn, InputKind::Correlated { eps }), (ChainKind::Vanilla, InputKind::Orthogonal)];
    let reps = spec.replicates();
    let jobs: Vec<(ChainKind, InputKind, usize)> =
        arms.iter().flat_map(|&(c, i)| (0..reps).map(move |r| (c, i, r))).collect();
    let runs = par_jobs(&jobs, |&(chain, input, r)| {
        let seed = spec.run_seed(&[n as u64, d as u64, act as u64, chain as u64], r);
        let config = spec.chain_config(n, d, act, seed).with_kind(chain);
        Ok((seed, trace_run(&config, input)?))
    })?;

    let kind = spec.kind;
    let mut records = Vec::new();
    let mut lemmas = LemmaTally::default();
    let mut series = Vec::new();
    for (chunk, &(chain, _)) in runs.chunks(reps).zip(&arms) {
        let name = chain.name();
        let mut per_seed = Vec::new();
        for (seed, traces) in chunk {
            lemmas = lemmas.merge(LemmaTally::of(traces, n));
            let abs: Vec<f64> = traces.iter().map(|t| t.cosines[0].abs()).collect();
            for (l, c) in abs.iter().enumerate() {
                records.push(RunRecord::new(kind, n, d, l + 1, *seed, format!("abs_cos:{name}"), *c));
            }
            per_seed.push(abs);
        }
        let column = |l: usize| per_seed.iter().map(|s| s[l]).collect::<Vec<_>>();
        let median: Vec<f64> = (0..spec.depth).map(|l| quantile(&column(l), 0.5)).collect();
        let lower: Vec<f64> = (0..spec.depth).map(|l| quantile(&column(l), 0.025)).collect();
        let upper: Vec<f64> = (0..spec.depth).map(|l| quantile(&column(l), 0.975)).collect();
        for l in 0..spec.depth {
            let row = |metric: String, value: f64| RunRecord::new(kind, n, d, l + 1, spec.master_seed, metric, value);
            records.push(row(format!("median_abs_cos:{name}"), median[l]));
            records.push(row(format!("q025_abs_cos:{name}"), lower[l]));
            records.push(row(format!("q975_abs_cos:{name}"), upper[l]));
        }
        series.push(CosineSeries { chain, per_seed, median, lower, upper });
    }
    records.extend(lemmas.records(kind, n, spec.master_seed));
    let vanilla = series.pop().unwrap();
    let bn = series.pop().unwrap();
    Ok(CosineContrastResult { records, bn, vanilla, lemmas })
}

impl CosineContrastResult {
    fn into_output(self, spec: &ExperimentSpec) -> ExperimentOutput {
        let summary = format!(
            "cosine d={} depth={}: median |cos| at final layer bn {:.4} vanilla {:.4}",
            spec.d[0],
            spec.depth,
            self.bn.median.last().unwrap(),
            self.vanilla.median.last().unwrap()
        );
        ExperimentOutput { records: with_meta(spec, self.records), summary, failures: 0 }
    }
}

// ---------------------------------------------------------------- conjecture sweep

#[derive(Debug, Clone, PartialEq)]
pub struct ConjecturePoint {
    pub activation: Activation,
    pub d: usize,
    /// Window mean of L, one per replicate.
    pub mean_l: Vec<f64>,
    /// Window mean of V, one per replicate.
    pub mean_v: Vec<f64>,
}

impl ConjecturePoint {
    /// Seed-averaged L over seed-averaged V.
    pub fn l_over_v(&self) -> f64 {
        mean(&self.mean_l) / mean(&self.mean_v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationFit {
    pub activation: Activation,
    pub fit: LogLogFit,
}

#[derive(Debug, Clone)]
pub struct ConjectureSweepResult {
    pub records: Vec<RunRecord>,
    pub points: Vec<ConjecturePoint>,
    pub fits: Vec<ActivationFit>,
    /// Largest minus smallest fitted slope across activations.
    pub slope_spread: f64,
    pub lemmas: LemmaTally,
}

/// Stationary fluctuation of the Gram matrix against width, per activation.
pub fn run_conjecture_sweep(spec: &ExperimentSpec) -> Result<ConjectureSweepResult> {
    spec.validate()?;
    let n = spec.batch();
    let reps = spec.replicates();
    let jobs: Vec<(Activation, usize, usize)> = spec
        .activations
        .iter()
        .flat_map(|&a| spec.d.iter().flat_map(move |&d| (0..reps).map(move |r| (a, d, r))))
        .collect();
    let runs = par_jobs(&jobs, |&(act, d, r)| {
        let seed = spec.run_seed(&[n as u64, d as u64, act as u64, spec.chain_kind as u64], r);
        let config = spec.chain_config(n, d, act, seed);
        let ctx = || format!("activation={act} n={n} d={d} seed={seed}");
        let mut grams = Vec::with_capacity(spec.depth);
        let mut v = Vec::with_capacity(spec.depth);
        let mut tally = LemmaTally::default();
        let h0 = chain_input(spec.input, d, n, seed).context(ctx)?;
        run_chain(&config, h0, |layer, h, product| {
            let t = LayerTrace::measure(layer, h.matrix(), product)?;
            tally.observe(&t, n);
            v.push(t.v_gap);
            grams.push(gram(h.matrix()));
            Ok(())
        })
        .context(ctx)?;
        let l = conjecture_gap(&grams, spec.burn_in).context(ctx)?;
        Ok((seed, mean(&l), mean(&v[spec.burn_in..]), tally))
    })?;

    let kind = spec.kind;
    let mut records = Vec::new();
    let mut points = Vec::new();
    let mut lemmas = LemmaTally::default();
    for (chunk, (act, d)) in
        runs.chunks(reps).zip(spec.activations.iter().flat_map(|&a| spec.d.iter().map(move |&d| (a, d))))
    {
        let mut point = ConjecturePoint { activation: act, d, mean_l: Vec::new(), mean_v: Vec::new() };
        for &(seed, ml, mv, tally) in chunk {
            records.push(RunRecord::new(kind, n, d, 0, seed, format!("mean_l:{act}"), ml));
            records.push(RunRecord::new(kind, n, d, 0, seed, format!("mean_v:{act}"), mv));
            point.mean_l.push(ml);
            point.mean_v.push(mv);
            lemmas = lemmas.merge(tally);
        }
        let row = |metric: String, value: f64| RunRecord::new(kind, n, d, 0, spec.master_seed, metric, value);
        records.push(row(format!("mean_l_over_seeds:{act}"), mean(&point.mean_l)));
        records.push(row(format!("mean_v_over_seeds:{act}"), mean(&point.mean_v)));
        records.push(row(format!("l_over_v:{act}"), point.l_over_v()));
        points.push(point);
    }
    let mut fits = Vec::new();
    for &act in &spec.activations {
        let xy: Vec<(f64, f64)> =
            points.iter().filter(|p| p.activation == act).map(|p| (p.d as f64, mean(&p.mean_l))).collect();
        let fit = fit_loglog_slope(&xy)?;
        let row = |metric: String, value: f64| RunRecord::new(kind, n, 0, 0, spec.master_seed, metric, value);
        records.push(row(format!("slope_l:{act}"), fit.slope));
        records.push(row(format!("intercept_l:{act}"), fit.intercept));
        records.push(row(format!("r2_l:{act}"), fit.r_squared));
        fits.push(ActivationFit { activation: act, fit });
    }
    let slopes: Vec<f64> = fits.iter().map(|f| f.fit.slope).collect();
    let slope_spread =
        slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - slopes.iter().cloned().fold(f64::INFINITY, f64::min);
    records.push(RunRecord::new(kind, n, 0, 0, spec.master_seed, "slope_spread", slope_spread));
    records.extend(lemmas.records(kind, n, spec.master_seed));
    Ok(ConjectureSweepResult { records, points, fits, slope_spread, lemmas })
}

impl ConjectureSweepResult {
    pub fn slope(&self, activation: Activation) -> Option<f64> {
        self.fits.iter().find(|f| f.activation == activation).map(|f| f.fit.slope)
    }

    fn into_output(self, spec: &ExperimentSpec) -> ExperimentOutput {
        let slopes: Vec<String> = self.fits.iter().map(|f| format!("{} {:.4}", f.activation, f.fit.slope)).collect();
        let summary = format!(
            "conjecture n={} d={:?}: slopes {}; spread {:.4}",
            spec.batch(),
            spec.d,
            slopes.join(", "),
            self.slope_spread
        );
        ExperimentOutput { records: with_meta(spec, self.records), summary, failures: 0 }
    }
}

// ---------------------------------------------------------------- init demo

#[derive(Debug, Clone, PartialEq)]
pub struct InitRun {
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    /// Gap of the input followed by the gap after every layer.
    pub gaps: Vec<f64>,
    /// Layers where the gap failed to drop although it sat above the rank floor.
    pub missed_decreases: usize,
}

#[derive(Debug, Clone)]
pub struct InitDemoResult {
    pub records: Vec<RunRecord>,
    pub runs: Vec<InitRun>,
    pub init: InitKind,
}

/// Pushes a Gaussian batch through `depth` linear layers built by the chosen
/// initializer, without normalization, and tracks the gap.
pub fn run_init_demo(spec: &ExperimentSpec) -> Result<InitDemoResult> {
    spec.validate()?;
    let reps = spec.replicates();
    let jobs: Vec<(usize, usize, usize)> = spec
        .d
        .iter()
        .map(|&d| (d, spec.n.first().copied().unwrap_or(2 * d)))
        .flat_map(|(d, n)| (0..reps).map(move |r| (d, n, r)))
        .collect();
    let scheme = InitScheme::new(spec.init);
    let runs = par_jobs(&jobs, |&(d, n, r)| {
        let seed = spec.run_seed(&[n as u64, d as u64, spec.init as u64], r);
        let ctx = || format!("init={} n={n} d={d} seed={seed}", init_name(spec.init));
        let mut rng = SeededRng::new(seed);
        let h0 = sample_gaussian_matrix(d, n, Variance::new(1.0 / d as f64).context(ctx)?, &mut rng);
        let layers = spec.depth;
        let gaps = match spec.init {
            InitKind::IterativeOrthogonal => propagate_orthogonal_init(&h0, layers, &scheme, &mut rng).context(ctx)?,
            _ => {
                let mut gaps = vec![orthogonality_gap(&h0).context(ctx)?];
                let mut h = h0;
                for _ in 0..layers {
                    let w = scheme.sample_baseline(d, d, &mut rng).context(ctx)?;
                    h = w.matmul(&h);
                    h.scale_in_place(1.0 / h.frobenius_norm());
                    gaps.push(orthogonality_gap(&h).context(ctx)?);
                }
                gaps
            }
        };
        let floor = rank_floor(n, d.min(n));
        let missed_decreases = gaps.windows(2).filter(|w| w[0] - floor > GAP_EPS && w[1] >= w[0]).count();
        Ok(InitRun { d, n, seed, gaps, missed_decreases })
    })?;
    let kind = spec.kind;
    let name = init_name(spec.init);
    let mut records = Vec::new();
    for run in &runs {
        for (l, g) in run.gaps.iter().enumerate() {
            records.push(RunRecord::new(kind, run.n, run.d, l + 1, run.seed, format!("v_gap:{name}"), *g));
        }
        records.push(RunRecord::new(
            kind,
            run.n,
            run.d,
            0,
            run.seed,
            "rank_floor",
            rank_floor(run.n, run.d.min(run.n)),
        ));
        records.push(RunRecord::new(kind, run.n, run.d, 0, run.seed, "missed_decreases", run.missed_decreases as f64));
    }
    Ok(InitDemoResult { records, runs, init: spec.init })
}

impl InitDemoResult {
    fn into_output(self, spec: &ExperimentSpec) -> ExperimentOutput {
        let first = mean(&self.runs.iter().map(|r| r.gaps[0]).collect::<Vec<_>>());
        let last = mean(&self.runs.iter().map(|r| *r.gaps.last().unwrap()).collect::<Vec<_>>());
        let missed: usize = self.runs.iter().map(|r| r.missed_decreases).sum();
        let summary = format!(
            "init-demo init={} d={:?} layers={}: mean V {:.4e} -> {:.4e}, missed decreases {}",
            init_name(self.init),
            spec.d,
            spec.depth,
            first,
            last,
            missed
        );
        ExperimentOutput { records: with_meta(spec, self.records), summary, failures: 0 }
    }
}
