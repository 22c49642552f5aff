use orthochain::runners::{run_conjecture_sweep, run_cosine_contrast, run_depth_sweep, run_init_demo, run_width_sweep};
use orthochain::{ExperimentKind, ExperimentSpec, SeedPlan};
use orthochain_core::chain::Activation;

fn spec(kind: ExperimentKind) -> ExperimentSpec {
    ExperimentSpec::defaults(kind)
}

#[test]
fn plateau_shrinks_with_width() {
    let s = ExperimentSpec {
        d: vec![64, 256, 1024],
        depth: 100,
        seeds: SeedPlan::Count(5),
        ..spec(ExperimentKind::DepthSweep)
    };
    let result = run_depth_sweep(&s).unwrap();
    let plateaus: Vec<f64> = result.points.iter().map(|p| p.decay.plateau).collect();
    assert!(plateaus.windows(2).all(|w| w[1] < w[0]), "{plateaus:?}");
    for p in &result.points {
        assert!(p.decay.plateau <= p.plateau_bound);
        assert_eq!(p.theorem1_violations, 0);
    }
    assert_eq!(result.lemmas.violations(), 0);
}

#[test]
fn width_sweep_recovers_inverse_square_root() {
    let s = ExperimentSpec {
        d: vec![32, 64, 128, 256],
        depth: 200,
        seeds: SeedPlan::Count(5),
        ..spec(ExperimentKind::WidthSweep)
    };
    let result = run_width_sweep(&s).unwrap();
    assert!((result.fit.slope + 0.5).abs() < 0.1, "slope {}", result.fit.slope);
    assert!(result.slope_ci.0 <= result.fit.slope && result.fit.slope <= result.slope_ci.1);
}

#[test]
fn cosine_inputs_start_where_configured() {
    let s = ExperimentSpec { depth: 10, seeds: SeedPlan::Count(5), ..spec(ExperimentKind::CosineContrast) };
    let result = run_cosine_contrast(&s).unwrap();
    for seed in &result.bn.per_seed {
        assert!(seed[0] > 0.99, "nearly parallel input has |cos| {}", seed[0]);
    }
    for seed in &result.vanilla.per_seed {
        assert!(seed[0] < 1e-10, "orthogonal input has |cos| {}", seed[0]);
    }
    assert!(result.bn.median[9] < result.bn.median[0]);
}

#[test]
fn odd_activations_track_v() {
    let s = ExperimentSpec {
        d: vec![64, 128],
        depth: 1050,
        seeds: SeedPlan::Count(3),
        activations: vec![Activation::Tanh, Activation::Sin],
        ..spec(ExperimentKind::ConjectureSweep)
    };
    let result = run_conjecture_sweep(&s).unwrap();
    for p in &result.points {
        assert!((p.l_over_v() - 1.0).abs() < 0.1, "{} d={} L/V {}", p.activation, p.d, p.l_over_v());
    }
}

#[test]
fn orthogonal_initializer_lowers_the_gap_every_layer() {
    let result = run_init_demo(&spec(ExperimentKind::InitDemo)).unwrap();
    assert!(!result.runs.is_empty());
    for run in &result.runs {
        assert_eq!(run.missed_decreases, 0, "d={} seed={}", run.d, run.seed);
    }
}
