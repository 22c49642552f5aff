//! Statistical checks with fixed seeds. Thresholds are a few standard errors
//! wide, so each test is a single deterministic draw from a well-separated
//! distribution.

use orthochain_core::chain::{
    sample_input, sample_product, simulate_chain, Activation, ChainConfig, ChainKind, InputKind, WeightSampling,
};
use orthochain_core::metrics::{gaussianity_diagnostics, LayerTrace};
use orthochain_core::theory::{
    estimate_alpha, g_convexity_scan, no_assumption_stability, p_vector_montecarlo, p_vector_quadrature,
    verify_contraction_center, verify_gram_concentration, verify_single_step,
};
use orthochain_core::{SeededRng, SingularSpectrum};

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 0 {
        0.5 * (xs[m - 1] + xs[m])
    } else {
        xs[m]
    }
}

fn runs(config: &ChainConfig, seeds: u64) -> Vec<Vec<LayerTrace>> {
    (0..seeds).map(|s| simulate_chain(&config.clone().with_seed(1000 + s), None).unwrap()).collect()
}

fn random_unit_spectrum(n: usize, rng: &mut SeededRng) -> SingularSpectrum {
    let raw: Vec<f64> = (0..n).map(|_| rng.uniform() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    SingularSpectrum::from_squares(&raw.iter().map(|x| x / total).collect::<Vec<_>>()).unwrap()
}

#[test]
fn product_of_orthogonal_state_is_gaussian() {
    // With H^T H = I/n, W H has i.i.d. N(0, 1/(n d)) entries.
    let (d, n) = (64, 4);
    let h = sample_input(InputKind::Orthogonal, d, n, &mut SeededRng::new(1)).unwrap();
    let draws = 1000;
    let mut var_sum = 0.0;
    let mut mean_sum = 0.0;
    for r in 0..draws {
        let m = sample_product(h.matrix(), &mut SeededRng::new(r), Activation::Linear, WeightSampling::Dense).unwrap();
        let g = gaussianity_diagnostics(&m, n, d);
        var_sum += g.entry_var;
        mean_sum += g.entry_mean;
    }
    let target = 1.0 / (n * d) as f64;
    let total = (draws as usize * n * d) as f64;
    let var = var_sum / draws as f64;
    let mean = mean_sum / draws as f64;
    assert!((var - target).abs() <= 5.0 * (2.0 / total).sqrt() * target, "{var} vs {target}");
    assert!(mean.abs() <= 5.0 * (target / total).sqrt());
}

#[test]
fn bn_gap_shrinks_between_layers_3_and_30() {
    // Gaussian inputs start at the plateau already, so this uses nearly
    // parallel inputs that leave room to decay.
    let all: Vec<Vec<LayerTrace>> = (0..20)
        .map(|s| {
            let h = sample_input(InputKind::Correlated { eps: 0.01 }, 256, 4, &mut SeededRng::new(700 + s)).unwrap();
            simulate_chain(&ChainConfig::new(256, 4, 30).with_seed(s), Some(h)).unwrap()
        })
        .collect();
    let early = median(all.iter().map(|r| r[2].v_gap).collect());
    let late = median(all.iter().map(|r| r[29].v_gap).collect());
    assert!(late <= early, "{late} > {early}");
}

#[test]
fn vanilla_gap_grows_with_depth() {
    let config = ChainConfig::new(32, 4, 50).with_kind(ChainKind::Vanilla);
    let all = runs(&config, 20);
    let early = median(all.iter().map(|r| r[4].v_gap).collect());
    let late = median(all.iter().map(|r| r[49].v_gap).collect());
    assert!(late >= early, "{late} < {early}");
}

#[test]
fn bn_orthogonalizes_correlated_pairs() {
    let mut finals = Vec::new();
    for s in 0..20 {
        let h = sample_input(InputKind::Correlated { eps: 0.01 }, 32, 2, &mut SeededRng::new(500 + s)).unwrap();
        let t = simulate_chain(&ChainConfig::new(32, 2, 50).with_seed(s), Some(h)).unwrap();
        finals.push(t[49].cosines[0].abs());
    }
    assert!(median(finals) < 0.2);
}

#[test]
fn alpha_stays_positive() {
    for run in runs(&ChainConfig::new(256, 4, 100), 20) {
        assert!(estimate_alpha(&run).unwrap() > 0.0);
    }
}

#[test]
fn quadrature_agrees_with_montecarlo() {
    let s = SingularSpectrum::from_squares(&[0.7, 0.3]).unwrap();
    let q = p_vector_quadrature(&s, 1e-8).unwrap();
    let mc = p_vector_montecarlo(&s, 1_000_000, &mut SeededRng::new(4)).unwrap();
    for i in 0..2 {
        assert!((q.values[i] - mc.values[i]).abs() <= 3.0 * mc.std_errors[i]);
    }
    assert!((q.sum() - 1.0).abs() <= 1e-6);

    let flat = SingularSpectrum::from_squares(&[0.25; 4]).unwrap();
    let mc = p_vector_montecarlo(&flat, 100_000, &mut SeededRng::new(5)).unwrap();
    for (v, se) in mc.values.iter().zip(&mc.std_errors) {
        assert!((v - 0.25).abs() <= 3.0 * se);
    }
}

#[test]
fn single_step_contraction_on_random_state() {
    let h = sample_input(InputKind::Gaussian, 256, 4, &mut SeededRng::new(9)).unwrap();
    let r = verify_single_step(&h, 500, &SeededRng::new(10)).unwrap();
    assert!(r.satisfied, "{r:?}");
}

#[test]
fn single_step_on_rank_deficient_state() {
    // Two identical columns: sigma_n = 0 and the bound becomes V_hat + 1/sqrt(d).
    let base = sample_input(InputKind::Gaussian, 64, 3, &mut SeededRng::new(2)).unwrap().into_matrix();
    let dup = orthochain_core::Matrix::from_fn(64, 3, |i, j| base[(i, j.min(1))]);
    let h = orthochain_core::chain::Repr::normalized(dup).unwrap();
    let r = verify_single_step(&h, 200, &SeededRng::new(3)).unwrap();
    assert!((r.bound - (1.0 / 3.0 + 1.0 / 8.0)).abs() < 1e-8);
    assert!(r.satisfied);
}

#[test]
fn gram_concentration_on_random_state() {
    let h = sample_input(InputKind::Gaussian, 256, 4, &mut SeededRng::new(11)).unwrap();
    let r = verify_gram_concentration(&h, 500, &SeededRng::new(12)).unwrap();
    assert!(r.squared_deviation.satisfied, "{r:?}");
    assert!(r.diagonal_ok && r.offdiag_ok, "{r:?}");
}

#[test]
fn contraction_center_on_random_spectra() {
    let mut rng = SeededRng::new(13);
    for n in [2, 4, 8] {
        for _ in 0..100 {
            let s = random_unit_spectrum(n, &mut rng);
            let r = verify_contraction_center(&s, n).unwrap();
            assert!(r.satisfied(), "{s:?}: {r:?}");
        }
    }
}

#[test]
fn g_is_convex_for_n8() {
    let deltas: Vec<f64> = (0..200).map(|i| 0.125 * i as f64 / 199.0).collect();
    let s = g_convexity_scan(8, &[0.0, 1.0, 10.0, 100.0], &deltas).unwrap();
    assert!(s.min_second_difference >= -1e-6, "{s:?}");
}

#[test]
fn running_average_stability() {
    let all = runs(&ChainConfig::new(256, 4, 201), 20);
    let refs: Vec<&[LayerTrace]> = all.iter().map(|r| r.as_slice()).collect();
    let r = no_assumption_stability(&refs, 4, 256).unwrap();
    assert_eq!(r.prefixes.len(), 200);
    assert!(r.satisfied);
}

#[test]
fn deep_layer_entries_match_gaussian_variance() {
    let all = runs(&ChainConfig::new(512, 4, 50), 20);
    let var = all.iter().map(|r| r[49].entry_var.unwrap()).sum::<f64>() / 20.0;
    let target = 1.0 / (4.0 * 512.0);
    assert!((var / target - 1.0).abs() <= 0.1, "{var} vs {target}");
}
