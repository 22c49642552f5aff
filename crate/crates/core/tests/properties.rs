use nalgebra::DMatrix;
use orthochain_core::chain::{
    bn_step, sample_input, simulate_chain, Activation, ChainConfig, InputKind, Repr, WeightSampling,
};
use orthochain_core::init::{iterative_orthogonal_init, verify_init_gap, InitScheme};
use orthochain_core::metrics::{
    gram, lyapunov_gap, orthogonality_gap, orthogonality_gap_from_spectrum, pairwise_cosines,
};
use orthochain_core::numerics::{sample_gaussian_matrix, singular_values, thin_svd, Variance};
use orthochain_core::theory::{coupling_w2_quantities, p_vector_quadrature};
use orthochain_core::{Matrix, SeededRng, SingularSpectrum};
use proptest::prelude::*;

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    sample_gaussian_matrix(rows, cols, Variance::new(1.0).unwrap(), &mut SeededRng::new(seed))
}

fn unit(rows: usize, cols: usize, seed: u64) -> Matrix {
    Repr::normalized(gaussian(rows, cols, seed)).unwrap().into_matrix()
}

fn orthonormality_error(m: &Matrix) -> f64 {
    m.t_matmul(m).sub(&Matrix::identity(m.cols())).frobenius_norm()
}

/// Random unit-norm spectrum with a controllable spread.
fn random_spectrum(n: usize, seed: u64, spread: f64) -> SingularSpectrum {
    let mut rng = SeededRng::new(seed);
    let raw: Vec<f64> = (0..n).map(|_| (spread * rng.standard_normal()).exp()).collect();
    let total: f64 = raw.iter().sum();
    SingularSpectrum::from_squares(&raw.iter().map(|x| x / total).collect::<Vec<_>>()).unwrap()
}

fn activation() -> impl Strategy<Value = Activation> {
    prop::sample::select(Activation::ALL.to_vec())
}

#[test]
fn svd_round_trip_on_reference_shapes() {
    for (i, &(d, n)) in [(8, 4), (64, 8), (256, 16)].iter().enumerate() {
        let m = gaussian(d, n, i as u64);
        let svd = thin_svd(&m).unwrap();
        let rel = svd.reconstruct().sub(&m).frobenius_norm() / m.frobenius_norm();
        assert!(rel <= 1e-10, "({d},{n}): {rel}");
        assert!(orthonormality_error(&svd.left) <= 1e-10);
        assert!(orthonormality_error(&svd.right) <= 1e-10);
        let s = svd.singulars.values();
        assert!(s.windows(2).all(|w| w[0] >= w[1]) && s[n - 1] >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_factors_are_orthonormal(rows in 1usize..24, cols in 1usize..24, seed in any::<u64>()) {
        let m = gaussian(rows, cols, seed);
        let svd = thin_svd(&m).unwrap();
        let r = rows.min(cols);
        prop_assert_eq!(svd.left.shape(), (rows, r));
        prop_assert_eq!(svd.right.shape(), (cols, r));
        prop_assert!(orthonormality_error(&svd.left) <= 1e-10);
        prop_assert!(orthonormality_error(&svd.right) <= 1e-10);
        prop_assert!(svd.reconstruct().sub(&m).frobenius_norm() <= 1e-10 * m.frobenius_norm());
    }

    #[test]
    fn gram_eigenvalues_match_squared_singular_values(d in 2usize..40, n in 1usize..8, seed in any::<u64>()) {
        let h = gaussian(d.max(n), n, seed);
        let g = gram(&h);
        let oracle = DMatrix::from_row_slice(n, n, g.as_slice()).symmetric_eigen();
        let mut eig: Vec<f64> = oracle.eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        let s = singular_values(&h).unwrap();
        for (e, sv) in eig.iter().zip(s.values()) {
            prop_assert!((e - sv * sv).abs() <= 1e-8 * (1.0 + e.abs()), "{} vs {}", e, sv * sv);
        }
    }

    #[test]
    fn gap_from_gram_equals_gap_from_spectrum(d in 2usize..40, n in 1usize..8, seed in any::<u64>()) {
        let h = unit(d.max(n), n, seed);
        let from_gram = orthogonality_gap(&h).unwrap();
        let from_svd = orthogonality_gap_from_spectrum(&singular_values(&h).unwrap(), n).unwrap();
        prop_assert!((from_gram - from_svd).abs() <= 1e-8);
    }

    #[test]
    fn lemma_a_and_its_sharper_form(d in 2usize..40, n in 1usize..8, seed in any::<u64>(), spread in 0.0f64..4.0) {
        let d = d.max(n);
        let s = random_spectrum(n, seed, spread);
        let mut rng = SeededRng::new(seed ^ 1);
        let u = orthochain_core::numerics::qr(&gaussian(d, n, seed ^ 2)).unwrap().q;
        let v = orthochain_core::numerics::haar_orthogonal(n, &mut rng);
        let h = u.matmul(&Matrix::from_diag(s.values())).matmul(&v.transpose());
        let gap = orthogonality_gap(&h).unwrap();
        let lyap = lyapunov_gap(&h).unwrap();
        let nf = n as f64;
        prop_assert!(gap <= 2.0 * nf * lyap + 1e-8);
        prop_assert!(gap <= 2f64.sqrt() * (nf - 1.0) * lyap + 1e-8);
        prop_assert!(gap <= (1.0 - 1.0 / nf).sqrt() + 1e-12);
    }

    #[test]
    fn cosines_ignore_positive_column_scaling(d in 2usize..20, n in 2usize..6, seed in any::<u64>(), scales in prop::collection::vec(0.01f64..100.0, 6)) {
        let h = gaussian(d, n, seed);
        let scaled = Matrix::from_fn(d, n, |i, j| h[(i, j)] * scales[j]);
        let a = pairwise_cosines(&h).unwrap();
        let b = pairwise_cosines(&scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(x));
        }
    }

    #[test]
    fn bn_step_output_has_unit_norm(act in activation(), d in 2usize..48, n in 1usize..6, seed in any::<u64>()) {
        let d = d.max(n);
        let h = sample_input(InputKind::Gaussian, d, n, &mut SeededRng::new(seed)).unwrap();
        let next = bn_step(&h, &mut SeededRng::new(seed.wrapping_add(1)), act).unwrap();
        prop_assert!((next.matrix().frobenius_norm() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn chain_is_column_equivariant(seed in any::<u64>(), perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let h = sample_input(InputKind::Gaussian, 12, 4, &mut SeededRng::new(seed)).unwrap();
        let config = ChainConfig::new(12, 4, 6).with_sampling(WeightSampling::Dense).with_seed(seed);
        let mut plain = Vec::new();
        let mut permuted = Vec::new();
        orthochain_core::chain::run_chain(&config, Some(h.clone()), |_, s, _| { plain.push(s.clone()); Ok(()) }).unwrap();
        orthochain_core::chain::run_chain(&config, Some(h.permute_columns(&perm)), |_, s, _| { permuted.push(s.clone()); Ok(()) }).unwrap();
        for (a, b) in plain.iter().zip(&permuted) {
            prop_assert!(a.permute_columns(&perm).matrix().max_abs_diff(b.matrix()) <= 1e-12);
        }
    }

    #[test]
    fn coupling_chain_of_inequalities(n in 1usize..10, seed in any::<u64>(), spread in 0.0f64..6.0) {
        let q = coupling_w2_quantities(&random_spectrum(n, seed, spread), n).unwrap();
        prop_assert!(q.coupling_cost <= q.n_v_squared + 1e-12);
        prop_assert!(q.n_v_squared <= q.v_bound + 1e-12);
    }

    #[test]
    fn p_vector_sums_to_one_and_is_monotone(n in 2usize..9, seed in any::<u64>(), spread in 0.0f64..3.0) {
        let p = p_vector_quadrature(&random_spectrum(n, seed, spread), 1e-9).unwrap().values;
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        prop_assert!(p.windows(2).all(|w| w[0] >= w[1] - 1e-9));
        prop_assert!(p.iter().all(|&x| x > 0.0 && x <= 1.0));
    }

    #[test]
    fn initializer_flattens_the_spectrum(d in 2usize..12, extra in 0usize..12, seed in any::<u64>()) {
        let n = d + extra;
        let h = gaussian(d, n, seed);
        let init = iterative_orthogonal_init(&h, &InitScheme::default(), &mut SeededRng::new(seed)).unwrap();
        let s = singular_values(&h).unwrap();
        let total: f64 = s.values().iter().sum();
        let got = singular_values(&init.weights.matmul(&h)).unwrap();
        for (g, si) in got.values().iter().zip(s.values()) {
            prop_assert!((g - (si / total).sqrt()).abs() <= 1e-8);
        }
        let gap = verify_init_gap(&h, &init.weights).unwrap();
        prop_assert!(gap.holds(), "{:?}", gap);
    }
}

#[test]
fn determinism_of_simulation() {
    let config = ChainConfig::new(32, 4, 40).with_seed(123).with_activation(Activation::Relu);
    let a = simulate_chain(&config, None).unwrap();
    let b = simulate_chain(&config, None).unwrap();
    assert_eq!(a, b);
}
