use proptest::prelude::*;

use hessian_spectra::nn::{hvp, Activation, LossKind};
use hessian_spectra::operator::{
    deflate, gram_schmidt, restrict_to_block, symmetry_defect, BlockLayout, SymmetricOperator,
};
use hessian_spectra::oracle::{dense_symmetric_eig, materialize};
use hessian_spectra::rng::{sample_probe, ProbeDistribution, Purpose, Stream};
use hessian_spectra::spectral::{hutchinson_trace, slq_density, tridiag_eig, DensityConfig, ProbeConfig, Sigma};
use hessian_spectra::testing::{random_symmetric, random_tridiagonal, toy_model, ToyVariant};
use hessian_spectra::vector::{dot, norm, sub};

fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![Just(Activation::Tanh), Just(Activation::Sigmoid), Just(Activation::Softplus)]
}

fn loss_kind() -> impl Strategy<Value = LossKind> {
    prop_oneof![Just(LossKind::Mse), Just(LossKind::CrossEntropy)]
}

fn variant() -> impl Strategy<Value = ToyVariant> {
    (any::<bool>(), any::<bool>(), activation(), loss_kind())
        .prop_map(|(norm, residual, activation, loss)| ToyVariant { norm, residual, activation, loss })
}

fn gaussian(m: usize, seed: u64) -> Vec<f64> {
    sample_probe(m, ProbeDistribution::Gaussian, &mut Stream::new(seed, Purpose::Other(9), 0))
}

/// Random block lengths summing to `m`.
fn layout_for(m: usize, cuts: &[usize]) -> BlockLayout {
    let mut points: Vec<usize> = cuts.iter().map(|c| 1 + c % (m - 1)).collect();
    points.sort_unstable();
    points.dedup();
    let mut parts = Vec::new();
    let mut prev = 0;
    for (i, p) in points.iter().chain(std::iter::once(&m)).enumerate() {
        parts.push((format!("b{i}"), p - prev));
        prev = *p;
    }
    BlockLayout::from_lengths(parts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn hvp_linearity_and_symmetry(v in variant(), seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (net, params) = toy_model(v, seed).unwrap();
        let theta = &params.values;
        let m = theta.len();
        let (v1, v2) = (gaussian(m, seed), gaussian(m, seed + 1));
        let (h1, h2) = (hvp(&net, theta, &v1).unwrap(), hvp(&net, theta, &v2).unwrap());
        let combo: Vec<f64> = v1.iter().zip(&v2).map(|(x, y)| a * x + b * y).collect();
        let lhs = hvp(&net, theta, &combo).unwrap();
        let rhs: Vec<f64> = h1.iter().zip(&h2).map(|(x, y)| a * x + b * y).collect();
        let scale = (a.abs() * norm(&h1) + b.abs() * norm(&h2)).max(1e-300);
        prop_assert!(norm(&sub(&lhs, &rhs)) <= 1e-10 * scale);
        let (p, q) = (dot(&v1, &h2), dot(&v2, &h1));
        prop_assert!((p - q).abs() <= 1e-8 * (norm(&v1) * norm(&h2)).max(norm(&v2) * norm(&h1)));
    }

    #[test]
    fn restriction_is_principal_submatrix(m in 4usize..30, seed in 0u64..1000, cuts in prop::collection::vec(0usize..100, 1..4), pick in 0usize..4) {
        let a = random_symmetric(m, seed);
        let layout = layout_for(m, &cuts);
        let name = layout.segments()[pick % layout.segments().len()].name.clone();
        let r = restrict_to_block(&a, &layout, &[name]).unwrap();
        let sub = a.principal_submatrix(r.indices());
        let got = materialize(&r).unwrap().matrix;
        prop_assert_eq!(got.dim(), sub.dim());
        for (x, y) in got.entries().iter().zip(sub.entries()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        prop_assert!(symmetry_defect(&r, 20, seed) < 1e-8);
    }

    #[test]
    fn deflation_stays_symmetric_and_annihilates_basis(m in 3usize..25, k in 1usize..3, seed in 0u64..1000) {
        let a = random_symmetric(m, seed);
        let raw: Vec<Vec<f64>> = (0..k as u64).map(|i| gaussian(m, seed * 7 + i)).collect();
        let basis = gram_schmidt(&raw);
        let d = deflate(&a, &basis).unwrap();
        prop_assert!(symmetry_defect(&d, 20, seed) < 1e-8);
        for u in &basis {
            prop_assert!(norm(&d.apply(u)) < 1e-12);
        }
    }

    #[test]
    fn estimators_are_deterministic(seed in any::<u64>(), n_v in 1usize..12) {
        let a = random_symmetric(30, 3);
        let probes = ProbeConfig::rademacher(n_v, seed);
        // stderr is NaN for a single probe, so compare the samples themselves
        prop_assert_eq!(hutchinson_trace(&a, &probes).unwrap().samples, hutchinson_trace(&a, &probes).unwrap().samples);
        let cfg = DensityConfig { q: 8, probes, sigma: Sigma::Auto, grid_points: 64 };
        prop_assert_eq!(slq_density(&a, &cfg).unwrap(), slq_density(&a, &cfg).unwrap());
    }

    #[test]
    fn hutchinson_running_means_are_prefix_means(seed in any::<u64>(), n_v in 1usize..40) {
        let a = random_symmetric(12, 1);
        let t = hutchinson_trace(&a, &ProbeConfig::rademacher(n_v, seed)).unwrap();
        for (i, rm) in t.running_means.iter().enumerate() {
            let want = t.samples[..=i].iter().sum::<f64>() / (i + 1) as f64;
            prop_assert!((rm - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn quadrature_weights_form_distribution(q in 1usize..40, seed in 0u64..1000) {
        let (alpha, beta) = random_tridiagonal(q, seed);
        let run = tridiag_eig(&alpha, &beta).unwrap();
        prop_assert!((run.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(run.weights.iter().all(|&w| w >= 0.0));
        prop_assert!(run.ritz_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn jacobi_reconstructs(m in 1usize..20, seed in 0u64..1000) {
        let a = random_symmetric(m, seed);
        let spec = dense_symmetric_eig(&a).unwrap();
        let r = spec.reconstruct();
        let err = r.entries().iter().zip(a.entries()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-9 * a.max_abs().max(1e-300));
        prop_assert!((spec.trace() - a.trace()).abs() <= 1e-8 * a.trace().abs().max(1.0));
    }
}
