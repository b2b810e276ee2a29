//! Property tests across the scoring, linear-algebra and autograd layers.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uaelab::blocks::{LinearHarness, Topology};
use uaelab::harness::correlation::spearman_rho;
use uaelab::tensor::linalg::{spectral_norm, SpectralNormOptions};
use uaelab::tensor::{Padding, Tape, Tensor};
use uaelab::uae::attribution::{elasticity, EvalShift};
use uaelab::uae::{ablate, sensitivity, FactorSubset, FormId, ShapleyRule};
use uaelab::{evaluate_uae, ModuleDescriptor, UaeForm};

fn descriptor() -> impl Strategy<Value = ModuleDescriptor> {
    (0u32..20, 200u64..2_000_000, 1u32..40, 1u32..8).prop_map(|(k, n, l, f)| ModuleDescriptor::new("M", k, n, l, f).unwrap())
}

fn form() -> impl Strategy<Value = UaeForm> {
    prop::sample::select(UaeForm::all_standard())
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let t = Tensor::uniform(&[rows * cols], -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    DMatrix::from_vec(rows, cols, t.into_data())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn score_is_inverse_in_f(form in form(), d in descriptor()) {
        let one = ModuleDescriptor { f: 1, ..d.clone() };
        let scaled = evaluate_uae(&form, &d).unwrap() * d.f as f64;
        prop_assert!(close(scaled, evaluate_uae(&form, &one).unwrap(), 1e-12));
    }

    #[test]
    fn ablation_is_multiplicative_over_disjoint_subsets(form in form(), d in descriptor(), split in 0usize..6) {
        // Two disjoint non-empty subsets and their union.
        let (s, t) = match split {
            0 => ((true, false, false), (false, true, false)),
            1 => ((true, false, false), (false, false, true)),
            2 => ((false, true, false), (false, false, true)),
            3 => ((true, false, false), (false, true, true)),
            4 => ((false, true, false), (true, false, true)),
            _ => ((false, false, true), (true, true, false)),
        };
        let sub = |(a, b, c): (bool, bool, bool)| FactorSubset::new(a, b, c);
        let union = FactorSubset::new(s.0 || t.0, s.1 || t.1, s.2 || t.2);
        let f = d.f as f64;
        let lhs = ablate(&form, &d, union).unwrap() * f;
        let rhs = ablate(&form, &d, sub(s)).unwrap() * f * ablate(&form, &d, sub(t)).unwrap() * f;
        prop_assert!(close(lhs, rhs, 1e-12));
    }

    #[test]
    fn standard_shapley_is_efficient(form in form(), d in descriptor(), v_empty in -2.0f64..2.0) {
        let r = sensitivity(&form, &d, EvalShift::default(), v_empty, ShapleyRule::Standard).unwrap();
        prop_assert!(r.efficiency_residual().abs() <= 1e-9 * r.v_full.abs().max(1.0));
    }

    #[test]
    fn quadratic_alpha_has_elasticity_two(d in descriptor()) {
        let (s, _) = elasticity(&UaeForm::standard(FormId::Phi4), &d, EvalShift::default()).unwrap();
        prop_assert!((s[0] - 2.0).abs() < 1e-6, "S_alpha = {}", s[0]);
    }

    #[test]
    fn spectral_norm_matches_svd(rows in 1usize..9, cols in 1usize..9, seed in any::<u64>()) {
        let m = matrix(rows, cols, seed);
        let ours = spectral_norm(&m, SpectralNormOptions::default());
        let reference = m.clone().svd(false, false).singular_values.max();
        prop_assert!(ours.converged);
        prop_assert!(close(ours.value, reference, 1e-9), "{} vs {}", ours.value, reference);
    }

    #[test]
    fn spearman_is_bounded_and_rank_invariant(
        xs in prop::collection::vec(-100.0f64..100.0, 3..20),
        seed in any::<u64>(),
    ) {
        let ys = Tensor::uniform(&[xs.len()], -5.0, 5.0, &mut ChaCha8Rng::seed_from_u64(seed)).into_data();
        let rho = spearman_rho(&xs, &ys).unwrap();
        prop_assert!((-1.0..=1.0).contains(&rho));
        let warped: Vec<f64> = xs.iter().map(|x| (x / 10.0).exp() + x.powi(3)).collect();
        prop_assert!((spearman_rho(&warped, &ys).unwrap() - rho).abs() < 1e-12);
        prop_assert!((spearman_rho(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_jacobian_matches_basis_responses(
        units in prop::collection::vec(1usize..4, 1..5),
        raw in prop::collection::vec(-1.5f64..1.5, 4),
        dim in 1usize..6,
        seed in any::<u64>(),
    ) {
        let coefficients = raw[..units.len() - 1].to_vec();
        let topology = Topology { units, coefficients };
        let maps = (0..topology.stages()).map(|i| matrix(dim, dim, seed.wrapping_add(i as u64)) * 0.5).collect();
        let h = LinearHarness::from_topology(&topology, maps).unwrap();
        let closed = h.jacobian_closed_form().unwrap();
        // A linear map's Jacobian columns are its images of the basis vectors.
        let mut oracle = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            oracle.set_column(i, &h.forward(&DVector::from_fn(dim, |r, _| if r == i { 1.0 } else { 0.0 })));
        }
        prop_assert!((closed - &oracle).amax() <= 1e-9 * oracle.amax().max(1.0));
    }

    #[test]
    fn convolution_is_linear_in_its_input(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::uniform(&[1, 2, 5, 4], -1.0, 1.0, &mut rng);
        let y = Tensor::uniform(&[1, 2, 5, 4], -1.0, 1.0, &mut rng);
        let w = Tensor::uniform(&[3, 2, 3, 3], -1.0, 1.0, &mut rng);
        let conv = |input: &Tensor| {
            let mut t = Tape::new();
            let xv = t.leaf(input.clone(), false);
            let wv = t.leaf(w.clone(), false);
            let out = t.conv2d(xv, wv, None, Padding::Same).unwrap();
            t.value(out).clone()
        };
        let mix = x.zip_with(&y, |p, q| a * p + b * q).unwrap();
        let expected = conv(&x).zip_with(&conv(&y), |p, q| a * p + b * q).unwrap();
        prop_assert!(conv(&mix).max_abs_diff(&expected) < 1e-12);
    }
}
