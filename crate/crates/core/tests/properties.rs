//! Invariants checked on randomized inputs.

use degenlab_core::bvp::{conormal_from_gradient, gradient_from_conormal, hat_transform};
use degenlab_core::coefficients::{CoefficientField, CoefficientSpec};
use degenlab_core::corona::{self, Sawtooth};
use degenlab_core::dyadic::{DyadicCube, TGrid};
use degenlab_core::grid::WeightedGrid;
use degenlab_core::linalg::random_vector;
use degenlab_core::operators::{Composition, DiscreteD, Func, SpectralCalculus};
use degenlab_core::weights::{random_dyadic_weight, WeightModel};
use degenlab_core::{c64, rng};
use proptest::prelude::*;

fn max_diff(a: &[c64], b: &[c64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn random_b(seed: u64, amplitude: f64) -> CoefficientSpec {
    CoefficientSpec::Random { seed, level: 2, amplitude, hermitian: false }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradient_and_divergence_are_weighted_adjoints(a in -0.6f64..0.9, seed in 0u64..1000) {
        let grid = WeightedGrid::new(&WeightModel::power(a, 10).unwrap(), 32).unwrap();
        let d = DiscreteD::new(&grid).unwrap();
        let mut r = rng(seed);
        let f = random_vector(&mut r, 32);
        let g = random_vector(&mut r, 32);
        let lhs = grid.inner_scalar(&d.gradient(&f), &g);
        let rhs = -grid.inner_scalar(&f, &d.div_w(&g));
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn masses_are_additive(seed in 0u64..1000, beta in 0.05f64..0.9) {
        let w = random_dyadic_weight(seed, 8, beta).unwrap();
        for q in DyadicCube::all_to_depth(7) {
            let [l, r] = q.children();
            let m = w.mass(q).unwrap();
            prop_assert!((w.mass(l).unwrap() + w.mass(r).unwrap() - m).abs() <= 1e-13 * m);
            prop_assert!(w.a2_ratio(q).unwrap() >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn conormal_dictionary_round_trips(seed in 0u64..1000, amplitude in 0.0f64..0.8) {
        let a = CoefficientField::from_spec(&random_b(seed, amplitude), 16).unwrap();
        let g = random_vector(&mut rng(seed + 1), 32);
        let back = gradient_from_conormal(&a, &conormal_from_gradient(&a, &g));
        prop_assert!(max_diff(&back, &g) <= 1e-12);
    }

    #[test]
    fn hat_is_an_involution(seed in 0u64..1000, amplitude in 0.0f64..0.8) {
        let grid = WeightedGrid::new(&WeightModel::constant(1.0).unwrap(), 16).unwrap();
        let d = DiscreteD::new(&grid).unwrap();
        let a = CoefficientField::from_spec(&random_b(seed, amplitude), 16).unwrap();
        let (_, report) = hat_transform(&d, &a, seed).unwrap();
        prop_assert!(report.involution_defect <= 1e-12);
        prop_assert!(report.kappa_in > 0.0 && report.kappa_out > 0.0);
    }

    #[test]
    fn spectral_projections_sum_to_identity(seed in 0u64..1000, amplitude in 0.0f64..0.6) {
        let grid = WeightedGrid::new(&WeightModel::power(0.5, 10).unwrap(), 16).unwrap();
        let d = DiscreteD::new(&grid).unwrap();
        let b = CoefficientField::from_spec(&random_b(seed, amplitude), 16).unwrap();
        let calc = SpectralCalculus::new(&d, &b, Composition::DB).unwrap();
        let x = d.project_range(&random_vector(&mut rng(seed), 32));
        let p = calc.apply(Func::ChiPlus, &x).unwrap();
        let m = calc.apply(Func::ChiMinus, &x).unwrap();
        let sum: Vec<c64> = p.iter().zip(&m).map(|(u, v)| u + v).collect();
        prop_assert!(max_diff(&sum, &x) <= 1e-9 * grid.norm(&x).max(1.0));
        let pp = calc.apply(Func::ChiPlus, &p).unwrap();
        prop_assert!(max_diff(&pp, &p) <= 1e-9 * grid.norm(&x).max(1.0));
    }

    #[test]
    fn sawteeth_tile_the_box(seed in 0u64..1000, sigma in 0.05f64..0.5) {
        let w = random_dyadic_weight(seed, 8, 0.5).unwrap();
        let grid = WeightedGrid::new(&w, 64).unwrap();
        let dec = corona::corona_decompose_grid(&grid, DyadicCube::root(), sigma).unwrap();
        let regions: Vec<Sawtooth> = dec.members().into_iter().map(|q| dec.sawtooth(q)).collect();
        let tg = TGrid::for_grid(&grid);
        prop_assert_eq!(corona::tiling_defect(&tg, 64, DyadicCube::root(), &regions), (0, 0, 0));
    }
}
