//! Invariants of the optimizer steps and design maps over random inputs.

use proptest::prelude::*;
use stopo::macro_model::{DesignFields, FilterMatrix, MacroMesh, MacroProblem};
use stopo::optim::{
    adam_step, gcmma_step, penalty_descent_direction, penalty_value, sgd_step, AdamState, GcmmaParams, GcmmaState,
    PenaltySpec,
};

const BOUNDS: [f64; 2] = [-1.5, 1.5];

fn in_bounds(x: &[f64]) -> bool {
    x.iter().all(|v| (BOUNDS[0]..=BOUNDS[1]).contains(v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adam_moves_within_its_step_bound_and_the_box(
        start in prop::collection::vec(-1.5f64..1.5, 4),
        grads in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 1..40),
        eta in 1e-3f64..0.5,
    ) {
        let mut state = AdamState::new(4, eta);
        let mut theta = start;
        for h in &grads {
            let bound = eta * state.step_ratio_bound(state.k + 1) * (1.0 + 1e-12);
            let next = adam_step(&mut state, &theta, h, BOUNDS).unwrap();
            for (a, b) in next.iter().zip(&theta) {
                prop_assert!((a - b).abs() <= bound);
            }
            prop_assert!(in_bounds(&next));
            theta = next;
        }
    }

    #[test]
    fn first_adam_step_is_eta_against_the_sign(h in prop::collection::vec(-50f64..50.0, 1..8), eta in 1e-3f64..1.0) {
        prop_assume!(h.iter().all(|g| g.abs() > 1e-3));
        let mut state = AdamState::new(h.len(), eta);
        let theta = vec![0.0; h.len()];
        let next = adam_step(&mut state, &theta, &h, [-10.0, 10.0]).unwrap();
        for (t, g) in next.iter().zip(&h) {
            prop_assert!((t + eta * g.signum()).abs() <= eta * state.epsilon / g.abs() + 1e-15);
        }
    }

    #[test]
    fn sgd_stays_in_the_box(theta in prop::collection::vec(-1.5f64..1.5, 6), h in prop::collection::vec(-1e4f64..1e4, 6)) {
        prop_assert!(in_bounds(&sgd_step(0.1, &theta, &h, BOUNDS).unwrap()));
    }

    #[test]
    fn penalty_direction_is_the_gradient_of_the_penalized_objective(
        theta in prop::collection::vec(-1.0f64..1.0, 3),
        weights in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..5),
        offsets in prop::collection::vec(-0.5f64..0.5, 5),
        kappa in 0.0f64..100.0,
    ) {
        // Objective c·θ; per-sample constraint g_s(θ) = w_s·θ − b_s.
        let c = [0.3, -1.2, 0.7];
        let spec = PenaltySpec::new(vec![kappa]).unwrap();
        let g_of = |t: &[f64]| -> Vec<Vec<f64>> {
            weights.iter().zip(&offsets).map(|(w, b)| vec![w.iter().zip(t).map(|(a, x)| a * x).sum::<f64>() - b]).collect()
        };
        let penalized = |t: &[f64]| c.iter().zip(t).map(|(a, x)| a * x).sum::<f64>() + penalty_value(&g_of(t), &spec);
        let d_g: Vec<Vec<Vec<f64>>> = weights.iter().map(|w| vec![w.clone()]).collect();
        let h = penalty_descent_direction(&c, &g_of(&theta), &d_g, &spec).unwrap();
        for i in 0..3 {
            let mut p = theta.clone();
            let mut m = theta.clone();
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (penalized(&p) - penalized(&m)) / 2e-6;
            prop_assert!((fd - h[i]).abs() <= 1e-5 * (1.0 + fd.abs()), "component {}: {} vs {}", i, fd, h[i]);
        }
        if g_of(&theta).iter().all(|g| g[0] <= 0.0) {
            prop_assert_eq!(h, c.to_vec());
        }
    }

    #[test]
    fn gcmma_iterates_stay_in_the_box(
        target in prop::collection::vec(-3.0f64..3.0, 3),
        start in prop::collection::vec(-1.5f64..1.5, 3),
        limit in -1.0f64..1.0,
    ) {
        let mut x = start;
        let mut state = GcmmaState::new(&x, BOUNDS, GcmmaParams::default()).unwrap();
        for _ in 0..5 {
            let f: f64 = x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum();
            let df: Vec<f64> = x.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            let g = x.iter().sum::<f64>() - limit;
            let out = gcmma_step(&mut state, &x, f, &df, &[g], &[vec![1.0; 3]]).unwrap();
            prop_assert!(in_bounds(&out.theta));
            x = out.theta;
        }
    }

    #[test]
    fn filter_is_linear(
        x in prop::collection::vec(-2.0f64..2.0, 35),
        y in prop::collection::vec(-2.0f64..2.0, 35),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        radius in 0.0f64..2.5,
    ) {
        let f = FilterMatrix::new(7, 5, 1.0, radius).unwrap();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let (fx, fy, fm) = (f.apply(&x), f.apply(&y), f.apply(&mix));
        for i in 0..35 {
            prop_assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-12);
        }
    }

    #[test]
    fn raising_the_level_set_never_adds_mass(
        theta in prop::collection::vec(-1.5f64..1.5, 65),
        bump in prop::collection::vec(0.0f64..0.5, 65),
    ) {
        let mesh = MacroMesh::half_beam(12, 4, 3.0, 1.0, 1.0).unwrap();
        let h = mesh.h;
        let p = MacroProblem::new(mesh, 1.6 * h).unwrap();
        let raised: Vec<f64> = theta.iter().zip(&bump).map(|(t, d)| t + d).collect();
        let before = DesignFields::new(&p, &theta).unwrap().mass_ratio;
        let after = DesignFields::new(&p, &raised).unwrap().mass_ratio;
        prop_assert!(after <= before + 1e-15);
    }
}
