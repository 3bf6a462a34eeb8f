//! Property tests for the crate-wide invariants.

use proptest::prelude::*;

use br_mppi::barrier::{Barrier, BarrierSet};
use br_mppi::dynamics::{wrap_angle, ModelKind, RobotModel};
use br_mppi::geometry::ShapeDescriptor;
use br_mppi::mppi::compute_weights;
use br_mppi::projection::{project_controls, projection_residual, ConstraintSystem, ProjectionWeights};

proptest! {
    #[test]
    fn wrapped_angles_stay_in_range(a in -1e6f64..1e6) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        // Wrapping preserves the angle modulo 2 pi.
        let diff = (a - w) / (2.0 * std::f64::consts::PI);
        prop_assert!((diff - diff.round()).abs() < 1e-6);
    }

    #[test]
    fn weights_form_a_simplex(
        costs in prop::collection::vec(-1e3f64..1e3, 1..64),
        lambda in 0.05f64..50.0,
    ) {
        let info = compute_weights(&costs, lambda);
        let sum: f64 = info.weights.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(info.weights.iter().all(|w| *w >= 0.0));
        // The cheapest rollout carries the largest weight.
        let argmin = costs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let max_w = info.weights.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert!(info.weights[argmin] >= max_w - 1e-12);
    }

    #[test]
    fn sdf_is_one_lipschitz(
        px in -3.0f64..3.0, py in -3.0f64..3.0,
        qx in -3.0f64..3.0, qy in -3.0f64..3.0,
        hx in 0.05f64..1.0, hy in 0.05f64..1.0,
    ) {
        for shape in [
            ShapeDescriptor::Circle { radius: hx },
            ShapeDescriptor::Rectangle { half_x: hx, half_y: hy },
            ShapeDescriptor::Hexagon { circumradius: hx },
        ] {
            let lhs = (shape.sdf([px, py]) - shape.sdf([qx, qy])).abs();
            let rhs = (px - qx).hypot(py - qy);
            prop_assert!(lhs <= rhs + 1e-9);
        }
    }

    #[test]
    fn projection_is_feasible_and_idempotent(
        seed_g in prop::collection::vec(-2.0f64..2.0, 12),
        seed_h in prop::collection::vec(0.2f64..2.0, 4),
        seed_b in prop::collection::vec(-1.5f64..1.5, 4),
        ux in prop::collection::vec(-1.0f64..1.0, 3),
        ua in prop::collection::vec(-1.0f64..1.0, 4),
        q_alpha in 0.2f64..20.0,
    ) {
        let (m, na) = (3, 4);
        let sys = ConstraintSystem {
            m,
            active: (0..na).collect(),
            rows_g: seed_g,
            rows_h: seed_h,
            b: seed_b,
        };
        let w = ProjectionWeights::identity(m, q_alpha);
        let (px1, pa1) = project_controls(&sys, &ux, &ua, &w).unwrap();
        prop_assert!(projection_residual(&sys, &px1, &pa1) < 1e-8);
        let (px2, pa2) = project_controls(&sys, &px1, &pa1, &w).unwrap();
        for (a, b) in px1.iter().zip(&px2) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in pa1.iter().zip(&pa2) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn barrier_sign_matches_set_membership(
        px in -3.0f64..3.0, py in -3.0f64..3.0,
        cx in -1.0f64..1.0, cy in -1.0f64..1.0,
        r in 0.1f64..1.5,
    ) {
        let set = BarrierSet::new(
            vec![Barrier::Circle { center: [cx, cy], radius: r, robot_radius: 0.0, buffer: 0.2 }],
            vec![],
            0.5,
            f64::INFINITY,
        );
        let model = RobotModel::with_limit(ModelKind::Si, 0.05, 1.0);
        let h = set.value(0, &model, &[px, py]);
        let dist = (px - cx).hypot(py - cy);
        if h > 0.0 {
            prop_assert!(dist > r);
        } else if h < 0.0 {
            prop_assert!(dist < r);
        }
    }
}
