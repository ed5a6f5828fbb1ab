//! Upward bridging profiles between the constant states `-1 < 1` of `H = p^2`
//! at level 1, where lengths are known in closed form, and the verifier's
//! response to a planted defect. No downward bridge exists here: below
//! level 1 the solution leaving `f = 1` settles at the lower equilibrium
//! `sqrt(level)` before reaching `-1`.

mod common;

use std::sync::Arc;

use common::Defective;
use hjcell_core::bridge::{build_bridge_between, BridgeOptions};
use hjcell_core::env::benchmarks::pure_quadratic;
use hjcell_core::{BridgeDirection, BridgeProfile, CellOptions, CellProblem};
use proptest::prelude::*;

fn constant_bridge(delta: f64, direction: BridgeDirection) -> BridgeProfile {
    let env = pure_quadratic();
    let cell = CellProblem::new(env.clone(), 3.0, CellOptions::default()).unwrap();
    let lo = cell.lambda_for_theta(-1.0).unwrap();
    let hi = cell.lambda_for_theta(1.0).unwrap();
    build_bridge_between(&env, 1.0, Arc::new(lo), Arc::new(hi), delta, direction, &[0.0], 100.0, &BridgeOptions::default())
        .unwrap()
}

fn closed_form_length(level: f64) -> f64 {
    let c = level.sqrt();
    2.0 * (1.0 / c).atanh() / c
}

#[test]
fn planted_curvature_defect_is_reported() {
    let env = pure_quadratic();
    for delta in [0.4, 0.2, 0.1] {
        let p = constant_bridge(delta, BridgeDirection::Up);
        let clean = hjcell_core::bridge::verify_piecewise_supersolution(&p, &env, 300);
        assert!(clean.holds(1e-6));
        let bad = Defective { inner: &p, bump: 0.02 };
        let report = hjcell_core::bridge::verify_piecewise_supersolution(&bad, &env, 300);
        assert!(report.worst_violation() > 0.005, "delta {delta}: {report:?}");
        assert!(!report.holds(1e-6));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn upward_lengths_follow_closed_form(delta in 0.05f64..0.9) {
        let p = constant_bridge(delta, BridgeDirection::Up);
        prop_assert!((p.length() - closed_form_length(1.0 + delta)).abs() < 1e-6);
        // Smaller raises take longer to cross.
        let q = constant_bridge(0.5 * delta, BridgeDirection::Up);
        prop_assert!(q.length() > p.length());
    }
}
