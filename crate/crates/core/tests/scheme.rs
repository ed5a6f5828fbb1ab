//! Order preservation of the monotone scheme on randomized data.

mod common;

use common::{ordered_trial, Mode};
use hjcell_core::env::benchmarks::{double_well, quadratic_cosine_varying_diffusion};
use proptest::prelude::*;

fn mode() -> impl Strategy<Value = Mode> {
    (1u32..4, -0.15f64..0.15, 0.0f64..6.3)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn ordered_data_stay_ordered(
        theta in -1.5f64..1.5,
        modes in prop::collection::vec(mode(), 1..4),
        lift in prop::collection::vec(mode(), 0..3),
        floor in 0.0f64..0.05,
        nonconvex in any::<bool>(),
    ) {
        let trial = if nonconvex {
            ordered_trial(&double_well(2.0), theta, &modes, &lift, floor, 120)
        } else {
            ordered_trial(&quadratic_cosine_varying_diffusion(0.5), theta, &modes, &lift, floor, 120)
        };
        prop_assert_eq!(trial.steps, 120);
        prop_assert!(trial.monotone);
        prop_assert!(trial.min_gap >= -1e-12, "order lost: {}", trial.min_gap);
    }
}
