use std::collections::HashSet;

use gatetrim_core::decompose::{random_target, two_level_decompose};
use gatetrim_core::numerics::random_unitary;
use gatetrim_core::optimizer::{InitStrategy, OptimizerConfig, OptimizerState, PenaltyTarget, Selection, Unitarize};
use gatetrim_core::Position;
use proptest::prelude::*;

fn config() -> impl Strategy<Value = OptimizerConfig> {
    (
        prop_oneof![Just(Selection::Cyclic), Just(Selection::Random)],
        prop_oneof![Just(InitStrategy::RandomSubset), Just(InitStrategy::Prefix), Just(InitStrategy::Identity)],
        prop_oneof![Just(Unitarize::PenaltyOnly), Just(Unitarize::ProjectEachUpdate), Just(Unitarize::ProjectAtEnd)],
        prop_oneof![Just(PenaltyTarget::NearestUnitary), Just(PenaltyTarget::Zero)],
        prop_oneof![Just(0.0), Just(1e-3), Just(0.1), Just(10.0)],
        any::<u64>(),
    )
        .prop_map(|(selection, init, unitarize, penalty_target, lambda0, seed)| OptimizerConfig {
            selection,
            init,
            unitarize,
            penalty_target,
            lambda0,
            lambda_min: 0.0,
            seed,
            ..OptimizerConfig::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_update_descends_and_keeps_positions_distinct(
        cfg in config(),
        n in 2usize..=3,
        m_frac in 0.1f64..1.0,
        target_seed in any::<u64>(),
    ) {
        let d = 1usize << n;
        let count = Position::count(d);
        let m = ((m_frac * count as f64).ceil() as usize).clamp(1, count);
        let cfg = OptimizerConfig { m_gates: m, ..cfg };
        let (u, _) = random_target(n, count, target_seed).unwrap();
        let mut state = OptimizerState::new(&u, &cfg).unwrap();
        for _ in 0..3 * m {
            let rec = state.step().unwrap();
            prop_assert!(rec.penalized_objective <= rec.penalized_objective_before + 1e-10,
                "objective rose from {} to {}", rec.penalized_objective_before, rec.penalized_objective);
            prop_assert!(rec.unitarity_residual_of_gate.is_finite());
            prop_assert!(rec.loss.is_finite());
            let positions: HashSet<Position> = state.circuit().gates().iter().map(|g| g.position()).collect();
            prop_assert_eq!(positions.len(), m);
            if cfg.unitarize == Unitarize::ProjectEachUpdate {
                prop_assert!(state.circuit().matrix().unitarity_residual() < 1e-10);
            }
        }
    }

    #[test]
    fn decomposition_is_exact_and_within_the_gate_bound(n in 1usize..=3, seed in any::<u64>()) {
        let d = 1usize << n;
        let u = random_unitary(d, seed).unwrap();
        let c = two_level_decompose(&u, 1e-8).unwrap();
        prop_assert!(c.len() <= d * (d - 1) / 2);
        prop_assert!(c.matrix().sub(&u).unwrap().frobenius_norm() < 1e-9);
        for g in c.gates() {
            prop_assert!(g.unitarity_residual() < 1e-12);
        }
    }

    #[test]
    fn random_targets_use_distinct_positions(n in 1usize..=3, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let d = 1usize << n;
        let k = ((frac * Position::count(d) as f64) as usize).max(1);
        let (u, c) = random_target(n, k, seed).unwrap();
        let positions: HashSet<Position> = c.gates().iter().map(|g| g.position()).collect();
        prop_assert_eq!(positions.len(), k);
        prop_assert!(u.unitarity_residual() < 1e-12);
    }
}
