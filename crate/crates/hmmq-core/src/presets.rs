//! Built-in benchmark instances.

use alloc::vec;

use crate::pomdp::{BehaviorPolicy, PomdpModel};
use crate::theta::StepSchedule;

/// The `paper-s4` benchmark: 4 hidden states observed through 2 symbols,
/// 2 actions, unit reward noise, discount 0.95.
pub fn paper_s4_model() -> PomdpModel {
    let transition = vec![
        // action 0
        0.6, 0.2, 0.1, 0.1, //
        0.2, 0.1, 0.6, 0.1, //
        0.1, 0.1, 0.1, 0.7, //
        0.4, 0.1, 0.1, 0.4, //
        // action 1
        0.1, 0.2, 0.2, 0.5, //
        0.1, 0.6, 0.1, 0.2, //
        0.1, 0.2, 0.6, 0.1, //
        0.1, 0.1, 0.2, 0.6, //
    ];
    let reward_mean = vec![
        0.0, 0.0, -20.0, 20.0, // action 0
        0.0, 0.0, 20.0, -20.0, // action 1
    ];
    let obs = vec![
        0.95, 0.05, //
        0.95, 0.05, //
        0.05, 0.95, //
        0.05, 0.95, //
    ];
    PomdpModel::new(4, 2, 2, transition, reward_mean, obs, 1.0, 0.95)
        .expect("benchmark model is valid")
}

/// The exploration policy paired with [`paper_s4_model`].
pub fn paper_s4_policy() -> BehaviorPolicy {
    BehaviorPolicy::new(2, 2, vec![0.6, 0.4, 0.3, 0.7]).expect("benchmark policy is valid")
}

/// The diminishing step size `eps_n = n^-0.4` paired with the benchmark.
pub fn paper_s4_schedule() -> StepSchedule {
    StepSchedule {
        scale: 1.0,
        exponent: 0.4,
    }
}
