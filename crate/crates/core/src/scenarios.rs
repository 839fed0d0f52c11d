//! Built-in desk scenarios. Both are also shipped as JSON under `scenarios/`.

use crate::cloud::{DemandLevel, DemandModel, Node, Topology};
use crate::provisioner::{ProvisioningSpec, RewardParams};

/// Reward weights shared by the built-in scenarios.
pub const DESK_REWARD: RewardParams = RewardParams {
    max_resources: 10.0,
    alpha: 1.0,
    beta: 2.0,
    violation_penalty: 20.0,
};

pub const DESK_DISCOUNT: f64 = 0.95;

/// Three RSUs of capacity 2, demand levels low/med/high needing 1/2/4
/// units, and a sticky demand chain (stay 0.6, otherwise move uniformly).
/// 27 configurations × 3 levels = 81 states.
pub fn fig4() -> ProvisioningSpec {
    let topology = Topology::new(vec![
        Node::new("rsu1", 2),
        Node::new("rsu2", 2),
        Node::new("rsu3", 2),
    ])
    .expect("static topology");
    let demand = DemandModel::sticky(
        vec![
            DemandLevel::new("low", 1),
            DemandLevel::new("med", 2),
            DemandLevel::new("high", 4),
        ],
        0.6,
    )
    .expect("static demand chain");
    ProvisioningSpec::new(topology, demand, 1, DESK_REWARD, DESK_DISCOUNT).expect("static scenario")
}

/// The smallest instance with the c0/c1/c2 structure: one RSU of capacity 2
/// gives configurations holding 0, 1 and 2 units. Demand starts at `base`,
/// rises to `risen` (served by c1 or c2) and from there usually escalates to
/// `peak`, which only c2 serves.
pub fn three_configuration() -> ProvisioningSpec {
    let topology = Topology::new(vec![Node::new("rsu1", 2)]).expect("static topology");
    let demand = DemandModel::new(
        vec![
            DemandLevel::new("base", 0),
            DemandLevel::new("risen", 1),
            DemandLevel::new("peak", 2),
        ],
        vec![
            vec![0.6, 0.4, 0.0],
            vec![0.1, 0.3, 0.6],
            vec![0.2, 0.2, 0.6],
        ],
    )
    .expect("static demand chain");
    ProvisioningSpec::new(topology, demand, 1, DESK_REWARD, DESK_DISCOUNT).expect("static scenario")
}
