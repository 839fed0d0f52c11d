//! Compiles a provisioning scenario into a [`TabularMdp`] and derives the
//! MDP-optimal and greedy policies over it.
//!
//! A state is a `(configuration, demand level)` pair, laid out
//! configuration-major. Every enumerated configuration is an admissible
//! action target; choosing a configuration is deterministic and all
//! randomness comes from the exogenous demand chain. The reward for moving
//! from `c` to `c'` while demand goes from `d` to `d'` is
//!
//! ```text
//! max_resources − α·(r(c') − r(c)) − β·migrations(c, c') − penalty·[c' cannot serve d']
//! ```

use thiserror::Error;

use crate::cloud::{
    enumerate_configurations, feasible_at, migration_count, total_allocated, CloudError,
    Configuration, DemandModel, Topology, DEFAULT_CONFIGURATION_CAP,
};
use crate::mdp::{
    policy_evaluation, policy_iteration_with, Action, MdpError, Outcome, Policy,
    PolicyIterationOptions, TabularMdp, ValueFunction,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("discount {0} outside [0, 1)")]
    BadDiscount(f64),
    #[error("reward parameter {field} must be finite and non-negative, got {value}")]
    BadReward { field: &'static str, value: f64 },
    #[error("scenario infeasible for level {0}")]
    InfeasibleLevel(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    pub max_resources: f64,
    /// Weight on the allocation delta `r_next − r_current`.
    pub alpha: f64,
    /// Weight on migrated VM units.
    pub beta: f64,
    /// Charged when the chosen configuration cannot serve the next demand.
    pub violation_penalty: f64,
}

impl RewardParams {
    /// `max_resources − (r_next − r_current)`, nothing else.
    pub fn paper_literal(max_resources: f64) -> Self {
        Self {
            max_resources,
            alpha: 1.0,
            beta: 0.0,
            violation_penalty: 0.0,
        }
    }

    pub fn reward(&self, from_total: u64, to_total: u64, migrations: u64, feasible: bool) -> f64 {
        let delta = to_total as f64 - from_total as f64;
        let penalty = if feasible {
            0.0
        } else {
            self.violation_penalty
        };
        self.max_resources - self.alpha * delta - self.beta * migrations as f64 - penalty
    }

    fn validate(&self) -> Result<(), SpecError> {
        for (field, value) in [
            ("max_resources", self.max_resources),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("violation_penalty", self.violation_penalty),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(SpecError::BadReward { field, value });
            }
        }
        Ok(())
    }
}

/// Topology, demand chain, reward weights and discount of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ProvisioningSpec {
    topology: Topology,
    demand_model: DemandModel,
    granularity: u32,
    reward: RewardParams,
    discount: f64,
}

impl ProvisioningSpec {
    pub fn new(
        topology: Topology,
        demand_model: DemandModel,
        granularity: u32,
        reward: RewardParams,
        discount: f64,
    ) -> Result<Self, SpecError> {
        if !(0.0..1.0).contains(&discount) {
            return Err(SpecError::BadDiscount(discount));
        }
        reward.validate()?;
        if granularity == 0 {
            return Err(CloudError::ZeroGranularity.into());
        }
        if let Some(node) = topology
            .nodes()
            .iter()
            .find(|n| n.capacity % granularity != 0)
        {
            return Err(CloudError::GranularityMismatch {
                node: node.id.clone(),
                capacity: node.capacity,
                granularity,
            }
            .into());
        }
        // The full-capacity configuration is always on the grid, so a level is
        // coverable iff it fits in the total capacity.
        let capacity = topology.total_capacity();
        if let Some(level) = demand_model
            .levels()
            .iter()
            .find(|l| u64::from(l.required_units) > capacity)
        {
            return Err(SpecError::InfeasibleLevel(level.id.clone()));
        }
        Ok(Self {
            topology,
            demand_model,
            granularity,
            reward,
            discount,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn demand_model(&self) -> &DemandModel {
        &self.demand_model
    }

    pub fn granularity(&self) -> u32 {
        self.granularity
    }

    pub fn reward(&self) -> &RewardParams {
        &self.reward
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self, SpecError> {
        Self::new(
            self.topology.clone(),
            self.demand_model.clone(),
            self.granularity,
            self.reward,
            discount,
        )
    }

    /// Non-fatal concerns about the parameters.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let floor = self.reward.alpha * self.topology.total_capacity() as f64;
        if self.reward.max_resources < floor {
            out.push(format!(
                "max_resources {} is below alpha × total capacity ({floor}); some rewards will be negative",
                self.reward.max_resources
            ));
        }
        out
    }
}

/// Bijection between state ids and `(configuration index, demand level index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateIndex {
    configurations: Vec<Configuration>,
    num_levels: usize,
}

impl StateIndex {
    pub fn new(configurations: Vec<Configuration>, num_levels: usize) -> Self {
        Self {
            configurations,
            num_levels,
        }
    }

    pub fn len(&self) -> usize {
        self.configurations.len() * self.num_levels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_configurations(&self) -> usize {
        self.configurations.len()
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn configurations(&self) -> &[Configuration] {
        &self.configurations
    }

    pub fn configuration(&self, index: usize) -> &Configuration {
        &self.configurations[index]
    }

    /// Position of `config` in the enumeration, if it is on the grid.
    pub fn configuration_index(&self, config: &Configuration) -> Option<usize> {
        self.configurations.binary_search(config).ok()
    }

    pub fn state(&self, config: usize, level: usize) -> usize {
        debug_assert!(config < self.configurations.len() && level < self.num_levels);
        config * self.num_levels + level
    }

    pub fn pair(&self, state: usize) -> (usize, usize) {
        debug_assert!(state < self.len());
        (state / self.num_levels, state % self.num_levels)
    }
}

pub fn build_state_index(spec: &ProvisioningSpec) -> Result<StateIndex, SpecError> {
    build_state_index_capped(spec, DEFAULT_CONFIGURATION_CAP)
}

pub fn build_state_index_capped(
    spec: &ProvisioningSpec,
    cap: usize,
) -> Result<StateIndex, SpecError> {
    let configurations = enumerate_configurations(&spec.topology, spec.granularity, cap)?;
    Ok(StateIndex::new(configurations, spec.demand_model.len()))
}

/// Compiles the scenario into an MDP over `(configuration, demand)` states.
pub fn build_mdp(spec: &ProvisioningSpec) -> Result<(TabularMdp, StateIndex), SpecError> {
    let index = build_state_index(spec)?;
    let model = &spec.demand_model;
    let configs = index.configurations();
    let totals: Vec<u64> = configs.iter().map(total_allocated).collect();

    let mut actions = Vec::with_capacity(index.len());
    for (from, from_config) in configs.iter().enumerate() {
        for level in 0..model.len() {
            let row = model.row(level);
            let state_actions = configs
                .iter()
                .enumerate()
                .map(|(to, to_config)| {
                    let migrations = migration_count(from_config, to_config);
                    let outcomes = row
                        .iter()
                        .enumerate()
                        .filter(|&(_, &p)| p > 0.0)
                        .map(|(next_level, &p)| {
                            let feasible = feasible_at(to_config, next_level, model);
                            let reward =
                                spec.reward
                                    .reward(totals[from], totals[to], migrations, feasible);
                            Outcome::new(index.state(to, next_level), p, reward)
                        })
                        .collect();
                    Action::new(to, outcomes)
                })
                .collect();
            actions.push(state_actions);
        }
    }

    let mdp = TabularMdp::new(index.len(), actions, spec.discount)?;
    Ok((mdp, index))
}

/// The myopic baseline: cover the current demand with the fewest units,
/// then the fewest migrations, then the lowest configuration index.
/// It never consults the demand transition matrix.
pub fn greedy_policy(spec: &ProvisioningSpec, index: &StateIndex) -> Policy {
    let model = &spec.demand_model;
    let configs = index.configurations();
    let action_of = (0..index.len())
        .map(|state| {
            let (from, level) = index.pair(state);
            configs
                .iter()
                .enumerate()
                .filter(|(_, c)| feasible_at(c, level, model))
                .min_by_key(|&(i, c)| (total_allocated(c), migration_count(&configs[from], c), i))
                .map(|(i, _)| i)
                .expect("every demand level has a feasible configuration")
        })
        .collect();
    Policy::new(action_of)
}

/// Optimal policy for a scenario, with the compiled MDP it was solved on.
#[derive(Debug, Clone)]
pub struct SolvedProvisioning {
    pub mdp: TabularMdp,
    pub index: StateIndex,
    pub policy: Policy,
    pub values: ValueFunction,
    pub iterations: usize,
}

pub fn mdp_policy(spec: &ProvisioningSpec) -> Result<SolvedProvisioning, SpecError> {
    mdp_policy_with(spec, &PolicyIterationOptions::default())
}

pub fn mdp_policy_with(
    spec: &ProvisioningSpec,
    options: &PolicyIterationOptions,
) -> Result<SolvedProvisioning, SpecError> {
    let (mdp, index) = build_mdp(spec)?;
    let result = policy_iteration_with(&mdp, None, options, |_, _, _| {})?;
    Ok(SolvedProvisioning {
        mdp,
        index,
        policy: result.policy,
        values: result.values,
        iterations: result.iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyComparison {
    /// `V_a(s) − V_b(s)` per state.
    pub differences: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn compare_policies(
    mdp: &TabularMdp,
    a: &Policy,
    b: &Policy,
    tolerance: f64,
) -> Result<PolicyComparison, MdpError> {
    let va = policy_evaluation(mdp, a, tolerance)?;
    let vb = policy_evaluation(mdp, b, tolerance)?;
    let differences: Vec<f64> = va
        .as_slice()
        .iter()
        .zip(vb.as_slice())
        .map(|(x, y)| x - y)
        .collect();
    let min = differences.iter().copied().fold(f64::INFINITY, f64::min);
    let max = differences
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mean = differences.iter().sum::<f64>() / differences.len() as f64;
    Ok(PolicyComparison {
        differences,
        min,
        max,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{DemandLevel, Node};
    use crate::scenarios;

    fn spec_with(
        caps: &[u32],
        levels: Vec<DemandLevel>,
        matrix: Vec<Vec<f64>>,
        reward: RewardParams,
    ) -> ProvisioningSpec {
        ProvisioningSpec::new(
            Topology::with_capacities(caps).unwrap(),
            DemandModel::new(levels, matrix).unwrap(),
            1,
            reward,
            0.95,
        )
        .unwrap()
    }

    #[test]
    fn state_index_layout() {
        let t = Topology::with_capacities(&[1, 1]).unwrap();
        let configs = enumerate_configurations(&t, 1, 100).unwrap();
        let index = StateIndex::new(configs, 2);
        assert_eq!(index.len(), 8);
        assert_eq!(index.pair(5), (2, 1));
        assert_eq!(index.state(2, 1), 5);
        for s in 0..index.len() {
            let (c, d) = index.pair(s);
            assert_eq!(index.state(c, d), s);
        }
        for c in 0..4 {
            for d in 0..2 {
                assert_eq!(index.pair(index.state(c, d)), (c, d));
            }
            assert_eq!(index.configuration_index(index.configuration(c)), Some(c));
        }
    }

    #[test]
    fn fig4_state_count() {
        let index = build_state_index(&scenarios::fig4()).unwrap();
        assert_eq!(index.num_configurations(), 27);
        assert_eq!(index.len(), 81);
    }

    #[test]
    fn spec_rejects_bad_inputs() {
        let t = || Topology::with_capacities(&[2]).unwrap();
        let m = || {
            DemandModel::sticky(
                vec![DemandLevel::new("a", 1), DemandLevel::new("b", 3)],
                0.5,
            )
            .unwrap()
        };
        assert_eq!(
            ProvisioningSpec::new(t(), m(), 1, RewardParams::paper_literal(5.0), 0.9),
            Err(SpecError::InfeasibleLevel("b".into()))
        );
        let m2 = || DemandModel::sticky(vec![DemandLevel::new("a", 1)], 0.5).unwrap();
        assert_eq!(
            ProvisioningSpec::new(t(), m2(), 1, RewardParams::paper_literal(5.0), 1.0),
            Err(SpecError::BadDiscount(1.0))
        );
        assert!(matches!(
            ProvisioningSpec::new(
                t(),
                m2(),
                1,
                RewardParams {
                    beta: -1.0,
                    ..RewardParams::paper_literal(5.0)
                },
                0.5
            ),
            Err(SpecError::BadReward { field: "beta", .. })
        ));
        assert!(matches!(
            ProvisioningSpec::new(t(), m2(), 3, RewardParams::paper_literal(5.0), 0.5),
            Err(SpecError::Cloud(CloudError::GranularityMismatch { .. }))
        ));
    }

    #[test]
    fn max_resources_warning() {
        let spec = spec_with(
            &[2, 2],
            vec![DemandLevel::new("a", 1)],
            vec![vec![1.0]],
            RewardParams::paper_literal(3.0),
        );
        assert_eq!(spec.warnings().len(), 1);
        assert!(scenarios::fig4().warnings().is_empty());
    }

    #[test]
    fn uniform_demand_splits_each_action_evenly() {
        let spec = spec_with(
            &[2],
            vec![DemandLevel::new("lo", 1), DemandLevel::new("hi", 2)],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            RewardParams::paper_literal(10.0),
        );
        let (mdp, index) = build_mdp(&spec).unwrap();
        assert!(mdp.validate().is_empty());
        let s0 = index.state(0, 0);
        for target in 1..=2 {
            let action = mdp.action(s0, target).unwrap();
            let mut next: Vec<(usize, f64)> = action
                .outcomes
                .iter()
                .map(|o| (o.next, o.probability))
                .collect();
            next.sort_by_key(|&(n, _)| n);
            assert_eq!(
                next,
                vec![(index.state(target, 0), 0.5), (index.state(target, 1), 0.5)]
            );
        }
    }

    #[test]
    fn single_level_two_successors_recover_half_probabilities() {
        // With one demand level every action is deterministic; choosing
        // uniformly between the two successors of c0 gives 0.5 to each.
        let spec = spec_with(
            &[2],
            vec![DemandLevel::new("d", 1)],
            vec![vec![1.0]],
            RewardParams::paper_literal(10.0),
        );
        let (mdp, index) = build_mdp(&spec).unwrap();
        let s0 = index.state(0, 0);
        let successors = [1usize, 2];
        let mut induced = vec![0.0; index.len()];
        for &target in &successors {
            for o in &mdp.action(s0, target).unwrap().outcomes {
                induced[o.next] += o.probability / successors.len() as f64;
            }
        }
        assert_eq!(induced[index.state(1, 0)], 0.5);
        assert_eq!(induced[index.state(2, 0)], 0.5);
    }

    #[test]
    fn reward_formula() {
        let params = RewardParams::paper_literal(100.0);
        assert_eq!(params.reward(20, 20, 0, true), 100.0);
        // Independent scalar evaluation: 100 − 1·(35 − 20) − 0·m − 0.
        let expected = 100.0 - (35.0 - 20.0);
        assert_eq!(params.reward(20, 35, 15, true), expected);
        assert_eq!(expected, 85.0);
        let full = RewardParams {
            max_resources: 10.0,
            alpha: 1.0,
            beta: 2.0,
            violation_penalty: 20.0,
        };
        assert_eq!(full.reward(1, 3, 2, false), 10.0 - 2.0 - 4.0 - 20.0);
    }

    #[test]
    fn self_targeting_reward_is_max_resources() {
        let spec = scenarios::fig4();
        let spec = ProvisioningSpec::new(
            spec.topology().clone(),
            spec.demand_model().clone(),
            1,
            RewardParams::paper_literal(10.0),
            0.95,
        )
        .unwrap();
        let (mdp, index) = build_mdp(&spec).unwrap();
        for c in 0..index.num_configurations() {
            let s = index.state(c, 1);
            assert!(mdp
                .action(s, c)
                .unwrap()
                .outcomes
                .iter()
                .all(|o| o.reward == 10.0));
        }
    }

    #[test]
    fn greedy_targets_empty_configuration_for_zero_demand() {
        let spec = spec_with(
            &[2, 1],
            vec![DemandLevel::new("idle", 0)],
            vec![vec![1.0]],
            RewardParams::paper_literal(5.0),
        );
        let index = build_state_index(&spec).unwrap();
        let greedy = greedy_policy(&spec, &index);
        assert!(greedy
            .as_slice()
            .iter()
            .all(|&a| total_allocated(index.configuration(a)) == 0));
    }

    #[test]
    fn greedy_stays_when_current_is_a_minimal_choice() {
        // Two nodes of capacity 1, demand 1: minimal configurations are
        // [0,1] (index 1) and [1,0] (index 2). From [1,0] the greedy stays.
        let spec = spec_with(
            &[1, 1],
            vec![DemandLevel::new("d", 1)],
            vec![vec![1.0]],
            RewardParams::paper_literal(5.0),
        );
        let index = build_state_index(&spec).unwrap();
        let t = spec.topology();
        let current = index
            .configuration_index(&Configuration::from_entries(t, &[("rsu1", 1)]).unwrap())
            .unwrap();
        assert_eq!(current, 2);
        let greedy = greedy_policy(&spec, &index);
        assert_eq!(greedy.action(index.state(current, 0)), current);
        // From the empty configuration both cost one migration; lowest index wins.
        assert_eq!(greedy.action(index.state(0, 0)), 1);
        // From [1,1] neither minimal choice places a unit; lowest index wins.
        assert_eq!(greedy.action(index.state(3, 0)), 1);
    }

    #[test]
    fn greedy_is_always_feasible_for_current_demand() {
        let spec = scenarios::fig4();
        let index = build_state_index(&spec).unwrap();
        let greedy = greedy_policy(&spec, &index);
        for s in 0..index.len() {
            let (_, level) = index.pair(s);
            assert!(feasible_at(
                index.configuration(greedy.action(s)),
                level,
                spec.demand_model()
            ));
        }
    }

    #[test]
    fn constant_reward_returns_tie_break_default() {
        let base = scenarios::fig4();
        let spec = ProvisioningSpec::new(
            base.topology().clone(),
            base.demand_model().clone(),
            1,
            RewardParams {
                max_resources: 10.0,
                alpha: 0.0,
                beta: 0.0,
                violation_penalty: 0.0,
            },
            0.95,
        )
        .unwrap();
        let solved = mdp_policy(&spec).unwrap();
        assert_eq!(solved.iterations, 1);
        assert!(solved.policy.as_slice().iter().all(|&a| a == 0));
        assert!(solved
            .values
            .as_slice()
            .iter()
            .all(|v| (v - 200.0).abs() < 1e-9));
    }

    #[test]
    fn identical_policies_compare_to_zero() {
        let spec = scenarios::fig4();
        let (mdp, index) = build_mdp(&spec).unwrap();
        let greedy = greedy_policy(&spec, &index);
        let cmp = compare_policies(&mdp, &greedy, &greedy, 1e-9).unwrap();
        assert!(cmp.differences.iter().all(|&d| d == 0.0));
        assert_eq!((cmp.min, cmp.max, cmp.mean), (0.0, 0.0, 0.0));
    }

    #[test]
    fn nodes_are_named_in_order() {
        let spec = scenarios::fig4();
        let ids: Vec<&str> = spec
            .topology()
            .nodes()
            .iter()
            .map(|n: &Node| n.id.as_str())
            .collect();
        assert_eq!(ids, ["rsu1", "rsu2", "rsu3"]);
    }
}
