//! Seeded epoch-by-epoch simulation of a provisioning policy.
//!
//! At epoch `t` the policy sees `(c_t, d_t)` and commits `c_{t+1}`; only
//! then is `d_{t+1}` revealed, and the epoch counts a violation if `c_{t+1}`
//! cannot serve it. The last epoch is judged against its own demand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cloud::{feasible_at, migration_count, total_allocated, DemandModel};
use crate::mdp::Policy;
use crate::provisioner::{ProvisioningSpec, StateIndex};

/// Recorded in every run so results can be audited.
pub const GENERATOR_NAME: &str = "rand_chacha 0.3 ChaCha8Rng::seed_from_u64";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("trace length must be at least 1")]
    EmptyTrace,
    #[error("unknown demand level {0:?}")]
    UnknownLevel(String),
    #[error("trace entry {epoch} names level {level}, but the model has {levels}")]
    LevelOutOfRange {
        epoch: usize,
        level: usize,
        levels: usize,
    },
    #[error("policy covers {got} states, index has {expected}")]
    PolicyLength { expected: usize, got: usize },
    #[error("policy picks configuration {action} at state {state}, only {configurations} exist")]
    BadAction {
        state: usize,
        action: usize,
        configurations: usize,
    },
    #[error("initial configuration {0} out of range")]
    BadInitialConfig(usize),
    #[error("run {index} has {got} epochs, expected {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandTrace {
    pub seed: u64,
    /// Demand level index per epoch.
    pub levels: Vec<usize>,
}

impl DemandTrace {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

fn sample_row(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (next, &p) in row.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return next;
        }
    }
    // Rounding left `u` above the accumulated mass.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Samples `length` epochs of the demand chain starting at `initial_level`.
pub fn generate_trace(
    model: &DemandModel,
    length: usize,
    seed: u64,
    initial_level: &str,
) -> Result<DemandTrace, SimError> {
    if length == 0 {
        return Err(SimError::EmptyTrace);
    }
    let mut level = model
        .level_index(initial_level)
        .ok_or_else(|| SimError::UnknownLevel(initial_level.to_owned()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels = Vec::with_capacity(length);
    levels.push(level);
    for _ in 1..length {
        level = sample_row(model.row(level), &mut rng);
        levels.push(level);
    }
    Ok(DemandTrace { seed, levels })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub demand_level: usize,
    /// Configuration committed at this epoch.
    pub config: usize,
    pub allocated: u64,
    pub migrations: u64,
    pub violation: bool,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub policy: String,
    pub seed: u64,
    pub generator: &'static str,
    pub records: Vec<EpochRecord>,
    pub allocated_unit_epochs: u64,
    pub migrations: u64,
    pub violations: u64,
    /// `Σ_t γ^t · reward_t` over the run.
    pub discounted_reward: f64,
}

impl RunResult {
    pub fn epochs(&self) -> usize {
        self.records.len()
    }
}

/// Runs `policy` over `trace` from configuration `initial_config`.
pub fn simulate(
    policy: &Policy,
    label: &str,
    index: &StateIndex,
    spec: &ProvisioningSpec,
    trace: &DemandTrace,
    initial_config: usize,
) -> Result<RunResult, SimError> {
    if trace.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    if policy.len() != index.len() {
        return Err(SimError::PolicyLength {
            expected: index.len(),
            got: policy.len(),
        });
    }
    let configurations = index.num_configurations();
    if let Some((state, &action)) = policy
        .as_slice()
        .iter()
        .enumerate()
        .find(|(_, &a)| a >= configurations)
    {
        return Err(SimError::BadAction {
            state,
            action,
            configurations,
        });
    }
    if initial_config >= configurations {
        return Err(SimError::BadInitialConfig(initial_config));
    }
    let model = spec.demand_model();
    if let Some((epoch, &level)) = trace
        .levels
        .iter()
        .enumerate()
        .find(|(_, &l)| l >= model.len())
    {
        return Err(SimError::LevelOutOfRange {
            epoch,
            level,
            levels: model.len(),
        });
    }

    let reward = spec.reward();
    let mut current = initial_config;
    let mut weight = 1.0;
    let mut result = RunResult {
        policy: label.to_owned(),
        seed: trace.seed,
        generator: GENERATOR_NAME,
        records: Vec::with_capacity(trace.len()),
        allocated_unit_epochs: 0,
        migrations: 0,
        violations: 0,
        discounted_reward: 0.0,
    };
    for (epoch, &level) in trace.levels.iter().enumerate() {
        let next = policy.action(index.state(current, level));
        let realized = trace.levels.get(epoch + 1).copied().unwrap_or(level);
        let from = index.configuration(current);
        let to = index.configuration(next);
        let allocated = total_allocated(to);
        let migrations = migration_count(from, to);
        let violation = !feasible_at(to, realized, model);
        let r = reward.reward(total_allocated(from), allocated, migrations, !violation);

        result.allocated_unit_epochs += allocated;
        result.migrations += migrations;
        result.violations += u64::from(violation);
        result.discounted_reward += weight * r;
        weight *= spec.discount();
        result.records.push(EpochRecord {
            epoch,
            demand_level: level,
            config: next,
            allocated,
            migrations,
            violation,
            reward: r,
        });
        current = next;
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub seed: u64,
    pub cumulative_migrations: u64,
    pub allocated_unit_epochs: u64,
    pub mean_allocated: f64,
    pub violations: u64,
    pub discounted_reward: f64,
}

/// Per-epoch running totals of one run, ready for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeSeries {
    pub policy: String,
    pub seed: u64,
    pub allocated: Vec<u64>,
    pub cumulative_migrations: Vec<u64>,
    pub cumulative_violations: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub epochs: usize,
    pub rows: Vec<SummaryRow>,
    pub series: Vec<CumulativeSeries>,
}

fn running_sum(values: impl Iterator<Item = u64>) -> Vec<u64> {
    values
        .scan(0u64, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Builds the comparison table and cumulative series for runs over one trace length.
pub fn summarize(results: &[RunResult]) -> Result<Summary, SimError> {
    let epochs = results.first().map_or(0, RunResult::epochs);
    if let Some((index, r)) = results
        .iter()
        .enumerate()
        .find(|(_, r)| r.epochs() != epochs)
    {
        return Err(SimError::LengthMismatch {
            index,
            expected: epochs,
            got: r.epochs(),
        });
    }
    let rows = results
        .iter()
        .map(|r| SummaryRow {
            policy: r.policy.clone(),
            seed: r.seed,
            cumulative_migrations: r.migrations,
            allocated_unit_epochs: r.allocated_unit_epochs,
            mean_allocated: r.allocated_unit_epochs as f64 / r.epochs() as f64,
            violations: r.violations,
            discounted_reward: r.discounted_reward,
        })
        .collect();
    let series = results
        .iter()
        .map(|r| CumulativeSeries {
            policy: r.policy.clone(),
            seed: r.seed,
            allocated: r.records.iter().map(|e| e.allocated).collect(),
            cumulative_migrations: running_sum(r.records.iter().map(|e| e.migrations)),
            cumulative_violations: running_sum(r.records.iter().map(|e| u64::from(e.violation))),
        })
        .collect();
    Ok(Summary {
        epochs,
        rows,
        series,
    })
}
