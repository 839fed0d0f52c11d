//! Static RSU network, VM configurations over it and the demand chain.

use std::collections::HashSet;

use thiserror::Error;

/// Row-sum tolerance for the demand transition matrix.
pub const DEMAND_ROW_TOLERANCE: f64 = 1e-12;

/// Default ceiling on the number of enumerated configurations.
pub const DEFAULT_CONFIGURATION_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CloudError {
    #[error("topology has no nodes")]
    EmptyTopology,
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("unknown node id {0:?}")]
    UnknownNode(String),
    #[error("node {node:?} leases {units} units but has capacity {capacity}")]
    OverCapacity {
        node: String,
        units: u32,
        capacity: u32,
    },
    #[error("granularity must be at least 1")]
    ZeroGranularity,
    #[error("granularity {granularity} does not divide capacity {capacity} of node {node:?}")]
    GranularityMismatch {
        node: String,
        capacity: u32,
        granularity: u32,
    },
    #[error("state space too large: more than {cap} configurations")]
    StateSpaceTooLarge { cap: usize },
    #[error("demand model has no levels")]
    NoLevels,
    #[error("duplicate demand level id {0:?}")]
    DuplicateLevel(String),
    #[error("unknown demand level {0:?}")]
    UnknownLevel(String),
    #[error("transition matrix has {rows} rows for {levels} levels")]
    MatrixShape { rows: usize, levels: usize },
    #[error("transition matrix row {row} has {len} entries for {levels} levels")]
    RowShape {
        row: usize,
        len: usize,
        levels: usize,
    },
    #[error("transition matrix row {row} has an entry outside [0, 1]")]
    BadProbability { row: usize },
    #[error("transition matrix row {row} sums to {sum}, not 1")]
    RowSum { row: usize, sum: f64 },
    #[error("no demand level is satisfiable with total capacity {capacity}")]
    Unsatisfiable { capacity: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    /// VM units this RSU can host.
    pub capacity: u32,
}

impl Node {
    pub fn new(id: impl Into<String>, capacity: u32) -> Self {
        Self {
            id: id.into(),
            capacity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    nodes: Vec<Node>,
}

impl Topology {
    pub fn new(nodes: Vec<Node>) -> Result<Self, CloudError> {
        if nodes.is_empty() {
            return Err(CloudError::EmptyTopology);
        }
        let mut seen = HashSet::new();
        for node in &nodes {
            if !seen.insert(node.id.as_str()) {
                return Err(CloudError::DuplicateNode(node.id.clone()));
            }
        }
        Ok(Self { nodes })
    }

    /// Convenience constructor naming nodes `rsu1`, `rsu2`, ...
    pub fn with_capacities(capacities: &[u32]) -> Result<Self, CloudError> {
        Self::new(
            capacities
                .iter()
                .enumerate()
                .map(|(i, &c)| Node::new(format!("rsu{}", i + 1), c))
                .collect(),
        )
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn total_capacity(&self) -> u64 {
        self.nodes.iter().map(|n| u64::from(n.capacity)).sum()
    }
}

/// Snapshot of leased VM units, one entry per topology node (in node order).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    units: Vec<u32>,
}

impl Configuration {
    /// Nothing leased anywhere.
    pub fn empty(topology: &Topology) -> Self {
        Self {
            units: vec![0; topology.nodes().len()],
        }
    }

    /// Builds a configuration from `(node id, units)` entries; omitted nodes lease 0.
    pub fn from_entries(topology: &Topology, entries: &[(&str, u32)]) -> Result<Self, CloudError> {
        let mut units = vec![0; topology.nodes().len()];
        for &(id, leased) in entries {
            let i = topology
                .node_index(id)
                .ok_or_else(|| CloudError::UnknownNode(id.to_owned()))?;
            units[i] = leased;
        }
        Self::from_units(topology, units)
    }

    /// Builds a configuration from per-node units in topology order.
    pub fn from_units(topology: &Topology, units: Vec<u32>) -> Result<Self, CloudError> {
        assert_eq!(units.len(), topology.nodes().len(), "one entry per node");
        for (node, &leased) in topology.nodes().iter().zip(&units) {
            if leased > node.capacity {
                return Err(CloudError::OverCapacity {
                    node: node.id.clone(),
                    units: leased,
                    capacity: node.capacity,
                });
            }
        }
        Ok(Self { units })
    }

    pub fn units(&self) -> &[u32] {
        &self.units
    }

    /// Non-zero `(node id, units)` entries.
    pub fn entries<'a>(
        &'a self,
        topology: &'a Topology,
    ) -> impl Iterator<Item = (&'a str, u32)> + 'a {
        topology
            .nodes()
            .iter()
            .zip(&self.units)
            .filter(|(_, &u)| u > 0)
            .map(|(n, &u)| (n.id.as_str(), u))
    }
}

pub fn total_allocated(config: &Configuration) -> u64 {
    config.units.iter().map(|&u| u64::from(u)).sum()
}

/// VM units newly placed when moving from `from` to `to`.
///
/// Only the positive part per node is charged; teardown is free.
pub fn migration_count(from: &Configuration, to: &Configuration) -> u64 {
    assert_eq!(
        from.units.len(),
        to.units.len(),
        "configurations over different topologies"
    );
    from.units
        .iter()
        .zip(&to.units)
        .map(|(&a, &b)| u64::from(b.saturating_sub(a)))
        .sum()
}

/// Every configuration whose per-node lease is a multiple of `granularity`,
/// in lexicographic order over the node list (first node most significant).
pub fn enumerate_configurations(
    topology: &Topology,
    granularity: u32,
    cap: usize,
) -> Result<Vec<Configuration>, CloudError> {
    if granularity == 0 {
        return Err(CloudError::ZeroGranularity);
    }
    let mut steps = Vec::with_capacity(topology.nodes().len());
    for node in topology.nodes() {
        if node.capacity % granularity != 0 {
            return Err(CloudError::GranularityMismatch {
                node: node.id.clone(),
                capacity: node.capacity,
                granularity,
            });
        }
        steps.push(node.capacity / granularity + 1);
    }
    let count = steps
        .iter()
        .try_fold(1usize, |acc, &s| acc.checked_mul(s as usize))
        .filter(|&c| c <= cap)
        .ok_or(CloudError::StateSpaceTooLarge { cap })?;

    let mut out = Vec::with_capacity(count);
    let mut digits = vec![0u32; steps.len()];
    for _ in 0..count {
        out.push(Configuration {
            units: digits.iter().map(|d| d * granularity).collect(),
        });
        for (digit, &limit) in digits.iter_mut().zip(&steps).rev() {
            *digit += 1;
            if *digit < limit {
                break;
            }
            *digit = 0;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandLevel {
    pub id: String,
    pub required_units: u32,
}

impl DemandLevel {
    pub fn new(id: impl Into<String>, required_units: u32) -> Self {
        Self {
            id: id.into(),
            required_units,
        }
    }
}

/// First-order Markov chain over discrete demand levels.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandModel {
    levels: Vec<DemandLevel>,
    transition_matrix: Vec<Vec<f64>>,
}

impl DemandModel {
    pub fn new(
        levels: Vec<DemandLevel>,
        transition_matrix: Vec<Vec<f64>>,
    ) -> Result<Self, CloudError> {
        if levels.is_empty() {
            return Err(CloudError::NoLevels);
        }
        let mut seen = HashSet::new();
        for level in &levels {
            if !seen.insert(level.id.as_str()) {
                return Err(CloudError::DuplicateLevel(level.id.clone()));
            }
        }
        if transition_matrix.len() != levels.len() {
            return Err(CloudError::MatrixShape {
                rows: transition_matrix.len(),
                levels: levels.len(),
            });
        }
        for (row, probs) in transition_matrix.iter().enumerate() {
            if probs.len() != levels.len() {
                return Err(CloudError::RowShape {
                    row,
                    len: probs.len(),
                    levels: levels.len(),
                });
            }
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(CloudError::BadProbability { row });
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > DEMAND_ROW_TOLERANCE {
                return Err(CloudError::RowSum { row, sum });
            }
        }
        Ok(Self {
            levels,
            transition_matrix,
        })
    }

    /// Demand chain that keeps its level with probability `stay` and
    /// otherwise moves to one of the other levels uniformly.
    pub fn sticky(levels: Vec<DemandLevel>, stay: f64) -> Result<Self, CloudError> {
        let n = levels.len();
        let matrix = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if n == 1 {
                            1.0
                        } else if i == j {
                            stay
                        } else {
                            (1.0 - stay) / (n - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(levels, matrix)
    }

    pub fn levels(&self) -> &[DemandLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level_index(&self, id: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.id == id)
    }

    pub fn required_units(&self, level: usize) -> u32 {
        self.levels[level].required_units
    }

    /// `Pr(next | current)` for every next level.
    pub fn row(&self, level: usize) -> &[f64] {
        &self.transition_matrix[level]
    }

    pub fn transition_matrix(&self) -> &[Vec<f64>] {
        &self.transition_matrix
    }

    /// At least one level must be coverable by the whole topology.
    pub fn check_against(&self, topology: &Topology) -> Result<(), CloudError> {
        let capacity = topology.total_capacity();
        if self
            .levels
            .iter()
            .any(|l| u64::from(l.required_units) <= capacity)
        {
            Ok(())
        } else {
            Err(CloudError::Unsatisfiable { capacity })
        }
    }
}

/// Aggregate QoS check: the configuration covers the level's required units.
pub fn is_feasible(
    config: &Configuration,
    level: &str,
    model: &DemandModel,
) -> Result<bool, CloudError> {
    let index = model
        .level_index(level)
        .ok_or_else(|| CloudError::UnknownLevel(level.to_owned()))?;
    Ok(feasible_at(config, index, model))
}

pub(crate) fn feasible_at(config: &Configuration, level: usize, model: &DemandModel) -> bool {
    total_allocated(config) >= u64::from(model.required_units(level))
}
