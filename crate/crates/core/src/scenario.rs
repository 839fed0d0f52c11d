//! JSON scenario files.
//!
//! ```json
//! {
//!   "nodes": [{"id": "rsu1", "capacity": 2}],
//!   "granularity": 1,
//!   "demand": {
//!     "levels": [{"id": "low", "required_units": 1}],
//!     "transition_matrix": [[1.0]]
//!   },
//!   "reward": {"max_resources": 10, "alpha": 1, "beta": 2, "violation_penalty": 20},
//!   "discount": 0.95
//! }
//! ```
//!
//! Unknown keys are rejected. Every semantic problem is reported with the
//! JSON path it was found at.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cloud::{
    DemandLevel, DemandModel, Node, Topology, DEFAULT_CONFIGURATION_CAP, DEMAND_ROW_TOLERANCE,
};
use crate::provisioner::{ProvisioningSpec, RewardParams};

/// Row-sum tolerance accepted in scenario files. Rows within it are
/// renormalized before the demand model is built.
pub const FILE_ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub nodes: Vec<NodeEntry>,
    pub granularity: u32,
    pub demand: DemandEntry,
    pub reward: RewardEntry,
    pub discount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: String,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandEntry {
    pub levels: Vec<LevelEntry>,
    pub transition_matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelEntry {
    pub id: String,
    pub required_units: u32,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardEntry {
    pub max_resources: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub violation_penalty: f64,
}

/// One semantic problem and where it was found.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("syntax error at {path}: {message}")]
    Syntax { path: String, message: String },
    #[error("invalid scenario: {}", join(.0))]
    Invalid(Vec<Violation>),
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl ScenarioError {
    pub fn is_io(&self) -> bool {
        matches!(self, Self::Io { .. })
    }
}

pub fn load_scenario(path: &Path) -> Result<ProvisioningSpec, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<ProvisioningSpec, ScenarioError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let file: ScenarioFile =
        serde_path_to_error::deserialize(&mut de).map_err(|e| ScenarioError::Syntax {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    de.end().map_err(|e| ScenarioError::Syntax {
        path: ".".into(),
        message: e.to_string(),
    })?;
    file.into_spec()
}

impl ScenarioFile {
    pub fn from_spec(spec: &ProvisioningSpec) -> Self {
        let model = spec.demand_model();
        let reward = spec.reward();
        Self {
            nodes: spec
                .topology()
                .nodes()
                .iter()
                .map(|n| NodeEntry {
                    id: n.id.clone(),
                    capacity: n.capacity,
                })
                .collect(),
            granularity: spec.granularity(),
            demand: DemandEntry {
                levels: model
                    .levels()
                    .iter()
                    .map(|l| LevelEntry {
                        id: l.id.clone(),
                        required_units: l.required_units,
                    })
                    .collect(),
                transition_matrix: model.transition_matrix().to_vec(),
            },
            reward: RewardEntry {
                max_resources: reward.max_resources,
                alpha: reward.alpha,
                beta: reward.beta,
                violation_penalty: reward.violation_penalty,
            },
            discount: spec.discount(),
        }
    }

    /// Lists every invariant the file breaks.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();

        if self.nodes.is_empty() {
            out.push(Violation::new("nodes", "at least one node is required"));
        }
        let mut ids = HashSet::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if !ids.insert(node.id.as_str()) {
                out.push(Violation::new(
                    format!("nodes[{i}].id"),
                    format!("duplicate node id {:?}", node.id),
                ));
            }
            if self.granularity > 0 && node.capacity % self.granularity != 0 {
                out.push(Violation::new(
                    format!("nodes[{i}].capacity"),
                    format!(
                        "capacity {} is not a multiple of granularity {}",
                        node.capacity, self.granularity
                    ),
                ));
            }
        }
        if self.granularity == 0 {
            out.push(Violation::new(
                "granularity",
                "granularity must be at least 1",
            ));
        } else {
            let count = self.nodes.iter().try_fold(1usize, |acc, n| {
                acc.checked_mul((n.capacity / self.granularity) as usize + 1)
            });
            if count.is_none_or(|c| c > DEFAULT_CONFIGURATION_CAP) {
                out.push(Violation::new(
                    "nodes",
                    format!("state space too large: more than {DEFAULT_CONFIGURATION_CAP} configurations"),
                ));
            }
        }

        let levels = &self.demand.levels;
        if levels.is_empty() {
            out.push(Violation::new(
                "demand.levels",
                "at least one demand level is required",
            ));
        }
        let capacity: u64 = self.nodes.iter().map(|n| u64::from(n.capacity)).sum();
        let mut level_ids = HashSet::new();
        for (i, level) in levels.iter().enumerate() {
            if !level_ids.insert(level.id.as_str()) {
                out.push(Violation::new(
                    format!("demand.levels[{i}].id"),
                    format!("duplicate level id {:?}", level.id),
                ));
            }
            if u64::from(level.required_units) > capacity {
                out.push(Violation::new(
                    format!("demand.levels[{i}]"),
                    format!("scenario infeasible for level {}", level.id),
                ));
            }
        }

        let matrix = &self.demand.transition_matrix;
        if matrix.len() != levels.len() {
            out.push(Violation::new(
                "demand.transition_matrix",
                format!("{} rows for {} levels", matrix.len(), levels.len()),
            ));
        }
        for (i, row) in matrix.iter().enumerate() {
            let path = format!("demand.transition_matrix[{i}]");
            if row.len() != levels.len() {
                out.push(Violation::new(
                    path.clone(),
                    format!("{} entries for {} levels", row.len(), levels.len()),
                ));
            }
            let mut entries_ok = true;
            for (j, p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(p) {
                    entries_ok = false;
                    out.push(Violation::new(
                        format!("{path}[{j}]"),
                        format!("probability {p} outside [0, 1]"),
                    ));
                }
            }
            let sum: f64 = row.iter().sum();
            if entries_ok && (sum - 1.0).abs() > FILE_ROW_TOLERANCE {
                out.push(Violation::new(
                    path.clone(),
                    format!("stochasticity violation at {path}: row sums to {sum}"),
                ));
            }
        }

        for (field, value) in [
            ("max_resources", self.reward.max_resources),
            ("alpha", self.reward.alpha),
            ("beta", self.reward.beta),
            ("violation_penalty", self.reward.violation_penalty),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                out.push(Violation::new(
                    format!("reward.{field}"),
                    format!("must be non-negative, got {value}"),
                ));
            }
        }
        if !(0.0..1.0).contains(&self.discount) {
            out.push(Violation::new(
                "discount",
                format!("discount {} outside [0, 1)", self.discount),
            ));
        }
        out
    }

    pub fn into_spec(self) -> Result<ProvisioningSpec, ScenarioError> {
        let violations = self.violations();
        if !violations.is_empty() {
            return Err(ScenarioError::Invalid(violations));
        }
        let whole = |message: String| ScenarioError::Invalid(vec![Violation::new(".", message)]);

        let topology = Topology::new(
            self.nodes
                .into_iter()
                .map(|n| Node::new(n.id, n.capacity))
                .collect(),
        )
        .map_err(|e| whole(e.to_string()))?;
        let matrix = self
            .demand
            .transition_matrix
            .into_iter()
            .map(|row| {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > DEMAND_ROW_TOLERANCE {
                    row.into_iter().map(|p| p / sum).collect()
                } else {
                    row
                }
            })
            .collect();
        let levels = self
            .demand
            .levels
            .into_iter()
            .map(|l| DemandLevel::new(l.id, l.required_units))
            .collect();
        let model = DemandModel::new(levels, matrix).map_err(|e| whole(e.to_string()))?;
        let reward = RewardParams {
            max_resources: self.reward.max_resources,
            alpha: self.reward.alpha,
            beta: self.reward.beta,
            violation_penalty: self.reward.violation_penalty,
        };
        ProvisioningSpec::new(topology, model, self.granularity, reward, self.discount)
            .map_err(|e| whole(e.to_string()))
    }
}

/// Canonical pretty-printed JSON form of a spec, newline-terminated.
pub fn scenario_to_json(spec: &ProvisioningSpec) -> String {
    let mut text =
        serde_json::to_string_pretty(&ScenarioFile::from_spec(spec)).expect("scenario serializes");
    text.push('\n');
    text
}

/// Hex SHA-256 of the canonical JSON form.
pub fn spec_hash(spec: &ProvisioningSpec) -> String {
    hex::encode(Sha256::digest(scenario_to_json(spec).as_bytes()))
}
