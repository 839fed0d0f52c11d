//! Infinite-horizon discounted tabular MDPs and their solvers.
//!
//! Rewards are attached to individual outcomes, so `R` may depend on the
//! successor state as well as on the state and action. Policy iteration is
//! the primary solver; value iteration is kept as an independent oracle.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Allowed deviation of an outcome row's probability mass from 1.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Q-values closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Largest state count evaluated with a dense LU solve; larger MDPs iterate.
pub const EXACT_SOLVE_LIMIT: usize = 2_000;

/// Safety cap on policy-iteration rounds. Reaching it indicates a bug.
pub const POLICY_ITERATION_CAP: usize = 10_000;

const MAX_EVALUATION_SWEEPS: usize = 1_000_000;

pub type ActionId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub probability: f64,
    pub reward: f64,
}

impl Outcome {
    pub fn new(next: usize, probability: f64, reward: f64) -> Self {
        Self {
            next,
            probability,
            reward,
        }
    }
}

/// One available action together with its outcome distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub id: ActionId,
    pub outcomes: Vec<Outcome>,
}

impl Action {
    pub fn new(id: ActionId, outcomes: Vec<Outcome>) -> Self {
        Self { id, outcomes }
    }

    /// Probability-weighted immediate reward.
    pub fn expected_reward(&self) -> f64 {
        self.outcomes.iter().map(|o| o.probability * o.reward).sum()
    }
}

/// A single broken invariant found by [`TabularMdp::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    EmptyStateSpace,
    StateCountMismatch {
        declared: usize,
        listed: usize,
    },
    BadDiscount(f64),
    NoActions {
        state: usize,
    },
    DuplicateAction {
        state: usize,
        action: ActionId,
    },
    NegativeProbability {
        state: usize,
        action: ActionId,
        next: usize,
        probability: f64,
    },
    RowSum {
        state: usize,
        action: ActionId,
        sum: f64,
    },
    NextStateOutOfRange {
        state: usize,
        action: ActionId,
        next: usize,
    },
    NonFiniteReward {
        state: usize,
        action: ActionId,
        next: usize,
    },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyStateSpace => write!(f, "state space is empty"),
            Self::StateCountMismatch { declared, listed } => write!(
                f,
                "{declared} states declared but actions listed for {listed}"
            ),
            Self::BadDiscount(d) => write!(f, "discount {d} outside [0, 1)"),
            Self::NoActions { state } => write!(f, "no actions at state {state}"),
            Self::DuplicateAction { state, action } => {
                write!(f, "duplicate action {action} at state {state}")
            }
            Self::NegativeProbability {
                state,
                action,
                next,
                probability,
            } => write!(
                f,
                "negative probability {probability} to {next} at ({state},{action})"
            ),
            Self::RowSum { state, action, sum } => {
                write!(f, "row sum {sum} ≠ 1 at ({state},{action})")
            }
            Self::NextStateOutOfRange {
                state,
                action,
                next,
            } => {
                write!(
                    f,
                    "index out of range: next state {next} at ({state},{action})"
                )
            }
            Self::NonFiniteReward {
                state,
                action,
                next,
            } => {
                write!(f, "non-finite reward to {next} at ({state},{action})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("malformed MDP: {0}")]
    Malformed(ValidationReport),
    #[error("policy covers {got} states but the MDP has {expected}")]
    PolicyLength { expected: usize, got: usize },
    #[error("action {action} is not available in state {state}")]
    UnavailableAction { state: usize, action: ActionId },
    #[error("tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),
    #[error("policy evaluation stalled at residual {residual}")]
    EvaluationStalled { residual: f64 },
    #[error("policy iteration hit its safety cap of {0} iterations")]
    IterationCap(usize),
}

/// The quad-tuple `<S, A, P, R>` plus a discount factor.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    actions: Vec<Vec<Action>>,
    discount: f64,
}

impl TabularMdp {
    /// Builds an MDP, rejecting it if [`validate`](Self::validate) reports anything.
    pub fn new(
        num_states: usize,
        actions: Vec<Vec<Action>>,
        discount: f64,
    ) -> Result<Self, MdpError> {
        let mdp = Self::from_parts_unchecked(num_states, actions, discount);
        let report = mdp.validate();
        if report.is_empty() {
            Ok(mdp)
        } else {
            Err(MdpError::Malformed(report))
        }
    }

    /// Builds an MDP without checking invariants. Solvers validate again
    /// before running, so this is only useful for diagnostics.
    pub fn from_parts_unchecked(
        num_states: usize,
        actions: Vec<Vec<Action>>,
        discount: f64,
    ) -> Self {
        Self {
            num_states,
            actions,
            discount,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn actions(&self, state: usize) -> &[Action] {
        &self.actions[state]
    }

    pub fn action(&self, state: usize, id: ActionId) -> Option<&Action> {
        self.actions.get(state)?.iter().find(|a| a.id == id)
    }

    /// Copy of this MDP with another discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self, MdpError> {
        Self::new(self.num_states, self.actions.clone(), discount)
    }

    /// Checks every structural invariant and lists each violation with its location.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        if self.num_states == 0 {
            issues.push(ValidationIssue::EmptyStateSpace);
        }
        if self.actions.len() != self.num_states {
            issues.push(ValidationIssue::StateCountMismatch {
                declared: self.num_states,
                listed: self.actions.len(),
            });
        }
        if !(0.0..1.0).contains(&self.discount) {
            issues.push(ValidationIssue::BadDiscount(self.discount));
        }
        for (state, actions) in self.actions.iter().enumerate() {
            if actions.is_empty() {
                issues.push(ValidationIssue::NoActions { state });
            }
            for (i, action) in actions.iter().enumerate() {
                if actions[..i].iter().any(|a| a.id == action.id) {
                    issues.push(ValidationIssue::DuplicateAction {
                        state,
                        action: action.id,
                    });
                }
                let mut sum = 0.0;
                for o in &action.outcomes {
                    if o.next >= self.num_states {
                        issues.push(ValidationIssue::NextStateOutOfRange {
                            state,
                            action: action.id,
                            next: o.next,
                        });
                    }
                    if o.probability.is_nan() || o.probability < 0.0 {
                        issues.push(ValidationIssue::NegativeProbability {
                            state,
                            action: action.id,
                            next: o.next,
                            probability: o.probability,
                        });
                    }
                    if !o.reward.is_finite() {
                        issues.push(ValidationIssue::NonFiniteReward {
                            state,
                            action: action.id,
                            next: o.next,
                        });
                    }
                    sum += o.probability;
                }
                let off = (sum - 1.0).abs();
                if off.is_nan() || off > PROBABILITY_TOLERANCE {
                    issues.push(ValidationIssue::RowSum {
                        state,
                        action: action.id,
                        sum,
                    });
                }
            }
        }
        ValidationReport { issues }
    }

    fn ensure_valid(&self) -> Result<(), MdpError> {
        let report = self.validate();
        if report.is_empty() {
            Ok(())
        } else {
            Err(MdpError::Malformed(report))
        }
    }

    /// Resolves each state's chosen action, failing on the first unavailable one.
    fn resolve<'a>(&'a self, policy: &Policy) -> Result<Vec<&'a Action>, MdpError> {
        if policy.len() != self.num_states {
            return Err(MdpError::PolicyLength {
                expected: self.num_states,
                got: policy.len(),
            });
        }
        policy
            .as_slice()
            .iter()
            .enumerate()
            .map(|(state, &id)| {
                self.action(state, id)
                    .ok_or(MdpError::UnavailableAction { state, action: id })
            })
            .collect()
    }

    /// `Q(s, a) = Σ_n P(s, n, a) · [R(s, a, n) + γ·V(n)]`.
    pub fn q_value(&self, action: &Action, values: &[f64]) -> f64 {
        action
            .outcomes
            .iter()
            .map(|o| o.probability * (o.reward + self.discount * values[o.next]))
            .sum()
    }
}

/// Deterministic stationary policy: one action identifier per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Policy {
    action_of: Vec<ActionId>,
}

impl Policy {
    pub fn new(action_of: Vec<ActionId>) -> Self {
        Self { action_of }
    }

    /// The policy choosing the lowest action identifier everywhere.
    pub fn lowest_actions(mdp: &TabularMdp) -> Self {
        Self::new(
            (0..mdp.num_states())
                .map(|s| mdp.actions(s).iter().map(|a| a.id).min().unwrap_or(0))
                .collect(),
        )
    }

    pub fn action(&self, state: usize) -> ActionId {
        self.action_of[state]
    }

    pub fn as_slice(&self) -> &[ActionId] {
        &self.action_of
    }

    pub fn len(&self) -> usize {
        self.action_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.action_of.is_empty()
    }

    /// Checks `action_of[s] ∈ A(s)` for every state.
    pub fn is_valid_for(&self, mdp: &TabularMdp) -> bool {
        mdp.resolve(self).is_ok()
    }
}

/// Expected discounted cumulative reward per state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    value_of: Vec<f64>,
}

impl ValueFunction {
    pub fn new(value_of: Vec<f64>) -> Self {
        Self { value_of }
    }

    pub fn value(&self, state: usize) -> f64 {
        self.value_of[state]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.value_of
    }

    pub fn len(&self) -> usize {
        self.value_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value_of.is_empty()
    }

    pub fn max_abs_diff(&self, other: &ValueFunction) -> f64 {
        self.value_of
            .iter()
            .zip(&other.value_of)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_tolerance(tolerance: f64) -> Result<(), MdpError> {
    if tolerance > 0.0 && tolerance.is_finite() {
        Ok(())
    } else {
        Err(MdpError::BadTolerance(tolerance))
    }
}

fn backup(mdp: &TabularMdp, chosen: &[&Action], values: &[f64]) -> Vec<f64> {
    chosen.iter().map(|a| mdp.q_value(a, values)).collect()
}

fn max_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Max-norm Bellman residual `‖T_π V − V‖∞` of `values` under `policy`.
pub fn policy_residual(
    mdp: &TabularMdp,
    policy: &Policy,
    values: &ValueFunction,
) -> Result<f64, MdpError> {
    let chosen = mdp.resolve(policy)?;
    let next = backup(mdp, &chosen, values.as_slice());
    Ok(max_norm_diff(&next, values.as_slice()))
}

/// Evaluates `policy`, returning values whose Bellman residual is at most `tolerance`.
///
/// Up to [`EXACT_SOLVE_LIMIT`] states the linear system `(I − γP_π)V = r_π`
/// is solved directly; larger problems (and the rare poorly conditioned
/// solve) fall back to Jacobi sweeps until the residual bound holds.
pub fn policy_evaluation(
    mdp: &TabularMdp,
    policy: &Policy,
    tolerance: f64,
) -> Result<ValueFunction, MdpError> {
    check_tolerance(tolerance)?;
    let chosen = mdp.resolve(policy)?;
    let n = mdp.num_states();
    let gamma = mdp.discount();

    let mut values = if n <= EXACT_SOLVE_LIMIT {
        let mut system = DMatrix::<f64>::identity(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for (s, action) in chosen.iter().enumerate() {
            for o in &action.outcomes {
                system[(s, o.next)] -= gamma * o.probability;
            }
            rhs[s] = action.expected_reward();
        }
        system
            .lu()
            .solve(&rhs)
            .map(|v| v.iter().copied().collect())
            .unwrap_or_else(|| vec![0.0; n])
    } else {
        vec![0.0; n]
    };

    let mut residual = f64::INFINITY;
    for _ in 0..MAX_EVALUATION_SWEEPS {
        let next = backup(mdp, &chosen, &values);
        residual = max_norm_diff(&next, &values);
        if residual <= tolerance {
            return Ok(ValueFunction::new(values));
        }
        values = next;
    }
    Err(MdpError::EvaluationStalled { residual })
}

fn improve(mdp: &TabularMdp, values: &[f64], incumbent: Option<&Policy>) -> Policy {
    assert_eq!(
        values.len(),
        mdp.num_states(),
        "value function length mismatch"
    );
    let action_of = (0..mdp.num_states())
        .map(|s| {
            let scored: Vec<(ActionId, f64)> = mdp
                .actions(s)
                .iter()
                .map(|a| (a.id, mdp.q_value(a, values)))
                .collect();
            let best = scored
                .iter()
                .map(|&(_, q)| q)
                .fold(f64::NEG_INFINITY, f64::max);
            if let Some(current) = incumbent.map(|p| p.action(s)) {
                if scored
                    .iter()
                    .any(|&(id, q)| id == current && q >= best - TIE_TOLERANCE)
                {
                    return current;
                }
            }
            scored
                .iter()
                .filter(|&&(_, q)| q >= best - TIE_TOLERANCE)
                .map(|&(id, _)| id)
                .min()
                .expect("every state has at least one action")
        })
        .collect();
    Policy::new(action_of)
}

/// Greedy policy with respect to `values`.
///
/// Actions whose Q-values lie within [`TIE_TOLERANCE`] of the maximum are
/// tied; the lowest identifier among them wins.
///
/// Panics if `values` does not have one entry per state.
pub fn policy_improvement(mdp: &TabularMdp, values: &ValueFunction) -> Policy {
    improve(mdp, values.as_slice(), None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyIterationResult {
    pub policy: Policy,
    pub values: ValueFunction,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyIterationOptions {
    /// Residual bound passed to each policy evaluation.
    pub evaluation_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PolicyIterationOptions {
    fn default() -> Self {
        Self {
            evaluation_tolerance: 1e-10,
            max_iterations: POLICY_ITERATION_CAP,
        }
    }
}

/// Policy iteration with default options, starting from `initial` or the
/// lowest action identifier in every state.
pub fn policy_iteration(
    mdp: &TabularMdp,
    initial: Option<&Policy>,
) -> Result<PolicyIterationResult, MdpError> {
    policy_iteration_with(
        mdp,
        initial,
        &PolicyIterationOptions::default(),
        |_, _, _| {},
    )
}

/// Policy iteration with explicit options. `observe` is called after every
/// evaluation with the round number, the policy and its values.
///
/// A state only switches action when the challenger beats the incumbent by
/// at least [`TIE_TOLERANCE`], so the loop stops once no state can improve.
pub fn policy_iteration_with<F>(
    mdp: &TabularMdp,
    initial: Option<&Policy>,
    options: &PolicyIterationOptions,
    mut observe: F,
) -> Result<PolicyIterationResult, MdpError>
where
    F: FnMut(usize, &Policy, &ValueFunction),
{
    mdp.ensure_valid()?;
    let mut policy = match initial {
        Some(p) => {
            mdp.resolve(p)?;
            p.clone()
        }
        None => Policy::lowest_actions(mdp),
    };
    for iteration in 1..=options.max_iterations {
        let values = policy_evaluation(mdp, &policy, options.evaluation_tolerance)?;
        observe(iteration, &policy, &values);
        let improved = improve(mdp, values.as_slice(), Some(&policy));
        if improved == policy {
            return Ok(PolicyIterationResult {
                policy,
                values,
                iterations: iteration,
            });
        }
        policy = improved;
    }
    Err(MdpError::IterationCap(options.max_iterations))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueIterationResult {
    pub policy: Policy,
    pub values: ValueFunction,
    pub sweeps: usize,
    /// False when `max_iterations` ran out before the stopping rule held.
    pub converged: bool,
    /// `‖V_{k+1} − V_k‖∞` for each sweep.
    pub deltas: Vec<f64>,
}

/// Bellman-optimality fixed-point iteration from `V = 0`.
///
/// Stops once successive values differ by at most `tolerance·(1−γ)/(2γ)`,
/// which puts the returned greedy policy within `tolerance` of optimal.
/// With `γ = 0` one sweep is exact.
pub fn value_iteration(
    mdp: &TabularMdp,
    tolerance: f64,
    max_iterations: usize,
) -> Result<ValueIterationResult, MdpError> {
    check_tolerance(tolerance)?;
    mdp.ensure_valid()?;
    let gamma = mdp.discount();
    let threshold = if gamma > 0.0 {
        tolerance * (1.0 - gamma) / (2.0 * gamma)
    } else {
        f64::INFINITY
    };

    let mut values = vec![0.0; mdp.num_states()];
    let mut deltas = Vec::new();
    let mut converged = false;
    while deltas.len() < max_iterations {
        let next: Vec<f64> = (0..mdp.num_states())
            .map(|s| {
                mdp.actions(s)
                    .iter()
                    .map(|a| mdp.q_value(a, &values))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let delta = max_norm_diff(&next, &values);
        deltas.push(delta);
        values = next;
        if delta <= threshold {
            converged = true;
            break;
        }
    }

    let policy = improve(mdp, &values, None);
    Ok(ValueIterationResult {
        policy,
        values: ValueFunction::new(values),
        sweeps: deltas.len(),
        converged,
        deltas,
    })
}
