//! Test-only generators and oracles that do not share code paths with the
//! solvers they check.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vcloud_mdp::mdp::{Action, Outcome, Policy, TabularMdp};
use vcloud_mdp::provisioner::ProvisioningSpec;

/// Random MDP with `2..=max_states` states and `1..=max_actions` actions per
/// state. Action identifiers are shuffled and non-contiguous.
pub fn random_mdp(seed: u64, max_states: usize, max_actions: usize) -> TabularMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_states);
    let discount = rng.gen_range(0.5..0.95);
    let actions = (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=max_actions);
            let mut ids: Vec<usize> = (0..k).map(|j| 3 * j + 1).collect();
            ids.shuffle(&mut rng);
            ids.into_iter()
                .map(|id| {
                    let fanout = rng.gen_range(1..=n.min(4));
                    let mut targets: Vec<usize> = (0..n).collect();
                    targets.shuffle(&mut rng);
                    let weights: Vec<f64> = (0..fanout).map(|_| rng.gen_range(0.05..1.0)).collect();
                    let total: f64 = weights.iter().sum();
                    let outcomes = targets[..fanout]
                        .iter()
                        .zip(&weights)
                        .map(|(&next, w)| Outcome::new(next, w / total, rng.gen_range(-5.0..5.0)))
                        .collect();
                    Action::new(id, outcomes)
                })
                .collect()
        })
        .collect();
    TabularMdp::new(n, actions, discount).expect("generated MDP is well formed")
}

pub fn random_policy(mdp: &TabularMdp, seed: u64) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Policy::new(
        (0..mdp.num_states())
            .map(|s| mdp.actions(s).choose(&mut rng).unwrap().id)
            .collect(),
    )
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                let (upper, lower) = a.split_at_mut(row);
                for (x, &y) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                    *x -= factor * y;
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

/// Dense `(next, probability, reward)` model built straight from a scenario,
/// without going through `build_mdp`. Only valid for single-node topologies.
pub struct DenseModel {
    pub configs: usize,
    pub levels: usize,
    pub discount: f64,
    /// `table[state][action]` = list of `(next, p, r)`.
    pub table: Vec<Vec<Vec<(usize, f64, f64)>>>,
}

impl DenseModel {
    pub fn single_node(spec: &ProvisioningSpec) -> Self {
        let nodes = spec.topology().nodes();
        assert_eq!(nodes.len(), 1);
        let g = spec.granularity();
        let units: Vec<u32> = (0..=nodes[0].capacity / g).map(|k| k * g).collect();
        let model = spec.demand_model();
        let rw = spec.reward();
        let levels = model.len();
        let mut table = Vec::new();
        for &have in &units {
            for d in 0..levels {
                let row = model.row(d);
                let actions = units
                    .iter()
                    .enumerate()
                    .map(|(target, &want)| {
                        let placed = want.saturating_sub(have) as f64;
                        (0..levels)
                            .filter(|&nd| row[nd] > 0.0)
                            .map(|nd| {
                                let short = want < model.required_units(nd);
                                let r = rw.max_resources
                                    - rw.alpha * (want as f64 - have as f64)
                                    - rw.beta * placed
                                    - if short { rw.violation_penalty } else { 0.0 };
                                (target * levels + nd, row[nd], r)
                            })
                            .collect()
                    })
                    .collect();
                table.push(actions);
            }
        }
        Self {
            configs: units.len(),
            levels,
            discount: spec.discount(),
            table,
        }
    }

    pub fn evaluate(&self, policy: &[usize]) -> Vec<f64> {
        let n = self.table.len();
        let mut a = vec![vec![0.0; n]; n];
        let mut b = vec![0.0; n];
        for s in 0..n {
            a[s][s] += 1.0;
            for &(next, p, r) in &self.table[s][policy[s]] {
                a[s][next] -= self.discount * p;
                b[s] += p * r;
            }
        }
        gauss_solve(a, b)
    }

    /// Every deterministic policy, as per-state action indices.
    pub fn all_policies(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let n = self.table.len();
        let k = self.configs;
        let total = k.pow(n as u32);
        (0..total).map(move |mut code| {
            (0..n)
                .map(|_| {
                    let a = code % k;
                    code /= k;
                    a
                })
                .collect()
        })
    }
}
