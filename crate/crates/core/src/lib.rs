//! Dynamic VM provisioning over a static network of road-side units, cast
//! as a finite discounted MDP and solved by policy iteration.
//!
//! The crate compiles a provisioning scenario ([`provisioner::ProvisioningSpec`])
//! into a tabular MDP, solves it, builds the myopic greedy baseline over the
//! same state space, and replays both on seeded demand traces.

pub mod cli;
pub mod cloud;
pub mod mdp;
pub mod provisioner;
pub mod results;
pub mod scenario;
pub mod scenarios;
pub mod sim;
