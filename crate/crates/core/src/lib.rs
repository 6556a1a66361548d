//! Symbolic distillation of learned rate-based congestion control.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! * [`netsim`] simulates a bottleneck link one monitor interval (MI) at a time
//!   and turns per-MI accounting into the three observation statistics.
//! * [`teacher`] trains a small feed-forward policy with PPO and records its
//!   deterministic behaviour as an offline rollout dataset.
//! * [`symtree`] defines the symbolic expression language, the policy tree built
//!   from it, and its textual form.
//! * [`distill`] grows a policy tree that imitates the teacher, using genetic
//!   programming for split conditions and leaf expressions.
//! * [`branching`] clusters network contexts by return, distills one tree per
//!   context and picks a branch at run time with a nearest-neighbour decider.
//!
//! [`harness`] ties these together: evaluation scenarios, throughput traces,
//! the AIMD comparator, efficiency measurements and the end-to-end pipeline.

pub mod agent;
pub mod branching;
pub mod distill;
pub mod error;
pub mod harness;
pub mod netsim;
pub mod nn;
pub mod seeding;
pub mod symtree;
pub mod teacher;

pub use error::{Error, Result};
