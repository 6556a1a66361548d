//! Distillation of teacher behaviour into a symbolic policy tree.

mod builder;
mod entropy;
mod frame;
mod gp;

pub use builder::{
    build_tree, build_tree_with_state, node_slices, regime_states, BuildConfig, BuildOutcome,
    GpRun, RECOVERY_ENTER, RECOVERY_EXIT,
};
pub use entropy::{entropy_estimate, entropy_of_bins, histogram_bins};
pub use frame::Frame;
pub use gp::{
    constant_pool, evolve, fit_rows, fitness, linear_scaling, mse, mutate, run_condition, run_sr,
    run_sr_on, GenStats, GpConfig, GpResult, Objective, Regression, Scheme, SplitGain,
    INVALID_FITNESS,
};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::agent::variance;
use crate::symtree::{AgentState, PolicyTree};
use crate::teacher::RolloutDataset;
use crate::{seeding, Error, Result};

/// Teacher and tree actions closer than this count as agreeing.
pub const AGREEMENT_TOLERANCE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub mse: f64,
    pub agreement: f64,
}

/// Replays each episode of `data` through `tree` in MI order, carrying the
/// tree's internal state, and compares with the recorded teacher actions.
pub fn fidelity(tree: &PolicyTree, data: &RolloutDataset) -> Fidelity {
    let pred = replay(tree, data);
    let n = data.len().max(1) as f64;
    let mut se = 0.0;
    let mut agree = 0usize;
    for (p, y) in pred.iter().zip(&data.y) {
        se += (p - y) * (p - y);
        agree += ((p - y).abs() < AGREEMENT_TOLERANCE) as usize;
    }
    Fidelity {
        mse: se / n,
        agreement: agree as f64 / n,
    }
}

/// Tree actions for every row, replayed episode by episode.
pub fn replay(tree: &PolicyTree, data: &RolloutDataset) -> Vec<f64> {
    let mut state = AgentState::new();
    let mut prev_episode = None;
    data.x
        .iter()
        .zip(&data.meta)
        .map(|(x, m)| {
            if prev_episode != Some(m.episode) || m.mi == 0 {
                state = AgentState::new();
            }
            prev_episode = Some(m.episode);
            tree.eval(x, &mut state)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub build: BuildConfig,
    /// GP settings for leaf expressions.
    pub leaf_gp: GpConfig,
    /// Fresh attempts after the first when the tree is not accepted.
    pub max_restarts: usize,
    /// A tree is accepted when its training MSE is at most this fraction of
    /// the action variance.
    pub accept_ratio: f64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            build: BuildConfig::default(),
            leaf_gp: GpConfig {
                population_size: 500,
                generations: 20,
                max_fit_rows: 1000,
                grammar: crate::symtree::Grammar {
                    recent: 3,
                    ..Default::default()
                },
                ..GpConfig::default()
            },
            max_restarts: 3,
            accept_ratio: 0.1,
        }
    }
}

impl DistillConfig {
    /// Settings that trade a little fidelity for small, cheap trees: depth 4,
    /// every high-entropy node is split or regressed, no denoising, no state
    /// flags, and GP fitness charges for FLOPs.
    pub fn compact() -> Self {
        let mut c = Self::default();
        c.build.depth_max = 4;
        c.build.p1 = 1.0;
        c.build.p2 = 1.0;
        c.build.p3 = 0.0;
        c.build.state_flags = false;
        c.build.condition_gp.flops_penalty = 3e-3;
        c.leaf_gp.flops_penalty = 3e-5;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    pub train: Fidelity,
    pub train_variance: f64,
    pub holdout: Option<Fidelity>,
    pub holdout_variance: Option<f64>,
    pub flops: usize,
    pub nodes: usize,
    pub leaves: usize,
    pub depth: usize,
    pub generations: usize,
    pub restarts: usize,
    pub accepted: bool,
    /// Training MSE of every attempt.
    pub attempt_mse: Vec<f64>,
}

/// One line of the per-generation fitness log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessLogRow {
    pub attempt: usize,
    pub node: usize,
    pub kind: String,
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_size: usize,
}

#[derive(Clone, Debug)]
pub struct Distilled {
    pub tree: PolicyTree,
    pub report: DistillReport,
    pub fitness_log: Vec<FitnessLogRow>,
}

impl Distilled {
    pub fn write_fitness_log<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.fitness_log {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds trees until one is accepted or the restart budget runs out, and
/// keeps the attempt with the lowest training MSE.
pub fn distill(
    train: &RolloutDataset,
    holdout: Option<&RolloutDataset>,
    config: &DistillConfig,
    seed: u64,
) -> Result<Distilled> {
    if train.is_empty() {
        return Err(Error::Empty("rollout dataset"));
    }
    let history_len = train.feature_dim() / 3;
    let var = variance(&train.y);
    let mut best: Option<(f64, PolicyTree)> = None;
    let mut log = Vec::new();
    let mut attempt_mse = Vec::new();
    let mut generations = 0;
    for attempt in 0..=config.max_restarts {
        let out = build_tree(
            train,
            &config.build,
            &config.leaf_gp,
            seeding::derive(seed, &[attempt as u64]),
        )?;
        generations += out.generations();
        for run in &out.runs {
            for s in &run.stats {
                log.push(FitnessLogRow {
                    attempt,
                    node: run.node,
                    kind: run.kind.clone(),
                    generation: s.generation,
                    best_fitness: s.best_fitness,
                    mean_fitness: s.mean_fitness,
                    best_size: s.best_size,
                });
            }
        }
        let mse = fidelity(&out.tree, train).mse;
        attempt_mse.push(mse);
        if best.as_ref().is_none_or(|(m, _)| mse < *m) {
            best = Some((mse, out.tree));
        }
        if mse <= config.accept_ratio * var {
            break;
        }
    }
    let (mse, tree) = best.expect("at least one attempt");
    let report = DistillReport {
        train: fidelity(&tree, train),
        train_variance: var,
        holdout: holdout.map(|h| fidelity(&tree, h)),
        holdout_variance: holdout.map(|h| variance(&h.y)),
        flops: tree.flops(history_len),
        nodes: tree.node_count(),
        leaves: tree.leaf_count(),
        depth: tree.depth(),
        generations,
        restarts: attempt_mse.len() - 1,
        accepted: mse <= config.accept_ratio * var,
        attempt_mse,
    };
    Ok(Distilled {
        tree,
        report,
        fitness_log: log,
    })
}
