//! Context-specific branches: cluster the baseline's returns over a grid of
//! link conditions, distill one tree per cluster, and pick the branch at run
//! time from the observation history.

mod cluster;
mod decider;
mod grid;
mod policy;

pub use cluster::{
    choose_k, choose_k_by, elbow, kmeans, kmeans_with, silhouette, ClusterModel, KRule, KSelection,
};
pub use decider::{
    smooth, DeciderConfig, KnnDecider, DEFAULT_NEIGHBORS, DEFAULT_WINDOW, MAX_EXEMPLARS,
    SWITCH_MARGIN,
};
pub use grid::{
    evaluate_grid, grid_conditions, queue_levels, GridConfig, GridPoint, GridResults,
    BANDWIDTH_STEP, LATENCY_STEP, LOSS_STEP,
};
pub use policy::{BranchContext, BranchedAgent, BranchedPolicy, ConditionExtremes};

use serde::{Deserialize, Serialize};

use crate::distill::{distill, DistillConfig, DistillReport};
use crate::netsim::{ConfigRanges, NetworkConfig};
use crate::teacher::{
    collect_rollouts, evaluate_teacher, train_teacher_from, TeacherPolicy, TrainConfig, TrainReport,
};
use crate::{agent, seeding, Error, Result};

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Contiguous groups of sorted `values`, one per cluster in `order`, that
/// agree with the most labels. Groups are non-empty whenever there are at
/// least as many values as clusters. Returns (agreement, group end per cluster).
fn best_groups(counts: &[Vec<usize>], order: &[usize]) -> (usize, Vec<usize>) {
    let m = counts.len();
    let k = order.len();
    let min_width = usize::from(m >= k);
    // score[g][j]: best agreement with the first g groups covering j values
    let mut score = vec![vec![None::<usize>; m + 1]; k + 1];
    let mut back = vec![vec![0usize; m + 1]; k + 1];
    score[0][0] = Some(0);
    for g in 1..=k {
        let c = order[g - 1];
        for j in 0..=m {
            for i in 0..=j {
                if j - i < min_width {
                    continue;
                }
                let Some(prev) = score[g - 1][i] else { continue };
                let gain: usize = counts[i..j].iter().map(|row| row[c]).sum();
                if score[g][j].is_none_or(|s| prev + gain > s) {
                    score[g][j] = Some(prev + gain);
                    back[g][j] = i;
                }
            }
        }
    }
    let mut ends = vec![0; k];
    let mut j = m;
    for g in (1..=k).rev() {
        ends[g - 1] = j;
        j = back[g][j];
    }
    (score[k][m].unwrap_or(0), ends)
}

/// One band of `range` per cluster along one condition. Bands are contiguous,
/// follow the cluster order in whichever direction matches the labels better,
/// and meet halfway between neighbouring grid values.
fn bands(values: &[f64], labels: &[usize], k: usize, range: (f64, f64)) -> Vec<(f64, f64)> {
    let mut levels: Vec<f64> = values.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut counts = vec![vec![0usize; k]; levels.len()];
    for (v, &l) in values.iter().zip(labels) {
        let j = levels.partition_point(|x| x < v);
        counts[j][l] += 1;
    }
    let up: Vec<usize> = (0..k).collect();
    let down: Vec<usize> = (0..k).rev().collect();
    let (a, up_ends) = best_groups(&counts, &up);
    let (b, down_ends) = best_groups(&counts, &down);
    let (order, ends) = if a >= b { (up, up_ends) } else { (down, down_ends) };
    let edge = |j: usize| {
        if j == 0 {
            range.0
        } else if j >= levels.len() {
            range.1
        } else {
            0.5 * (levels[j - 1] + levels[j])
        }
    };
    let mut out = vec![(range.0, range.1); k];
    let mut start = 0;
    for (g, &c) in order.iter().enumerate() {
        out[c] = (edge(start), edge(ends[g]));
        start = ends[g];
    }
    out
}

/// One context per cluster, numbered by ascending return centroid. Bandwidth,
/// latency and loss become adjacent bands covering `ranges`; the queue range
/// is shared by every branch. The raw member extremes are kept alongside.
pub fn derive_contexts(
    grid: &GridResults,
    model: &ClusterModel,
    ranges: &ConfigRanges,
) -> Result<Vec<BranchContext>> {
    if model.labels.len() != grid.points.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} grid points",
            model.labels.len(),
            grid.points.len()
        )));
    }
    let members: Vec<Vec<&NetworkConfig>> = (0..model.k)
        .map(|c| model.members(c).into_iter().map(|i| &grid.points[i].config).collect())
        .collect();
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyCluster(empty));
    }
    let band = |f: fn(&NetworkConfig) -> f64, range| {
        let values: Vec<f64> = grid.points.iter().map(|p| f(&p.config)).collect();
        bands(&values, &model.labels, model.k, range)
    };
    let bw = band(|c| c.bandwidth, ranges.bandwidth);
    let lat = band(|c| c.latency, ranges.latency);
    let loss = band(|c| c.loss_rate, ranges.loss);
    Ok((0..model.k)
        .map(|c| {
            let m = &members[c];
            let q = m.iter().map(|x| x.queue_size);
            BranchContext {
                id: c,
                bandwidth: bw[c],
                latency: lat[c],
                queue: ranges.queue,
                loss: loss[c],
                return_centroid: model.centroids[c],
                members: m.len(),
                extremes: ConditionExtremes {
                    bandwidth: extent(m.iter().map(|x| x.bandwidth)),
                    latency: extent(m.iter().map(|x| x.latency)),
                    queue: (q.clone().min().unwrap(), q.max().unwrap()),
                    loss: extent(m.iter().map(|x| x.loss_rate)),
                },
            }
        })
        .collect())
}

/// Grid trajectories labelled by their grid point's cluster.
pub fn fit_decider(grid: &GridResults, model: &ClusterModel, config: &DeciderConfig) -> Result<KnnDecider> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (p, &l) in grid.points.iter().zip(&model.labels) {
        for row in &p.trajectory {
            features.push(row.clone());
            labels.push(l);
        }
    }
    if features.is_empty() {
        return Err(Error::Empty("grid trajectories"));
    }
    KnnDecider::balanced(
        config.neighbors,
        features,
        labels,
        config.max_exemplars,
        config.subsample_seed,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BranchTrainConfig {
    pub teacher: TrainConfig,
    pub distill: DistillConfig,
    pub decider: DeciderConfig,
    pub rollout_episodes: usize,
    /// Rollout episodes held out from distillation for the report.
    pub holdout_episodes: usize,
    pub eval_episodes: usize,
}

impl Default for BranchTrainConfig {
    fn default() -> Self {
        Self {
            teacher: TrainConfig::default(),
            distill: DistillConfig::default(),
            decider: DeciderConfig::default(),
            rollout_episodes: 80,
            holdout_episodes: 16,
            eval_episodes: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub id: usize,
    pub teacher: TrainReport,
    /// Deterministic teacher return on the branch's own context.
    pub teacher_return: f64,
    pub distill: DistillReport,
    pub shape: String,
}

/// Trains a teacher on each context, distills it, and fits the decider from
/// the grid trajectories. Branch teachers start from `base` when given.
pub fn train_branches(
    contexts: &[BranchContext],
    grid: &GridResults,
    model: &ClusterModel,
    config: &BranchTrainConfig,
    base: Option<&TeacherPolicy>,
    seed: u64,
) -> Result<(BranchedPolicy, Vec<BranchReport>)> {
    if contexts.is_empty() {
        return Err(Error::Empty("branch contexts"));
    }
    let mut trees = Vec::with_capacity(contexts.len());
    let mut reports = Vec::with_capacity(contexts.len());
    for (i, ctx) in contexts.iter().enumerate() {
        let ranges = ctx.ranges();
        let env = &config.teacher.env;
        let trained = train_teacher_from(base, &ranges, &config.teacher, seeding::derive(seed, &[i as u64, 0]))?;
        let data = collect_rollouts(
            &trained.policy,
            &ranges,
            env,
            config.rollout_episodes,
            seeding::derive(seed, &[i as u64, 1]),
        )?;
        let (train, holdout) = data.split_holdout(config.holdout_episodes);
        let holdout = (!holdout.is_empty()).then_some(&holdout);
        let d = distill(&train, holdout, &config.distill, seeding::derive(seed, &[i as u64, 2]))?;
        let teacher_return = agent::mean(&evaluate_teacher(
            &trained.policy,
            &ranges,
            env,
            config.eval_episodes,
            seeding::derive(seed, &[i as u64, 3]),
        )?);
        reports.push(BranchReport {
            id: ctx.id,
            teacher: trained.report,
            teacher_return,
            distill: d.report,
            shape: d.tree.shape(),
        });
        trees.push(d.tree);
    }
    let decider = if contexts.len() > 1 {
        fit_decider(grid, model, &config.decider)?
    } else {
        KnnDecider {
            neighbors: config.decider.neighbors,
            ..Default::default()
        }
    };
    let policy = BranchedPolicy::new(
        contexts.to_vec(),
        trees,
        decider,
        config.decider.clone(),
        config.teacher.env.history_len,
    )?;
    Ok((policy, reports))
}
