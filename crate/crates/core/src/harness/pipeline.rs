use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::branching::{
    choose_k, derive_contexts, evaluate_grid, grid_conditions, train_branches, BranchContext,
    BranchReport, BranchTrainConfig, BranchedPolicy, GridConfig, GridResults, KSelection,
};
use crate::distill::{distill, DistillConfig, Distilled};
use crate::netsim::ConfigRanges;
use crate::teacher::{collect_rollouts, train_teacher, RolloutDataset, TrainConfig, TrainedTeacher};
use crate::{seeding, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub ranges: ConfigRanges,
    pub teacher: TrainConfig,
    pub rollout_episodes: usize,
    pub holdout_episodes: usize,
    pub distill: DistillConfig,
    pub grid: GridConfig,
    pub k_max: usize,
    pub branches: BranchTrainConfig,
    /// Branch teachers continue from the baseline teacher.
    pub warm_start_branches: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let teacher = TrainConfig {
            improvement_factor: 1.0,
            ..TrainConfig::default()
        };
        Self {
            seed: 0,
            ranges: ConfigRanges::baseline(),
            rollout_episodes: 80,
            holdout_episodes: 16,
            distill: DistillConfig::compact(),
            grid: GridConfig::default(),
            k_max: 8,
            branches: BranchTrainConfig {
                teacher: TrainConfig {
                    total_steps: 500_000,
                    ..teacher.clone()
                },
                distill: DistillConfig::compact(),
                ..BranchTrainConfig::default()
            },
            teacher,
            warm_start_branches: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub teacher: f64,
    pub rollouts: f64,
    pub distill: f64,
    pub grid: f64,
    pub cluster: f64,
    pub branches: f64,
}

pub struct PipelineOutput {
    pub teacher: TrainedTeacher,
    pub train: RolloutDataset,
    pub holdout: RolloutDataset,
    pub distilled: Distilled,
    pub grid: GridResults,
    pub selection: KSelection,
    pub contexts: Vec<BranchContext>,
    pub branched: BranchedPolicy,
    pub branch_reports: Vec<BranchReport>,
    pub times: StageTimes,
}

/// Teacher, rollouts, baseline tree, grid, clustering and branches, in order.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput> {
    let seed = config.seed;
    let mut times = StageTimes::default();
    let clock = Instant::now();
    let teacher = train_teacher(&config.ranges, &config.teacher, seeding::derive(seed, &[0]))?;
    times.teacher = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let data = collect_rollouts(
        &teacher.policy,
        &config.ranges,
        &config.teacher.env,
        config.rollout_episodes,
        seeding::derive(seed, &[1]),
    )?;
    let (train, holdout) = data.split_holdout(config.holdout_episodes);
    times.rollouts = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let held = (!holdout.is_empty()).then_some(&holdout);
    let distilled = distill(&train, held, &config.distill, seeding::derive(seed, &[2]))?;
    times.distill = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let configs = grid_conditions(&config.ranges);
    let grid = evaluate_grid(|| &teacher.policy, &configs, &config.grid, seeding::derive(seed, &[3]))?;
    times.grid = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let selection = choose_k(&grid.returns(), config.k_max, seeding::derive(seed, &[4]))?;
    let contexts = derive_contexts(&grid, &selection.model, &config.ranges)?;
    times.cluster = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (branched, branch_reports) = train_branches(
        &contexts,
        &grid,
        &selection.model,
        &config.branches,
        config.warm_start_branches.then_some(&teacher.policy),
        seeding::derive(seed, &[5]),
    )?;
    times.branches = clock.elapsed().as_secs_f64();

    Ok(PipelineOutput {
        teacher,
        train,
        holdout,
        distilled,
        grid,
        selection,
        contexts,
        branched,
        branch_reports,
        times,
    })
}
