use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{mean, Agent};
use crate::netsim::{ConfigRanges, Env, EnvConfig, NetworkConfig, RETURN_SCALE};
use crate::{seeding, Result};

pub const BANDWIDTH_STEP: f64 = 50.0;
pub const LATENCY_STEP: f64 = 0.1;
pub const LOSS_STEP: f64 = 0.01;
/// Consecutive queue sizes differ by this factor before rounding.
pub const QUEUE_RATIO: f64 = std::f64::consts::E * std::f64::consts::E;

fn linear(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

/// Queue sizes from the minimum in factors of e², rounded, ending at the cap.
pub fn queue_levels(lo: u32, hi: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut q = lo as f64;
    while (q.round() as u32) < hi {
        out.push(q.round() as u32);
        q *= QUEUE_RATIO;
    }
    out.push(hi);
    out.dedup();
    out
}

/// Regular grid over `ranges`: bandwidth, latency and loss in fixed linear
/// steps, queue geometric. Ordered bandwidth-major, then latency, queue, loss.
pub fn grid_conditions(ranges: &ConfigRanges) -> Vec<NetworkConfig> {
    let mut out = Vec::new();
    for &bandwidth in &linear(ranges.bandwidth.0, ranges.bandwidth.1, BANDWIDTH_STEP) {
        for &latency in &linear(ranges.latency.0, ranges.latency.1, LATENCY_STEP) {
            for &queue_size in &queue_levels(ranges.queue.0, ranges.queue.1) {
                for &loss_rate in &linear(ranges.loss.0, ranges.loss.1, LOSS_STEP) {
                    out.push(NetworkConfig {
                        bandwidth,
                        latency,
                        queue_size,
                        loss_rate,
                    });
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub config: NetworkConfig,
    pub mean_return: f64,
    pub returns: Vec<f64>,
    /// Observation histories sampled along the episodes, for the decider.
    pub trajectory: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridResults {
    pub points: Vec<GridPoint>,
}

impl GridResults {
    pub fn returns(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_return).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub episodes_per_config: usize,
    /// Histories recorded per episode, evenly spaced after the warm-up.
    pub samples_per_episode: usize,
    pub warmup_mis: usize,
    pub env: EnvConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            episodes_per_config: 3,
            samples_per_episode: 6,
            warmup_mis: 10,
            env: EnvConfig::default(),
        }
    }
}

/// Runs every config for `episodes_per_config` seeded episodes.
pub fn evaluate_grid<A, F>(
    make_agent: F,
    configs: &[NetworkConfig],
    config: &GridConfig,
    seed: u64,
) -> Result<GridResults>
where
    A: Agent,
    F: Fn() -> A + Sync,
{
    let mis = config.env.episode_mis;
    let warm = config.warmup_mis.min(mis.saturating_sub(1));
    let stride = ((mis - warm) / config.samples_per_episode.max(1)).max(1);
    let points = configs
        .par_iter()
        .enumerate()
        .map(|(i, &network)| {
            let mut returns = Vec::with_capacity(config.episodes_per_config);
            let mut trajectory = Vec::new();
            for e in 0..config.episodes_per_config {
                let mut env = Env::new(
                    network,
                    config.env.clone(),
                    seeding::derive(seed, &[i as u64, e as u64]),
                )?;
                let mut agent = make_agent();
                agent.reset();
                let mut total = 0.0;
                let mut t = 0;
                while !env.is_done() {
                    if t >= warm
                        && (t - warm).is_multiple_of(stride)
                        && trajectory.len() < (e + 1) * config.samples_per_episode
                    {
                        trajectory.push(env.observation().features().to_vec());
                    }
                    let a = agent.act(env.observation());
                    total += env.step(a)?.reward;
                    t += 1;
                }
                returns.push(total * RETURN_SCALE);
            }
            Ok(GridPoint {
                config: network,
                mean_return: mean(&returns),
                returns,
                trajectory,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridResults { points })
}
