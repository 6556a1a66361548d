//! Anything that maps an observation history to a rate-adjustment action.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::netsim::{ConfigRanges, Env, EnvConfig, NetworkConfig, ObsHistory, RETURN_SCALE};
use crate::{seeding, Result};

pub trait Agent {
    /// Clears per-connection state before a new episode.
    fn reset(&mut self);

    /// Action in `[-1, 1]` for the next MI.
    fn act(&mut self, obs: &ObsHistory) -> f64;

    /// Branch behind the last action, for policies that have branches.
    fn last_branch(&self) -> Option<usize> {
        None
    }
}

/// Uniformly random actions, the reference point for training progress.
#[derive(Clone, Debug)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: seeding::rng(seed),
        }
    }
}

impl Agent for RandomAgent {
    fn reset(&mut self) {}

    fn act(&mut self, _obs: &ObsHistory) -> f64 {
        self.rng.random_range(-1.0..=1.0)
    }
}

/// Link and environment seed for episode `index` of a seeded run.
pub fn episode_setup(ranges: &ConfigRanges, seed: u64, index: u64) -> (NetworkConfig, u64) {
    let mut rng = seeding::rng_at(seed, &[index, 0]);
    (ranges.sample(&mut rng), seeding::derive(seed, &[index, 1]))
}

/// Runs one full episode and returns the scaled return.
pub fn run_episode<A: Agent + ?Sized>(
    agent: &mut A,
    network: NetworkConfig,
    env_config: &EnvConfig,
    env_seed: u64,
) -> Result<f64> {
    let mut env = Env::new(network, env_config.clone(), env_seed)?;
    agent.reset();
    let mut total = 0.0;
    while !env.is_done() {
        let action = agent.act(env.observation());
        total += env.step(action)?.reward;
    }
    Ok(total * RETURN_SCALE)
}

/// Per-episode returns over `n_episodes` seeded episodes drawn from `ranges`.
///
/// `make_agent` receives the episode index so stochastic agents can be seeded
/// per episode; the result does not depend on scheduling.
pub fn evaluate<A, F>(
    make_agent: F,
    ranges: &ConfigRanges,
    env_config: &EnvConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<f64>>
where
    A: Agent,
    F: Fn(u64) -> A + Sync,
{
    (0..n_episodes as u64)
        .into_par_iter()
        .map(|i| {
            let (network, env_seed) = episode_setup(ranges, seed, i);
            let mut agent = make_agent(i);
            run_episode(&mut agent, network, env_config, env_seed)
        })
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    mean(&values.iter().map(|v| (v - m) * (v - m)).collect::<Vec<_>>())
}
