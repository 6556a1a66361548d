use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    compute_observation, compute_reward, mi_duration_for, step_mi, LinkState, MiStats,
    NetworkConfig, ObsHistory, RateAdjust, RewardWeights, DEFAULT_HISTORY_LEN,
};
use crate::{seeding, Error, Result};

/// Episode-level settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub episode_mis: usize,
    pub history_len: usize,
    pub delta: f64,
    pub min_mi: f64,
    pub reward: RewardWeights,
    /// The initial sending rate is drawn uniformly from this range, as a
    /// multiple of the link bandwidth.
    pub init_rate_range: (f64, f64),
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            episode_mis: 400,
            history_len: DEFAULT_HISTORY_LEN,
            delta: RateAdjust::DEFAULT_DELTA,
            min_mi: 0.05,
            reward: RewardWeights::default(),
            init_rate_range: (0.3, 1.5),
        }
    }
}

/// Episode returns are reported as the summed per-MI reward times this scale.
pub const RETURN_SCALE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub stats: MiStats,
}

/// A single-link congestion-control episode.
#[derive(Clone, Debug)]
pub struct Env {
    network: NetworkConfig,
    config: EnvConfig,
    adjust: RateAdjust,
    link: LinkState,
    rng: ChaCha8Rng,
    rate: f64,
    history: ObsHistory,
    prev: Option<MiStats>,
    steps: usize,
    mi_duration: f64,
}

impl Env {
    pub fn new(network: NetworkConfig, config: EnvConfig, seed: u64) -> Result<Self> {
        network.validate()?;
        if config.episode_mis == 0 || config.history_len == 0 {
            return Err(Error::InvalidArgument(
                "episode length and history length must be positive".into(),
            ));
        }
        let mut rng = seeding::rng(seed);
        let (lo, hi) = config.init_rate_range;
        let frac = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let adjust = RateAdjust {
            delta: config.delta,
            ..RateAdjust::for_bandwidth(network.bandwidth)
        };
        Ok(Self {
            rate: (frac * network.bandwidth).clamp(adjust.min_rate, adjust.max_rate),
            history: ObsHistory::new(config.history_len),
            mi_duration: mi_duration_for(&network, config.min_mi),
            network,
            adjust,
            config,
            link: LinkState::default(),
            rng,
            prev: None,
            steps: 0,
        })
    }

    pub fn network(&self) -> &NetworkConfig {
        &self.network
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn observation(&self) -> &ObsHistory {
        &self.history
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.steps >= self.config.episode_mis
    }

    pub fn link(&self) -> &LinkState {
        &self.link
    }

    /// Applies `action` to the sending rate and runs one MI.
    pub fn step(&mut self, action: f64) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::EpisodeFinished(self.steps));
        }
        let action = if action.is_nan() { 0.0 } else { action.clamp(-1.0, 1.0) };
        self.rate = self.adjust.apply(self.rate, action);
        let stats = step_mi(
            &self.network,
            &mut self.link,
            self.rate,
            self.mi_duration,
            &mut self.rng,
        );
        let prev = self.prev.unwrap_or(stats);
        self.history.push(compute_observation(&stats, &prev));
        self.prev = Some(stats);
        self.steps += 1;
        Ok(StepOutcome {
            reward: compute_reward(&stats, &self.config.reward),
            done: self.is_done(),
            stats,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable() -> NetworkConfig {
        NetworkConfig::new(200.0, 0.1, 100, 0.0).unwrap()
    }

    #[test]
    fn episode_terminates_on_schedule() {
        let mut env = Env::new(stable(), EnvConfig::default(), 1).unwrap();
        for i in 0..400 {
            let out = env.step(0.0).unwrap();
            assert_eq!(out.done, i == 399);
        }
        assert!(matches!(env.step(0.0), Err(Error::EpisodeFinished(400))));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let net = NetworkConfig::new(300.0, 0.2, 50, 0.03).unwrap();
        let run = || {
            let mut env = Env::new(net, EnvConfig::default(), 42).unwrap();
            (0..200)
                .map(|i| {
                    let a = ((i as f64) * 0.37).sin();
                    let out = env.step(a).unwrap();
                    (out.reward.to_bits(), env.observation().features().to_vec())
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn neutral_actions_on_underloaded_link_settle() {
        let config = EnvConfig {
            init_rate_range: (0.5, 0.5),
            ..Default::default()
        };
        let mut env = Env::new(stable(), config, 0).unwrap();
        for _ in 0..5 {
            env.step(0.0).unwrap();
        }
        let obs = env.observation().latest();
        assert!(obs.latency_inflation.abs() < 1e-9);
        assert!((obs.latency_ratio - 1.0).abs() < 1e-9);
        assert!((obs.send_ratio - 1.0).abs() < 1e-9);
    }
}
