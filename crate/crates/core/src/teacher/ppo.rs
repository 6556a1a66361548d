//! PPO-clip with generalized advantage estimation.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{TeacherPolicy, DEFAULT_HIDDEN};
use crate::agent::{episode_setup, evaluate, mean, RandomAgent};
use crate::netsim::{ConfigRanges, Env, EnvConfig, RETURN_SCALE};
use crate::nn::{clip_grad_norm, Adam, Trace};
use crate::{seeding, Error, Result};

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Environment steps to train for; rounded up to whole batches.
    pub total_steps: usize,
    pub episodes_per_batch: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub init_log_std: f64,
    pub min_log_std: f64,
    pub hidden: Vec<usize>,
    pub env: EnvConfig,
    /// Required ratio of trained to random-policy return.
    pub improvement_factor: f64,
    /// Number of most recent training episodes used for the convergence check.
    pub check_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 1_000_000,
            episodes_per_batch: 8,
            epochs: 4,
            minibatch_size: 256,
            learning_rate: 1e-3,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            init_log_std: -0.5,
            min_log_std: -2.5,
            hidden: DEFAULT_HIDDEN.to_vec(),
            env: EnvConfig::default(),
            improvement_factor: 5.0,
            check_window: 100,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean scaled return of each batch of training episodes.
    pub curve: Vec<f64>,
    pub episodes: usize,
    pub steps: usize,
    /// Mean return of the last `check_window` training episodes.
    pub final_return: f64,
    /// Mean return of random actions on the same episodes.
    pub random_return: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedTeacher {
    pub policy: TeacherPolicy,
    pub report: TrainReport,
}

struct Transition {
    features: Vec<f64>,
    action: f64,
    log_prob: f64,
    value: f64,
    reward: f64,
}

struct EpisodeBuffer {
    steps: Vec<Transition>,
    bootstrap: f64,
    raw_return: f64,
}

fn log_prob(action: f64, mean: f64, log_std: f64) -> f64 {
    let z = (action - mean) / log_std.exp();
    -0.5 * z * z - log_std - 0.5 * LOG_2PI
}

fn collect_episode(
    policy: &TeacherPolicy,
    ranges: &ConfigRanges,
    env_config: &EnvConfig,
    seed: u64,
    index: u64,
) -> Result<EpisodeBuffer> {
    let (network, env_seed) = episode_setup(ranges, seed, index);
    let mut env = Env::new(network, env_config.clone(), env_seed)?;
    let mut noise = seeding::rng_at(seed, &[index, 2]);
    let std = policy.log_std().exp();
    let mut steps = Vec::with_capacity(env_config.episode_mis);
    let mut raw_return = 0.0;
    while !env.is_done() {
        let features = env.observation().features().to_vec();
        let mean = policy.act_features(&features);
        let eps: f64 = StandardNormal.sample(&mut noise);
        let action = mean + std * eps;
        let value = policy.value(&features);
        let out = env.step(action.clamp(-1.0, 1.0))?;
        raw_return += out.reward;
        steps.push(Transition {
            log_prob: log_prob(action, mean, policy.log_std()),
            features,
            action,
            value,
            reward: out.reward * RETURN_SCALE,
        });
    }
    Ok(EpisodeBuffer {
        bootstrap: policy.value(env.observation().features()),
        steps,
        raw_return: raw_return * RETURN_SCALE,
    })
}

/// Running variance of the discounted return, used to scale rewards.
struct ReturnScaler {
    count: f64,
    mean: f64,
    m2: f64,
}

impl ReturnScaler {
    fn new() -> Self {
        Self {
            count: 0.0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    fn observe(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            (self.m2 / self.count).sqrt().max(1e-4)
        }
    }
}

struct Sample {
    features: Vec<f64>,
    action: f64,
    log_prob: f64,
    advantage: f64,
    target: f64,
}

/// Trains a teacher on episodes drawn from `ranges`.
///
/// Fails with [`Error::NotConverged`] when the last `check_window` training
/// episodes do not reach `improvement_factor` times the random-policy return
/// on the same episodes. A zero step budget returns the initial policy.
pub fn train_teacher(
    ranges: &ConfigRanges,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainedTeacher> {
    train_teacher_from(None, ranges, config, seed)
}

/// Like [`train_teacher`], but continues from `init` when given instead of a
/// fresh network. `init` must match the configured architecture.
pub fn train_teacher_from(
    init: Option<&TeacherPolicy>,
    ranges: &ConfigRanges,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainedTeacher> {
    ranges.validate()?;
    if config.episodes_per_batch == 0 || config.minibatch_size == 0 {
        return Err(Error::InvalidArgument("batch sizes must be positive".into()));
    }
    let mut policy = match init {
        Some(p) => {
            if p.history_len() != config.env.history_len || p.architecture()[1..p.architecture().len() - 1] != config.hidden[..] {
                return Err(Error::InvalidArgument(format!(
                    "initial policy {:?} does not match hidden layers {:?} and history {}",
                    p.architecture(),
                    config.hidden,
                    config.env.history_len
                )));
            }
            p.clone()
        }
        None => TeacherPolicy::new(
            config.env.history_len,
            &config.hidden,
            config.init_log_std,
            seeding::derive(seed, &[0]),
        ),
    };
    let episode_seed = seeding::derive(seed, &[1]);
    let mut shuffle_rng = seeding::rng_at(seed, &[2]);
    let (n_actor, n_critic) = (
        policy.actor().params().len(),
        policy.critic().params().len(),
    );
    let mut actor_opt = Adam::new(n_actor + 1, config.learning_rate);
    let mut critic_opt = Adam::new(n_critic, config.learning_rate);
    let mut scaler = ReturnScaler::new();

    let mut report = TrainReport::default();
    let mut returns = Vec::new();
    let steps_per_episode = config.env.episode_mis;
    while report.steps < config.total_steps {
        let first = report.episodes as u64;
        let batch: Vec<EpisodeBuffer> = (first..first + config.episodes_per_batch as u64)
            .into_par_iter()
            .map(|i| collect_episode(&policy, ranges, &config.env, episode_seed, i))
            .collect::<Result<_>>()?;
        report.episodes += batch.len();
        report.steps += batch.len() * steps_per_episode;
        let batch_returns: Vec<f64> = batch.iter().map(|e| e.raw_return).collect();
        report.curve.push(mean(&batch_returns));
        returns.extend(batch_returns);

        for ep in &batch {
            let mut acc = 0.0;
            for t in &ep.steps {
                acc = acc * config.gamma + t.reward;
                scaler.observe(acc);
            }
        }
        let scale = scaler.std();
        let mut samples = Vec::with_capacity(batch.len() * steps_per_episode);
        for ep in batch {
            let n = ep.steps.len();
            let mut adv = vec![0.0; n];
            let mut gae = 0.0;
            for t in (0..n).rev() {
                let next_value = if t + 1 < n { ep.steps[t + 1].value } else { ep.bootstrap };
                let r = (ep.steps[t].reward / scale).clamp(-10.0, 10.0);
                let delta = r + config.gamma * next_value - ep.steps[t].value;
                gae = delta + config.gamma * config.gae_lambda * gae;
                adv[t] = gae;
            }
            for (t, tr) in ep.steps.into_iter().enumerate() {
                samples.push(Sample {
                    target: adv[t] + tr.value,
                    advantage: adv[t],
                    features: tr.features,
                    action: tr.action,
                    log_prob: tr.log_prob,
                });
            }
        }
        let adv_mean = mean(&samples.iter().map(|s| s.advantage).collect::<Vec<_>>());
        let adv_std = (samples
            .iter()
            .map(|s| (s.advantage - adv_mean).powi(2))
            .sum::<f64>()
            / samples.len() as f64)
            .sqrt()
            .max(1e-8);
        for s in &mut samples {
            s.advantage = (s.advantage - adv_mean) / adv_std;
        }

        update(
            &mut policy,
            &samples,
            config,
            &mut actor_opt,
            &mut critic_opt,
            &mut shuffle_rng,
        );
    }

    if report.episodes == 0 {
        return Ok(TrainedTeacher { policy, report });
    }
    let window = config.check_window.min(report.episodes).max(1);
    let first = (report.episodes - window) as u64;
    report.final_return = mean(&returns[returns.len() - window..]);
    let random = (first..first + window as u64)
        .into_par_iter()
        .map(|i| {
            let (network, env_seed) = episode_setup(ranges, episode_seed, i);
            let mut agent = RandomAgent::new(seeding::derive(seed, &[3, i]));
            crate::agent::run_episode(&mut agent, network, &config.env, env_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    report.random_return = mean(&random);
    if report.final_return < config.improvement_factor * report.random_return {
        return Err(Error::NotConverged {
            trained: report.final_return,
            random: report.random_return,
            factor: config.improvement_factor,
            curve: report.curve,
        });
    }
    Ok(TrainedTeacher { policy, report })
}

fn update(
    policy: &mut TeacherPolicy,
    samples: &[Sample],
    config: &TrainConfig,
    actor_opt: &mut Adam,
    critic_opt: &mut Adam,
    rng: &mut rand_chacha::ChaCha8Rng,
) {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut trace = Trace::default();
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.minibatch_size) {
            let (actor, critic, log_std) = policy.parts_mut();
            let n_actor = actor.params().len();
            let mut g_actor = vec![0.0; n_actor + 1];
            let mut g_critic = vec![0.0; critic.params().len()];
            let inv = 1.0 / chunk.len() as f64;
            let std = log_std.exp();
            for &i in chunk {
                let s = &samples[i];
                let z = actor.forward_traced(&s.features, &mut trace);
                let mu = z.tanh();
                let new_lp = log_prob(s.action, mu, *log_std);
                let ratio = (new_lp - s.log_prob).exp();
                let clipped = (s.advantage >= 0.0 && ratio > 1.0 + config.clip)
                    || (s.advantage < 0.0 && ratio < 1.0 - config.clip);
                if !clipped {
                    // d(-ratio * A)/d log_prob
                    let d_lp = -ratio * s.advantage * inv;
                    let eps = (s.action - mu) / std;
                    let d_mu = eps / std;
                    actor.backward(&trace, d_lp * d_mu * (1.0 - mu * mu), &mut g_actor[..n_actor]);
                    g_actor[n_actor] += d_lp * (eps * eps - 1.0);
                }
                g_actor[n_actor] -= config.entropy_coef * inv;

                let v = critic.forward_traced(&s.features, &mut trace);
                critic.backward(&trace, config.value_coef * (v - s.target) * inv, &mut g_critic);
            }
            clip_grad_norm(&mut g_actor, config.max_grad_norm);
            clip_grad_norm(&mut g_critic, config.max_grad_norm);
            let mut actor_params = actor.params().to_vec();
            actor_params.push(*log_std);
            actor_opt.step(&mut actor_params, &g_actor);
            *log_std = actor_params.pop().unwrap().max(config.min_log_std);
            actor.params_mut().copy_from_slice(&actor_params);
            critic_opt.step(critic.params_mut(), &g_critic);
        }
    }
}

/// Mean deterministic-policy return over seeded episodes.
pub fn evaluate_teacher(
    policy: &TeacherPolicy,
    ranges: &ConfigRanges,
    env_config: &EnvConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    evaluate(|_| policy, ranges, env_config, n_episodes, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_budget_returns_initial_policy() {
        let config = TrainConfig {
            total_steps: 0,
            ..Default::default()
        };
        let trained = train_teacher(&ConfigRanges::baseline(), &config, 3).unwrap();
        let init = TeacherPolicy::new(10, &DEFAULT_HIDDEN, config.init_log_std, seeding::derive(3, &[0]));
        assert_eq!(trained.policy, init);
        assert!(trained.report.curve.is_empty());
    }

    #[test]
    fn log_prob_is_gaussian_density() {
        let lp = log_prob(0.3, 0.1, (0.5f64).ln());
        let expected = -0.5 * (0.2f64 / 0.5).powi(2) - 0.5f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((lp - expected).abs() < 1e-12);
    }
}
