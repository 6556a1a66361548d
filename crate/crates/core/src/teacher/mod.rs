//! The black-box teacher: a small tanh MLP trained with PPO, plus rollout
//! collection into the offline distillation dataset.

mod ppo;
mod rollout;

pub use ppo::{evaluate_teacher, train_teacher, train_teacher_from, TrainConfig, TrainReport, TrainedTeacher};
pub use rollout::{collect_rollouts, RolloutDataset, SampleMeta};

use std::fmt::Write as _;
use std::path::Path;

use crate::agent::Agent;
use crate::netsim::ObsHistory;
use crate::nn::Mlp;
use crate::{seeding, Error, Result};

pub const DEFAULT_HIDDEN: [usize; 2] = [32, 16];

/// Actor-critic parameter set. Inference uses the actor only: the action is
/// `tanh(actor(x))` with no sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherPolicy {
    actor: Mlp,
    critic: Mlp,
    log_std: f64,
    history_len: usize,
}

impl TeacherPolicy {
    pub fn new(history_len: usize, hidden: &[usize], init_log_std: f64, seed: u64) -> Self {
        let sizes = layer_sizes(history_len, hidden);
        Self {
            actor: Mlp::new(&sizes, 0.01, &mut seeding::rng_at(seed, &[0])),
            critic: Mlp::new(&sizes, 1.0, &mut seeding::rng_at(seed, &[1])),
            log_std: init_log_std,
            history_len,
        }
    }

    /// All-zero parameters: always emits action 0.
    pub fn zeros(history_len: usize, hidden: &[usize]) -> Self {
        let sizes = layer_sizes(history_len, hidden);
        Self {
            actor: Mlp::zeros(&sizes),
            critic: Mlp::zeros(&sizes),
            log_std: 0.0,
            history_len,
        }
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    pub fn input_dim(&self) -> usize {
        3 * self.history_len
    }

    /// Layer widths, input first.
    pub fn architecture(&self) -> &[usize] {
        self.actor.sizes()
    }

    /// Multiply-accumulates per decision (actor only).
    pub fn forward_flops(&self) -> usize {
        self.actor.macs()
    }

    pub fn log_std(&self) -> f64 {
        self.log_std
    }

    pub(crate) fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Mlp, &mut Mlp, &mut f64) {
        (&mut self.actor, &mut self.critic, &mut self.log_std)
    }

    pub(crate) fn critic(&self) -> &Mlp {
        &self.critic
    }

    /// Deterministic action for an observation history.
    pub fn forward(&self, obs: &ObsHistory) -> Result<f64> {
        if obs.features().len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: obs.features().len(),
            });
        }
        Ok(self.act_features(obs.features()))
    }

    /// [`forward`](Self::forward) on raw features without the length check.
    pub fn act_features(&self, features: &[f64]) -> f64 {
        self.actor.forward(features).tanh()
    }

    pub fn value(&self, features: &[f64]) -> f64 {
        self.critic.forward(features)
    }

    /// Text format: a header line, the layer widths, `log_std`, then one line of
    /// parameters each for the actor and the critic.
    pub fn to_text(&self) -> String {
        let mut out = String::from("spcc-teacher 1\n");
        let arch: Vec<String> = self.architecture().iter().map(|s| s.to_string()).collect();
        writeln!(out, "layers {}", arch.join(" ")).unwrap();
        writeln!(out, "log_std {}", self.log_std).unwrap();
        for (name, net) in [("actor", &self.actor), ("critic", &self.critic)] {
            let params: Vec<String> = net.params().iter().map(|p| p.to_string()).collect();
            writeln!(out, "{name} {}", params.join(" ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Format(format!("teacher file: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("spcc-teacher 1") {
            return Err(bad("missing header"));
        }
        let mut field = |name: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing {name}")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(bad(&format!("expected {name}")));
            }
            Ok(parts.map(str::to_owned).collect())
        };
        let sizes: Vec<usize> = field("layers")?
            .iter()
            .map(|s| s.parse().map_err(|_| bad("layer width")))
            .collect::<Result<_>>()?;
        if sizes.len() < 2 || !sizes[0].is_multiple_of(3) || sizes[sizes.len() - 1] != 1 {
            return Err(bad("bad architecture"));
        }
        let log_std = field("log_std")?
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("log_std"))?;
        let mut nets = Vec::new();
        for name in ["actor", "critic"] {
            let params: Vec<f64> = field(name)?
                .iter()
                .map(|s| s.parse().map_err(|_| bad("parameter")))
                .collect::<Result<_>>()?;
            nets.push(Mlp::from_params(&sizes, params).ok_or_else(|| bad("parameter count"))?);
        }
        let critic = nets.pop().unwrap();
        let actor = nets.pop().unwrap();
        Ok(Self {
            history_len: sizes[0] / 3,
            actor,
            critic,
            log_std,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn layer_sizes(history_len: usize, hidden: &[usize]) -> Vec<usize> {
    let mut sizes = vec![3 * history_len];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    sizes
}

impl Agent for &TeacherPolicy {
    fn reset(&mut self) {}

    fn act(&mut self, obs: &ObsHistory) -> f64 {
        self.act_features(obs.features())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::Observation;

    #[test]
    fn zero_policy_holds_rate() {
        let p = TeacherPolicy::zeros(10, &DEFAULT_HIDDEN);
        let mut obs = ObsHistory::new(10);
        obs.push(Observation {
            latency_inflation: 0.4,
            latency_ratio: 3.0,
            send_ratio: 2.0,
        });
        assert_eq!(p.forward(&obs).unwrap(), 0.0);
    }

    #[test]
    fn default_architecture_flops() {
        let p = TeacherPolicy::new(10, &DEFAULT_HIDDEN, -0.5, 1);
        assert_eq!(p.architecture(), &[30, 32, 16, 1]);
        assert_eq!(p.forward_flops(), 1488);
    }

    #[test]
    fn inference_is_deterministic_and_bounded() {
        let p = TeacherPolicy::new(10, &DEFAULT_HIDDEN, -0.5, 7);
        let obs = ObsHistory::new(10);
        let a = p.forward(&obs).unwrap();
        assert_eq!(a, p.forward(&obs).unwrap());
        assert!((-1.0..=1.0).contains(&a));
    }

    #[test]
    fn wrong_history_length_is_rejected() {
        let p = TeacherPolicy::new(10, &DEFAULT_HIDDEN, -0.5, 7);
        assert!(matches!(
            p.forward(&ObsHistory::new(4)),
            Err(Error::DimensionMismatch { expected: 30, got: 12 })
        ));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let p = TeacherPolicy::new(10, &DEFAULT_HIDDEN, -0.37, 11);
        let q = TeacherPolicy::from_text(&p.to_text()).unwrap();
        assert_eq!(p, q);
        assert!(TeacherPolicy::from_text("garbage").is_err());
    }
}
