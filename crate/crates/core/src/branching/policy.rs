use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::decider::{smooth, DeciderConfig, KnnDecider};
use crate::agent::Agent;
use crate::netsim::{ConfigRanges, ObsHistory};
use crate::symtree::{AgentState, PolicyTree};
use crate::{Error, Result};

/// The network conditions one branch is trained for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchContext {
    pub id: usize,
    pub bandwidth: (f64, f64),
    pub latency: (f64, f64),
    pub queue: (u32, u32),
    pub loss: (f64, f64),
    pub return_centroid: f64,
    pub members: usize,
    /// Raw min/max of the member configs before banding.
    pub extremes: ConditionExtremes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionExtremes {
    pub bandwidth: (f64, f64),
    pub latency: (f64, f64),
    pub queue: (u32, u32),
    pub loss: (f64, f64),
}

impl BranchContext {
    pub fn ranges(&self) -> ConfigRanges {
        ConfigRanges {
            bandwidth: self.bandwidth,
            latency: self.latency,
            queue: self.queue,
            loss: self.loss,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchedPolicy {
    pub contexts: Vec<BranchContext>,
    pub trees: Vec<PolicyTree>,
    pub decider: KnnDecider,
    pub config: DeciderConfig,
    pub history_len: usize,
}

#[derive(Serialize, Deserialize)]
struct DeciderMeta {
    neighbors: usize,
    window: usize,
    max_exemplars: usize,
    subsample_seed: u64,
    history_len: usize,
    branches: usize,
}

impl BranchedPolicy {
    pub fn new(
        contexts: Vec<BranchContext>,
        trees: Vec<PolicyTree>,
        decider: KnnDecider,
        config: DeciderConfig,
        history_len: usize,
    ) -> Result<Self> {
        let p = Self {
            contexts,
            trees,
            decider,
            config,
            history_len,
        };
        p.validate()?;
        Ok(p)
    }

    /// One context and one tree per branch; decider labels name real branches.
    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() || self.contexts.len() != self.trees.len() {
            return Err(Error::InvalidArgument(format!(
                "{} contexts for {} trees",
                self.contexts.len(),
                self.trees.len()
            )));
        }
        if self.trees.len() > 1 && !self.decider.is_fitted() {
            return Err(Error::Unfitted);
        }
        if let Some(bad) = self.decider.labels.iter().find(|&&l| l >= self.trees.len()) {
            return Err(Error::InvalidArgument(format!("decider label {bad} has no branch")));
        }
        if self.decider.is_fitted() && self.decider.dim() != 3 * self.history_len {
            return Err(Error::DimensionMismatch {
                expected: 3 * self.history_len,
                got: self.decider.dim(),
            });
        }
        for t in &self.trees {
            t.check(self.history_len)?;
        }
        Ok(())
    }

    pub fn branches(&self) -> usize {
        self.trees.len()
    }

    /// Smoothed branch for `x`; updates the branch history in `state`.
    pub fn decide_branch(&self, x: &[f64], state: &mut AgentState) -> Result<usize> {
        let raw = if self.trees.len() == 1 {
            0
        } else {
            self.decider.classify(x)?
        };
        let b = smooth(&mut state.branch_history, state.current_branch, raw, self.config.window);
        state.current_branch = Some(b);
        Ok(b)
    }

    /// Clamped action and the branch that produced it.
    pub fn eval(&self, x: &[f64], state: &mut AgentState) -> Result<(f64, usize)> {
        let b = self.decide_branch(x, state)?;
        Ok((self.trees[b].eval(x, state), b))
    }

    /// Decider cost plus the most expensive branch tree.
    pub fn flops(&self) -> usize {
        let decider = if self.trees.len() > 1 { self.decider.flops() } else { 0 };
        decider + self.trees.iter().map(|t| t.flops(self.history_len)).max().unwrap_or(0)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("contexts.json"), serde_json::to_string_pretty(&self.contexts)?)?;
        for (i, t) in self.trees.iter().enumerate() {
            fs::write(dir.join(format!("branch_{i}.tree")), t.to_text())?;
        }
        let meta = DeciderMeta {
            neighbors: self.decider.neighbors,
            window: self.config.window,
            max_exemplars: self.config.max_exemplars,
            subsample_seed: self.config.subsample_seed,
            history_len: self.history_len,
            branches: self.trees.len(),
        };
        fs::write(dir.join("decider.json"), serde_json::to_string_pretty(&meta)?)?;
        let mut w = csv::Writer::from_path(dir.join("decider.csv"))?;
        let dim = 3 * self.history_len;
        let mut header: Vec<String> = (0..dim).map(|i| format!("obs_{i}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (f, l) in self.decider.features.iter().zip(&self.decider.labels) {
            let mut rec: Vec<String> = f.iter().map(|v| format!("{v:?}")).collect();
            rec.push(l.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let contexts: Vec<BranchContext> =
            serde_json::from_str(&fs::read_to_string(dir.join("contexts.json"))?)?;
        let meta: DeciderMeta = serde_json::from_str(&fs::read_to_string(dir.join("decider.json"))?)?;
        let trees = (0..meta.branches)
            .map(|i| PolicyTree::parse(&fs::read_to_string(dir.join(format!("branch_{i}.tree")))?))
            .collect::<Result<Vec<_>>>()?;
        let mut r = csv::Reader::from_path(dir.join("decider.csv"))?;
        let dim = 3 * meta.history_len;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != dim + 1 {
                return Err(Error::Format(format!(
                    "decider row has {} columns, expected {}",
                    rec.len(),
                    dim + 1
                )));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad decider value {s:?}")))
            };
            features.push((0..dim).map(|i| parse(&rec[i])).collect::<Result<Vec<_>>>()?);
            labels.push(
                rec[dim]
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Format(format!("bad decider label {:?}", &rec[dim])))?,
            );
        }
        let decider = if features.is_empty() {
            KnnDecider {
                neighbors: meta.neighbors,
                ..Default::default()
            }
        } else {
            KnnDecider::new(meta.neighbors, features, labels)?
        };
        let config = DeciderConfig {
            neighbors: meta.neighbors,
            window: meta.window,
            max_exemplars: meta.max_exemplars,
            subsample_seed: meta.subsample_seed,
        };
        Self::new(contexts, trees, decider, config, meta.history_len)
    }
}

/// Runs a branched policy as an agent, recording the branch chosen each MI.
pub struct BranchedAgent<'a> {
    pub policy: &'a BranchedPolicy,
    pub state: AgentState,
    pub branch_log: Vec<usize>,
}

impl<'a> BranchedAgent<'a> {
    pub fn new(policy: &'a BranchedPolicy) -> Self {
        Self {
            policy,
            state: AgentState::new(),
            branch_log: Vec::new(),
        }
    }
}

impl Agent for BranchedAgent<'_> {
    fn reset(&mut self) {
        self.state = AgentState {
            internal: 0,
            branch_history: VecDeque::new(),
            current_branch: None,
        };
        self.branch_log.clear();
    }

    fn act(&mut self, obs: &ObsHistory) -> f64 {
        // the decider is validated against the history length on construction
        let (a, b) = self
            .policy
            .eval(obs.features(), &mut self.state)
            .expect("fitted decider of matching width");
        self.branch_log.push(b);
        a
    }

    fn last_branch(&self) -> Option<usize> {
        self.branch_log.last().copied()
    }
}
