//! Greedy growth of a policy tree from teacher data.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::entropy::entropy_estimate;
use super::frame::Frame;
use super::gp::{run_condition, run_sr_on, GenStats, GpConfig};
use crate::symtree::{Expr, Grammar, Node, PolicyTree};
use crate::teacher::RolloutDataset;
use crate::{seeding, Error, Result};

/// Actions at or below this start an overload-recovery regime.
pub const RECOVERY_ENTER: f64 = -0.5;
/// Actions at or above this end it.
pub const RECOVERY_EXIT: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    /// Nodes whose action entropy is below this (nats) become constant leaves.
    pub theta_entropy: f64,
    pub depth_max: usize,
    /// Node expansions allowed before unsolved nodes are finalised.
    pub cnt_max: usize,
    /// Probability of splitting a high-entropy node above the depth limit.
    pub p1: f64,
    /// Probability of regressing a leaf expression at the depth limit.
    pub p2: f64,
    /// Probability of denoising at the depth limit.
    pub p3: f64,
    pub default_action: f64,
    pub entropy_bins: usize,
    /// Mark strongly negative leaves as entering recovery and strongly positive
    /// ones as leaving it.
    pub state_flags: bool,
    /// Splits leaving fewer rows on a side gain nothing.
    pub min_split_rows: usize,
    /// GP settings for split conditions.
    pub condition_gp: GpConfig,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            theta_entropy: 0.5,
            depth_max: 6,
            cnt_max: 512,
            p1: 0.8,
            p2: 0.6,
            p3: 0.2,
            default_action: 0.0,
            entropy_bins: 32,
            state_flags: true,
            min_split_rows: 10,
            condition_gp: GpConfig {
                population_size: 300,
                generations: 15,
                tournament_size: 10,
                parsimony: 0.002,
                max_expr_depth: 4,
                init_depth: 3,
                max_fit_rows: 1500,
                grammar: Grammar {
                    recent: 3,
                    ..Grammar::default()
                },
                ..GpConfig::default()
            },
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.p1)
            && self.p2 >= 0.0
            && self.p3 >= 0.0
            && self.p2 + self.p3 <= 1.0 + 1e-12
            && self.depth_max >= 1
            && self.cnt_max >= 1
            && self.entropy_bins >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "build config needs 0<=p1<=1, p2+p3<=1, depth_max>=1, cnt_max>=1".into(),
            ))
        }
    }
}

/// GP run record for the fitness log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpRun {
    pub node: usize,
    pub kind: String,
    pub stats: Vec<GenStats>,
}

#[derive(Clone, Debug)]
pub struct BuildOutcome {
    pub tree: PolicyTree,
    pub expansions: usize,
    pub runs: Vec<GpRun>,
    pub unconverged_leaves: usize,
}

impl BuildOutcome {
    pub fn generations(&self) -> usize {
        self.runs.iter().map(|r| r.stats.len().saturating_sub(1)).sum()
    }
}

/// Internal state implied by a sequence of teacher actions: entered after an
/// action `<= RECOVERY_ENTER`, left after one `>= RECOVERY_EXIT`. Each
/// episode starts in state 0.
pub fn regime_states(dataset: &RolloutDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(dataset.len());
    let mut state = 0u8;
    let mut prev_episode = None;
    for (m, &a) in dataset.meta.iter().zip(&dataset.y) {
        if prev_episode != Some(m.episode) || m.mi == 0 {
            state = 0;
        }
        prev_episode = Some(m.episode);
        out.push(state);
        state = next_state(state, a);
    }
    out
}

fn next_state(state: u8, action: f64) -> u8 {
    if action <= RECOVERY_ENTER {
        1
    } else if action >= RECOVERY_EXIT {
        0
    } else {
        state
    }
}

#[derive(Clone, Debug)]
enum Slot {
    Open,
    Leaf(Expr),
    Split { condition: Expr, children: [usize; 2] },
}

#[derive(Clone, Debug)]
struct BNode {
    parent: Option<usize>,
    depth: usize,
    rows: Vec<usize>,
    slot: Slot,
    alive: bool,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    state: &'a [u8],
    config: &'a BuildConfig,
    leaf_gp: &'a GpConfig,
    seed: u64,
    nodes: Vec<BNode>,
    queue: VecDeque<usize>,
    runs: Vec<GpRun>,
    gp_calls: u64,
    unconverged: usize,
}

impl Builder<'_> {
    fn push_child(&mut self, parent: usize, rows: Vec<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(BNode {
            parent: Some(parent),
            depth: self.nodes[parent].depth + 1,
            rows,
            slot: Slot::Open,
            alive: true,
        });
        self.queue.push_back(id);
        id
    }

    fn next_seed(&mut self) -> u64 {
        self.gp_calls += 1;
        seeding::derive(self.seed, &[1, self.gp_calls])
    }

    fn split(&mut self, id: usize) -> Result<()> {
        let mut gp = self.config.condition_gp.clone();
        gp.seed = self.next_seed();
        gp.grammar.history_len = self.x[0].len() / 3;
        gp.grammar.recent = gp.grammar.recent.min(gp.grammar.history_len);
        gp.grammar.state &= self.config.state_flags;
        let rows = self.nodes[id].rows.clone();
        let (result, _gain) = run_condition(
            self.x,
            self.y,
            self.state,
            &rows,
            self.config.entropy_bins,
            self.config.min_split_rows,
            &gp,
        )?;
        self.runs.push(GpRun {
            node: id,
            kind: "condition".into(),
            stats: result.log.clone(),
        });
        let mask = Frame::from_indices(self.x, self.state, &rows).eval_bool(&result.best);
        let (mut yes, mut no) = (Vec::new(), Vec::new());
        for (r, m) in rows.into_iter().zip(mask) {
            if m {
                yes.push(r)
            } else {
                no.push(r)
            }
        }
        let t = self.push_child(id, yes);
        let f = self.push_child(id, no);
        self.nodes[id].slot = Slot::Split {
            condition: result.best,
            children: [t, f],
        };
        Ok(())
    }

    fn regress(&mut self, id: usize) -> Result<()> {
        let mut gp = self.leaf_gp.clone();
        gp.seed = self.next_seed();
        gp.grammar.history_len = self.x[0].len() / 3;
        gp.grammar.recent = gp.grammar.recent.min(gp.grammar.history_len);
        gp.grammar.state &= self.config.state_flags;
        let rows = self.nodes[id].rows.clone();
        let result = run_sr_on(self.x, self.y, self.state, &rows, &gp)?;
        if !result.converged {
            self.unconverged += 1;
        }
        self.runs.push(GpRun {
            node: id,
            kind: "leaf".into(),
            stats: result.log,
        });
        self.nodes[id].slot = Slot::Leaf(result.best);
        Ok(())
    }

    fn remove_subtree(&mut self, id: usize) {
        let mut stack = match &self.nodes[id].slot {
            Slot::Split { children, .. } => children.to_vec(),
            _ => vec![],
        };
        while let Some(c) = stack.pop() {
            self.nodes[c].alive = false;
            if let Slot::Split { children, .. } = &self.nodes[c].slot {
                stack.extend(children);
            }
        }
        let nodes = &self.nodes;
        self.queue.retain(|&n| nodes[n].alive);
        self.nodes[id].slot = Slot::Open;
    }

    fn to_node(&self, id: usize) -> Node {
        let n = &self.nodes[id];
        match &n.slot {
            Slot::Split {
                condition,
                children,
            } => Node::condition(
                condition.clone(),
                self.to_node(children[0]),
                self.to_node(children[1]),
            ),
            Slot::Leaf(policy) => {
                let set = if self.config.state_flags && !n.rows.is_empty() {
                    let m = n.rows.iter().map(|&r| self.y[r]).sum::<f64>() / n.rows.len() as f64;
                    if m <= RECOVERY_ENTER {
                        Some(1)
                    } else if m >= RECOVERY_EXIT {
                        Some(0)
                    } else {
                        None
                    }
                } else {
                    None
                };
                Node::Action {
                    policy: policy.clone(),
                    set,
                }
            }
            Slot::Open => Node::action(self.config.default_action),
        }
    }
}

/// Grows a policy tree imitating `dataset`.
///
/// Unsolved nodes are processed first-in first-out. Low-entropy nodes take
/// the mean action; others split (probability `p1`) or are denoised to the
/// default action. At `depth_max` a leaf expression is regressed (`p2`), the
/// node is denoised (`p3`), or a uniformly chosen proper ancestor is re-split
/// after discarding its subtree. Nodes left unsolved after `cnt_max`
/// expansions take the default action, as do nodes that receive no rows.
pub fn build_tree(
    dataset: &RolloutDataset,
    config: &BuildConfig,
    leaf_gp: &GpConfig,
    seed: u64,
) -> Result<BuildOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("rollout dataset"));
    }
    let state = if config.state_flags {
        regime_states(dataset)
    } else {
        vec![0; dataset.len()]
    };
    build_tree_with_state(&dataset.x, &dataset.y, &state, config, leaf_gp, seed)
}

/// [`build_tree`] on raw arrays with an explicit internal-state column.
pub fn build_tree_with_state(
    x: &[Vec<f64>],
    y: &[f64],
    state: &[u8],
    config: &BuildConfig,
    leaf_gp: &GpConfig,
    seed: u64,
) -> Result<BuildOutcome> {
    config.validate()?;
    if y.is_empty() || x.len() != y.len() {
        return Err(Error::Empty("training rows"));
    }
    let mut b = Builder {
        x,
        y,
        state,
        config,
        leaf_gp,
        seed,
        nodes: vec![BNode {
            parent: None,
            depth: 0,
            rows: (0..y.len()).collect(),
            slot: Slot::Open,
            alive: true,
        }],
        queue: VecDeque::from([0]),
        runs: Vec::new(),
        gp_calls: 0,
        unconverged: 0,
    };
    let mut rng = seeding::rng_at(seed, &[0]);
    let mut cnt = 0;
    while cnt < config.cnt_max {
        let Some(id) = b.queue.pop_front() else { break };
        cnt += 1;
        if b.nodes[id].rows.is_empty() {
            b.nodes[id].slot = Slot::Leaf(Expr::Const(config.default_action));
            continue;
        }
        let y_sub: Vec<f64> = b.nodes[id].rows.iter().map(|&r| y[r]).collect();
        if entropy_estimate(&y_sub, config.entropy_bins)? < config.theta_entropy {
            let mean = y_sub.iter().sum::<f64>() / y_sub.len() as f64;
            b.nodes[id].slot = Slot::Leaf(Expr::Const(mean));
        } else if b.nodes[id].depth < config.depth_max {
            if rng.random_bool(config.p1) {
                b.split(id)?;
            } else {
                b.nodes[id].slot = Slot::Leaf(Expr::Const(config.default_action));
            }
        } else {
            let r: f64 = rng.random();
            if r < config.p2 {
                b.regress(id)?;
            } else if r < config.p2 + config.p3 {
                b.nodes[id].slot = Slot::Leaf(Expr::Const(config.default_action));
            } else {
                let mut path = Vec::new();
                let mut p = b.nodes[id].parent;
                while let Some(a) = p {
                    path.push(a);
                    p = b.nodes[a].parent;
                }
                let target = path[rng.random_range(0..path.len())];
                b.remove_subtree(target);
                b.split(target)?;
            }
        }
    }
    let tree = PolicyTree::new(b.to_node(0));
    Ok(BuildOutcome {
        tree,
        expansions: cnt,
        runs: b.runs,
        unconverged_leaves: b.unconverged,
    })
}

/// Row indices reaching each tree node, in pre-order.
pub fn node_slices(tree: &PolicyTree, x: &[Vec<f64>], state: &[u8]) -> Vec<Vec<usize>> {
    fn go(n: &Node, rows: Vec<usize>, x: &[Vec<f64>], state: &[u8], out: &mut Vec<Vec<usize>>) {
        out.push(rows.clone());
        if let Node::Condition {
            condition,
            if_true,
            if_false,
        } = n
        {
            let (mut t, mut f) = (Vec::new(), Vec::new());
            for r in rows {
                if condition.eval_bool(&x[r], state.get(r).copied().unwrap_or(0)) {
                    t.push(r);
                } else {
                    f.push(r);
                }
            }
            go(if_true, t, x, state, out);
            go(if_false, f, x, state, out);
        }
    }
    let mut out = Vec::new();
    go(&tree.root, (0..x.len()).collect(), x, state, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symtree::AgentState;

    fn small() -> (BuildConfig, GpConfig) {
        let mut c = BuildConfig {
            state_flags: false,
            ..BuildConfig::default()
        };
        c.condition_gp.population_size = 60;
        c.condition_gp.generations = 4;
        let leaf = GpConfig {
            population_size: 60,
            generations: 4,
            ..GpConfig::default()
        };
        (c, leaf)
    }

    fn noisy_rows(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = seeding::rng(1);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..30).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (x, y)
    }

    #[test]
    fn constant_actions_give_one_leaf() {
        let (x, _) = noisy_rows(50);
        let y = vec![0.5; 50];
        let (c, leaf) = small();
        let out = build_tree_with_state(&x, &y, &[0; 50], &c, &leaf, 0).unwrap();
        assert_eq!(out.tree, PolicyTree::constant(0.5));
        assert_eq!(out.expansions, 1);
    }

    #[test]
    fn budget_of_one_finalises_with_default() {
        let (x, y) = noisy_rows(200);
        let (mut c, leaf) = small();
        c.cnt_max = 1;
        c.p1 = 1.0;
        c.default_action = 0.25;
        let out = build_tree_with_state(&x, &y, &[0; 200], &c, &leaf, 0).unwrap();
        assert_eq!(out.expansions, 1);
        assert!(out.tree.depth() <= 1);
        let mut state = AgentState::new();
        for r in &x {
            assert_eq!(out.tree.eval(r, &mut state), 0.25);
        }
    }

    #[test]
    fn validate_rejects() {
        let bad = BuildConfig {
            p2: 0.7,
            p3: 0.5,
            ..BuildConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(BuildConfig {
            depth_max: 0,
            ..BuildConfig::default()
        }
        .validate()
        .is_err());
    }
}
