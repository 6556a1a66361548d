use std::collections::VecDeque;

use super::expr::{Expr, Sort};
use crate::agent::Agent;
use crate::netsim::ObsHistory;
use crate::{Error, Result};

/// Per-connection memory shared by successive decisions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AgentState {
    /// 0 while stable, 1 while recovering from overload.
    pub internal: u8,
    /// Most recent raw branch decisions, oldest first.
    pub branch_history: VecDeque<usize>,
    /// Branch currently in use.
    pub current_branch: Option<usize>,
}

impl AgentState {
    pub fn new() -> Self {
        Self::default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    /// `if_true` when `condition` holds, `if_false` otherwise.
    Condition {
        condition: Expr,
        if_true: Box<Node>,
        if_false: Box<Node>,
    },
    /// Emits `policy` and optionally overwrites the internal state.
    Action { policy: Expr, set: Option<u8> },
}

impl Node {
    pub fn action(value: f64) -> Self {
        Node::Action {
            policy: Expr::Const(value),
            set: None,
        }
    }

    pub fn condition(condition: Expr, if_true: Node, if_false: Node) -> Self {
        Node::Condition {
            condition,
            if_true: Box::new(if_true),
            if_false: Box::new(if_false),
        }
    }

    fn check(&self, history_len: usize) -> Result<()> {
        match self {
            Node::Condition {
                condition,
                if_true,
                if_false,
            } => {
                if condition.check(history_len)? != Sort::Bool {
                    return Err(Error::Type("condition must be boolean".into()));
                }
                if_true.check(history_len)?;
                if_false.check(history_len)
            }
            Node::Action { policy, set } => {
                if policy.check(history_len)? != Sort::Num {
                    return Err(Error::Type("action must be numeric".into()));
                }
                match set {
                    Some(s) if *s > 1 => Err(Error::Type(format!("state must be 0 or 1, got {s}"))),
                    _ => Ok(()),
                }
            }
        }
    }
}

/// A policy tree. Leaves are always action nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTree {
    pub root: Node,
}

/// Outcome of one decision before clamping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub action: f64,
    /// Index of the visited leaf, counting leaves left to right.
    pub leaf: usize,
    pub set: Option<u8>,
}

impl PolicyTree {
    pub fn new(root: Node) -> Self {
        Self { root }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(Node::action(value))
    }

    pub fn check(&self, history_len: usize) -> Result<()> {
        self.root.check(history_len)
    }

    /// Follows the single root-to-leaf path selected by `x`.
    pub fn decide(&self, x: &[f64], internal: u8) -> Decision {
        let mut node = &self.root;
        let mut leaf = 0;
        loop {
            match node {
                Node::Condition {
                    condition,
                    if_true,
                    if_false,
                } => {
                    if condition.eval_bool(x, internal) {
                        node = if_true;
                    } else {
                        leaf += leaf_count(if_true);
                        node = if_false;
                    }
                }
                Node::Action { policy, set } => {
                    return Decision {
                        action: policy.eval_num(x, internal),
                        leaf,
                        set: *set,
                    }
                }
            }
        }
    }

    /// Clamped action for flat features; applies the leaf's state update.
    pub fn eval(&self, x: &[f64], state: &mut AgentState) -> f64 {
        let d = self.decide(x, state.internal);
        if let Some(s) = d.set {
            state.internal = s;
        }
        clamp_action(d.action)
    }

    pub fn eval_obs(&self, obs: &ObsHistory, state: &mut AgentState) -> f64 {
        self.eval(obs.features(), state)
    }

    /// Worst-case cost of one decision: the most expensive root-to-leaf path.
    pub fn flops(&self, history_len: usize) -> usize {
        fn go(n: &Node, k: usize) -> usize {
            match n {
                Node::Condition {
                    condition,
                    if_true,
                    if_false,
                } => condition.flops(k) + go(if_true, k).max(go(if_false, k)),
                Node::Action { policy, .. } => policy.flops(k),
            }
        }
        go(&self.root, history_len)
    }

    /// Cost of the path actually taken for `x`.
    pub fn path_flops(&self, x: &[f64], internal: u8, history_len: usize) -> usize {
        let mut node = &self.root;
        let mut total = 0;
        loop {
            match node {
                Node::Condition {
                    condition,
                    if_true,
                    if_false,
                } => {
                    total += condition.flops(history_len);
                    node = if condition.eval_bool(x, internal) {
                        if_true
                    } else {
                        if_false
                    };
                }
                Node::Action { policy, .. } => return total + policy.flops(history_len),
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        leaf_count(&self.root)
    }

    pub fn node_count(&self) -> usize {
        fn go(n: &Node) -> usize {
            match n {
                Node::Condition {
                    if_true, if_false, ..
                } => 1 + go(if_true) + go(if_false),
                Node::Action { .. } => 1,
            }
        }
        go(&self.root)
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(n: &Node) -> usize {
            match n {
                Node::Condition {
                    if_true, if_false, ..
                } => 1 + go(if_true).max(go(if_false)),
                Node::Action { .. } => 0,
            }
        }
        go(&self.root)
    }

    /// Node kinds in pre-order: `C` for conditions, `A` for actions.
    pub fn shape(&self) -> String {
        fn go(n: &Node, out: &mut String) {
            match n {
                Node::Condition {
                    if_true, if_false, ..
                } => {
                    out.push('C');
                    go(if_true, out);
                    go(if_false, out);
                }
                Node::Action { .. } => out.push('A'),
            }
        }
        let mut s = String::new();
        go(&self.root, &mut s);
        s
    }
}

fn leaf_count(n: &Node) -> usize {
    match n {
        Node::Condition {
            if_true, if_false, ..
        } => leaf_count(if_true) + leaf_count(if_false),
        Node::Action { .. } => 1,
    }
}

/// Clamps to `[-1, 1]`; non-finite values become 0.
pub fn clamp_action(a: f64) -> f64 {
    if a.is_finite() {
        a.clamp(-1.0, 1.0)
    } else if a == f64::INFINITY {
        1.0
    } else if a == f64::NEG_INFINITY {
        -1.0
    } else {
        0.0
    }
}

/// A tree together with the state of the connection it drives.
#[derive(Clone, Debug)]
pub struct TreeAgent<'a> {
    pub tree: &'a PolicyTree,
    pub state: AgentState,
}

impl<'a> TreeAgent<'a> {
    pub fn new(tree: &'a PolicyTree) -> Self {
        Self {
            tree,
            state: AgentState::new(),
        }
    }
}

impl Agent for TreeAgent<'_> {
    fn reset(&mut self) {
        self.state = AgentState::new();
    }

    fn act(&mut self, obs: &ObsHistory) -> f64 {
        self.tree.eval_obs(obs, &mut self.state)
    }
}
