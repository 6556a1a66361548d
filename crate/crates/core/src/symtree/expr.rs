use serde::{Deserialize, Serialize};
use crate::netsim::Statistic;
use crate::{Error, Result};

/// Magnitude bound for `tan` and `cot`.
pub const TRIG_LIMIT: f64 = 1e6;
/// Upper bound on the argument of `exp`.
pub const EXP_ARG_LIMIT: f64 = 50.0;
/// Tolerance of `is_eq`.
pub const EQ_TOLERANCE: f64 = 1e-9;
/// Divisors smaller than this in magnitude make `/` return 1.
pub const DIV_EPSILON: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryOp {
    Sin,
    Cos,
    Tan,
    Cot,
    Square,
    Cube,
    Sqrt,
    Exp,
    Log,
    Abs,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 10] = [
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Tan,
        UnaryOp::Cot,
        UnaryOp::Square,
        UnaryOp::Cube,
        UnaryOp::Sqrt,
        UnaryOp::Exp,
        UnaryOp::Log,
        UnaryOp::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Cot => "cot",
            UnaryOp::Square => "square",
            UnaryOp::Cube => "cube",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Abs => "abs",
        }
    }

    pub fn flops(self) -> usize {
        match self {
            UnaryOp::Square | UnaryOp::Abs => 1,
            UnaryOp::Cube => 2,
            UnaryOp::Sqrt => 4,
            UnaryOp::Sin | UnaryOp::Cos | UnaryOp::Tan | UnaryOp::Cot => 8,
            UnaryOp::Exp | UnaryOp::Log => 8,
        }
    }

    /// Protected evaluation: finite for every finite input.
    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Tan => x.tan().clamp(-TRIG_LIMIT, TRIG_LIMIT),
            UnaryOp::Cot => {
                let s = x.sin();
                if s == 0.0 {
                    TRIG_LIMIT
                } else {
                    (x.cos() / s).clamp(-TRIG_LIMIT, TRIG_LIMIT)
                }
            }
            UnaryOp::Square => x * x,
            UnaryOp::Cube => x * x * x,
            UnaryOp::Sqrt => x.abs().sqrt(),
            UnaryOp::Exp => x.min(EXP_ARG_LIMIT).exp(),
            UnaryOp::Log => {
                if x <= 0.0 {
                    0.0
                } else {
                    x.ln()
                }
            }
            UnaryOp::Abs => x.abs(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 4] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }

    pub fn flops(self) -> usize {
        match self {
            BinaryOp::Div => 4,
            _ => 1,
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => {
                if b.abs() < DIV_EPSILON {
                    1.0
                } else {
                    a / b
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
}

impl CmpOp {
    pub const ALL: [CmpOp; 3] = [CmpOp::Lt, CmpOp::Le, CmpOp::Eq];

    pub fn name(self) -> &'static str {
        match self {
            CmpOp::Lt => "is_lt",
            CmpOp::Le => "is_le",
            CmpOp::Eq => "is_eq",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => (a - b).abs() <= EQ_TOLERANCE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogicOp {
    And,
    Or,
}

impl LogicOp {
    pub const ALL: [LogicOp; 2] = [LogicOp::And, LogicOp::Or];

    pub fn name(self) -> &'static str {
        match self {
            LogicOp::And => "and",
            LogicOp::Or => "or",
        }
    }
}

/// The two sorts of the expression language.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sort {
    Num,
    Bool,
}

/// Symbolic expression over an observation history and the agent's internal
/// state. Features are addressed like [`crate::netsim::ObsHistory`]: entry `i`
/// (oldest first) of statistic `j` lives at `3 * i + j`.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Entry `i` of a statistic's history, `k - 1` being the latest.
    Get(Statistic, usize),
    /// Least-squares slope of a statistic over the whole history.
    Slope(Statistic),
    /// The agent's internal state flag as a number.
    State,
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    Logic(LogicOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
}

impl Expr {
    pub fn unary(op: UnaryOp, a: Expr) -> Self {
        Expr::Unary(op, Box::new(a))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn compare(op: CmpOp, a: Expr, b: Expr) -> Self {
        Expr::Compare(op, Box::new(a), Box::new(b))
    }

    pub fn logic(op: LogicOp, a: Expr, b: Expr) -> Self {
        Expr::Logic(op, Box::new(a), Box::new(b))
    }

    pub fn negate(a: Expr) -> Self {
        Expr::Not(Box::new(a))
    }

    /// Sort of the root, assuming the expression is well typed.
    pub fn sort(&self) -> Sort {
        match self {
            Expr::Compare(..) | Expr::Logic(..) | Expr::Not(_) => Sort::Bool,
            _ => Sort::Num,
        }
    }

    /// Checks arities, operand sorts and history indices against `history_len`.
    pub fn check(&self, history_len: usize) -> Result<Sort> {
        let want = |e: &Expr, s: Sort| -> Result<()> {
            let got = e.check(history_len)?;
            if got == s {
                Ok(())
            } else {
                Err(Error::Type(format!("expected {s:?} operand, found {got:?}")))
            }
        };
        match self {
            Expr::Const(c) => {
                if c.is_finite() {
                    Ok(Sort::Num)
                } else {
                    Err(Error::Type(format!("non-finite constant {c}")))
                }
            }
            Expr::Get(_, i) => {
                if *i < history_len {
                    Ok(Sort::Num)
                } else {
                    Err(Error::Type(format!(
                        "history index {i} out of range for length {history_len}"
                    )))
                }
            }
            Expr::Slope(_) | Expr::State => Ok(Sort::Num),
            Expr::Unary(_, a) => want(a, Sort::Num).map(|_| Sort::Num),
            Expr::Binary(_, a, b) => {
                want(a, Sort::Num)?;
                want(b, Sort::Num).map(|_| Sort::Num)
            }
            Expr::Compare(_, a, b) => {
                want(a, Sort::Num)?;
                want(b, Sort::Num).map(|_| Sort::Bool)
            }
            Expr::Logic(_, a, b) => {
                want(a, Sort::Bool)?;
                want(b, Sort::Bool).map(|_| Sort::Bool)
            }
            Expr::Not(a) => want(a, Sort::Bool).map(|_| Sort::Bool),
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Get(..) | Expr::Slope(_) | Expr::State => vec![],
            Expr::Unary(_, a) | Expr::Not(a) => vec![a],
            Expr::Binary(_, a, b) | Expr::Compare(_, a, b) | Expr::Logic(_, a, b) => vec![a, b],
        }
    }

    fn children_mut(&mut self) -> Vec<&mut Expr> {
        match self {
            Expr::Const(_) | Expr::Get(..) | Expr::Slope(_) | Expr::State => vec![],
            Expr::Unary(_, a) | Expr::Not(a) => vec![a],
            Expr::Binary(_, a, b) | Expr::Compare(_, a, b) | Expr::Logic(_, a, b) => vec![a, b],
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }

    /// Depth of the deepest node; a single leaf has depth 1.
    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// Nodes in pre-order; index 0 is the root.
    pub fn preorder(&self) -> Vec<&Expr> {
        let mut out = Vec::with_capacity(16);
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            out.push(e);
            stack.extend(e.children().into_iter().rev());
        }
        out
    }

    /// Pre-order node at `index`.
    pub fn subtree(&self, index: usize) -> Option<&Expr> {
        self.preorder().into_iter().nth(index)
    }

    pub fn subtree_mut(&mut self, index: usize) -> Option<&mut Expr> {
        fn go<'a>(e: &'a mut Expr, index: &mut usize) -> Option<&'a mut Expr> {
            if *index == 0 {
                return Some(e);
            }
            *index -= 1;
            for c in e.children_mut() {
                let n = c.node_count();
                if *index < n {
                    return go(c, index);
                }
                *index -= n;
            }
            None
        }
        let mut i = index;
        go(self, &mut i)
    }

    /// Depth (root = 0) of every node, in pre-order.
    pub fn node_depths(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(16);
        let mut stack = vec![(self, 0)];
        while let Some((e, d)) = stack.pop() {
            out.push(d);
            stack.extend(e.children().into_iter().rev().map(|c| (c, d + 1)));
        }
        out
    }

    /// Cost of one evaluation; `slope` costs `2m + 2` over an `m`-long history.
    pub fn flops(&self, history_len: usize) -> usize {
        let own = match self {
            Expr::Const(_) | Expr::Get(..) | Expr::State => 0,
            Expr::Slope(_) => 2 * history_len + 2,
            Expr::Unary(op, _) => op.flops(),
            Expr::Binary(op, ..) => op.flops(),
            Expr::Compare(..) | Expr::Logic(..) | Expr::Not(_) => 1,
        };
        own + self
            .children()
            .iter()
            .map(|c| c.flops(history_len))
            .sum::<usize>()
    }

    pub fn uses_state(&self) -> bool {
        matches!(self, Expr::State) || self.children().iter().any(|c| c.uses_state())
    }

    /// Numeric value over flat history features.
    pub fn eval_num(&self, x: &[f64], state: u8) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Get(s, i) => x[3 * i + s.index()],
            Expr::Slope(s) => slope(x, *s),
            Expr::State => state as f64,
            Expr::Unary(op, a) => op.apply(a.eval_num(x, state)),
            Expr::Binary(op, a, b) => op.apply(a.eval_num(x, state), b.eval_num(x, state)),
            _ => {
                if self.eval_bool(x, state) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Truth value over flat history features.
    pub fn eval_bool(&self, x: &[f64], state: u8) -> bool {
        match self {
            Expr::Compare(op, a, b) => op.apply(a.eval_num(x, state), b.eval_num(x, state)),
            Expr::Logic(LogicOp::And, a, b) => a.eval_bool(x, state) && b.eval_bool(x, state),
            Expr::Logic(LogicOp::Or, a, b) => a.eval_bool(x, state) || b.eval_bool(x, state),
            Expr::Not(a) => !a.eval_bool(x, state),
            _ => self.eval_num(x, state) != 0.0,
        }
    }
}

/// Least-squares slope of one statistic against its history position.
pub fn slope(x: &[f64], stat: Statistic) -> f64 {
    let m = x.len() / 3;
    if m < 2 {
        return 0.0;
    }
    let centre = (m - 1) as f64 / 2.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..m {
        let d = i as f64 - centre;
        num += d * x[3 * i + stat.index()];
        den += d * d;
    }
    num / den
}
