//! Random well-typed expressions, used to seed and mutate GP populations.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::expr::{BinaryOp, CmpOp, Expr, LogicOp, Sort, UnaryOp};
use crate::netsim::Statistic;

/// Building blocks available to the generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grammar {
    pub history_len: usize,
    /// Only the most recent `recent` history entries are referenced.
    pub recent: usize,
    pub unary: Vec<UnaryOp>,
    pub binary: Vec<BinaryOp>,
    pub compare: Vec<CmpOp>,
    /// Allow `and`, `or` and `not`.
    pub logic: bool,
    pub slope: bool,
    pub state: bool,
    /// Range of freshly drawn constants.
    pub const_range: (f64, f64),
    /// Data-derived constants, drawn with probability `pool_prob`.
    pub const_pool: Vec<f64>,
    pub pool_prob: f64,
    /// Relative weight of constants among terminals.
    pub const_weight: f64,
}

impl Default for Grammar {
    fn default() -> Self {
        Self {
            history_len: crate::netsim::DEFAULT_HISTORY_LEN,
            recent: crate::netsim::DEFAULT_HISTORY_LEN,
            unary: UnaryOp::ALL.to_vec(),
            binary: BinaryOp::ALL.to_vec(),
            compare: CmpOp::ALL.to_vec(),
            logic: true,
            slope: true,
            state: true,
            const_range: (-1.0, 1.0),
            const_pool: Vec::new(),
            pool_prob: 0.5,
            const_weight: 0.3,
        }
    }
}

impl Grammar {
    pub fn constant<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if !self.const_pool.is_empty() && rng.random_bool(self.pool_prob.clamp(0.0, 1.0)) {
            *self.const_pool.choose(rng).unwrap()
        } else {
            let (lo, hi) = self.const_range;
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        }
    }

    fn feature_terminal<R: Rng + ?Sized>(&self, rng: &mut R) -> Expr {
        let stat = *Statistic::ALL.choose(rng).unwrap();
        let slots = 1 + self.slope as usize + self.state as usize;
        let pick = rng.random_range(0..slots * 4);
        if self.state && pick == 0 {
            Expr::State
        } else if self.slope && pick == 1 {
            Expr::Slope(stat)
        } else {
            let k = self.history_len.max(1);
            let recent = self.recent.clamp(1, k);
            Expr::Get(stat, rng.random_range(k - recent..k))
        }
    }

    pub fn terminal<R: Rng + ?Sized>(&self, rng: &mut R) -> Expr {
        if rng.random_bool(self.const_weight.clamp(0.0, 1.0)) {
            Expr::Const(self.constant(rng))
        } else {
            self.feature_terminal(rng)
        }
    }

    /// Numeric expression of depth at most `depth`. With `full`, every branch
    /// grows to the full depth where operators allow it.
    pub fn num<R: Rng + ?Sized>(&self, rng: &mut R, depth: usize, full: bool) -> Expr {
        let n_ops = self.unary.len() + self.binary.len();
        let stop = depth <= 1 || n_ops == 0 || (!full && rng.random_bool(0.3));
        if stop {
            return self.terminal(rng);
        }
        let pick = rng.random_range(0..n_ops);
        if pick < self.unary.len() {
            Expr::unary(self.unary[pick], self.num(rng, depth - 1, full))
        } else {
            let op = self.binary[pick - self.unary.len()];
            let a = self.num(rng, depth - 1, full);
            Expr::binary(op, a, self.num(rng, depth - 1, full))
        }
    }

    /// Boolean expression of depth at most `depth` (at least 2).
    pub fn boolean<R: Rng + ?Sized>(&self, rng: &mut R, depth: usize, full: bool) -> Expr {
        let depth = depth.max(2);
        let compound = self.logic && depth >= 3 && (full || rng.random_bool(0.3));
        if compound {
            match rng.random_range(0..5) {
                0 => Expr::negate(self.boolean(rng, depth - 1, full)),
                i => {
                    let op = if i % 2 == 0 { LogicOp::And } else { LogicOp::Or };
                    let a = self.boolean(rng, depth - 1, full);
                    Expr::logic(op, a, self.boolean(rng, depth - 1, full))
                }
            }
        } else {
            let op = self
                .compare
                .choose(rng)
                .copied()
                .unwrap_or(CmpOp::Lt);
            let a = self.num(rng, depth - 1, full);
            let b = if rng.random_bool(0.5) {
                Expr::Const(self.constant(rng))
            } else {
                self.num(rng, depth - 1, full)
            };
            Expr::compare(op, a, b)
        }
    }

    pub fn of_sort<R: Rng + ?Sized>(&self, rng: &mut R, sort: Sort, depth: usize, full: bool) -> Expr {
        match sort {
            Sort::Num => self.num(rng, depth, full),
            Sort::Bool => self.boolean(rng, depth, full),
        }
    }
}
