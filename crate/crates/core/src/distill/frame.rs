//! Column-wise expression evaluation over many samples at once.

use std::borrow::Cow;

use crate::netsim::Statistic;
use crate::symtree::{slope, CmpOp, Expr, LogicOp};

/// Samples stored by column: one column per history feature, plus the
/// precomputed slope of each statistic and the internal-state column.
#[derive(Clone, Debug, Default)]
pub struct Frame {
    n: usize,
    cols: Vec<Vec<f64>>,
    slopes: [Vec<f64>; 3],
    state: Vec<f64>,
}

impl Frame {
    /// `state` may be empty, meaning all zeros.
    pub fn new(rows: &[Vec<f64>], state: &[u8]) -> Self {
        Self::from_indices(rows, state, &(0..rows.len()).collect::<Vec<_>>())
    }

    pub fn from_indices(rows: &[Vec<f64>], state: &[u8], idx: &[usize]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let mut cols = vec![Vec::with_capacity(idx.len()); dim];
        let mut slopes: [Vec<f64>; 3] = Default::default();
        for &i in idx {
            for (c, v) in cols.iter_mut().zip(&rows[i]) {
                c.push(*v);
            }
            for s in Statistic::ALL {
                slopes[s.index()].push(slope(&rows[i], s));
            }
        }
        let state = idx
            .iter()
            .map(|&i| state.get(i).copied().unwrap_or(0) as f64)
            .collect();
        Self {
            n: idx.len(),
            cols,
            slopes,
            state,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Feature column `index` (layout `3 * i + j`).
    pub fn column(&self, index: usize) -> &[f64] {
        &self.cols[index]
    }

    pub fn eval_num(&self, e: &Expr) -> Cow<'_, [f64]> {
        match e {
            Expr::Const(c) => Cow::Owned(vec![*c; self.n]),
            Expr::Get(s, i) => Cow::Borrowed(&self.cols[3 * i + s.index()]),
            Expr::Slope(s) => Cow::Borrowed(&self.slopes[s.index()]),
            Expr::State => Cow::Borrowed(&self.state),
            Expr::Unary(op, a) => {
                let mut v = self.eval_num(a).into_owned();
                for x in &mut v {
                    *x = op.apply(*x);
                }
                Cow::Owned(v)
            }
            Expr::Binary(op, a, b) => {
                let mut va = self.eval_num(a).into_owned();
                let vb = self.eval_num(b);
                for (x, y) in va.iter_mut().zip(vb.iter()) {
                    *x = op.apply(*x, *y);
                }
                Cow::Owned(va)
            }
            _ => Cow::Owned(
                self.eval_bool(e)
                    .into_iter()
                    .map(|b| if b { 1.0 } else { 0.0 })
                    .collect(),
            ),
        }
    }

    pub fn eval_bool(&self, e: &Expr) -> Vec<bool> {
        match e {
            Expr::Compare(op, a, b) => {
                let va = self.eval_num(a);
                let vb = self.eval_num(b);
                va.iter()
                    .zip(vb.iter())
                    .map(|(x, y)| match op {
                        CmpOp::Lt => x < y,
                        CmpOp::Le => x <= y,
                        CmpOp::Eq => op.apply(*x, *y),
                    })
                    .collect()
            }
            Expr::Logic(op, a, b) => {
                let mut va = self.eval_bool(a);
                let vb = self.eval_bool(b);
                for (x, y) in va.iter_mut().zip(vb) {
                    *x = match op {
                        LogicOp::And => *x && y,
                        LogicOp::Or => *x || y,
                    };
                }
                va
            }
            Expr::Not(a) => self.eval_bool(a).into_iter().map(|b| !b).collect(),
            _ => self.eval_num(e).iter().map(|v| *v != 0.0).collect(),
        }
    }
}
