//! Genetic programming over symbolic expressions.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::entropy::{entropy_of_bins, histogram_bins};
use super::frame::Frame;
use crate::symtree::{BinaryOp, CmpOp, Expr, Grammar, LogicOp, Sort};
use crate::{seeding, Error, Result};

/// Fitness assigned to expressions whose loss is not finite.
pub const INVALID_FITNESS: f64 = 1e30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Crossover,
    Subtree,
    Hoist,
    Point,
    Reproduction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub p_crossover: f64,
    pub p_subtree: f64,
    pub p_hoist: f64,
    pub p_point: f64,
    pub p_reproduction: f64,
    /// Per-node replacement probability of point mutation.
    pub point_replace: f64,
    pub parsimony: f64,
    /// Extra penalty per FLOP of one evaluation; 0 gives the plain
    /// node-count parsimony.
    pub flops_penalty: f64,
    pub max_expr_depth: usize,
    /// Ramped initialisation draws depths from `2..=init_depth`.
    pub init_depth: usize,
    /// Fitness is computed on at most this many rows, subsampled once per run.
    pub max_fit_rows: usize,
    /// Loss at or below which evolution stops early.
    pub stop_loss: f64,
    /// Regression results with a higher MSE are flagged unconverged.
    pub sr_accept_mse: f64,
    pub grammar: Grammar,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            population_size: 1000,
            generations: 40,
            tournament_size: 20,
            p_crossover: 0.70,
            p_subtree: 0.10,
            p_hoist: 0.05,
            p_point: 0.10,
            p_reproduction: 0.05,
            point_replace: 0.1,
            parsimony: 0.001,
            flops_penalty: 0.0,
            max_expr_depth: 6,
            init_depth: 4,
            max_fit_rows: 2000,
            stop_loss: 1e-14,
            sr_accept_mse: 0.05,
            grammar: Grammar::default(),
            seed: 0,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            self.p_crossover,
            self.p_subtree,
            self.p_hoist,
            self.p_point,
            self.p_reproduction,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("scheme probabilities must sum to 1".into()));
        }
        if self.population_size == 0 || self.tournament_size == 0 || self.max_expr_depth < 2 {
            return Err(Error::InvalidArgument(
                "population, tournament and depth must be positive".into(),
            ));
        }
        Ok(())
    }

    fn pick_scheme<R: Rng + ?Sized>(&self, rng: &mut R) -> Scheme {
        let r: f64 = rng.random();
        let mut acc = 0.0;
        for (p, s) in [
            (self.p_crossover, Scheme::Crossover),
            (self.p_subtree, Scheme::Subtree),
            (self.p_hoist, Scheme::Hoist),
            (self.p_point, Scheme::Point),
        ] {
            acc += p;
            if r < acc {
                return s;
            }
        }
        Scheme::Reproduction
    }
}

/// Per-generation population summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpResult {
    pub best: Expr,
    /// Loss plus parsimony penalty.
    pub fitness: f64,
    /// Loss alone.
    pub loss: f64,
    pub log: Vec<GenStats>,
    /// For regression, whether `loss <= sr_accept_mse`.
    pub converged: bool,
}

/// MSE plus parsimony times node count; lower is better.
pub fn fitness(expr: &Expr, x: &[Vec<f64>], y: &[f64], parsimony: f64) -> f64 {
    let frame = Frame::new(x, &[]);
    penalised(mse(&frame.eval_num(expr), y), expr, parsimony)
}

fn penalised(loss: f64, expr: &Expr, parsimony: f64) -> f64 {
    if loss.is_finite() {
        loss + parsimony * expr.node_count() as f64
    } else {
        INVALID_FITNESS
    }
}

pub fn mse(pred: &[f64], y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

/// Something GP minimises over expressions of one sort.
pub trait Objective: Sync {
    fn sort(&self) -> Sort;
    fn loss(&self, expr: &Expr) -> f64;
    /// Whether `loss` is good enough to stop evolving.
    fn solved(&self, loss: f64, config: &GpConfig) -> bool;
    /// Optional cheap refinement of a candidate, kept when it scores better.
    fn refine(&self, _expr: &Expr) -> Option<Expr> {
        None
    }
}

pub struct Regression<'a> {
    pub frame: &'a Frame,
    pub y: &'a [f64],
}

impl Objective for Regression<'_> {
    fn sort(&self) -> Sort {
        Sort::Num
    }

    fn loss(&self, expr: &Expr) -> f64 {
        mse(&self.frame.eval_num(expr), self.y)
    }

    fn solved(&self, loss: f64, config: &GpConfig) -> bool {
        loss <= config.stop_loss
    }

    fn refine(&self, expr: &Expr) -> Option<Expr> {
        linear_scaling(expr, self.frame, self.y)
    }
}

/// Negative information gain of the split a boolean expression induces.
pub struct SplitGain<'a> {
    pub frame: &'a Frame,
    pub bins: &'a [usize],
    pub n_bins: usize,
    pub parent_entropy: f64,
    /// Splits leaving fewer rows than this on either side gain nothing.
    pub min_side: usize,
}

impl SplitGain<'_> {
    pub fn gain(&self, mask: &[bool]) -> f64 {
        let mut left = vec![0usize; self.n_bins];
        let mut right = vec![0usize; self.n_bins];
        for (&m, &b) in mask.iter().zip(self.bins) {
            if m {
                left[b] += 1;
            } else {
                right[b] += 1;
            }
        }
        let nl: usize = left.iter().sum();
        let nr: usize = right.iter().sum();
        if nl < self.min_side.max(1) || nr < self.min_side.max(1) {
            return 0.0;
        }
        let n = (nl + nr) as f64;
        self.parent_entropy
            - (nl as f64 / n) * entropy_of_bins(&left)
            - (nr as f64 / n) * entropy_of_bins(&right)
    }
}

impl Objective for SplitGain<'_> {
    fn sort(&self) -> Sort {
        Sort::Bool
    }

    fn loss(&self, expr: &Expr) -> f64 {
        -self.gain(&self.frame.eval_bool(expr))
    }

    fn solved(&self, loss: f64, _config: &GpConfig) -> bool {
        -loss >= self.parent_entropy - 1e-12
    }
}

/// Builds the bin index of every action, for [`SplitGain`].
pub fn action_bins(y: &[f64], n_bins: usize) -> Vec<usize> {
    histogram_bins(y, n_bins)
}

fn random_node<R: Rng + ?Sized>(e: &Expr, rng: &mut R, sort: Option<Sort>) -> Option<usize> {
    let nodes = e.preorder();
    let candidates: Vec<usize> = (0..nodes.len())
        .filter(|&i| sort.is_none_or(|s| nodes[i].sort() == s))
        .collect();
    if candidates.is_empty() {
        None
    } else {
        Some(candidates[rng.random_range(0..candidates.len())])
    }
}

fn replace(e: &Expr, index: usize, with: Expr) -> Expr {
    let mut out = e.clone();
    *out.subtree_mut(index).expect("index in range") = with;
    out
}

/// Applies one variation scheme. Always returns a well-typed expression of the
/// winner's sort within `max_depth`; falls back to a clone of the winner.
pub fn mutate<R: Rng + ?Sized>(
    winner: &Expr,
    donor: Option<&Expr>,
    scheme: Scheme,
    config: &GpConfig,
    rng: &mut R,
) -> Expr {
    const RETRIES: usize = 8;
    let max_depth = config.max_expr_depth;
    for _ in 0..RETRIES {
        let child = match scheme {
            Scheme::Reproduction => return winner.clone(),
            Scheme::Crossover => {
                let Some(donor) = donor else {
                    return winner.clone();
                };
                let i = random_node(winner, rng, None).unwrap();
                let sort = winner.subtree(i).unwrap().sort();
                match random_node(donor, rng, Some(sort)) {
                    Some(j) => replace(winner, i, donor.subtree(j).unwrap().clone()),
                    None => continue,
                }
            }
            Scheme::Subtree => {
                let i = random_node(winner, rng, None).unwrap();
                let sort = winner.subtree(i).unwrap().sort();
                let depth_here = winner.node_depths()[i];
                let room = max_depth.saturating_sub(depth_here).max(1);
                let depth = rng.random_range(1..=room.min(config.init_depth.max(1)));
                let fresh = config.grammar.of_sort(rng, sort, depth, false);
                if fresh.sort() != sort {
                    continue;
                }
                replace(winner, i, fresh)
            }
            Scheme::Hoist => {
                let i = random_node(winner, rng, None).unwrap();
                let sub = winner.subtree(i).unwrap();
                match random_node(sub, rng, Some(sub.sort())) {
                    Some(j) => replace(winner, i, sub.subtree(j).unwrap().clone()),
                    None => continue,
                }
            }
            Scheme::Point => point_mutate(winner, config, rng),
        };
        if child.depth() <= max_depth && child.sort() == winner.sort() {
            return child;
        }
    }
    winner.clone()
}

fn point_mutate<R: Rng + ?Sized>(e: &Expr, config: &GpConfig, rng: &mut R) -> Expr {
    let g = &config.grammar;
    let mut out = e.clone();
    let n = out.node_count();
    for i in 0..n {
        if !rng.random_bool(config.point_replace.clamp(0.0, 1.0)) {
            continue;
        }
        let node = out.subtree_mut(i).unwrap();
        let replacement = match &*node {
            Expr::Const(_) | Expr::Get(..) | Expr::Slope(_) | Expr::State => Some(g.terminal(rng)),
            Expr::Unary(_, a) => pick(&g.unary, rng).map(|op| Expr::Unary(op, a.clone())),
            Expr::Binary(_, a, b) => {
                pick(&g.binary, rng).map(|op| Expr::Binary(op, a.clone(), b.clone()))
            }
            Expr::Compare(_, a, b) => {
                pick(&g.compare, rng).map(|op| Expr::Compare(op, a.clone(), b.clone()))
            }
            Expr::Logic(_, a, b) => {
                let op = if rng.random_bool(0.5) { LogicOp::And } else { LogicOp::Or };
                Some(Expr::Logic(op, a.clone(), b.clone()))
            }
            Expr::Not(_) => None,
        };
        if let Some(r) = replacement {
            *node = r;
        }
    }
    out
}

fn pick<T: Copy, R: Rng + ?Sized>(items: &[T], rng: &mut R) -> Option<T> {
    if items.is_empty() {
        None
    } else {
        Some(items[rng.random_range(0..items.len())])
    }
}

fn tournament<R: Rng + ?Sized>(fit: &[f64], size: usize, rng: &mut R) -> usize {
    let mut best = rng.random_range(0..fit.len());
    for _ in 1..size {
        let c = rng.random_range(0..fit.len());
        if fit[c] < fit[best] {
            best = c;
        }
    }
    best
}

/// Ramped half-and-half initial population, after the given seeds.
fn initial_population(config: &GpConfig, sort: Sort, seeds: Vec<Expr>, rng: &mut ChaCha8Rng) -> Vec<Expr> {
    let mut pop = seeds;
    pop.truncate(config.population_size);
    let lo = match sort {
        Sort::Num => 1,
        Sort::Bool => 2,
    };
    let hi = config.init_depth.clamp(lo, config.max_expr_depth);
    let mut i = 0usize;
    while pop.len() < config.population_size {
        let depth = lo + i % (hi - lo + 1);
        let full = (i / (hi - lo + 1)).is_multiple_of(2);
        pop.push(config.grammar.of_sort(rng, sort, depth, full));
        i += 1;
    }
    pop
}

/// Evolves expressions minimising `objective` plus parsimony. The best
/// individual is always carried over, so the best fitness never increases.
pub fn evolve<O: Objective>(objective: &O, config: &GpConfig, seeds: Vec<Expr>) -> Result<GpResult> {
    config.validate()?;
    let mut rng = seeding::rng_at(config.seed, &[0x67]);
    let sort = objective.sort();
    let k = config.grammar.history_len;
    let cost = |loss: f64, e: &Expr| {
        let f = penalised(loss, e, config.parsimony);
        if config.flops_penalty > 0.0 && f < INVALID_FITNESS {
            f + config.flops_penalty * e.flops(k) as f64
        } else {
            f
        }
    };
    let score = |e: Expr| -> (Expr, f64) {
        let f = cost(objective.loss(&e), &e);
        if let Some(r) = objective.refine(&e) {
            if r.depth() <= config.max_expr_depth {
                let fr = cost(objective.loss(&r), &r);
                if fr < f {
                    return (r, fr);
                }
            }
        }
        (e, f)
    };
    let init = initial_population(config, sort, seeds, &mut rng);
    let (mut pop, mut fit): (Vec<Expr>, Vec<f64>) = init.into_par_iter().map(score).unzip();
    let mut log = Vec::with_capacity(config.generations + 1);
    let summarize = |g: usize, pop: &[Expr], fit: &[f64]| {
        let b = argmin(fit);
        GenStats {
            generation: g,
            best_fitness: fit[b],
            mean_fitness: fit.iter().map(|f| f.min(INVALID_FITNESS)).sum::<f64>() / fit.len() as f64,
            best_size: pop[b].node_count(),
        }
    };
    log.push(summarize(0, &pop, &fit));
    for g in 1..=config.generations {
        let b = argmin(&fit);
        if objective.solved(objective.loss(&pop[b]), config) {
            break;
        }
        let mut next = Vec::with_capacity(config.population_size);
        next.push(pop[b].clone());
        let mut next_fit = vec![fit[b]];
        let mut children = Vec::with_capacity(config.population_size);
        while next.len() + children.len() < config.population_size {
            let w = tournament(&fit, config.tournament_size, &mut rng);
            let scheme = config.pick_scheme(&mut rng);
            let donor = (scheme == Scheme::Crossover)
                .then(|| tournament(&fit, config.tournament_size, &mut rng));
            children.push(mutate(&pop[w], donor.map(|d| &pop[d]), scheme, config, &mut rng));
        }
        let (kids, kid_fit): (Vec<Expr>, Vec<f64>) = children.into_par_iter().map(score).unzip();
        next.extend(kids);
        next_fit.extend(kid_fit);
        pop = next;
        fit = next_fit;
        log.push(summarize(g, &pop, &fit));
    }
    let b = argmin(&fit);
    Ok(GpResult {
        loss: objective.loss(&pop[b]),
        fitness: fit[b],
        best: pop[b].clone(),
        log,
        converged: true,
    })
}

fn argmin(v: &[f64]) -> usize {
    let mut b = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[b] {
            b = i;
        }
    }
    b
}

/// Rows used for fitness: all of them, or a seeded subsample.
pub fn fit_rows(n: usize, max_rows: usize, seed: u64) -> Vec<usize> {
    if n <= max_rows || max_rows == 0 {
        (0..n).collect()
    } else {
        let mut idx = sample(&mut seeding::rng_at(seed, &[0x73]), n, max_rows).into_vec();
        idx.sort_unstable();
        idx
    }
}

/// `a * f + b`, omitting identity parts.
fn scaled(f: Expr, a: f64, b: f64) -> Expr {
    let mut e = if (a - 1.0).abs() < 1e-12 {
        f
    } else {
        Expr::binary(BinaryOp::Mul, Expr::Const(a), f)
    };
    if b.abs() >= 1e-12 {
        e = Expr::binary(BinaryOp::Add, e, Expr::Const(b));
    }
    e
}

/// Least-squares affine rescaling of an expression's output onto `y`.
pub fn linear_scaling(expr: &Expr, frame: &Frame, y: &[f64]) -> Option<Expr> {
    let f = frame.eval_num(expr);
    let n = y.len() as f64;
    if n == 0.0 || f.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let fm = f.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (a, b) in f.iter().zip(y) {
        cov += (a - fm) * (b - ym);
        var += (a - fm) * (a - fm);
    }
    if var < 1e-18 || !cov.is_finite() {
        return Some(Expr::Const(ym));
    }
    let a = cov / var;
    let e = scaled(expr.clone(), a, ym - a * fm);
    Some(e)
}

/// Symbolic regression of `y` on `x`. The result is flagged unconverged when
/// its MSE exceeds `sr_accept_mse`.
pub fn run_sr(x: &[Vec<f64>], y: &[f64], state: &[u8], config: &GpConfig) -> Result<GpResult> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: x.len(),
        });
    }
    run_sr_on(x, y, state, &(0..y.len()).collect::<Vec<_>>(), config)
}

/// [`run_sr`] restricted to the rows in `idx`.
pub fn run_sr_on(
    x: &[Vec<f64>],
    y: &[f64],
    state: &[u8],
    idx: &[usize],
    config: &GpConfig,
) -> Result<GpResult> {
    if idx.is_empty() {
        return Err(Error::Empty("regression data"));
    }
    let rows: Vec<usize> = fit_rows(idx.len(), config.max_fit_rows, config.seed)
        .into_iter()
        .map(|i| idx[i])
        .collect();
    let frame = Frame::from_indices(x, state, &rows);
    let y_fit: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let mut config = config.clone();
    if config.grammar.const_pool.is_empty() {
        config.grammar.const_pool = constant_pool(x, &rows, &y_fit, config.seed);
    }
    let objective = Regression {
        frame: &frame,
        y: &y_fit,
    };
    let mean = y_fit.iter().sum::<f64>() / y_fit.len() as f64;
    let mut result = evolve(&objective, &config, vec![Expr::Const(mean)])?;
    result.loss = objective.loss(&result.best);
    result.converged = result.loss <= config.sr_accept_mse;
    Ok(result)
}

/// Boolean expression maximising the information gain of the split it induces
/// on the action histogram.
pub fn run_condition(
    x: &[Vec<f64>],
    y: &[f64],
    state: &[u8],
    idx: &[usize],
    n_bins: usize,
    min_side: usize,
    config: &GpConfig,
) -> Result<(GpResult, f64)> {
    if idx.is_empty() {
        return Err(Error::Empty("split data"));
    }
    let rows: Vec<usize> = fit_rows(idx.len(), config.max_fit_rows, config.seed)
        .into_iter()
        .map(|i| idx[i])
        .collect();
    let frame = Frame::from_indices(x, state, &rows);
    let y_fit: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let bins = action_bins(&y_fit, n_bins);
    let mut counts = vec![0usize; n_bins];
    for &b in &bins {
        counts[b] += 1;
    }
    let mut config = config.clone();
    if config.grammar.const_pool.is_empty() {
        config.grammar.const_pool = constant_pool(x, &rows, &y_fit, config.seed);
    }
    let objective = SplitGain {
        frame: &frame,
        bins: &bins,
        n_bins,
        parent_entropy: entropy_of_bins(&counts),
        min_side: min_side.min(rows.len() / 2),
    };
    let seed = Expr::compare(CmpOp::Lt, Expr::State, Expr::Const(0.5));
    let result = evolve(&objective, &config, vec![seed])?;
    let gain = -result.loss;
    Ok((result, gain))
}

/// Constants observed in the data: feature values from random rows and
/// quantiles of the target.
pub fn constant_pool(x: &[Vec<f64>], rows: &[usize], y: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = seeding::rng_at(seed, &[0x63]);
    let mut pool = Vec::with_capacity(80);
    let dim = x.first().map_or(0, Vec::len);
    if !rows.is_empty() && dim > 0 {
        for _ in 0..64 {
            let r = rows[rng.random_range(0..rows.len())];
            pool.push(x[r][rng.random_range(0..dim)]);
        }
    }
    let mut ys = y.to_vec();
    ys.sort_by(f64::total_cmp);
    for q in [0.1, 0.25, 0.5, 0.75, 0.9] {
        if let Some(v) = ys.get((ys.len().saturating_sub(1) as f64 * q) as usize) {
            pool.push(*v);
        }
    }
    pool.extend([0.0, 0.5, 1.0, 2.0, -1.0]);
    pool.retain(|v| v.is_finite());
    pool
}
