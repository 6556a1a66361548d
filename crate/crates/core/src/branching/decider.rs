use std::collections::VecDeque;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seeding, Error, Result};

pub const DEFAULT_NEIGHBORS: usize = 15;
pub const DEFAULT_WINDOW: usize = 5;
pub const MAX_EXEMPLARS: usize = 20_000;
/// A challenger must out-vote the current branch by this much to take over.
pub const SWITCH_MARGIN: usize = 2;

/// Decider hyper-parameters, persisted next to the exemplars.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeciderConfig {
    pub neighbors: usize,
    pub window: usize,
    pub max_exemplars: usize,
    pub subsample_seed: u64,
}

impl Default for DeciderConfig {
    fn default() -> Self {
        Self {
            neighbors: DEFAULT_NEIGHBORS,
            window: DEFAULT_WINDOW,
            max_exemplars: MAX_EXEMPLARS,
            subsample_seed: 0,
        }
    }
}

/// Brute-force k-nearest-neighbour classifier over observation histories.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnnDecider {
    pub neighbors: usize,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl KnnDecider {
    pub fn new(neighbors: usize, features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} exemplars but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if neighbors == 0 {
            return Err(Error::InvalidArgument("neighbors must be positive".into()));
        }
        if let Some(first) = features.first() {
            if let Some(bad) = features.iter().find(|f| f.len() != first.len()) {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    got: bad.len(),
                });
            }
        }
        Ok(Self {
            neighbors,
            features,
            labels,
        })
    }

    /// At most `max` rows, split evenly across labels.
    pub fn balanced(
        neighbors: usize,
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        max: usize,
        seed: u64,
    ) -> Result<Self> {
        if features.len() <= max {
            return Self::new(neighbors, features, labels);
        }
        let n_labels = labels.iter().max().map_or(0, |m| m + 1);
        let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); n_labels];
        for (i, &l) in labels.iter().enumerate() {
            by_label[l].push(i);
        }
        let mut rng = seeding::rng(seed);
        for rows in &mut by_label {
            rows.shuffle(&mut rng);
        }
        // round-robin so small classes keep all their rows
        let mut keep = Vec::with_capacity(max);
        let mut depth = 0;
        while keep.len() < max {
            let mut any = false;
            for rows in &by_label {
                if let Some(&i) = rows.get(depth) {
                    keep.push(i);
                    any = true;
                    if keep.len() == max {
                        break;
                    }
                }
            }
            if !any {
                break;
            }
            depth += 1;
        }
        keep.sort_unstable();
        let f = keep.iter().map(|&i| features[i].clone()).collect();
        let l = keep.iter().map(|&i| labels[i]).collect();
        Self::new(neighbors, f, l)
    }

    pub fn is_fitted(&self) -> bool {
        !self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Subtract, square and accumulate per feature per exemplar, plus the vote.
    pub fn flops(&self) -> usize {
        self.features.len() * self.dim() * 3
    }

    /// Majority vote among the nearest exemplars; equal votes go to the lowest
    /// label and equal distances to the earliest exemplar.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        if !self.is_fitted() {
            return Err(Error::Unfitted);
        }
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut dist: Vec<(f64, usize)> = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let d: f64 = f.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, i)
            })
            .collect();
        let k = self.neighbors.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
        }
        let n_labels = self.labels.iter().max().map_or(0, |m| m + 1);
        let mut votes = vec![0usize; n_labels];
        for &(_, i) in &dist[..k] {
            votes[self.labels[i]] += 1;
        }
        Ok(majority(&votes))
    }
}

fn majority(votes: &[usize]) -> usize {
    let mut best = 0;
    for (l, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = l;
        }
    }
    best
}

/// Majority filter over the last `window` raw labels with hysteresis: the
/// current branch holds until it drops out of the window or a challenger
/// leads it by `SWITCH_MARGIN` votes.
pub fn smooth(history: &mut VecDeque<usize>, current: Option<usize>, raw: usize, window: usize) -> usize {
    history.push_back(raw);
    while history.len() > window.max(1) {
        history.pop_front();
    }
    let n = history.iter().max().map_or(0, |m| m + 1);
    let mut votes = vec![0usize; n];
    for &l in history.iter() {
        votes[l] += 1;
    }
    let leader = majority(&votes);
    match current {
        Some(c) if c < n && votes[c] > 0 => {
            if leader != c && votes[leader] >= votes[c] + SWITCH_MARGIN {
                leader
            } else {
                c
            }
        }
        _ => leader,
    }
}
