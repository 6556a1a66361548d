use serde::{Deserialize, Serialize};

use super::MiStats;

pub const DEFAULT_HISTORY_LEN: usize = 10;

/// `send_ratio` reported for an MI in which nothing was acknowledged.
pub const SEND_RATIO_CAP: f64 = 100.0;

/// One of the three per-MI statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Statistic {
    LatencyInflation = 0,
    LatencyRatio = 1,
    SendRatio = 2,
}

impl Statistic {
    pub const ALL: [Statistic; 3] = [
        Statistic::LatencyInflation,
        Statistic::LatencyRatio,
        Statistic::SendRatio,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub latency_inflation: f64,
    pub latency_ratio: f64,
    pub send_ratio: f64,
}

impl Observation {
    /// What a stable, uncongested link reports.
    pub const NEUTRAL: Observation = Observation {
        latency_inflation: 0.0,
        latency_ratio: 1.0,
        send_ratio: 1.0,
    };

    pub fn get(&self, stat: Statistic) -> f64 {
        match stat {
            Statistic::LatencyInflation => self.latency_inflation,
            Statistic::LatencyRatio => self.latency_ratio,
            Statistic::SendRatio => self.send_ratio,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.latency_inflation, self.latency_ratio, self.send_ratio]
    }
}

/// Derives the observation for `curr` relative to the previous MI. For the
/// first MI pass `curr` itself as `prev`.
pub fn compute_observation(curr: &MiStats, prev: &MiStats) -> Observation {
    let latency_inflation = if prev.mean_latency > 0.0 {
        (curr.mean_latency - prev.mean_latency) / prev.mean_latency
    } else {
        0.0
    };
    let latency_ratio = if curr.min_base_latency > 0.0 && curr.min_base_latency.is_finite() {
        curr.mean_latency / curr.min_base_latency
    } else {
        1.0
    };
    let send_ratio = if curr.acked > 0.0 {
        (curr.sent / curr.acked).min(SEND_RATIO_CAP)
    } else {
        SEND_RATIO_CAP
    };
    Observation {
        latency_inflation,
        latency_ratio,
        send_ratio,
    }
}

/// Linear reward coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub throughput: f64,
    pub latency: f64,
    pub loss: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            throughput: 10.0,
            latency: 1000.0,
            loss: 2000.0,
        }
    }
}

/// `throughput·c_t − latency·c_l − loss_fraction·c_p`, throughput in packets/s.
pub fn compute_reward(stats: &MiStats, weights: &RewardWeights) -> f64 {
    weights.throughput * stats.throughput()
        - weights.latency * stats.mean_latency
        - weights.loss * stats.loss_fraction()
}

/// The last `k` observations, oldest first, stored flat as `k × 3` features.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsHistory {
    features: Vec<f64>,
}

impl ObsHistory {
    /// A history of `k` neutral observations.
    pub fn new(k: usize) -> Self {
        assert!(k > 0, "history length must be positive");
        let mut features = Vec::with_capacity(3 * k);
        for _ in 0..k {
            features.extend_from_slice(&Observation::NEUTRAL.as_array());
        }
        Self { features }
    }

    pub fn from_features(features: Vec<f64>) -> Self {
        assert!(
            !features.is_empty() && features.len().is_multiple_of(3),
            "feature length must be a positive multiple of 3"
        );
        Self { features }
    }

    pub fn len(&self) -> usize {
        self.features.len() / 3
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn push(&mut self, obs: Observation) {
        self.features.copy_within(3.., 0);
        let n = self.features.len();
        self.features[n - 3..].copy_from_slice(&obs.as_array());
    }

    /// Flattened features: index `3 * i + j` is statistic `j` of entry `i`.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn get(&self, index: usize, stat: Statistic) -> f64 {
        self.features[3 * index + stat.index()]
    }

    pub fn latest(&self) -> Observation {
        let n = self.features.len();
        Observation {
            latency_inflation: self.features[n - 3],
            latency_ratio: self.features[n - 2],
            send_ratio: self.features[n - 1],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(sent: f64, acked: f64, mean: f64, min_base: f64) -> MiStats {
        MiStats {
            sent,
            acked,
            lost: sent - acked,
            mean_latency: mean,
            min_base_latency: min_base,
            mi_duration: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn steady_state_is_neutral() {
        let s = stats(50.0, 50.0, 0.1, 0.1);
        assert_eq!(compute_observation(&s, &s), Observation::NEUTRAL);
    }

    #[test]
    fn latency_growth() {
        let prev = stats(50.0, 50.0, 0.10, 0.10);
        let curr = stats(50.0, 50.0, 0.12, 0.10);
        let o = compute_observation(&curr, &prev);
        assert!((o.latency_inflation - 0.2).abs() < 1e-12);
        assert!((o.latency_ratio - 1.2).abs() < 1e-12);
        assert_eq!(o.send_ratio, 1.0);
    }

    #[test]
    fn send_ratio_and_cap() {
        let s = stats(100.0, 80.0, 0.1, 0.1);
        assert!((compute_observation(&s, &s).send_ratio - 1.25).abs() < 1e-12);
        let dead = stats(100.0, 0.0, 0.1, 0.1);
        assert_eq!(compute_observation(&dead, &dead).send_ratio, SEND_RATIO_CAP);
    }

    #[test]
    fn reward_examples() {
        let w = RewardWeights::default();
        let s = MiStats {
            sent: 100.0,
            acked: 100.0,
            mean_latency: 0.1,
            mi_duration: 1.0,
            ..Default::default()
        };
        assert!((compute_reward(&s, &w) - 900.0).abs() < 1e-9);
        assert_eq!(compute_reward(&MiStats::default(), &w), 0.0);
        let lossy = MiStats {
            sent: 200.0,
            acked: 100.0,
            lost: 100.0,
            mean_latency: 0.1,
            mi_duration: 1.0,
            ..Default::default()
        };
        assert!((compute_reward(&lossy, &w) + 100.0).abs() < 1e-9);
    }

    #[test]
    fn history_is_a_sliding_window() {
        let mut h = ObsHistory::new(3);
        assert_eq!(h.features(), &[0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        for i in 0..4 {
            h.push(Observation {
                latency_inflation: i as f64,
                latency_ratio: 1.0,
                send_ratio: 1.0,
            });
        }
        assert_eq!(h.len(), 3);
        assert_eq!(h.get(0, Statistic::LatencyInflation), 1.0);
        assert_eq!(h.get(2, Statistic::LatencyInflation), 3.0);
        assert_eq!(h.latest().latency_inflation, 3.0);
    }
}
