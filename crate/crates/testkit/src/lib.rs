//! Slow, obviously-correct reference implementations used to check the fast
//! ones, plus small statistics helpers for the acceptance suite.
//!
//! Nothing here depends on the main crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Packet-level bottleneck simulated in fixed time ticks.
///
/// Each tick, arrivals accrue at the send rate and join a finite FIFO queue
/// (overflow is dropped), then the link serves whole packets at its bandwidth.
/// Service credit does not bank while the queue is empty beyond one packet.
/// Every served packet is lost independently with probability `loss`.
#[derive(Clone, Debug)]
pub struct PacketLink {
    pub bandwidth: f64,
    pub capacity: usize,
    pub loss: f64,
    pub tick: f64,
    queue: usize,
    arrival_credit: f64,
    service_credit: f64,
    rng: ChaCha8Rng,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PacketMi {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub lost: u64,
}

impl PacketLink {
    pub fn new(bandwidth: f64, capacity: usize, loss: f64, seed: u64) -> Self {
        Self {
            bandwidth,
            capacity,
            loss,
            tick: 1e-3,
            queue: 0,
            arrival_credit: 0.0,
            service_credit: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn queue(&self) -> usize {
        self.queue
    }

    /// Sends at `rate` packets per second for `duration` seconds.
    pub fn run(&mut self, rate: f64, duration: f64) -> PacketMi {
        let ticks = (duration / self.tick).round() as usize;
        let mut out = PacketMi::default();
        for _ in 0..ticks {
            self.arrival_credit += rate * self.tick;
            let arrivals = (self.arrival_credit + 1e-9).floor();
            self.arrival_credit -= arrivals;
            for _ in 0..arrivals as u64 {
                out.sent += 1;
                if self.queue < self.capacity {
                    self.queue += 1;
                } else {
                    out.dropped += 1;
                }
            }
            self.service_credit += self.bandwidth * self.tick;
            let served = ((self.service_credit + 1e-9).floor() as usize).min(self.queue);
            self.service_credit -= served as f64;
            self.queue -= served;
            if self.queue == 0 {
                self.service_credit = self.service_credit.min(1.0);
            }
            for _ in 0..served {
                if self.rng.random_bool(self.loss) {
                    out.lost += 1;
                } else {
                    out.delivered += 1;
                }
            }
        }
        out
    }
}

/// Minimum within-cluster sum of squares over every labelling of `points`
/// into exactly `k` non-empty clusters.
pub fn brute_force_inertia(points: &[f64], k: usize) -> f64 {
    let n = points.len();
    assert!(k >= 1 && k <= n && n <= 10);
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut sum = vec![0.0; k];
        let mut count = vec![0usize; k];
        for (&p, &l) in points.iter().zip(&labels) {
            sum[l] += p;
            count[l] += 1;
        }
        if count.iter().all(|&c| c > 0) {
            let sse: f64 = points
                .iter()
                .zip(&labels)
                .map(|(&p, &l)| {
                    let m = sum[l] / count[l] as f64;
                    (p - m) * (p - m)
                })
                .sum();
            best = best.min(sse);
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

/// Index of the nearest exemplar by squared Euclidean distance; the lowest
/// index wins ties.
pub fn nearest_by_scan(exemplars: &[Vec<f64>], query: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, e) in exemplars.iter().enumerate() {
        let d: f64 = e.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Average ranks, ties sharing the mean of their positions.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = r;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut va, mut vb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va * vb).sqrt()
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

/// Ordinary least-squares slope of `y` against `0, 1, 2, ...`.
pub fn index_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, v) in y.iter().enumerate() {
        num += (i as f64 - mx) * (v - my);
        den += (i as f64 - mx) * (i as f64 - mx);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Return centroids of the four published operating contexts.
pub const PUBLISHED_CENTROIDS: [f64; 4] = [95.84, 576.57, 1046.46, 1516.70];

/// `per_cluster` Gaussian draws around each centroid.
pub fn synthetic_returns(centroids: &[f64], sigma: f64, per_cluster: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    centroids
        .iter()
        .flat_map(|&c| (0..per_cluster).map(move |_| c))
        .map(|c| c + noise.sample(&mut rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packet_link_caps_throughput() {
        let mut link = PacketLink::new(100.0, 10, 0.0, 0);
        let mi = link.run(200.0, 1.0);
        assert_eq!(mi.sent, 200);
        assert_eq!(mi.delivered, 100);
        assert_eq!(mi.delivered + mi.dropped + link.queue() as u64, 200);
    }

    #[test]
    fn brute_force_small() {
        assert_eq!(brute_force_inertia(&[0.0, 1.0, 10.0, 11.0], 2), 1.0);
        assert_eq!(brute_force_inertia(&[3.0, 5.0], 2), 0.0);
    }

    #[test]
    fn rank_statistics() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]) - 1.0).abs() < 1e-12);
        assert!((index_slope(&[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }
}
