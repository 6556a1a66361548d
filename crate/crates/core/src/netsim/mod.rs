//! Monitor-interval link simulator.
//!
//! Time advances one monitor interval (MI) at a time. Within an MI the sender
//! holds a constant rate; the bottleneck is a fluid queue drained at the link
//! bandwidth, with random (non-congestive) loss applied to delivered packets.

mod env;
mod link;
mod observation;

pub use env::{Env, EnvConfig, StepOutcome, RETURN_SCALE};
pub use link::{step_mi, LinkState};
pub use observation::{
    compute_observation, compute_reward, ObsHistory, Observation, RewardWeights, Statistic,
    DEFAULT_HISTORY_LEN, SEND_RATIO_CAP,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Packet size used to convert between packets/second and Mbps.
pub const PACKET_BYTES: f64 = 1500.0;

pub fn mbps_to_pps(mbps: f64) -> f64 {
    mbps * 1e6 / (8.0 * PACKET_BYTES)
}

pub fn pps_to_mbps(pps: f64) -> f64 {
    pps * 8.0 * PACKET_BYTES / 1e6
}

/// Static parameters of one bottleneck link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Packets per second.
    pub bandwidth: f64,
    /// One-way propagation delay in seconds.
    pub latency: f64,
    /// Bottleneck buffer capacity in packets.
    pub queue_size: u32,
    /// Probability that a delivered packet is dropped at random.
    pub loss_rate: f64,
}

impl NetworkConfig {
    pub fn new(bandwidth: f64, latency: f64, queue_size: u32, loss_rate: f64) -> Result<Self> {
        let config = Self {
            bandwidth,
            latency,
            queue_size,
            loss_rate,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bandwidth must be > 0, got {}",
                self.bandwidth
            )));
        }
        if !(self.latency.is_finite() && self.latency > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "latency must be > 0, got {}",
                self.latency
            )));
        }
        if self.queue_size < 1 {
            return Err(Error::InvalidConfig("queue size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.loss_rate) {
            return Err(Error::InvalidConfig(format!(
                "loss rate must be in [0, 1), got {}",
                self.loss_rate
            )));
        }
        Ok(())
    }

    /// Base round-trip time.
    pub fn rtt(&self) -> f64 {
        2.0 * self.latency
    }
}

/// Closed ranges for each link parameter. Episodes sample uniformly from them
/// (log-uniformly for the queue size).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigRanges {
    pub bandwidth: (f64, f64),
    pub latency: (f64, f64),
    pub queue: (u32, u32),
    pub loss: (f64, f64),
}

impl ConfigRanges {
    /// The full training ranges of the baseline agent.
    pub fn baseline() -> Self {
        Self {
            bandwidth: (100.0, 500.0),
            latency: (0.05, 0.5),
            queue: (2, 2981),
            loss: (0.0, 0.05),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo <= hi;
        if !ordered(self.bandwidth) || !ordered(self.latency) || !ordered(self.loss) {
            return Err(Error::InvalidConfig(format!("unordered ranges: {self:?}")));
        }
        if self.queue.0 > self.queue.1 {
            return Err(Error::InvalidConfig(format!("unordered queue range: {:?}", self.queue)));
        }
        NetworkConfig::new(self.bandwidth.0, self.latency.0, self.queue.0, self.loss.0)?;
        NetworkConfig::new(self.bandwidth.1, self.latency.1, self.queue.1, self.loss.1)?;
        Ok(())
    }

    pub fn contains(&self, config: &NetworkConfig) -> bool {
        let eps = 1e-9;
        let within = |(lo, hi): (f64, f64), v: f64| v >= lo - eps && v <= hi + eps;
        within(self.bandwidth, config.bandwidth)
            && within(self.latency, config.latency)
            && (self.queue.0..=self.queue.1).contains(&config.queue_size)
            && within(self.loss, config.loss_rate)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> NetworkConfig {
        let uniform = |rng: &mut R, (lo, hi): (f64, f64)| {
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        };
        let bandwidth = uniform(rng, self.bandwidth);
        let latency = uniform(rng, self.latency);
        let (qlo, qhi) = (self.queue.0 as f64, self.queue.1 as f64);
        let queue_size = if qhi > qlo {
            rng.random_range(qlo.ln()..=qhi.ln()).exp().round() as u32
        } else {
            self.queue.0
        };
        let loss_rate = uniform(rng, self.loss);
        NetworkConfig {
            bandwidth,
            latency,
            queue_size: queue_size.clamp(self.queue.0, self.queue.1),
            loss_rate,
        }
    }
}

/// Per-MI accounting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MiStats {
    pub sent: f64,
    pub acked: f64,
    pub lost: f64,
    /// Mean one-way latency of packets served during the MI.
    pub mean_latency: f64,
    /// Lowest latency observed on this connection so far.
    pub min_base_latency: f64,
    pub mi_duration: f64,
    pub queue_occupancy_start: f64,
    pub queue_occupancy_end: f64,
}

impl MiStats {
    pub fn throughput(&self) -> f64 {
        if self.mi_duration > 0.0 {
            self.acked / self.mi_duration
        } else {
            0.0
        }
    }

    pub fn loss_fraction(&self) -> f64 {
        self.lost / self.sent.max(1.0)
    }

    pub fn queue_growth(&self) -> f64 {
        self.queue_occupancy_end - self.queue_occupancy_start
    }
}

/// Rate update rule shared by every action-emitting policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateAdjust {
    pub delta: f64,
    pub min_rate: f64,
    pub max_rate: f64,
}

impl RateAdjust {
    pub const DEFAULT_DELTA: f64 = 0.025;

    /// Rate limits `[1, 2 * max_bandwidth]`.
    pub fn for_bandwidth(max_bandwidth: f64) -> Self {
        Self {
            delta: Self::DEFAULT_DELTA,
            min_rate: 1.0,
            max_rate: 2.0 * max_bandwidth,
        }
    }

    pub fn apply(&self, rate: f64, action: f64) -> f64 {
        apply_action(rate, action, self.delta).clamp(self.min_rate, self.max_rate)
    }
}

/// Multiplicative rate update: growth by `1 + delta * a` for non-negative
/// actions, shrinkage by `1 / (1 - delta * a)` otherwise. Not clamped.
pub fn apply_action(rate: f64, action: f64, delta: f64) -> f64 {
    if action >= 0.0 {
        rate * (1.0 + delta * action)
    } else {
        rate / (1.0 - delta * action)
    }
}

/// MI length for a link: one base RTT, but never shorter than 50 ms.
pub fn mi_duration_for(config: &NetworkConfig, min_mi: f64) -> f64 {
    config.rtt().max(min_mi)
}
