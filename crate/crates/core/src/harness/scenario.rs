use serde::{Deserialize, Serialize};

use crate::netsim::{mbps_to_pps, NetworkConfig};
use crate::{Error, Result};

pub const DEFAULT_DURATION: f64 = 25.0;

/// A link configuration that holds from `start` until the next segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub config: NetworkConfig,
}

/// A piecewise-constant link schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub schedule: Vec<Segment>,
    pub duration: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn new(name: impl Into<String>, schedule: Vec<Segment>, duration: f64, seed: u64) -> Result<Self> {
        let s = Self {
            name: name.into(),
            schedule,
            duration,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(name: impl Into<String>, config: NetworkConfig, duration: f64, seed: u64) -> Result<Self> {
        Self::new(name, vec![Segment { start: 0.0, config }], duration, seed)
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidArgument(format!("duration {} must be positive", self.duration)));
        }
        let first = self
            .schedule
            .first()
            .ok_or(Error::Empty("scenario schedule"))?;
        if first.start != 0.0 {
            return Err(Error::InvalidArgument("schedule must start at time 0".into()));
        }
        for w in self.schedule.windows(2) {
            if !(w[1].start > w[0].start) {
                return Err(Error::InvalidArgument("segment starts must increase".into()));
            }
        }
        if self.schedule.last().is_some_and(|s| s.start >= self.duration) {
            return Err(Error::InvalidArgument("segment starts after the scenario ends".into()));
        }
        for s in &self.schedule {
            s.config.validate()?;
        }
        Ok(())
    }

    /// Index of the segment in force at `t`.
    pub fn segment_at(&self, t: f64) -> usize {
        self.schedule.partition_point(|s| s.start <= t).saturating_sub(1)
    }

    pub fn config_at(&self, t: f64) -> &NetworkConfig {
        &self.schedule[self.segment_at(t)].config
    }

    /// End of segment `i`.
    pub fn segment_end(&self, i: usize) -> f64 {
        self.schedule.get(i + 1).map_or(self.duration, |s| s.start)
    }

    pub fn max_bandwidth(&self) -> f64 {
        self.schedule.iter().map(|s| s.config.bandwidth).fold(0.0, f64::max)
    }

    /// Mean scheduled capacity over `[a, b)`, in packets per second.
    pub fn mean_capacity(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        for (i, s) in self.schedule.iter().enumerate() {
            let lo = s.start.max(a);
            let hi = self.segment_end(i).min(b);
            if hi > lo {
                total += s.config.bandwidth * (hi - lo);
            }
        }
        total / (b - a)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// The link used by every sweep unless the swept condition overrides it:
/// 30 Mbps, 30 ms, a 1000-packet queue and no random loss.
pub fn sweep_defaults() -> NetworkConfig {
    NetworkConfig {
        bandwidth: mbps_to_pps(30.0),
        latency: 0.03,
        queue_size: 1000,
        loss_rate: 0.0,
    }
}

/// Constant 30 Mbps link with random loss.
pub fn scenario_lossy_with(loss_rate: f64) -> Result<Scenario> {
    let config = NetworkConfig {
        loss_rate,
        ..sweep_defaults()
    };
    config.validate()?;
    Scenario::constant("lossy", config, DEFAULT_DURATION, 0)
}

pub fn scenario_lossy() -> Scenario {
    scenario_lossy_with(0.02).expect("valid built-in scenario")
}

/// Capacity alternating between 20 and 40 Mbps every 5 s, starting low.
pub fn scenario_oscillating() -> Scenario {
    let schedule = (0..5)
        .map(|i| Segment {
            start: 5.0 * i as f64,
            config: NetworkConfig {
                bandwidth: mbps_to_pps(if i % 2 == 0 { 20.0 } else { 40.0 }),
                ..sweep_defaults()
            },
        })
        .collect();
    Scenario::new("oscillating", schedule, DEFAULT_DURATION, 0).expect("valid built-in scenario")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Mbps.
    Bandwidth,
    /// Seconds.
    Latency,
    /// Packets.
    Queue,
    /// Fraction of packets.
    Loss,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Bandwidth,
        Condition::Latency,
        Condition::Queue,
        Condition::Loss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Bandwidth => "bandwidth",
            Condition::Latency => "latency",
            Condition::Queue => "queue",
            Condition::Loss => "loss",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown condition {s:?}")))
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            Condition::Bandwidth => (1..=10).map(|i| 10.0 * i as f64).collect(),
            Condition::Latency => (1..=10).map(|i| 0.02 * i as f64).collect(),
            Condition::Queue => vec![2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0, 2000.0],
            Condition::Loss => (0..=10).map(|i| 0.01 * i as f64).collect(),
        }
    }

    pub fn apply(self, base: NetworkConfig, value: f64) -> NetworkConfig {
        let mut c = base;
        match self {
            Condition::Bandwidth => c.bandwidth = mbps_to_pps(value),
            Condition::Latency => c.latency = value,
            Condition::Queue => c.queue_size = value.round().max(0.0) as u32,
            Condition::Loss => c.loss_rate = value,
        }
        c
    }
}

/// One constant scenario per value, varying a single condition.
pub fn scenario_sweep(condition: Condition, values: &[f64]) -> Result<Vec<Scenario>> {
    values
        .iter()
        .map(|&v| {
            let config = condition.apply(sweep_defaults(), v);
            config.validate()?;
            Scenario::constant(format!("{}={v}", condition.name()), config, DEFAULT_DURATION, 0)
        })
        .collect()
}
