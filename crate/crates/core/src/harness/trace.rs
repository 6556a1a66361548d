use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use crate::agent::Agent;
use crate::branching::{BranchedAgent, BranchedPolicy};
use crate::netsim::{
    compute_observation, mi_duration_for, pps_to_mbps, step_mi, EnvConfig, LinkState, MiStats,
    ObsHistory, RateAdjust,
};
use crate::symtree::{PolicyTree, TreeAgent};
use crate::teacher::TeacherPolicy;
use crate::{seeding, Result};

/// Additive increase per loss-free MI, in packets per second.
pub const AIMD_INCREASE: f64 = 10.0;
pub const AIMD_DECREASE: f64 = 0.5;

/// Chooses the sending rate for each MI.
pub trait RateController {
    fn reset(&mut self);

    /// Rate for the next MI given the previous rate, the observation history
    /// and the last MI's accounting. `capacity` is only for the ideal oracle.
    fn next_rate(&mut self, rate: f64, obs: &ObsHistory, last: Option<&MiStats>, capacity: f64) -> f64;

    /// Branch used for the last decision, for branched policies.
    fn last_branch(&self) -> Option<usize> {
        None
    }
}

/// Wraps an action-emitting agent with the multiplicative rate update.
pub struct ActionController<A> {
    pub agent: A,
    pub adjust: RateAdjust,
}

impl<A: Agent> RateController for ActionController<A> {
    fn reset(&mut self) {
        self.agent.reset();
    }

    fn next_rate(&mut self, rate: f64, obs: &ObsHistory, _: Option<&MiStats>, _: f64) -> f64 {
        self.adjust.apply(rate, self.agent.act(obs))
    }

    fn last_branch(&self) -> Option<usize> {
        self.agent.last_branch()
    }
}

/// Additive increase, multiplicative decrease on any loss.
#[derive(Clone, Debug)]
pub struct Aimd {
    pub increase: f64,
    pub decrease: f64,
    pub min_rate: f64,
    pub max_rate: f64,
}

impl Aimd {
    pub fn new(max_rate: f64) -> Self {
        Self {
            increase: AIMD_INCREASE,
            decrease: AIMD_DECREASE,
            min_rate: 1.0,
            max_rate,
        }
    }
}

impl RateController for Aimd {
    fn reset(&mut self) {}

    fn next_rate(&mut self, rate: f64, _: &ObsHistory, last: Option<&MiStats>, _: f64) -> f64 {
        let next = match last {
            Some(s) if s.lost > 0.0 => rate * self.decrease,
            Some(_) => rate + self.increase,
            None => rate,
        };
        next.clamp(self.min_rate, self.max_rate)
    }
}

/// Sends at exactly the scheduled capacity.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdealRate;

impl RateController for IdealRate {
    fn reset(&mut self) {}

    fn next_rate(&mut self, _: f64, _: &ObsHistory, _: Option<&MiStats>, capacity: f64) -> f64 {
        capacity
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FixedRate(pub f64);

impl RateController for FixedRate {
    fn reset(&mut self) {}

    fn next_rate(&mut self, _: f64, _: &ObsHistory, _: Option<&MiStats>, _: f64) -> f64 {
        self.0
    }
}

/// The policies a trace can run.
#[derive(Clone, Copy, Debug)]
pub enum PolicyRef<'a> {
    Tree(&'a PolicyTree),
    Branched(&'a BranchedPolicy),
    Teacher(&'a TeacherPolicy),
    Aimd,
    Ideal,
    Fixed(f64),
}

impl<'a> PolicyRef<'a> {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyRef::Tree(_) => "tree",
            PolicyRef::Branched(_) => "branched",
            PolicyRef::Teacher(_) => "teacher",
            PolicyRef::Aimd => "aimd",
            PolicyRef::Ideal => "ideal",
            PolicyRef::Fixed(_) => "fixed",
        }
    }

    pub fn controller(&self, max_rate: f64, delta: f64) -> Box<dyn RateController + 'a> {
        let adjust = RateAdjust {
            delta,
            min_rate: 1.0,
            max_rate,
        };
        match *self {
            PolicyRef::Tree(t) => Box::new(ActionController {
                agent: TreeAgent::new(t),
                adjust,
            }),
            PolicyRef::Branched(b) => Box::new(ActionController {
                agent: BranchedAgent::new(b),
                adjust,
            }),
            PolicyRef::Teacher(p) => Box::new(ActionController { agent: p, adjust }),
            PolicyRef::Aimd => Box::new(Aimd::new(max_rate)),
            PolicyRef::Ideal => Box::new(IdealRate),
            PolicyRef::Fixed(r) => Box::new(FixedRate(r)),
        }
    }
}

/// Aggregates over one second of the trace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub second: usize,
    pub throughput_mbps: f64,
    pub send_rate_pps: f64,
    pub mean_latency: f64,
    pub loss_fraction: f64,
    pub capacity_mbps: f64,
}

/// One MI of the trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiRecord {
    pub start: f64,
    pub duration: f64,
    pub rate: f64,
    pub branch: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub samples: Vec<TraceSample>,
    pub mis: Vec<MiRecord>,
}

impl TraceRecord {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn capacity(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.capacity_mbps).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mean_thpt: f64,
    pub sum_thpt: f64,
    pub delta_opt_sq: f64,
    pub link_utilization: f64,
    pub flops: Option<usize>,
    /// Median seconds per decision, when measured.
    pub per_decision_runtime: Option<f64>,
}

impl Metrics {
    /// Throughput statistics against the scheduled capacity.
    pub fn from_record(record: &TraceRecord) -> Self {
        let n = record.samples.len().max(1) as f64;
        let sum: f64 = record.samples.iter().map(|s| s.throughput_mbps).sum();
        let cap: f64 = record.samples.iter().map(|s| s.capacity_mbps).sum();
        let dev: f64 = record
            .samples
            .iter()
            .map(|s| (s.throughput_mbps - s.capacity_mbps).powi(2))
            .sum();
        Self {
            mean_thpt: sum / n,
            sum_thpt: sum,
            delta_opt_sq: dev / n,
            link_utilization: if cap > 0.0 { sum / cap } else { 0.0 },
            flops: None,
            per_decision_runtime: None,
        }
    }
}

#[derive(Default)]
struct Bin {
    acked: f64,
    sent: f64,
    lost: f64,
    latency_mass: f64,
}

/// Runs `controller` over the scenario's schedule, one MI at a time. MIs are
/// cut short at segment boundaries so every MI sees a single link config.
pub fn run_controller(
    scenario: &Scenario,
    controller: &mut dyn RateController,
    env: &EnvConfig,
) -> Result<(TraceRecord, Metrics)> {
    scenario.validate()?;
    let mut rng = seeding::rng_at(scenario.seed, &[0]);
    let first = scenario.schedule[0].config;
    let (lo, hi) = env.init_rate_range;
    let frac = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let mut rate = frac * first.bandwidth;
    let mut link = LinkState::default();
    let mut history = ObsHistory::new(env.history_len);
    let mut prev: Option<MiStats> = None;
    let seconds = scenario.duration.ceil() as usize;
    let mut bins: Vec<Bin> = (0..seconds).map(|_| Bin::default()).collect();
    let mut mis = Vec::new();
    controller.reset();
    let mut t = 0.0;
    while t < scenario.duration - 1e-9 {
        let seg = scenario.segment_at(t);
        let config = scenario.schedule[seg].config;
        let end = scenario.segment_end(seg);
        rate = controller.next_rate(rate, &history, prev.as_ref(), config.bandwidth);
        let d = mi_duration_for(&config, env.min_mi).min(end - t);
        let stats = step_mi(&config, &mut link, rate.max(0.0), d, &mut rng);
        mis.push(MiRecord {
            start: t,
            duration: d,
            rate,
            branch: controller.last_branch(),
        });
        // spread the MI's totals uniformly over the seconds it overlaps
        let t_end = if end - (t + d) < 1e-12 { end } else { t + d };
        let mut a = t;
        while a < t_end - 1e-12 {
            let sec = (a.floor() as usize).min(seconds - 1);
            let b = ((sec + 1) as f64).min(t_end);
            let w = (b - a) / d;
            let bin = &mut bins[sec];
            bin.acked += stats.acked * w;
            bin.sent += stats.sent * w;
            bin.lost += stats.lost * w;
            bin.latency_mass += stats.mean_latency * stats.acked * w;
            a = b;
        }
        history.push(compute_observation(&stats, prev.as_ref().unwrap_or(&stats)));
        prev = Some(stats);
        t = t_end;
    }
    let samples = bins
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let a = i as f64;
            let e = ((i + 1) as f64).min(scenario.duration);
            let width = e - a;
            TraceSample {
                second: i,
                throughput_mbps: pps_to_mbps(b.acked / width),
                send_rate_pps: b.sent / width,
                mean_latency: if b.acked > 0.0 { b.latency_mass / b.acked } else { 0.0 },
                loss_fraction: if b.sent > 0.0 { b.lost / b.sent } else { 0.0 },
                capacity_mbps: pps_to_mbps(scenario.mean_capacity(a, e)),
            }
        })
        .collect();
    let record = TraceRecord { samples, mis };
    let metrics = Metrics::from_record(&record);
    Ok((record, metrics))
}

/// Runs a policy on a scenario. Rates are capped at twice the highest
/// scheduled capacity.
pub fn run_trace(scenario: &Scenario, policy: PolicyRef<'_>, env: &EnvConfig) -> Result<(TraceRecord, Metrics)> {
    let mut controller = policy.controller(2.0 * scenario.max_bandwidth(), env.delta);
    let (record, mut metrics) = run_controller(scenario, controller.as_mut(), env)?;
    metrics.flops = super::bench::policy_flops(policy);
    Ok((record, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::{scenario_lossy, scenario_oscillating};

    #[test]
    fn ideal_rate_tracks_a_loss_free_schedule() {
        let s = scenario_oscillating();
        let (rec, m) = run_trace(&s, PolicyRef::Ideal, &EnvConfig::default()).unwrap();
        assert_eq!(rec.samples.len(), 25);
        for x in &rec.samples {
            assert!((x.throughput_mbps - x.capacity_mbps).abs() < 1e-6, "{x:?}");
        }
        assert!(m.link_utilization > 0.98 && m.link_utilization <= 1.0 + 1e-6);
    }

    #[test]
    fn zero_rate_has_no_throughput() {
        let s = scenario_oscillating();
        let (rec, m) = run_trace(&s, PolicyRef::Fixed(0.0), &EnvConfig::default()).unwrap();
        assert_eq!(m.mean_thpt, 0.0);
        let cap = rec.capacity();
        let expect = cap.iter().map(|c| c * c).sum::<f64>() / cap.len() as f64;
        assert!((m.delta_opt_sq - expect).abs() < 1e-9);
    }

    #[test]
    fn throughput_never_exceeds_capacity() {
        for policy in [PolicyRef::Aimd, PolicyRef::Fixed(5000.0)] {
            for s in [scenario_lossy(), scenario_oscillating()] {
                let (rec, _) = run_trace(&s, policy, &EnvConfig::default()).unwrap();
                for x in &rec.samples {
                    assert!(x.throughput_mbps <= x.capacity_mbps + 1e-6, "{x:?}");
                }
            }
        }
    }

    #[test]
    fn aimd_rule() {
        let mut a = Aimd::new(1e6);
        let obs = ObsHistory::new(10);
        let clean = MiStats { sent: 10.0, acked: 10.0, mi_duration: 0.1, ..Default::default() };
        let lossy = MiStats { lost: 1.0, ..clean };
        assert_eq!(a.next_rate(100.0, &obs, Some(&clean), 0.0), 110.0);
        assert_eq!(a.next_rate(100.0, &obs, Some(&lossy), 0.0), 50.0);
    }
}
