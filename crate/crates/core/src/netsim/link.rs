use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::{MiStats, NetworkConfig};

/// Mutable bottleneck state carried between MIs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkState {
    /// Fluid queue occupancy in packets.
    pub queue: f64,
    /// Lowest per-packet latency seen so far; infinite before the first MI.
    pub min_base_latency: f64,
}

impl Default for LinkState {
    fn default() -> Self {
        Self {
            queue: 0.0,
            min_base_latency: f64::INFINITY,
        }
    }
}

/// Queue trajectory over one MI.
struct FluidMi {
    served: f64,
    overflow: f64,
    queue_end: f64,
    /// Integral of service rate times queueing delay, in packet-seconds.
    delay_mass: f64,
    min_queue_at_service: f64,
}

fn fluid_mi(bandwidth: f64, capacity: f64, q0: f64, rate: f64, t: f64) -> FluidMi {
    if rate > bandwidth {
        let growth = rate - bandwidth;
        let t_full = ((capacity - q0) / growth).clamp(0.0, t);
        let q_full = (q0 + growth * t_full).min(capacity);
        let area = 0.5 * (q0 + q_full) * t_full + capacity * (t - t_full);
        let queue_end = (q0 + growth * t).min(capacity);
        let served = bandwidth * t;
        let overflow = (q0 + rate * t - served - queue_end).max(0.0);
        // Service runs at full bandwidth, so delay mass is bandwidth * (q / bandwidth).
        FluidMi {
            served,
            overflow,
            queue_end,
            delay_mass: area,
            min_queue_at_service: q0,
        }
    } else {
        let drain = bandwidth - rate;
        let t_empty = if drain > 0.0 { q0 / drain } else { f64::INFINITY };
        if t_empty >= t {
            let queue_end = (q0 - drain * t).max(0.0);
            let served = if q0 > 0.0 { bandwidth * t } else { rate * t };
            FluidMi {
                served,
                overflow: 0.0,
                queue_end,
                delay_mass: 0.5 * (q0 + queue_end) * t,
                min_queue_at_service: queue_end,
            }
        } else {
            FluidMi {
                served: q0 + rate * t,
                overflow: 0.0,
                queue_end: 0.0,
                delay_mass: 0.5 * q0 * t_empty,
                min_queue_at_service: 0.0,
            }
        }
    }
}

/// Runs one monitor interval at a constant `send_rate`.
///
/// Packets arrive at `send_rate` and drain at the link bandwidth; the excess
/// fills the queue and anything beyond its capacity is dropped. Each served
/// packet is then lost at random with probability `loss_rate`. A packet served
/// at time `t` sees latency `latency + q(t) / bandwidth`.
pub fn step_mi<R: Rng + ?Sized>(
    config: &NetworkConfig,
    link: &mut LinkState,
    send_rate: f64,
    mi_duration: f64,
    rng: &mut R,
) -> MiStats {
    debug_assert!(send_rate >= 0.0 && mi_duration > 0.0);
    let q0 = link.queue;
    let fluid = fluid_mi(
        config.bandwidth,
        config.queue_size as f64,
        q0,
        send_rate,
        mi_duration,
    );

    let random_lost = if config.loss_rate > 0.0 {
        let trials = (fluid.served + 1e-9).floor() as u64;
        Binomial::new(trials, config.loss_rate)
            .map(|b| b.sample(rng) as f64)
            .unwrap_or(0.0)
    } else {
        0.0
    };

    let mean_queue_delay = if fluid.served > 0.0 {
        fluid.delay_mass / fluid.served
    } else {
        q0 / config.bandwidth
    };
    let mean_latency = config.latency + mean_queue_delay;
    let min_latency = config.latency + fluid.min_queue_at_service / config.bandwidth;
    link.min_base_latency = link.min_base_latency.min(min_latency);
    link.queue = fluid.queue_end;

    MiStats {
        sent: send_rate * mi_duration,
        acked: fluid.served - random_lost,
        lost: fluid.overflow + random_lost,
        mean_latency,
        min_base_latency: link.min_base_latency,
        mi_duration,
        queue_occupancy_start: q0,
        queue_occupancy_end: fluid.queue_end,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    fn cfg(bw: f64, lat: f64, q: u32, loss: f64) -> NetworkConfig {
        NetworkConfig::new(bw, lat, q, loss).unwrap()
    }

    #[test]
    fn underutilized_link_has_no_queueing() {
        let mut link = LinkState::default();
        let s = step_mi(&cfg(100.0, 0.1, 1000, 0.0), &mut link, 50.0, 0.5, &mut seeding::rng(0));
        assert!((s.sent - 25.0).abs() < 1e-12);
        assert!((s.acked - 25.0).abs() < 1e-12);
        assert_eq!(s.lost, 0.0);
        assert!((s.mean_latency - 0.1).abs() < 1e-12);
        assert!((s.min_base_latency - 0.1).abs() < 1e-12);
    }

    #[test]
    fn overloaded_small_queue_drops_overflow() {
        let mut link = LinkState::default();
        let s = step_mi(&cfg(100.0, 0.1, 10, 0.0), &mut link, 200.0, 1.0, &mut seeding::rng(0));
        assert!((s.sent - 200.0).abs() < 1e-9);
        // The link can serve at most bandwidth * duration packets.
        assert!((s.acked - 100.0).abs() < 1e-9);
        assert!((s.queue_occupancy_end - 10.0).abs() < 1e-9);
        assert!((s.lost - 90.0).abs() < 1e-9);
        assert!((s.sent - s.acked - s.lost - s.queue_growth()).abs() < 1e-9);
    }

    #[test]
    fn random_loss_is_binomial() {
        let mut link = LinkState::default();
        let s = step_mi(&cfg(100.0, 0.1, 1000, 0.5), &mut link, 50.0, 10.0, &mut seeding::rng(9));
        assert!(s.acked >= 200.0 && s.acked <= 300.0, "acked = {}", s.acked);
        assert_eq!(s.acked.fract(), 0.0);
    }

    #[test]
    fn queue_drains_when_rate_drops() {
        let c = cfg(100.0, 0.1, 1000, 0.0);
        let mut link = LinkState {
            queue: 50.0,
            min_base_latency: 0.1,
        };
        // Drains at 50 pps, empty after 1 s.
        let s = step_mi(&c, &mut link, 50.0, 2.0, &mut seeding::rng(0));
        assert_eq!(s.queue_occupancy_end, 0.0);
        assert!((s.acked - 150.0).abs() < 1e-9);
        // Delay mass 0.5 * 50 * 1 = 25 packet-seconds over 150 packets.
        assert!((s.mean_latency - (0.1 + 25.0 / 150.0)).abs() < 1e-12);
    }

    #[test]
    fn partially_drained_queue_keeps_full_service() {
        let c = cfg(100.0, 0.1, 1000, 0.0);
        let mut link = LinkState {
            queue: 100.0,
            min_base_latency: 0.1,
        };
        let s = step_mi(&c, &mut link, 80.0, 1.0, &mut seeding::rng(0));
        assert!((s.acked - 100.0).abs() < 1e-9);
        assert!((s.queue_occupancy_end - 80.0).abs() < 1e-9);
        // Queue delay averages (100 + 80) / 2 / 100 = 0.9 s.
        assert!((s.mean_latency - 1.0).abs() < 1e-12);
    }
}
