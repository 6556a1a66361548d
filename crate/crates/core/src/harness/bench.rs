use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::trace::PolicyRef;
use crate::symtree::AgentState;
use crate::{Error, Result};

/// Decisions per timed batch.
pub const BATCH: usize = 1000;
pub const MIN_DECISIONS: usize = 100_000;

/// Worst-case floating-point operations per decision.
pub fn policy_flops(policy: PolicyRef<'_>) -> Option<usize> {
    match policy {
        PolicyRef::Tree(t) => Some(t.flops(crate::netsim::DEFAULT_HISTORY_LEN)),
        PolicyRef::Branched(b) => Some(b.flops()),
        PolicyRef::Teacher(p) => Some(p.forward_flops()),
        PolicyRef::Aimd => Some(1),
        PolicyRef::Ideal | PolicyRef::Fixed(_) => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub policy: String,
    pub flops: Option<usize>,
    /// Median over batches of the mean time per decision, in seconds.
    pub per_decision_runtime: f64,
    pub decisions: usize,
}

/// Times repeated decisions on `inputs`, cycling through them. Returns the
/// median of per-batch mean decision times.
pub fn measure_efficiency(policy: PolicyRef<'_>, inputs: &[Vec<f64>], decisions: usize) -> Result<Efficiency> {
    if inputs.is_empty() {
        return Err(Error::Empty("benchmark inputs"));
    }
    let batches = decisions.max(MIN_DECISIONS).div_ceil(BATCH);
    let mut state = AgentState::new();
    let mut decide = |x: &[f64]| -> f64 {
        match policy {
            PolicyRef::Tree(t) => t.eval(x, &mut state),
            PolicyRef::Branched(b) => b.eval(x, &mut state).map(|(a, _)| a).unwrap_or(0.0),
            PolicyRef::Teacher(p) => p.act_features(x),
            PolicyRef::Aimd => {
                if x[0] > 0.0 {
                    x[1] * 0.5
                } else {
                    x[1] + 10.0
                }
            }
            PolicyRef::Ideal => x[0],
            PolicyRef::Fixed(r) => r,
        }
    };
    let mut times = Vec::with_capacity(batches);
    let mut j = 0;
    for _ in 0..batches {
        let start = Instant::now();
        for _ in 0..BATCH {
            black_box(decide(black_box(&inputs[j])));
            j = (j + 1) % inputs.len();
        }
        times.push(start.elapsed().as_secs_f64() / BATCH as f64);
    }
    times.sort_by(f64::total_cmp);
    Ok(Efficiency {
        policy: policy.name().into(),
        flops: policy_flops(policy),
        per_decision_runtime: times[times.len() / 2],
        decisions: batches * BATCH,
    })
}
