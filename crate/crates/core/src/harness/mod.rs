//! Evaluation scenarios, throughput traces, the AIMD comparator, efficiency
//! measurement and the end-to-end pipeline.

mod bench;
mod pipeline;
mod scenario;
mod trace;

pub use bench::{measure_efficiency, policy_flops, Efficiency, BATCH, MIN_DECISIONS};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutput, StageTimes};
pub use scenario::{
    scenario_lossy, scenario_lossy_with, scenario_oscillating, scenario_sweep, sweep_defaults,
    Condition, Scenario, Segment, DEFAULT_DURATION,
};
pub use trace::{
    run_controller, run_trace, ActionController, Aimd, FixedRate, IdealRate, Metrics, MiRecord,
    PolicyRef, RateController, TraceRecord, TraceSample, AIMD_DECREASE, AIMD_INCREASE,
};
