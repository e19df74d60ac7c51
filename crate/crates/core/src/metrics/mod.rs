//! Scenario files and the metrics computed over event logs.
//!
//! Every number here is recomputed from a log alone; nothing reads
//! simulator state.

mod report;
mod scenario_file;

pub use report::{
    build_report, coalition_control_probability, coalition_control_series, coalition_leader_series, compute_downtime,
    compute_shuffle_entropy, emit_report, informed_coalition, kendall_tau_distance, max_leader_streak,
    uniform_kendall_moments, CoalitionControl, CycleRow, CycleView, MetricsError, MetricsReport, ReshuffleRow, RunLog,
    ShuffleEntropy, Summary, CSV_HEADER,
};
pub use scenario_file::{parse_scenario, policy_name, ScenarioErrors};
