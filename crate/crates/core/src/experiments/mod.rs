//! Metrics, bounds and the cross-validated sweep.

pub mod bounds;
pub mod metrics;
pub mod runner;
pub mod table;

pub use bounds::{cts_regret_term, theorem1_bound, theorem2_bound, BoundInputs};
pub use metrics::{
    behavioral_error, cumulative_average_regret, reference_rewards, TrajectoryLog,
    TrajectoryRecord, TRAJECTORY_COLUMNS,
};
pub use runner::{
    learn_policies, policy_keys, prepare_environment, run_experiment, run_experiment_on,
    stream_order, ExperimentOutput, PolicyKey, PolicyMap, RunOptions,
};
pub use table::{
    read_summary_csv, recompute_aggregates, ResultTable, RunKey, RunMethod, RunRow, SummaryRow,
};
