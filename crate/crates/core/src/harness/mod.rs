//! Algorithm orchestration, metrics, the BC baseline, sweeps and transfer.

mod eval;
mod metrics;
mod run;
mod sweep;

pub use eval::{
    evaluate, held_out_rollouts, held_out_starts, shifted_env, transfer_eval,
    write_grid_predictions, Metrics, TransferMetrics,
};
pub use metrics::{
    demo_infeasible_fraction, grid_points, iou, max_incursion, recall_precision, unsafe_rate,
    violation_fraction, Confusion, EvalGrid,
};
pub use run::{
    build_policy, demonstrations, policy_rollouts, run, run_bc_baseline, run_pucl, write_trace_csv,
    IterationRecord, Learner, RunOutput,
};
pub use sweep::{mean_std, median, sweep_dr, SweepCell, SweepRow};
