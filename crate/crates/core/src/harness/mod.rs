//! Closed-loop orchestration and the numerical experiments around it.

pub mod experiment;
pub mod gronwall;
pub mod averaging;
pub mod sim;
pub mod svg;
pub mod verify;

pub use experiment::{
    replay, replay_matches, run_batch, Experiment, ExperimentConfig, Replay, RunSummary,
    SystemSource,
};
pub use gronwall::{gronwall_check, random_gronwall_case, GronwallResult, PiecewiseAffineFlow};
pub use averaging::{averaging_experiment, standard_input_set, PiecewiseAffine, AveragingRow};
pub use sim::{run_closed_loop, ClosedLoopTrace, LoopSetup, RunOptions, TraceDetail};
pub use verify::{verify_trace, VerifyReport};
