//! Verification suites, desk-scale experiments and their machine-readable reports.

mod report;
mod runs;
mod stamp;
pub mod verify;

pub use report::{ExperimentReport, Measurement, Threshold, REPORT_SCHEMA_VERSION};
pub use runs::{
    ToyShape,
    ablation, eig_sweep, orientation, robustness, run_experiment, AblationArm, AblationConfig, EigSweepConfig,
    ExperimentName, OrientationConfig, RobustnessConfig, ToyTask,
};
pub use stamp::VerificationStamp;
pub use verify::{randomized_params, run_suite, HeatKernelOptions, Suite};
