//! Scenario files, batch runs, the sampling-time sweep and golden
//! comparisons on top of `tspmp-core`.

pub mod error;
pub mod golden;
pub mod lambda;
pub mod run;
pub mod scenario;

pub use error::{CliError, CliResult};
pub use golden::{compare_golden, GoldenComparison, GoldenEntry, GoldenFile};
pub use lambda::{lambda_grid, sweep_lambda, LambdaRow, LambdaSweep, Threshold, Watched};
pub use run::{run_scenario, write_artifacts, ScenarioRecord, ScenarioRun, SolverRecord};
pub use scenario::{Expected, ExpectedPoint, ExpectedScalar, Scenario, SolverChoice};
