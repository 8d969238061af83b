//! Command implementations behind the `scale-opt` binary. Each command
//! returns a structured result; the binary only parses flags, prints and
//! maps errors to exit codes.

mod bench;
mod commands;
mod config;
mod verify;

pub use bench::{
    cmd_bench_norms, BenchOptions, BenchReport, BenchRow, BENCH_CSV_HEADER, BENCH_KINDS,
};
pub use commands::{
    cmd_memory, cmd_train, cmd_variance, MemoryOutcome, TrainOutcome, VarianceOutcome,
};
pub use config::{
    json_error_offset, parse_experiment, ExperimentConfig, ProblemSpec, ScheduleSpec,
    CONFIG_SCHEMA_VERSION,
};
pub use verify::{cmd_verify, SuiteResult, VerifyConfig, VerifyReport};

use crate::error::Error;

/// CSV layouts written by the commands. Bump when a header changes.
pub const TRACE_CSV_VERSION: u32 = 1;
pub const MEMORY_CSV_VERSION: u32 = 1;
pub const BENCH_CSV_VERSION: u32 = 1;
pub const VARIANCE_CSV_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
/// Divergence, failed verification, or any other runtime failure.
pub const EXIT_FAILURE: i32 = 1;
/// Bad flags or configuration.
pub const EXIT_USAGE: i32 = 2;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json(_) | Error::MissingBeta(_) | Error::ReferenceOnly(_) => {
            EXIT_USAGE
        }
        _ => EXIT_FAILURE,
    }
}

/// Worker count for concurrent runs: `SCALE_OPT_THREADS` if set to a
/// positive integer, otherwise the available parallelism.
pub fn thread_cap() -> usize {
    std::env::var("SCALE_OPT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
