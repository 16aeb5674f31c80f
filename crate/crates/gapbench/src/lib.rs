//! Experiment harness for sampling-rate lower bounds: configuration,
//! execution, reports, and a reference external client.

pub mod config;
pub mod fixture;
pub mod kind;
pub mod report;
pub mod run;

pub use config::{ConfigError, Experiment, ExperimentConfig};
pub use kind::{Kind, UnknownKind};
pub use report::{Report, ReportError};
pub use run::{execute, RunError};

/// Environment variable that overrides the configured thread count.
pub const THREADS_ENV: &str = "GAPBENCH_THREADS";

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const FAIL: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const PROTOCOL: i32 = 3;
}

/// Exit code for a finished run: protocol failures take precedence over a
/// failed verdict.
pub fn exit_code(report: &Report) -> i32 {
    if report.protocol_failures > 0 {
        exit::PROTOCOL
    } else if report.verdict == gapbench_core::adversary::Verdict::Pass {
        exit::PASS
    } else {
        exit::FAIL
    }
}

/// Applies `GAPBENCH_THREADS` when it is set to a number.
pub fn apply_thread_override(config: &mut ExperimentConfig, env: Option<&str>) -> Result<(), ConfigError> {
    if let Some(v) = env {
        let n = v
            .trim()
            .parse()
            .map_err(|_| ConfigError::Invalid(vec![format!("{THREADS_ENV} must be a thread count, got {v:?}")]))?;
        config.threads = n;
    }
    Ok(())
}
