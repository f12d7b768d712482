pub mod classify;
pub mod clean;
pub mod dedup;
pub mod mixture;
pub mod pipeline;
pub mod posttrain;
pub mod report;

use std::process::ExitCode;

/// Collect-and-report convention: outputs were written, but some inputs or
/// checks failed along the way.
pub fn exit_for(error_count: usize) -> ExitCode {
    if error_count > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
