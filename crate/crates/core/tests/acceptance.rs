//! Acceptance suite: prints one PASS/FAIL line per criterion with the
//! measured value, threshold and time, and exits non-zero if any check
//! fails or overruns its time budget. Checks run one after another so the
//! budgets are measured without contention.

use std::process::ExitCode;

use bounded_alloc::harness::verify::{CHECKS, Scale};

fn main() -> ExitCode {
    let mut failed = Vec::new();
    for check in CHECKS {
        let result = check(Scale::Full);
        println!("{result}");
        if !result.pass || !result.within_budget() {
            failed.push(result.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} checks passed", CHECKS.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of {} checks failed: {failed:?}", failed.len(), CHECKS.len());
        ExitCode::FAILURE
    }
}
