//! Acceptance suite: one PASS/FAIL line per criterion. Tolerances and time
//! limits are the constants in `sojourn_harness::accept`. Runs without the
//! libtest harness so the lines show up in plain `cargo test` output.

use std::process::ExitCode;
use std::time::Instant;

use sojourn_harness::accept::{self, CriterionResult};

fn main() -> ExitCode {
    let start = Instant::now();
    let scratch = tempfile::tempdir().expect("temporary directory");
    let dir = scratch.path();
    // The two slow criteria run alongside the rest.
    let results: Vec<CriterionResult> = std::thread::scope(|s| {
        let jobs: Vec<_> = vec![
            s.spawn(accept::criterion_1),
            s.spawn(accept::criterion_2),
            s.spawn(accept::criterion_3),
            s.spawn(accept::criterion_4),
            s.spawn(accept::criterion_5),
            s.spawn(accept::criterion_6),
            s.spawn(accept::criterion_7),
            s.spawn(accept::criterion_8),
            s.spawn(accept::criterion_9),
            s.spawn(accept::criterion_10),
            s.spawn(move || accept::criterion_11(dir)),
        ];
        jobs.into_iter()
            .map(|j| j.join().expect("criterion panicked"))
            .collect()
    });
    println!();
    println!("running {} acceptance criteria", results.len());
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed, {:.1} s wall clock",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
