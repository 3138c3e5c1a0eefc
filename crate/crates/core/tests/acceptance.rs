//! Acceptance criteria: one line per criterion, then a single assertion over all of them.

use llband::validation::{run_all, ValidationOptions};

#[test]
fn acceptance() {
    let quick = std::env::var("LLBAND_QUICK").is_ok_and(|v| v == "1");
    let opts = ValidationOptions {
        quick,
        ..ValidationOptions::default()
    };
    let reports = run_all(&opts, |r| println!("{}", r.line()));
    let failed: Vec<u8> = reports.iter().filter(|r| !r.passed()).map(|r| r.id).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
