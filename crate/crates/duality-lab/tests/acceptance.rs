//! Acceptance suite as an integration test: every criterion runs at its
//! pinned tolerance and prints one pass/fail line; the final criterion
//! replays the suite at 1 vs 8 workers and checks byte-identical results.

use duality_lab::accept;

#[test]
fn acceptance_suite() {
    let results = accept::run_acceptance(accept::DEFAULT_SEED);
    let mut failures = Vec::new();
    for r in &results {
        println!("{}", r.line());
        if !r.passed {
            failures.push(r.id);
        }
    }
    println!(
        "{}/{} criteria passed",
        results.len() - failures.len(),
        results.len()
    );
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
