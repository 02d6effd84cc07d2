//! One line per acceptance criterion at the reference resolution.
//! Exits nonzero only when a criterion fails for an undocumented reason.

use predprey_core::verify::{run_all, Status, VerifyConfig};

fn main() {
    let outcomes = run_all(&VerifyConfig::default());
    for o in &outcomes {
        println!("{o}");
    }
    let bad: Vec<u8> = outcomes
        .iter()
        .filter(|o| !o.acceptable())
        .map(|o| o.id)
        .collect();
    let known = outcomes
        .iter()
        .filter(|o| o.status == Status::KnownFailure)
        .count();
    println!(
        "acceptance: {} passed, {known} known failure(s), {} unexpected",
        outcomes.iter().filter(|o| o.status == Status::Pass).count(),
        bad.len()
    );
    if !bad.is_empty() {
        eprintln!("unexpected failures: {bad:?}");
        std::process::exit(1);
    }
}
