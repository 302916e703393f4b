//! Runs every acceptance criterion and prints one line per criterion.
//!
//! The default is the full profile. Set `DEGENLAB_PROFILE=smoke` for the
//! reduced sizes; pass criterion ids as arguments to run a subset.

use std::process::ExitCode;
use std::time::Instant;

use degenlab_core::checks::{run_criterion, Profile, CRITERIA};

fn main() -> ExitCode {
    let profile = match std::env::var("DEGENLAB_PROFILE").as_deref() {
        Ok("smoke") => Profile::Smoke,
        _ => Profile::Full,
    };
    let requested: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ids: Vec<u32> = CRITERIA.iter().map(|c| c.0).filter(|id| requested.is_empty() || requested.contains(id)).collect();

    println!("acceptance ({profile:?} profile, {} criteria)", ids.len());
    let mut failed = 0;
    for id in ids {
        let start = Instant::now();
        let row = run_criterion(id, profile);
        println!(
            "criterion {:>2} {}: {} value={:.6e} {} {:.3e} ({:.1}s)",
            row.id,
            if row.pass { "PASS" } else { "FAIL" },
            row.name,
            row.value,
            row.relation,
            row.bound,
            start.elapsed().as_secs_f64()
        );
        println!("    {}", row.detail);
        if !row.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all criteria passed");
        ExitCode::SUCCESS
    }
}
