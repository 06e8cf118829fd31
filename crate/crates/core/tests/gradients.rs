//! The full finite-difference suite at its documented size: 100 random
//! trials per kernel, inside a two-minute budget.

use std::time::{Duration, Instant};

use hcap_core::gradsuite::{run_suite, COMPOSITE_TOLERANCE, KERNELS, KERNEL_TOLERANCE};

#[test]
fn every_kernel_passes_100_trials_within_budget() {
    let start = Instant::now();
    let reports = run_suite(0, 100).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(reports.len(), KERNELS.len());
    for r in &reports {
        println!(
            "{:<20} coords {:>6} skipped {:>3} max rel err {:.3e}",
            r.name, r.coords, r.skipped, r.max_rel_error
        );
        let tol = if r.name == "set_loss" {
            COMPOSITE_TOLERANCE
        } else {
            KERNEL_TOLERANCE
        };
        assert_eq!(r.tolerance, tol);
        assert!(r.passed(), "{r:?}");
    }
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
}

#[test]
fn a_second_seed_also_passes() {
    let reports = run_suite(0x5eed, 100).unwrap();
    let failed: Vec<_> = reports.iter().filter(|r| !r.passed()).collect();
    assert!(failed.is_empty(), "{failed:?}");
}
