//! Compares what the integrator does while no position source is available:
//! keep adding the raw reference, hold still, or integrate the reference
//! minus the filter's predicted position.
//!
//! ```text
//! cargo run --release --example outage_policies
//! ```

use quadnav::estimator::OutagePolicy;
use quadnav::harness::{monte_carlo_runs, summarize, Scenario};

fn main() -> quadnav::Result<()> {
    println!(
        "{:<12} {:<14} {:>7} {:>14}",
        "policy", "sensors", "failed", "median path"
    );
    for outage in [
        OutagePolicy::Accumulate,
        OutagePolicy::Hold,
        OutagePolicy::Estimate,
    ] {
        for base in [Scenario::imu_uwb(), Scenario::imu_uwb_yolo()] {
            let mut sc = base;
            sc.integrator.outage = outage;
            let outcomes = monte_carlo_runs(&sc, 20)?;
            let r = summarize(&sc, &outcomes)?;
            let median = if r.succeeded > 0 {
                format!("{:.4}", r.path.median)
            } else {
                "-".into()
            };
            println!(
                "{:<12} {:<14} {:>4}/20 {:>14}",
                format!("{outage:?}"),
                sc.sensor_set.label(),
                r.failed.len(),
                median
            );
        }
    }
    Ok(())
}
