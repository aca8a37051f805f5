//! One closed-loop flight along the default trajectory, written to CSV.
//!
//! ```text
//! cargo run --example closed_loop -- flight.csv
//! ```

use std::path::PathBuf;

use quadnav::harness::{export_csv, mse_metrics, simulate_run, Scenario};

fn main() -> quadnav::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("flight.csv"));
    let sc = Scenario::default();
    let log = simulate_run(&sc, sc.seed)?;
    export_csv(&log, &out)?;
    let m = mse_metrics(&log)?;
    println!("{} steps written to {}", log.records.len(), out.display());
    println!(
        "steps without a position fix: {}",
        log.position_outage_steps
    );
    println!(
        "estimation MSE x {:.5} y {:.5} z {:.5}, path MSE {:.5}",
        m.estimation[0], m.estimation[1], m.estimation[2], m.path
    );
    if let Some(f) = &log.failure {
        println!("run ended early at step {}: {}", f.step, f.reason);
    }
    Ok(())
}
