//! Checks that the filter's covariance matches its actual error. Each batch
//! averages the final-step NEES over independent runs and compares it with
//! the 95% chi-square band, so about one batch in twenty falls outside by
//! chance alone.
//!
//! ```text
//! cargo run --release --example nees_consistency
//! ```

use quadnav::harness::Scenario;
use quadnav::validate::nees_monte_carlo;

fn main() -> quadnav::Result<()> {
    let sc = Scenario::default();
    let batches = 10;
    let mut inside = 0;
    let mut total = 0.0;
    for seed in 0..batches {
        let r = nees_monte_carlo(&sc, 200, 500, seed)?;
        inside += r.within_band() as usize;
        total += r.average;
        println!(
            "batch {seed}: average NEES {:.3}, band [{:.3}, {:.3}]",
            r.average, r.lower, r.upper
        );
    }
    println!("{inside} of {batches} batches inside the band");
    println!(
        "mean over all batches {:.3} (state dimension 12)",
        total / batches as f64
    );
    Ok(())
}
