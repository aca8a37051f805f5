//! Compares IMU+UWB against IMU+UWB+YOLO over matched seeds with the UWB
//! blackout active.
//!
//! ```text
//! cargo run --release --example monte_carlo_scenarios
//! ```

use quadnav::harness::{monte_carlo_runs, summarize, Scenario};

fn main() -> quadnav::Result<()> {
    let runs = 20;
    let s1 = Scenario::imu_uwb();
    let s2 = Scenario::imu_uwb_yolo();
    let o1 = monte_carlo_runs(&s1, runs)?;
    let o2 = monte_carlo_runs(&s2, runs)?;
    let r1 = summarize(&s1, &o1)?;
    let r2 = summarize(&s2, &o2)?;
    print!("{}\n{}", r1.to_table(), r2.to_table());

    let wins = o1
        .iter()
        .zip(&o2)
        .filter(|(a, b)| match (&a.blackout, &b.blackout) {
            (Some(a), Some(b)) => b.estimation[0] < a.estimation[0],
            _ => false,
        })
        .count();
    println!(
        "\nmedian path MSE ratio (with camera / without): {:.2}",
        r2.path.median / r1.path.median
    );
    println!("runs where the camera lowers blackout x error: {wins} of {runs}");
    for f in &r1.failed {
        println!(
            "IMU+UWB run {} (seed {}) failed: {}",
            f.run, f.seed, f.reason
        );
    }
    Ok(())
}
