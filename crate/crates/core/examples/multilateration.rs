//! Recovers a UWB tag position from noisy anchor ranges and reports the
//! error statistics over repeated draws.
//!
//! ```text
//! cargo run --example multilateration
//! ```

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use quadnav::harness::Scenario;
use quadnav::sensors::{multilaterate, uwb_ranges};

fn main() -> quadnav::Result<()> {
    let sc = Scenario::default();
    let anchors = &sc.anchors;
    println!("{} anchors", anchors.positions().len());

    let tag = Vector3::new(7.3, 1.2, 1.5);
    let exact: Vec<f64> = anchors
        .positions()
        .iter()
        .map(|a| (tag - a).norm())
        .collect();
    println!(
        "noise-free fix error {:.2e} m",
        (multilaterate(&exact, anchors)? - tag).norm()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let trials = 5000;
    let mut sq = Vector3::<f64>::zeros();
    for _ in 0..trials {
        let ranges = uwb_ranges(&tag, anchors, sc.noise.uwb_range_std, &mut rng);
        let e = multilaterate(&ranges, anchors)? - tag;
        sq += e.component_mul(&e);
    }
    let var = sq / trials as f64;
    println!(
        "range std {} m -> per-axis variance x {:.4} y {:.4} z {:.4} (mean {:.4})",
        sc.noise.uwb_range_std,
        var.x,
        var.y,
        var.z,
        var.mean()
    );
    Ok(())
}
