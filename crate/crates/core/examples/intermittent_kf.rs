//! Runs the augmented Kalman filter on the linear model while sensors drop
//! in and out, printing how the position uncertainty reacts.
//!
//! ```text
//! cargo run --example intermittent_kf
//! ```

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quadnav::estimator::{kf_step, AugmentedEstimate, AUG_DIM};
use quadnav::harness::Scenario;
use quadnav::model::ControlInput;
use quadnav::numerics::{GaussianSampler, Spd, Vector};
use quadnav::sensors::{AvailabilityMask, MeasurementFrame, MeasurementVector};

fn main() -> quadnav::Result<()> {
    let sc = Scenario::default();
    let am = sc.design()?;
    let v = GaussianSampler::new(&Spd::from_diagonal(&sc.noise.filter_v)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut est = AugmentedEstimate::new(Vector::zeros(AUG_DIM), Spd::identity(AUG_DIM))?;
    let x = Vector::zeros(12);

    println!(
        "{:>5} {:>5} {:>5} {:>5} {:>12}",
        "step", "uwb", "yolo", "imu", "pos var x"
    );
    for k in 0..400 {
        // no position source between steps 200 and 260
        let outage = (200..260).contains(&k);
        let mask = AvailabilityMask::new(
            !outage && rng.random_bool(0.9),
            !outage && rng.random_bool(0.7),
            true,
        );
        let mut y =
            MeasurementVector::from_iterator((&am.c * &x + v.sample(&mut rng)).iter().copied());
        for (j, on) in mask.as_array().iter().enumerate() {
            if !on {
                y.fixed_rows_mut::<3>(3 * j).fill(0.0);
            }
        }
        let frame = MeasurementFrame { y, mask };
        est = kf_step(
            &est,
            &am,
            &frame,
            &ControlInput::default(),
            &Vector3::zeros(),
        )?;
        if k % 20 == 0 || k == 259 {
            let [u, c, i] = mask.as_array();
            println!(
                "{k:>5} {:>5} {:>5} {:>5} {:>12.5}",
                u as u8,
                c as u8,
                i as u8,
                est.p.matrix()[(0, 0)]
            );
        }
    }
    Ok(())
}
