//! Camera position fixes from landmark distances: visibility depends on
//! heading, and a fix needs at least three landmarks in view.
//!
//! ```text
//! cargo run --example yolo_trilateration
//! ```

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use quadnav::harness::Scenario;
use quadnav::model::PlantState;
use quadnav::sensors::sense_yolo;

fn main() {
    let sc = Scenario::default();
    let landmarks = &sc.landmarks;
    println!(
        "{} landmarks, range {} m, half field of view {} rad",
        landmarks.positions().len(),
        landmarks.max_range(),
        landmarks.half_fov()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for yaw in [0.0, 0.8, 1.6, std::f64::consts::PI] {
        let mut truth = PlantState::hover_at(Vector3::new(6.0, 0.5, 1.5));
        truth.attitude.z = yaw;
        let visible = landmarks.visible_from(&truth).len();
        match sense_yolo(&truth, landmarks, sc.noise.yolo_range_std, &mut rng) {
            Some(fix) => println!(
                "yaw {yaw:.2}: {visible:>2} visible, fix error {:.3} m",
                (fix - truth.position).norm()
            ),
            None => println!("yaw {yaw:.2}: {visible:>2} visible, no fix"),
        }
    }
}
