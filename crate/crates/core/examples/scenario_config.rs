//! Prints the default scenario as JSON, the format accepted by
//! `quadnav --config`, and reloads an edited copy.
//!
//! ```text
//! cargo run --example scenario_config > scenario.json
//! ```

use quadnav::harness::{Scenario, SensorSet};

fn main() -> quadnav::Result<()> {
    let sc = Scenario::default();
    println!("{}", sc.to_json());

    // partial documents fill the remaining fields with defaults
    let edited =
        Scenario::from_json(r#"{ "sensor_set": "imu_uwb", "duration": 30.0, "seed": 9 }"#)?;
    assert_eq!(edited.sensor_set, SensorSet::ImuUwb);
    assert_eq!(edited.noise, sc.noise);
    eprintln!("partial config loaded: {} steps", edited.steps());
    Ok(())
}
