//! Synthesizes the LQ-servo gain on the integrator-augmented model and shows
//! how the control weight trades gain magnitude against closed-loop speed.
//!
//! ```text
//! cargo run --example dare_gain
//! ```

use quadnav::controller::{compute_gain, DiagonalWeights};
use quadnav::harness::Scenario;
use quadnav::numerics::{dare_residual, norm_inf, spectral_radius};

fn main() -> quadnav::Result<()> {
    let sc = Scenario::default();
    let am = sc.design()?;
    let open = spectral_radius(&am.nominal_phi_bar())?;
    println!("open-loop spectral radius {open:.6}");
    println!(
        "{:>12} {:>12} {:>14} {:>12}",
        "R scale", "max |L|", "residual/‖S‖", "radius"
    );
    for scale in [0.1, 1.0, 10.0, 100.0] {
        let base = DiagonalWeights::default();
        let w = DiagonalWeights {
            thrust: base.thrust * scale,
            torque: base.torque * scale,
            ..base
        };
        let lq = w.to_weights()?;
        let gain = compute_gain(&am, &lq)?;
        let res = dare_residual(
            &am.nominal_phi_bar(),
            &am.gamma_bar,
            &lq.q_bar,
            &lq.r,
            gain.s.matrix(),
        )?;
        println!(
            "{scale:>12} {:>12.4} {:>14.2e} {:>12.6}",
            gain.full().amax(),
            res / (1.0 + norm_inf(gain.s.matrix())),
            gain.closed_loop_radius
        );
    }
    Ok(())
}
