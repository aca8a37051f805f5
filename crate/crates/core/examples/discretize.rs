//! Linearizes the quadrotor about hover and discretizes it with a
//! zero-order hold, then checks the result against a matrix exponential.
//!
//! ```text
//! cargo run --example discretize
//! ```

use quadnav::model::{build_discrete_model, continuous_linear_matrices, QuadrotorParams};
use quadnav::numerics::{discretize_zoh, Matrix, Spd};

fn main() -> quadnav::Result<()> {
    let p = QuadrotorParams::default();
    let (a, b) = continuous_linear_matrices(&p);
    let (phi, gamma) = discretize_zoh(&a, &b, p.period)?;

    println!("mass {} kg, period {} s", p.mass, p.period);
    println!(
        "x <- θ   {:.6e}  (g·h²/2 = {:.6e})",
        phi[(0, 4)],
        p.gravity * p.period.powi(2) / 2.0
    );
    println!(
        "ẋ <- θ   {:.6e}  (g·h   = {:.6e})",
        phi[(6, 4)],
        p.gravity * p.period
    );
    println!(
        "ż <- f_T {:.6e}  (h/m   = {:.6e})",
        gamma[(8, 0)],
        p.period / p.mass
    );

    // same blocks from the exponential of [[A, B], [0, 0]]·h
    let n = a.nrows();
    let m = b.ncols();
    let mut blk = Matrix::zeros(n + m, n + m);
    blk.view_mut((0, 0), (n, n)).copy_from(&(&a * p.period));
    blk.view_mut((0, n), (n, m)).copy_from(&(&b * p.period));
    let e = blk.exp();
    let err = (&phi - e.view((0, 0), (n, n)))
        .amax()
        .max((&gamma - e.view((0, n), (n, m))).amax());
    println!("largest deviation from the exponential oracle: {err:.2e}");

    let dm = build_discrete_model(&p, Spd::identity(12), Spd::identity(9))?;
    println!("measurement matrix C is {}x{}", dm.c.nrows(), dm.c.ncols());
    Ok(())
}
