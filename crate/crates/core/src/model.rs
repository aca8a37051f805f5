//! Quadrotor rigid-body dynamics and the linear design model.
//!
//! State ordering throughout the crate is
//! `[x y z φ θ ψ ẋ ẏ ż φ̇ θ̇ ψ̇]`, positions in the East-North-Up world frame,
//! Euler angles roll/pitch/yaw. The control vector is `[f_T τx τy τz]`.

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{discretize_zoh, Matrix, Spd};

pub const STATE_DIM: usize = 12;
pub const INPUT_DIM: usize = 4;
pub const MEAS_DIM: usize = 9;

pub type StateVector = SVector<f64, STATE_DIM>;

/// Index of the first position, attitude, velocity and rate components.
pub const POS: usize = 0;
pub const ATT: usize = 3;
pub const VEL: usize = 6;
pub const RATE: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadrotorParams {
    /// kg
    pub mass: f64,
    /// m/s²
    pub gravity: f64,
    /// Moments of inertia, kg·m².
    pub ix: f64,
    pub iy: f64,
    pub iz: f64,
    /// Control period, s.
    pub period: f64,
    /// Upper thrust limit as a multiple of hover thrust `m·g`.
    pub thrust_limit_factor: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 2.5,
            gravity: 9.81,
            ix: 0.045,
            iy: 0.045,
            iz: 0.09,
            period: 0.01,
            thrust_limit_factor: 2.0,
        }
    }
}

impl QuadrotorParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("ix", self.ix),
            ("iy", self.iy),
            ("iz", self.iz),
            ("period", self.period),
            ("thrust_limit_factor", self.thrust_limit_factor),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn max_thrust(&self) -> f64 {
        self.thrust_limit_factor * self.hover_thrust()
    }
}

/// True vehicle state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub position: Vector3<f64>,
    /// Roll, pitch, yaw in radians.
    pub attitude: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub angular_rate: Vector3<f64>,
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

impl PlantState {
    pub fn hover_at(position: Vector3<f64>) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut v = StateVector::zeros();
        v.fixed_rows_mut::<3>(POS).copy_from(&self.position);
        v.fixed_rows_mut::<3>(ATT).copy_from(&self.attitude);
        v.fixed_rows_mut::<3>(VEL).copy_from(&self.velocity);
        v.fixed_rows_mut::<3>(RATE).copy_from(&self.angular_rate);
        v
    }

    /// Builds a state from a 12-vector, wrapping the attitude angles.
    pub fn from_vector(v: &StateVector) -> Self {
        Self {
            position: v.fixed_rows::<3>(POS).into_owned(),
            attitude: v.fixed_rows::<3>(ATT).map(wrap_angle),
            velocity: v.fixed_rows::<3>(VEL).into_owned(),
            angular_rate: v.fixed_rows::<3>(RATE).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Total thrust and body torques.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    /// N
    pub thrust: f64,
    /// N·m
    pub torque: Vector3<f64>,
}

impl ControlInput {
    pub fn new(thrust: f64, torque: Vector3<f64>) -> Self {
        Self { thrust, torque }
    }

    pub fn to_array(&self) -> [f64; INPUT_DIM] {
        [self.thrust, self.torque.x, self.torque.y, self.torque.z]
    }

    pub fn from_array(u: [f64; INPUT_DIM]) -> Self {
        Self::new(u[0], Vector3::new(u[1], u[2], u[3]))
    }

    /// Thrust clamped to `[0, max_thrust]`.
    pub fn clamped(self, max_thrust: f64) -> Self {
        Self {
            thrust: self.thrust.clamp(0.0, max_thrust),
            ..self
        }
    }

    /// Converts a linear-model (deviation) input into the absolute input the
    /// plant receives: hover thrust added, thrust clamped.
    pub fn from_deviation(deviation: &ControlInput, p: &QuadrotorParams) -> Self {
        Self::new(deviation.thrust + p.hover_thrust(), deviation.torque).clamped(p.max_thrust())
    }
}

/// Constant input that holds the vehicle at a level hover.
pub fn hover_input(p: &QuadrotorParams) -> ControlInput {
    ControlInput::new(p.hover_thrust(), Vector3::zeros())
}

/// Newton-Euler equations of motion.
pub fn nonlinear_derivative(s: &PlantState, u: &ControlInput, p: &QuadrotorParams) -> StateVector {
    let (sphi, cphi) = s.attitude.x.sin_cos();
    let (sth, cth) = s.attitude.y.sin_cos();
    let (spsi, cpsi) = s.attitude.z.sin_cos();
    let [dphi, dth, dpsi] = [s.angular_rate.x, s.angular_rate.y, s.angular_rate.z];
    let accel = u.thrust / p.mass;

    let mut d = StateVector::zeros();
    d.fixed_rows_mut::<3>(POS).copy_from(&s.velocity);
    d.fixed_rows_mut::<3>(ATT).copy_from(&s.angular_rate);
    d[VEL] = accel * (cphi * sth * cpsi + spsi * sphi);
    d[VEL + 1] = accel * (cphi * sth * spsi - cpsi * sphi);
    d[VEL + 2] = accel * (cphi * cth) - p.gravity;
    d[RATE] = (p.iy - p.iz) / p.ix * dth * dpsi + u.torque.x / p.ix;
    d[RATE + 1] = (p.iz - p.ix) / p.iy * dphi * dpsi + u.torque.y / p.iy;
    d[RATE + 2] = (p.ix - p.iy) / p.iz * dphi * dth + u.torque.z / p.iz;
    d
}

/// Small-angle linearization about hover. The thrust column acts on the
/// deviation from hover thrust.
pub fn continuous_linear_matrices(p: &QuadrotorParams) -> (Matrix, Matrix) {
    let mut a = Matrix::zeros(STATE_DIM, STATE_DIM);
    for i in 0..3 {
        a[(POS + i, VEL + i)] = 1.0;
        a[(ATT + i, RATE + i)] = 1.0;
    }
    a[(VEL, ATT + 1)] = p.gravity;
    a[(VEL + 1, ATT)] = -p.gravity;

    let mut b = Matrix::zeros(STATE_DIM, INPUT_DIM);
    b[(VEL + 2, 0)] = 1.0 / p.mass;
    b[(RATE, 1)] = 1.0 / p.ix;
    b[(RATE + 1, 2)] = 1.0 / p.iy;
    b[(RATE + 2, 3)] = 1.0 / p.iz;
    (a, b)
}

/// Measurement matrix for `y = [UWB xyz, YOLO xyz, IMU φθψ]`.
pub fn measurement_matrix() -> Matrix {
    let mut c = Matrix::zeros(MEAS_DIM, STATE_DIM);
    for i in 0..3 {
        c[(i, POS + i)] = 1.0;
        c[(3 + i, POS + i)] = 1.0;
        c[(6 + i, ATT + i)] = 1.0;
    }
    c
}

/// Discrete design model `x₊ = Φx + Γu + w`, `y = Cx + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub phi: Matrix,
    pub gamma: Matrix,
    pub c: Matrix,
    /// Process noise covariance (12×12).
    pub w: Spd,
    /// Measurement noise covariance (9×9).
    pub v: Spd,
    pub h: f64,
}

pub fn build_discrete_model(p: &QuadrotorParams, w: Spd, v: Spd) -> Result<DiscreteModel> {
    p.validate()?;
    if w.dim() != STATE_DIM || v.dim() != MEAS_DIM {
        return Err(Error::DimensionMismatch {
            context: "build_discrete_model",
            expected: format!("W {STATE_DIM}x{STATE_DIM}, V {MEAS_DIM}x{MEAS_DIM}"),
            got: format!("W {0}x{0}, V {1}x{1}", w.dim(), v.dim()),
        });
    }
    let (a, b) = continuous_linear_matrices(p);
    let (phi, gamma) = discretize_zoh(&a, &b, p.period)?;
    Ok(DiscreteModel {
        phi,
        gamma,
        c: measurement_matrix(),
        w,
        v,
        h: p.period,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> QuadrotorParams {
        QuadrotorParams::default()
    }

    #[test]
    fn hover_is_equilibrium() {
        let p = params();
        let s = PlantState::hover_at(Vector3::new(3.0, -1.0, 2.0));
        let d = nonlinear_derivative(&s, &hover_input(&p), &p);
        assert!(d.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn free_fall_and_double_thrust() {
        let p = params();
        let s = PlantState::default();
        let d = nonlinear_derivative(&s, &ControlInput::default(), &p);
        assert_eq!(d[VEL + 2], -p.gravity);
        assert!(d.iter().enumerate().all(|(i, v)| i == VEL + 2 || *v == 0.0));

        let u = ControlInput::new(2.0 * p.hover_thrust(), Vector3::zeros());
        let d = nonlinear_derivative(&s, &u, &p);
        assert_relative_eq!(d[VEL + 2], p.gravity, epsilon = 1e-12);
    }

    #[test]
    fn roll_flip_mirrors_y_acceleration() {
        let p = params();
        let u = ControlInput::new(p.hover_thrust(), Vector3::new(0.01, 0.0, 0.0));
        let mut s = PlantState {
            attitude: Vector3::new(0.2, 0.1, 0.0),
            ..PlantState::default()
        };
        let a = nonlinear_derivative(&s, &u, &p)[VEL + 1];
        s.attitude.x = -0.2;
        let b = nonlinear_derivative(&s, &u, &p)[VEL + 1];
        assert_eq!(a, -b);
    }

    #[test]
    fn hover_input_value() {
        let u = hover_input(&params());
        assert_relative_eq!(u.thrust, 24.525, epsilon = 1e-12);
        assert_eq!(u.torque, Vector3::zeros());
    }

    #[test]
    fn linear_a_sparsity() {
        let p = params();
        let (a, b) = continuous_linear_matrices(&p);
        assert_eq!(a.iter().filter(|v| **v != 0.0).count(), 8);
        assert_eq!(a[(VEL, ATT + 1)], p.gravity);
        assert_eq!(a[(VEL + 1, ATT)], -p.gravity);
        assert_eq!(b.iter().filter(|v| **v != 0.0).count(), 4);
        assert_eq!(b[(VEL + 2, 0)], 1.0 / p.mass);
        assert_eq!(b[(RATE + 2, 3)], 1.0 / p.iz);
    }

    #[test]
    fn doubling_mass_halves_thrust_entry() {
        let p = params();
        let heavy = QuadrotorParams {
            mass: 2.0 * p.mass,
            ..p
        };
        let (a1, b1) = continuous_linear_matrices(&p);
        let (a2, b2) = continuous_linear_matrices(&heavy);
        assert_eq!(a1, a2);
        assert_relative_eq!(b2[(VEL + 2, 0)], b1[(VEL + 2, 0)] / 2.0);
        let mut diff = b1.clone() - &b2;
        diff[(VEL + 2, 0)] = 0.0;
        assert_eq!(diff.amax(), 0.0);
    }

    #[test]
    fn a_is_nilpotent_index_four() {
        // θ̇ → θ → ẋ → x is the longest chain
        let (a, _) = continuous_linear_matrices(&params());
        let a3 = &a * &a * &a;
        assert!(a3.amax() > 0.0);
        assert_eq!((&a3 * &a).amax(), 0.0);
    }

    #[test]
    fn discrete_model_structure() {
        let p = params();
        let dm = build_discrete_model(&p, Spd::identity(12), Spd::identity(9)).unwrap();
        let h = p.period;
        for i in 0..3 {
            assert_relative_eq!(dm.phi[(POS + i, VEL + i)], h, epsilon = 1e-15);
            assert_relative_eq!(dm.phi[(ATT + i, RATE + i)], h, epsilon = 1e-15);
        }
        assert_relative_eq!(
            dm.phi[(POS, ATT + 1)],
            p.gravity * h * h / 2.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            dm.phi[(POS, RATE + 1)],
            p.gravity * h.powi(3) / 6.0,
            max_relative = 1e-12
        );
        assert_eq!(dm.c.row(0), dm.c.row(3));
        for r in 0..MEAS_DIM {
            assert_eq!(dm.c.row(r).iter().filter(|v| **v == 1.0).count(), 1);
            assert_eq!(dm.c.row(r).iter().filter(|v| **v != 0.0).count(), 1);
        }
    }

    #[test]
    fn phi_equals_truncated_series() {
        let p = params();
        let (a, _) = continuous_linear_matrices(&p);
        let dm = build_discrete_model(&p, Spd::identity(12), Spd::identity(9)).unwrap();
        let ah = &a * p.period;
        let ah2 = &ah * &ah;
        let series = Matrix::identity(12, 12) + &ah + &ah2 / 2.0 + &ah2 * &ah / 6.0;
        assert!((dm.phi - series).amax() < 1e-15);
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert_relative_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(0.3), 0.3);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = QuadrotorParams {
            mass: 0.0,
            ..params()
        };
        assert!(build_discrete_model(&p, Spd::identity(12), Spd::identity(9)).is_err());
    }
}
