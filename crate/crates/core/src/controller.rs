//! Infinite-horizon LQ-Servo: gain synthesis on the integrator-augmented
//! model and the per-step control law with integral action.

use nalgebra::{Cholesky, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{AugmentedModel, OutagePolicy, AUG_DIM};
use crate::model::{ControlInput, INPUT_DIM, STATE_DIM};
use crate::numerics::{solve_dare, spectral_radius, Matrix, Spd, Vector};
use crate::sensors::MeasurementFrame;

/// Stage weights of the quadratic cost.
#[derive(Debug, Clone, PartialEq)]
pub struct LqWeights {
    pub q_bar: Spd,
    pub r: Spd,
}

/// Diagonal weights grouped by state block; the form used in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagonalWeights {
    pub position: f64,
    pub attitude: f64,
    pub velocity: f64,
    pub angular_rate: f64,
    pub integrator: f64,
    pub thrust: f64,
    pub torque: f64,
}

impl Default for DiagonalWeights {
    fn default() -> Self {
        Self {
            position: 1.0,
            attitude: 1.0,
            velocity: 3.0,
            angular_rate: 0.1,
            integrator: 0.03,
            thrust: 1.0,
            torque: 10.0,
        }
    }
}

impl DiagonalWeights {
    pub fn to_weights(&self) -> Result<LqWeights> {
        let mut q = Vec::with_capacity(AUG_DIM);
        for w in [
            self.position,
            self.attitude,
            self.velocity,
            self.angular_rate,
            self.integrator,
        ] {
            q.extend([w; 3]);
        }
        let r = [self.thrust, self.torque, self.torque, self.torque];
        Ok(LqWeights {
            q_bar: Spd::from_diagonal(&q)?,
            r: Spd::pd(Matrix::from_diagonal(&Vector::from_column_slice(&r)))?,
        })
    }
}

impl Default for LqWeights {
    fn default() -> Self {
        DiagonalWeights::default()
            .to_weights()
            .expect("default weights are valid")
    }
}

/// `L∞ = [L^x̂  L^i]` together with the Riccati solution it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ServoGain {
    /// 4×12
    pub l_xhat: Matrix,
    /// 4×3
    pub l_i: Matrix,
    pub s: Spd,
    pub closed_loop_radius: f64,
}

impl ServoGain {
    pub fn full(&self) -> Matrix {
        let mut l = Matrix::zeros(INPUT_DIM, AUG_DIM);
        l.columns_mut(0, STATE_DIM).copy_from(&self.l_xhat);
        l.columns_mut(STATE_DIM, 3).copy_from(&self.l_i);
        l
    }
}

/// `L = (ΓᵀSΓ + R)⁻¹ΓᵀSΦ` for the stabilizing Riccati solution `S`.
pub fn lq_gain(phi: &Matrix, gamma: &Matrix, q: &Spd, r: &Spd) -> Result<(Matrix, Spd)> {
    let s = solve_dare(phi, gamma, q, r)?;
    let sm = s.matrix();
    let inner = gamma.transpose() * sm * gamma + r.matrix();
    let chol = Cholesky::new(inner).ok_or_else(|| Error::NotPositiveDefinite("ΓᵀSΓ + R".into()))?;
    let l = chol.solve(&(gamma.transpose() * sm * phi));
    Ok((l, s))
}

/// Synthesizes the servo gain on the nominal (UWB-selected) augmented model.
pub fn compute_gain(am: &AugmentedModel, w: &LqWeights) -> Result<ServoGain> {
    let phi_bar = am.nominal_phi_bar();
    let (l, s) = lq_gain(&phi_bar, &am.gamma_bar, &w.q_bar, &w.r)?;
    let closed = &phi_bar - &am.gamma_bar * &l;
    let rho = spectral_radius(&closed)?;
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    Ok(ServoGain {
        l_xhat: l.columns(0, STATE_DIM).into_owned(),
        l_i: l.columns(STATE_DIM, 3).into_owned(),
        s,
        closed_loop_radius: rho,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Symmetric per-axis clamp on the integrator state.
    pub clamp: Option<f64>,
    pub outage: OutagePolicy,
}

/// Accumulated position tracking error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegratorState {
    pub i: Vector3<f64>,
}

impl IntegratorState {
    /// Integrator value that makes the control deviation zero (least squares)
    /// at the estimate `x_hat`, so that switching the loop on does not kick
    /// the plant away from hover.
    pub fn bumpless(g: &ServoGain, x_hat: &Vector) -> Result<Self> {
        let pinv = g
            .l_i
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let i = -(pinv * (&g.l_xhat * x_hat.rows(0, STATE_DIM)));
        Ok(Self {
            i: Vector3::new(i[0], i[1], i[2]),
        })
    }
}

/// `i₊ = i + r − E·y`, then the optional clamp. On steps without a position
/// fix the outage policy decides what replaces `r − E·y`; `predicted` is the
/// position part of the estimate the control law used.
pub fn integral_update(
    state: &IntegratorState,
    r: &Vector3<f64>,
    frame: &MeasurementFrame,
    e: &Matrix,
    cfg: &IntegratorConfig,
    predicted: &Vector3<f64>,
) -> IntegratorState {
    let y = Vector::from_iterator(frame.y.len(), frame.y.iter().copied());
    let ey = e * y;
    let mut next = state.i - Vector3::new(ey[0], ey[1], ey[2]);
    next += cfg.outage.integrator_input(e, r, predicted);
    if let Some(bound) = cfg.clamp {
        next = next.map(|v| v.clamp(-bound, bound));
    }
    IntegratorState { i: next }
}

/// `u = −L^x̂ x̂ − L^i i`, a deviation from hover.
pub fn control_law(g: &ServoGain, x_hat: &Vector, i: &IntegratorState) -> ControlInput {
    let iv = Vector::from_column_slice(i.i.as_slice());
    let u = -(&g.l_xhat * x_hat.rows(0, STATE_DIM)) - &g.l_i * iv;
    ControlInput::from_array([u[0], u[1], u[2], u[3]])
}
