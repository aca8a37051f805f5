//! Kalman filter on the integrator-augmented model with intermittent
//! observations and correlated process/measurement noise.
//!
//! The augmented state is `x̄ = [x; i]` (15 components): the 12 physical
//! states and three integrators of position tracking error,
//!
//! ```text
//! x̄₊ = Φ̄ x̄ + Γ̄ u + Ē [w; v] + Ī r,     Φ̄ = [[Φ, 0], [−E C, I]],  Ē = [[I, 0], [0, −E]]
//! ȳ  = C̄ x̄ + v,                        C̄ = [C 0]
//! ```
//!
//! Because the integrator consumes the same measurement noise `v` that
//! corrupts `ȳ`, the stacked noise `[w; v]` is correlated with `v` through
//! `V₁₂ = [0; V₂]`. The filter is a one-step predictor producing `x̂ₖ₊₁|ₖ`.

use nalgebra::{Cholesky, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ControlInput, DiscreteModel, INPUT_DIM, MEAS_DIM, STATE_DIM};
use crate::numerics::{symmetrize, Matrix, Spd, Vector};
use crate::sensors::{AvailabilityMask, MeasurementFrame};

pub const AUG_DIM: usize = STATE_DIM + 3;
const NOISE_DIM: usize = STATE_DIM + MEAS_DIM;

/// What the integrator does on steps with no position source (`E = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutagePolicy {
    /// `i₊ = i + r`: the reference keeps accumulating.
    #[default]
    Accumulate,
    /// `i₊ = i`: integration is suspended until a position fix returns.
    Hold,
    /// `i₊ = i + r − p̂`: the predicted position stands in for the missing fix.
    Estimate,
}

impl OutagePolicy {
    /// Known input added to the integrator on a step with selection `e`,
    /// on top of `−E·y`. `predicted` is the position part of `x̂ₖ|ₖ₋₁`.
    pub fn integrator_input(
        &self,
        e: &Matrix,
        r: &Vector3<f64>,
        predicted: &Vector3<f64>,
    ) -> Vector3<f64> {
        let outage = e.iter().all(|v| *v == 0.0);
        match self {
            OutagePolicy::Accumulate => *r,
            OutagePolicy::Hold if outage => Vector3::zeros(),
            OutagePolicy::Estimate if outage => r - predicted,
            _ => *r,
        }
    }
}

/// Position-source selection `E` (3×9): UWB rows when UWB is available,
/// otherwise camera rows when the camera is, otherwise zero.
pub fn selection_matrix(mask: &AvailabilityMask) -> Matrix {
    let mut e = Matrix::zeros(3, MEAS_DIM);
    let offset = if mask.uwb {
        Some(0)
    } else if mask.yolo {
        Some(3)
    } else {
        None
    };
    if let Some(o) = offset {
        for i in 0..3 {
            e[(i, o + i)] = 1.0;
        }
    }
    e
}

/// Block matrices of the augmented model. `Φ̄` and `Ē` depend on the
/// per-step selection and are built on demand.
#[derive(Debug, Clone)]
pub struct AugmentedModel {
    pub phi: Matrix,
    pub c: Matrix,
    pub gamma_bar: Matrix,
    pub c_bar: Matrix,
    pub i_bar: Matrix,
    pub v1: Spd,
    pub v12: Matrix,
    pub v2: Spd,
    pub outage: OutagePolicy,
}

impl AugmentedModel {
    pub fn phi_bar(&self, e: &Matrix) -> Matrix {
        let mut m = Matrix::identity(AUG_DIM, AUG_DIM);
        m.view_mut((0, 0), (STATE_DIM, STATE_DIM))
            .copy_from(&self.phi);
        m.view_mut((STATE_DIM, 0), (3, STATE_DIM))
            .copy_from(&(-(e * &self.c)));
        m
    }

    /// `Φ̄` with the full-availability (UWB) selection.
    pub fn nominal_phi_bar(&self) -> Matrix {
        self.phi_bar(&selection_matrix(&AvailabilityMask::ALL))
    }

    pub fn e_bar(&self, e: &Matrix) -> Matrix {
        let mut m = Matrix::zeros(AUG_DIM, NOISE_DIM);
        m.view_mut((0, 0), (STATE_DIM, STATE_DIM))
            .copy_from(&Matrix::identity(STATE_DIM, STATE_DIM));
        m.view_mut((STATE_DIM, STATE_DIM), (3, MEAS_DIM))
            .copy_from(&(-e));
        m
    }

    pub fn with_outage(mut self, outage: OutagePolicy) -> Self {
        self.outage = outage;
        self
    }
}

pub fn build_augmented(dm: &DiscreteModel) -> Result<AugmentedModel> {
    let dims_ok = dm.phi.shape() == (STATE_DIM, STATE_DIM)
        && dm.gamma.shape() == (STATE_DIM, INPUT_DIM)
        && dm.c.shape() == (MEAS_DIM, STATE_DIM)
        && dm.w.dim() == STATE_DIM
        && dm.v.dim() == MEAS_DIM;
    if !dims_ok {
        return Err(Error::DimensionMismatch {
            context: "build_augmented",
            expected: "phi 12x12, gamma 12x4, c 9x12, W 12, V 9".into(),
            got: format!(
                "phi {:?}, gamma {:?}, c {:?}, W {}, V {}",
                dm.phi.shape(),
                dm.gamma.shape(),
                dm.c.shape(),
                dm.w.dim(),
                dm.v.dim()
            ),
        });
    }
    let v2 = Spd::pd(dm.v.matrix().clone())?;

    let mut gamma_bar = Matrix::zeros(AUG_DIM, INPUT_DIM);
    gamma_bar
        .view_mut((0, 0), (STATE_DIM, INPUT_DIM))
        .copy_from(&dm.gamma);

    let mut c_bar = Matrix::zeros(MEAS_DIM, AUG_DIM);
    c_bar
        .view_mut((0, 0), (MEAS_DIM, STATE_DIM))
        .copy_from(&dm.c);

    let mut i_bar = Matrix::zeros(AUG_DIM, 3);
    i_bar
        .view_mut((STATE_DIM, 0), (3, 3))
        .copy_from(&Matrix::identity(3, 3));

    let mut v1 = Matrix::zeros(NOISE_DIM, NOISE_DIM);
    v1.view_mut((0, 0), (STATE_DIM, STATE_DIM))
        .copy_from(dm.w.matrix());
    v1.view_mut((STATE_DIM, STATE_DIM), (MEAS_DIM, MEAS_DIM))
        .copy_from(v2.matrix());

    let mut v12 = Matrix::zeros(NOISE_DIM, MEAS_DIM);
    v12.view_mut((STATE_DIM, 0), (MEAS_DIM, MEAS_DIM))
        .copy_from(v2.matrix());

    Ok(AugmentedModel {
        phi: dm.phi.clone(),
        c: dm.c.clone(),
        gamma_bar,
        c_bar,
        i_bar,
        v1: Spd::psd(v1)?,
        v12,
        v2,
        outage: OutagePolicy::default(),
    })
}

/// Predicted augmented state `x̂ₖ|ₖ₋₁` with its error covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedEstimate {
    pub x_hat: Vector,
    pub p: Spd,
}

impl AugmentedEstimate {
    pub fn new(x_hat: Vector, p: Spd) -> Result<Self> {
        if x_hat.len() != AUG_DIM || p.dim() != AUG_DIM {
            return Err(Error::DimensionMismatch {
                context: "AugmentedEstimate",
                expected: format!("{AUG_DIM}"),
                got: format!("x {}, P {}", x_hat.len(), p.dim()),
            });
        }
        if x_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state estimate"));
        }
        Ok(Self { x_hat, p })
    }

    pub fn physical(&self) -> Vector {
        self.x_hat.rows(0, STATE_DIM).into_owned()
    }

    pub fn integrator(&self) -> Vector3<f64> {
        Vector3::new(
            self.x_hat[STATE_DIM],
            self.x_hat[STATE_DIM + 1],
            self.x_hat[STATE_DIM + 2],
        )
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x_hat[0], self.x_hat[1], self.x_hat[2])
    }

    /// Covariance of the 12 physical states.
    pub fn physical_covariance(&self) -> Matrix {
        self.p
            .matrix()
            .view((0, 0), (STATE_DIM, STATE_DIM))
            .into_owned()
    }
}

/// One filter recursion; also returns the gain `Kₖ` (15×9).
///
/// `u` is the deviation input of the linear model; `r` is the tracking
/// reference, a known input to the integrator rows.
pub fn kf_step_with_gain(
    est: &AugmentedEstimate,
    am: &AugmentedModel,
    frame: &MeasurementFrame,
    u: &ControlInput,
    r: &Vector3<f64>,
) -> Result<(AugmentedEstimate, Matrix)> {
    let e = selection_matrix(&frame.mask);
    let phi_bar = am.phi_bar(&e);
    let e_bar = am.e_bar(&e);
    let h = frame.mask.measurement_matrix(&am.c_bar);
    let p = est.p.matrix();

    let p_ht = p * h.transpose();
    let cross = &phi_bar * &p_ht + &e_bar * &am.v12;
    let innov_cov = symmetrize(&(&h * &p_ht + am.v2.matrix()));
    let chol = Cholesky::new(innov_cov).ok_or(Error::SingularInnovation)?;
    let gain = chol.solve(&cross.transpose()).transpose();

    let p_next = &phi_bar * p * phi_bar.transpose() + &e_bar * am.v1.matrix() * e_bar.transpose()
        - &gain * cross.transpose();

    let y = Vector::from_iterator(MEAS_DIM, frame.y.iter().copied());
    let y_masked = frame.mask.delta() * y;
    let innovation = y_masked - &h * &est.x_hat;
    let u_vec = Vector::from_row_slice(&u.to_array());
    let mut x_next = &phi_bar * &est.x_hat + &am.gamma_bar * u_vec + &gain * innovation;
    let predicted = Vector3::new(est.x_hat[0], est.x_hat[1], est.x_hat[2]);
    let input = am.outage.integrator_input(&e, r, &predicted);
    x_next += &am.i_bar * Vector::from_column_slice(input.as_slice());
    if x_next.iter().chain(p_next.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("filter update"));
    }
    Ok((
        AugmentedEstimate {
            x_hat: x_next,
            p: Spd::from_symmetric_unchecked(p_next),
        },
        gain,
    ))
}

pub fn kf_step(
    est: &AugmentedEstimate,
    am: &AugmentedModel,
    frame: &MeasurementFrame,
    u: &ControlInput,
    r: &Vector3<f64>,
) -> Result<AugmentedEstimate> {
    kf_step_with_gain(est, am, frame, u, r).map(|(e, _)| e)
}

/// Normalized estimation error squared of the physical states.
pub fn nees(truth: &Vector, est: &AugmentedEstimate) -> Result<f64> {
    let err = truth.rows(0, STATE_DIM) - est.physical();
    let chol = Cholesky::new(est.physical_covariance())
        .ok_or_else(|| Error::NotPositiveDefinite("state covariance".into()))?;
    Ok(err.dot(&chol.solve(&err)))
}
