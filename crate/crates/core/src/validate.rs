//! Invariant suites run against a scenario: Riccati solution quality,
//! closed-loop stability, linearization order, filter consistency and
//! reproducibility.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::estimator::{kf_step, nees, AugmentedEstimate, AUG_DIM};
use crate::harness::{rk4_step, simulate_run, Scenario};
use crate::model::{hover_input, ControlInput, PlantState, StateVector, STATE_DIM};
use crate::numerics::{dare_residual, norm_inf, solve_dare, GaussianSampler, Matrix, Spd, Vector};
use crate::sensors::{AvailabilityMask, MeasurementFrame, MeasurementVector};
use crate::{Error, Result};

/// Outcome of one invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Average NEES over independent runs and its two-sided 95% band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeesResult {
    pub average: f64,
    pub lower: f64,
    pub upper: f64,
}

impl NeesResult {
    pub fn within_band(&self) -> bool {
        (self.lower..=self.upper).contains(&self.average)
    }
}

/// Final-step NEES of the physical states averaged over `runs` simulations of
/// the linear design model with matched noise and every sensor available.
pub fn nees_monte_carlo(sc: &Scenario, runs: usize, steps: usize, seed: u64) -> Result<NeesResult> {
    if runs == 0 || steps == 0 {
        return Err(Error::InvalidArgument(
            "NEES test needs at least one run and one step".into(),
        ));
    }
    let am = sc.design()?;
    let w = GaussianSampler::new(&Spd::from_diagonal(&sc.noise.filter_w)?)?;
    let v = GaussianSampler::new(&Spd::from_diagonal(&sc.noise.filter_v)?)?;
    let p0 = Spd::from_diagonal(&sc.noise.initial_covariance)?;
    let x0 = GaussianSampler::new(&p0)?;
    let mut p_init = Matrix::zeros(AUG_DIM, AUG_DIM);
    p_init
        .view_mut((0, 0), (STATE_DIM, STATE_DIM))
        .copy_from(p0.matrix());
    let p_init = Spd::psd(p_init)?;

    let finals: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|run| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(run as u64);
            let mut x = x0.sample(&mut rng);
            let mut integ = Vector3::zeros();
            let mut est = AugmentedEstimate::new(Vector::zeros(AUG_DIM), p_init.clone())?;
            let r = Vector3::zeros();
            let u = ControlInput::default();
            let mut last = 0.0;
            for _ in 0..steps {
                let y = &am.c * &x + v.sample(&mut rng);
                let frame = MeasurementFrame {
                    y: MeasurementVector::from_iterator(y.iter().copied()),
                    mask: AvailabilityMask::ALL,
                };
                est = kf_step(&est, &am, &frame, &u, &r)?;
                integ -= Vector3::new(y[0], y[1], y[2]);
                x = &am.phi * &x + w.sample(&mut rng);
                let mut truth = Vector::zeros(AUG_DIM);
                truth.rows_mut(0, STATE_DIM).copy_from(&x);
                truth.rows_mut(STATE_DIM, 3).copy_from(&integ);
                last = nees(&truth, &est)?;
            }
            Ok(last)
        })
        .collect::<Result<_>>()?;

    let chi = ChiSquared::new((STATE_DIM * runs) as f64)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let n = runs as f64;
    Ok(NeesResult {
        average: finals.iter().sum::<f64>() / n,
        lower: chi.inverse_cdf(0.025) / n,
        upper: chi.inverse_cdf(0.975) / n,
    })
}

/// One-step gap between the nonlinear plant and the discrete linear model
/// from hover with roll and pitch both set to `eps`.
pub fn linearization_gap(sc: &Scenario, eps: f64) -> Result<f64> {
    let am = sc.design()?;
    let p = &sc.params;
    let mut s = PlantState::hover_at(Vector3::zeros());
    s.attitude = Vector3::new(eps, eps, 0.0);
    let x0 = s.to_vector();
    let lin = &am.phi * Vector::from_iterator(STATE_DIM, x0.iter().copied());
    let next = rk4_step(&s, &hover_input(p), p, p.period).to_vector();
    Ok((next - StateVector::from_iterator(lin.iter().copied())).norm())
}

/// Runs every invariant suite on `sc`.
pub fn run_checks(sc: &Scenario) -> Result<Vec<Check>> {
    sc.validate()?;
    let mut checks = Vec::new();

    let am = sc.design()?;
    let w = sc.weights.to_weights()?;
    let phi_bar = am.nominal_phi_bar();
    let s = solve_dare(&phi_bar, &am.gamma_bar, &w.q_bar, &w.r)?;
    let res = dare_residual(&phi_bar, &am.gamma_bar, &w.q_bar, &w.r, s.matrix())?;
    let rel = res / (1.0 + norm_inf(s.matrix()));
    checks.push(Check {
        name: "riccati residual",
        pass: rel < 1e-9,
        detail: format!("{res:.3e} absolute, {rel:.3e} relative to 1+‖S‖∞"),
    });

    let (_, gain) = sc.gain()?;
    checks.push(Check {
        name: "closed-loop stability",
        pass: gain.closed_loop_radius < 1.0,
        detail: format!("spectral radius {:.6}", gain.closed_loop_radius),
    });

    let ratio = linearization_gap(sc, 0.1)? / linearization_gap(sc, 0.05)?;
    checks.push(Check {
        name: "linearization order",
        pass: ratio >= 3.5,
        detail: format!("gap ratio {ratio:.3} when halving the angle"),
    });

    let nees = nees_monte_carlo(sc, 100, 300, sc.seed)?;
    checks.push(Check {
        name: "filter consistency",
        pass: nees.within_band(),
        detail: format!(
            "average NEES {:.3}, 95% band [{:.3}, {:.3}]",
            nees.average, nees.lower, nees.upper
        ),
    });

    let short = Scenario {
        duration: sc.duration.min(5.0),
        ..sc.clone()
    };
    let same = simulate_run(&short, sc.seed)? == simulate_run(&short, sc.seed)?;
    checks.push(Check {
        name: "reproducibility",
        pass: same,
        detail: format!(
            "two runs with seed {} {}",
            sc.seed,
            if same { "match" } else { "differ" }
        ),
    });

    Ok(checks)
}
