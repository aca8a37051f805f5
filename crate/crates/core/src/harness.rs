//! Closed-loop simulation: reference trajectory, truth propagation, the
//! per-step sense/estimate/control loop, error metrics and the Monte Carlo
//! protocol.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{
    compute_gain, control_law, integral_update, DiagonalWeights, IntegratorConfig, IntegratorState,
    ServoGain,
};
use crate::error::{Error, Result};
use crate::estimator::{
    build_augmented, kf_step, selection_matrix, AugmentedEstimate, AugmentedModel, OutagePolicy,
    AUG_DIM,
};
use crate::model::{
    build_discrete_model, nonlinear_derivative, ControlInput, PlantState, QuadrotorParams,
    StateVector, STATE_DIM,
};
use crate::numerics::{GaussianSampler, Matrix, Spd, Vector};
use crate::sensors::{
    assemble_frame, availability_step, multilaterate, sense_imu, sense_yolo, uwb_ranges, AnchorSet,
    AvailabilityMask, DropoutConfig, LandmarkSet,
};

/// Piecewise-linear horizontal path flown at constant speed and altitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    /// `(x, y)` waypoints in metres.
    pub waypoints: Vec<[f64; 2]>,
    /// Ground speed, m/s.
    pub speed: f64,
    /// Constant altitude, m.
    pub altitude: f64,
}

impl Default for TrajectoryConfig {
    /// A gentle S-curve from x = 0 to x = 20 m with |y| ≤ 2.5 m.
    fn default() -> Self {
        let waypoints = (0..=20)
            .map(|i| {
                let x = i as f64;
                [x, 2.5 * (std::f64::consts::TAU * x / 20.0).sin()]
            })
            .collect();
        Self {
            waypoints,
            speed: 0.35,
            altitude: 1.5,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::Config(
                "trajectory needs at least 2 waypoints".into(),
            ));
        }
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(Error::Config(format!(
                "speed must be positive, got {}",
                self.speed
            )));
        }
        if !self.altitude.is_finite() || self.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory"));
        }
        Ok(())
    }

    pub fn start(&self) -> Vector3<f64> {
        let [x, y] = self.waypoints[0];
        Vector3::new(x, y, self.altitude)
    }

    pub fn path_length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .sum()
    }
}

/// Reference position at time `t`; times outside the path are clamped to its
/// endpoints.
pub fn generate_trajectory(traj: &TrajectoryConfig, t: f64) -> Vector3<f64> {
    let mut remaining = (t.max(0.0) * traj.speed).max(0.0);
    for w in traj.waypoints.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        if remaining <= len && len > 0.0 {
            let f = remaining / len;
            return Vector3::new(
                a[0] + f * (b[0] - a[0]),
                a[1] + f * (b[1] - a[1]),
                traj.altitude,
            );
        }
        remaining -= len;
    }
    let [x, y] = *traj.waypoints.last().expect("validated non-empty");
    Vector3::new(x, y, traj.altitude)
}

/// One classical Runge-Kutta step of the nonlinear equations of motion.
pub fn rk4_step(s: &PlantState, u: &ControlInput, p: &QuadrotorParams, h: f64) -> PlantState {
    let x0 = s.to_vector();
    let f = |x: &StateVector| {
        // no angle wrapping inside the stages
        let st = PlantState {
            position: x.fixed_rows::<3>(0).into_owned(),
            attitude: x.fixed_rows::<3>(3).into_owned(),
            velocity: x.fixed_rows::<3>(6).into_owned(),
            angular_rate: x.fixed_rows::<3>(9).into_owned(),
        };
        nonlinear_derivative(&st, u, p)
    };
    let k1 = f(&x0);
    let k2 = f(&(x0 + k1 * (h / 2.0)));
    let k3 = f(&(x0 + k2 * (h / 2.0)));
    let k4 = f(&(x0 + k3 * h));
    PlantState::from_vector(&(x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorSet {
    ImuUwb,
    ImuUwbYolo,
}

impl SensorSet {
    pub fn label(&self) -> &'static str {
        match self {
            SensorSet::ImuUwb => "IMU+UWB",
            SensorSet::ImuUwbYolo => "IMU+UWB+YOLO",
        }
    }
}

/// Filter covariances and the noise actually injected into the simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Diagonal of the filter's process noise covariance `W` (12).
    pub filter_w: Vec<f64>,
    /// Diagonal of the filter's measurement noise covariance `V` (9).
    pub filter_v: Vec<f64>,
    /// Diagonal of the per-step process noise added to the truth (12).
    pub process: Vec<f64>,
    /// Standard deviation of each UWB range, m.
    pub uwb_range_std: f64,
    /// Standard deviation of each camera-landmark distance, m.
    pub yolo_range_std: f64,
    /// Variance of each IMU Euler angle, rad².
    pub imu_var: f64,
    /// Diagonal of the initial estimate covariance of the physical states (12).
    pub initial_covariance: Vec<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let mut process = vec![0.0; 6];
        process.extend([1e-6; 6]);
        Self {
            filter_w: vec![1.0; STATE_DIM],
            filter_v: vec![0.05, 0.05, 0.05, 0.08, 0.08, 0.08, 0.01, 0.01, 0.01],
            process,
            uwb_range_std: 0.27,
            yolo_range_std: 0.19,
            imu_var: 0.01,
            initial_covariance: vec![0.01; STATE_DIM],
        }
    }
}

impl NoiseConfig {
    /// All injected noise switched off; filter covariances kept.
    pub fn noiseless(&self) -> Self {
        Self {
            process: vec![0.0; STATE_DIM],
            uwb_range_std: 0.0,
            yolo_range_std: 0.0,
            imu_var: 0.0,
            ..self.clone()
        }
    }
}

fn default_anchors() -> AnchorSet {
    let mut v = Vec::new();
    for x in [-1.0, 21.0] {
        for y in [-4.5, 4.5] {
            for z in [0.0, 4.0] {
                v.push(Vector3::new(x, y, z));
            }
        }
    }
    for x in [3.0, 10.0, 17.0] {
        v.push(Vector3::new(x, -2.0, 4.0));
        v.push(Vector3::new(x, 2.0, 0.0));
    }
    AnchorSet::new(v).expect("default anchors are valid")
}

fn default_landmarks() -> LandmarkSet {
    // objects scattered ahead of and beside the path at varied heights
    let v = (0..24)
        .map(|i| {
            let x = 1.5 + 1.0 * i as f64;
            let y = 3.8 * (1.7 * i as f64 + 0.4).sin();
            let z = 1.4 + 1.1 * (2.3 * i as f64 + 1.0).sin();
            Vector3::new(x, y, z)
        })
        .collect();
    LandmarkSet::new(v, 12.0, 1.0).expect("default landmarks are valid")
}

/// Everything that defines a simulation run. Serialized as the scenario
/// config file; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub params: QuadrotorParams,
    pub weights: DiagonalWeights,
    pub integrator: IntegratorConfig,
    pub anchors: AnchorSet,
    pub landmarks: LandmarkSet,
    pub dropout: DropoutConfig,
    pub noise: NoiseConfig,
    pub trajectory: TrajectoryConfig,
    /// Simulated time, s.
    pub duration: f64,
    pub seed: u64,
    pub sensor_set: SensorSet,
    /// Truth position offset from the first reference point at t = 0.
    pub initial_offset: [f64; 3],
    /// A run is marked failed once `‖position‖` exceeds this bound, m.
    pub divergence_bound: f64,
    /// RK4 steps per control period.
    pub substeps: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            params: QuadrotorParams::default(),
            weights: DiagonalWeights::default(),
            integrator: IntegratorConfig {
                clamp: None,
                outage: OutagePolicy::Estimate,
            },
            anchors: default_anchors(),
            landmarks: default_landmarks(),
            dropout: DropoutConfig {
                uwb_blackout: Some((4.0, 6.0)),
                ..DropoutConfig::default()
            },
            noise: NoiseConfig::default(),
            trajectory: TrajectoryConfig::default(),
            duration: 60.0,
            seed: 1,
            sensor_set: SensorSet::ImuUwbYolo,
            initial_offset: [0.0; 3],
            divergence_bound: 1000.0,
            substeps: 1,
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.dropout.validate()?;
        self.trajectory.validate()?;
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::Config(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be at least 1".into()));
        }
        let n = &self.noise;
        for (name, v, len) in [
            ("filter_w", &n.filter_w, STATE_DIM),
            ("filter_v", &n.filter_v, 9),
            ("process", &n.process, STATE_DIM),
            ("initial_covariance", &n.initial_covariance, STATE_DIM),
        ] {
            if v.len() != len {
                return Err(Error::Config(format!(
                    "{name} needs {len} entries, got {}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Config(format!(
                    "{name} entries must be non-negative"
                )));
            }
        }
        if n.filter_v.iter().any(|v| *v <= 0.0) {
            return Err(Error::Config("filter_v must be positive definite".into()));
        }
        for (name, v) in [
            ("uwb_range_std", n.uwb_range_std),
            ("yolo_range_std", n.yolo_range_std),
            ("imu_var", n.imu_var),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }

    /// Number of control periods simulated.
    pub fn steps(&self) -> usize {
        (self.duration / self.params.period).round() as usize
    }

    /// Scenario 1 of the evaluation: IMU and UWB only.
    pub fn imu_uwb() -> Self {
        Self {
            sensor_set: SensorSet::ImuUwb,
            ..Self::default()
        }
    }

    /// Scenario 2 of the evaluation: IMU, UWB and camera.
    pub fn imu_uwb_yolo() -> Self {
        Self::default()
    }

    pub fn with_sensor_set(mut self, set: SensorSet) -> Self {
        self.sensor_set = set;
        self
    }

    /// Filter design model and its augmented form, with the outage policy of
    /// the integrator applied.
    pub fn design(&self) -> Result<AugmentedModel> {
        let w = Spd::from_diagonal(&self.noise.filter_w)?;
        let v = Spd::pd(Matrix::from_diagonal(&Vector::from_column_slice(
            &self.noise.filter_v,
        )))?;
        let dm = build_discrete_model(&self.params, w, v)?;
        Ok(build_augmented(&dm)?.with_outage(self.integrator.outage))
    }

    pub fn gain(&self) -> Result<(AugmentedModel, ServoGain)> {
        let am = self.design()?;
        let gain = compute_gain(&am, &self.weights.to_weights()?)?;
        Ok((am, gain))
    }
}

/// One control period of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub truth: PlantState,
    /// Physical part of `x̂ₖ|ₖ₋₁`.
    pub estimate: StateVector,
    pub reference: Vector3<f64>,
    /// Input applied to the plant (absolute thrust, after clamping).
    pub control: ControlInput,
    pub mask: AvailabilityMask,
    pub integrator: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub records: Vec<StepRecord>,
    /// Steps with no position source (integrator fed by the reference alone
    /// or held, depending on the outage policy).
    pub position_outage_steps: usize,
    pub failure: Option<RunFailure>,
}

impl RunLog {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Derives the seed of run `index` from a scenario seed.
pub fn run_seed(scenario_seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario_seed);
    rng.set_stream(index as u64 + 1);
    rng.random()
}

/// Independent random streams of one run, so that sensor subsets with the
/// same seed see identical noise on shared channels.
struct Streams {
    availability: ChaCha8Rng,
    uwb: ChaCha8Rng,
    yolo: ChaCha8Rng,
    imu: ChaCha8Rng,
    process: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(id);
            r
        };
        Self {
            availability: stream(0),
            uwb: stream(1),
            yolo: stream(2),
            imu: stream(3),
            process: stream(4),
        }
    }
}

/// Runs one closed-loop simulation.
///
/// Per step: reference, availability, sensor readings, frame assembly,
/// control from the predicted estimate, filter update, integrator update and
/// truth propagation. Divergence ends the run early and is reported in
/// [`RunLog::failure`].
pub fn simulate_run(sc: &Scenario, seed: u64) -> Result<RunLog> {
    sc.validate()?;
    let (am, gain) = sc.gain()?;
    let p = &sc.params;
    let h = p.period;
    let mut rng = Streams::new(seed);

    let process = GaussianSampler::new(&Spd::from_diagonal(&sc.noise.process)?)?;
    let landmarks = match sc.sensor_set {
        SensorSet::ImuUwbYolo => Some(&sc.landmarks),
        SensorSet::ImuUwb => None,
    };

    let start = sc.trajectory.start();
    let mut truth = PlantState::hover_at(start + Vector3::from(sc.initial_offset));
    let mut x0 = Vector::zeros(AUG_DIM);
    x0.rows_mut(0, 3).copy_from(&start);
    let mut p0 = Matrix::zeros(AUG_DIM, AUG_DIM);
    for (i, v) in sc.noise.initial_covariance.iter().enumerate() {
        p0[(i, i)] = *v;
    }
    let mut integ = IntegratorState::bumpless(&gain, &x0)?;
    x0.rows_mut(STATE_DIM, 3).copy_from(&integ.i);
    let mut est = AugmentedEstimate::new(x0, Spd::psd(p0)?)?;

    let steps = sc.steps();
    let mut log = RunLog {
        records: Vec::with_capacity(steps),
        ..RunLog::default()
    };

    for k in 0..steps {
        let t = k as f64 * h;
        let r = generate_trajectory(&sc.trajectory, t);

        let mut mask = availability_step(&sc.dropout, &truth, landmarks, &mut rng.availability);
        let uwb = if mask.uwb {
            let ranges = uwb_ranges(
                &truth.position,
                &sc.anchors,
                sc.noise.uwb_range_std,
                &mut rng.uwb,
            );
            multilaterate(&ranges, &sc.anchors).ok()
        } else {
            None
        };
        mask.uwb = uwb.is_some();
        let yolo = match (mask.yolo, landmarks) {
            (true, Some(l)) => sense_yolo(&truth, l, sc.noise.yolo_range_std, &mut rng.yolo),
            _ => None,
        };
        mask.yolo = yolo.is_some();
        let imu = mask
            .imu
            .then(|| sense_imu(&truth, sc.noise.imu_var, &mut rng.imu));
        let frame = assemble_frame(uwb, yolo, imu, mask)?;

        let u_dev = control_law(&gain, &est.physical(), &integ);
        let applied = ControlInput::from_deviation(&u_dev, p);
        let applied_dev = ControlInput::new(applied.thrust - p.hover_thrust(), applied.torque);

        log.records.push(StepRecord {
            t,
            truth,
            estimate: StateVector::from_iterator(est.physical().iter().copied()),
            reference: r,
            control: applied,
            mask,
            integrator: integ.i,
        });

        let predicted = Vector3::new(est.x_hat[0], est.x_hat[1], est.x_hat[2]);
        est = match kf_step(&est, &am, &frame, &applied_dev, &r) {
            Ok(e) => e,
            Err(e) => {
                log.failure = Some(RunFailure {
                    step: k,
                    reason: e.to_string(),
                });
                return Ok(log);
            }
        };
        let e = selection_matrix(&mask);
        if e.iter().all(|v| *v == 0.0) {
            log.position_outage_steps += 1;
        }
        integ = integral_update(&integ, &r, &frame, &e, &sc.integrator, &predicted);

        let sub_h = h / sc.substeps as f64;
        for _ in 0..sc.substeps {
            truth = rk4_step(&truth, &applied, p, sub_h);
        }
        let noise = process.sample(&mut rng.process);
        truth = PlantState::from_vector(
            &(truth.to_vector() + StateVector::from_iterator(noise.iter().copied())),
        );

        if !truth.is_finite() || truth.position.norm() > sc.divergence_bound {
            log.failure = Some(RunFailure {
                step: k + 1,
                reason: format!("position {:?} left the bound", truth.position.as_slice()),
            });
            return Ok(log);
        }
    }
    if log.position_outage_steps > 0 {
        log::debug!(
            "{} steps without a position fix (integrator outage policy {:?})",
            log.position_outage_steps,
            sc.integrator.outage
        );
    }
    Ok(log)
}

/// Per-run mean squared errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Truth minus estimate, per axis.
    pub estimation: [f64; 3],
    /// Squared Euclidean distance from the desired point at the same step.
    pub path: f64,
    /// Per-axis path error.
    pub path_axis: [f64; 3],
    pub steps: usize,
}

fn metrics_over<'a>(records: impl Iterator<Item = &'a StepRecord>) -> Option<RunMetrics> {
    let mut est = [0.0; 3];
    let mut path_axis = [0.0; 3];
    let mut n = 0usize;
    for rec in records {
        for i in 0..3 {
            est[i] += (rec.truth.position[i] - rec.estimate[i]).powi(2);
            path_axis[i] += (rec.truth.position[i] - rec.reference[i]).powi(2);
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let estimation = est.map(|v| v / nf);
    let path_axis = path_axis.map(|v| v / nf);
    Some(RunMetrics {
        estimation,
        path: path_axis.iter().sum(),
        path_axis,
        steps: n,
    })
}

/// Estimation and path-following MSE over the whole run.
pub fn mse_metrics(log: &RunLog) -> Result<RunMetrics> {
    metrics_over(log.records.iter()).ok_or_else(|| Error::InvalidArgument("empty run log".into()))
}

/// Metrics restricted to steps whose true x lies in `[lo, hi]`.
pub fn mse_metrics_in_x_range(log: &RunLog, lo: f64, hi: f64) -> Option<RunMetrics> {
    metrics_over(
        log.records
            .iter()
            .filter(|r| lo <= r.truth.position.x && r.truth.position.x <= hi),
    )
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: percentile(&v, 0.5),
            p25: percentile(&v, 0.25),
            p75: percentile(&v, 0.75),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub run: usize,
    pub seed: u64,
    pub step: usize,
    pub reason: String,
}

/// Aggregate statistics over the successful runs of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub sensor_set: SensorSet,
    pub runs: usize,
    pub succeeded: usize,
    pub failed: Vec<FailedRun>,
    pub estimation: [Summary; 3],
    pub path: Summary,
    pub path_axis: [Summary; 3],
    /// Estimation statistics restricted to the UWB blackout interval.
    pub blackout_estimation: Option<[Summary; 3]>,
}

/// Outcome of a single Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run: usize,
    pub seed: u64,
    /// Whole-run metrics; `None` for failed runs.
    pub metrics: Option<RunMetrics>,
    /// Metrics inside the UWB blackout interval, also kept for failed runs
    /// (computed over the steps logged before the failure).
    pub blackout: Option<RunMetrics>,
    pub failure: Option<RunFailure>,
}

/// Runs `n_runs` seeds derived from the scenario seed, in parallel.
pub fn monte_carlo_runs(sc: &Scenario, n_runs: usize) -> Result<Vec<RunOutcome>> {
    if n_runs == 0 {
        return Err(Error::InvalidArgument("n_runs must be at least 1".into()));
    }
    sc.validate()?;
    sc.gain()?;
    (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let seed = run_seed(sc.seed, run);
            let log = simulate_run(sc, seed)?;
            let blackout = sc
                .dropout
                .uwb_blackout
                .and_then(|(lo, hi)| mse_metrics_in_x_range(&log, lo, hi));
            let metrics = if log.failed() {
                None
            } else {
                Some(mse_metrics(&log)?)
            };
            Ok(RunOutcome {
                run,
                seed,
                metrics,
                blackout,
                failure: log.failure,
            })
        })
        .collect()
}

pub fn summarize(sc: &Scenario, outcomes: &[RunOutcome]) -> Result<MseReport> {
    let ok: Vec<&RunMetrics> = outcomes.iter().filter_map(|o| o.metrics.as_ref()).collect();
    let failed: Vec<FailedRun> = outcomes
        .iter()
        .filter_map(|o| {
            o.failure.as_ref().map(|f| FailedRun {
                run: o.run,
                seed: o.seed,
                step: f.step,
                reason: f.reason.clone(),
            })
        })
        .collect();
    let axis = |get: &dyn Fn(&RunMetrics) -> f64| -> Summary {
        Summary::of(&ok.iter().map(|m| get(m)).collect::<Vec<_>>()).unwrap_or_default()
    };
    let blackout: Vec<&RunMetrics> = outcomes
        .iter()
        .filter(|o| o.metrics.is_some())
        .filter_map(|o| o.blackout.as_ref())
        .collect();
    let blackout_estimation = (!blackout.is_empty()).then(|| {
        [0, 1, 2].map(|i| {
            Summary::of(&blackout.iter().map(|m| m.estimation[i]).collect::<Vec<_>>())
                .unwrap_or_default()
        })
    });
    Ok(MseReport {
        sensor_set: sc.sensor_set,
        runs: outcomes.len(),
        succeeded: ok.len(),
        failed,
        estimation: [0, 1, 2].map(|i| axis(&|m| m.estimation[i])),
        path: axis(&|m| m.path),
        path_axis: [0, 1, 2].map(|i| axis(&|m| m.path_axis[i])),
        blackout_estimation,
    })
}

/// Monte Carlo protocol: per-run MSEs aggregated into mean, median and
/// quartiles. Failed runs are counted and excluded from the statistics.
pub fn monte_carlo(sc: &Scenario, n_runs: usize) -> Result<MseReport> {
    let outcomes = monte_carlo_runs(sc, n_runs)?;
    summarize(sc, &outcomes)
}

impl MseReport {
    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{} - {} runs ({} succeeded, {} failed)\n",
            self.sensor_set.label(),
            self.runs,
            self.succeeded,
            self.failed.len()
        );
        s += &format!(
            "{:<18}{:>12}{:>12}{:>12}{:>12}\n",
            "", "mean", "median", "25%tile", "75%tile"
        );
        let mut row = |name: &str, m: &Summary| {
            s += &format!(
                "{:<18}{:>12.5}{:>12.5}{:>12.5}{:>12.5}\n",
                name, m.mean, m.median, m.p25, m.p75
            );
        };
        for (axis, m) in ["x", "y", "z"].iter().zip(&self.estimation) {
            row(&format!("estimation {axis}"), m);
        }
        row("path", &self.path);
        if let Some(b) = &self.blackout_estimation {
            for (axis, m) in ["x", "y", "z"].iter().zip(b) {
                row(&format!("blackout est. {axis}"), m);
            }
        }
        s
    }
}

pub const CSV_HEADER: &str =
    "Desired X,Desired Y,Actual X,Actual Y,Est X,Est Y,Mask UWB,Mask YOLO,Mask IMU";

/// Writes the per-step log as CSV with [`CSV_HEADER`].
pub fn export_csv(log: &RunLog, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_csv(log, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_csv<W: Write>(log: &RunLog, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in &log.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.reference.x,
            r.reference.y,
            r.truth.position.x,
            r.truth.position.y,
            r.estimate[0],
            r.estimate[1],
            u8::from(r.mask.uwb),
            u8::from(r.mask.yolo),
            u8::from(r.mask.imu)
        )?;
    }
    Ok(())
}

/// One parsed CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub desired: [f64; 2],
    pub actual: [f64; 2],
    pub estimate: [f64; 2],
    pub mask: AvailabilityMask,
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(io_err)?
        .ok_or_else(|| Error::Config(format!("{} is empty", path.display())))?;
    if header.trim_end() != CSV_HEADER {
        return Err(Error::Config(format!(
            "unexpected header in {}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(io_err)?;
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 9 {
            return Err(Error::Config(format!(
                "row {} has {} fields",
                n + 1,
                f.len()
            )));
        }
        let num = |i: usize| {
            f[i].parse::<f64>()
                .map_err(|e| Error::Config(format!("row {}: {e}", n + 1)))
        };
        let flag = |i: usize| match f[i] {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::Config(format!(
                "row {}: bad mask value {other}",
                n + 1
            ))),
        };
        rows.push(CsvRow {
            desired: [num(0)?, num(1)?],
            actual: [num(2)?, num(3)?],
            estimate: [num(4)?, num(5)?],
            mask: AvailabilityMask::new(flag(6)?, flag(7)?, flag(8)?),
        });
    }
    Ok(rows)
}

/// Horizontal (x + y) path-following MSE of imported rows.
pub fn horizontal_path_mse(rows: &[CsvRow]) -> Option<f64> {
    if rows.is_empty() {
        return None;
    }
    let sum: f64 = rows
        .iter()
        .map(|r| (r.actual[0] - r.desired[0]).powi(2) + (r.actual[1] - r.desired[1]).powi(2))
        .sum();
    Some(sum / rows.len() as f64)
}
