//! Synthetic IMU, UWB and camera-landmark sensors, their availability
//! processes, and the intermittent measurement handler that packs readings
//! into a measurement frame with its availability mask.

use nalgebra::{DMatrix, DVector, Matrix3, SVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PlantState, MEAS_DIM};
use crate::numerics::Matrix;

pub type MeasurementVector = SVector<f64, MEAS_DIM>;

/// Relative singular-value threshold below which a sphere system is treated
/// as rank deficient.
const RANK_TOL: f64 = 1e-9;

/// UWB anchors at known positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 3]>", into = "Vec<[f64; 3]>")]
pub struct AnchorSet {
    anchors: Vec<Vector3<f64>>,
}

impl AnchorSet {
    pub fn new(anchors: Vec<Vector3<f64>>) -> Result<Self> {
        if anchors.len() < 4 {
            return Err(Error::Config(format!(
                "at least 4 anchors required, got {}",
                anchors.len()
            )));
        }
        if anchors.iter().any(|a| !a.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("anchor position"));
        }
        for (i, a) in anchors.iter().enumerate() {
            if anchors[i + 1..].iter().any(|b| (a - b).norm() < 1e-9) {
                return Err(Error::Config("anchor positions must be distinct".into()));
            }
        }
        if difference_rank(&anchors) < 3 {
            return Err(Error::Config("anchors must not be coplanar".into()));
        }
        Ok(Self { anchors })
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.anchors
    }
}

impl TryFrom<Vec<[f64; 3]>> for AnchorSet {
    type Error = Error;
    fn try_from(v: Vec<[f64; 3]>) -> Result<Self> {
        AnchorSet::new(v.into_iter().map(Vector3::from).collect())
    }
}

impl From<AnchorSet> for Vec<[f64; 3]> {
    fn from(a: AnchorSet) -> Self {
        a.anchors.iter().map(|p| [p.x, p.y, p.z]).collect()
    }
}

/// Landmarks with known positions and the camera's visibility model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LandmarkSetRaw", into = "LandmarkSetRaw")]
pub struct LandmarkSet {
    landmarks: Vec<Vector3<f64>>,
    max_range: f64,
    half_fov: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LandmarkSetRaw {
    landmarks: Vec<[f64; 3]>,
    max_range: f64,
    half_fov: f64,
}

impl TryFrom<LandmarkSetRaw> for LandmarkSet {
    type Error = Error;
    fn try_from(r: LandmarkSetRaw) -> Result<Self> {
        LandmarkSet::new(
            r.landmarks.into_iter().map(Vector3::from).collect(),
            r.max_range,
            r.half_fov,
        )
    }
}

impl From<LandmarkSet> for LandmarkSetRaw {
    fn from(l: LandmarkSet) -> Self {
        LandmarkSetRaw {
            landmarks: l.landmarks.iter().map(|p| [p.x, p.y, p.z]).collect(),
            max_range: l.max_range,
            half_fov: l.half_fov,
        }
    }
}

impl LandmarkSet {
    /// `half_fov` is the half-angle, in radians, of a horizontal cone centred
    /// on the vehicle heading.
    pub fn new(landmarks: Vec<Vector3<f64>>, max_range: f64, half_fov: f64) -> Result<Self> {
        if landmarks.len() < 3 {
            return Err(Error::Config(format!(
                "at least 3 landmarks required, got {}",
                landmarks.len()
            )));
        }
        if !(max_range.is_finite() && max_range > 0.0) {
            return Err(Error::Config(format!(
                "landmark range must be positive, got {max_range}"
            )));
        }
        if !(half_fov > 0.0 && half_fov <= std::f64::consts::PI) {
            return Err(Error::Config(format!(
                "half field of view must lie in (0, π], got {half_fov}"
            )));
        }
        Ok(Self {
            landmarks,
            max_range,
            half_fov,
        })
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.landmarks
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    pub fn half_fov(&self) -> f64 {
        self.half_fov
    }

    pub fn with_visibility(&self, max_range: f64, half_fov: f64) -> Result<Self> {
        Self::new(self.landmarks.clone(), max_range, half_fov)
    }

    fn is_visible(&self, camera: &Vector3<f64>, yaw: f64, landmark: &Vector3<f64>) -> bool {
        let d = landmark - camera;
        if d.norm() > self.max_range {
            return false;
        }
        if self.half_fov >= std::f64::consts::PI {
            return true;
        }
        let horizontal = d.xy();
        let len = horizontal.norm();
        if len == 0.0 {
            return false;
        }
        let cos = (horizontal.x * yaw.cos() + horizontal.y * yaw.sin()) / len;
        cos.clamp(-1.0, 1.0).acos() <= self.half_fov
    }

    /// Landmarks the camera on `truth` can see.
    pub fn visible_from(&self, truth: &PlantState) -> Vec<Vector3<f64>> {
        self.landmarks
            .iter()
            .filter(|l| self.is_visible(&truth.position, truth.attitude.z, l))
            .copied()
            .collect()
    }
}

/// Which of the three sensors delivered a reading this step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AvailabilityMask {
    pub uwb: bool,
    pub yolo: bool,
    pub imu: bool,
}

impl AvailabilityMask {
    pub const ALL: Self = Self::new(true, true, true);
    pub const NONE: Self = Self::new(false, false, false);

    pub const fn new(uwb: bool, yolo: bool, imu: bool) -> Self {
        Self { uwb, yolo, imu }
    }

    pub fn as_array(&self) -> [bool; 3] {
        [self.uwb, self.yolo, self.imu]
    }

    /// Block-diagonal `Δ` (9×9) with `I₃` where a sensor is available.
    pub fn delta(&self) -> Matrix {
        let mut d = Matrix::zeros(MEAS_DIM, MEAS_DIM);
        for (j, on) in self.as_array().into_iter().enumerate() {
            if on {
                for i in 0..3 {
                    d[(3 * j + i, 3 * j + i)] = 1.0;
                }
            }
        }
        d
    }

    /// Dynamic measurement matrix `H = Δ·C̄`.
    pub fn measurement_matrix(&self, c_bar: &Matrix) -> Matrix {
        let mut h = c_bar.clone();
        for (j, on) in self.as_array().into_iter().enumerate() {
            if !on {
                h.rows_mut(3 * j, 3).fill(0.0);
            }
        }
        h
    }
}

/// Measurement vector plus availability mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementFrame {
    /// `[UWB xyz, YOLO xyz, IMU φθψ]`, zero in unavailable blocks.
    pub y: MeasurementVector,
    pub mask: AvailabilityMask,
}

impl MeasurementFrame {
    pub fn uwb(&self) -> Option<Vector3<f64>> {
        self.mask
            .uwb
            .then(|| self.y.fixed_rows::<3>(0).into_owned())
    }

    pub fn yolo(&self) -> Option<Vector3<f64>> {
        self.mask
            .yolo
            .then(|| self.y.fixed_rows::<3>(3).into_owned())
    }

    pub fn imu(&self) -> Option<Vector3<f64>> {
        self.mask
            .imu
            .then(|| self.y.fixed_rows::<3>(6).into_owned())
    }
}

/// Per-step availability probabilities and the deliberate UWB blackout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DropoutConfig {
    pub p_uwb: f64,
    pub p_yolo: f64,
    pub p_imu: f64,
    /// `[x_min, x_max]` in metres where UWB is forced unavailable.
    pub uwb_blackout: Option<(f64, f64)>,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self {
            p_uwb: 0.9,
            p_yolo: 0.7,
            p_imu: 1.0,
            uwb_blackout: None,
        }
    }
}

impl DropoutConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_uwb", self.p_uwb),
            ("p_yolo", self.p_yolo),
            ("p_imu", self.p_imu),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if let Some((lo, hi)) = self.uwb_blackout {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!(
                    "blackout interval [{lo}, {hi}] is not ordered"
                )));
            }
        }
        Ok(())
    }

    pub fn in_blackout(&self, x: f64) -> bool {
        self.uwb_blackout.is_some_and(|(lo, hi)| lo <= x && x <= hi)
    }
}

/// Draws this step's availability.
///
/// Each sensor is an independent Bernoulli trial; three uniforms are consumed
/// every call so the stream stays aligned across configurations. UWB is
/// suppressed inside the blackout interval and the camera whenever fewer than
/// three landmarks are visible. `landmarks = None` disables the camera.
pub fn availability_step<R: Rng + ?Sized>(
    cfg: &DropoutConfig,
    truth: &PlantState,
    landmarks: Option<&LandmarkSet>,
    rng: &mut R,
) -> AvailabilityMask {
    let draws: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let uwb = draws[0] < cfg.p_uwb && !cfg.in_blackout(truth.position.x);
    let yolo = draws[1] < cfg.p_yolo && landmarks.is_some_and(|l| l.visible_from(truth).len() >= 3);
    let imu = draws[2] < cfg.p_imu;
    AvailabilityMask::new(uwb, yolo, imu)
}

fn gaussian<R: Rng + ?Sized>(std: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    std * z
}

/// Euler angles corrupted by i.i.d. Gaussian noise of variance `noise_var`.
pub fn sense_imu<R: Rng + ?Sized>(truth: &PlantState, noise_var: f64, rng: &mut R) -> Vector3<f64> {
    let std = noise_var.max(0.0).sqrt();
    let noise = Vector3::from_fn(|_, _| gaussian(std, rng));
    truth.attitude + noise
}

/// Noisy tag-to-anchor distances, clamped at zero.
pub fn uwb_ranges<R: Rng + ?Sized>(
    tag: &Vector3<f64>,
    anchors: &AnchorSet,
    noise_std: f64,
    rng: &mut R,
) -> Vec<f64> {
    noisy_ranges(tag, anchors.positions(), noise_std, rng)
}

fn noisy_ranges<R: Rng + ?Sized>(
    point: &Vector3<f64>,
    centers: &[Vector3<f64>],
    noise_std: f64,
    rng: &mut R,
) -> Vec<f64> {
    let normal = Normal::new(0.0, noise_std.max(0.0)).expect("finite std");
    centers
        .iter()
        .map(|c| ((point - c).norm() + normal.sample(rng)).max(0.0))
        .collect()
}

fn difference_rank(centers: &[Vector3<f64>]) -> usize {
    if centers.len() < 2 {
        return 0;
    }
    let a = DMatrix::from_fn(centers.len() - 1, 3, |i, j| {
        centers[i + 1][j] - centers[0][j]
    });
    let sv = a.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * max).count()
}

/// Least-squares position from distances to known centres.
///
/// Subtracting the first sphere equation from the others removes the
/// quadratic term, leaving a linear system in the position. With a full-rank
/// system the least-squares solution is returned; with rank two (three
/// spheres, or coplanar centres) the two mirror solutions along the null
/// direction are computed and the one closer to `hint` is kept. One Gauss-Newton step on the range residuals follows.
pub fn solve_spheres(
    centers: &[Vector3<f64>],
    ranges: &[f64],
    hint: Option<Vector3<f64>>,
) -> Result<Vector3<f64>> {
    if centers.len() != ranges.len() {
        return Err(Error::DimensionMismatch {
            context: "solve_spheres",
            expected: format!("{} ranges", centers.len()),
            got: ranges.len().to_string(),
        });
    }
    if centers.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "{} spheres cannot fix a point",
            centers.len()
        )));
    }
    if ranges.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("ranges"));
    }
    let c0 = centers[0];
    let r0 = ranges[0];
    let rows = centers.len() - 1;
    let a = DMatrix::from_fn(rows, 3, |i, j| 2.0 * (centers[i + 1][j] - c0[j]));
    let b = DVector::from_fn(rows, |i, _| {
        r0 * r0 - ranges[i + 1] * ranges[i + 1] + centers[i + 1].norm_squared() - c0.norm_squared()
    });

    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * max_sv)
        .count();
    let p = match rank {
        3 => {
            let x = svd
                .solve(&b, RANK_TOL * max_sv)
                .map_err(|e| Error::DegenerateGeometry(e.to_string()))?;
            Vector3::new(x[0], x[1], x[2])
        }
        2 => {
            let hint = hint.ok_or_else(|| {
                Error::DegenerateGeometry("coplanar centres and no position hint".into())
            })?;
            let x = svd
                .solve(&b, RANK_TOL * max_sv)
                .map_err(|e| Error::DegenerateGeometry(e.to_string()))?;
            let p0 = Vector3::new(x[0], x[1], x[2]);
            // thin SVD may omit the null direction; it is orthogonal to the
            // two dominant right singular vectors
            let v_t = svd.v_t.as_ref().expect("requested V");
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
            let row = |k: usize| Vector3::new(v_t[(k, 0)], v_t[(k, 1)], v_t[(k, 2)]);
            let n = row(order[0]).cross(&row(order[1])).normalize();
            // |p0 + t n - c0|² = r0²
            let d = p0 - c0;
            let half_b = n.dot(&d);
            let c = d.norm_squared() - r0 * r0;
            let disc = (half_b * half_b - c).max(0.0).sqrt();
            let p_plus = p0 + n * (-half_b + disc);
            let p_minus = p0 + n * (-half_b - disc);
            if (p_plus - hint).norm() <= (p_minus - hint).norm() {
                p_plus
            } else {
                p_minus
            }
        }
        _ => {
            return Err(Error::DegenerateGeometry(format!(
                "sphere system has rank {rank}"
            )))
        }
    };
    Ok(gauss_newton_step(centers, ranges, p))
}

fn gauss_newton_step(centers: &[Vector3<f64>], ranges: &[f64], p: Vector3<f64>) -> Vector3<f64> {
    let mut jtj = Matrix3::zeros();
    let mut jtf = Vector3::zeros();
    for (c, r) in centers.iter().zip(ranges) {
        let d = p - c;
        let dist = d.norm();
        if dist < 1e-9 {
            continue;
        }
        let j = d / dist;
        jtj += j * j.transpose();
        jtf += j * (dist - r);
    }
    match jtj.try_inverse() {
        Some(inv) if inv.iter().all(|v| v.is_finite()) => {
            let step = inv * jtf;
            let candidate = p - step;
            if cost(centers, ranges, &candidate) <= cost(centers, ranges, &p) {
                candidate
            } else {
                p
            }
        }
        _ => p,
    }
}

fn cost(centers: &[Vector3<f64>], ranges: &[f64], p: &Vector3<f64>) -> f64 {
    centers
        .iter()
        .zip(ranges)
        .map(|(c, r)| ((p - c).norm() - r).powi(2))
        .sum()
}

/// Tag position from UWB ranges.
pub fn multilaterate(ranges: &[f64], anchors: &AnchorSet) -> Result<Vector3<f64>> {
    if ranges.len() < 4 {
        return Err(Error::DegenerateGeometry(format!(
            "multilateration needs at least 4 ranges, got {}",
            ranges.len()
        )));
    }
    solve_spheres(anchors.positions(), ranges, None)
}

/// Camera position fix from noisy distances to the visible landmarks, or
/// `None` when fewer than three are in view.
pub fn sense_yolo<R: Rng + ?Sized>(
    truth: &PlantState,
    landmarks: &LandmarkSet,
    noise_std: f64,
    rng: &mut R,
) -> Option<Vector3<f64>> {
    let visible = landmarks.visible_from(truth);
    if visible.len() < 3 {
        return None;
    }
    let ranges = noisy_ranges(&truth.position, &visible, noise_std, rng);
    solve_spheres(&visible, &ranges, Some(truth.position)).ok()
}

/// Packs the available readings into `[UWB, YOLO, IMU]` order.
pub fn assemble_frame(
    uwb: Option<Vector3<f64>>,
    yolo: Option<Vector3<f64>>,
    imu: Option<Vector3<f64>>,
    mask: AvailabilityMask,
) -> Result<MeasurementFrame> {
    let mut y = MeasurementVector::zeros();
    for (j, (name, reading, on)) in [
        ("uwb", uwb, mask.uwb),
        ("yolo", yolo, mask.yolo),
        ("imu", imu, mask.imu),
    ]
    .into_iter()
    .enumerate()
    {
        match (reading, on) {
            (Some(r), true) => y.fixed_rows_mut::<3>(3 * j).copy_from(&r),
            (None, false) => {}
            (Some(_), false) => {
                return Err(Error::MaskMismatch(format!(
                    "{name} reading present but masked out"
                )))
            }
            (None, true) => {
                return Err(Error::MaskMismatch(format!(
                    "{name} marked available without a reading"
                )))
            }
        }
    }
    Ok(MeasurementFrame { y, mask })
}
