//! Matrix and stochastic primitives: zero-order-hold discretization, the
//! discrete algebraic Riccati equation, spectral radius and multivariate
//! Gaussian sampling.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Maximum number of Riccati fixed-point iterations.
pub const DARE_MAX_ITERATIONS: usize = 10_000;
/// Relative residual tolerance of the Riccati solution.
pub const DARE_TOLERANCE: f64 = 1e-9;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_EIG_TOL: f64 = 1e-12;

/// A symmetric positive semi-definite (or definite) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spd(Matrix);

impl Spd {
    /// Accepts a symmetric PSD matrix: eigenvalues no lower than
    /// `-1e-12 * largest eigenvalue`.
    pub fn psd(m: Matrix) -> Result<Self> {
        let m = check_symmetric(m)?;
        let eig = SymmetricEigen::new(m.clone()).eigenvalues;
        let max = eig.max().max(0.0);
        if eig
            .iter()
            .any(|&l| l < -PSD_EIG_TOL * max.max(f64::MIN_POSITIVE))
        {
            return Err(Error::NotPositiveDefinite(format!(
                "smallest eigenvalue {:.3e}",
                eig.min()
            )));
        }
        Ok(Spd(m))
    }

    /// Accepts a symmetric positive definite matrix.
    pub fn pd(m: Matrix) -> Result<Self> {
        let m = check_symmetric(m)?;
        let eig = SymmetricEigen::new(m.clone()).eigenvalues;
        if eig.iter().any(|&l| l <= 0.0) || Cholesky::new(m.clone()).is_none() {
            return Err(Error::NotPositiveDefinite(format!(
                "smallest eigenvalue {:.3e}",
                eig.min()
            )));
        }
        Ok(Spd(m))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Spd::psd(Matrix::from_diagonal(&Vector::from_column_slice(diag)))
    }

    pub fn identity(n: usize) -> Self {
        Spd(Matrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Spd(Matrix::zeros(n, n))
    }

    /// Wraps a matrix that is symmetric by construction, symmetrizing away
    /// rounding asymmetry. No definiteness check.
    pub(crate) fn from_symmetric_unchecked(m: Matrix) -> Self {
        Spd(symmetrize(&m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Spd::psd(&self.0 * factor)
    }
}

fn check_symmetric(m: Matrix) -> Result<Matrix> {
    if m.nrows() == 0 || !m.is_square() {
        return Err(Error::DimensionMismatch {
            context: "covariance",
            expected: "non-empty square matrix".into(),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    let scale = m.amax().max(1.0);
    let asym = (&m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotPositiveDefinite(format!(
            "asymmetry {asym:.3e} exceeds tolerance"
        )));
    }
    Ok(symmetrize(&m))
}

/// `(M + Mᵀ) / 2`
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Infinity norm: maximum absolute row sum.
pub fn norm_inf(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn norm_one(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "expm",
            expected: "square matrix".into(),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("expm"));
    }
    let n = a.nrows();
    let norm = norm_one(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings);

    let mut sum = Matrix::identity(n, n);
    let mut term = Matrix::identity(n, n);
    for k in 1..=40 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.amax() <= f64::EPSILON * 0.25 * sum.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    Ok(sum)
}

/// Zero-order-hold discretization of `ẋ = a x + b u` over period `h`.
///
/// Both `Φ = e^{ah}` and `Γ = ∫₀ʰ e^{as} b ds` come out of a single exponential
/// of the augmented matrix `[[a, b], [0, 0]]·h`.
pub fn discretize_zoh(a: &Matrix, b: &Matrix, h: f64) -> Result<(Matrix, Matrix)> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling period must be positive, got {h}"
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("discretize_zoh"));
    }
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "discretize_zoh",
            expected: format!("a {n}x{n}, b {n}xm"),
            got: format!(
                "a {}x{}, b {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            ),
        });
    }
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * h));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * h));
    let e = expm(&aug)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}

/// One application of the Riccati map
/// `Q + ΦᵀSΦ − ΦᵀSΓ(ΓᵀSΓ + R)⁻¹ΓᵀSΦ`.
pub fn riccati_map(
    phi: &Matrix,
    gamma: &Matrix,
    q: &Matrix,
    r: &Matrix,
    s: &Matrix,
) -> Result<Matrix> {
    let s_phi = s * phi;
    let s_gamma = s * gamma;
    let inner = gamma.transpose() * &s_gamma + r;
    let chol = Cholesky::new(symmetrize(&inner))
        .ok_or_else(|| Error::NotPositiveDefinite("ΓᵀSΓ + R".into()))?;
    let rhs = gamma.transpose() * &s_phi;
    let gain = chol.solve(&rhs);
    let next = q + phi.transpose() * &s_phi - phi.transpose() * &s_gamma * gain;
    Ok(symmetrize(&next))
}

/// Riccati residual `‖S − map(S)‖∞`.
pub fn dare_residual(phi: &Matrix, gamma: &Matrix, q: &Spd, r: &Spd, s: &Matrix) -> Result<f64> {
    let mapped = riccati_map(phi, gamma, q.matrix(), r.matrix(), s)?;
    Ok(norm_inf(&(s - mapped)))
}

/// Keeps iterating a relatively converged solution until the absolute
/// residual drops below [`DARE_TOLERANCE`] or stops improving, returning the
/// best iterate seen.
fn polish_dare(phi: &Matrix, gamma: &Matrix, q: &Spd, r: &Spd, s: Matrix) -> Result<Matrix> {
    let mut best_res = dare_residual(phi, gamma, q, r, &s)?;
    let mut best = s;
    let mut current = best.clone();
    let mut stalled = 0;
    for _ in 0..DARE_MAX_ITERATIONS {
        if best_res < DARE_TOLERANCE || stalled >= 50 {
            break;
        }
        current = riccati_map(phi, gamma, q.matrix(), r.matrix(), &current)?;
        let res = dare_residual(phi, gamma, q, r, &current)?;
        if res < best_res {
            best_res = res;
            best = current.clone();
            stalled = 0;
        } else {
            stalled += 1;
        }
    }
    Ok(best)
}

/// Solves the discrete algebraic Riccati equation by fixed-point iteration
/// seeded at `S = Q`.
///
/// Converged once `‖S − map(S)‖∞ < 1e-9·(1 + ‖S‖∞)`; the iterate is then
/// polished toward an absolute residual of 1e-9. Non-convergence within
/// [`DARE_MAX_ITERATIONS`] usually means `(Φ, Γ)` is not stabilizable.
pub fn solve_dare(phi: &Matrix, gamma: &Matrix, q: &Spd, r: &Spd) -> Result<Spd> {
    let n = phi.nrows();
    let m = gamma.ncols();
    if !phi.is_square() || gamma.nrows() != n || q.dim() != n || r.dim() != m {
        return Err(Error::DimensionMismatch {
            context: "solve_dare",
            expected: format!("phi {n}x{n}, gamma {n}x{m}, q {n}x{n}, r {m}x{m}"),
            got: format!(
                "phi {}x{}, gamma {}x{}, q {}, r {}",
                phi.nrows(),
                phi.ncols(),
                gamma.nrows(),
                gamma.ncols(),
                q.dim(),
                r.dim()
            ),
        });
    }
    if Cholesky::new(r.matrix().clone()).is_none() {
        return Err(Error::NotPositiveDefinite("control weight R".into()));
    }
    let mut s = q.matrix().clone();
    let mut residual = f64::INFINITY;
    for _ in 0..DARE_MAX_ITERATIONS {
        let next = riccati_map(phi, gamma, q.matrix(), r.matrix(), &s)?;
        if next.iter().any(|v| !v.is_finite()) {
            break;
        }
        residual = norm_inf(&(&s - &next));
        s = next;
        if residual < DARE_TOLERANCE * (1.0 + norm_inf(&s)) {
            return Ok(Spd::from_symmetric_unchecked(polish_dare(
                phi, gamma, q, r, s,
            )?));
        }
    }
    Err(Error::DareNotConverged {
        iterations: DARE_MAX_ITERATIONS,
        residual,
    })
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            context: "spectral_radius",
            expected: "non-empty square matrix".into(),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectral_radius"));
    }
    Ok(m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Precomputed square-root factor of a covariance for repeated Gaussian draws.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    factor: Matrix,
}

impl GaussianSampler {
    /// Uses a Cholesky factor when the covariance is definite and falls back to
    /// `U·sqrt(Λ)` for semi-definite input.
    pub fn new(cov: &Spd) -> Result<Self> {
        let m = cov.matrix();
        if let Some(chol) = Cholesky::new(m.clone()) {
            return Ok(Self { factor: chol.l() });
        }
        let eig = SymmetricEigen::new(m.clone());
        let max = eig.eigenvalues.max().max(0.0);
        if eig
            .eigenvalues
            .iter()
            .any(|&l| l < -PSD_EIG_TOL * max.max(f64::MIN_POSITIVE))
        {
            return Err(Error::NotPositiveDefinite("sampling covariance".into()));
        }
        let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = &eig.eigenvectors * Matrix::from_diagonal(&sqrt);
        Ok(Self { factor })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// Zero-mean draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let z = Vector::from_fn(self.factor.ncols(), |_, _| rng.sample(StandardNormal));
        &self.factor * z
    }
}

/// Draws one sample from `N(mean, cov)`.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &Vector, cov: &Spd, rng: &mut R) -> Result<Vector> {
    if mean.len() != cov.dim() {
        return Err(Error::DimensionMismatch {
            context: "sample_mvn",
            expected: format!("mean of length {}", cov.dim()),
            got: mean.len().to_string(),
        });
    }
    if cov.matrix().iter().all(|&v| v == 0.0) {
        return Ok(mean.clone());
    }
    let sampler = GaussianSampler::new(cov)?;
    Ok(mean + sampler.sample(rng))
}
