//! D4 on a kernel matrix.
//!
//! A direction in the implicit feature space is held in dual form,
//! `v = Φᵀα`. Projecting every feature vector orthogonal to `v` changes the
//! Gram matrix by a rank-one update:
//!
//! ```text
//! K′ = K − (Kα)(Kα)ᵀ / (αᵀKα)
//! ```
//!
//! and a test-vs-train block `K_test` becomes
//! `K_test − (K_test α)(Kα)ᵀ / (αᵀKα)`.

use nalgebra::SymmetricEigen;
use thiserror::Error;

use crate::learners::LearnerError;
use crate::linalg::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("kernel matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("kernel matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },
    #[error("kernel matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("direction has vanishing feature-space norm (αᵀKα = {norm_sq:e})")]
    DegenerateDirection { norm_sq: f64 },
    #[error("{iterations} iterations requested for {n} samples")]
    TooManyIterations { iterations: usize, n: usize },
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

/// A symmetric PSD train kernel with an optional `m × n` test-vs-train block.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    k: Matrix,
    cross: Option<Matrix>,
}

fn scale(k: &Matrix) -> f64 {
    k.norm().max(f64::MIN_POSITIVE)
}

impl KernelMatrix {
    /// Validates symmetry (1e−10 relative) and PSD (1e−8 relative).
    pub fn new(k: Matrix) -> Result<Self, KernelError> {
        if k.nrows() != k.ncols() {
            return Err(KernelError::NotSquare {
                rows: k.nrows(),
                cols: k.ncols(),
            });
        }
        let s = scale(&k);
        let mut asymmetry: f64 = 0.0;
        for j in 0..k.ncols() {
            for i in 0..j {
                asymmetry = asymmetry.max((k[(i, j)] - k[(j, i)]).abs());
            }
        }
        if asymmetry > 1e-10 * s {
            return Err(KernelError::NonSymmetric { asymmetry });
        }
        if k.nrows() > 0 {
            let min_eigenvalue = SymmetricEigen::new(k.clone()).eigenvalues.min();
            if min_eigenvalue < -1e-8 * s {
                return Err(KernelError::NotPsd { min_eigenvalue });
            }
        }
        Ok(Self { k, cross: None })
    }

    /// Linear kernel `XXᵀ`.
    pub fn linear(x: &Matrix) -> Self {
        let k = x * x.transpose();
        Self {
            k: symmetrized(k),
            cross: None,
        }
    }

    pub fn with_cross(mut self, cross: Matrix) -> Result<Self, KernelError> {
        if cross.ncols() != self.n() {
            return Err(KernelError::DimensionMismatch {
                expected: self.n(),
                found: cross.ncols(),
            });
        }
        self.cross = Some(cross);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.k
    }

    pub fn cross(&self) -> Option<&Matrix> {
        self.cross.as_ref()
    }

    pub fn into_parts(self) -> (Matrix, Option<Matrix>) {
        (self.k, self.cross)
    }
}

fn symmetrized(mut k: Matrix) -> Matrix {
    for j in 0..k.ncols() {
        for i in 0..j {
            let v = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Dual coefficients of a feature-space direction `v = Φᵀα`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualDirection {
    pub alpha: Vector,
}

impl DualDirection {
    pub fn new(alpha: Vector) -> Self {
        Self { alpha }
    }

    /// `αᵀKα = ‖v‖²`.
    pub fn norm_sq(&self, k: &KernelMatrix) -> Result<f64, KernelError> {
        check_len(k, &self.alpha)?;
        Ok(self.alpha.dot(&(&k.k * &self.alpha)))
    }
}

fn check_len(k: &KernelMatrix, alpha: &Vector) -> Result<(), KernelError> {
    if alpha.len() != k.n() {
        return Err(KernelError::DimensionMismatch {
            expected: k.n(),
            found: alpha.len(),
        });
    }
    Ok(())
}

/// Removes `v = Φᵀα` from the implicit features of `k` (and its cross block).
pub fn kernel_d4_step(k: &KernelMatrix, direction: &DualDirection) -> Result<KernelMatrix, KernelError> {
    check_len(k, &direction.alpha)?;
    let ka = &k.k * &direction.alpha;
    let norm_sq = direction.alpha.dot(&ka);
    if !(norm_sq >= 1e-12 * scale(&k.k)) {
        return Err(KernelError::DegenerateDirection { norm_sq });
    }
    let n = k.n();
    let mut out = k.k.clone();
    for j in 0..n {
        for i in 0..=j {
            let v = out[(i, j)] - ka[i] * ka[j] / norm_sq;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    let cross = k.cross.as_ref().map(|c| {
        let ca = c * &direction.alpha;
        let mut c = c.clone();
        c.ger(-1.0 / norm_sq, &ca, &ka, 1.0);
        c
    });
    Ok(KernelMatrix { k: out, cross })
}

/// Kernel ridge dual `(K + aI)⁻¹y` restricted to the numerical range of `K`.
///
/// Components in the null space of `K` have zero feature-space norm, so they
/// do not change `v = Φᵀα`. After a few deflations the null space is large and
/// `(K + aI)⁻¹y` is dominated by it; left in, those components multiply the
/// rounding error of the deflated kernel at every later step.
pub fn range_ridge_dual(k: &Matrix, y: &Vector, ridge: f64) -> Result<Vector, KernelError> {
    if k.nrows() != y.len() {
        return Err(KernelError::DimensionMismatch {
            expected: k.nrows(),
            found: y.len(),
        });
    }
    if !(ridge > 0.0) {
        return Err(LearnerError::SingularSystem { alpha: ridge }.into());
    }
    let eig = SymmetricEigen::new(k.clone());
    let cutoff = RANGE_TOLERANCE * eig.eigenvalues.amax();
    let mut alpha = Vector::zeros(y.len());
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff {
            let u = eig.eigenvectors.column(i);
            alpha.axpy(u.dot(y) / (lambda + ridge), &u, 1.0);
        }
    }
    Ok(alpha)
}

const RANGE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelStopReason {
    Completed,
    DegenerateDirection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelD4Fit {
    pub directions: Vec<DualDirection>,
    /// The kernel after the last successful deflation.
    pub deflated: KernelMatrix,
    pub stop_reason: KernelStopReason,
}

/// Stepwise kernel D4 driven by kernel ridge on the current deflated kernel.
#[derive(Debug, Clone)]
pub struct KernelDeflation {
    current: KernelMatrix,
    directions: Vec<DualDirection>,
}

impl KernelDeflation {
    pub fn new(k: KernelMatrix) -> Self {
        Self {
            current: k,
            directions: Vec::new(),
        }
    }

    pub fn current(&self) -> &KernelMatrix {
        &self.current
    }

    pub fn directions(&self) -> &[DualDirection] {
        &self.directions
    }

    /// Fits `α̂ = (K + aI)⁻¹y` on the current kernel and deflates by it.
    pub fn step(&mut self, y: &Vector, ridge: f64) -> Result<&DualDirection, KernelError> {
        let direction = DualDirection::new(range_ridge_dual(&self.current.k, y, ridge)?);
        self.current = kernel_d4_step(&self.current, &direction)?;
        self.directions.push(direction);
        Ok(self.directions.last().expect("just pushed"))
    }

    pub fn finish(self, stop_reason: KernelStopReason) -> KernelD4Fit {
        KernelD4Fit {
            directions: self.directions,
            deflated: self.current,
            stop_reason,
        }
    }
}

/// Runs `iterations` kernel D4 steps. A degenerate direction ends the run
/// early with [`KernelStopReason::DegenerateDirection`].
pub fn kernel_d4_fit(k: KernelMatrix, y: &Vector, iterations: usize, ridge: f64) -> Result<KernelD4Fit, KernelError> {
    if iterations > k.n() {
        return Err(KernelError::TooManyIterations { iterations, n: k.n() });
    }
    if y.len() != k.n() {
        return Err(KernelError::DimensionMismatch {
            expected: k.n(),
            found: y.len(),
        });
    }
    let mut run = KernelDeflation::new(k);
    for _ in 0..iterations {
        match run.step(y, ridge) {
            Ok(_) => {}
            Err(KernelError::DegenerateDirection { .. }) => {
                return Ok(run.finish(KernelStopReason::DegenerateDirection));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(run.finish(KernelStopReason::Completed))
}
