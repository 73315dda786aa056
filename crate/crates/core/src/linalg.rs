//! Projection operators and basis maintenance.
//!
//! Rows of a feature matrix are instances. Removing a unit direction `ω`
//! from the rows means `X ↦ X (I − ωωᵀ)`; removing an orthonormal set
//! `ω⁽¹⁾…ω⁽ᵏ⁾` is the same as applying `Ω = I − Σ ω⁽ʲ⁾ω⁽ʲ⁾ᵀ` once.

use std::ops::Deref;
use std::sync::RwLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Numeric thresholds shared by the whole crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Norms below this are treated as zero.
    pub zero: f64,
    /// Relative tolerance for orthogonality and re-orthogonalization checks.
    pub orthogonality: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        zero: 1e-12,
        orthogonality: 1e-8,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

static TOLERANCES: RwLock<Tolerances> = RwLock::new(Tolerances::DEFAULT);

/// Current process-wide tolerances.
pub fn tolerances() -> Tolerances {
    *TOLERANCES.read().unwrap_or_else(|e| e.into_inner())
}

pub fn set_tolerances(tol: Tolerances) {
    *TOLERANCES.write().unwrap_or_else(|e| e.into_inner()) = tol;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("vector norm {norm:e} is numerically zero")]
    ZeroVector { norm: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("basis already spans all {dim} dimensions")]
    BasisFull { dim: usize },
    #[error("direction is linearly dependent on the basis (residual norm {residual:e})")]
    LinearlyDependent { residual: f64 },
    #[error("direction is degenerate for this matrix (‖Xω‖ = {norm:e})")]
    DegenerateDirection { norm: f64 },
    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("matrix must have at least one row and one column, got {rows}x{cols}")]
    Empty { rows: usize, cols: usize },
    #[error("vectors are not orthonormal: {0}")]
    NotOrthonormal(String),
}

/// A finite, non-empty `n × p` matrix with one instance per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Matrix);

impl FeatureMatrix {
    pub fn new(m: Matrix) -> Result<Self, LinalgError> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(LinalgError::Empty {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        // Scan row by row so the reported position is the first bad row.
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if !m[(i, j)].is_finite() {
                    return Err(LinalgError::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self(m))
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Self::new(Matrix::from_row_slice(rows, cols, data))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }
}

impl Deref for FeatureMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

impl TryFrom<Matrix> for FeatureMatrix {
    type Error = LinalgError;

    fn try_from(m: Matrix) -> Result<Self, LinalgError> {
        Self::new(m)
    }
}

/// `w / ‖w‖₂`.
pub fn normalize(w: &Vector) -> Result<Vector, LinalgError> {
    let norm = w.norm();
    if !(norm >= tolerances().zero) {
        return Err(LinalgError::ZeroVector { norm });
    }
    Ok(w / norm)
}

/// Ordered list of mutually orthogonal unit vectors in `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    dim: usize,
    vectors: Vec<Vector>,
}

impl OrthonormalBasis {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            vectors: Vec::new(),
        }
    }

    /// Wraps vectors that are already orthonormal, checking the invariants.
    pub fn from_vectors(dim: usize, vectors: Vec<Vector>) -> Result<Self, LinalgError> {
        if vectors.len() > dim {
            return Err(LinalgError::BasisFull { dim });
        }
        let tol = tolerances().orthogonality;
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(LinalgError::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if (v.norm() - 1.0).abs() > 1e-10 {
                return Err(LinalgError::NotOrthonormal(format!(
                    "vector {i} has norm {}",
                    v.norm()
                )));
            }
            for (j, u) in vectors[..i].iter().enumerate() {
                let dot = u.dot(v);
                if dot.abs() > tol {
                    return Err(LinalgError::NotOrthonormal(format!(
                        "vectors {j} and {i} have inner product {dot:e}"
                    )));
                }
            }
        }
        Ok(Self { dim, vectors })
    }

    /// Appends a new direction after removing its components along the
    /// existing vectors. Returns the unit vector actually stored.
    pub fn push(&mut self, w: &Vector) -> Result<&Vector, LinalgError> {
        if w.len() != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                found: w.len(),
            });
        }
        if self.vectors.len() == self.dim {
            return Err(LinalgError::BasisFull { dim: self.dim });
        }
        let mut v = normalize(w)?;
        // Two passes of modified Gram-Schmidt.
        for _ in 0..2 {
            for u in &self.vectors {
                let c = u.dot(&v);
                v.axpy(-c, u, 1.0);
            }
        }
        let residual = v.norm();
        if residual < tolerances().orthogonality {
            return Err(LinalgError::LinearlyDependent { residual });
        }
        v /= residual;
        self.vectors.push(v);
        Ok(self.vectors.last().expect("just pushed"))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vector] {
        &self.vectors
    }

    /// The first `k` vectors.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            dim: self.dim,
            vectors: self.vectors[..k.min(self.vectors.len())].to_vec(),
        }
    }

    /// `p × k` matrix with the basis vectors as columns.
    pub fn to_columns(&self) -> Matrix {
        Matrix::from_fn(self.dim, self.vectors.len(), |i, j| self.vectors[j][i])
    }
}

/// The orthogonal projector `Ω = I − Σ ω⁽ʲ⁾ω⁽ʲ⁾ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    matrix: Matrix,
}

impl Projector {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: Matrix::identity(dim, dim),
        }
    }

    pub fn from_basis(basis: &OrthonormalBasis) -> Result<Self, LinalgError> {
        let mut proj = Self::identity(basis.dim());
        for w in basis.vectors() {
            proj.remove(w)?;
        }
        Ok(proj)
    }

    /// In-place rank-one update `Ω ← Ω − ωωᵀ`.
    pub fn remove(&mut self, omega: &Vector) -> Result<(), LinalgError> {
        if omega.len() != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found: omega.len(),
            });
        }
        self.matrix.ger(-1.0, omega, omega, 1.0);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// `X Ω`.
    pub fn apply_rows(&self, x: &Matrix) -> Result<Matrix, LinalgError> {
        if x.ncols() != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        Ok(x * &self.matrix)
    }

    /// Number of eigenvalues above one half. Eigenvalues of a projector are
    /// 0 or 1, so this is its rank.
    pub fn rank(&self) -> usize {
        let eig = SymmetricEigen::new(self.matrix.clone());
        eig.eigenvalues.iter().filter(|&&l| l > 0.5).count()
    }
}

/// Orthonormal columns spanning the complement of a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisCompletion {
    pub dim: usize,
    pub kept: usize,
    /// `p × (p − k)`.
    pub columns: Matrix,
}

fn check_cols(x: &Matrix, dim: usize) -> Result<(), LinalgError> {
    if x.ncols() != dim {
        return Err(LinalgError::DimensionMismatch {
            expected: dim,
            found: x.ncols(),
        });
    }
    Ok(())
}

/// `X_⊥ = X (I − Σ ωωᵀ)`, evaluated as `X − (XB)Bᵀ` with `B` the basis columns.
pub fn project_rows_orthogonal(x: &Matrix, basis: &OrthonormalBasis) -> Result<Matrix, LinalgError> {
    check_cols(x, basis.dim())?;
    if basis.is_empty() {
        return Ok(x.clone());
    }
    let b = basis.to_columns();
    let coords = x * &b;
    let mut out = x.clone();
    out.gemm(-1.0, &coords, &b.transpose(), 1.0);
    Ok(out)
}

/// `X_∥ = X − X_⊥`.
pub fn project_rows_parallel(x: &Matrix, basis: &OrthonormalBasis) -> Result<Matrix, LinalgError> {
    Ok(x - project_rows_orthogonal(x, basis)?)
}

/// Completes `basis` to an orthonormal basis of `R^p` and returns the new
/// columns.
///
/// Householder QR of the `p × k` matrix of kept directions; the trailing
/// `p − k` columns of the full orthogonal factor span the complement.
pub fn complete_basis(basis: &OrthonormalBasis) -> Result<BasisCompletion, LinalgError> {
    let p = basis.dim();
    let k = basis.len();
    if k >= p {
        return Err(LinalgError::BasisFull { dim: p });
    }
    let mut a = basis.to_columns();
    let mut reflectors: Vec<(usize, Vector, f64)> = Vec::with_capacity(k);
    for j in 0..k {
        let x = a.view((j, j), (p - j, 1)).column(0).into_owned();
        let norm_x = x.norm();
        if norm_x == 0.0 {
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm_x } else { norm_x };
        let mut v = x;
        v[0] -= alpha;
        let vtv = v.norm_squared();
        if vtv == 0.0 {
            continue;
        }
        let beta = 2.0 / vtv;
        apply_reflector(&mut a, j, j, &v, beta);
        reflectors.push((j, v, beta));
    }

    // Q [0; I] = H_1 H_2 ... H_k [0; I]
    let mut q = Matrix::zeros(p, p - k);
    for c in 0..p - k {
        q[(k + c, c)] = 1.0;
    }
    for (j, v, beta) in reflectors.iter().rev() {
        apply_reflector(&mut q, *j, 0, v, *beta);
    }
    Ok(BasisCompletion {
        dim: p,
        kept: k,
        columns: q,
    })
}

/// `A[row.., col..] ← (I − β v vᵀ) A[row.., col..]`.
fn apply_reflector(a: &mut Matrix, row: usize, col: usize, v: &Vector, beta: f64) {
    let m = v.len();
    for c in col..a.ncols() {
        let mut s = 0.0;
        for i in 0..m {
            s += v[i] * a[(row + i, c)];
        }
        s *= beta;
        if s != 0.0 {
            for i in 0..m {
                a[(row + i, c)] -= s * v[i];
            }
        }
    }
}

/// Column-space (Schur-complement) deflation:
/// `(I − (Xω)(Xω)ᵀ / (ωᵀXᵀXω)) X`.
pub fn schur_deflate(x: &Matrix, omega: &Vector) -> Result<Matrix, LinalgError> {
    check_cols(x, omega.len())?;
    let u = x * omega;
    let norm = u.norm();
    if !(norm >= tolerances().zero) {
        return Err(LinalgError::DegenerateDirection { norm });
    }
    let utx = u.transpose() * x;
    let mut out = x.clone();
    out.gemm(-1.0 / (norm * norm), &u, &utx, 1.0);
    Ok(out)
}

/// Largest absolute entry.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
