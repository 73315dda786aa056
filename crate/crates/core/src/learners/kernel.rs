//! Probe kernels and kernel ridge classification.
//!
//! Kernels are selected by name (`linear`, `rbf`, `poly`) with optional
//! colon-separated parameters, e.g. `rbf:0.5` or `poly:2:1`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::linalg::{Matrix, Vector};

use super::LearnerError;

/// A kernel that depends on its arguments only through `aᵀb`, `‖a‖²`, `‖b‖²`.
pub trait Kernel: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn value(&self, dot: f64, sq_a: f64, sq_b: f64) -> f64;

    /// `K[i, j] = k(aᵢ, bⱼ)`.
    fn cross(&self, a: &Matrix, b: &Matrix) -> Matrix {
        let dots = a * b.transpose();
        let na: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
        let nb: Vec<f64> = b.row_iter().map(|r| r.norm_squared()).collect();
        Matrix::from_fn(a.nrows(), b.nrows(), |i, j| self.value(dots[(i, j)], na[i], nb[j]))
    }

    /// Exactly symmetric Gram matrix of the rows of `a`.
    fn gram(&self, a: &Matrix) -> Matrix {
        let dots = a * a.transpose();
        let n = a.nrows();
        let mut k = Matrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = self.value(dots[(i, j)], dots[(i, i)], dots[(j, j)]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearKernel;

impl Kernel for LinearKernel {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn value(&self, dot: f64, _: f64, _: f64) -> f64 {
        dot
    }
}

/// `exp(−γ‖a − b‖²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfKernel {
    pub gamma: f64,
}

impl Kernel for RbfKernel {
    fn name(&self) -> &'static str {
        "rbf"
    }

    fn value(&self, dot: f64, sq_a: f64, sq_b: f64) -> f64 {
        (-self.gamma * (sq_a + sq_b - 2.0 * dot).max(0.0)).exp()
    }
}

/// `(γ aᵀb + c)^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolynomialKernel {
    pub degree: u32,
    pub gamma: f64,
    pub coef0: f64,
}

impl Kernel for PolynomialKernel {
    fn name(&self) -> &'static str {
        "poly"
    }

    fn value(&self, dot: f64, _: f64, _: f64) -> f64 {
        (self.gamma * dot + self.coef0).powi(self.degree as i32)
    }
}

/// `1 / (p · mean column variance)`, the usual "scale" bandwidth.
pub fn rbf_scale_gamma(x: &Matrix) -> f64 {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return 1.0;
    }
    let mean_var = x
        .column_iter()
        .map(|c| {
            let m = c.mean();
            c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64
        })
        .sum::<f64>()
        / p as f64;
    if mean_var > 0.0 {
        1.0 / (p as f64 * mean_var)
    } else {
        1.0
    }
}

/// Kernel name plus numeric parameters, written `name[:p1[:p2...]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct KernelSpec {
    pub name: String,
    pub params: Vec<f64>,
}

impl KernelSpec {
    pub fn linear() -> Self {
        Self {
            name: "linear".into(),
            params: vec![],
        }
    }

    /// RBF with the "scale" bandwidth resolved against the data.
    pub fn rbf() -> Self {
        Self {
            name: "rbf".into(),
            params: vec![],
        }
    }

    pub fn rbf_gamma(gamma: f64) -> Self {
        Self {
            name: "rbf".into(),
            params: vec![gamma],
        }
    }

    pub fn poly(degree: u32, coef0: f64) -> Self {
        Self {
            name: "poly".into(),
            params: vec![degree as f64, coef0],
        }
    }

    /// Builds the kernel; data-dependent defaults are computed from `x`.
    pub fn resolve(&self, x: &Matrix) -> Result<Box<dyn Kernel>, LearnerError> {
        kernel_registry().build(self, x)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        for p in &self.params {
            write!(f, ":{p}")?;
        }
        Ok(())
    }
}

impl FromStr for KernelSpec {
    type Err = LearnerError;

    fn from_str(s: &str) -> Result<Self, LearnerError> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or_default().trim().to_string();
        if name.is_empty() {
            return Err(LearnerError::UnknownKernel(s.to_string()));
        }
        let params = parts
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| LearnerError::InvalidParameter(format!("bad kernel parameter `{p}` in `{s}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { name, params })
    }
}

impl TryFrom<String> for KernelSpec {
    type Error = LearnerError;

    fn try_from(s: String) -> Result<Self, LearnerError> {
        s.parse()
    }
}

impl From<KernelSpec> for String {
    fn from(k: KernelSpec) -> String {
        k.to_string()
    }
}

pub type KernelFactory = fn(&[f64], &Matrix) -> Result<Box<dyn Kernel>, LearnerError>;

/// Name → factory map for kernels.
#[derive(Clone, Default)]
pub struct KernelRegistry {
    factories: BTreeMap<String, KernelFactory>,
}

impl fmt::Debug for KernelRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelRegistry").field("names", &self.names()).finish()
    }
}

fn positive(v: f64, what: &str) -> Result<f64, LearnerError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(LearnerError::InvalidParameter(format!("{what} must be positive, got {v}")))
    }
}

impl KernelRegistry {
    pub fn with_builtin() -> Self {
        let mut r = Self::default();
        r.register("linear", |_, _| Ok(Box::new(LinearKernel)));
        r.register("rbf", |params, x| {
            let gamma = match params.first() {
                Some(&g) => positive(g, "rbf gamma")?,
                None => rbf_scale_gamma(x),
            };
            Ok(Box::new(RbfKernel { gamma }))
        });
        r.register("poly", |params, _| {
            let degree = params.first().copied().unwrap_or(2.0);
            if degree < 1.0 || degree.fract() != 0.0 {
                return Err(LearnerError::InvalidParameter(format!(
                    "polynomial degree must be a positive integer, got {degree}"
                )));
            }
            let coef0 = params.get(1).copied().unwrap_or(1.0);
            let gamma = match params.get(2) {
                Some(&g) => positive(g, "poly gamma")?,
                None => 1.0,
            };
            Ok(Box::new(PolynomialKernel {
                degree: degree as u32,
                gamma,
                coef0,
            }))
        });
        r
    }

    pub fn register(&mut self, name: &str, factory: KernelFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(&self, spec: &KernelSpec, x: &Matrix) -> Result<Box<dyn Kernel>, LearnerError> {
        let f = self
            .factories
            .get(&spec.name)
            .ok_or_else(|| LearnerError::UnknownKernel(spec.name.clone()))?;
        f(&spec.params, x)
    }
}

pub fn kernel_registry() -> &'static KernelRegistry {
    static REGISTRY: OnceLock<KernelRegistry> = OnceLock::new();
    REGISTRY.get_or_init(KernelRegistry::with_builtin)
}

pub(crate) fn check_symmetric(k: &Matrix) -> Result<(), LearnerError> {
    if !k.is_square() {
        return Err(LearnerError::InvalidParameter(format!(
            "kernel matrix must be square, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    let scale = k.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let mut asymmetry = 0.0_f64;
    for j in 0..k.ncols() {
        for i in 0..j {
            asymmetry = asymmetry.max((k[(i, j)] - k[(j, i)]).abs());
        }
    }
    if asymmetry > 1e-10 * scale {
        return Err(LearnerError::NonSymmetric { asymmetry });
    }
    Ok(())
}

/// Kernel ridge dual coefficients `(K + αI)⁻¹ y`.
pub fn fit_kernel_ridge_probe(k: &Matrix, y: &Vector, alpha: f64) -> Result<Vector, LearnerError> {
    check_symmetric(k)?;
    if k.nrows() != y.len() {
        return Err(LearnerError::LengthMismatch {
            expected: k.nrows(),
            found: y.len(),
        });
    }
    if !(alpha > 0.0) {
        return Err(LearnerError::SingularSystem { alpha });
    }
    let mut a = k.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += alpha;
    }
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok(chol.solve(y));
    }
    // Slightly indefinite kernels (within PSD tolerance) still solve by LU.
    a.lu().solve(y).ok_or(LearnerError::SingularSystem { alpha })
}

/// `sign(K_test α̂)` with ties to +1.
pub fn predict_kernel(k_test: &Matrix, dual: &Vector) -> Result<Vector, LearnerError> {
    if k_test.ncols() != dual.len() {
        return Err(LearnerError::LengthMismatch {
            expected: k_test.ncols(),
            found: dual.len(),
        });
    }
    Ok(super::classify(&(k_test * dual)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{accuracy, cross_validate_kernel, RidgeLeastSquares};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identity_kernel_returns_labels() {
        let y = Vector::from_vec(vec![1.0, -1.0, 1.0]);
        let a = fit_kernel_ridge_probe(&Matrix::identity(3, 3), &y, 1e-10).unwrap();
        assert!((a - &y).norm() < 1e-9);
    }

    #[test]
    fn linear_kernel_matches_primal_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::from_fn(40, 6, |_, _| StandardNormal.sample(&mut rng));
        let t = Matrix::from_fn(10, 6, |_, _| StandardNormal.sample(&mut rng));
        let y = Vector::from_fn(40, |i, _| if x[(i, 0)] + x[(i, 3)] > 0.0 { 1.0 } else { -1.0 });
        let dual = fit_kernel_ridge_probe(&LinearKernel.gram(&x), &y, 0.5).unwrap();
        let w = RidgeLeastSquares::solve(&x, &y, 0.5).unwrap();
        let primal = &t * &w;
        let via_dual = LinearKernel.cross(&t, &x) * &dual;
        assert!((primal - via_dual).amax() <= 1e-6);
    }

    #[test]
    fn rbf_separates_planted_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200;
        let y = Vector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        let x = Matrix::from_fn(n, 4, |i, j| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * 0.5 + if j == 0 { 2.0 * y[i] } else { 0.0 }
        });
        let k = KernelSpec::rbf().resolve(&x).unwrap().gram(&x);
        let cv = cross_validate_kernel(&k, &y, 1.0, 5, 0).unwrap();
        assert!(cv.metric >= 0.95, "cv accuracy {}", cv.metric);
    }

    #[test]
    fn predictions_use_cross_block() {
        let x = Matrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let y = Vector::from_vec(vec![1.0, -1.0]);
        let dual = fit_kernel_ridge_probe(&LinearKernel.gram(&x), &y, 0.1).unwrap();
        let t = Matrix::from_row_slice(2, 1, &[3.0, -0.2]);
        let pred = predict_kernel(&LinearKernel.cross(&t, &x), &dual).unwrap();
        assert_eq!(accuracy(&pred, &Vector::from_vec(vec![1.0, -1.0])).unwrap(), 1.0);
    }

    #[test]
    fn asymmetric_kernel_is_rejected() {
        let k = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            fit_kernel_ridge_probe(&k, &Vector::zeros(2), 1.0),
            Err(LearnerError::NonSymmetric { .. })
        ));
    }

    #[test]
    fn spec_parsing_and_defaults() {
        let s: KernelSpec = "poly:2:1".parse().unwrap();
        assert_eq!(s, KernelSpec::poly(2, 1.0));
        assert_eq!(s.to_string(), "poly:2:1");
        assert!("rbf:x".parse::<KernelSpec>().is_err());
        assert!(matches!(
            "sigmoid".parse::<KernelSpec>().unwrap().resolve(&Matrix::zeros(1, 1)),
            Err(LearnerError::UnknownKernel(_))
        ));

        let x = Matrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        // column variances 1 and 0 → mean 0.5 → γ = 1 / (2 · 0.5)
        assert_relative_eq!(rbf_scale_gamma(&x), 1.0);
        let k = KernelSpec::poly(2, 1.0).resolve(&x).unwrap();
        assert_eq!(k.value(2.0, 0.0, 0.0), 9.0);
    }
}
