//! Linear learners, probes and clustering.
//!
//! Every learner produces a decision vector `w` (plus an intercept that never
//! enters a D4 basis). Learners live behind the [`Learner`] trait and are
//! looked up by name in a [`LearnerRegistry`], so the D4 loop, the probes and
//! the CLI never need to know which concrete algorithm they are driving.

mod cv;
mod kernel;
mod kmeans;
mod logistic;
mod metrics;
mod ridge;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{FeatureMatrix, LinalgError, Matrix, Vector};

pub use cv::{cross_validate, cross_validate_kernel, stratified_folds, CvSummary};
pub use kernel::{
    fit_kernel_ridge_probe, kernel_registry, predict_kernel, rbf_scale_gamma, Kernel, KernelFactory,
    KernelRegistry, KernelSpec, LinearKernel, PolynomialKernel, RbfKernel,
};
pub use kmeans::{cluster_label_accuracy, kmeans2, KMeansOutcome};
pub use logistic::LogisticRegression;
pub use metrics::{accuracy, classify, majority_baseline, mean_absolute_error, predict_scores};
pub use ridge::RidgeLeastSquares;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnerError {
    #[error("regularized system is singular (regularization {alpha})")]
    SingularSystem { alpha: f64 },
    #[error("optimizer stopped after {iterations} iterations with gradient norm {gradient_norm:e}")]
    NonConvergence { iterations: usize, gradient_norm: f64 },
    #[error("binary fitting needs both classes; only {present} present")]
    MissingClass { present: f64 },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("label {value} at index {index} is not -1 or +1")]
    NonBinaryLabel { index: usize, value: f64 },
    #[error("non-finite target at index {index}")]
    NonFiniteTarget { index: usize },
    #[error("unknown learner `{0}`")]
    UnknownLearner(String),
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("learner `{learner}` does not support {task} targets")]
    UnsupportedTask { learner: &'static str, task: Task },
    #[error("kernel matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },
    #[error("all points are identical")]
    DegenerateData,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Kind of supervised target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Labels in {−1, +1}.
    Binary,
    /// Real-valued targets.
    Regression,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Binary => f.write_str("binary"),
            Task::Regression => f.write_str("regression"),
        }
    }
}

/// Features plus targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    x: FeatureMatrix,
    y: Vector,
    task: Task,
}

impl LabeledDataset {
    pub fn new(x: FeatureMatrix, y: Vector, task: Task) -> Result<Self, LearnerError> {
        if y.len() != x.nrows() {
            return Err(LearnerError::LengthMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        for (index, &value) in y.iter().enumerate() {
            if !value.is_finite() {
                return Err(LearnerError::NonFiniteTarget { index });
            }
            if task == Task::Binary && value != 1.0 && value != -1.0 {
                return Err(LearnerError::NonBinaryLabel { index, value });
            }
        }
        Ok(Self { x, y, task })
    }

    pub fn binary(x: FeatureMatrix, y: Vector) -> Result<Self, LearnerError> {
        Self::new(x, y, Task::Binary)
    }

    pub fn regression(x: FeatureMatrix, y: Vector) -> Result<Self, LearnerError> {
        Self::new(x, y, Task::Regression)
    }

    /// Same targets, different features (e.g. after a projection).
    pub fn with_features(&self, x: Matrix) -> Result<Self, LearnerError> {
        let x = FeatureMatrix::new(x)?;
        if x.nrows() != self.y.len() {
            return Err(LearnerError::LengthMismatch {
                expected: self.y.len(),
                found: x.nrows(),
            });
        }
        Ok(Self {
            x,
            y: self.y.clone(),
            task: self.task,
        })
    }

    /// Rows at `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, LearnerError> {
        let x = self.x.select_rows(indices);
        let y = Vector::from_iterator(indices.len(), indices.iter().map(|&i| self.y[i]));
        Ok(Self {
            x: FeatureMatrix::new(x)?,
            y,
            task: self.task,
        })
    }

    pub fn x(&self) -> &FeatureMatrix {
        &self.x
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Errors unless both −1 and +1 occur.
    pub fn require_both_classes(&self) -> Result<(), LearnerError> {
        let pos = self.y.iter().any(|&v| v > 0.0);
        let neg = self.y.iter().any(|&v| v < 0.0);
        match (pos, neg) {
            (true, true) => Ok(()),
            (true, false) => Err(LearnerError::MissingClass { present: 1.0 }),
            _ => Err(LearnerError::MissingClass { present: -1.0 }),
        }
    }
}

/// Learner choice and controls, as stored in configs and model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    /// Registry name, e.g. `ridge` or `logistic`.
    pub kind: String,
    /// `α` for ridge least squares, `λ` for logistic.
    pub regularization: f64,
    pub fit_intercept: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl LearnerSpec {
    pub const DEFAULT_MAX_ITERATIONS: usize = 1000;
    pub const DEFAULT_TOLERANCE: f64 = 1e-8;

    pub fn new(kind: impl Into<String>, regularization: f64) -> Self {
        Self {
            kind: kind.into(),
            regularization,
            fit_intercept: true,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            tolerance: Self::DEFAULT_TOLERANCE,
        }
    }

    pub fn ridge(alpha: f64) -> Self {
        Self::new("ridge", alpha)
    }

    pub fn logistic(lambda: f64) -> Self {
        Self::new("logistic", lambda)
    }

    pub fn without_intercept(mut self) -> Self {
        self.fit_intercept = false;
        self
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        if !(self.regularization > 0.0) || !self.regularization.is_finite() {
            return Err(LearnerError::InvalidParameter(format!(
                "regularization must be positive, got {}",
                self.regularization
            )));
        }
        if self.max_iterations == 0 {
            return Err(LearnerError::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(LearnerError::InvalidParameter("tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Resolves this spec through the built-in registry.
    pub fn build(&self) -> Result<Box<dyn Learner>, LearnerError> {
        registry().build(self)
    }
}

/// A fitted linear decision function `x ↦ xᵀw + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub weights: Vector,
    pub intercept: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl LinearFit {
    pub fn scores(&self, x: &Matrix) -> Result<Vector, LearnerError> {
        predict_scores(x, &self.weights, self.intercept)
    }

    /// Accuracy for binary data, mean absolute error for regression.
    pub fn metric(&self, data: &LabeledDataset) -> Result<f64, LearnerError> {
        let scores = self.scores(data.x())?;
        match data.task() {
            Task::Binary => accuracy(&classify(&scores), data.y()),
            Task::Regression => mean_absolute_error(&scores, data.y()),
        }
    }
}

/// A linear learner.
pub trait Learner: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn supports(&self, task: Task) -> bool;

    fn fit(&self, data: &LabeledDataset) -> Result<LinearFit, LearnerError>;
}

pub type LearnerFactory = fn(&LearnerSpec) -> Result<Box<dyn Learner>, LearnerError>;

/// Name → factory map for learners.
#[derive(Clone, Default)]
pub struct LearnerRegistry {
    factories: BTreeMap<String, LearnerFactory>,
}

impl fmt::Debug for LearnerRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LearnerRegistry").field("names", &self.names()).finish()
    }
}

impl LearnerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtin() -> Self {
        let mut r = Self::new();
        r.register("ridge", RidgeLeastSquares::factory);
        r.register("ridge-ls", RidgeLeastSquares::factory);
        r.register("logistic", LogisticRegression::factory);
        r
    }

    pub fn register(&mut self, name: &str, factory: LearnerFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(&self, spec: &LearnerSpec) -> Result<Box<dyn Learner>, LearnerError> {
        spec.validate()?;
        let factory = self
            .factories
            .get(&spec.kind)
            .ok_or_else(|| LearnerError::UnknownLearner(spec.kind.clone()))?;
        factory(spec)
    }
}

/// Built-in registry.
pub fn registry() -> &'static LearnerRegistry {
    static REGISTRY: OnceLock<LearnerRegistry> = OnceLock::new();
    REGISTRY.get_or_init(LearnerRegistry::with_builtin)
}

/// Column means and centered copy of `x`.
pub(crate) fn center_columns(x: &Matrix) -> (Vector, Matrix) {
    let n = x.nrows() as f64;
    let means = Vector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    (means, centered)
}
