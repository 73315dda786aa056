//! Ridge least squares, `w = (XᵀX + αI)⁻¹Xᵀy`.
//!
//! On ±1 labels this is the primal least-squares SVM. With an intercept the
//! columns and targets are centered first and `b = ȳ − x̄ᵀw`.

use nalgebra::Cholesky;

use crate::linalg::{Matrix, Vector};

use super::{center_columns, LabeledDataset, Learner, LearnerError, LearnerSpec, LinearFit, Task};

#[derive(Debug, Clone)]
pub struct RidgeLeastSquares {
    pub alpha: f64,
    pub fit_intercept: bool,
}

impl RidgeLeastSquares {
    pub fn new(alpha: f64, fit_intercept: bool) -> Self {
        Self {
            alpha,
            fit_intercept,
        }
    }

    pub(super) fn factory(spec: &LearnerSpec) -> Result<Box<dyn Learner>, LearnerError> {
        Ok(Box::new(Self::new(spec.regularization, spec.fit_intercept)))
    }

    /// Solves the regularized normal equations for already-centered data,
    /// through whichever of the `p × p` or `n × n` systems is smaller.
    pub fn solve(x: &Matrix, y: &Vector, alpha: f64) -> Result<Vector, LearnerError> {
        if !(alpha > 0.0) {
            return Err(LearnerError::SingularSystem { alpha });
        }
        let (n, p) = x.shape();
        if p <= n {
            let mut a = x.tr_mul(x);
            for i in 0..p {
                a[(i, i)] += alpha;
            }
            let rhs = x.tr_mul(y);
            let chol = Cholesky::new(a).ok_or(LearnerError::SingularSystem { alpha })?;
            Ok(chol.solve(&rhs))
        } else {
            let mut a = x * x.transpose();
            for i in 0..n {
                a[(i, i)] += alpha;
            }
            let chol = Cholesky::new(a).ok_or(LearnerError::SingularSystem { alpha })?;
            Ok(x.tr_mul(&chol.solve(y)))
        }
    }
}

impl Learner for RidgeLeastSquares {
    fn name(&self) -> &'static str {
        "ridge"
    }

    fn supports(&self, _task: Task) -> bool {
        true
    }

    fn fit(&self, data: &LabeledDataset) -> Result<LinearFit, LearnerError> {
        let x = data.x().matrix();
        let y = data.y();
        let (weights, intercept) = if self.fit_intercept {
            let (means, xc) = center_columns(x);
            let y_mean = y.mean();
            let yc = y.add_scalar(-y_mean);
            let w = Self::solve(&xc, &yc, self.alpha)?;
            let b = y_mean - means.dot(&w);
            (w, b)
        } else {
            (Self::solve(x, y, self.alpha)?, 0.0)
        };
        Ok(LinearFit {
            weights,
            intercept,
            iterations: 1,
            gradient_norm: 0.0,
        })
    }
}
