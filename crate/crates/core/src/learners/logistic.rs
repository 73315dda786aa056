//! L2-regularized logistic regression fitted by damped Newton.
//!
//! Objective, with margins `mᵢ = xᵢᵀw + b`:
//!
//! ```text
//! f(w, b) = (1/n) Σᵢ log(1 + exp(−yᵢ mᵢ)) + (λ/2) ‖w‖²
//! ```
//!
//! The loss is averaged over instances, so `λ` keeps the same strength
//! whatever the sample size. The intercept is not penalized.

use nalgebra::Cholesky;
use rayon::prelude::*;

use crate::linalg::{Matrix, Vector};

use super::{LabeledDataset, Learner, LearnerError, LearnerSpec, LinearFit, Task};

const GRAM_BLOCK: usize = 2048;

#[derive(Debug, Clone)]
pub struct LogisticRegression {
    pub lambda: f64,
    pub fit_intercept: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl LogisticRegression {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            fit_intercept: true,
            max_iterations: LearnerSpec::DEFAULT_MAX_ITERATIONS,
            tolerance: LearnerSpec::DEFAULT_TOLERANCE,
        }
    }

    pub(super) fn factory(spec: &LearnerSpec) -> Result<Box<dyn Learner>, LearnerError> {
        Ok(Box::new(Self {
            lambda: spec.regularization,
            fit_intercept: spec.fit_intercept,
            max_iterations: spec.max_iterations,
            tolerance: spec.tolerance,
        }))
    }

    /// Regularized objective at `(w, b)`.
    pub fn objective(&self, x: &Matrix, y: &Vector, w: &Vector, b: f64) -> f64 {
        let m = x * w;
        let n = y.len() as f64;
        let loss: f64 = m.iter().zip(y.iter()).map(|(mi, yi)| softplus(-yi * (mi + b))).sum();
        loss / n + 0.5 * self.lambda * w.norm_squared()
    }

    /// Gradient with respect to `w` and `b`.
    pub fn gradient(&self, x: &Matrix, y: &Vector, w: &Vector, b: f64) -> (Vector, f64) {
        let n = y.len() as f64;
        let m = x * w;
        let r = Vector::from_iterator(
            y.len(),
            m.iter().zip(y.iter()).map(|(mi, yi)| -yi * sigmoid(-yi * (mi + b)) / n),
        );
        let gw = x.tr_mul(&r) + w * self.lambda;
        (gw, r.sum())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `Xᵀ diag(d) X`, summed over fixed row blocks in block order so the result
/// does not depend on the thread count.
fn weighted_gram(x: &Matrix, d: &Vector) -> Matrix {
    let (n, p) = x.shape();
    let blocks: Vec<Matrix> = (0..n.div_ceil(GRAM_BLOCK))
        .into_par_iter()
        .map(|b| {
            let start = b * GRAM_BLOCK;
            let len = GRAM_BLOCK.min(n - start);
            let mut xb = x.rows(start, len).into_owned();
            for j in 0..p {
                for i in 0..len {
                    xb[(i, j)] *= d[start + i].sqrt();
                }
            }
            xb.transpose() * &xb
        })
        .collect();
    blocks.into_iter().fold(Matrix::zeros(p, p), |acc, m| acc + m)
}

impl Learner for LogisticRegression {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn supports(&self, task: Task) -> bool {
        task == Task::Binary
    }

    fn fit(&self, data: &LabeledDataset) -> Result<LinearFit, LearnerError> {
        if data.task() != Task::Binary {
            return Err(LearnerError::UnsupportedTask {
                learner: self.name(),
                task: data.task(),
            });
        }
        data.require_both_classes()?;
        let x = data.x().matrix();
        let y = data.y();
        let (n, p) = x.shape();
        let nf = n as f64;
        let dim = if self.fit_intercept { p + 1 } else { p };

        let mut w = Vector::zeros(p);
        let mut b = 0.0;
        let mut f = self.objective(x, y, &w, b);
        let mut gnorm = f64::INFINITY;

        for iter in 0..self.max_iterations {
            let (gw, gb) = self.gradient(x, y, &w, b);
            let gb = if self.fit_intercept { gb } else { 0.0 };
            gnorm = (gw.norm_squared() + gb * gb).sqrt();
            if gnorm <= self.tolerance {
                return Ok(LinearFit {
                    weights: w,
                    intercept: b,
                    iterations: iter,
                    gradient_norm: gnorm,
                });
            }

            let margins = x * &w;
            let d = margins.map(|m| {
                let s = sigmoid(m + b);
                s * (1.0 - s) / nf
            });
            let mut h = Matrix::zeros(dim, dim);
            h.view_mut((0, 0), (p, p)).copy_from(&weighted_gram(x, &d));
            for i in 0..p {
                h[(i, i)] += self.lambda;
            }
            let mut g = Vector::zeros(dim);
            g.rows_mut(0, p).copy_from(&gw);
            if self.fit_intercept {
                let hwb = x.tr_mul(&d);
                h.view_mut((0, p), (p, 1)).copy_from(&hwb);
                h.view_mut((p, 0), (1, p)).copy_from(&hwb.transpose());
                h[(p, p)] = d.sum() + 1e-12;
                g[p] = gb;
            }
            let step = Cholesky::new(h)
                .ok_or(LearnerError::SingularSystem { alpha: self.lambda })?
                .solve(&g);

            let slope = g.dot(&step);
            if slope <= 16.0 * f64::EPSILON * f.abs().max(1.0) {
                // The predicted decrease is below what f can resolve, so a
                // line search would only shrink the step. Inside this region
                // the full Newton step is safe.
                w -= step.rows(0, p);
                if self.fit_intercept {
                    b -= step[p];
                }
                f = self.objective(x, y, &w, b);
                continue;
            }
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let w_new = &w - step.rows(0, p) * t;
                let b_new = if self.fit_intercept { b - t * step[p] } else { b };
                let f_new = self.objective(x, y, &w_new, b_new);
                if f_new <= f - 1e-4 * t * slope {
                    w = w_new;
                    b = b_new;
                    f = f_new;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                // At the floating-point floor of the objective; one more
                // gradient check decides.
                let (gw, gb) = self.gradient(x, y, &w, b);
                let gb = if self.fit_intercept { gb } else { 0.0 };
                gnorm = (gw.norm_squared() + gb * gb).sqrt();
                if gnorm <= self.tolerance {
                    return Ok(LinearFit {
                        weights: w,
                        intercept: b,
                        iterations: iter + 1,
                        gradient_norm: gnorm,
                    });
                }
                return Err(LearnerError::NonConvergence {
                    iterations: iter + 1,
                    gradient_norm: gnorm,
                });
            }
        }
        Err(LearnerError::NonConvergence {
            iterations: self.max_iterations,
            gradient_norm: gnorm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::FeatureMatrix;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn dataset(x: Matrix, y: Vec<f64>) -> LabeledDataset {
        LabeledDataset::binary(FeatureMatrix::new(x).unwrap(), Vector::from_vec(y)).unwrap()
    }

    fn noisy(seed: u64, n: usize, p: usize) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let y = (0..n)
            .map(|i| {
                let s = x[(i, 0)] - 0.5 * x[(i, 1)] + 0.8 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
                if s >= 0.0 { 1.0 } else { -1.0 }
            })
            .collect();
        dataset(x, y)
    }

    #[test]
    fn tight_tolerance_is_reached_past_the_objective_floor() {
        let data = noisy(3, 4000, 10);
        let mut l = LogisticRegression::new(1.0);
        l.tolerance = 1e-13;
        let fit = l.fit(&data).unwrap();
        assert!(fit.gradient_norm <= 1e-13);
        assert!(fit.iterations < 20);
    }

    #[test]
    fn symmetric_data_reaches_stationarity() {
        // y flips under x -> -x, so the intercept-free optimum is stationary.
        let x = Matrix::from_row_slice(4, 2, &[1.0, 0.5, -1.0, -0.5, 0.3, 2.0, -0.3, -2.0]);
        let data = dataset(x.clone(), vec![1.0, -1.0, -1.0, 1.0]);
        let mut l = LogisticRegression::new(1.0);
        l.fit_intercept = false;
        let fit = l.fit(&data).unwrap();
        let (g, _) = l.gradient(&x, data.y(), &fit.weights, 0.0);
        assert!(g.norm() <= 1e-8);
    }

    #[test]
    fn scalar_case_matches_bisection() {
        // Every point has yx = 1, so f(w) = log(1 + e^{-w}) + w²/2 and
        // f'(w) = w − σ(−w). Bisection on f' is the oracle.
        let x = Matrix::from_column_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let data = dataset(x, vec![1.0, -1.0, 1.0, -1.0]);
        let mut l = LogisticRegression::new(1.0);
        l.fit_intercept = false;
        let w = l.fit(&data).unwrap().weights[0];

        let dfdw = |w: f64| w - 1.0 / (1.0 + w.exp());
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if dfdw(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert_relative_eq!(w, 0.5 * (lo + hi), epsilon = 1e-9);
        assert_relative_eq!(w, 0.401_058_137_5, epsilon = 1e-9);
    }

    #[test]
    fn fitted_weights_are_a_minimum() {
        let data = noisy(4, 300, 4);
        let l = LogisticRegression::new(0.1);
        let fit = l.fit(&data).unwrap();
        assert!(fit.gradient_norm <= 1e-8);
        let x = data.x().matrix();
        let f0 = l.objective(x, data.y(), &fit.weights, fit.intercept);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let dir = Vector::from_fn(4, |_, _| StandardNormal.sample(&mut rng));
            let w = &fit.weights + dir.normalize() * 1e-3;
            let db: f64 = rng.random_range(-1e-3..1e-3);
            assert!(l.objective(x, data.y(), &w, fit.intercept + db) >= f0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = noisy(12, 50, 3);
        let l = LogisticRegression::new(0.3);
        let x = data.x().matrix();
        let w = Vector::from_vec(vec![0.2, -0.4, 0.1]);
        let b = 0.05;
        let (gw, gb) = l.gradient(x, data.y(), &w, b);
        let h = 1e-6;
        for j in 0..3 {
            let mut wp = w.clone();
            wp[j] += h;
            let mut wm = w.clone();
            wm[j] -= h;
            let fd = (l.objective(x, data.y(), &wp, b) - l.objective(x, data.y(), &wm, b)) / (2.0 * h);
            assert_relative_eq!(gw[j], fd, epsilon = 1e-8);
        }
        let fd = (l.objective(x, data.y(), &w, b + h) - l.objective(x, data.y(), &w, b - h)) / (2.0 * h);
        assert_relative_eq!(gb, fd, epsilon = 1e-8);
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let data = noisy(5, 200, 3);
        let mut l = LogisticRegression::new(1e-3);
        l.max_iterations = 1;
        assert!(matches!(l.fit(&data), Err(LearnerError::NonConvergence { iterations: 1, .. })));
    }

    #[test]
    fn single_class_and_regression_are_rejected() {
        let x = Matrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let l = LogisticRegression::new(1.0);
        assert!(matches!(
            l.fit(&dataset(x.clone(), vec![1.0, 1.0])),
            Err(LearnerError::MissingClass { .. })
        ));
        let reg = LabeledDataset::regression(FeatureMatrix::new(x).unwrap(), Vector::from_vec(vec![0.1, 0.2])).unwrap();
        assert!(matches!(l.fit(&reg), Err(LearnerError::UnsupportedTask { .. })));
    }

    #[test]
    fn blocked_gram_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Matrix::from_fn(5000, 3, |_, _| StandardNormal.sample(&mut rng));
        let d = Vector::from_fn(5000, |i, _| (i % 7) as f64 * 0.1);
        let direct = x.transpose() * Matrix::from_diagonal(&d) * &x;
        let blocked = weighted_gram(&x, &d);
        assert!((direct - blocked).norm() <= 1e-9);
    }
}
