//! The D4 iteration: learn a decision direction, remove it, repeat.
//!
//! Two interchangeable ways of feeding the learner are supported:
//!
//! - [`Mode::Projector`] fits on `X Ω⁽ⁱ⁻¹⁾` (full width, rank deficient),
//!   with `Ω` updated in place after every direction.
//! - [`Mode::FullRank`] fits on `X P_Ω`, an `n × (p − i + 1)` matrix whose
//!   columns are an orthonormal basis of the remaining complement, and lifts
//!   the learned weights back with `w = P_Ω w̃`.
//!
//! For learners that are invariant to orthonormal reparameterization of the
//! inputs (ridge is) both modes produce the same basis.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{
    majority_baseline, mean_absolute_error, registry, LabeledDataset, Learner, LearnerError,
    LearnerSpec, Task,
};
use crate::linalg::{
    complete_basis, normalize, project_rows_orthogonal, LinalgError, Matrix, OrthonormalBasis,
    Projector, Vector,
};
use crate::seed::{stream_rng, streams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum D4Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("k = {k} exceeds the {available} directions in the model")]
    KOutOfRange { k: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Projector,
    FullRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum StoppingRule {
    /// Run exactly `max_iterations` (unless the basis degenerates first).
    #[default]
    Fixed,
    /// Stop once the validation probe sits within `tolerance` of the
    /// majority baseline for `patience` consecutive iterations.
    ProbeConvergence {
        tolerance: f64,
        patience: usize,
        validation_fraction: f64,
    },
}

impl StoppingRule {
    pub fn probe_convergence_default() -> Self {
        StoppingRule::ProbeConvergence {
            tolerance: 0.02,
            patience: 2,
            validation_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct D4Config {
    pub learner: LearnerSpec,
    pub max_iterations: usize,
    pub mode: Mode,
    pub stopping: StoppingRule,
    pub seed: u64,
}

impl D4Config {
    pub fn new(learner: LearnerSpec, max_iterations: usize) -> Self {
        Self {
            learner,
            max_iterations,
            mode: Mode::Projector,
            stopping: StoppingRule::Fixed,
            seed: 0,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_stopping(mut self, stopping: StoppingRule) -> Self {
        self.stopping = stopping;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, p: usize) -> Result<(), D4Error> {
        if self.max_iterations == 0 || self.max_iterations > p {
            return Err(D4Error::InvalidConfig(format!(
                "max iterations must be in 1..={p}, got {}",
                self.max_iterations
            )));
        }
        if let StoppingRule::ProbeConvergence {
            tolerance,
            patience,
            validation_fraction,
        } = self.stopping
        {
            if !(tolerance > 0.0) {
                return Err(D4Error::InvalidConfig("convergence tolerance must be positive".into()));
            }
            if patience == 0 {
                return Err(D4Error::InvalidConfig("patience must be at least 1".into()));
            }
            if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
                return Err(D4Error::InvalidConfig(format!(
                    "validation fraction must be in (0, 1), got {validation_fraction}"
                )));
            }
        }
        self.learner.validate()?;
        Ok(())
    }
}

/// Per-direction record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    /// 1-based index of the direction.
    pub iteration: usize,
    /// Training accuracy (binary) or MAE (regression) of the fit that
    /// produced this direction.
    pub train_metric: f64,
    pub validation_metric: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Completed,
    Converged,
    LinearlyDependent,
    ZeroDirection,
    BasisFull,
}

#[derive(Debug, Clone, PartialEq)]
pub struct D4Model {
    pub basis: OrthonormalBasis,
    pub diagnostics: Vec<IterationDiagnostics>,
    pub stop_reason: StopReason,
}

impl D4Model {
    pub fn new(basis: OrthonormalBasis, diagnostics: Vec<IterationDiagnostics>, stop_reason: StopReason) -> Self {
        Self {
            basis,
            diagnostics,
            stop_reason,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    fn prefix(&self, k: usize) -> Result<OrthonormalBasis, D4Error> {
        if k > self.basis.len() {
            return Err(D4Error::KOutOfRange {
                k,
                available: self.basis.len(),
            });
        }
        Ok(self.basis.truncated(k))
    }
}

/// How close a held-out metric is to the trivial predictor.
fn near_baseline(task: Task, metric: f64, y: &Vector, tolerance: f64) -> bool {
    match task {
        Task::Binary => metric - majority_baseline(y) <= tolerance,
        Task::Regression => {
            let mean = y.mean();
            let base = mean_absolute_error(&Vector::from_element(y.len(), mean), y).unwrap_or(0.0);
            base <= 0.0 || (base - metric) / base <= tolerance
        }
    }
}

fn validation_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), D4Error> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, streams::VALIDATION_SPLIT));
    let n_val = ((n as f64) * fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(D4Error::InvalidConfig(format!(
            "validation fraction {fraction} leaves an empty split of {n} rows"
        )));
    }
    let mut val = idx[..n_val].to_vec();
    let mut fit = idx[n_val..].to_vec();
    val.sort_unstable();
    fit.sort_unstable();
    Ok((fit, val))
}

/// Runs D4 with the learner named in `config`, resolved through the
/// built-in registry.
pub fn d4_fit(data: &LabeledDataset, config: &D4Config) -> Result<D4Model, D4Error> {
    config.validate(data.dim())?;
    let learner = registry().build(&config.learner)?;
    d4_fit_with(data, config, learner.as_ref())
}

/// Runs D4 with an explicit learner.
pub fn d4_fit_with(data: &LabeledDataset, config: &D4Config, learner: &dyn Learner) -> Result<D4Model, D4Error> {
    let p = data.dim();
    config.validate(p)?;
    if !learner.supports(data.task()) {
        return Err(LearnerError::UnsupportedTask {
            learner: learner.name(),
            task: data.task(),
        }
        .into());
    }

    let (fit_data, validation) = match config.stopping {
        StoppingRule::Fixed => (data.clone(), None),
        StoppingRule::ProbeConvergence {
            validation_fraction, ..
        } => {
            let (fit_idx, val_idx) = validation_split(data.len(), validation_fraction, config.seed)?;
            (data.subset(&fit_idx)?, Some(data.subset(&val_idx)?))
        }
    };
    let x = fit_data.x().matrix();

    let mut basis = OrthonormalBasis::empty(p);
    let mut projector = Projector::identity(p);
    let mut diagnostics = Vec::new();
    let mut stop_reason = StopReason::Completed;
    let mut streak = 0;

    for iteration in 1..=config.max_iterations {
        if basis.len() == p {
            stop_reason = StopReason::BasisFull;
            break;
        }
        let (fit, train_view, val_view, lift) = match config.mode {
            Mode::Projector => {
                let xp = projector.apply_rows(x)?;
                let train = fit_data.with_features(xp)?;
                let val = match &validation {
                    Some(v) => Some(v.with_features(projector.apply_rows(v.x().matrix())?)?),
                    None => None,
                };
                (learner.fit(&train)?, train, val, None)
            }
            Mode::FullRank => {
                let completion = complete_basis(&basis)?;
                let cols = completion.columns;
                let train = fit_data.with_features(x * &cols)?;
                let val = match &validation {
                    Some(v) => Some(v.with_features(v.x().matrix() * &cols)?),
                    None => None,
                };
                (learner.fit(&train)?, train, val, Some(cols))
            }
        };

        let train_metric = fit.metric(&train_view)?;
        let validation_metric = match &val_view {
            Some(v) => Some(fit.metric(v)?),
            None => None,
        };

        let w = match &lift {
            Some(cols) => cols * &fit.weights,
            None => fit.weights.clone(),
        };
        let w = match normalize(&w) {
            Ok(w) => w,
            Err(_) => {
                stop_reason = StopReason::ZeroDirection;
                break;
            }
        };
        let omega = match basis.push(&w) {
            Ok(o) => o.clone(),
            Err(LinalgError::LinearlyDependent { .. }) => {
                stop_reason = StopReason::LinearlyDependent;
                break;
            }
            Err(LinalgError::BasisFull { .. }) => {
                stop_reason = StopReason::BasisFull;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        projector.remove(&omega)?;
        diagnostics.push(IterationDiagnostics {
            iteration,
            train_metric,
            validation_metric,
        });

        if let (
            StoppingRule::ProbeConvergence {
                tolerance, patience, ..
            },
            Some(v),
            Some(m),
        ) = (&config.stopping, &validation, validation_metric)
        {
            if near_baseline(data.task(), m, v.y(), *tolerance) {
                streak += 1;
                if streak >= *patience {
                    stop_reason = StopReason::Converged;
                    break;
                }
            } else {
                streak = 0;
            }
        }
    }

    Ok(D4Model {
        basis,
        diagnostics,
        stop_reason,
    })
}

/// `(X_⊥, X_∥)` after removing the first `k` directions of the model.
pub fn d4_transform(x: &Matrix, model: &D4Model, k: usize) -> Result<(Matrix, Matrix), D4Error> {
    let basis = model.prefix(k)?;
    let perp = project_rows_orthogonal(x, &basis)?;
    let par = x - &perp;
    Ok((perp, par))
}

/// Rank-reduced equivalent of `X_⊥`: `X P_Ω` with `P_Ω` completing the first
/// `k` directions. When `k = p` the result is `n × 0` if `allow_empty`,
/// otherwise [`LinalgError::BasisFull`].
pub fn d4_reduce(x: &Matrix, model: &D4Model, k: usize, allow_empty: bool) -> Result<Matrix, D4Error> {
    let basis = model.prefix(k)?;
    if x.ncols() != basis.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: basis.dim(),
            found: x.ncols(),
        }
        .into());
    }
    if k == basis.dim() {
        if allow_empty {
            return Ok(Matrix::zeros(x.nrows(), 0));
        }
        return Err(LinalgError::BasisFull { dim: basis.dim() }.into());
    }
    let completion = complete_basis(&basis)?;
    Ok(x * completion.columns)
}

/// One row of a probe trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    /// Number of directions removed.
    pub k: usize,
    pub train_metric: f64,
    pub heldout_metric: Option<f64>,
}

/// Refits `probe` on the data with `k = 0..=len` directions removed and
/// reports its training (and optionally held-out) metric.
pub fn probe_trajectory(
    data: &LabeledDataset,
    model: &D4Model,
    probe: &LearnerSpec,
    heldout: Option<&LabeledDataset>,
) -> Result<Vec<ProbePoint>, D4Error> {
    let learner = registry().build(probe)?;
    if data.dim() != model.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: model.dim(),
            found: data.dim(),
        }
        .into());
    }
    if let Some(h) = heldout {
        if h.dim() != model.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: model.dim(),
                found: h.dim(),
            }
            .into());
        }
    }
    let mut out = Vec::with_capacity(model.len() + 1);
    for k in 0..=model.len() {
        let (train_x, _) = d4_transform(data.x(), model, k)?;
        let train = data.with_features(train_x)?;
        let fit = learner.fit(&train)?;
        let heldout_metric = match heldout {
            Some(h) => {
                let (hx, _) = d4_transform(h.x(), model, k)?;
                Some(fit.metric(&h.with_features(hx)?)?)
            }
            None => None,
        };
        out.push(ProbePoint {
            k,
            train_metric: fit.metric(&train)?,
            heldout_metric,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{cross_validate, LinearFit};
    use crate::linalg::{max_abs, FeatureMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Matrix {
        Matrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
    }

    fn labels_along(x: &Matrix, dir: &Vector) -> Vector {
        (x * dir).map(|s| if s >= 0.0 { 1.0 } else { -1.0 })
    }

    fn binary(x: Matrix, y: Vector) -> LabeledDataset {
        LabeledDataset::binary(FeatureMatrix::new(x).unwrap(), y).unwrap()
    }

    #[test]
    fn one_dimensional_data_is_fully_removed() {
        let x = Matrix::from_column_slice(4, 1, &[-2.0, -1.0, 1.0, 2.0]);
        let y = Vector::from_vec(vec![-1.0, -1.0, 1.0, 1.0]);
        let model = d4_fit(&binary(x.clone(), y), &D4Config::new(LearnerSpec::ridge(1.0), 1)).unwrap();
        assert_eq!(model.basis.vectors()[0].as_slice().len(), 1);
        assert_eq!(model.basis.vectors()[0][0].abs(), 1.0);
        let (perp, par) = d4_transform(&x, &model, 1).unwrap();
        assert!(max_abs(&perp) < 1e-15);
        assert_eq!(par, x);
    }

    #[test]
    fn first_direction_finds_generative_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 2000;
        let mut y = Vec::with_capacity(n);
        let x = Matrix::from_fn(n, 2, |i, j| {
            if j == 0 {
                y.push(if i % 2 == 0 { 1.0 } else { -1.0 });
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            z + if j == 0 { 2.0 * y[i] } else { 0.0 }
        });
        let data = binary(x.clone(), Vector::from_vec(y));
        let model = d4_fit(&data, &D4Config::new(LearnerSpec::ridge(1.0), 1)).unwrap();
        let angle = model.basis.vectors()[0][0].abs().acos().to_degrees();
        assert!(angle < 5.0, "angle {angle}");

        let (perp, _) = d4_transform(&x, &model, 1).unwrap();
        let probe = LearnerSpec::ridge(1.0).build().unwrap();
        let cv = cross_validate(&data.with_features(perp).unwrap(), probe.as_ref(), 5, 0).unwrap();
        assert!(cv.metric <= 0.55, "probe accuracy {}", cv.metric);
    }

    #[test]
    fn transform_edge_cases_and_errors() {
        let x = Matrix::from_row_slice(4, 3, &[1., 0., 1., 0., 1., 1., 1., 0., 0., 0., 1., 0.]);
        let e3 = OrthonormalBasis::from_vectors(3, vec![Vector::from_vec(vec![0., 0., 1.])]).unwrap();
        let model = D4Model::new(e3, vec![], StopReason::Completed);
        let (perp, par) = d4_transform(&x, &model, 0).unwrap();
        assert_eq!(perp, x);
        assert_eq!(par, Matrix::zeros(4, 3));
        let (perp, _) = d4_transform(&x, &model, 1).unwrap();
        assert_eq!(perp, Matrix::from_row_slice(4, 3, &[1., 0., 0., 0., 1., 0., 1., 0., 0., 0., 1., 0.]));
        assert!(matches!(d4_transform(&x, &model, 2), Err(D4Error::KOutOfRange { k: 2, available: 1 })));
        assert!(matches!(
            d4_transform(&Matrix::zeros(2, 2), &model, 1),
            Err(D4Error::Linalg(LinalgError::DimensionMismatch { .. }))
        ));

        // reduced form of the worked example: Gram equals that of X_⊥
        let reduced = d4_reduce(&x, &model, 1, false).unwrap();
        assert_eq!(reduced.shape(), (4, 2));
        assert!(max_abs(&(&reduced * reduced.transpose() - &perp * perp.transpose())) <= 1e-8);
    }

    #[test]
    fn full_basis_transform_and_reduce() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian(&mut rng, 6, 3);
        let mut basis = OrthonormalBasis::empty(3);
        while basis.len() < 3 {
            let _ = basis.push(&Vector::from_fn(3, |_, _| StandardNormal.sample(&mut rng)));
        }
        let model = D4Model::new(basis, vec![], StopReason::Completed);
        let (perp, par) = d4_transform(&x, &model, 3).unwrap();
        assert!(max_abs(&perp) <= 1e-12);
        assert!(max_abs(&(par - &x)) <= 1e-12);
        assert_eq!(d4_reduce(&x, &model, 3, true).unwrap().shape(), (6, 0));
        assert!(matches!(
            d4_reduce(&x, &model, 3, false),
            Err(D4Error::Linalg(LinalgError::BasisFull { .. }))
        ));
        let rot = d4_reduce(&x, &model, 0, false).unwrap();
        assert!(max_abs(&(&rot * rot.transpose() - &x * x.transpose())) <= 1e-10);
    }

    #[test]
    fn config_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = gaussian(&mut rng, 10, 3);
        let y = labels_along(&x, &Vector::from_vec(vec![1., 0., 0.]));
        let data = binary(x, y);
        for bad in [0, 4] {
            assert!(matches!(
                d4_fit(&data, &D4Config::new(LearnerSpec::ridge(1.0), bad)),
                Err(D4Error::InvalidConfig(_))
            ));
        }
        let cfg = D4Config::new(LearnerSpec::ridge(1.0), 2).with_stopping(StoppingRule::ProbeConvergence {
            tolerance: 0.02,
            patience: 2,
            validation_fraction: 1.0,
        });
        assert!(matches!(d4_fit(&data, &cfg), Err(D4Error::InvalidConfig(_))));
    }

    #[test]
    fn zero_direction_stops_with_status() {
        #[derive(Debug)]
        struct Zero;
        impl Learner for Zero {
            fn name(&self) -> &'static str {
                "zero"
            }
            fn supports(&self, _: Task) -> bool {
                true
            }
            fn fit(&self, data: &LabeledDataset) -> Result<LinearFit, LearnerError> {
                Ok(LinearFit {
                    weights: Vector::zeros(data.dim()),
                    intercept: 0.0,
                    iterations: 0,
                    gradient_norm: 0.0,
                })
            }
        }
        let x = Matrix::identity(3, 3);
        let data = binary(x, Vector::from_vec(vec![1.0, -1.0, 1.0]));
        let model = d4_fit_with(&data, &D4Config::new(LearnerSpec::ridge(1.0), 2), &Zero).unwrap();
        assert!(model.is_empty());
        assert_eq!(model.stop_reason, StopReason::ZeroDirection);
    }

    #[test]
    fn probe_convergence_stops_early() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = gaussian(&mut rng, 1000, 10);
        let y = labels_along(&x, &Vector::from_fn(10, |i, _| if i == 0 { 1.0 } else { 0.0 }));
        let cfg = D4Config::new(LearnerSpec::ridge(1.0), 10)
            .with_stopping(StoppingRule::probe_convergence_default())
            .with_seed(4);
        let model = d4_fit(&binary(x, y), &cfg).unwrap();
        assert_eq!(model.stop_reason, StopReason::Converged);
        assert!(model.len() < 10);
        assert!(model.diagnostics.iter().all(|d| d.validation_metric.is_some()));
    }

    #[test]
    fn regression_targets_use_mae() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = gaussian(&mut rng, 300, 5);
        let y = Vector::from_fn(300, |i, _| 3.0 * x[(i, 1)] + 0.1 * rng.random::<f64>());
        let data = LabeledDataset::regression(FeatureMatrix::new(x).unwrap(), y).unwrap();
        let model = d4_fit(&data, &D4Config::new(LearnerSpec::ridge(1.0), 2)).unwrap();
        assert!(model.basis.vectors()[0][1].abs() > 0.99);
        let traj = probe_trajectory(&data, &model, &LearnerSpec::ridge(1.0), None).unwrap();
        assert!(traj[0].train_metric < 0.1);
        assert!(traj[1].train_metric > 1.5);
        assert!(matches!(
            d4_fit(&data, &D4Config::new(LearnerSpec::logistic(1.0), 1)),
            Err(D4Error::Learner(LearnerError::UnsupportedTask { .. }))
        ));
    }

    #[test]
    fn trajectory_on_separable_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = gaussian(&mut rng, 1500, 6);
        let dir = Vector::from_vec(vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let y = labels_along(&x, &dir);
        let data = binary(x.clone(), y.clone());
        let model = d4_fit(&data, &D4Config::new(LearnerSpec::ridge(1.0), 3)).unwrap();
        let traj = probe_trajectory(&data, &model, &LearnerSpec::ridge(1.0), None).unwrap();
        assert_eq!(traj.len(), 4);

        let direct = LearnerSpec::ridge(1.0).build().unwrap().fit(&data).unwrap().metric(&data).unwrap();
        assert_eq!(traj[0].train_metric, direct);
        let baseline = majority_baseline(&y);
        assert!(traj.last().unwrap().train_metric - baseline <= 0.02 + 0.02);

        // a target along an orthogonal direction is left alone
        let other = labels_along(&x, &Vector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]));
        let other_data = binary(x, other);
        let traj_other = probe_trajectory(&other_data, &model, &LearnerSpec::ridge(1.0), None).unwrap();
        let first = traj_other[0].train_metric;
        assert!(traj_other[..2].iter().all(|pt| (pt.train_metric - first).abs() <= 0.03));
    }

    fn frob(m: &Matrix) -> f64 {
        m.norm()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn properties_of_a_fitted_model(seed in any::<u64>(), p in 3usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 40;
            let x = gaussian(&mut rng, n, p);
            let dir = Vector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
            let y = labels_along(&x, &dir);
            prop_assume!(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0));
            let data = binary(x.clone(), y);
            let model = d4_fit(&data, &D4Config::new(LearnerSpec::ridge(0.5), p)).unwrap();
            prop_assume!(model.len() == p);

            // orthonormal basis
            let b = model.basis.to_columns();
            prop_assert!(max_abs(&(b.transpose() * &b - Matrix::identity(p, p))) <= 1e-8);

            // monotone removal, rank p − k, idempotent transform
            let mut prev = f64::INFINITY;
            for k in 0..=p {
                let (perp, _) = d4_transform(&x, &model, k).unwrap();
                let norm = frob(&perp);
                prop_assert!(norm <= prev + 1e-9);
                prev = norm;
                let rank = perp.clone().svd(false, false).rank(1e-9 * frob(&x));
                prop_assert_eq!(rank, p - k);
                let (again, par) = d4_transform(&perp, &model, k).unwrap();
                prop_assert!(max_abs(&(again - &perp)) <= 1e-10 * max_abs(&x));
                prop_assert!(max_abs(&par) <= 1e-10 * max_abs(&x));
            }
            prop_assert!(prev <= 1e-10 * frob(&x));

            // fresh probe on X_⊥ has no component along removed directions
            for k in 1..p {
                let (perp, _) = d4_transform(&x, &model, k).unwrap();
                for spec in [LearnerSpec::ridge(0.5), LearnerSpec::logistic(1.0)] {
                    let w = spec.build().unwrap().fit(&data.with_features(perp.clone()).unwrap()).unwrap().weights;
                    let wn = w.norm();
                    if wn > 1e-12 {
                        for omega in &model.basis.vectors()[..k] {
                            prop_assert!(omega.dot(&w).abs() / wn <= 1e-6);
                        }
                    }
                }
            }
        }

        #[test]
        fn projector_and_full_rank_modes_agree(seed in any::<u64>(), p in 2usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = gaussian(&mut rng, 50, p);
            let dir = Vector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
            let y = labels_along(&x, &dir);
            prop_assume!(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0));
            let data = binary(x, y);
            let k = p - 1;
            let cfg = D4Config::new(LearnerSpec::ridge(1.0), k);
            let a = d4_fit(&data, &cfg).unwrap();
            let b = d4_fit(&data, &cfg.clone().with_mode(Mode::FullRank)).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (u, v) in a.basis.vectors().iter().zip(b.basis.vectors()) {
                let angle = u.dot(v).abs().min(1.0).acos();
                prop_assert!(angle <= 1e-6, "angle {}", angle);
            }
        }

        #[test]
        fn reduce_is_rotation_of_transform(seed in any::<u64>(), p in 3usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = gaussian(&mut rng, 12, p);
            let mut basis = OrthonormalBasis::empty(p);
            while basis.len() < 2 {
                let _ = basis.push(&Vector::from_fn(p, |_, _| StandardNormal.sample(&mut rng)));
            }
            let model = D4Model::new(basis, vec![], StopReason::Completed);
            let (perp, _) = d4_transform(&x, &model, 2).unwrap();
            let red = d4_reduce(&x, &model, 2, false).unwrap();
            prop_assert_eq!(red.ncols(), p - 2);
            prop_assert!(max_abs(&(&red * red.transpose() - &perp * perp.transpose())) <= 1e-8);
        }
    }
}
