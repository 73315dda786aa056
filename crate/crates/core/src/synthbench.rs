//! Synthetic benchmark with a train/test correlation reversal.
//!
//! Two orthogonal unit directions `w₁*`, `w₂*` carry a bivariate normal
//! latent pair `(t₁, t₂)`; everything orthogonal to them is isotropic noise.
//! Labels are `yⱼ = ε·sign(xᵀwⱼ*)` with an independent flip `ε` per instance
//! and target. Training data has `corr(t₁, t₂) = ρ` and test data `−ρ`, so a
//! classifier for `y₁` that leans on `w₂*` generalizes badly until D4 removes
//! the `y₂` direction.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{d4_fit, d4_transform, D4Config, D4Error};
use crate::learners::{accuracy, classify, LabeledDataset, LearnerError, LearnerSpec};
use crate::linalg::{FeatureMatrix, LinalgError, Matrix, Vector};
use crate::seed::{stream_rng, streams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    D4(#[from] D4Error),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub p: usize,
    pub corr: f64,
    pub std1: f64,
    pub std2: f64,
    /// Probability that a label is flipped.
    pub flip_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::table1(0)
    }
}

impl SynthConfig {
    /// Training configuration of the published experiment.
    pub fn table1(seed: u64) -> Self {
        Self {
            n: 100_000,
            p: 300,
            corr: 0.9,
            std1: 1.0,
            std2: 2.0,
            flip_prob: 0.1,
            seed,
        }
    }

    /// Same as [`table1`](Self::table1) with `n = 20000`.
    pub fn reduced(seed: u64) -> Self {
        Self {
            n: 20_000,
            ..Self::table1(seed)
        }
    }

    /// The matching test configuration: identical except for the sign of the
    /// correlation.
    pub fn reversed(&self) -> Self {
        Self {
            corr: -self.corr,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.p < 2 {
            return bad(format!("p must be at least 2, got {}", self.p));
        }
        if !(self.corr.abs() < 1.0) {
            return bad(format!("correlation must lie in (-1, 1), got {}", self.corr));
        }
        if !(self.std1 > 0.0 && self.std2 > 0.0) || !self.std1.is_finite() || !self.std2.is_finite() {
            return bad(format!(
                "standard deviations must be positive, got {} and {}",
                self.std1, self.std2
            ));
        }
        if !(0.0..0.5).contains(&self.flip_prob) {
            return bad(format!("flip probability must lie in [0, 0.5), got {}", self.flip_prob));
        }
        Ok(())
    }
}

/// The two ground-truth directions.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub w1: Vector,
    pub w2: Vector,
}

impl GroundTruth {
    /// Two random orthonormal directions in `p` dimensions.
    pub fn sample(p: usize, seed: u64) -> Result<Self, SynthError> {
        if p < 2 {
            return Err(SynthError::InvalidConfig(format!("p must be at least 2, got {p}")));
        }
        let mut rng = stream_rng(seed, streams::SYNTH_DIRECTIONS);
        loop {
            let a = Vector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
            let mut b = Vector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
            let w1 = a.normalize();
            // two Gram–Schmidt passes keep |w₁ᵀw₂| at rounding level
            for _ in 0..2 {
                let c = w1.dot(&b);
                b.axpy(-c, &w1, 1.0);
            }
            let norm = b.norm();
            if norm > 1e-8 && a.norm() > 1e-8 {
                return Ok(Self { w1, w2: b / norm });
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub x: FeatureMatrix,
    pub y1: Vector,
    pub y2: Vector,
    pub truth: GroundTruth,
}

impl SynthDataset {
    pub fn task1(&self) -> Result<LabeledDataset, LearnerError> {
        LabeledDataset::binary(self.x.clone(), self.y1.clone())
    }

    pub fn task2(&self) -> Result<LabeledDataset, LearnerError> {
        LabeledDataset::binary(self.x.clone(), self.y2.clone())
    }
}

/// Samples a dataset with fresh directions drawn from `config.seed`.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset, SynthError> {
    config.validate()?;
    let truth = GroundTruth::sample(config.p, config.seed)?;
    generate_with(config, &truth, streams::SYNTH_TRAIN)
}

/// Samples a dataset around given directions, drawing instances from
/// `stream` of `config.seed`.
pub fn generate_with(config: &SynthConfig, truth: &GroundTruth, stream: u64) -> Result<SynthDataset, SynthError> {
    config.validate()?;
    let p = config.p;
    if truth.w1.len() != p || truth.w2.len() != p {
        return Err(LinalgError::DimensionMismatch {
            expected: p,
            found: truth.w1.len(),
        }
        .into());
    }
    let mut rng = stream_rng(config.seed, stream);
    let rho = config.corr;
    let tail = (1.0 - rho * rho).sqrt();
    let mut x = Matrix::zeros(config.n, p);
    let mut y1 = Vector::zeros(config.n);
    let mut y2 = Vector::zeros(config.n);
    let mut g = vec![0.0; p];
    for i in 0..config.n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let t1 = config.std1 * z1;
        let t2 = config.std2 * (rho * z1 + tail * z2);
        for v in g.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let g1: f64 = g.iter().zip(truth.w1.iter()).map(|(a, b)| a * b).sum();
        let g2: f64 = g.iter().zip(truth.w2.iter()).map(|(a, b)| a * b).sum();
        for j in 0..p {
            x[(i, j)] = g[j] + (t1 - g1) * truth.w1[j] + (t2 - g2) * truth.w2[j];
        }
        let e1 = if rng.random::<f64>() < config.flip_prob { -1.0 } else { 1.0 };
        let e2 = if rng.random::<f64>() < config.flip_prob { -1.0 } else { 1.0 };
        y1[i] = e1 * if t1 >= 0.0 { 1.0 } else { -1.0 };
        y2[i] = e2 * if t2 >= 0.0 { 1.0 } else { -1.0 };
    }
    Ok(SynthDataset {
        x: FeatureMatrix::new(x)?,
        y1,
        y2,
        truth: truth.clone(),
    })
}

/// Train/test pair sharing the ground-truth directions of `train`.
pub fn generate_pair(train: &SynthConfig, test: &SynthConfig) -> Result<(SynthDataset, SynthDataset), SynthError> {
    if train.p != test.p {
        return Err(SynthError::InvalidConfig(format!(
            "train and test dimensions differ ({} vs {})",
            train.p, test.p
        )));
    }
    let tr = generate(train)?;
    let te = generate_with(test, &tr.truth, streams::SYNTH_TEST)?;
    Ok((tr, te))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub iteration: usize,
    pub target: String,
    pub train_acc: f64,
    pub test_acc: f64,
    pub load_w1: f64,
    pub load_w2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentTable {
    pub fn get(&self, iteration: usize, target: &str) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.iteration == iteration && r.target == target)
    }
}

fn evaluate(
    iteration: usize,
    target: &str,
    spec: &LearnerSpec,
    (x_train, y_train): (&FeatureMatrix, &Vector),
    (x_test, y_test): (&FeatureMatrix, &Vector),
    truth: &GroundTruth,
) -> Result<ExperimentRow, SynthError> {
    let train = LabeledDataset::binary(x_train.clone(), y_train.clone())?;
    let fit = spec.build()?.fit(&train)?;
    let train_acc = fit.metric(&train)?;
    drop(train);
    let test_pred = classify(&fit.scores(x_test)?);
    let w = &fit.weights;
    let norm = w.norm();
    let (load_w1, load_w2) = if norm > 0.0 {
        (w.dot(&truth.w1) / norm, w.dot(&truth.w2) / norm)
    } else {
        (0.0, 0.0)
    };
    Ok(ExperimentRow {
        iteration,
        target: target.to_string(),
        train_acc,
        test_acc: accuracy(&test_pred, y_test)?,
        load_w1,
        load_w2,
    })
}

/// Generates both sets and runs the before/after comparison.
pub fn run_experiment(train: &SynthConfig, test: &SynthConfig, learner: &LearnerSpec) -> Result<ExperimentTable, SynthError> {
    let (tr, te) = generate_pair(train, test)?;
    run_on(&tr, &te, learner)
}

/// Iteration 0 fits both targets on raw data. Iteration 1 removes one D4
/// direction learned for `y₂` on the training set, applies the same
/// projection to the test set, and refits both targets.
pub fn run_on(train: &SynthDataset, test: &SynthDataset, learner: &LearnerSpec) -> Result<ExperimentTable, SynthError> {
    let truth = &train.truth;
    let mut rows = Vec::with_capacity(4);
    for (target, ytr, yte) in [("y1", &train.y1, &test.y1), ("y2", &train.y2, &test.y2)] {
        rows.push(evaluate(0, target, learner, (&train.x, ytr), (&test.x, yte), truth)?);
    }

    let model = d4_fit(&train.task2()?, &D4Config::new(learner.clone(), 1))?;
    let xtr = FeatureMatrix::new(d4_transform(train.x.matrix(), &model, 1)?.0)?;
    let xte = FeatureMatrix::new(d4_transform(test.x.matrix(), &model, 1)?.0)?;
    for (target, ytr, yte) in [("y1", &train.y1, &test.y1), ("y2", &train.y2, &test.y2)] {
        rows.push(evaluate(1, target, learner, (&xtr, ytr), (&xte, yte), truth)?);
    }
    Ok(ExperimentTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(corr: f64, flip: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            n: 20_000,
            p: 20,
            corr,
            std1: 1.0,
            std2: 2.0,
            flip_prob: flip,
            seed,
        }
    }

    fn sample_corr(a: &Vector, b: &Vector) -> f64 {
        let (ma, mb) = (a.mean(), b.mean());
        let cov: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn std(a: &Vector) -> f64 {
        let m = a.mean();
        (a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (a.len() - 1) as f64).sqrt()
    }

    #[test]
    fn validation() {
        assert!(small(0.9, 0.1, 0).validate().is_ok());
        for bad in [
            SynthConfig { corr: 1.0, ..small(0.0, 0.0, 0) },
            SynthConfig { corr: f64::NAN, ..small(0.0, 0.0, 0) },
            SynthConfig { std1: 0.0, ..small(0.0, 0.0, 0) },
            SynthConfig { flip_prob: 0.5, ..small(0.0, 0.0, 0) },
            SynthConfig { p: 1, ..small(0.0, 0.0, 0) },
            SynthConfig { n: 0, ..small(0.0, 0.0, 0) },
        ] {
            assert!(matches!(bad.validate(), Err(SynthError::InvalidConfig(_))), "{bad:?}");
        }
        let cfg = SynthConfig::table1(3);
        assert_eq!((cfg.n, cfg.p, cfg.corr, cfg.std1, cfg.std2, cfg.flip_prob), (100_000, 300, 0.9, 1.0, 2.0, 0.1));
        assert_eq!(cfg.reversed().corr, -0.9);
        assert_eq!(SynthConfig::reduced(3).n, 20_000);
    }

    #[test]
    fn directions_are_orthonormal() {
        for seed in 0..20 {
            let t = GroundTruth::sample(50, seed).unwrap();
            assert!(t.w1.dot(&t.w2).abs() <= 1e-10);
            assert!((t.w1.norm() - 1.0).abs() <= 1e-12);
            assert!((t.w2.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn independent_noiseless_case() {
        let data = generate(&SynthConfig {
            std2: 1.0,
            ..small(0.0, 0.0, 1)
        })
        .unwrap();
        let x = data.x.matrix();
        let s1 = x * &data.truth.w1;
        let s2 = x * &data.truth.w2;
        assert!(sample_corr(&s1, &s2).abs() <= 0.02);
        assert_eq!(accuracy(&classify(&s1), &data.y1).unwrap(), 1.0);
    }

    #[test]
    fn latent_moments_match_config() {
        let data = generate(&small(0.9, 0.1, 2)).unwrap();
        let x = data.x.matrix();
        let s1 = x * &data.truth.w1;
        let s2 = x * &data.truth.w2;
        assert!((sample_corr(&s1, &s2) - 0.9).abs() <= 0.02);
        assert!((std(&s1) - 1.0).abs() <= 0.02);
        assert!((std(&s2) - 2.0).abs() <= 0.04);

        let agree = accuracy(&classify(&s1), &data.y1).unwrap();
        assert!((agree - 0.9).abs() <= 0.01, "agreement {agree}");

        // noise is confined to the complement with unit variance per axis
        let mut rng = stream_rng(99, 0);
        let mut u = Vector::from_fn(20, |_, _| rng.random::<f64>() - 0.5);
        for w in [&data.truth.w1, &data.truth.w2] {
            let c = u.dot(w);
            u.axpy(-c, w, 1.0);
        }
        let u = u.normalize();
        assert!((std(&(x * u)) - 1.0).abs() <= 0.02);
    }

    #[test]
    fn test_set_reuses_directions() {
        let train = small(0.9, 0.1, 5);
        let (a, b) = generate_pair(&train, &train.reversed()).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_ne!(a.x, b.x);
        let s1 = b.x.matrix() * &b.truth.w1;
        let s2 = b.x.matrix() * &b.truth.w2;
        assert!((sample_corr(&s1, &s2) + 0.9).abs() <= 0.02);
        assert!(generate_pair(&train, &SynthConfig { p: 21, ..train.reversed() }).is_err());
    }

    #[test]
    fn determinism() {
        let cfg = small(0.9, 0.1, 8);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let cfg = SynthConfig { n: 3000, ..cfg };
        let spec = LearnerSpec::logistic(1.0);
        assert_eq!(
            run_experiment(&cfg, &cfg.reversed(), &spec).unwrap(),
            run_experiment(&cfg, &cfg.reversed(), &spec).unwrap()
        );
    }

    #[test]
    fn no_correlation_means_no_reversal() {
        let cfg = SynthConfig { p: 50, ..small(0.0, 0.1, 4) };
        let table = run_experiment(&cfg, &cfg.reversed(), &LearnerSpec::logistic(1.0)).unwrap();
        assert!(table.get(0, "y1").unwrap().test_acc >= 0.8);
    }

    #[test]
    fn reversal_and_rescue_at_small_scale() {
        let cfg = SynthConfig { p: 50, ..small(0.9, 0.1, 6) };
        let t = run_experiment(&cfg, &cfg.reversed(), &LearnerSpec::logistic(1.0)).unwrap();
        let (a, b) = (t.get(0, "y1").unwrap(), t.get(1, "y1").unwrap());
        assert!(a.train_acc > 0.75 && a.test_acc < 0.4, "{a:?}");
        assert!(b.test_acc > 0.75, "{b:?}");
        assert!(t.get(1, "y2").unwrap().test_acc < 0.4);
        assert!(a.load_w2.abs() > a.load_w1.abs());
        assert!(b.load_w1.abs() > b.load_w2.abs());
    }
}
