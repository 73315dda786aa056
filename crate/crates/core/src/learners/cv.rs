//! k-fold cross-validation for learners and kernel probes.

use rand::seq::SliceRandom;

use crate::linalg::{Matrix, Vector};
use crate::seed::{stream_rng, streams};

use super::{
    accuracy, classify, fit_kernel_ridge_probe, mean_absolute_error, LabeledDataset, Learner,
    LearnerError, Task,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CvSummary {
    /// Pooled over all held-out predictions: accuracy, or MAE for regression.
    pub metric: f64,
    pub per_fold: Vec<f64>,
}

/// Fold index per sample. For ±1 labels each class is shuffled and dealt
/// round-robin, so every fold sees both classes in proportion.
pub fn stratified_folds(y: &Vector, folds: usize, seed: u64) -> Result<Vec<usize>, LearnerError> {
    if folds < 2 || folds > y.len() {
        return Err(LearnerError::InvalidParameter(format!(
            "need 2 <= folds <= n, got {folds} folds for {} samples",
            y.len()
        )));
    }
    let mut rng = stream_rng(seed, streams::CV_FOLDS);
    let binary = y.iter().all(|&v| v == 1.0 || v == -1.0);
    let groups: Vec<Vec<usize>> = if binary {
        vec![
            (0..y.len()).filter(|&i| y[i] < 0.0).collect(),
            (0..y.len()).filter(|&i| y[i] > 0.0).collect(),
        ]
    } else {
        vec![(0..y.len()).collect()]
    };
    let mut assignment = vec![0; y.len()];
    let mut next = 0;
    for mut g in groups {
        g.shuffle(&mut rng);
        for i in g {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

fn split(assignment: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, &f) in assignment.iter().enumerate() {
        if f == fold {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

fn gather(v: &Vector, idx: &[usize]) -> Vector {
    Vector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Cross-validated metric of `learner` on `data`.
pub fn cross_validate(
    data: &LabeledDataset,
    learner: &dyn Learner,
    folds: usize,
    seed: u64,
) -> Result<CvSummary, LearnerError> {
    let assignment = stratified_folds(data.y(), folds, seed)?;
    let mut pred = Vector::zeros(data.len());
    let mut per_fold = Vec::with_capacity(folds);
    for fold in 0..folds {
        let (train, test) = split(&assignment, fold);
        let fit = learner.fit(&data.subset(&train)?)?;
        let x_test = data.x().select_rows(&test);
        let mut scores = fit.scores(&x_test)?;
        if data.task() == Task::Binary {
            scores = classify(&scores);
        }
        let y_test = gather(data.y(), &test);
        per_fold.push(match data.task() {
            Task::Binary => accuracy(&scores, &y_test)?,
            Task::Regression => mean_absolute_error(&scores, &y_test)?,
        });
        for (k, &i) in test.iter().enumerate() {
            pred[i] = scores[k];
        }
    }
    let metric = match data.task() {
        Task::Binary => accuracy(&pred, data.y())?,
        Task::Regression => mean_absolute_error(&pred, data.y())?,
    };
    Ok(CvSummary { metric, per_fold })
}

/// Cross-validated accuracy of the kernel ridge probe on a precomputed
/// kernel matrix.
pub fn cross_validate_kernel(
    k: &Matrix,
    y: &Vector,
    alpha: f64,
    folds: usize,
    seed: u64,
) -> Result<CvSummary, LearnerError> {
    super::kernel::check_symmetric(k)?;
    if k.nrows() != y.len() {
        return Err(LearnerError::LengthMismatch {
            expected: k.nrows(),
            found: y.len(),
        });
    }
    let assignment = stratified_folds(y, folds, seed)?;
    let mut pred = Vector::zeros(y.len());
    let mut per_fold = Vec::with_capacity(folds);
    for fold in 0..folds {
        let (train, test) = split(&assignment, fold);
        let k_train = k.select_rows(&train).select_columns(&train);
        let dual = fit_kernel_ridge_probe(&k_train, &gather(y, &train), alpha)?;
        let k_test = k.select_rows(&test).select_columns(&train);
        let p = super::predict_kernel(&k_test, &dual)?;
        per_fold.push(accuracy(&p, &gather(y, &test))?);
        for (j, &i) in test.iter().enumerate() {
            pred[i] = p[j];
        }
    }
    Ok(CvSummary {
        metric: accuracy(&pred, y)?,
        per_fold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::RidgeLeastSquares;
    use crate::linalg::FeatureMatrix;

    #[test]
    fn folds_are_stratified_and_deterministic() {
        let y = Vector::from_fn(100, |i, _| if i < 30 { 1.0 } else { -1.0 });
        let a = stratified_folds(&y, 5, 3).unwrap();
        assert_eq!(a, stratified_folds(&y, 5, 3).unwrap());
        for f in 0..5 {
            let pos = (0..100).filter(|&i| a[i] == f && y[i] > 0.0).count();
            let all = a.iter().filter(|&&x| x == f).count();
            assert_eq!(all, 20);
            assert_eq!(pos, 6);
        }
        assert!(stratified_folds(&y, 1, 0).is_err());
    }

    #[test]
    fn zeroed_features_give_majority_baseline() {
        let y = Vector::from_fn(60, |i, _| if i % 3 == 0 { 1.0 } else { -1.0 });
        let data = LabeledDataset::binary(FeatureMatrix::new(Matrix::zeros(60, 4)).unwrap(), y).unwrap();
        let learner = RidgeLeastSquares::new(1.0, true);
        let cv = cross_validate(&data, &learner, 5, 0).unwrap();
        assert!((cv.metric - 2.0 / 3.0).abs() < 1e-12);

        let k = Matrix::zeros(60, 60);
        // Zero kernel predicts score 0 → +1 everywhere: accuracy is the +1 share.
        let cv = cross_validate_kernel(&k, data.y(), 1.0, 5, 0).unwrap();
        assert!((cv.metric - 1.0 / 3.0).abs() < 1e-12);
    }
}
