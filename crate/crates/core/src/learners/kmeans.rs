//! Two-cluster k-means.

use rand::Rng;

use crate::linalg::{Matrix, Vector};
use crate::seed::{stream_rng, streams};

use super::LearnerError;

const RESTARTS: usize = 10;
const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOutcome {
    /// Cluster index (0 or 1) per point. The cluster holding point 0 is 0.
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares.
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k = 2, k-means++ seeding and ten restarts; the
/// lowest-inertia run wins (first one on ties).
pub fn kmeans2(points: &Matrix, seed: u64) -> Result<KMeansOutcome, LearnerError> {
    let n = points.nrows();
    if n < 2 {
        return Err(LearnerError::InvalidParameter(format!(
            "k-means needs at least two points, got {n}"
        )));
    }
    let rows: Vec<Vec<f64>> = points.row_iter().map(|r| r.iter().copied().collect()).collect();
    if rows.iter().all(|r| r == &rows[0]) {
        return Err(LearnerError::DegenerateData);
    }

    let mut rng = stream_rng(seed, streams::KMEANS);
    let mut best: Option<KMeansOutcome> = None;
    for _ in 0..RESTARTS {
        let run = lloyd(&rows, seed_centers(&rows, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart");
    if best.assignment[0] == 1 {
        for a in &mut best.assignment {
            *a = 1 - *a;
        }
    }
    Ok(best)
}

fn seed_centers(rows: &[Vec<f64>], rng: &mut impl Rng) -> [Vec<f64>; 2] {
    let first = rows[rng.random_range(0..rows.len())].clone();
    let d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &first)).collect();
    let total: f64 = d2.iter().sum();
    let mut target = rng.random::<f64>() * total;
    let mut pick = rows.len() - 1;
    for (i, d) in d2.iter().enumerate() {
        if *d > 0.0 && target < *d {
            pick = i;
            break;
        }
        target -= d;
    }
    // Guard against landing on a duplicate of the first center through
    // rounding in the running subtraction.
    if d2[pick] == 0.0 {
        pick = d2
            .iter()
            .enumerate()
            .fold(0, |bi, (i, d)| if *d > d2[bi] { i } else { bi });
    }
    [first, rows[pick].clone()]
}

fn lloyd(rows: &[Vec<f64>], mut centers: [Vec<f64>; 2]) -> KMeansOutcome {
    let n = rows.len();
    let dim = rows[0].len();
    let mut assignment = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, r) in rows.iter().enumerate() {
            let c = if sq_dist(r, &centers[1]) < sq_dist(r, &centers[0]) { 1 } else { 0 };
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = [vec![0.0; dim], vec![0.0; dim]];
        let mut counts = [0usize; 2];
        for (r, &c) in rows.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(r) {
                *s += v;
            }
        }
        for c in 0..2 {
            if counts[c] == 0 {
                // Empty cluster: move it to the point farthest from the other center.
                let other = &centers[1 - c];
                let far = (0..n).fold(0, |bi, i| {
                    if sq_dist(&rows[i], other) > sq_dist(&rows[bi], other) { i } else { bi }
                });
                centers[c] = rows[far].clone();
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = rows
        .iter()
        .zip(&assignment)
        .map(|(r, &c)| sq_dist(r, &centers[c]))
        .sum();
    KMeansOutcome {
        assignment,
        inertia,
    }
}

/// Agreement between a two-cluster assignment and ±1 labels, maximized over
/// the two ways of matching clusters to labels.
pub fn cluster_label_accuracy(assignment: &[usize], labels: &Vector) -> Result<f64, LearnerError> {
    if assignment.len() != labels.len() {
        return Err(LearnerError::LengthMismatch {
            expected: labels.len(),
            found: assignment.len(),
        });
    }
    if labels.is_empty() {
        return Ok(1.0);
    }
    let agree = assignment
        .iter()
        .zip(labels.iter())
        .filter(|(&a, &l)| (a == 1) == (l > 0.0))
        .count() as f64
        / labels.len() as f64;
    Ok(agree.max(1.0 - agree))
}
