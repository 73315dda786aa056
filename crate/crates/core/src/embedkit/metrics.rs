use serde::{Deserialize, Serialize};

use crate::decompose::{d4_fit, d4_transform, D4Config, D4Model, StopReason};
use crate::learners::{cluster_label_accuracy, cross_validate, cross_validate_kernel, kmeans2, KernelSpec, LabeledDataset, LearnerSpec};
use crate::linalg::{normalize, FeatureMatrix, LinalgError, Matrix, OrthonormalBasis, Vector};

use super::{EmbedError, EmbeddingSet, GenderLexicon, WeatSpec};

fn row(emb: &EmbeddingSet, word: &str) -> Result<Vector, EmbedError> {
    let i = emb.index_of(word).ok_or_else(|| EmbedError::MissingWord(word.to_string()))?;
    Ok(emb.vectors().row(i).transpose())
}

fn check_direction(emb: &EmbeddingSet, direction: &Vector) -> Result<(), EmbedError> {
    if direction.len() != emb.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: emb.dim(),
            found: direction.len(),
        }
        .into());
    }
    Ok(())
}

fn check_same_vocab(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<(), EmbedError> {
    if !a.same_vocabulary(b) {
        return Err(EmbedError::Incompatible("reference embedding has a different vocabulary".into()));
    }
    Ok(())
}

/// Descending by score, ties by index.
fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

fn unit_rows(m: &Matrix) -> Matrix {
    let mut m = m.clone();
    for mut r in m.row_iter_mut() {
        let n = r.norm();
        if n > 0.0 {
            r /= n;
        }
    }
    m
}

/// `normalize(v_first − v_second)`.
pub fn gender_direction(emb: &EmbeddingSet, pair: (&str, &str)) -> Result<Vector, EmbedError> {
    Ok(normalize(&(row(emb, pair.0)? - row(emb, pair.1)?))?)
}

/// Output of [`debias`].
#[derive(Debug, Clone)]
pub struct Debiased {
    pub embedding: EmbeddingSet,
    pub model: D4Model,
    /// Lexicon words absent from the vocabulary.
    pub missing: Vec<String>,
    pub masculine_found: usize,
    pub feminine_found: usize,
}

/// Labeled lexicon rows (masculine −1, feminine +1) plus missing words.
fn lexicon_data(emb: &EmbeddingSet, lex: &GenderLexicon, normalize_rows: bool) -> Result<(LabeledDataset, Vec<String>, usize, usize), EmbedError> {
    let (m_idx, mut missing) = emb.lookup(&lex.masculine);
    let (f_idx, f_missing) = emb.lookup(&lex.feminine);
    missing.extend(f_missing);
    if m_idx.is_empty() {
        return Err(EmbedError::EmptyClass("masculine".into()));
    }
    if f_idx.is_empty() {
        return Err(EmbedError::EmptyClass("feminine".into()));
    }
    let idx: Vec<usize> = m_idx.iter().chain(&f_idx).copied().collect();
    let mut x = emb.rows(&idx);
    if normalize_rows {
        x = unit_rows(&x);
    }
    let y = Vector::from_fn(idx.len(), |i, _| if i < m_idx.len() { -1.0 } else { 1.0 });
    let data = LabeledDataset::binary(FeatureMatrix::new(x)?, y)?;
    Ok((data, missing, m_idx.len(), f_idx.len()))
}

/// Fits D4 on the lexicon words and removes the learned directions from
/// every vector. With `normalize_fit` the directions are learned on
/// unit-length lexicon vectors; the projection is always applied to the
/// vectors as given. Zero iterations return the embedding unchanged.
pub fn debias(emb: &EmbeddingSet, lex: &GenderLexicon, config: &D4Config, normalize_fit: bool) -> Result<Debiased, EmbedError> {
    let (data, missing, masculine_found, feminine_found) = lexicon_data(emb, lex, normalize_fit)?;
    let model = if config.max_iterations == 0 {
        D4Model::new(OrthonormalBasis::empty(emb.dim()), vec![], StopReason::Completed)
    } else {
        d4_fit(&data, config)?
    };
    let embedding = if model.is_empty() {
        emb.clone()
    } else {
        apply_model(emb, &model, model.len())?
    };
    Ok(Debiased {
        embedding,
        model,
        missing,
        masculine_found,
        feminine_found,
    })
}

/// Removes the first `k` model directions from every vector.
pub fn apply_model(emb: &EmbeddingSet, model: &D4Model, k: usize) -> Result<EmbeddingSet, EmbedError> {
    let (perp, _) = d4_transform(emb.vectors(), model, k)?;
    emb.with_vectors(perp)
}

/// Cross-validated accuracy of `probe` on the lexicon after removing the
/// first `k` directions, for `k = 0..=model.len()`. Lexicon rows are taken
/// the same way [`debias`] takes them for fitting.
pub fn lexicon_probe_trajectory(
    emb: &EmbeddingSet,
    lex: &GenderLexicon,
    model: &D4Model,
    probe: &LearnerSpec,
    folds: usize,
    seed: u64,
    normalize_fit: bool,
) -> Result<Vec<f64>, EmbedError> {
    let (data, ..) = lexicon_data(emb, lex, normalize_fit)?;
    let learner = probe.build()?;
    (0..=model.len())
        .map(|k| {
            let (perp, _) = d4_transform(data.x().matrix(), model, k)?;
            Ok(cross_validate(&data.with_features(perp)?, learner.as_ref(), folds, seed)?.metric)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub accuracy: f64,
    pub per_fold: Vec<f64>,
    pub masculine_found: usize,
    pub feminine_found: usize,
    pub missing: Vec<String>,
}

/// Stratified k-fold accuracy of a kernel ridge probe predicting gender
/// from lexicon vectors.
pub fn recoverability_probe(
    emb: &EmbeddingSet,
    lex: &GenderLexicon,
    kernel: &KernelSpec,
    folds: usize,
    seed: u64,
    ridge: f64,
) -> Result<ProbeResult, EmbedError> {
    let (data, missing, masculine_found, feminine_found) = lexicon_data(emb, lex, false)?;
    let x = data.x().matrix();
    let k = kernel.resolve(x)?.gram(x);
    let cv = cross_validate_kernel(&k, data.y(), ridge, folds, seed)?;
    Ok(ProbeResult {
        accuracy: cv.metric,
        per_fold: cv.per_fold,
        masculine_found,
        feminine_found,
        missing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeWord {
    pub word: String,
    pub dot: f64,
    /// +1 for the top extreme, −1 for the bottom.
    pub side: i8,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighbourBias {
    pub accuracy: f64,
    pub extremes: Vec<ExtremeWord>,
}

/// Takes the `n_extreme` words at each end of `direction` (ranked on
/// `ranking`, usually the original embedding), clusters their vectors in
/// `emb` into two groups and scores how well clusters match the two ends.
pub fn bias_by_neighbour(
    emb: &EmbeddingSet,
    ranking: &EmbeddingSet,
    direction: &Vector,
    n_extreme: usize,
    seed: u64,
) -> Result<NeighbourBias, EmbedError> {
    check_same_vocab(emb, ranking)?;
    check_direction(ranking, direction)?;
    let needed = 2 * n_extreme.max(1);
    if emb.len() < needed {
        return Err(EmbedError::InsufficientVocabulary {
            needed,
            available: emb.len(),
        });
    }
    let dots: Vec<f64> = (ranking.vectors() * direction).iter().copied().collect();
    let order = rank_desc(&dots);
    let picked: Vec<usize> = order[..n_extreme].iter().chain(&order[order.len() - n_extreme..]).copied().collect();
    let sides = Vector::from_fn(picked.len(), |i, _| if i < n_extreme { 1.0 } else { -1.0 });
    let clusters = kmeans2(&emb.rows(&picked), seed)?;
    let accuracy = cluster_label_accuracy(&clusters.assignment, &sides)?;
    let extremes = picked
        .iter()
        .zip(&clusters.assignment)
        .enumerate()
        .map(|(i, (&w, &c))| ExtremeWord {
            word: emb.word(w).unwrap_or_default().to_string(),
            dot: dots[w],
            side: if i < n_extreme { 1 } else { -1 },
            cluster: c,
        })
        .collect();
    Ok(NeighbourBias { accuracy, extremes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfessionRecord {
    pub word: String,
    pub dot: f64,
    pub masculine: bool,
    pub masculine_neighbours: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfessionReport {
    pub records: Vec<ProfessionRecord>,
    pub missing: Vec<String>,
}

/// For each profession, the number of masculine-biased professions among
/// its `k` nearest profession neighbours (cosine, self excluded). A
/// profession is masculine-biased when its vector in `labels_from` has a
/// positive dot product with `direction`.
pub fn profession_neighbour_counts(
    emb: &EmbeddingSet,
    labels_from: &EmbeddingSet,
    professions: &[String],
    direction: &Vector,
    k: usize,
) -> Result<ProfessionReport, EmbedError> {
    check_same_vocab(emb, labels_from)?;
    check_direction(labels_from, direction)?;
    let (found, missing) = emb.lookup(professions);
    let mut idx = Vec::with_capacity(found.len());
    for i in found {
        if !idx.contains(&i) {
            idx.push(i);
        }
    }
    if idx.is_empty() {
        return Err(EmbedError::InsufficientProfessions);
    }
    let dots = labels_from.rows(&idx) * direction;
    let masculine: Vec<bool> = dots.iter().map(|&d| d > 0.0).collect();
    let units = unit_rows(&emb.rows(&idx));
    let sims = &units * units.transpose();
    let records = (0..idx.len())
        .map(|i| {
            let mut others: Vec<usize> = (0..idx.len()).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| sims[(i, b)].total_cmp(&sims[(i, a)]).then(idx[a].cmp(&idx[b])));
            let count = others.iter().take(k).filter(|&&j| masculine[j]).count();
            ProfessionRecord {
                word: emb.word(idx[i]).unwrap_or_default().to_string(),
                dot: dots[i],
                masculine: masculine[i],
                masculine_neighbours: count,
            }
        })
        .collect();
    Ok(ProfessionReport { records, missing })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatScore {
    pub word: String,
    pub set: String,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatResult {
    pub effect_size: f64,
    pub mean_diff: f64,
    pub scores: Vec<WeatScore>,
    pub missing: Vec<String>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Cosine association test. Positive effect size: `X` leans toward `A`.
pub fn weat(emb: &EmbeddingSet, spec: &WeatSpec) -> Result<WeatResult, EmbedError> {
    let mut missing = Vec::new();
    let mut sets = Vec::with_capacity(4);
    for (label, words) in [("X", &spec.x), ("Y", &spec.y), ("A", &spec.a), ("B", &spec.b)] {
        let (idx, miss) = emb.lookup(words);
        missing.extend(miss);
        if idx.is_empty() {
            return Err(EmbedError::EmptySetAfterLookup(label.into()));
        }
        sets.push(idx);
    }
    let units = unit_rows(emb.vectors());
    let cos = |i: usize, j: usize| units.row(i).dot(&units.row(j));
    let s = |w: usize| {
        mean(&sets[2].iter().map(|&a| cos(w, a)).collect::<Vec<_>>())
            - mean(&sets[3].iter().map(|&b| cos(w, b)).collect::<Vec<_>>())
    };
    let sx: Vec<f64> = sets[0].iter().map(|&w| s(w)).collect();
    let sy: Vec<f64> = sets[1].iter().map(|&w| s(w)).collect();
    let mean_diff = mean(&sx) - mean(&sy);
    let all: Vec<f64> = sx.iter().chain(&sy).copied().collect();
    let m = mean(&all);
    let std = (all.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (all.len() - 1) as f64).sqrt();
    let effect_size = if std > 0.0 {
        mean_diff / std
    } else if mean_diff == 0.0 {
        0.0
    } else {
        return Err(EmbedError::ZeroVariance);
    };
    let mut scores = Vec::with_capacity(all.len());
    for (label, idx, vals) in [("X", &sets[0], &sx), ("Y", &sets[1], &sy)] {
        for (&w, &v) in idx.iter().zip(vals.iter()) {
            scores.push(WeatScore {
                word: emb.word(w).unwrap_or_default().to_string(),
                set: label.into(),
                s: v,
            });
        }
    }
    Ok(WeatResult {
        effect_size,
        mean_diff,
        scores,
        missing,
    })
}

/// The `k` most cosine-similar words to `word`, self excluded, ties by
/// vocabulary order.
pub fn nearest_neighbours(emb: &EmbeddingSet, word: &str, k: usize) -> Result<Vec<(String, f64)>, EmbedError> {
    let i = emb.index_of(word).ok_or_else(|| EmbedError::MissingWord(word.to_string()))?;
    if k == 0 {
        return Ok(Vec::new());
    }
    let v = emb.vectors().row(i);
    let vn = v.norm();
    let sims: Vec<f64> = emb
        .vectors()
        .row_iter()
        .map(|r| {
            let d = r.norm() * vn;
            if d > 0.0 {
                r.dot(&v) / d
            } else {
                0.0
            }
        })
        .collect();
    Ok(rank_desc(&sims)
        .into_iter()
        .filter(|&j| j != i)
        .take(k)
        .map(|j| (emb.word(j).unwrap_or_default().to_string(), sims[j]))
        .collect())
}
