//! Word embeddings: loading, D4 debiasing and bias metrics.

mod io;
mod metrics;
pub mod planted;
mod wordlists;

use indexmap::IndexSet;
use thiserror::Error;

use crate::decompose::D4Error;
use crate::learners::LearnerError;
use crate::linalg::{LinalgError, Matrix};

pub use io::{load_embeddings, save_embeddings, write_embeddings, BinaryLayout, EmbeddingFormat, LoadReport, LoadedEmbedding};
pub use metrics::{
    apply_model, bias_by_neighbour, debias, gender_direction, lexicon_probe_trajectory, nearest_neighbours,
    profession_neighbour_counts, recoverability_probe, weat, Debiased, ExtremeWord, NeighbourBias,
    ProfessionRecord, ProfessionReport, ProbeResult, WeatResult, WeatScore,
};
pub use wordlists::{parse_word_sets, read_word_sets, GenderLexicon, WeatSpec, WordSets};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("record {index} is truncated{}", word.as_ref().map(|w| format!(" (word `{w}`)")).unwrap_or_default())]
    TruncatedRecord { index: usize, word: Option<String> },
    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("duplicate word `{word}` at rows {first} and {duplicate}")]
    DuplicateWord { word: String, first: usize, duplicate: usize },
    #[error("word `{0}` is not in the vocabulary")]
    MissingWord(String),
    #[error("no {0} words were found in the vocabulary")]
    EmptyClass(String),
    #[error("set `{0}` is empty after vocabulary lookup")]
    EmptySetAfterLookup(String),
    #[error("need at least {needed} words, vocabulary has {available}")]
    InsufficientVocabulary { needed: usize, available: usize },
    #[error("none of the profession words were found in the vocabulary")]
    InsufficientProfessions,
    #[error("association scores have zero variance")]
    ZeroVariance,
    #[error("word list: {0}")]
    WordList(String),
    #[error("embeddings disagree: {0}")]
    Incompatible(String),
    #[error(transparent)]
    D4(#[from] D4Error),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Ordered, duplicate-free vocabulary with one vector per word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    vocab: IndexSet<String>,
    vectors: Matrix,
    normalized: bool,
}

impl EmbeddingSet {
    pub fn new(words: Vec<String>, vectors: Matrix) -> Result<Self, EmbedError> {
        if words.len() != vectors.nrows() {
            return Err(LinalgError::DimensionMismatch {
                expected: words.len(),
                found: vectors.nrows(),
            }
            .into());
        }
        if let Some(((row, col), _)) = vectors.iter().enumerate().map(|(i, v)| ((i % vectors.nrows(), i / vectors.nrows()), v)).find(|(_, v)| !v.is_finite()) {
            return Err(LinalgError::NonFinite { row, col }.into());
        }
        let mut vocab = IndexSet::with_capacity(words.len());
        for (i, w) in words.into_iter().enumerate() {
            if let Some(first) = vocab.get_index_of(&w) {
                return Err(EmbedError::DuplicateWord {
                    word: w,
                    first,
                    duplicate: i,
                });
            }
            vocab.insert(w);
        }
        Ok(Self {
            vocab,
            vectors,
            normalized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn words(&self) -> impl ExactSizeIterator<Item = &str> {
        self.vocab.iter().map(String::as_str)
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        self.vocab.get_index(index).map(String::as_str)
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.vocab.get_index_of(word)
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Copy with every non-zero row scaled to unit length.
    pub fn normalized(&self) -> Self {
        let mut vectors = self.vectors.clone();
        for mut row in vectors.row_iter_mut() {
            let n = row.norm();
            if n > 0.0 {
                row /= n;
            }
        }
        Self {
            vocab: self.vocab.clone(),
            vectors,
            normalized: true,
        }
    }

    /// Same vocabulary, new vectors.
    pub fn with_vectors(&self, vectors: Matrix) -> Result<Self, EmbedError> {
        if vectors.nrows() != self.len() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.len(),
                found: vectors.nrows(),
            }
            .into());
        }
        Ok(Self {
            vocab: self.vocab.clone(),
            vectors,
            normalized: false,
        })
    }

    /// The first `n` words.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            vocab: self.vocab.iter().take(n).cloned().collect(),
            vectors: self.vectors.rows(0, n).into_owned(),
            normalized: self.normalized,
        }
    }

    /// Indices of the words found, in input order, plus the missing words.
    pub fn lookup<S: AsRef<str>>(&self, words: &[S]) -> (Vec<usize>, Vec<String>) {
        let mut found = Vec::new();
        let mut missing = Vec::new();
        for w in words {
            match self.index_of(w.as_ref()) {
                Some(i) => found.push(i),
                None => missing.push(w.as_ref().to_string()),
            }
        }
        (found, missing)
    }

    pub fn rows(&self, indices: &[usize]) -> Matrix {
        self.vectors.select_rows(indices)
    }

    pub(crate) fn same_vocabulary(&self, other: &Self) -> bool {
        self.vocab == other.vocab
    }
}
