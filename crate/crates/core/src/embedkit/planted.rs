//! Synthetic embedding with a known gender direction.
//!
//! Every vector is `b + t·u` where `u` is a hidden unit direction and `b` is
//! Gaussian noise orthogonal to `u`. Lexicon words sit at `t = ∓offset`,
//! neutral words at `t = ±U(0.5, 1)·offset`. `he` and `she` are exactly
//! `∓offset·u`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::linalg::{normalize, Matrix, Vector};
use crate::seed::{stream_rng, streams};

use super::{EmbedError, EmbeddingSet, GenderLexicon, WeatSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub dim: usize,
    /// Per-coordinate standard deviation of the orthogonal part.
    pub noise: f64,
    pub offset: f64,
    /// Lexicon words per gender, including `he` / `she`.
    pub gendered: usize,
    pub neutral: usize,
    /// Professions per gender, drawn from the neutral words.
    pub professions: usize,
    /// Size of each association target and attribute set.
    pub weat_size: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            dim: 50,
            noise: 0.25,
            offset: 0.75,
            gendered: 200,
            neutral: 1000,
            professions: 20,
            weat_size: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedEmbedding {
    pub embedding: EmbeddingSet,
    pub lexicon: GenderLexicon,
    /// Alternating masculine- and feminine-leaning neutral words.
    pub professions: Vec<String>,
    /// Mirrored neutral targets against lexicon attributes.
    pub weat: WeatSpec,
    /// The hidden direction, pointing toward feminine.
    pub direction: Vector,
}

pub fn planted_embedding(cfg: &PlantedConfig) -> Result<PlantedEmbedding, EmbedError> {
    let fixed = 2 * cfg.professions + 2 * cfg.weat_size;
    if cfg.dim < 2 || cfg.gendered < cfg.weat_size + 1 || cfg.weat_size == 0 || cfg.neutral < fixed {
        return Err(EmbedError::Incompatible(format!("planted fixture cannot be built from {cfg:?}")));
    }
    let mut rng = stream_rng(cfg.seed, streams::PLANTED);
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| EmbedError::Incompatible(e.to_string()))?;
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let u = normalize(&Vector::from_fn(cfg.dim, |_, _| std.sample(&mut rng)))?;
    let base = |rng: &mut rand_chacha::ChaCha8Rng| {
        let b = Vector::from_fn(cfg.dim, |_, _| noise.sample(rng));
        &b - &u * u.dot(&b)
    };

    let mut words = Vec::new();
    let mut rows: Vec<Vector> = Vec::new();
    let mut masculine = Vec::new();
    let mut feminine = Vec::new();
    for (name, sign, list) in [("he", -1.0, &mut masculine), ("she", 1.0, &mut feminine)] {
        words.push(name.to_string());
        rows.push(&u * (sign * cfg.offset));
        list.push(name.to_string());
    }
    for i in 1..cfg.gendered {
        for (prefix, sign, list) in [("m", -1.0, &mut masculine), ("f", 1.0, &mut feminine)] {
            let w = format!("{prefix}{i:03}");
            rows.push(base(&mut rng) + &u * (sign * cfg.offset));
            words.push(w.clone());
            list.push(w);
        }
    }

    let lean = |rng: &mut rand_chacha::ChaCha8Rng| cfg.offset * rng.random_range(0.5..=1.0);
    let mut professions = Vec::with_capacity(2 * cfg.professions);
    for i in 0..2 * cfg.professions {
        let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
        let w = format!("prof{i:02}");
        rows.push(base(&mut rng) + &u * (sign * lean(&mut rng)));
        words.push(w.clone());
        professions.push(w);
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in 0..cfg.weat_size {
        let b = base(&mut rng);
        let t = lean(&mut rng);
        for (prefix, sign, list) in [("x", -1.0, &mut x), ("y", 1.0, &mut y)] {
            let w = format!("{prefix}{i}");
            rows.push(&b + &u * (sign * t));
            words.push(w.clone());
            list.push(w);
        }
    }
    for i in 0..cfg.neutral - fixed {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        rows.push(base(&mut rng) + &u * (sign * lean(&mut rng)));
        words.push(format!("w{i:04}"));
    }

    let vectors = Matrix::from_fn(rows.len(), cfg.dim, |i, j| rows[i][j]);
    let weat = WeatSpec::new(
        "planted",
        x,
        y,
        masculine[1..=cfg.weat_size].to_vec(),
        feminine[1..=cfg.weat_size].to_vec(),
    )?;
    let pairs = feminine.iter().cloned().zip(masculine.iter().cloned()).collect();
    Ok(PlantedEmbedding {
        embedding: EmbeddingSet::new(words, vectors)?,
        lexicon: GenderLexicon::new(masculine, feminine, pairs)?,
        professions,
        weat,
        direction: u,
    })
}
