//! Word-list documents.
//!
//! Two layouts are accepted. Sectioned text:
//!
//! ```text
//! # comments and blank lines are ignored
//! [masculine]
//! he
//! man
//! [feminine]
//! she
//! woman
//! [pairs]
//! she he
//! ```
//!
//! or a JSON object of named arrays, e.g. `{"masculine": ["he"], "pairs": [["she", "he"]]}`.
//! A string member `name` is kept as the document name. Text without any
//! section header is a single set called `words`.

use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::EmbedError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WordSets {
    pub name: Option<String>,
    pub sets: IndexMap<String, Vec<String>>,
}

impl WordSets {
    /// Set by name, ignoring ASCII case.
    pub fn get(&self, name: &str) -> Option<&Vec<String>> {
        self.sets
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v)
    }

    fn first_of(&self, names: &[&str]) -> Option<&Vec<String>> {
        names.iter().find_map(|n| self.get(n))
    }

    /// Every word of every set, in document order.
    pub fn all_words(&self) -> Vec<String> {
        self.sets.values().flatten().cloned().collect()
    }
}

pub fn parse_word_sets(text: &str) -> Result<WordSets, EmbedError> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_sections(text)
    }
}

pub fn read_word_sets(path: &Path) -> Result<WordSets, EmbedError> {
    let text = std::fs::read_to_string(path).map_err(|source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut sets = parse_word_sets(&text)?;
    if sets.name.is_none() {
        sets.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    Ok(sets)
}

fn parse_sections(text: &str) -> Result<WordSets, EmbedError> {
    let mut out = WordSets::default();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| EmbedError::WordList(format!("line {}: bad section header `{line}`", i + 1)))?;
            if out.sets.contains_key(name) {
                return Err(EmbedError::WordList(format!("line {}: section `{name}` repeated", i + 1)));
            }
            out.sets.insert(name.to_string(), Vec::new());
            current = Some(name.to_string());
            continue;
        }
        let key = current.get_or_insert_with(|| "words".to_string()).clone();
        let entry = line.split_whitespace().collect::<Vec<_>>().join(" ");
        out.sets.entry(key).or_default().push(entry);
    }
    Ok(out)
}

fn parse_json(text: &str) -> Result<WordSets, EmbedError> {
    let value: Value = serde_json::from_str(text).map_err(|e| EmbedError::WordList(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(EmbedError::WordList("top level must be an object".into()));
    };
    let mut out = WordSets::default();
    for (key, v) in map {
        match v {
            Value::String(s) if key == "name" => out.name = Some(s),
            Value::Array(items) => {
                let words = items
                    .into_iter()
                    .map(|item| match item {
                        Value::String(s) => Ok(s),
                        Value::Array(pair) => pair
                            .into_iter()
                            .map(|p| match p {
                                Value::String(s) => Ok(s),
                                other => Err(EmbedError::WordList(format!("`{key}`: expected a word, got {other}"))),
                            })
                            .collect::<Result<Vec<_>, _>>()
                            .map(|ws| ws.join(" ")),
                        other => Err(EmbedError::WordList(format!("`{key}`: expected a word, got {other}"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                out.sets.insert(key, words);
            }
            other => {
                return Err(EmbedError::WordList(format!("`{key}` must be an array of words, got {other}")));
            }
        }
    }
    Ok(out)
}

/// Gendered word lists and definitional pairs `(feminine, masculine)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderLexicon {
    pub masculine: Vec<String>,
    pub feminine: Vec<String>,
    pub pairs: Vec<(String, String)>,
}

impl GenderLexicon {
    pub fn new(masculine: Vec<String>, feminine: Vec<String>, pairs: Vec<(String, String)>) -> Result<Self, EmbedError> {
        let m: HashSet<&String> = masculine.iter().collect();
        if let Some(w) = feminine.iter().find(|w| m.contains(w)) {
            return Err(EmbedError::WordList(format!("`{w}` is listed as both masculine and feminine")));
        }
        Ok(Self {
            masculine,
            feminine,
            pairs,
        })
    }

    /// Reads the `masculine` / `feminine` (or `male` / `female`) sets and an
    /// optional `pairs` set of `feminine masculine` entries.
    pub fn from_sets(sets: &WordSets) -> Result<Self, EmbedError> {
        let masculine = sets
            .first_of(&["masculine", "male"])
            .ok_or_else(|| EmbedError::WordList("missing `masculine` set".into()))?
            .clone();
        let feminine = sets
            .first_of(&["feminine", "female"])
            .ok_or_else(|| EmbedError::WordList("missing `feminine` set".into()))?
            .clone();
        let pairs = match sets.get("pairs") {
            Some(entries) => entries
                .iter()
                .map(|e| {
                    let ws: Vec<&str> = e.split_whitespace().collect();
                    match ws.as_slice() {
                        [f, m] => Ok((f.to_string(), m.to_string())),
                        _ => Err(EmbedError::WordList(format!("pair `{e}` must hold exactly two words"))),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
        };
        Self::new(masculine, feminine, pairs)
    }
}

/// Targets `X`, `Y` and attributes `A`, `B` of an association test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatSpec {
    pub name: String,
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub a: Vec<String>,
    pub b: Vec<String>,
}

impl WeatSpec {
    pub fn new(name: impl Into<String>, x: Vec<String>, y: Vec<String>, a: Vec<String>, b: Vec<String>) -> Result<Self, EmbedError> {
        for (label, set) in [("X", &x), ("Y", &y), ("A", &a), ("B", &b)] {
            if set.is_empty() {
                return Err(EmbedError::WordList(format!("set {label} is empty")));
            }
        }
        Ok(Self {
            name: name.into(),
            x,
            y,
            a,
            b,
        })
    }

    /// Sets `X`, `Y`, `A`, `B` (case-insensitive).
    pub fn from_sets(sets: &WordSets) -> Result<Self, EmbedError> {
        let get = |k: &str| {
            sets.get(k)
                .cloned()
                .ok_or_else(|| EmbedError::WordList(format!("missing set `{k}`")))
        };
        Self::new(
            sets.name.clone().unwrap_or_else(|| "weat".into()),
            get("X")?,
            get("Y")?,
            get("A")?,
            get("B")?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sectioned_text() {
        let s = parse_word_sets("# lexicon\n[masculine]\nhe\nman\n\n[feminine]\nshe\n[pairs]\nshe   he\n").unwrap();
        let lex = GenderLexicon::from_sets(&s).unwrap();
        assert_eq!(lex.masculine, vec!["he", "man"]);
        assert_eq!(lex.feminine, vec!["she"]);
        assert_eq!(lex.pairs, vec![("she".to_string(), "he".to_string())]);
    }

    #[test]
    fn json_document() {
        let s = parse_word_sets(r#"{"name": "t", "X": ["a"], "Y": ["b"], "A": ["c"], "b": ["d", "e"]}"#).unwrap();
        let w = WeatSpec::from_sets(&s).unwrap();
        assert_eq!(w.name, "t");
        assert_eq!(w.b, vec!["d", "e"]);
        let s = parse_word_sets(r#"{"male": ["he"], "female": ["she"], "pairs": [["she", "he"]]}"#).unwrap();
        assert_eq!(GenderLexicon::from_sets(&s).unwrap().pairs.len(), 1);
    }

    #[test]
    fn plain_list_is_one_set() {
        let s = parse_word_sets("nurse\nengineer\n").unwrap();
        assert_eq!(s.all_words(), vec!["nurse", "engineer"]);
        assert_eq!(s.get("words").unwrap().len(), 2);
    }

    #[test]
    fn invalid_documents() {
        assert!(parse_word_sets("[a\nx\n").is_err());
        assert!(parse_word_sets("[a]\n[a]\n").is_err());
        assert!(parse_word_sets("{\"a\": 3}").is_err());
        assert!(parse_word_sets("{not json").is_err());
        let both = parse_word_sets("[masculine]\nx\n[feminine]\nx\n").unwrap();
        assert!(GenderLexicon::from_sets(&both).is_err());
        let bad_pair = parse_word_sets("[masculine]\nx\n[feminine]\ny\n[pairs]\nx\n").unwrap();
        assert!(GenderLexicon::from_sets(&bad_pair).is_err());
        let empty = parse_word_sets("[X]\n[Y]\ny\n[A]\na\n[B]\nb\n").unwrap();
        assert!(WeatSpec::from_sets(&empty).is_err());
    }
}
