//! word2vec binary and plain-text embedding files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

use super::{EmbedError, EmbeddingSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingFormat {
    Word2VecBinary,
    Text,
}

/// Byte layout details needed to write a binary file back unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinaryLayout {
    /// Whether each record ends with a `\n` byte.
    pub newline_after_record: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoadReport {
    /// Rows dropped because the word appeared earlier (row index, word).
    pub duplicates: Vec<(usize, String)>,
    pub layout: BinaryLayout,
    /// Whether a text file started with a `count dim` header line.
    pub text_header: bool,
}

#[derive(Debug, Clone)]
pub struct LoadedEmbedding {
    pub embedding: EmbeddingSet,
    pub report: LoadReport,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> EmbedError + '_ {
    move |source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads an embedding file. `limit` keeps only the first `limit` records.
pub fn load_embeddings(path: &Path, format: EmbeddingFormat, limit: Option<usize>) -> Result<LoadedEmbedding, EmbedError> {
    let file = File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    match format {
        EmbeddingFormat::Word2VecBinary => read_binary(reader, limit),
        EmbeddingFormat::Text => read_text(reader, limit),
    }
}

struct Collector {
    words: Vec<String>,
    data: Vec<f64>,
    duplicates: Vec<(usize, String)>,
    seen: std::collections::HashSet<String>,
    row: usize,
}

impl Collector {
    fn new() -> Self {
        Self {
            words: Vec::new(),
            data: Vec::new(),
            duplicates: Vec::new(),
            seen: Default::default(),
            row: 0,
        }
    }

    fn push(&mut self, word: String, values: impl IntoIterator<Item = f64>) {
        if self.seen.contains(&word) {
            self.duplicates.push((self.row, word));
        } else {
            self.seen.insert(word.clone());
            self.words.push(word);
            self.data.extend(values);
        }
        self.row += 1;
    }

    fn finish(self, dim: usize) -> Result<(EmbeddingSet, Vec<(usize, String)>), EmbedError> {
        let n = self.words.len();
        let vectors = Matrix::from_row_slice(n, dim, &self.data);
        Ok((EmbeddingSet::new(self.words, vectors)?, self.duplicates))
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_whitespace();
    let n = it.next()?.parse().ok()?;
    let d = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some((n, d))
}

fn read_binary<R: BufRead>(mut r: R, limit: Option<usize>) -> Result<LoadedEmbedding, EmbedError> {
    let mut header = Vec::new();
    r.read_until(b'\n', &mut header)
        .map_err(|e| EmbedError::MalformedHeader(e.to_string()))?;
    let header_text = String::from_utf8_lossy(&header);
    if !header.ends_with(b"\n") {
        return Err(EmbedError::MalformedHeader(format!("`{}` is not newline-terminated", header_text.trim_end())));
    }
    let (n, dim) = parse_header(header_text.trim_end())
        .ok_or_else(|| EmbedError::MalformedHeader(format!("expected `<count> <dim>`, got `{}`", header_text.trim_end())))?;
    if dim == 0 {
        return Err(EmbedError::MalformedHeader("dimension must be positive".into()));
    }
    let take = limit.map_or(n, |l| l.min(n));
    let mut out = Collector::new();
    let mut layout = BinaryLayout::default();
    let mut values = vec![0f32; dim];
    let mut word = Vec::new();
    for index in 0..take {
        word.clear();
        // word bytes up to a single space; stray newlines between records are skipped
        loop {
            let mut b = [0u8];
            match r.read(&mut b) {
                Ok(0) => return Err(EmbedError::TruncatedRecord { index, word: None }),
                Ok(_) => {}
                Err(_) => return Err(EmbedError::TruncatedRecord { index, word: None }),
            }
            match b[0] {
                b' ' => break,
                b'\n' if word.is_empty() => continue,
                c => word.push(c),
            }
        }
        let text = String::from_utf8(word.clone()).map_err(|_| EmbedError::MalformedRecord {
            line: index + 1,
            message: "word is not valid UTF-8".into(),
        })?;
        if r.read_f32_into::<LittleEndian>(&mut values).is_err() {
            return Err(EmbedError::TruncatedRecord { index, word: Some(text) });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::MalformedRecord {
                line: index + 1,
                message: format!("component {bad} of `{text}` is not finite"),
            });
        }
        if index == 0 {
            layout.newline_after_record = r.fill_buf().map(|b| b.first() == Some(&b'\n')).unwrap_or(false);
        }
        if layout.newline_after_record {
            let next = r.fill_buf().map(|b| b.first().copied()).unwrap_or(None);
            if next == Some(b'\n') {
                r.consume(1);
            }
        }
        out.push(text, values.iter().map(|&v| v as f64));
    }
    let (embedding, duplicates) = out.finish(dim)?;
    Ok(LoadedEmbedding {
        embedding,
        report: LoadReport {
            duplicates,
            layout,
            text_header: false,
        },
    })
}

fn read_text<R: BufRead>(r: R, limit: Option<usize>) -> Result<LoadedEmbedding, EmbedError> {
    let mut out = Collector::new();
    let mut dim: Option<usize> = None;
    let mut text_header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| EmbedError::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            if let Some((_, d)) = parse_header(&line) {
                dim = Some(d);
                text_header = true;
                continue;
            }
        }
        if limit.is_some_and(|l| out.row >= l) {
            break;
        }
        let mut tokens = line.split_whitespace();
        let word = tokens.next().unwrap_or_default().to_string();
        let values = tokens
            .map(|t| {
                t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| EmbedError::MalformedRecord {
                    line: i + 1,
                    message: format!("`{t}` is not a finite number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        match dim {
            None if values.is_empty() => {
                return Err(EmbedError::MalformedRecord {
                    line: i + 1,
                    message: "no vector components".into(),
                })
            }
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(EmbedError::MalformedRecord {
                    line: i + 1,
                    message: format!("expected {d} components, found {}", values.len()),
                })
            }
            Some(_) => {}
        }
        out.push(word, values);
    }
    let dim = dim.ok_or_else(|| EmbedError::MalformedHeader("file holds no vectors".into()))?;
    let (embedding, duplicates) = out.finish(dim)?;
    Ok(LoadedEmbedding {
        embedding,
        report: LoadReport {
            duplicates,
            layout: BinaryLayout::default(),
            text_header,
        },
    })
}

/// Writes `emb` to any writer. Binary output stores single precision.
pub fn write_embeddings<W: Write>(
    emb: &EmbeddingSet,
    format: EmbeddingFormat,
    layout: BinaryLayout,
    mut w: W,
) -> std::io::Result<()> {
    match format {
        EmbeddingFormat::Word2VecBinary => {
            write!(w, "{} {}\n", emb.len(), emb.dim())?;
            for (i, word) in emb.words().enumerate() {
                w.write_all(word.as_bytes())?;
                w.write_all(b" ")?;
                for v in emb.vectors().row(i).iter() {
                    w.write_f32::<LittleEndian>(*v as f32)?;
                }
                if layout.newline_after_record {
                    w.write_all(b"\n")?;
                }
            }
        }
        EmbeddingFormat::Text => {
            writeln!(w, "{} {}", emb.len(), emb.dim())?;
            for (i, word) in emb.words().enumerate() {
                w.write_all(word.as_bytes())?;
                for v in emb.vectors().row(i).iter() {
                    write!(w, " {v}")?;
                }
                writeln!(w)?;
            }
        }
    }
    w.flush()
}

/// Writes `emb` to `path` (created or truncated).
pub fn save_embeddings(path: &Path, emb: &EmbeddingSet, format: EmbeddingFormat, layout: BinaryLayout) -> Result<(), EmbedError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_embeddings(emb, format, layout, BufWriter::new(file)).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn record(word: &str, v: &[f32], newline: bool) -> Vec<u8> {
        let mut out = word.as_bytes().to_vec();
        out.push(b' ');
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
        if newline {
            out.push(b'\n');
        }
        out
    }

    fn file(records: &[(&str, [f32; 3])], newline: bool) -> Vec<u8> {
        let mut out = format!("{} 3\n", records.len()).into_bytes();
        for (w, v) in records {
            out.extend(record(w, v, newline));
        }
        out
    }

    #[test]
    fn minimal_binary_file() {
        for newline in [true, false] {
            let bytes = file(&[("king", [0.1, 0.2, 0.3]), ("queen", [1.0, -2.0, 0.5])], newline);
            let loaded = read_binary(Cursor::new(bytes.clone()), None).unwrap();
            let e = &loaded.embedding;
            assert_eq!((e.len(), e.dim()), (2, 3));
            assert_eq!(e.vectors()[(0, 1)], 0.2f32 as f64);
            assert_eq!(loaded.report.layout.newline_after_record, newline);

            let mut out = Vec::new();
            write_embeddings(e, EmbeddingFormat::Word2VecBinary, loaded.report.layout, &mut out).unwrap();
            assert_eq!(out, bytes);
        }
    }

    #[test]
    fn truncated_record_names_index() {
        let mut bytes = file(&[("a", [1.0, 2.0, 3.0]), ("b", [4.0, 5.0, 6.0])], true);
        bytes.truncate(bytes.len() - 6);
        match read_binary(Cursor::new(bytes), None) {
            Err(EmbedError::TruncatedRecord { index: 1, word: Some(w) }) => assert_eq!(w, "b"),
            other => panic!("unexpected {other:?}"),
        }
        let bytes = file(&[("a", [1.0, 2.0, 3.0])], true);
        let mut short = bytes.clone();
        short[0] = b'2';
        assert!(matches!(
            read_binary(Cursor::new(short), None),
            Err(EmbedError::TruncatedRecord { index: 1, word: None })
        ));
    }

    #[test]
    fn malformed_headers() {
        for h in ["", "3\n", "a b\n", "2 3", "2 0\n", "1 2 3\n"] {
            assert!(
                matches!(read_binary(Cursor::new(h.as_bytes().to_vec()), None), Err(EmbedError::MalformedHeader(_))),
                "{h:?}"
            );
        }
    }

    #[test]
    fn duplicates_keep_the_first() {
        let bytes = file(&[("a", [1.0, 0.0, 0.0]), ("b", [0.0, 1.0, 0.0]), ("a", [9.0, 9.0, 9.0])], true);
        let loaded = read_binary(Cursor::new(bytes), None).unwrap();
        assert_eq!(loaded.embedding.len(), 2);
        assert_eq!(loaded.embedding.vectors()[(0, 0)], 1.0);
        assert_eq!(loaded.report.duplicates, vec![(2, "a".to_string())]);
    }

    #[test]
    fn limit_reads_a_prefix() {
        let bytes = file(&[("a", [1.0, 0.0, 0.0]), ("b", [0.0, 1.0, 0.0]), ("c", [0.0, 0.0, 1.0])], true);
        assert_eq!(read_binary(Cursor::new(bytes), Some(2)).unwrap().embedding.len(), 2);
    }

    #[test]
    fn text_format() {
        let loaded = read_text(Cursor::new("king 0.1 0.2 0.3\nqueen 1 2 3\n"), None).unwrap();
        assert!(!loaded.report.text_header);
        let row: Vec<f64> = loaded.embedding.vectors().row(0).iter().copied().collect();
        assert_eq!(row, vec![0.1, 0.2, 0.3]);

        let loaded = read_text(Cursor::new("2 3\nking 0.1 0.2 0.3\nqueen 1 2 3\n"), None).unwrap();
        assert!(loaded.report.text_header);
        let mut out = Vec::new();
        write_embeddings(&loaded.embedding, EmbeddingFormat::Text, BinaryLayout::default(), &mut out).unwrap();
        let again = read_text(Cursor::new(out), None).unwrap();
        assert_eq!(again.embedding, loaded.embedding);

        assert!(matches!(
            read_text(Cursor::new("a 1 2\nb 1\n"), None),
            Err(EmbedError::MalformedRecord { line: 2, .. })
        ));
        assert!(matches!(
            read_text(Cursor::new("a 1 x\n"), None),
            Err(EmbedError::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn file_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        let bytes = file(&[("x", [0.25, -1.5, 3.0]), ("y", [1e-3, 7.0, -0.0])], true);
        std::fs::write(&path, &bytes).unwrap();
        let loaded = load_embeddings(&path, EmbeddingFormat::Word2VecBinary, None).unwrap();
        let out = dir.path().join("f.bin");
        save_embeddings(&out, &loaded.embedding, EmbeddingFormat::Word2VecBinary, loaded.report.layout).unwrap();
        assert_eq!(std::fs::read(out).unwrap(), bytes);
        assert!(matches!(
            load_embeddings(&dir.path().join("missing"), EmbeddingFormat::Text, None),
            Err(EmbedError::Io { .. })
        ));
    }
}
