//! Matrix and model files, and atomic output.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use d4_core::decompose::{IterationDiagnostics, StopReason};
use d4_core::{D4Config, D4Model, Matrix, OrthonormalBasis, Vector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MATRIX_MAGIC: &[u8; 8] = b"D4MAT1\0\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Binary,
    Csv,
}

impl MatrixFormat {
    /// CSV for `.csv`/`.txt` paths, binary otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") | Some("txt") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place only if `write` succeeds.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(CliError::io(path))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        write(&mut w).map_err(CliError::io(path))?;
        w.flush().map_err(CliError::io(path))?;
    }
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e.error,
    })?;
    Ok(())
}

/// Reads a binary matrix file or a CSV file, detected by the magic bytes.
pub fn read_matrix(path: &Path) -> Result<Matrix, CliError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(CliError::io(path))?;
    if bytes.starts_with(MATRIX_MAGIC) {
        decode_binary(path, &bytes)
    } else {
        decode_csv(path, &bytes)
    }
}

fn decode_binary(path: &Path, bytes: &[u8]) -> Result<Matrix, CliError> {
    let mut r = &bytes[MATRIX_MAGIC.len()..];
    let mut dim = || {
        r.read_u64::<LittleEndian>()
            .map_err(|_| CliError::parse(path, "binary header is truncated"))
    };
    let rows = dim()? as usize;
    let cols = dim()? as usize;
    let payload = &bytes[MATRIX_MAGIC.len() + 16..];
    let expected = rows.checked_mul(cols).and_then(|n| n.checked_mul(8));
    if expected != Some(payload.len()) {
        return Err(CliError::parse(
            path,
            format!("header declares {rows}x{cols} but the payload holds {} bytes", payload.len()),
        ));
    }
    let mut values = vec![0.0; rows * cols];
    let mut r = payload;
    r.read_f64_into::<LittleEndian>(&mut values)
        .map_err(|_| CliError::parse(path, "payload is truncated"))?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(CliError::parse(path, format!("non-finite value at row {}, column {}", i / cols + 1, i % cols + 1)));
    }
    Ok(Matrix::from_row_slice(rows, cols, &values))
}

fn decode_csv(path: &Path, bytes: &[u8]) -> Result<Matrix, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| CliError::parse(path, format!("row {line}: {e}")))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            // a non-numeric first row is a header
            Err(_) if i == 0 => continue,
            Err(e) => return Err(CliError::parse(path, format!("row {line}: {e}"))),
        };
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(CliError::parse(path, format!("row {line}, column {}: non-finite value", j + 1)));
        }
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(CliError::parse(path, format!("row {line} has {} fields, expected {c}", row.len())));
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    Ok(Matrix::from_row_slice(rows, cols.unwrap_or(0), &values))
}

pub fn encode_matrix(m: &Matrix, format: MatrixFormat, w: &mut dyn Write) -> std::io::Result<()> {
    match format {
        MatrixFormat::Binary => {
            w.write_all(MATRIX_MAGIC)?;
            w.write_u64::<LittleEndian>(m.nrows() as u64)?;
            w.write_u64::<LittleEndian>(m.ncols() as u64)?;
            for row in m.row_iter() {
                for &v in row.iter() {
                    w.write_f64::<LittleEndian>(v)?;
                }
            }
        }
        MatrixFormat::Csv => {
            for row in m.row_iter() {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", line.join(","))?;
            }
        }
    }
    Ok(())
}

/// Writes `m` atomically, choosing the format from the extension.
pub fn write_matrix(path: &Path, m: &Matrix) -> Result<(), CliError> {
    let format = MatrixFormat::from_path(path);
    write_atomic(path, |w| encode_matrix(m, format, w))
}

/// A single-column matrix file, or a single row, as a vector.
pub fn read_vector(path: &Path) -> Result<Vector, CliError> {
    let m = read_matrix(path)?;
    match (m.nrows(), m.ncols()) {
        (_, 1) => Ok(m.column(0).into_owned()),
        (1, _) => Ok(m.row(0).transpose()),
        (r, c) => Err(CliError::parse(path, format!("expected a single column of targets, got {r}x{c}"))),
    }
}

/// On-disk form of a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub tool_version: String,
    pub dim: usize,
    pub iterations: usize,
    #[serde(with = "precise")]
    pub basis: Vec<Vec<f64>>,
    pub diagnostics: Vec<IterationDiagnostics>,
    pub stop_reason: StopReason,
    pub config: Option<D4Config>,
}

const MODEL_FORMAT: &str = "d4-model/1";

impl ModelFile {
    pub fn new(model: &D4Model, config: Option<&D4Config>) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            dim: model.dim(),
            iterations: model.len(),
            basis: model.basis.vectors().iter().map(|v| v.iter().copied().collect()).collect(),
            diagnostics: model.diagnostics.clone(),
            stop_reason: model.stop_reason,
            config: config.cloned(),
        }
    }

    pub fn into_model(self, path: &Path) -> Result<D4Model, CliError> {
        if self.format != MODEL_FORMAT {
            return Err(CliError::parse(path, format!("unsupported model format `{}`", self.format)));
        }
        if self.basis.len() != self.iterations {
            return Err(CliError::parse(
                path,
                format!("declares {} iterations but stores {} basis vectors", self.iterations, self.basis.len()),
            ));
        }
        let vectors = self.basis.into_iter().map(Vector::from_vec).collect();
        let basis = OrthonormalBasis::from_vectors(self.dim, vectors).map_err(|e| CliError::parse(path, format!("invalid basis: {e}")))?;
        Ok(D4Model::new(basis, self.diagnostics, self.stop_reason))
    }
}

pub fn write_model(path: &Path, model: &D4Model, config: Option<&D4Config>) -> Result<(), CliError> {
    let file = ModelFile::new(model, config);
    write_json(path, &file)
}

pub fn read_model(path: &Path) -> Result<D4Model, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.to_string()))?;
    file.into_model(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

/// Basis entries as 17-significant-digit decimals.
mod precise {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};
    use serde_json::value::RawValue;

    pub fn serialize<S: Serializer>(basis: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(basis.len()))?;
        for row in basis {
            let row = row
                .iter()
                .map(|v| RawValue::from_string(format!("{v:.16e}")))
                .collect::<Result<Vec<_>, _>>()
                .map_err(serde::ser::Error::custom)?;
            seq.serialize_element(&row)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        Vec::<Vec<f64>>::deserialize(d)
    }
}
