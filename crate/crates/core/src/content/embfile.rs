//! Exchange format for externally produced user/item embeddings.
//!
//! Text: header `EMB1 kind count dim`, then `id v1 … v_dim` per line with 9
//! significant digits. Binary: magic `CSEM`, u32 version 1, u8 kind, u64
//! count, u32 dim, then per record a u64 id and `dim` f32 values, all
//! little-endian.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

const TEXT_MAGIC: &str = "EMB1";
const BINARY_MAGIC: &[u8; 4] = b"CSEM";
const BINARY_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EmbeddingKind {
    User,
    Item,
}

impl EmbeddingKind {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingKind::User => "user",
            EmbeddingKind::Item => "item",
        }
    }

    fn code(self) -> u8 {
        match self {
            EmbeddingKind::User => 0,
            EmbeddingKind::Item => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(EmbeddingKind::User),
            1 => Some(EmbeddingKind::Item),
            _ => None,
        }
    }
}

impl std::str::FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user" => Ok(EmbeddingKind::User),
            "item" => Ok(EmbeddingKind::Item),
            other => Err(Error::Invalid(format!("unknown embedding kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Text,
    Binary,
}

impl std::str::FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(EmbeddingFormat::Text),
            "binary" => Ok(EmbeddingFormat::Binary),
            other => Err(Error::Config(format!("unknown embedding format `{other}`"))),
        }
    }
}

/// A set of `(id, vector)` rows of one kind and constant width.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrixFile {
    pub kind: EmbeddingKind,
    pub dim: usize,
    pub rows: Vec<(u64, Vec<f32>)>,
}

impl EmbeddingMatrixFile {
    /// One row per matrix row, ids `0..n`.
    pub fn from_matrix(kind: EmbeddingKind, m: &Matrix) -> Self {
        EmbeddingMatrixFile {
            kind,
            dim: m.cols(),
            rows: (0..m.rows())
                .map(|i| (i as u64, m.row(i).iter().map(|&v| v as f32).collect()))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.rows.len());
        for (id, v) in &self.rows {
            if !seen.insert(*id) {
                return Err(Error::DuplicateId {
                    kind: self.kind.name(),
                    id: *id as usize,
                });
            }
            if v.len() != self.dim {
                return Err(Error::shape(format!("{} {id} vector", self.kind.name()), self.dim, v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invalid(format!("{} {id} has a non-finite value", self.kind.name())));
            }
        }
        Ok(())
    }

    /// Dense `count × dim` matrix; every id in `0..count` must be present and
    /// `dim` must equal `expected_dim`.
    pub fn to_matrix(&self, count: usize, expected_dim: usize) -> Result<Matrix> {
        if self.dim != expected_dim {
            return Err(Error::DimMismatch {
                expected: expected_dim,
                found: self.dim,
            });
        }
        let mut m = Matrix::zeros(count, self.dim);
        let mut present = vec![false; count];
        for (id, v) in &self.rows {
            let id = *id as usize;
            if id < count {
                present[id] = true;
                for (dst, &src) in m.row_mut(id).iter_mut().zip(v) {
                    *dst = f64::from(src);
                }
            }
        }
        if let Some(id) = present.iter().position(|p| !p) {
            return Err(Error::MissingId {
                kind: self.kind.name(),
                id,
            });
        }
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{TEXT_MAGIC} {} {} {}\n", self.kind.name(), self.rows.len(), self.dim);
        for (id, v) in &self.rows {
            let _ = write!(out, "{id}");
            for x in v {
                let _ = write!(out, " {x:.8e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(21 + self.rows.len() * (8 + 4 * self.dim));
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
        out.push(self.kind.code());
        out.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (id, v) in &self.rows {
            out.extend_from_slice(&id.to_le_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let bad = |line: usize, m: String| Error::Invalid(format!("embedding file line {line}: {m}"));
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [magic, kind, count, dim] = fields.as_slice() else {
            return Err(bad(1, format!("expected `{TEXT_MAGIC} kind count dim`")));
        };
        if *magic != TEXT_MAGIC {
            return Err(bad(1, format!("expected magic {TEXT_MAGIC}, found `{magic}`")));
        }
        let kind: EmbeddingKind = kind.parse()?;
        let count: usize = count.parse().map_err(|_| bad(1, format!("bad count `{count}`")))?;
        let dim: usize = dim.parse().map_err(|_| bad(1, format!("bad dim `{dim}`")))?;
        let mut rows = Vec::with_capacity(count);
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut f = line.split_whitespace();
            let id_s = f.next().unwrap_or_default();
            let id: u64 = id_s.parse().map_err(|_| bad(idx + 1, format!("bad id `{id_s}`")))?;
            let v: Vec<f32> = f
                .map(|x| x.parse::<f32>().map_err(|_| bad(idx + 1, format!("bad value `{x}`"))))
                .collect::<Result<_>>()?;
            rows.push((id, v));
        }
        if rows.len() != count {
            return Err(Error::Invalid(format!(
                "embedding file header declares {count} rows, found {}",
                rows.len()
            )));
        }
        let file = EmbeddingMatrixFile { kind, dim, rows };
        file.validate()?;
        Ok(file)
    }

    pub fn parse_binary(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Invalid(format!("binary embedding file: {m}"));
        if bytes.len() < 21 || &bytes[..4] != BINARY_MAGIC {
            return Err(bad("missing CSEM header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != BINARY_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let kind = EmbeddingKind::from_code(bytes[8]).ok_or_else(|| bad("unknown kind code"))?;
        let count = u64::from_le_bytes(bytes[9..17].try_into().expect("8 bytes")) as usize;
        let dim = u32::from_le_bytes(bytes[17..21].try_into().expect("4 bytes")) as usize;
        let record = 8 + 4 * dim;
        let body = &bytes[21..];
        if body.len() != count * record {
            return Err(bad(&format!("expected {} payload bytes, found {}", count * record, body.len())));
        }
        let rows = body
            .chunks_exact(record)
            .map(|r| {
                let id = u64::from_le_bytes(r[..8].try_into().expect("8 bytes"));
                let v = r[8..]
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                    .collect();
                (id, v)
            })
            .collect();
        let file = EmbeddingMatrixFile { kind, dim, rows };
        file.validate()?;
        Ok(file)
    }

    pub fn write(&self, path: &Path, format: EmbeddingFormat) -> Result<()> {
        let bytes = match format {
            EmbeddingFormat::Text => self.to_text().into_bytes(),
            EmbeddingFormat::Binary => self.to_binary(),
        };
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Reads either format, detected from the leading magic bytes.
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(BINARY_MAGIC) {
            Self::parse_binary(&bytes)
        } else {
            let text = std::str::from_utf8(&bytes)
                .map_err(|_| Error::Invalid(format!("{}: neither CSEM binary nor UTF-8 text", path.display())))?;
            Self::parse_text(text)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingMatrixFile {
        EmbeddingMatrixFile {
            kind: EmbeddingKind::Item,
            dim: 3,
            rows: vec![(0, vec![0.1, -2.5e-7, 3.0]), (1, vec![1.0 / 3.0, 0.0, -1.0e10])],
        }
    }

    #[test]
    fn text_and_binary_round_trip_exactly() {
        let f = sample();
        assert_eq!(EmbeddingMatrixFile::parse_text(&f.to_text()).unwrap(), f);
        assert_eq!(EmbeddingMatrixFile::parse_binary(&f.to_binary()).unwrap(), f);
        assert!(f.to_text().starts_with("EMB1 item 2 3\n"));
    }

    #[test]
    fn dim_mismatch_names_both_dims() {
        let err = sample().to_matrix(2, 8).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('3') && msg.contains('8'), "{msg}");
    }

    #[test]
    fn missing_and_duplicate_ids() {
        let mut f = sample();
        assert!(matches!(f.to_matrix(3, 3), Err(Error::MissingId { id: 2, .. })));
        f.rows.push((1, vec![0.0; 3]));
        assert!(matches!(f.validate(), Err(Error::DuplicateId { id: 1, .. })));
    }

    #[test]
    fn header_count_checked() {
        let text = "EMB1 user 3 2\n0 1 2\n";
        assert!(EmbeddingMatrixFile::parse_text(text).is_err());
        assert!(EmbeddingMatrixFile::parse_binary(b"CSEM").is_err());
    }
}
