//! Labelled embedding matrices and the `EMB1` binary container.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "EMB1" | version: u16 = 1 | rows: u32 | cols: u32 | labels: rows × i8 | data: rows × cols × f32
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("expected {expected} values for {rows}x{cols} matrix, got {actual}")]
    Shape {
        rows: usize,
        cols: usize,
        expected: usize,
        actual: usize,
    },
    #[error("label at row {row} is {value}, expected -1 or +1")]
    Label { row: usize, value: i64 },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("EMB1 format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

/// `n × d` matrix of final-position embeddings with one ±1 label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddings {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    labels: Vec<i8>,
}

impl LabeledEmbeddings {
    /// Row-major `data` of length `labels.len() * cols`.
    pub fn new(data: Vec<f64>, cols: usize, labels: Vec<i8>) -> Result<Self, EmbeddingError> {
        let rows = labels.len();
        if data.len() != rows * cols {
            return Err(EmbeddingError::Shape {
                rows,
                cols,
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if let Some((row, &value)) = labels.iter().enumerate().find(|(_, &l)| l != 1 && l != -1) {
            return Err(EmbeddingError::Label {
                row,
                value: i64::from(value),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite {
                row: i / cols.max(1),
                col: i % cols.max(1),
            });
        }
        Ok(Self {
            rows,
            cols,
            data,
            labels,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<i8>) -> Result<Self, EmbeddingError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(EmbeddingError::Shape {
                rows: rows.len(),
                cols,
                expected: cols,
                actual: bad.len(),
            });
        }
        Self::new(rows.concat(), cols, labels)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Number of `+1` and `-1` labels.
    pub fn label_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (pos, self.rows - pos)
    }

    pub fn to_emb_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.rows + 4 * self.data.len());
        out.extend_from_slice(EMB_MAGIC);
        out.extend_from_slice(&EMB_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.extend(self.labels.iter().map(|&l| l as u8));
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_emb_bytes(bytes: &[u8]) -> Result<Self, EmbeddingError> {
        let format = |offset: usize, message: String| EmbeddingError::Format { offset, message };
        if bytes.len() < HEADER_LEN {
            return Err(format(
                bytes.len(),
                format!("file truncated: {} bytes, EMB1 header needs {HEADER_LEN}", bytes.len()),
            ));
        }
        if &bytes[0..4] != EMB_MAGIC {
            return Err(format(0, "bad magic, expected \"EMB1\"".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != EMB_VERSION {
            return Err(format(4, format!("unsupported version {version}")));
        }
        let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let expected = HEADER_LEN + rows + 4 * rows * cols;
        if bytes.len() != expected {
            return Err(format(
                bytes.len().min(expected),
                format!(
                    "length check failed: expected {expected} bytes for {rows}x{cols}, found {}",
                    bytes.len()
                ),
            ));
        }
        let labels: Vec<i8> = bytes[HEADER_LEN..HEADER_LEN + rows].iter().map(|&b| b as i8).collect();
        if let Some(row) = labels.iter().position(|&l| l != 1 && l != -1) {
            return Err(format(
                HEADER_LEN + row,
                format!("label {} is not -1 or +1", labels[row]),
            ));
        }
        let data = bytes[HEADER_LEN + rows..]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Self::new(data, cols, labels)
    }

    pub fn write_emb(&self, path: &Path) -> Result<(), EmbeddingError> {
        let io = |e: std::io::Error| EmbeddingError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        // write to a sibling temp file so readers never observe a partial fixture
        let tmp = path.with_extension("emb.tmp");
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&self.to_emb_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn read_emb(path: &Path) -> Result<Self, EmbeddingError> {
        let bytes = fs::read(path).map_err(|e| EmbeddingError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_emb_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> LabeledEmbeddings {
        LabeledEmbeddings::new(vec![0.5, -1.0, 2.0, 3.25, 0.0, 1.0], 2, vec![1, -1, 1]).unwrap()
    }

    #[test]
    fn rejects_bad_labels_and_values() {
        assert!(matches!(
            LabeledEmbeddings::new(vec![0.0; 2], 1, vec![1, 0]),
            Err(EmbeddingError::Label { row: 1, value: 0 })
        ));
        assert!(matches!(
            LabeledEmbeddings::new(vec![0.0, f64::NAN], 1, vec![1, -1]),
            Err(EmbeddingError::NonFinite { row: 1, col: 0 })
        ));
        assert!(matches!(
            LabeledEmbeddings::new(vec![0.0; 3], 2, vec![1, -1]),
            Err(EmbeddingError::Shape { .. })
        ));
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_emb_bytes();
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[3, 0, 0, 0]);
        assert_eq!(&bytes[10..14], &[2, 0, 0, 0]);
        assert_eq!(&bytes[14..17], &[1, 0xff, 1]);
        assert_eq!(&bytes[17..21], &0.5f32.to_le_bytes());
        assert_eq!(bytes.len(), 14 + 3 + 24);
    }

    #[test]
    fn truncated_file_reports_length() {
        let bytes = sample().to_emb_bytes();
        let err = LabeledEmbeddings::from_emb_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("length check"), "{err}");
        let err = LabeledEmbeddings::from_emb_bytes(&bytes[..5]).unwrap_err();
        assert!(err.to_string().contains("EMB1"), "{err}");
    }

    #[test]
    fn bad_magic_at_offset_zero() {
        let mut bytes = sample().to_emb_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            LabeledEmbeddings::from_emb_bytes(&bytes),
            Err(EmbeddingError::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds").join("x.emb");
        sample().write_emb(&path).unwrap();
        assert_eq!(LabeledEmbeddings::read_emb(&path).unwrap(), sample());
    }

    proptest! {
        #[test]
        fn bytes_round_trip(rows in 1usize..8, cols in 1usize..6, seed in prop::collection::vec(-1e6f32..1e6, 48)) {
            let data: Vec<f64> = seed.iter().cycle().take(rows * cols).map(|&v| f64::from(v)).collect();
            let labels = (0..rows).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
            let e = LabeledEmbeddings::new(data, cols, labels).unwrap();
            prop_assert_eq!(LabeledEmbeddings::from_emb_bytes(&e.to_emb_bytes()).unwrap(), e);
        }
    }
}
