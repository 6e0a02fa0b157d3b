//! Embedding files: `clip_id,chunk_index,d0,...,d{D-1}` CSV plus a JSON
//! sidecar (`<file>.meta.json`) naming the extractor.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, FeatureMeta, FeatureVector};
use crate::error::{Error, Result};

pub const FEATURE_FILE_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    schema_version: u32,
    #[serde(flatten)]
    meta: FeatureMeta,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

fn file_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::FeatureFile {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Writes rows sorted by `(clip_id, chunk_index)` with shortest round-trip
/// float formatting, and the sidecar next to it.
pub fn save_embeddings(matrix: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut sorted: Vec<&FeatureVector> = matrix.rows().iter().collect();
    sorted.sort_by(|a, b| (&a.clip_id, a.chunk_index).cmp(&(&b.clip_id, b.chunk_index)));

    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["clip_id".to_string(), "chunk_index".to_string()];
    header.extend((0..matrix.dim()).map(|i| format!("d{i}")));
    wtr.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in sorted {
        let mut rec = Vec::with_capacity(2 + row.values.len());
        rec.push(row.clip_id.clone());
        rec.push(row.chunk_index.to_string());
        rec.extend(row.values.iter().map(|v| format!("{v:?}")));
        wtr.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;

    let sidecar = Sidecar {
        schema_version: FEATURE_FILE_SCHEMA_VERSION,
        meta: matrix.meta.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    let side = sidecar_path(path);
    std::fs::write(&side, json + "\n").map_err(|e| Error::io(side, e))
}

/// Reads an embedding file. Without a sidecar the matrix is tagged as
/// coming from an external extractor.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(h) => h.map_err(|e| csv_err(path, e))?,
        None => return Err(file_err(path, "missing header")),
    };
    if header.get(0) != Some("clip_id") || header.get(1) != Some("chunk_index") {
        return Err(file_err(path, "header must start with clip_id,chunk_index"));
    }
    let dim = header.len() - 2;
    for (i, name) in header.iter().skip(2).enumerate() {
        if name != format!("d{i}") {
            return Err(file_err(
                path,
                format!("column {} should be d{i}, found {name}", i + 2),
            ));
        }
    }

    let meta = match read_sidecar(path)? {
        Some(meta) if meta.dim != dim => {
            return Err(Error::DimensionMismatch {
                expected: meta.dim,
                actual: dim,
            })
        }
        Some(meta) => meta,
        None => FeatureMeta::external(dim),
    };

    let mut matrix = FeatureMatrix::new(meta);
    let mut seen = HashSet::new();
    for (line, rec) in records.enumerate() {
        let line = line + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != dim + 2 {
            return Err(file_err(
                path,
                format!(
                    "line {line}: dimension mismatch, header has {dim} values, row has {}",
                    rec.len().saturating_sub(2)
                ),
            ));
        }
        let clip_id = rec[0].to_string();
        let chunk_index: usize = rec[1]
            .parse()
            .map_err(|_| file_err(path, format!("line {line}: bad chunk_index {:?}", &rec[1])))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|cell| {
                cell.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        file_err(path, format!("line {line}: non-numeric value {cell:?}"))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if !seen.insert((clip_id.clone(), chunk_index)) {
            return Err(file_err(
                path,
                format!("line {line}: duplicate row ({clip_id}, {chunk_index})"),
            ));
        }
        matrix.push(FeatureVector {
            values,
            chunk_index,
            clip_id,
        })?;
    }
    Ok(matrix)
}

fn read_sidecar(path: &Path) -> Result<Option<FeatureMeta>> {
    let side = sidecar_path(path);
    let text = match std::fs::read_to_string(&side) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(side, e)),
    };
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| file_err(&side, e.to_string()))?;
    if sidecar.schema_version != FEATURE_FILE_SCHEMA_VERSION {
        return Err(file_err(
            &side,
            format!("unsupported schema version {}", sidecar.schema_version),
        ));
    }
    Ok(Some(sidecar.meta))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        file_err(path, e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SPECTRAL_EXTRACTOR_ID;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spectral_meta(dim: usize) -> FeatureMeta {
        FeatureMeta {
            extractor_id: SPECTRAL_EXTRACTOR_ID.into(),
            config_hash: "abc123".into(),
            dim,
            rate_reinterpretation: "4s@4kHz treated as 1s@16kHz".into(),
        }
    }

    fn random_matrix(n: usize, dim: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|i| FeatureVector {
                values: (0..dim)
                    .map(|_| rng.gen_range(-1e3..1e3) * rng.gen::<f64>().powi(7))
                    .collect(),
                chunk_index: i % 6,
                clip_id: format!("clip{:02}", i / 6),
            })
            .collect();
        let mut m = FeatureMatrix::from_rows(spectral_meta(dim), rows).unwrap();
        m.sort_rows();
        m
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let m = random_matrix(3, 512, 1);
        save_embeddings(&m, &path).unwrap();
        assert_eq!(load_embeddings(&path).unwrap(), m);
    }

    #[test]
    fn full_day_matrix_keeps_extractor_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        let m = random_matrix(96, 512, 2);
        save_embeddings(&m, &path).unwrap();
        let back = load_embeddings(&path).unwrap();
        assert_eq!(back.len(), 96);
        assert_eq!(back.dim(), 512);
        assert_eq!(back.meta, m.meta);
    }

    #[test]
    fn empty_matrix_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let m = FeatureMatrix::new(spectral_meta(512));
        save_embeddings(&m, &path).unwrap();
        let back = load_embeddings(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.dim(), 512);
    }

    #[test]
    fn rows_are_written_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let rows = vec![
            FeatureVector {
                values: vec![1.0],
                chunk_index: 1,
                clip_id: "b".into(),
            },
            FeatureVector {
                values: vec![2.0],
                chunk_index: 0,
                clip_id: "b".into(),
            },
            FeatureVector {
                values: vec![3.0],
                chunk_index: 5,
                clip_id: "a".into(),
            },
        ];
        let m = FeatureMatrix::from_rows(FeatureMeta::external(1), rows).unwrap();
        save_embeddings(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "clip_id,chunk_index,d0\na,5,3.0\nb,0,2.0\nb,1,1.0\n");
    }

    fn header(dim: usize) -> String {
        let mut h = "clip_id,chunk_index".to_string();
        for i in 0..dim {
            h.push_str(&format!(",d{i}"));
        }
        h
    }

    #[test]
    fn short_row_is_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let row: Vec<String> = (0..511).map(|i| i.to_string()).collect();
        std::fs::write(&path, format!("{}\nc,0,{}\n", header(512), row.join(","))).unwrap();
        let err = load_embeddings(&path).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{err}");
    }

    #[test]
    fn non_numeric_and_duplicate_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, format!("{}\nc,0,1.0,abc\n", header(2))).unwrap();
        assert!(load_embeddings(&path)
            .unwrap_err()
            .to_string()
            .contains("non-numeric"));
        std::fs::write(&path, format!("{}\nc,0,1.0,2.0\nc,0,3.0,4.0\n", header(2))).unwrap();
        assert!(load_embeddings(&path)
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
    }

    #[test]
    fn external_file_without_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trill.csv");
        std::fs::write(&path, format!("{}\nclipA,3,0.5,-0.25\n", header(2))).unwrap();
        let m = load_embeddings(&path).unwrap();
        assert_eq!(m.meta.extractor_id, "external");
        assert_eq!(m.rows()[0].chunk_index, 3);
        assert_eq!(m.rows()[0].values, vec![0.5, -0.25]);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let m = FeatureMatrix::new(FeatureMeta::external(1));
        let err = save_embeddings(&m, "/nonexistent-dir/x.csv").unwrap_err();
        assert_eq!(err.class(), crate::ErrorClass::Io);
    }
}
