//! File formats: streams, dense matrices, oracles and sketch snapshots.
//!
//! - Streams are newline-delimited decimal element ids.
//! - Matrices are row-major little-endian `f64` binaries with a JSON header
//!   sidecar at `<path>.json` holding `{version, rows, cols, params, seed}`.
//! - Frequency oracles are JSON id lists; direction oracles reuse the dense
//!   matrix format.
//! - Sketch snapshots are versioned JSON documents tagged by kind.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::StreamInstance;
use crate::error::{Error, Result};
use crate::freq::{
    CountSketchSnapshot, LearnedMisraGriesSnapshot, MisraGriesSnapshot,
};
use crate::linalg::DenseMatrix;
use crate::oracle::{DirectionOracle, FrequencyOracle};
use crate::ElementId;

const MATRIX_FORMAT_VERSION: u32 = 1;

pub fn write_stream(path: &Path, items: &[ElementId]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        writeln!(w, "{item}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_stream(path: &Path) -> Result<StreamInstance> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut items = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let id: ElementId = trimmed.parse().map_err(|_| {
            Error::Parse(format!(
                "{}:{}: expected an integer element id, got {trimmed:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        items.push(id);
    }
    StreamInstance::from_items(items)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixHeader {
    pub version: u32,
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub seed: u64,
}

fn header_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

pub fn write_matrix(
    path: &Path,
    m: &DenseMatrix,
    params: serde_json::Value,
    seed: u64,
) -> Result<()> {
    let header = MatrixHeader {
        version: MATRIX_FORMAT_VERSION,
        rows: m.rows(),
        cols: m.cols(),
        params,
        seed,
    };
    let hp = header_path(path);
    let json = serde_json::to_string_pretty(&header)
        .map_err(|e| Error::Parse(format!("header encode: {e}")))?;
    fs::write(&hp, json).map_err(|e| Error::io(&hp, e))?;

    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for v in m.data() {
        w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let hp = header_path(path);
    let json = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let header: MatrixHeader =
        serde_json::from_str(&json).map_err(|e| Error::Parse(format!("header decode: {e}")))?;
    if header.version != MATRIX_FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported matrix format version {}",
            header.version
        )));
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let want = header.rows * header.cols * 8;
    if bytes.len() != want {
        return Err(Error::Parse(format!(
            "{}: expected {want} bytes for {}x{}, found {}",
            path.display(),
            header.rows,
            header.cols,
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    DenseMatrix::new(header.rows, header.cols, data)
}

pub fn write_frequency_oracle(path: &Path, oracle: &FrequencyOracle) -> Result<()> {
    let json = serde_json::to_string_pretty(oracle)
        .map_err(|e| Error::Parse(format!("oracle encode: {e}")))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_frequency_oracle(path: &Path) -> Result<FrequencyOracle> {
    let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let oracle: FrequencyOracle =
        serde_json::from_str(&json).map_err(|e| Error::Parse(format!("oracle decode: {e}")))?;
    FrequencyOracle::from_ids(oracle.ids().to_vec())
}

pub fn write_direction_oracle(path: &Path, oracle: &DirectionOracle) -> Result<()> {
    write_matrix(
        path,
        oracle.matrix(),
        serde_json::json!({"kind": "direction-oracle"}),
        0,
    )
}

pub fn read_direction_oracle(path: &Path) -> Result<DirectionOracle> {
    DirectionOracle::from_matrix(read_matrix(path)?)
}

/// Persisted sketch state, tagged by kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SketchState {
    MisraGries(MisraGriesSnapshot),
    LearnedMisraGries(LearnedMisraGriesSnapshot),
    CountSketch(CountSketchSnapshot),
}

pub fn write_sketch_state(path: &Path, state: &SketchState) -> Result<()> {
    let json = serde_json::to_string_pretty(state)
        .map_err(|e| Error::Parse(format!("sketch encode: {e}")))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_sketch_state(path: &Path) -> Result<SketchState> {
    let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&json).map_err(|e| Error::Parse(format!("sketch decode: {e}")))
}
