//! On-disk formats: CSV tables, field binaries with JSON sidecars, and
//! atomic writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{FieldUnit, Grid3D, ScalarField3D};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let b = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&b))
}

/// Write via a temporary sibling and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

/// 17 significant digits: enough for an exact f64 round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::ComputationFailure(format!("csv {}: {e}", path.display()))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r.iter().map(|c| match c {
            Cell::Num(v) => fmt_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(t) => t.clone(),
        }))
        .map_err(|e| csv_error(path, e))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::ComputationFailure(format!("csv {}: {e}", path.display())))?;
    write_atomic(path, &bytes)
}

/// Header and numeric cells of a CSV table (text cells become NaN).
pub fn read_csv_numbers(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|rec| rec.iter().map(|c| c.parse::<f64>().unwrap_or(f64::NAN)).collect())
                .map_err(|e| csv_error(path, e))
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub grid: Grid3D,
    pub unit: FieldUnit,
    /// Always "x,y,z" with z fastest.
    pub axis_order: String,
    pub dtype: String,
    pub sha256: String,
}

fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Little-endian f64 values plus `<name>.json` describing the grid.
pub fn write_field(path: &Path, field: &ScalarField3D) -> Result<()> {
    let bytes: Vec<u8> = field.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let side = FieldSidecar {
        grid: field.grid,
        unit: field.unit,
        axis_order: "x,y,z (z fastest)".into(),
        dtype: "f64-le".into(),
        sha256: sha256_hex(&bytes),
    };
    write_atomic(path, &bytes)?;
    write_json(&sidecar_path(path), &side)
}

pub fn read_field(path: &Path) -> Result<ScalarField3D> {
    let side: FieldSidecar = read_json(&sidecar_path(path))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if sha256_hex(&bytes) != side.sha256 {
        return Err(Error::ComputationFailure(format!("{} does not match its sidecar hash", path.display())));
    }
    if bytes.len() != 8 * side.grid.len() {
        return Err(Error::ComputationFailure(format!("{} has the wrong length", path.display())));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    ScalarField3D::new(side.grid, values, side.unit)
}
