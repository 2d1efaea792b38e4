//! On-disk formats: CHQF binary fields, JSON reports and the continuation CSV.
//!
//! CHQF layout (little endian): the bytes `CHQF`, a version byte, a byte
//! holding `N`, then per axis a `u32` point count and an `f64` box length,
//! then the `Mᴺ` values as `f64` in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::solver::ContinuationRecord;

const MAGIC: &[u8; 4] = b"CHQF";
const VERSION: u8 = 1;

pub const CSV_HEADER: &str = "p,c_nod_p,c0_p,h1_sq,h1_plus,h1_minus,pohozaev_residual";

/// Writes `bytes` next to `path` and renames over it, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn encode_field(field: &Field) -> Vec<u8> {
    let grid = field.grid();
    let mut out = Vec::with_capacity(6 + 12 * grid.dim() + 8 * grid.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(grid.dim() as u8);
    for _ in 0..grid.dim() {
        out.extend_from_slice(&(grid.points_per_axis() as u32).to_le_bytes());
        out.extend_from_slice(&grid.box_length().to_le_bytes());
    }
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8], path: &Path) -> Result<Field> {
    let bad = |reason: String| Error::FieldFormat { path: path.to_path_buf(), reason };
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(bad("missing CHQF magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(bad(format!("unsupported version {}", bytes[4])));
    }
    let dim = bytes[5] as usize;
    if !(1..=3).contains(&dim) || bytes.len() < 6 + 12 * dim {
        return Err(bad(format!("bad header for dimension {dim}")));
    }
    let mut axes = Vec::with_capacity(dim);
    for a in 0..dim {
        let at = 6 + 12 * a;
        let m = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let l = f64::from_le_bytes(bytes[at + 4..at + 12].try_into().unwrap());
        axes.push((m, l));
    }
    let (m, l) = axes[0];
    if axes.iter().any(|&(ma, la)| ma != m || la != l) {
        return Err(bad(format!("axes differ {axes:?}; only cubic grids are supported")));
    }
    let grid = Grid::new(dim, m, l).map_err(|e| bad(e.to_string()))?;
    let body = &bytes[6 + 12 * dim..];
    if body.len() != 8 * grid.len() {
        return Err(bad(format!("expected {} values, found {} bytes", grid.len(), body.len())));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Field::from_values(grid, values).map_err(|e| bad(e.to_string()))
}

pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    write_atomic(path, &encode_field(field))
}

pub fn read_field(path: &Path) -> Result<Field> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_field(&bytes, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Continuation table, one row per record. Floats use the shortest
/// round-trip representation, so equal runs give equal bytes.
pub fn continuation_csv(records: &[ContinuationRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let row = [r.p, r.c_nod_p, r.c0_p, r.h1_sq, r.h1_plus, r.h1_minus, r.pohozaev_residual];
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_continuation_csv(path: &Path, records: &[ContinuationRecord]) -> Result<()> {
    write_atomic(path, continuation_csv(records).as_bytes())
}
