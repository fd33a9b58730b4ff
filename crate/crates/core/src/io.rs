//! Output formats: diagnostics CSV with a provenance header, binary field
//! checkpoints, and JSON summaries.
//!
//! CSV files open with '#'-prefixed provenance lines (simple `key = value`
//! pairs plus the full resolved scenario between `config begin`/`config end`
//! markers), then the column header, then one row per sample. Floats are
//! written as `{:.16e}`, 17 significant digits, enough to round-trip f64;
//! identical runs therefore produce byte-identical files.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec, WignerField};

const CSV_MAGIC: &str = "# wignerflow diagnostics v1";
const CHECKPOINT_MAGIC: &[u8; 8] = b"WGRCHK01";

/// Canonical float formatting for every text output.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Provenance carried by a diagnostics file.
#[derive(Debug, Clone, Default)]
pub struct CsvMeta {
    /// `# key = value` pairs in file order.
    pub keys: BTreeMap<String, String>,
    /// Resolved scenario text embedded in the header, if present.
    pub config_toml: Option<String>,
}

impl CsvMeta {
    pub fn require(&self, key: &str) -> Result<&str> {
        self.keys
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Parse(format!("diagnostics header lacks '{key}'")))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.require(key)?
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("header '{key}' is not a number: {e}")))
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        self.require(key)?
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("header '{key}' is not an index: {e}")))
    }
}

/// Write a diagnostics series. `keys` go first, one `# key = value` line
/// each; `config_toml`, when given, is embedded line by line after them.
pub fn write_diagnostics_csv(
    w: &mut impl Write,
    keys: &[(&str, String)],
    config_toml: Option<&str>,
    records: &[DiagnosticsRecord],
) -> Result<()> {
    writeln!(w, "{CSV_MAGIC}")?;
    for (k, v) in keys {
        writeln!(w, "# {k} = {v}")?;
    }
    if let Some(toml) = config_toml {
        writeln!(w, "# config begin")?;
        for line in toml.lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "# config end")?;
    }
    writeln!(w, "{}", DiagnosticsRecord::COLUMNS.join(","))?;
    let mut row = String::with_capacity(12 * 26);
    for rec in records {
        row.clear();
        for (i, v) in rec.column_values().iter().enumerate() {
            if i > 0 {
                row.push(',');
            }
            row.push_str(&fmt_float(*v));
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

/// Read a diagnostics file back: provenance plus the full series.
pub fn read_diagnostics_csv(r: impl BufRead) -> Result<(CsvMeta, Vec<DiagnosticsRecord>)> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Parse("empty diagnostics file".to_string()))?;
    if first.trim_end() != CSV_MAGIC {
        return Err(Error::Parse(format!(
            "not a diagnostics file (leads with {first:?})"
        )));
    }

    let mut meta = CsvMeta::default();
    let mut config_lines: Option<Vec<String>> = None;
    let mut header: Option<String> = None;
    for line in lines.by_ref() {
        let line = line?;
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.strip_prefix(' ').unwrap_or(comment);
            match (comment.trim(), &mut config_lines) {
                ("config begin", None) => config_lines = Some(Vec::new()),
                ("config end", Some(acc)) => {
                    meta.config_toml = Some(acc.join("\n"));
                    config_lines = None;
                }
                (_, Some(acc)) => acc.push(comment.to_string()),
                (_, None) => {
                    if let Some((k, v)) = comment.split_once('=') {
                        meta.keys
                            .insert(k.trim().to_string(), v.trim().to_string());
                    }
                }
            }
        } else {
            header = Some(line);
            break;
        }
    }
    let header = header.ok_or_else(|| Error::Parse("no column header".to_string()))?;
    let expected = DiagnosticsRecord::COLUMNS.join(",");
    if header.trim_end() != expected {
        return Err(Error::Parse(format!(
            "column header mismatch: got {header:?}"
        )));
    }

    let mut records = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = [0.0f64; 12];
        let mut count = 0;
        for (slot, field) in cols.iter_mut().zip(line.split(',')) {
            *slot = field.trim().parse::<f64>().map_err(|e| {
                Error::Parse(format!("row {}: bad float {field:?}: {e}", n + 1))
            })?;
            count += 1;
        }
        if count != 12 || line.split(',').count() != 12 {
            return Err(Error::Parse(format!(
                "row {}: expected 12 columns, got {}",
                n + 1,
                line.split(',').count()
            )));
        }
        records.push(DiagnosticsRecord::from_columns(cols));
    }
    Ok((meta, records))
}

/// Binary field checkpoint: magic, grid geometry, sample time, then the
/// row-major field, all little-endian.
pub fn write_checkpoint(w: &mut impl Write, field: &WignerField, t: f64) -> Result<()> {
    let spec = field.grid().spec();
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(spec.nx as u64).to_le_bytes())?;
    w.write_all(&(spec.np as u64).to_le_bytes())?;
    for v in [spec.x_min, spec.x_max, spec.p_min, spec.p_max, t] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Read a checkpoint back into a field on a freshly built grid.
pub fn read_checkpoint(r: &mut impl Read) -> Result<(WignerField, f64)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Parse(format!(
            "not a checkpoint file (magic {magic:?})"
        )));
    }
    let nx = read_u64(r)? as usize;
    let np = read_u64(r)? as usize;
    let spec = GridSpec {
        nx,
        np,
        x_min: read_f64(r)?,
        x_max: read_f64(r)?,
        p_min: read_f64(r)?,
        p_max: read_f64(r)?,
    };
    let t = read_f64(r)?;
    let grid: Arc<Grid> = Grid::shared(spec)?;
    let mut field = WignerField::zeros(grid);
    for v in field.values_mut() {
        *v = read_f64(r)?;
    }
    Ok((field, t))
}

/// Pretty-printed JSON with a trailing newline, for summary artifacts.
pub fn write_json<T: Serialize>(w: &mut impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)
        .map_err(|e| Error::Parse(format!("serialize summary: {e}")))?;
    writeln!(w)?;
    Ok(())
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_json(&mut f, value)
}
