//! Channel files and the per-subject channel manifest.
//!
//! A channel file is UTF-8 text with a `t_s,value` header and one sample per
//! line. The manifest is a JSON document listing one file per channel kind;
//! relative paths resolve against the manifest's own directory.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{ChannelKind, TimeSeries};

/// Relative tolerance between declared and timestamp-implied sampling rates.
pub const RATE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub channel_kind: ChannelKind,
    pub sampling_rate_hz: f64,
    #[serde(default)]
    pub units: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelManifest {
    pub subject_id: String,
    pub entries: Vec<ManifestEntry>,
}

impl ChannelManifest {
    pub fn entry(&self, kind: ChannelKind) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.channel_kind == kind)
    }

    /// Checks the invariants that do not need the filesystem.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.channel_kind) {
                return Err(Error::DuplicateChannel(e.channel_kind));
            }
            if !(e.sampling_rate_hz > 0.0 && e.sampling_rate_hz.is_finite()) {
                return Err(Error::InvalidRate(e.sampling_rate_hz));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a manifest. Entry paths come back absolute (joined to
/// the manifest directory) and every referenced file must exist.
pub fn load_manifest(path: &Path) -> Result<ChannelManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: ChannelManifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    manifest.validate()?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for e in &mut manifest.entries {
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
        if !e.path.is_file() {
            return Err(Error::io(
                &e.path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "channel file not found"),
            ));
        }
    }
    Ok(manifest)
}

pub fn load_series(entry: &ManifestEntry) -> Result<TimeSeries> {
    read_series(&entry.path, entry.channel_kind, entry.sampling_rate_hz)
}

/// Parses a `t_s,value` file and checks it against the declared rate.
pub fn read_series(path: &Path, kind: ChannelKind, declared_rate_hz: f64) -> Result<TimeSeries> {
    if !(declared_rate_hz > 0.0 && declared_rate_hz.is_finite()) {
        return Err(Error::InvalidRate(declared_rate_hz));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let headers = reader.headers().map_err(|e| Error::parse(path, e))?;
    if headers.len() != 2 || &headers[0] != "t_s" || &headers[1] != "value" {
        return Err(Error::parse(path, "expected header `t_s,value`"));
    }

    let mut first_t = None;
    let mut last_t = f64::NEG_INFINITY;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(Error::parse(path, format!("line {line}: expected 2 fields")));
        }
        let field = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|e| Error::parse(path, format!("line {line}: {e}")))
        };
        let (t, v) = (field(0)?, field(1)?);
        if !t.is_finite() || !v.is_finite() {
            return Err(Error::NonFinite {
                path: path.to_path_buf(),
                line,
            });
        }
        if t <= last_t {
            return Err(Error::NonMonotonicTime {
                path: path.to_path_buf(),
                line,
            });
        }
        last_t = t;
        first_t.get_or_insert(t);
        values.push(v);
    }

    let Some(t0) = first_t else {
        return Err(Error::parse(path, "no samples"));
    };
    if values.len() > 1 {
        let implied = (values.len() - 1) as f64 / (last_t - t0);
        if ((implied - declared_rate_hz) / declared_rate_hz).abs() > RATE_TOLERANCE {
            return Err(Error::RateMismatch {
                path: path.to_path_buf(),
                declared: declared_rate_hz,
                implied,
            });
        }
    }
    TimeSeries::new(kind, declared_rate_hz, t0, values)
}

/// Writes the canonical `t_s,value` form: timestamps regenerated from the
/// grid, both columns in shortest round-trip decimal notation.
pub fn write_series(series: &TimeSeries, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "t_s,value").map_err(io)?;
    for (i, v) in series.values().iter().enumerate() {
        writeln!(out, "{},{}", series.time_at(i), v).map_err(io)?;
    }
    out.flush().map_err(io)
}
