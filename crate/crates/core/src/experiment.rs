//! Sweep manifests: parsing, validation, resumable execution and result merging.
//!
//! ```text
//! format=1
//! output=results/desk
//! row params=4,2,2 engine=dla voq=on buffer=16 pattern=uniform loads=default seeds=1
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Row keys other than
//! `params`, `engine`, `voq` and `buffer` are optional: `pattern` (uniform),
//! `loads` (`default` = 0.1..1.0 in steps of 0.1, or a comma list), `seeds`
//! (comma list of base seeds, default 1), `warmup` (0.2ms) and `measure` (1ms).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::routing::Engine;
use crate::sim::{
    csv_header_line, csv_rows, default_loads, results_json, sweep, SimConfig, SimSettings,
    TrafficPattern,
};
use crate::sim::{SimError, CSV_COLUMNS};
use crate::topology::{build_topology, DragonflyParams};

pub const MANIFEST_FORMAT: u32 = 1;

/// Rows with more endnodes than this need an explicit opt-in.
pub const LARGE_ENDNODES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifestError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("row {row} (line {line}): {reason}")]
    Row {
        row: usize,
        line: usize,
        reason: String,
    },
    #[error("manifest has no `format=` line")]
    MissingFormat,
    #[error("unsupported manifest format {0} (this tool reads format {MANIFEST_FORMAT})")]
    UnsupportedFormat(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestRow {
    /// 1-based source line.
    pub line: usize,
    #[serde(serialize_with = "as_display")]
    pub params: DragonflyParams,
    pub engine: Engine,
    pub voq: bool,
    pub buffer_depth: usize,
    pub pattern: TrafficPattern,
    pub loads: Vec<f64>,
    pub seeds: Vec<u64>,
    pub warmup: f64,
    pub measure: f64,
}

fn as_display<S: serde::Serializer, T: std::fmt::Display>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

impl ManifestRow {
    /// Normalized text form; equal rows have equal forms.
    pub fn canonical(&self) -> String {
        let loads: Vec<String> = self.loads.iter().map(|l| format!("{l}")).collect();
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        format!(
            "params={} engine={} voq={} buffer={} pattern={} loads={} seeds={} warmup={} measure={}",
            self.params,
            self.engine,
            if self.voq { "on" } else { "off" },
            self.buffer_depth,
            self.pattern.name(),
            loads.join(","),
            seeds.join(","),
            self.warmup,
            self.measure
        )
    }

    pub fn hash(&self) -> String {
        let digest =
            Sha256::digest(format!("dfly-row/{MANIFEST_FORMAT} {}", self.canonical()).as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn settings(&self, seed: u64) -> SimSettings {
        SimSettings {
            voq: self.voq,
            buffer_depth: self.buffer_depth,
            pattern: self.pattern.clone(),
            warmup: self.warmup,
            measure: self.measure,
            seed,
            ..SimSettings::default()
        }
    }

    pub fn is_large(&self) -> bool {
        self.params.endnodes() > LARGE_ENDNODES
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentManifest {
    pub format: u32,
    pub output: Option<PathBuf>,
    pub rows: Vec<ManifestRow>,
}

/// `0.2ms`, `200us`, `1e-3` (seconds) or `5s`.
fn parse_time(text: &str) -> Result<f64, String> {
    let (number, scale) = if let Some(v) = text.strip_suffix("ms") {
        (v, 1e-3)
    } else if let Some(v) = text.strip_suffix("us") {
        (v, 1e-6)
    } else if let Some(v) = text.strip_suffix("ns") {
        (v, 1e-9)
    } else if let Some(v) = text.strip_suffix('s') {
        (v, 1.0)
    } else {
        (text, 1.0)
    };
    let v: f64 = number.parse().map_err(|_| format!("bad time {text:?}"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("bad time {text:?}"));
    }
    Ok(v * scale)
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, String> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| format!("bad {what} {v:?}"))
        })
        .collect()
}

fn parse_row(fields: &str, line: usize, row: usize) -> Result<ManifestRow, ManifestError> {
    let err = |reason: String| ManifestError::Row { row, line, reason };
    let mut map = BTreeMap::new();
    for token in fields.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, found {token:?}")))?;
        if map.insert(k, v).is_some() {
            return Err(err(format!("duplicate key `{k}`")));
        }
    }
    let mut take = |k: &str| map.remove(k);
    fn required<'t>(
        v: Option<&'t str>,
        k: &str,
        row: usize,
        line: usize,
    ) -> Result<&'t str, ManifestError> {
        v.ok_or_else(|| ManifestError::Row {
            row,
            line,
            reason: format!("missing `{k}`"),
        })
    }

    let params: DragonflyParams = required(take("params"), "params", row, line)?
        .parse()
        .map_err(|e| err(format!("{e}")))?;
    let engine: Engine = required(take("engine"), "engine", row, line)?
        .parse()
        .map_err(err)?;
    let voq = match required(take("voq"), "voq", row, line)? {
        "on" | "true" | "yes" => true,
        "off" | "false" | "no" => false,
        other => return Err(err(format!("voq must be on or off, found {other:?}"))),
    };
    let buffer_depth: usize = required(take("buffer"), "buffer", row, line)?
        .parse()
        .map_err(|_| err("buffer must be a positive packet count".into()))?;
    if buffer_depth == 0 {
        return Err(err("buffer must hold at least one packet per VL".into()));
    }
    let pattern: TrafficPattern = take("pattern").unwrap_or("uniform").parse().map_err(err)?;
    let loads = match take("loads").unwrap_or("default") {
        "default" => default_loads(),
        list => parse_list::<f64>(list, "load").map_err(err)?,
    };
    if loads.iter().any(|l| !(0.0..=1.0).contains(l)) || loads.windows(2).any(|w| w[0] > w[1]) {
        return Err(err("loads must be sorted and within [0, 1]".into()));
    }
    let seeds = parse_list::<u64>(take("seeds").unwrap_or("1"), "seed").map_err(err)?;
    let warmup = parse_time(take("warmup").unwrap_or("0.2ms")).map_err(err)?;
    let measure = parse_time(take("measure").unwrap_or("1ms")).map_err(err)?;
    if let Some(k) = map.keys().next() {
        return Err(err(format!("unknown key `{k}`")));
    }
    let parsed = ManifestRow {
        line,
        params,
        engine,
        voq,
        buffer_depth,
        pattern,
        loads,
        seeds,
        warmup,
        measure,
    };
    parsed
        .settings(0)
        .validate()
        .map_err(|e| err(e.to_string()))?;
    Ok(parsed)
}

impl std::str::FromStr for ExperimentManifest {
    type Err = ManifestError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut format = None;
        let mut output = None;
        let mut rows = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            if let Some(fields) = content.strip_prefix("row ") {
                rows.push(parse_row(fields, line, rows.len() + 1)?);
                continue;
            }
            let syntax = |reason: String| ManifestError::Syntax { line, reason };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected key=value or a row, found {content:?}")))?;
            match key.trim() {
                "format" => {
                    let v: u32 = value
                        .trim()
                        .parse()
                        .map_err(|_| syntax(format!("bad format {value:?}")))?;
                    if v != MANIFEST_FORMAT {
                        return Err(ManifestError::UnsupportedFormat(v));
                    }
                    format = Some(v);
                }
                "output" => output = Some(PathBuf::from(value.trim())),
                other => return Err(syntax(format!("unknown key `{other}`"))),
            }
        }
        Ok(ExperimentManifest {
            format: format.ok_or(ManifestError::MissingFormat)?,
            output,
            rows,
        })
    }
}

impl ExperimentManifest {
    /// Provenance hash over the format and every row, independent of the output location.
    pub fn hash(&self) -> String {
        let mut text = format!("dfly-manifest/{}\n", self.format);
        for row in &self.rows {
            let _ = writeln!(text, "{}", row.canonical());
        }
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }

    /// Rejects oversized rows unless `large` is set; returns the oversized rows.
    pub fn check_size(&self, large: bool) -> Result<Vec<&ManifestRow>, ManifestError> {
        let big: Vec<&ManifestRow> = self.rows.iter().filter(|r| r.is_large()).collect();
        if let (false, Some(first)) = (large, big.first()) {
            let row = self
                .rows
                .iter()
                .position(|r| std::ptr::eq(r, *first))
                .unwrap()
                + 1;
            return Err(ManifestError::Row {
                row,
                line: first.line,
                reason: format!(
                    "{} endnodes exceeds the desk-scale limit of {LARGE_ENDNODES}; pass --large to run it",
                    first.params.endnodes()
                ),
            });
        }
        Ok(big)
    }
}

#[derive(Debug, Error)]
pub enum RowError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Setup(String),
    #[error("writing results: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowOutcome {
    Written(PathBuf),
    Skipped(PathBuf),
}

#[derive(Debug, Default)]
pub struct RunReport {
    pub written: Vec<PathBuf>,
    pub skipped: Vec<PathBuf>,
    /// `(1-based row, error)`.
    pub failed: Vec<(usize, RowError)>,
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

pub fn row_paths(out_dir: &Path, row: &ManifestRow) -> (PathBuf, PathBuf) {
    let hash = row.hash();
    (
        out_dir.join(format!("{hash}.csv")),
        out_dir.join(format!("{hash}.json")),
    )
}

/// Runs one row unless its CSV already exists.
pub fn run_row(
    row: &ManifestRow,
    manifest_hash: &str,
    out_dir: &Path,
) -> Result<RowOutcome, RowError> {
    let (csv_path, json_path) = row_paths(out_dir, row);
    if csv_path.exists() {
        return Ok(RowOutcome::Skipped(csv_path));
    }
    let topology = build_topology(row.params).map_err(|e| RowError::Setup(e.to_string()))?;
    let routing = row.engine.route(&topology).map_err(SimError::from)?;
    let base = SimConfig::new(
        &topology,
        &routing,
        row.settings(row.seeds.first().copied().unwrap_or(1)),
    )?;
    let mut csv = format!("{}\n", csv_header_line(manifest_hash, &row.hash()));
    let mut docs = Vec::new();
    for (i, &seed) in row.seeds.iter().enumerate() {
        let config = base.at(base.settings.offered_load, seed)?;
        let results = sweep(&config, &row.loads)?;
        let body = csv_rows(&config, &results);
        // one column line per file
        let body = if i == 0 {
            body.as_str()
        } else {
            body.split_once('\n').map_or("", |b| b.1)
        };
        csv.push_str(body);
        docs.push(results_json(&config, &results));
    }
    let doc = serde_json::json!({
        "manifest": manifest_hash,
        "row": row.hash(),
        "tool": crate::TOOL_VERSION,
        "row_config": row,
        "runs": docs,
    });
    fs::create_dir_all(out_dir)?;
    let json = serde_json::to_string_pretty(&doc).expect("result document serializes");
    write_atomic(&json_path, json.as_bytes())?;
    write_atomic(&csv_path, csv.as_bytes())?;
    Ok(RowOutcome::Written(csv_path))
}

/// Runs every row on a pool of `jobs` workers; failures do not stop other rows.
pub fn run_manifest(manifest: &ExperimentManifest, out_dir: &Path, jobs: usize) -> RunReport {
    let hash = manifest.hash();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let outcomes: Vec<(usize, Result<RowOutcome, RowError>)> = pool.install(|| {
        manifest
            .rows
            .par_iter()
            .enumerate()
            .map(|(i, row)| (i + 1, run_row(row, &hash, out_dir)))
            .collect()
    });
    let mut report = RunReport::default();
    for (row, outcome) in outcomes {
        match outcome {
            Ok(RowOutcome::Written(p)) => report.written.push(p),
            Ok(RowOutcome::Skipped(p)) => report.skipped.push(p),
            Err(e) => report.failed.push((row, e)),
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRecord {
    pub load: f64,
    pub accepted: f64,
    pub engine: String,
    pub voq: bool,
    pub buffer: usize,
    pub seed: u64,
}

/// Parses a result CSV, ignoring comment lines; the column line must match exactly.
pub fn parse_csv(text: &str) -> Result<Vec<CsvRecord>, String> {
    let mut lines = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some(CSV_COLUMNS) => {}
        Some(other) => {
            return Err(format!(
                "unexpected columns {other:?}, expected {CSV_COLUMNS:?}"
            ))
        }
        None => return Ok(Vec::new()),
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let [load, accepted, engine, voq, buffer, seed] = f.as_slice() else {
                return Err(format!("bad record {l:?}"));
            };
            let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad number in {l:?}"));
            Ok(CsvRecord {
                load: num(load)?,
                accepted: num(accepted)?,
                engine: engine.to_string(),
                voq: *voq == "on",
                buffer: buffer.parse().map_err(|_| format!("bad buffer in {l:?}"))?,
                seed: seed.parse().map_err(|_| format!("bad seed in {l:?}"))?,
            })
        })
        .collect()
}

/// Concatenates result CSVs under a single column line, sorted by engine, VOQ, buffer, seed, load.
pub fn merge_csv(texts: &[String]) -> Result<String, String> {
    let mut all = Vec::new();
    for t in texts {
        all.extend(parse_csv(t)?);
    }
    all.sort_by(|a, b| {
        (&a.engine, a.voq, a.buffer, a.seed)
            .cmp(&(&b.engine, b.voq, b.buffer, b.seed))
            .then(a.load.total_cmp(&b.load))
    });
    let mut out = format!("{CSV_COLUMNS}\n");
    for r in &all {
        let _ = writeln!(
            out,
            "{:.2},{:.6},{},{},{},{}",
            r.load,
            r.accepted,
            r.engine,
            if r.voq { "on" } else { "off" },
            r.buffer,
            r.seed
        );
    }
    Ok(out)
}

/// Saturation throughput: accepted traffic at the highest load, averaged over seeds.
pub fn saturation(records: &[CsvRecord], engine: &str, voq: bool, buffer: usize) -> Option<f64> {
    let matching: Vec<&CsvRecord> = records
        .iter()
        .filter(|r| r.engine == engine && r.voq == voq && r.buffer == buffer)
        .collect();
    let top = matching
        .iter()
        .map(|r| r.load)
        .fold(f64::NEG_INFINITY, f64::max);
    let at_top: Vec<f64> = matching
        .iter()
        .filter(|r| r.load == top)
        .map(|r| r.accepted)
        .collect();
    (!at_top.is_empty()).then(|| at_top.iter().sum::<f64>() / at_top.len() as f64)
}

/// VOQ-over-no-VOQ improvement per (engine, buffer), where both exist.
pub fn voq_factors(records: &[CsvRecord]) -> Vec<(String, usize, f64)> {
    let mut keys: Vec<(String, usize)> = records
        .iter()
        .map(|r| (r.engine.clone(), r.buffer))
        .collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .filter_map(|(engine, buffer)| {
            let on = saturation(records, &engine, true, buffer)?;
            let off = saturation(records, &engine, false, buffer)?;
            (off > 0.0).then(|| (engine, buffer, on / off))
        })
        .collect()
}
