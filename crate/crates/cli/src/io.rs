//! Deterministic artifact plumbing: C-style %.12e formatting, atomic CSV
//! writes with a single '#' header carrying the run identifier, optional
//! JSON mirrors, and the run manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ionchain::TrapConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Formats like C's %.12e: twelve fractional digits, explicit exponent
/// sign, at least two exponent digits.
pub fn fmt_e12(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{:.12e}", x);
    let (mantissa, exp) = s.split_once('e').expect("float format has an exponent");
    let (sign, digits) = match exp.strip_prefix('-') {
        Some(d) => ('-', d),
        None => ('+', exp),
    };
    format!("{mantissa}e{sign}{digits:0>2}")
}

/// One CSV cell.
pub enum Field {
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Int(v) => write!(f, "{v}"),
            Field::Float(v) => f.write_str(&fmt_e12(*v)),
            Field::Str(v) => f.write_str(v),
        }
    }
}

impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::Int(v as i64)
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Float(v)
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Str(v.to_string())
    }
}

impl From<String> for Field {
    fn from(v: String) -> Self {
        Field::Str(v)
    }
}

/// Stable run identifier over everything that determines the numbers:
/// subcommand, config, and stringified parameters. Wall-clock time is
/// deliberately excluded so reruns are byte-identical.
pub fn run_id(subcommand: &str, config: &TrapConfig, params: &BTreeMap<String, String>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(subcommand.as_bytes());
    hasher.update(
        serde_json::to_string(config)
            .expect("config serializes")
            .as_bytes(),
    );
    for (key, value) in params {
        hasher.update(key.as_bytes());
        hasher.update(b"=");
        hasher.update(value.as_bytes());
        hasher.update(b";");
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().context("output path has no parent")?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .with_context(|| format!("replacing {}", path.display()))?;
    Ok(())
}

/// Collects the files of one run and writes them atomically.
pub struct OutputSet {
    dir: PathBuf,
    run_id: String,
    json: bool,
    outputs: Vec<String>,
}

impl OutputSet {
    pub fn new(dir: &Path, run_id: String, json: bool) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutputSet {
            dir: dir.to_path_buf(),
            run_id,
            json,
            outputs: Vec::new(),
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn write_csv(&mut self, name: &str, columns: &[&str], rows: &[Vec<Field>]) -> Result<()> {
        let mut text = format!("# run={} columns={}\n", self.run_id, columns.join(","));
        for row in rows {
            debug_assert_eq!(row.len(), columns.len());
            let line: Vec<String> = row.iter().map(Field::to_string).collect();
            text.push_str(&line.join(","));
            text.push('\n');
        }
        atomic_write(&self.dir.join(name), text.as_bytes())?;
        self.outputs.push(name.to_string());

        if self.json {
            let json_rows: Vec<serde_json::Value> = rows
                .iter()
                .map(|row| {
                    columns
                        .iter()
                        .zip(row)
                        .map(|(&col, field)| {
                            let value = match field {
                                Field::Int(v) => serde_json::json!(v),
                                Field::Float(v) => serde_json::json!(v),
                                Field::Str(v) => serde_json::json!(v),
                            };
                            (col.to_string(), value)
                        })
                        .collect::<serde_json::Map<_, _>>()
                        .into()
                })
                .collect();
            let doc = serde_json::json!({ "run": self.run_id, "rows": json_rows });
            let json_name = format!("{}.json", name.trim_end_matches(".csv"));
            atomic_write(
                &self.dir.join(&json_name),
                serde_json::to_string_pretty(&doc)?.as_bytes(),
            )?;
            self.outputs.push(json_name);
        }
        Ok(())
    }
}

#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub run_id: &'a str,
    pub subcommand: &'a str,
    pub constants_version: &'a str,
    pub config: &'a TrapConfig,
    pub parameters: &'a BTreeMap<String, String>,
    pub outputs: &'a [String],
    pub resonance_warnings: &'a [String],
    pub wall_clock_ms: u128,
}

/// Writes `manifest_<runid>.json`; the wall clock lives only here, never
/// in the run id or the CSVs.
pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let path = dir.join(format!("manifest_{}.json", manifest.run_id));
    atomic_write(&path, serde_json::to_string_pretty(manifest)?.as_bytes())?;
    Ok(path)
}
