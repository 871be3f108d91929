//! CSV output, `key = value` configuration files and run records.
//!
//! Reals are written with at least nine significant digits and always reparse to
//! the identical `f64`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Real(x)
    }
}

impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Int(x as i64)
    }
}

impl From<i64> for Value {
    fn from(x: i64) -> Self {
        Value::Int(x)
    }
}

impl From<&str> for Value {
    fn from(x: &str) -> Self {
        Value::Text(x.to_string())
    }
}

impl From<String> for Value {
    fn from(x: String) -> Self {
        Value::Text(x)
    }
}

/// Shortest round-trip representation, zero-padded to nine significant digits.
pub fn format_real(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.00000000".into() } else { "0.00000000".into() };
    }
    let sci = format!("{x:e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits = mantissa.chars().filter(|c| c.is_ascii_digit()).count();
    let fixed = (-5..=15).contains(&exp);
    match (fixed, digits >= 9) {
        (true, true) => format!("{x}"),
        (true, false) => format!("{:.*}", (8 - exp).max(0) as usize, x),
        (false, true) => sci,
        (false, false) => format!("{x:.8e}"),
    }
}

fn render(v: &Value) -> String {
    match v {
        Value::Real(x) => format_real(*x),
        Value::Int(i) => i.to_string(),
        Value::Text(s) => s.clone(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

pub fn csv_string(header: &[&str], rows: &[Vec<Value>]) -> Result<String> {
    let mut out = header.join(",");
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::invalid(format!(
                "row {i} has {} cells, header has {}",
                row.len(),
                header.len()
            )));
        }
        let cells: Vec<String> = row.iter().map(render).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    Ok(out)
}

/// Writes a header row followed by `rows`, creating parent directories.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Value>]) -> Result<()> {
    let text = csv_string(header, rows)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: self.path.clone(),
            line: 1,
            message: format!("missing column `{name}`"),
        })
    }

    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[c].parse::<f64>().map_err(|e| Error::Parse {
                    path: self.path.clone(),
                    line: i + 2,
                    message: format!("column `{name}`: {e}"),
                })
            })
            .collect()
    }

    pub fn column_str(&self, name: &str) -> Result<Vec<&str>> {
        let c = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[c].as_str()).collect())
    }
}

pub fn parse_csv(text: &str, path: &Path) -> Result<CsvTable> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Parse { path: path.to_path_buf(), line: 1, message: "empty file".into() })?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<String> = line.split(',').map(str::to_string).collect();
        if row.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        rows.push(row);
    }
    Ok(CsvTable { path: path.to_path_buf(), header, rows })
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_csv(&text, path)
}

/// Flat `key = value` configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    path: PathBuf,
    entries: BTreeMap<String, (String, usize)>,
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse { path: path.to_path_buf(), line: i + 1, message: "empty key".into() });
            }
            entries.insert(k.to_string(), (v.trim().to_string(), i + 1));
        }
        Ok(Config { path: path.to_path_buf(), entries })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Inserts or replaces a key, as a command-line override does.
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    /// Parses a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec.split_once('=').ok_or_else(|| Error::Parse {
            path: PathBuf::from("<override>"),
            line: 0,
            message: format!("override `{spec}` is not of the form key=value"),
        })?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    /// Logs a warning for every key not in `known` and returns them.
    pub fn warn_unknown(&self, known: &[&str]) -> Vec<String> {
        let unknown: Vec<String> = self.keys().filter(|k| !known.contains(k)).map(str::to_string).collect();
        for k in &unknown {
            log::warn!("{}: unknown config key `{k}` ignored", self.path.display());
        }
        unknown
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn parse_with<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|e| Error::Parse {
                path: self.path.clone(),
                line: *line,
                message: format!("key `{key}`: cannot parse `{v}`: {e}"),
            }),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.parse_with(key)
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.parse_with(key)
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.parse_with(key)
    }

    /// Comma-separated list of reals.
    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some((v, line)) = self.entries.get(key) else { return Ok(None) };
        v.split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: self.path.clone(),
                    line: *line,
                    message: format!("key `{key}`: cannot parse `{s}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn missing(&self, key: &str) -> Error {
        Error::Parse { path: self.path.clone(), line: 0, message: format!("missing required key `{key}`") }
    }

    pub fn require_str(&self, key: &str) -> Result<&str> {
        self.get_str(key).ok_or_else(|| self.missing(key))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.get_f64(key)?.ok_or_else(|| self.missing(key))
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        self.get_usize(key)?.ok_or_else(|| self.missing(key))
    }
}

pub fn read_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Config::parse(&text, path)
}

/// One replicate's outputs: experiment id, seed, echoed configuration and metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub experiment: String,
    pub seed: u64,
    pub config: Vec<(String, String)>,
    pub metrics: Vec<(String, f64)>,
}

impl RunRecord {
    pub fn new(experiment: &str, seed: u64) -> Self {
        RunRecord { experiment: experiment.to_string(), seed, config: Vec::new(), metrics: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite(value));
        }
        self.metrics.push((name.into(), value));
        Ok(())
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub const HEADER: [&'static str; 4] = ["experiment", "seed", "metric", "value"];

    pub fn rows(&self) -> Vec<Vec<Value>> {
        self.metrics
            .iter()
            .map(|(n, v)| {
                vec![
                    Value::from(self.experiment.as_str()),
                    Value::Text(self.seed.to_string()),
                    Value::from(n.as_str()),
                    Value::Real(*v),
                ]
            })
            .collect()
    }
}
