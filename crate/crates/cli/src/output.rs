//! Atomic file output and the CSV layout shared by all runs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Output(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// An in-memory table rendered as CSV with a `#` metadata header.
#[derive(Debug, Clone)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            meta: Vec::new(),
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self, config_hash: &str) -> Result<Vec<u8>, CliError> {
        let mut out = Vec::new();
        writeln!(out, "# stackcap {VERSION}")?;
        writeln!(out, "# config_sha256: {config_hash}")?;
        writeln!(out, "# times in tau_c")?;
        for (k, v) in &self.meta {
            writeln!(out, "# {k}: {v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v}")))?;
        }
        w.into_inner().map_err(|e| CliError::Output(e.to_string()))
    }
}

/// Collects the files written by one run.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    prefix: String,
    config_hash: String,
    pub written: Vec<String>,
}

impl OutputDir {
    pub fn new(root: &Path, prefix: &str, config_hash: &str) -> Self {
        Self {
            root: root.to_path_buf(),
            prefix: prefix.to_string(),
            config_hash: config_hash.to_string(),
            written: Vec::new(),
        }
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let file = format!("{}{}", self.prefix, name);
        self.written.push(file.clone());
        self.root.join(file)
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        let bytes = table.to_bytes(&self.config_hash)?;
        let p = self.path(name);
        write_atomic(&p, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        let p = self.path(name);
        write_atomic(&p, &bytes)
    }
}

/// Reads a CSV written by [`Table::to_bytes`], skipping the metadata block.
pub fn read_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| CliError::Output(format!("{s}: {e}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip() {
        let mut t = Table::new(["t", "q"]).meta("model", "circuit");
        t.push(vec![0.0, 1.5]);
        t.push(vec![0.1, -2e-20]);
        let text = String::from_utf8(t.to_bytes("abc").unwrap()).unwrap();
        assert!(text.starts_with("# stackcap"));
        assert!(text.contains("# config_sha256: abc"));
        assert!(text.contains("# times in tau_c"));
        let (h, rows) = read_table(&text).unwrap();
        assert_eq!(h, vec!["t", "q"]);
        assert_eq!(rows, vec![vec![0.0, 1.5], vec![0.1, -2e-20]]);
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.csv");
        write_atomic(&p, b"x").unwrap();
        write_atomic(&p, b"yz").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"yz");
        let names: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().collect();
        assert_eq!(names.len(), 1);
    }
}
