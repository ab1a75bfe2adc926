//! Atomic writers for CSV, NDJSON and JSON outputs.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::fmt17;

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, so readers never observe a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| Error::Io(format!("{}: {}", target.display(), e.error)))?;
    Ok(target)
}

/// A CSV table whose first line is a `#` comment carrying the provenance.
pub struct Table {
    text: String,
    width: usize,
}

impl Table {
    pub fn new(command: &str, seed: u64, columns: &[&str]) -> Self {
        let mut text = format!("# {} command={command} seed={seed}\n", super::SCHEMA);
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text, width: columns.len() }
    }

    pub fn with_columns(command: &str, seed: u64, columns: &[String]) -> Self {
        let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
        Self::new(command, seed, &refs)
    }

    /// Appends a row of floats printed with 17 significant digits.
    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.width);
        let cells: Vec<String> = values.iter().map(|&v| fmt17(v)).collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    /// Appends a row whose leading integer cell is printed as such.
    pub fn row_indexed(&mut self, n: usize, values: &[f64]) {
        debug_assert_eq!(values.len() + 1, self.width);
        self.text.push_str(&n.to_string());
        for &v in values {
            self.text.push(',');
            self.text.push_str(&fmt17(v));
        }
        self.text.push('\n');
    }

    pub fn save(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        write_atomic(dir, name, self.text.as_bytes())
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// One JSON document per line.
pub fn save_ndjson<T: Serialize>(dir: &Path, name: &str, lines: &[T]) -> Result<PathBuf> {
    let mut text = String::new();
    for l in lines {
        text.push_str(&serde_json::to_string(l).map_err(|e| Error::Io(e.to_string()))?);
        text.push('\n');
    }
    write_atomic(dir, name, text.as_bytes())
}

/// A pretty-printed JSON document with a trailing newline.
pub fn save_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_format() {
        let mut t = Table::new("simulate", 3, &["t", "e_2"]);
        t.row(&[0.0, 0.1]);
        t.row_indexed(4, &[1.0 / 3.0]);
        let lines: Vec<&str> = t.as_str().lines().collect();
        assert_eq!(lines[0], "# wavedamp/v1 command=simulate seed=3");
        assert_eq!(lines[2], "0.0000000000000000e0,1.0000000000000001e-1");
        assert_eq!(lines[3].split(',').nth(1).unwrap().parse::<f64>().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "a.txt", b"one").unwrap();
        write_atomic(dir.path(), "a.txt", b"two").unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("a.txt")).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
