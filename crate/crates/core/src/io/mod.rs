//! File formats: `LORE-DATA v1` datasets, `LORE-CKPT v1` checkpoints,
//! `LORE-TAB v1` tabular policy instances and flat run configs.
//!
//! Every writer goes through a temporary file in the destination directory
//! followed by a rename, so readers never observe a partial file.
//!
//! Real numbers in the text formats are written with Rust's `{:e}`
//! formatting, the shortest decimal that parses back to the same `f64`.

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod tabular;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, SavedModel};
pub use config::RunConfig;
pub use dataset::{load_dataset, load_dataset_with_header, save_dataset, DatasetHeader};
pub use tabular::{load_tabular, save_tabular};

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::format(path, e.to_string()))
}

pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:e}")
}

/// Line cursor over a text file, with errors that carry the path and line.
pub(crate) struct TextCursor<'a> {
    path: &'a Path,
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> TextCursor<'a> {
    pub(crate) fn new(path: &'a Path, text: &'a str) -> Self {
        TextCursor {
            path,
            lines: text.lines().collect(),
            pos: 0,
        }
    }

    pub(crate) fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::format(self.path, format!("line {}: {msg}", self.pos))
    }

    pub(crate) fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).copied()
    }

    pub(crate) fn next_line(&mut self) -> Result<&'a str> {
        let line = self.peek().ok_or_else(|| {
            Error::format(self.path, format!("unexpected end of file after line {}", self.pos))
        })?;
        self.pos += 1;
        Ok(line)
    }

    /// `<key> <value>` line; returns the value.
    pub(crate) fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v),
            _ if line == key => Ok(""),
            _ => Err(self.err(format!("expected `{key}`, found {line:?}"))),
        }
    }

    pub(crate) fn expect(&mut self, exact: &str) -> Result<()> {
        let line = self.next_line()?;
        if line == exact {
            Ok(())
        } else {
            Err(self.err(format!("expected `{exact}`, found {line:?}")))
        }
    }

    pub(crate) fn parse_field<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.err(format!("bad value for `{key}`: {v:?}")))
    }

    pub(crate) fn reals(&self, s: &str) -> Result<Vec<f64>> {
        s.split_ascii_whitespace()
            .map(|t| match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(self.err(format!("bad number {t:?}"))),
            })
            .collect()
    }

    /// Lines up to (not including) the first one starting with any of `stops`.
    pub(crate) fn lines_until(&mut self, stops: &[&str]) -> Vec<&'a str> {
        let start = self.pos;
        while let Some(l) = self.peek() {
            if stops.iter().any(|s| l.starts_with(s)) {
                break;
            }
            self.pos += 1;
        }
        self.lines[start..self.pos].to_vec()
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.lines.len()
    }
}

/// A `rows x cols` block of reals, one row per line.
pub(crate) fn parse_matrix(cur: &TextCursor<'_>, lines: &[&str], rows: usize, cols: usize) -> Result<Vec<f64>> {
    Error::check_dim(rows, lines.len())?;
    let mut out = Vec::with_capacity(rows * cols);
    for l in lines {
        let row = cur.reals(l)?;
        Error::check_dim(cols, row.len())?;
        out.extend(row);
    }
    Ok(out)
}

pub(crate) fn write_row(s: &mut String, row: &[f64]) {
    let parts: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
    s.push_str(&parts.join(" "));
    s.push('\n');
}
