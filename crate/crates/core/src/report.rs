//! CSV output: one header line, comma-separated rows, shortest round-trip
//! float formatting so reruns produce identical bytes.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::Path as FsPath;

use crate::error::Result;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Formats any displayable cell.
pub fn cell(v: impl Display) -> String {
    v.to_string()
}

/// Writes `text` to `path`, or to standard output when `path` is `None`.
pub fn emit(text: &str, path: Option<&FsPath>) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_header_and_rows() {
        let mut t = CsvTable::new(["k", "theta"]);
        t.push(vec![cell(1), cell(1.757)]);
        assert_eq!(t.render(), "k,theta\n1,1.757\n");
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        emit("a\n", Some(&p)).unwrap();
        assert_eq!(fs::read_to_string(p).unwrap(), "a\n");
    }
}
