//! Comma-separated output tables.
//!
//! Layout: `#`-prefixed comment lines, one header line, then data rows.
//! Floats are written in scientific notation with 17 significant digits,
//! which round-trips every `f64`; integers and labels are written as-is.
//! Parsing a rendered table and rendering it again gives the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            Cell::Int(v) => write!(out, "{v}").unwrap(),
            Cell::Num(v) => write!(out, "{v:.16e}").unwrap(),
            Cell::Text(s) => out.push_str(s),
        }
    }

    fn parse(s: &str) -> Cell {
        if let Ok(v) = s.parse::<i64>() {
            Cell::Int(v)
        } else if let Some(v) = s.parse::<f64>().ok().filter(|_| looks_numeric(s)) {
            Cell::Num(v)
        } else {
            Cell::Text(s.to_string())
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }
}

// `str::parse::<f64>` also accepts words such as "inf" and "infinity".
fn looks_numeric(s: &str) -> bool {
    s == "NaN" || s.bytes().any(|b| b.is_ascii_digit())
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputTable {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl OutputTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        OutputTable {
            comments: Vec::new(),
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.comments.push(format!("{key}: {value}"));
        self
    }

    /// Panics if the row width differs from the header.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                cell.render(&mut out);
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<OutputTable> {
        let mut table = OutputTable::default();
        let mut have_header = false;
        for (idx, line) in text.lines().enumerate() {
            if let Some(c) = line.strip_prefix('#') {
                if have_header {
                    return Err(SimError::Table {
                        line: idx + 1,
                        message: "comment after header".into(),
                    });
                }
                table.comments.push(c.strip_prefix(' ').unwrap_or(c).to_string());
            } else if !have_header {
                table.header = line.split(',').map(str::to_string).collect();
                have_header = true;
            } else {
                let row: Vec<Cell> = line.split(',').map(Cell::parse).collect();
                if row.len() != table.header.len() {
                    return Err(SimError::Table {
                        line: idx + 1,
                        message: format!(
                            "{} cells, header has {}",
                            row.len(),
                            table.header.len()
                        ),
                    });
                }
                table.rows.push(row);
            }
        }
        if !have_header {
            return Err(SimError::Table {
                line: text.lines().count(),
                message: "missing header".into(),
            });
        }
        Ok(table)
    }
}

/// Writes `table` to `path`, creating parent directories.
pub fn emit_table(table: &OutputTable, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    }
    fs::write(path, table.render()).map_err(|e| SimError::io(path, e))
}
