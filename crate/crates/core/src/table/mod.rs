//! Per-class sub-databases: typed tables built from an IFC model.

mod build;
mod io;

pub use build::{snake_case, tabulate, ModelTables};
pub use io::{
    csv_file_name, parse_csv, read_csv, read_meta, read_model_dir, to_csv_string, write_csv,
    write_model_dir, ModelMeta, TableMeta,
};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::class::ElementClass;

#[derive(Debug, Clone, PartialEq)]
pub enum CellValue {
    Empty,
    Number(f64),
    Text(String),
    Ids(Vec<u64>),
}

impl CellValue {
    pub fn is_empty(&self) -> bool {
        matches!(self, CellValue::Empty)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            CellValue::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn kind(&self) -> Option<ColumnKind> {
        match self {
            CellValue::Empty => None,
            CellValue::Number(_) => Some(ColumnKind::Number),
            CellValue::Text(_) => Some(ColumnKind::Text),
            CellValue::Ids(_) => Some(ColumnKind::Ids),
        }
    }

    pub fn text(s: impl Into<String>) -> Self {
        let s = s.into();
        if s.is_empty() {
            CellValue::Empty
        } else {
            CellValue::Text(s)
        }
    }

    pub fn ids(mut ids: Vec<u64>) -> Self {
        if ids.is_empty() {
            CellValue::Empty
        } else {
            ids.sort_unstable();
            ids.dedup();
            CellValue::Ids(ids)
        }
    }

    pub fn opt_number(v: Option<f64>) -> Self {
        v.map_or(CellValue::Empty, CellValue::Number)
    }
}

/// CSV spelling: numbers in shortest round-trip form, id lists joined by `;`.
impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Empty => Ok(()),
            CellValue::Number(n) => write!(f, "{n}"),
            CellValue::Text(s) => f.write_str(s),
            CellValue::Ids(ids) => {
                for (i, id) in ids.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{id}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Number,
    Text,
    Ids,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Column {
            name: name.into(),
            kind,
        }
    }
}

/// 0-based (row, col) over data rows; the header is not a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellCoord {
    pub row: usize,
    pub col: usize,
}

impl CellCoord {
    pub fn new(row: usize, col: usize) -> Self {
        CellCoord { row, col }
    }
}

impl fmt::Display for CellCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("data row {row}: expected {expected} fields, got {got}")]
    CsvShape {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("data row {row}, column {column}: cannot read {value:?}")]
    CsvValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("invalid table: {0}")]
    Schema(String),
    #[error("file name {0:?} is not <model>_<label>.csv")]
    BadFileName(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("metadata: {0}")]
    Meta(#[from] serde_json::Error),
}

/// One immutable table for one element class of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct SubDatabase {
    label: ElementClass,
    model_name: String,
    length_unit: String,
    columns: Vec<Column>,
    rows: Vec<Vec<CellValue>>,
}

impl SubDatabase {
    /// Checks row widths, unique column names, finite numbers and that each
    /// non-empty cell agrees with its column kind.
    pub fn new(
        label: ElementClass,
        model_name: impl Into<String>,
        length_unit: impl Into<String>,
        columns: Vec<Column>,
        rows: Vec<Vec<CellValue>>,
    ) -> Result<Self, TableError> {
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(TableError::Schema(format!("duplicate column {:?}", c.name)));
            }
        }
        let mut rows = rows;
        for (r, row) in rows.iter_mut().enumerate() {
            if row.len() != columns.len() {
                return Err(TableError::CsvShape {
                    row: r,
                    expected: columns.len(),
                    got: row.len(),
                });
            }
            for (cell, col) in row.iter_mut().zip(&columns) {
                match cell {
                    CellValue::Text(s) if s.is_empty() => *cell = CellValue::Empty,
                    CellValue::Ids(ids) if ids.is_empty() => *cell = CellValue::Empty,
                    CellValue::Number(n) if !n.is_finite() => {
                        return Err(TableError::Schema(format!(
                            "non-finite number in row {r}, column {:?}",
                            col.name
                        )))
                    }
                    _ => {}
                }
                if let Some(kind) = cell.kind() {
                    if kind != col.kind {
                        return Err(TableError::Schema(format!(
                            "row {r}, column {:?}: {kind:?} cell in {:?} column",
                            col.name, col.kind
                        )));
                    }
                }
            }
        }
        Ok(SubDatabase {
            label,
            model_name: model_name.into(),
            length_unit: length_unit.into(),
            columns,
            rows,
        })
    }

    pub fn label(&self) -> ElementClass {
        self.label
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn length_unit(&self) -> &str {
        &self.length_unit
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn header(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn rows(&self) -> &[Vec<CellValue>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn cell(&self, coord: CellCoord) -> Option<&CellValue> {
        self.rows.get(coord.row)?.get(coord.col)
    }

    /// Same table with a different label, e.g. when a query was routed to
    /// the wrong class.
    pub fn relabeled(&self, label: ElementClass) -> Self {
        SubDatabase {
            label,
            ..self.clone()
        }
    }

    /// Contiguous rows `start..end` as a new table.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        SubDatabase {
            rows: self.rows[start..end].to_vec(),
            ..self.clone()
        }
    }
}
