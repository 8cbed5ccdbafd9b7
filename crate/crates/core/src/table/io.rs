use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::class::ElementClass;

use super::{CellValue, Column, ColumnKind, ModelTables, SubDatabase, TableError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMeta {
    pub rows: usize,
    pub columns: Vec<Column>,
}

/// Contents of `<model>_meta.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model_name: String,
    pub length_unit: String,
    pub tables: BTreeMap<ElementClass, TableMeta>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TableError + '_ {
    move |source| TableError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn csv_file_name(model_name: &str, label: ElementClass) -> String {
    format!("{model_name}_{label}.csv")
}

fn meta_file_name(model_name: &str) -> String {
    format!("{model_name}_meta.json")
}

pub fn to_csv_string(db: &SubDatabase) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    // writing to a Vec cannot fail
    w.write_record(db.header()).expect("in-memory write");
    for row in db.rows() {
        w.write_record(row.iter().map(|c| c.to_string()))
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn write_csv(db: &SubDatabase, path: &Path) -> Result<(), TableError> {
    fs::write(path, to_csv_string(db)).map_err(io_err(path))
}

fn infer_kind(name: &str, values: &[&str]) -> ColumnKind {
    match name {
        "name" | "long_name" | "floor" | "fire_rating" => ColumnKind::Text,
        n if n.ends_with("_ids") => ColumnKind::Ids,
        _ if values
            .iter()
            .all(|v| v.is_empty() || v.parse::<f64>().is_ok_and(f64::is_finite)) =>
        {
            ColumnKind::Number
        }
        _ => ColumnKind::Text,
    }
}

fn parse_cell(kind: ColumnKind, raw: &str) -> Option<CellValue> {
    if raw.is_empty() {
        return Some(CellValue::Empty);
    }
    match kind {
        ColumnKind::Text => Some(CellValue::Text(raw.to_string())),
        ColumnKind::Number => raw
            .parse::<f64>()
            .ok()
            .filter(|n| n.is_finite())
            .map(CellValue::Number),
        ColumnKind::Ids => raw
            .split(';')
            .map(|s| s.trim().parse::<u64>().ok())
            .collect::<Option<Vec<_>>>()
            .map(CellValue::Ids),
    }
}

/// Parse CSV text. Column kinds come from `kinds` when given, otherwise from
/// column names and contents.
pub fn parse_csv(
    text: &str,
    label: ElementClass,
    model_name: &str,
    length_unit: &str,
    kinds: Option<&[Column]>,
) -> Result<SubDatabase, TableError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut raw_rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(TableError::CsvShape {
                row,
                expected: header.len(),
                got: record.len(),
            });
        }
        raw_rows.push(record.iter().map(str::to_string).collect::<Vec<_>>());
    }

    let columns: Vec<Column> = match kinds {
        Some(cols) => {
            let names: Vec<&str> = cols.iter().map(|c| c.name.as_str()).collect();
            if names != header {
                return Err(TableError::Schema(format!(
                    "header {header:?} does not match metadata {names:?}"
                )));
            }
            cols.to_vec()
        }
        None => header
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let values: Vec<&str> = raw_rows.iter().map(|r| r[i].as_str()).collect();
                Column::new(name.clone(), infer_kind(name, &values))
            })
            .collect(),
    };

    let rows = raw_rows
        .iter()
        .enumerate()
        .map(|(r, raw)| {
            raw.iter()
                .zip(&columns)
                .map(|(value, col)| {
                    parse_cell(col.kind, value).ok_or_else(|| TableError::CsvValue {
                        row: r,
                        column: col.name.clone(),
                        value: value.clone(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    SubDatabase::new(label, model_name, length_unit, columns, rows)
}

/// Split `<model>_<label>.csv` at the last underscore.
fn split_file_name(path: &Path) -> Result<(String, ElementClass), TableError> {
    let file = path
        .file_name()
        .and_then(|f| f.to_str())
        .unwrap_or_default()
        .to_string();
    let bad = || TableError::BadFileName(file.clone());
    let stem = file.strip_suffix(".csv").ok_or_else(bad)?;
    let (model, label) = stem.rsplit_once('_').ok_or_else(bad)?;
    let label = label.parse().map_err(|_| bad())?;
    Ok((model.to_string(), label))
}

pub fn read_meta(dir: &Path, model_name: &str) -> Result<Option<ModelMeta>, TableError> {
    let path = dir.join(meta_file_name(model_name));
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok(Some(serde_json::from_str(&text)?))
}

/// Read one table. Model name and label come from the file name; column
/// kinds and length unit come from the sidecar when one sits next to it.
pub fn read_csv(path: &Path) -> Result<SubDatabase, TableError> {
    let (model, label) = split_file_name(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let meta = read_meta(dir, &model)?;
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let unit = meta.as_ref().map(|m| m.length_unit.as_str()).unwrap_or("");
    let kinds = meta
        .as_ref()
        .and_then(|m| m.tables.get(&label))
        .map(|t| t.columns.as_slice());
    parse_csv(&text, label, &model, unit, kinds)
}

/// Write all tables plus the sidecar; returns the written paths.
pub fn write_model_dir(tables: &ModelTables, dir: &Path) -> Result<Vec<PathBuf>, TableError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for (label, db) in &tables.tables {
        let path = dir.join(csv_file_name(&tables.model_name, *label));
        write_csv(db, &path)?;
        written.push(path);
    }
    let meta = ModelMeta {
        model_name: tables.model_name.clone(),
        length_unit: tables.length_unit.clone(),
        tables: tables
            .tables
            .iter()
            .map(|(l, db)| {
                (
                    *l,
                    TableMeta {
                        rows: db.row_count(),
                        columns: db.columns().to_vec(),
                    },
                )
            })
            .collect(),
    };
    let path = dir.join(meta_file_name(&tables.model_name));
    let mut json = serde_json::to_string_pretty(&meta)?;
    json.push('\n');
    fs::write(&path, json).map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}

/// Read every `<model>_<label>.csv` present in `dir`.
pub fn read_model_dir(dir: &Path, model_name: &str) -> Result<ModelTables, TableError> {
    let meta = read_meta(dir, model_name)?;
    let mut tables = BTreeMap::new();
    for label in ElementClass::ALL {
        let path = dir.join(csv_file_name(model_name, label));
        if path.exists() {
            tables.insert(label, read_csv(&path)?);
        }
    }
    Ok(ModelTables {
        model_name: model_name.to_string(),
        length_unit: meta.map(|m| m.length_unit).unwrap_or_default(),
        tables,
    })
}
