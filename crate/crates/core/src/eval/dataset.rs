//! Annotated question datasets: JSONL (canonical) and CSV/TSV import.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::class::ElementClass;
use crate::qa::{AggregationOp, QueryPlan};
use crate::table::CellCoord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryType {
    Attribute,
    Spatial,
    Comparative,
    Aggregation,
}

impl QueryType {
    pub const ALL: [QueryType; 4] = [
        QueryType::Attribute,
        QueryType::Spatial,
        QueryType::Comparative,
        QueryType::Aggregation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryType::Attribute => "attribute",
            QueryType::Spatial => "spatial",
            QueryType::Comparative => "comparative",
            QueryType::Aggregation => "aggregation",
        }
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryType {
    type Err = String;

    /// Accepts the short names and the long typology names
    /// ("attribute query", "spatial relationship", ...).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_lowercase();
        let first = s.split([' ', '_', '-']).next().unwrap_or("");
        match first {
            "attribute" => Ok(QueryType::Attribute),
            "spatial" => Ok(QueryType::Spatial),
            "comparative" => Ok(QueryType::Comparative),
            "aggregation" | "aggregative" => Ok(QueryType::Aggregation),
            _ => Err(format!("unknown query type {s:?}")),
        }
    }
}

/// One labelled question.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub question: String,
    /// Relative to the dataset's tables root.
    pub table_file: PathBuf,
    pub answer_coordinates: Vec<CellCoord>,
    pub answer_text: Vec<String>,
    pub aggregation_label: AggregationOp,
    pub float_answer: Option<f64>,
    pub table_label: ElementClass,
    pub query_type: Option<QueryType>,
    /// Structured form of the question, for the deterministic executor.
    pub plan: Option<QueryPlan>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: bad coordinate {text:?}")]
    BadCoordinate { line: usize, text: String },
}

impl DatasetError {
    fn schema(line: usize, field: &str, message: impl Into<String>) -> Self {
        DatasetError::Schema {
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Parse `(r, c)` tuples out of text such as `[(0, 6), (1, 6)]`,
/// `['(0, 6)', '(1, 6)']` or `(1,5)`.
pub fn parse_coordinates(text: &str) -> Option<Vec<CellCoord>> {
    let mut out = Vec::new();
    let mut rest = text.trim();
    let inner = rest.strip_prefix('[').and_then(|r| r.strip_suffix(']'));
    if let Some(inner) = inner {
        rest = inner.trim();
    }
    while !rest.is_empty() {
        let rest_trimmed = rest.trim_start_matches([' ', ',', '\'', '"']);
        if rest_trimmed.is_empty() {
            break;
        }
        let body = rest_trimmed.strip_prefix('(')?;
        let close = body.find(')')?;
        let (r, c) = body[..close].split_once(',')?;
        out.push(CellCoord::new(
            r.trim().parse().ok()?,
            c.trim().parse().ok()?,
        ));
        rest = body[close + 1..].trim_start_matches(['\'', '"']);
    }
    Some(out)
}

pub fn format_coordinate(c: CellCoord) -> String {
    format!("({}, {})", c.row, c.col)
}

/// Items of `[a, b]`, `['a', 'b']` or a bare value.
fn parse_text_list(text: &str) -> Vec<String> {
    let t = text.trim();
    let Some(inner) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) else {
        return if t.is_empty() {
            Vec::new()
        } else {
            vec![t.to_string()]
        };
    };
    let mut items = Vec::new();
    let mut current = String::new();
    let mut quote: Option<char> = None;
    for ch in inner.chars() {
        match (quote, ch) {
            (None, '\'' | '"') if current.trim().is_empty() => {
                current.clear();
                quote = Some(ch);
            }
            (Some(q), c) if c == q => quote = None,
            (None, ',') => items.push(std::mem::take(&mut current)),
            _ => current.push(ch),
        }
    }
    items.push(current);
    items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn value_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn required_str<'a>(
    obj: &'a Map<String, Value>,
    line: usize,
    field: &str,
) -> Result<&'a str, DatasetError> {
    match obj.get(field) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s),
        Some(_) => Err(DatasetError::schema(
            line,
            field,
            "expected a non-empty string",
        )),
        None => Err(DatasetError::schema(line, field, "missing")),
    }
}

fn coordinates_field(v: Option<&Value>, line: usize) -> Result<Vec<CellCoord>, DatasetError> {
    let bad = |text: String| DatasetError::BadCoordinate { line, text };
    match v {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::String(s)) => parse_coordinates(s).ok_or_else(|| bad(s.clone())),
        Some(Value::Array(items)) => {
            let mut out = Vec::new();
            for item in items {
                match item {
                    Value::String(s) => {
                        out.extend(parse_coordinates(s).ok_or_else(|| bad(s.clone()))?)
                    }
                    Value::Array(pair) if pair.len() == 2 => {
                        let r = pair[0].as_u64().ok_or_else(|| bad(item.to_string()))?;
                        let c = pair[1].as_u64().ok_or_else(|| bad(item.to_string()))?;
                        out.push(CellCoord::new(r as usize, c as usize));
                    }
                    other => return Err(bad(other.to_string())),
                }
            }
            Ok(out)
        }
        Some(other) => Err(bad(other.to_string())),
    }
}

fn answer_text_field(v: Option<&Value>, line: usize) -> Result<Vec<String>, DatasetError> {
    match v {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|i| {
                value_text(i).ok_or_else(|| {
                    DatasetError::schema(line, "answer_text", "items must be strings or numbers")
                })
            })
            .collect(),
        Some(Value::Number(n)) => Ok(vec![n.to_string()]),
        Some(Value::String(s)) => Ok(vec![s.clone()]),
        Some(_) => Err(DatasetError::schema(
            line,
            "answer_text",
            "expected a list or a string",
        )),
    }
}

fn aggregation_field(v: Option<&Value>, line: usize) -> Result<AggregationOp, DatasetError> {
    let err = |m: &str| DatasetError::schema(line, "aggregation_label", m);
    let i = match v {
        None => return Err(err("missing")),
        Some(Value::Number(n)) => n.as_i64().ok_or_else(|| err("expected an integer 0-3"))?,
        Some(Value::String(s)) => s
            .trim()
            .parse()
            .map_err(|_| err("expected an integer 0-3"))?,
        Some(_) => return Err(err("expected an integer 0-3")),
    };
    AggregationOp::from_index(i).ok_or_else(|| err("expected an integer 0-3"))
}

fn float_field(v: Option<&Value>, line: usize) -> Result<Option<f64>, DatasetError> {
    let err = || DatasetError::schema(line, "float_answer", "expected a number");
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => n.as_f64().map(Some).ok_or_else(err),
        Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
        Some(Value::String(s)) => s.trim().parse().map(Some).map_err(|_| err()),
        Some(_) => Err(err()),
    }
}

fn check(a: Annotation, line: usize) -> Result<Annotation, DatasetError> {
    if a.aggregation_label != AggregationOp::None && a.float_answer.is_none() {
        return Err(DatasetError::schema(
            line,
            "float_answer",
            format!(
                "required when aggregation_label is {}",
                a.aggregation_label.index()
            ),
        ));
    }
    if let Some(f) = a.float_answer {
        if !f.is_finite() {
            return Err(DatasetError::schema(line, "float_answer", "not finite"));
        }
    }
    Ok(a)
}

fn from_object(obj: &Map<String, Value>, line: usize) -> Result<Annotation, DatasetError> {
    let question = required_str(obj, line, "question")?.to_string();
    let table_file = PathBuf::from(required_str(obj, line, "table_file")?);
    let table_label = required_str(obj, line, "table_label")?
        .parse::<ElementClass>()
        .map_err(|e| DatasetError::schema(line, "table_label", e.to_string()))?;
    let query_type = match obj.get("query_type") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(
            s.parse()
                .map_err(|e: String| DatasetError::schema(line, "query_type", e))?,
        ),
        Some(_) => {
            return Err(DatasetError::schema(
                line,
                "query_type",
                "expected a string",
            ))
        }
    };
    let plan = match obj.get("plan") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            serde_json::from_value(v.clone())
                .map_err(|e| DatasetError::schema(line, "plan", e.to_string()))?,
        ),
    };
    check(
        Annotation {
            question,
            table_file,
            answer_coordinates: coordinates_field(obj.get("answer_coordinates"), line)?,
            answer_text: answer_text_field(obj.get("answer_text"), line)?,
            aggregation_label: aggregation_field(obj.get("aggregation_label"), line)?,
            float_answer: float_field(obj.get("float_answer"), line)?,
            table_label,
            query_type,
            plan,
        },
        line,
    )
}

/// One JSON object per non-blank line.
pub fn parse_jsonl(text: &str) -> Result<Vec<Annotation>, DatasetError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw)
            .map_err(|e| DatasetError::schema(line, "<record>", e.to_string()))?;
        let Value::Object(obj) = value else {
            return Err(DatasetError::schema(
                line,
                "<record>",
                "expected a JSON object",
            ));
        };
        out.push(from_object(&obj, line)?);
    }
    Ok(out)
}

const CSV_FIELDS: [&str; 8] = [
    "question",
    "table_file",
    "answer_coordinates",
    "answer_text",
    "aggregation_label",
    "float_answer",
    "table_label",
    "query_type",
];

/// Columns in the order question, table_file, answer_coordinates,
/// answer_text, aggregation_label, float_answer, table_label and an optional
/// query_type. A header row is skipped when present. Tab-separated input is
/// detected from the first line.
pub fn parse_csv(text: &str) -> Result<Vec<Annotation>, DatasetError> {
    let delimiter = match text.lines().next() {
        Some(first) if first.contains('\t') => b'\t',
        _ => b',',
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| DatasetError::schema(line, "<record>", e.to_string()))?;
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if i == 0
            && record
                .get(0)
                .is_some_and(|f| f.trim().eq_ignore_ascii_case("question"))
        {
            continue;
        }
        if record.len() < 7 {
            return Err(DatasetError::schema(
                line,
                CSV_FIELDS[record.len()],
                format!("expected at least 7 columns, got {}", record.len()),
            ));
        }
        let mut obj = Map::new();
        for (field, value) in CSV_FIELDS.iter().zip(record.iter()) {
            let value = value.trim();
            let v = match *field {
                "answer_text" => Value::Array(
                    parse_text_list(value)
                        .into_iter()
                        .map(Value::String)
                        .collect(),
                ),
                "query_type" if value.is_empty() => Value::Null,
                _ => Value::String(value.to_string()),
            };
            obj.insert(field.to_string(), v);
        }
        out.push(from_object(&obj, line)?);
    }
    Ok(out)
}

/// Load a dataset; `.csv` and `.tsv` files go through the CSV importer,
/// anything else is read as JSONL.
pub fn load_dataset(path: &Path) -> Result<Vec<Annotation>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") || ext.eq_ignore_ascii_case("tsv") => {
            parse_csv(&text)
        }
        _ => parse_jsonl(&text),
    }
}

impl Annotation {
    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("question".into(), Value::String(self.question.clone()));
        obj.insert(
            "table_file".into(),
            Value::String(self.table_file.to_string_lossy().into_owned()),
        );
        obj.insert(
            "answer_coordinates".into(),
            self.answer_coordinates
                .iter()
                .map(|c| Value::String(format_coordinate(*c)))
                .collect(),
        );
        obj.insert(
            "answer_text".into(),
            self.answer_text
                .iter()
                .cloned()
                .map(Value::String)
                .collect(),
        );
        obj.insert(
            "aggregation_label".into(),
            Value::from(self.aggregation_label.index()),
        );
        obj.insert(
            "float_answer".into(),
            self.float_answer.map_or(Value::Null, Value::from),
        );
        obj.insert(
            "table_label".into(),
            Value::String(self.table_label.to_string()),
        );
        if let Some(t) = self.query_type {
            obj.insert("query_type".into(), Value::String(t.to_string()));
        }
        if let Some(p) = &self.plan {
            obj.insert(
                "plan".into(),
                serde_json::to_value(p).expect("plan serializes"),
            );
        }
        Value::Object(obj)
    }
}

pub fn to_jsonl(annotations: &[Annotation]) -> String {
    annotations
        .iter()
        .map(|a| a.to_json().to_string() + "\n")
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLOOR_ROW: &str = r#"{"question":"Can you let me know the window count inside the building?","table_file":"Savoyvilla_floor.csv","answer_coordinates":["(0, 5)","(1, 5)","(2, 5)","(3, 5)"],"answer_text":["92"],"aggregation_label":1,"float_answer":92,"table_label":"floor"}"#;

    #[test]
    fn floor_row() {
        let a = parse_jsonl(FLOOR_ROW).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].aggregation_label, AggregationOp::Sum);
        assert_eq!(a[0].float_answer, Some(92.0));
        assert_eq!(a[0].table_label, ElementClass::Floor);
        assert_eq!(a[0].answer_coordinates.len(), 4);
        assert_eq!(a[0].query_type, None);
    }

    #[test]
    fn empty_input() {
        assert!(parse_jsonl("").unwrap().is_empty());
        assert!(parse_jsonl("\n\n").unwrap().is_empty());
        assert!(parse_csv("").unwrap().is_empty());
    }

    #[test]
    fn aggregation_needs_float() {
        let line = FLOOR_ROW.replace(
            "\"aggregation_label\":1,\"float_answer\":92",
            "\"aggregation_label\":2",
        );
        match parse_jsonl(&line) {
            Err(DatasetError::Schema { line: 1, field, .. }) => assert_eq!(field, "float_answer"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_coordinate() {
        let line = FLOOR_ROW.replace("\"(3, 5)\"", "\"(3; 5)\"");
        assert!(matches!(
            parse_jsonl(&line),
            Err(DatasetError::BadCoordinate { line: 1, .. })
        ));
    }

    #[test]
    fn coordinate_forms() {
        let want = vec![CellCoord::new(0, 6), CellCoord::new(1, 6)];
        assert_eq!(parse_coordinates("[(0, 6), (1, 6)]").unwrap(), want);
        assert_eq!(parse_coordinates("['(0, 6)', '(1, 6)']").unwrap(), want);
        assert_eq!(parse_coordinates("[(0,6),(1,6)]").unwrap(), want);
        assert_eq!(parse_coordinates("[]").unwrap(), vec![]);
        assert_eq!(parse_coordinates("(x, 1)"), None);
    }

    #[test]
    fn text_lists() {
        assert_eq!(parse_text_list("[92]"), vec!["92"]);
        assert_eq!(parse_text_list("[F1,F2]"), vec!["F1", "F2"]);
        assert_eq!(parse_text_list("['a, b', 'c']"), vec!["a, b", "c"]);
        assert_eq!(parse_text_list("[Level 1 Room 2]"), vec!["Level 1 Room 2"]);
        assert_eq!(parse_text_list("plain"), vec!["plain"]);
    }

    #[test]
    fn csv_import_with_header() {
        let text = "question\ttable_file\tanswer_coordinates\tanswer_text\taggregation_label\tfloat_answer\ttable_label\n\
                    The elevation of F2?\t12-1-1_floor.csv\t[(2,2)]\t[3600]\t0\t3600\tfloor\n\
                    Which floor have spaces?\t12-1-1_floor.csv\t[(1,1),(2,1)]\t[F1,F2]\t0\t\tfloor\n";
        let a = parse_csv(text).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].float_answer, Some(3600.0));
        assert_eq!(a[1].answer_text, vec!["F1", "F2"]);
        assert_eq!(a[1].float_answer, None);
    }

    #[test]
    fn jsonl_round_trip() {
        let mut a = parse_jsonl(FLOOR_ROW).unwrap();
        a[0].query_type = Some(QueryType::Aggregation);
        a[0].plan = Some(QueryPlan::new(
            ElementClass::Floor,
            &["window_count"],
            AggregationOp::Sum,
        ));
        assert_eq!(parse_jsonl(&to_jsonl(&a)).unwrap(), a);
    }

    #[test]
    fn query_type_names() {
        assert_eq!("Attribute query".parse(), Ok(QueryType::Attribute));
        assert_eq!("spatial relationship".parse(), Ok(QueryType::Spatial));
        assert_eq!("comparative reasoning".parse(), Ok(QueryType::Comparative));
        assert_eq!("aggregation operation".parse(), Ok(QueryType::Aggregation));
        assert!("other".parse::<QueryType>().is_err());
    }
}
