use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::scalar::ExactSum;
use crate::table::{CellCoord, CellValue, SubDatabase};

use super::plan::{AggregationOp, Comparator, Direction, Filter, Literal, QueryPlan};
use super::QaError;

/// Denotation of a query: supporting cells, answer texts and an optional
/// number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub coordinates: Vec<CellCoord>,
    pub texts: Vec<String>,
    pub float_value: Option<f64>,
    pub aggregation: AggregationOp,
}

impl Answer {
    pub fn aggregate(coordinates: Vec<CellCoord>, value: f64, aggregation: AggregationOp) -> Self {
        Answer {
            coordinates,
            texts: vec![format_float(value)],
            float_value: Some(value),
            aggregation,
        }
    }
}

/// Shortest round-trip decimal, `92` rather than `92.0`.
pub fn format_float(v: f64) -> String {
    format!("{v}")
}

/// Executor output before aggregation: ranked rows and the projected
/// non-empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub rows: Vec<usize>,
    pub coordinates: Vec<CellCoord>,
}

fn id_literal(v: &Literal) -> Option<u64> {
    match v {
        Literal::Number(n) if *n >= 0.0 && n.fract() == 0.0 && *n <= u64::MAX as f64 => {
            Some(*n as u64)
        }
        Literal::Text(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn norm(s: &str) -> String {
    s.trim().to_lowercase()
}

pub(crate) fn filter_matches(cell: &CellValue, op: Comparator, value: &Literal) -> bool {
    if op == Comparator::Contains {
        let Some(id) = id_literal(value) else {
            return false;
        };
        return match cell {
            CellValue::Ids(ids) => ids.contains(&id),
            CellValue::Number(n) => *n == id as f64,
            _ => false,
        };
    }
    let ord = match (cell, value) {
        (CellValue::Empty, _) => return false,
        (CellValue::Number(a), Literal::Number(b)) => a.partial_cmp(b),
        (CellValue::Text(a), Literal::Text(b)) => Some(norm(a).cmp(&norm(b))),
        _ => None,
    };
    match (op, ord) {
        (Comparator::Ne, None) => true,
        (_, None) => false,
        (Comparator::Eq, Some(o)) => o == Ordering::Equal,
        (Comparator::Ne, Some(o)) => o != Ordering::Equal,
        (Comparator::Lt, Some(o)) => o == Ordering::Less,
        (Comparator::Le, Some(o)) => o != Ordering::Greater,
        (Comparator::Gt, Some(o)) => o == Ordering::Greater,
        (Comparator::Ge, Some(o)) => o != Ordering::Less,
        (Comparator::Contains, _) => unreachable!(),
    }
}

fn type_rank(c: &CellValue) -> u8 {
    match c {
        CellValue::Number(_) => 0,
        CellValue::Text(_) => 1,
        CellValue::Ids(_) => 2,
        CellValue::Empty => 3,
    }
}

/// Sort key comparison for order_by. Empty cells go last in both directions.
pub(crate) fn compare_cells(a: &CellValue, b: &CellValue, direction: Direction) -> Ordering {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Ordering::Equal,
        (true, false) => return Ordering::Greater,
        (false, true) => return Ordering::Less,
        _ => {}
    }
    let o = type_rank(a).cmp(&type_rank(b)).then_with(|| match (a, b) {
        (CellValue::Number(x), CellValue::Number(y)) => x.total_cmp(y),
        (CellValue::Text(x), CellValue::Text(y)) => norm(x).cmp(&norm(y)),
        (CellValue::Ids(x), CellValue::Ids(y)) => x.cmp(y),
        _ => Ordering::Equal,
    });
    match direction {
        Direction::Asc => o,
        Direction::Desc => o.reverse(),
    }
}

fn row_passes(row: &[CellValue], filters: &[(usize, &Filter)]) -> bool {
    filters
        .iter()
        .all(|(i, f)| filter_matches(&row[*i], f.op, &f.value))
}

/// Filter, rank and truncate; the plan must already be valid for `db`.
pub fn select(plan: &QueryPlan, db: &SubDatabase) -> Selection {
    let filters: Vec<(usize, &Filter)> = plan
        .filters
        .iter()
        .map(|f| (db.column_index(&f.column).expect("validated"), f))
        .collect();
    let mut rows: Vec<usize> = (0..db.row_count())
        .filter(|&r| row_passes(&db.rows()[r], &filters))
        .collect();
    if let Some(order) = &plan.order_by {
        let c = db.column_index(&order.column).expect("validated");
        rank_rows(db, &mut rows, c, order.direction);
        rows.truncate(order.limit);
    }
    Selection {
        coordinates: project(plan, db, &rows),
        rows,
    }
}

/// Stable sort; callers pass rows in ascending index order so ties keep
/// ascending row index.
pub(crate) fn rank_rows(db: &SubDatabase, rows: &mut [usize], col: usize, direction: Direction) {
    rows.sort_by(|&a, &b| compare_cells(&db.rows()[a][col], &db.rows()[b][col], direction));
}

pub(crate) fn project(plan: &QueryPlan, db: &SubDatabase, rows: &[usize]) -> Vec<CellCoord> {
    let cols: Vec<usize> = plan
        .project
        .iter()
        .map(|p| db.column_index(p).expect("validated"))
        .collect();
    rows.iter()
        .flat_map(|&r| cols.iter().map(move |&c| CellCoord::new(r, c)))
        .filter(|&coord| !db.rows()[coord.row][coord.col].is_empty())
        .collect()
}

/// Exact running sum of the selected numeric cells.
pub(crate) fn exact_sum(db: &SubDatabase, coords: &[CellCoord]) -> ExactSum<f64> {
    coords
        .iter()
        .filter_map(|&c| db.cell(c).and_then(CellValue::as_f64))
        .collect()
}

/// Turn a selection into an answer.
pub(crate) fn aggregate(
    plan: &QueryPlan,
    db: &SubDatabase,
    coordinates: Vec<CellCoord>,
) -> Result<Answer, QaError> {
    let cell = |c: &CellCoord| db.cell(*c).expect("selected cell exists");
    match plan.aggregation {
        AggregationOp::None => {
            let texts = coordinates.iter().map(|c| cell(c).to_string()).collect();
            let float_value = match coordinates.as_slice() {
                [only] => cell(only).as_f64(),
                _ => None,
            };
            Ok(Answer {
                coordinates,
                texts,
                float_value,
                aggregation: AggregationOp::None,
            })
        }
        AggregationOp::Count => {
            let n = coordinates.len() as f64;
            Ok(Answer::aggregate(coordinates, n, AggregationOp::Count))
        }
        AggregationOp::Sum => {
            let sum = exact_sum(db, &coordinates).value();
            Ok(Answer::aggregate(coordinates, sum, AggregationOp::Sum))
        }
        AggregationOp::Avg => {
            if coordinates.is_empty() {
                return Err(QaError::EmptyAverage);
            }
            let sum = exact_sum(db, &coordinates).value();
            let avg = sum / coordinates.len() as f64;
            Ok(Answer::aggregate(coordinates, avg, AggregationOp::Avg))
        }
    }
}

/// Run a plan over one table.
pub fn execute(plan: &QueryPlan, db: &SubDatabase) -> Result<Answer, QaError> {
    plan.validate(db)?;
    let selection = select(plan, db);
    aggregate(plan, db, selection.coordinates)
}
