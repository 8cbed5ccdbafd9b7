//! Oversized tables: split into fixed-size row segments, answer each one
//! independently and merge per aggregation type.

use rayon::prelude::*;

use crate::scalar::ExactSum;
use crate::table::{CellCoord, SubDatabase};

use super::exec::{aggregate, exact_sum, project, rank_rows, select, Answer};
use super::plan::{AggregationOp, QueryPlan};
use super::QaError;

/// What a backend reports for one segment. Coordinates are local to the
/// segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentResult {
    pub answer: Answer,
    /// Exact partial sum for SUM plans, when the backend can provide one.
    pub exact_sum: Option<ExactSum<f64>>,
    /// Ranked selected rows for order_by plans. Backends that cannot report
    /// rows leave this empty and rows are read off the coordinates.
    pub ranked_rows: Option<Vec<usize>>,
}

impl SegmentResult {
    pub fn from_answer(answer: Answer) -> Self {
        SegmentResult {
            answer,
            exact_sum: None,
            ranked_rows: None,
        }
    }
}

/// Answers a plan over one segment. Calls must be independent of each other.
pub trait SegmentAnswerer: Sync {
    fn answer_segment(
        &self,
        plan: &QueryPlan,
        segment: &SubDatabase,
    ) -> Result<SegmentResult, QaError>;
}

/// The deterministic executor as a segment backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExecutorBackend;

impl SegmentAnswerer for ExecutorBackend {
    fn answer_segment(
        &self,
        plan: &QueryPlan,
        segment: &SubDatabase,
    ) -> Result<SegmentResult, QaError> {
        plan.validate(segment)?;
        let selection = select(plan, segment);
        let sum = (plan.aggregation == AggregationOp::Sum)
            .then(|| exact_sum(segment, &selection.coordinates));
        let answer = aggregate(plan, segment, selection.coordinates)?;
        Ok(SegmentResult {
            answer,
            exact_sum: sum,
            ranked_rows: Some(selection.rows),
        })
    }
}

pub fn segment_count(rows: usize, segment_rows: usize) -> usize {
    rows.div_ceil(segment_rows)
}

fn shift(coords: &[CellCoord], offset: usize) -> impl Iterator<Item = CellCoord> + '_ {
    coords
        .iter()
        .map(move |c| CellCoord::new(c.row + offset, c.col))
}

fn rows_of(result: &SegmentResult) -> Vec<usize> {
    if let Some(rows) = &result.ranked_rows {
        return rows.clone();
    }
    let mut rows: Vec<usize> = Vec::new();
    for c in &result.answer.coordinates {
        if !rows.contains(&c.row) {
            rows.push(c.row);
        }
    }
    rows
}

fn tag(index: usize) -> impl Fn(QaError) -> QaError {
    move |e| QaError::Segment {
        index,
        source: Box::new(e),
    }
}

/// Answer `plan` by splitting `db` into segments of `segment_rows` rows.
pub fn execute_partitioned(
    plan: &QueryPlan,
    db: &SubDatabase,
    segment_rows: usize,
    backend: &dyn SegmentAnswerer,
) -> Result<Answer, QaError> {
    if segment_rows == 0 {
        return Err(QaError::InvalidSegmentSize);
    }
    plan.validate(db)?;
    let n = db.row_count();
    let bounds: Vec<(usize, usize)> = (0..segment_count(n, segment_rows))
        .map(|i| (i * segment_rows, ((i + 1) * segment_rows).min(n)))
        .collect();

    // order_by: candidate rows per segment, then a global re-rank.
    if let Some(order) = &plan.order_by {
        let candidate_plan = plan.with_aggregation(AggregationOp::None);
        let per_segment: Vec<Result<Vec<usize>, QaError>> = bounds
            .par_iter()
            .enumerate()
            .map(|(i, &(start, end))| {
                let seg = db.slice_rows(start, end);
                let result = backend
                    .answer_segment(&candidate_plan, &seg)
                    .map_err(tag(i))?;
                Ok(rows_of(&result)
                    .into_iter()
                    .filter(|&r| r < end - start)
                    .map(|r| r + start)
                    .collect())
            })
            .collect();
        let mut rows = Vec::new();
        for r in per_segment {
            rows.extend(r?);
        }
        rows.sort_unstable();
        rows.dedup();
        let col = db.column_index(&order.column).expect("validated");
        rank_rows(db, &mut rows, col, order.direction);
        rows.truncate(order.limit);
        return aggregate(plan, db, project(plan, db, &rows));
    }

    let calls: Vec<AggregationOp> = match plan.aggregation {
        AggregationOp::Avg => vec![AggregationOp::Sum, AggregationOp::Count],
        op => vec![op],
    };
    let results: Vec<Result<Vec<SegmentResult>, QaError>> = bounds
        .par_iter()
        .enumerate()
        .map(|(i, &(start, end))| {
            let seg = db.slice_rows(start, end);
            calls
                .iter()
                .map(|&op| {
                    backend
                        .answer_segment(&plan.with_aggregation(op), &seg)
                        .map_err(tag(i))
                })
                .collect()
        })
        .collect();

    let mut coordinates = Vec::new();
    let mut texts = Vec::new();
    let mut sum = ExactSum::<f64>::new();
    let mut count = 0.0;
    let mut single_float = None;
    for (i, r) in results.into_iter().enumerate() {
        let r = r?;
        let offset = bounds[i].0;
        let first = &r[0];
        coordinates.extend(shift(&first.answer.coordinates, offset));
        match plan.aggregation {
            AggregationOp::None => {
                texts.extend(first.answer.texts.iter().cloned());
                if first.answer.coordinates.len() == 1 {
                    single_float = first.answer.float_value;
                }
            }
            AggregationOp::Count => count += first.answer.float_value.unwrap_or(0.0),
            AggregationOp::Sum | AggregationOp::Avg => {
                match &first.exact_sum {
                    Some(s) => sum.merge(s),
                    None => sum.add(first.answer.float_value.unwrap_or(0.0)),
                }
                if let Some(c) = r.get(1) {
                    count += c.answer.float_value.unwrap_or(0.0);
                }
            }
        }
    }
    let answer = match plan.aggregation {
        AggregationOp::None => Answer {
            float_value: if coordinates.len() == 1 {
                single_float
            } else {
                None
            },
            coordinates,
            texts,
            aggregation: AggregationOp::None,
        },
        AggregationOp::Count => Answer::aggregate(coordinates, count, AggregationOp::Count),
        AggregationOp::Sum => Answer::aggregate(coordinates, sum.value(), AggregationOp::Sum),
        AggregationOp::Avg => {
            if count == 0.0 {
                return Err(QaError::EmptyAverage);
            }
            Answer::aggregate(coordinates, sum.value() / count, AggregationOp::Avg)
        }
    };
    Ok(answer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class::ElementClass;
    use crate::qa::execute;
    use crate::table::{CellValue, Column, ColumnKind};

    fn column(values: &[f64]) -> SubDatabase {
        SubDatabase::new(
            ElementClass::Beam,
            "m",
            "",
            vec![Column::new("length", ColumnKind::Number)],
            values.iter().map(|&v| vec![CellValue::Number(v)]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn average_over_uneven_segments() {
        let db = column(&[2.0, 4.0, 6.0, 8.0]);
        let plan = QueryPlan::new(ElementClass::Beam, &["length"], AggregationOp::Avg);
        let a = execute_partitioned(&plan, &db, 3, &ExecutorBackend).unwrap();
        assert_eq!(a.float_value, Some(5.0));
        assert_eq!(a.coordinates.len(), 4);
        assert_eq!(a, execute(&plan, &db).unwrap());
    }

    #[test]
    fn zero_segment_size_is_rejected() {
        let db = column(&[1.0]);
        let plan = QueryPlan::new(ElementClass::Beam, &["length"], AggregationOp::Sum);
        assert_eq!(
            execute_partitioned(&plan, &db, 0, &ExecutorBackend),
            Err(QaError::InvalidSegmentSize)
        );
    }

    struct Failing;
    impl SegmentAnswerer for Failing {
        fn answer_segment(
            &self,
            _: &QueryPlan,
            seg: &SubDatabase,
        ) -> Result<SegmentResult, QaError> {
            if seg.rows()[0][0] == CellValue::Number(3.0) {
                Err(QaError::Backend("boom".into()))
            } else {
                ExecutorBackend.answer_segment(
                    &QueryPlan::new(ElementClass::Beam, &["length"], AggregationOp::Count),
                    seg,
                )
            }
        }
    }

    #[test]
    fn backend_errors_carry_segment_index() {
        let db = column(&[1.0, 2.0, 3.0]);
        let plan = QueryPlan::new(ElementClass::Beam, &["length"], AggregationOp::Count);
        let err = execute_partitioned(&plan, &db, 1, &Failing).unwrap_err();
        assert_eq!(
            err,
            QaError::Segment {
                index: 2,
                source: Box::new(QaError::Backend("boom".into()))
            }
        );
    }
}
