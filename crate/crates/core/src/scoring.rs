//! Cell-selection and aggregation losses over externally supplied
//! probabilities, plus the aggregation decision rule.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::qa::AggregationOp;
use crate::scalar::Scalar;
use crate::table::CellCoord;

/// Probabilities are clamped to `[EPS, 1 - EPS]` before any logarithm.
pub const EPS: f64 = 1e-7;

/// Threshold above which an aggregation operator is output.
pub const AGGREGATION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoringError {
    #[error("expected {expected} column probabilities, got {got}")]
    ColumnCountMismatch { expected: usize, got: usize },
    #[error("gold column has no cells")]
    EmptyColumn,
    #[error("answer cell set is empty")]
    EmptyTruth,
    #[error("probability {0} is not finite")]
    NonFinite(String),
    #[error("predictions line {line}: {message}")]
    Load { line: usize, message: String },
}

/// Gold answer cells and the column holding most of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionTruth {
    pub cells: Vec<CellCoord>,
    pub column: usize,
}

impl SelectionTruth {
    /// Gold column is the column with the most answer cells, ties to the
    /// lowest index.
    pub fn new(cells: Vec<CellCoord>) -> Result<Self, ScoringError> {
        let max_col = cells
            .iter()
            .map(|c| c.col)
            .max()
            .ok_or(ScoringError::EmptyTruth)?;
        let mut counts = vec![0usize; max_col + 1];
        for c in &cells {
            counts[c.col] += 1;
        }
        let best = *counts.iter().max().expect("non-empty");
        let column = counts.iter().position(|&n| n == best).expect("max exists");
        Ok(SelectionTruth { cells, column })
    }

    /// Whether row `row` of the gold column is an answer cell.
    pub fn selects_row(&self, row: usize) -> bool {
        self.cells.contains(&CellCoord::new(row, self.column))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPrediction<T> {
    /// One probability per table column.
    pub p_col: Vec<T>,
    /// One probability per row of the gold column.
    pub p_s: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationPrediction<T> {
    /// Indexed NONE, SUM, AVG, COUNT.
    pub p_a: [T; 4],
}

fn c<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("constant fits the scalar type")
}

pub fn clamp<T: Scalar>(p: T) -> T {
    let eps = c::<T>(EPS);
    p.max(eps).min(T::one() - eps)
}

fn check_finite<T: Scalar>(values: &[T]) -> Result<(), ScoringError> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(ScoringError::NonFinite(v.to_string())),
        None => Ok(()),
    }
}

/// Binary cross-entropy `-(y ln p + (1-y) ln(1-p))` on the clamped `p`.
pub fn cross_entropy<T: Scalar>(p: T, y: bool) -> T {
    let p = clamp(p);
    if y {
        -p.ln()
    } else {
        -(T::one() - p).ln()
    }
}

/// d/dp of the cross-entropy, for `p` strictly inside the clamp range.
pub fn cross_entropy_grad<T: Scalar>(p: T, y: bool) -> T {
    if y {
        -T::one() / p
    } else {
        T::one() / (T::one() - p)
    }
}

fn mean<T: Scalar>(values: impl Iterator<Item = T>, n: usize) -> T {
    let sum = values.fold(T::zero(), |a, b| a + b);
    sum / T::from_usize(n).expect("count fits")
}

/// Average column-selection cross-entropy.
pub fn loss_cols<T: Scalar>(
    pred: &SelectionPrediction<T>,
    truth: &SelectionTruth,
    n_cols: usize,
) -> Result<T, ScoringError> {
    if pred.p_col.len() != n_cols || n_cols == 0 {
        return Err(ScoringError::ColumnCountMismatch {
            expected: n_cols,
            got: pred.p_col.len(),
        });
    }
    check_finite(&pred.p_col)?;
    Ok(mean(
        pred.p_col
            .iter()
            .enumerate()
            .map(|(i, &p)| cross_entropy(p, i == truth.column)),
        n_cols,
    ))
}

/// Average cell-selection cross-entropy over the gold column.
pub fn loss_cells<T: Scalar>(
    pred: &SelectionPrediction<T>,
    truth: &SelectionTruth,
) -> Result<T, ScoringError> {
    if pred.p_s.is_empty() {
        return Err(ScoringError::EmptyColumn);
    }
    check_finite(&pred.p_s)?;
    Ok(mean(
        pred.p_s
            .iter()
            .enumerate()
            .map(|(r, &p)| cross_entropy(p, truth.selects_row(r))),
        pred.p_s.len(),
    ))
}

/// `-ln p_a[NONE]`, the no-aggregation loss.
pub fn loss_aggr<T: Scalar>(pred: &AggregationPrediction<T>) -> T {
    -clamp(pred.p_a[AggregationOp::None.index()]).ln()
}

/// `-ln p_a[gold]`; generalises `loss_aggr` to supervised aggregation
/// examples.
pub fn loss_aggr_for<T: Scalar>(pred: &AggregationPrediction<T>, gold: AggregationOp) -> T {
    -clamp(pred.p_a[gold.index()]).ln()
}

/// Sum of the column, cell and aggregation losses.
pub fn loss_cell_selection<T: Scalar>(
    sel: &SelectionPrediction<T>,
    aggr: &AggregationPrediction<T>,
    truth: &SelectionTruth,
    n_cols: usize,
) -> Result<T, ScoringError> {
    Ok(loss_cols(sel, truth, n_cols)? + loss_cells(sel, truth)? + loss_aggr(aggr))
}

/// Analytic gradient of `loss_cols` with respect to each `p_col`.
pub fn grad_loss_cols<T: Scalar>(pred: &SelectionPrediction<T>, truth: &SelectionTruth) -> Vec<T> {
    let n = T::from_usize(pred.p_col.len()).expect("count fits");
    pred.p_col
        .iter()
        .enumerate()
        .map(|(i, &p)| cross_entropy_grad(p, i == truth.column) / n)
        .collect()
}

/// Analytic gradient of `loss_cells` with respect to each `p_s`.
pub fn grad_loss_cells<T: Scalar>(pred: &SelectionPrediction<T>, truth: &SelectionTruth) -> Vec<T> {
    let n = T::from_usize(pred.p_s.len()).expect("count fits");
    pred.p_s
        .iter()
        .enumerate()
        .map(|(r, &p)| cross_entropy_grad(p, truth.selects_row(r)) / n)
        .collect()
}

/// Analytic gradient of `loss_aggr` with respect to `p_a`.
pub fn grad_loss_aggr<T: Scalar>(pred: &AggregationPrediction<T>) -> [T; 4] {
    let mut g = [T::zero(); 4];
    g[0] = -T::one() / pred.p_a[0];
    g
}

/// The operator whose probability exceeds the threshold, NONE otherwise.
pub fn predict_aggregation<T: Scalar>(pred: &AggregationPrediction<T>) -> AggregationOp {
    let threshold = c::<T>(AGGREGATION_THRESHOLD);
    AggregationOp::ALL
        .iter()
        .copied()
        .find(|op| pred.p_a[op.index()] > threshold)
        .unwrap_or(AggregationOp::None)
}

/// Max-subtracted softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / total).collect()
}

pub fn softmax4<T: Scalar>(logits: [T; 4]) -> AggregationPrediction<T> {
    let p = softmax(&logits);
    AggregationPrediction {
        p_a: [p[0], p[1], p[2], p[3]],
    }
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub p_col: Vec<f64>,
    pub p_s: Vec<f64>,
    pub p_a: [f64; 4],
}

impl PredictionRecord {
    pub fn selection(&self) -> SelectionPrediction<f64> {
        SelectionPrediction {
            p_col: self.p_col.clone(),
            p_s: self.p_s.clone(),
        }
    }

    pub fn aggregation(&self) -> AggregationPrediction<f64> {
        AggregationPrediction { p_a: self.p_a }
    }
}

/// Read `{p_col, p_s, p_a}` objects, one per line. Blank lines are skipped.
pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>, ScoringError> {
    let file = std::fs::File::open(path).map_err(|e| ScoringError::Load {
        line: 0,
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ScoringError::Load {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| ScoringError::Load {
                line: i + 1,
                message: e.to_string(),
            })?;
        out.push(record);
    }
    Ok(out)
}
