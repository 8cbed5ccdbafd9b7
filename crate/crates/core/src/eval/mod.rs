//! Dataset loading, two-stage evaluation and reports.

mod dataset;
mod report;
mod run;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use dataset::{
    format_coordinate, load_dataset, parse_coordinates, parse_csv, parse_jsonl, to_jsonl,
    Annotation, DatasetError, QueryType,
};
pub use report::{emit_report, EvalReport, Failure, ReportFormat};
pub use run::{
    evaluate, evaluate_one, sibling_table, CannedQa, DirTableSource, EvalOptions, ExecQa,
    QaBackend, QueryOutcome, Stage, TableSource,
};

/// Share of items that goes to the training side of a split.
pub const TRAIN_FRACTION: f64 = 0.8;

pub const DEFAULT_SPLIT_SEED: u64 = 42;

/// Shuffle with a seeded generator and cut at `floor(0.8 n)`.
pub fn train_test_split<T: Clone>(items: &[T], seed: u64) -> (Vec<T>, Vec<T>) {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (items.len() as f64 * TRAIN_FRACTION).floor() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    (pick(&order[..cut]), pick(&order[cut..]))
}
