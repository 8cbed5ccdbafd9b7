//! Random tables and plans for property tests.

use bimqa_core::qa::{AggregationOp, Comparator, Direction, Filter, Literal, OrderBy, QueryPlan};
use bimqa_core::table::{CellValue, Column, ColumnKind, SubDatabase};
use bimqa_core::ElementClass;
use proptest::prelude::*;
use proptest::sample::select;

pub const MAX_ROWS: usize = 20;
pub const MAX_COLS: usize = 8;

const TEXTS: &[&str] = &["a", "A", " b", "b", "c d", "F2", "3", "x,y", "q\"t"];

/// Few distinct values so filters and ties actually bite; the large ones
/// make float sums round.
fn number() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => (-6i32..=6).prop_map(|n| n as f64 * 0.5),
        1 => select(vec![0.1, 0.2, 0.3, 1e16, -1e16, 3.0e-5, 1.0 / 3.0]),
        1 => any::<i32>().prop_map(|n| n as f64 / 7.0),
    ]
}

fn cell(kind: ColumnKind) -> BoxedStrategy<CellValue> {
    let value = match kind {
        ColumnKind::Number => number().prop_map(CellValue::Number).boxed(),
        ColumnKind::Text => select(TEXTS).prop_map(CellValue::text).boxed(),
        ColumnKind::Ids => proptest::collection::vec(0u64..6, 1..4)
            .prop_map(CellValue::ids)
            .boxed(),
    };
    prop_oneof![1 => Just(CellValue::Empty), 5 => value].boxed()
}

fn kind() -> impl Strategy<Value = ColumnKind> {
    select(vec![
        ColumnKind::Number,
        ColumnKind::Number,
        ColumnKind::Text,
        ColumnKind::Ids,
    ])
}

pub fn table() -> impl Strategy<Value = SubDatabase> {
    (
        proptest::collection::vec(kind(), 1..=MAX_COLS),
        0..=MAX_ROWS,
    )
        .prop_flat_map(|(kinds, n_rows)| {
            let row: Vec<BoxedStrategy<CellValue>> = kinds.iter().map(|k| cell(*k)).collect();
            (Just(kinds), proptest::collection::vec(row, n_rows))
        })
        .prop_map(|(kinds, rows)| {
            let columns = kinds
                .iter()
                .enumerate()
                .map(|(i, k)| Column::new(format!("c{i}"), *k))
                .collect();
            SubDatabase::new(ElementClass::Door, "random", "METRE", columns, rows)
                .expect("consistent kinds")
        })
}

fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        number().prop_map(Literal::Number),
        (0u64..6).prop_map(|n| Literal::Number(n as f64)),
        select(TEXTS).prop_map(Literal::from),
    ]
}

fn op() -> impl Strategy<Value = Comparator> {
    select(Comparator::ALL.to_vec())
}

fn aggregation() -> impl Strategy<Value = AggregationOp> {
    select(AggregationOp::ALL.to_vec())
}

/// Column names `c0..c7`, with an occasional name that exists in no table.
fn column_name(n_cols: usize) -> impl Strategy<Value = String> {
    prop_oneof![
        20 => (0..n_cols).prop_map(|i| format!("c{i}")),
        1 => Just("missing".to_string()),
    ]
}

/// Plans over `db`, mostly valid.
pub fn plan_for(db: &SubDatabase) -> impl Strategy<Value = QueryPlan> {
    let n = db.column_count();
    let filters = proptest::collection::vec(
        (column_name(n), op(), literal()).prop_map(|(c, o, v)| Filter {
            column: c,
            op: o,
            value: v,
        }),
        0..3,
    );
    let order = proptest::option::of(
        (
            column_name(n),
            prop_oneof![Just(Direction::Asc), Just(Direction::Desc)],
            prop_oneof![1 => Just(0usize), 8 => 1usize..6],
        )
            .prop_map(|(column, direction, limit)| OrderBy {
                column,
                direction,
                limit,
            }),
    );
    let numeric: Vec<String> = db
        .columns()
        .iter()
        .filter(|c| c.kind == ColumnKind::Number)
        .map(|c| c.name.clone())
        .collect();
    let any_project =
        prop_oneof![1 => Just(Vec::new()), 20 => proptest::collection::vec(column_name(n), 1..3)];
    // SUM and AVG mostly over numeric columns so most plans get answered
    let project_and_aggregation = aggregation().prop_flat_map(move |op| {
        let numeric_only = matches!(op, AggregationOp::Sum | AggregationOp::Avg) && !numeric.is_empty();
        let project = if numeric_only {
            prop_oneof![1 => any_project.clone(), 6 => proptest::collection::vec(select(numeric.clone()), 1..3)].boxed()
        } else {
            any_project.clone().boxed()
        };
        (project, Just(op))
    });
    let table = prop_oneof![20 => Just(ElementClass::Door), 1 => Just(ElementClass::Window)];
    (table, filters, order, project_and_aggregation).prop_map(
        |(table, filters, order_by, (project, aggregation))| QueryPlan {
            table,
            filters,
            order_by,
            project,
            aggregation,
        },
    )
}

pub fn table_and_plan() -> impl Strategy<Value = (SubDatabase, QueryPlan)> {
    table().prop_flat_map(|db| {
        let plans = plan_for(&db);
        (Just(db), plans)
    })
}

/// Numeric-only tables, for plans whose aggregation must succeed.
pub fn numeric_table() -> impl Strategy<Value = SubDatabase> {
    (1..=MAX_COLS, 0..=MAX_ROWS).prop_flat_map(|(n_cols, n_rows)| {
        proptest::collection::vec(
            proptest::collection::vec(cell(ColumnKind::Number), n_cols),
            n_rows,
        )
        .prop_map(move |rows| {
            let columns = (0..n_cols)
                .map(|i| Column::new(format!("c{i}"), ColumnKind::Number))
                .collect();
            SubDatabase::new(ElementClass::Beam, "random", "", columns, rows).expect("numbers only")
        })
    })
}
