//! Row-by-row reference for the plan executor. Shares no code with it: every
//! comparison, sort and sum is redone here, sums in exact rationals.

use std::cmp::Ordering;

use bimqa_core::qa::{AggregationOp, Answer, Comparator, Direction, Literal, QaError, QueryPlan};
use bimqa_core::table::{CellCoord, CellValue, ColumnKind, SubDatabase};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

fn col(db: &SubDatabase, name: &str) -> Result<usize, QaError> {
    db.header()
        .iter()
        .position(|h| *h == name)
        .ok_or_else(|| QaError::ColumnNotFound(name.to_string()))
}

fn check(plan: &QueryPlan, db: &SubDatabase) -> Result<(), QaError> {
    if plan.table != db.label() {
        return Err(QaError::LabelMismatch {
            plan: plan.table,
            table: db.label(),
        });
    }
    if plan.project.is_empty() {
        return Err(QaError::EmptyProjection);
    }
    for f in &plan.filters {
        col(db, &f.column)?;
    }
    if let Some(o) = &plan.order_by {
        col(db, &o.column)?;
        if o.limit < 1 {
            return Err(QaError::InvalidLimit);
        }
    }
    for p in &plan.project {
        let c = col(db, p)?;
        let numeric_only =
            plan.aggregation == AggregationOp::Sum || plan.aggregation == AggregationOp::Avg;
        if numeric_only && db.columns()[c].kind != ColumnKind::Number {
            return Err(QaError::TypeMismatch(p.clone()));
        }
    }
    Ok(())
}

fn fold(s: &str) -> String {
    s.trim().to_lowercase()
}

fn as_id(v: &Literal) -> Option<u64> {
    match v {
        Literal::Number(n) => {
            if *n >= 0.0 && n.floor() == *n && *n <= 18446744073709551615.0 {
                Some(*n as u64)
            } else {
                None
            }
        }
        Literal::Text(t) => t.trim().parse::<u64>().ok(),
    }
}

fn keep(cell: &CellValue, op: Comparator, v: &Literal) -> bool {
    if op == Comparator::Contains {
        let Some(id) = as_id(v) else { return false };
        if let CellValue::Ids(list) = cell {
            return list.iter().any(|x| *x == id);
        }
        if let CellValue::Number(n) = cell {
            return *n == id as f64;
        }
        return false;
    }
    if let CellValue::Empty = cell {
        return false;
    }
    let ord = if let (CellValue::Number(a), Literal::Number(b)) = (cell, v) {
        if a < b {
            Some(Ordering::Less)
        } else if a > b {
            Some(Ordering::Greater)
        } else {
            Some(Ordering::Equal)
        }
    } else if let (CellValue::Text(a), Literal::Text(b)) = (cell, v) {
        Some(fold(a).cmp(&fold(b)))
    } else {
        None
    };
    let Some(ord) = ord else {
        return op == Comparator::Ne;
    };
    match op {
        Comparator::Eq => ord.is_eq(),
        Comparator::Ne => ord.is_ne(),
        Comparator::Lt => ord.is_lt(),
        Comparator::Le => ord.is_le(),
        Comparator::Gt => ord.is_gt(),
        Comparator::Ge => ord.is_ge(),
        Comparator::Contains => unreachable!(),
    }
}

/// Does row `a` come strictly before row `b` under the plan's ordering?
/// Ties fall back to row index.
fn before(db: &SubDatabase, c: usize, dir: Direction, a: usize, b: usize) -> bool {
    let (x, y) = (&db.rows()[a][c], &db.rows()[b][c]);
    let rank = |v: &CellValue| match v {
        CellValue::Number(_) => 0,
        CellValue::Text(_) => 1,
        CellValue::Ids(_) => 2,
        CellValue::Empty => 3,
    };
    let ord = match (x, y) {
        (CellValue::Empty, CellValue::Empty) => Ordering::Equal,
        (CellValue::Empty, _) => return false,
        (_, CellValue::Empty) => return true,
        (CellValue::Number(p), CellValue::Number(q)) => p.total_cmp(q),
        (CellValue::Text(p), CellValue::Text(q)) => fold(p).cmp(&fold(q)),
        (CellValue::Ids(p), CellValue::Ids(q)) => p.cmp(q),
        _ => rank(x).cmp(&rank(y)),
    };
    let ord = if dir == Direction::Desc {
        ord.reverse()
    } else {
        ord
    };
    ord == Ordering::Less || (ord == Ordering::Equal && a < b)
}

fn spell(cell: &CellValue) -> String {
    match cell {
        CellValue::Empty => String::new(),
        CellValue::Number(n) => n.to_string(),
        CellValue::Text(t) => t.clone(),
        CellValue::Ids(ids) => ids.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
    }
}

/// Every finite double as an exact rational.
pub fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Nearest double to an exact rational, ties to even. Works on the integer
/// scale of the smallest subnormal, where every double is an integer.
pub fn nearest_f64(q: &BigRational) -> f64 {
    if q.is_zero() {
        return 0.0;
    }
    let scaled = q.abs() * BigRational::from_integer(BigInt::one() << 1074u32);
    let whole = scaled.trunc().to_integer();
    let frac = scaled.fract();
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let odd = |n: &BigInt| (n & BigInt::one()).is_one();

    let (m, shift) = if whole.bits() <= 53 {
        let up = frac > half || (frac == half && odd(&whole));
        (if up { whole + 1 } else { whole }, 0u64)
    } else {
        let shift = whole.bits() - 53;
        let low = &whole & ((BigInt::one() << shift) - 1);
        let mid = BigInt::one() << (shift - 1);
        let kept = &whole >> shift;
        let up = low > mid || (low == mid && (!frac.is_zero() || odd(&kept)));
        (if up { kept + 1 } else { kept }, shift)
    };
    let mut value = m.to_f64().expect("54 bits fit");
    // scale by 2^(shift - 1074) in steps that stay exact
    let mut e = shift as i64 - 1074;
    while e != 0 {
        let step = e.clamp(-1000, 1000);
        value *= 2f64.powi(step as i32);
        e -= step;
    }
    if q.is_negative() {
        -value
    } else {
        value
    }
}

/// Same contract as `execute`, by exhaustive scan.
pub fn brute_force_oracle(plan: &QueryPlan, db: &SubDatabase) -> Result<Answer, QaError> {
    check(plan, db)?;
    let mut rows = Vec::new();
    for r in 0..db.row_count() {
        let mut ok = true;
        for f in &plan.filters {
            let c = col(db, &f.column)?;
            ok &= keep(&db.rows()[r][c], f.op, &f.value);
        }
        if ok {
            rows.push(r);
        }
    }
    if let Some(o) = &plan.order_by {
        let c = col(db, &o.column)?;
        // selection sort: repeatedly take the first row not beaten by another
        let mut ranked = Vec::new();
        while !rows.is_empty() && ranked.len() < o.limit {
            let mut best = 0;
            for i in 1..rows.len() {
                if before(db, c, o.direction, rows[i], rows[best]) {
                    best = i;
                }
            }
            ranked.push(rows.remove(best));
        }
        rows = ranked;
    }
    let mut coords = Vec::new();
    for &r in &rows {
        for p in &plan.project {
            let c = col(db, p)?;
            if !matches!(db.rows()[r][c], CellValue::Empty) {
                coords.push(CellCoord { row: r, col: c });
            }
        }
    }
    let cell = |c: &CellCoord| &db.rows()[c.row][c.col];
    let exact = || {
        coords
            .iter()
            .fold(BigRational::zero(), |acc, c| match cell(c) {
                CellValue::Number(n) => acc + rational(*n),
                _ => acc,
            })
    };
    let (value, op) = match plan.aggregation {
        AggregationOp::None => {
            let texts: Vec<String> = coords.iter().map(|c| spell(cell(c))).collect();
            let float_value = if coords.len() == 1 {
                if let CellValue::Number(n) = cell(&coords[0]) {
                    Some(*n)
                } else {
                    None
                }
            } else {
                None
            };
            return Ok(Answer {
                coordinates: coords,
                texts,
                float_value,
                aggregation: AggregationOp::None,
            });
        }
        AggregationOp::Count => (coords.len() as f64, AggregationOp::Count),
        AggregationOp::Sum => (nearest_f64(&exact()), AggregationOp::Sum),
        AggregationOp::Avg => {
            if coords.is_empty() {
                return Err(QaError::EmptyAverage);
            }
            (
                nearest_f64(&exact()) / coords.len() as f64,
                AggregationOp::Avg,
            )
        }
    };
    Ok(Answer {
        coordinates: coords,
        texts: vec![value.to_string()],
        float_value: Some(value),
        aggregation: op,
    })
}
