use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::class::ElementClass;
use crate::table::{ColumnKind, SubDatabase};

use super::QaError;

/// Aggregation operators with their annotation indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AggregationOp {
    #[default]
    None = 0,
    Sum = 1,
    Avg = 2,
    Count = 3,
}

impl AggregationOp {
    pub const ALL: [AggregationOp; 4] = [
        AggregationOp::None,
        AggregationOp::Sum,
        AggregationOp::Avg,
        AggregationOp::Count,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: i64) -> Option<Self> {
        usize::try_from(i)
            .ok()
            .and_then(|i| Self::ALL.get(i).copied())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AggregationOp::None => "NONE",
            AggregationOp::Sum => "SUM",
            AggregationOp::Avg => "AVG",
            AggregationOp::Count => "COUNT",
        }
    }
}

impl fmt::Display for AggregationOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationOp {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NONE" => Ok(AggregationOp::None),
            "SUM" => Ok(AggregationOp::Sum),
            "AVG" | "AVERAGE" => Ok(AggregationOp::Avg),
            "COUNT" => Ok(AggregationOp::Count),
            other => other
                .parse::<i64>()
                .ok()
                .and_then(AggregationOp::from_index)
                .ok_or_else(|| format!("unknown aggregation {s:?}")),
        }
    }
}

impl Serialize for AggregationOp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Accepts `"SUM"` as well as the annotation index `1`.
impl<'de> Deserialize<'de> for AggregationOp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Index(i64),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Index(i) => AggregationOp::from_index(i)
                .ok_or_else(|| serde::de::Error::custom(format!("aggregation index {i}"))),
            Repr::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=", alias = "≠")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
    /// Id-list membership (or equality against a single id cell).
    #[serde(rename = "contains")]
    Contains,
}

impl Comparator {
    pub const ALL: [Comparator; 7] = [
        Comparator::Eq,
        Comparator::Ne,
        Comparator::Lt,
        Comparator::Le,
        Comparator::Gt,
        Comparator::Ge,
        Comparator::Contains,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Number(f64),
    Text(String),
}

impl From<f64> for Literal {
    fn from(v: f64) -> Self {
        Literal::Number(v)
    }
}

impl From<&str> for Literal {
    fn from(v: &str) -> Self {
        Literal::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub column: String,
    pub op: Comparator,
    pub value: Literal,
}

impl Filter {
    pub fn new(column: &str, op: Comparator, value: impl Into<Literal>) -> Self {
        Filter {
            column: column.to_string(),
            op,
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderBy {
    pub column: String,
    #[serde(default)]
    pub direction: Direction,
    pub limit: usize,
}

/// Structured meaning of one question over one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub table: ElementClass,
    #[serde(default)]
    pub filters: Vec<Filter>,
    #[serde(default)]
    pub order_by: Option<OrderBy>,
    pub project: Vec<String>,
    #[serde(default)]
    pub aggregation: AggregationOp,
}

impl QueryPlan {
    pub fn new(table: ElementClass, project: &[&str], aggregation: AggregationOp) -> Self {
        QueryPlan {
            table,
            filters: Vec::new(),
            order_by: None,
            project: project.iter().map(|s| s.to_string()).collect(),
            aggregation,
        }
    }

    pub fn filter(mut self, column: &str, op: Comparator, value: impl Into<Literal>) -> Self {
        self.filters.push(Filter::new(column, op, value));
        self
    }

    pub fn order(mut self, column: &str, direction: Direction, limit: usize) -> Self {
        self.order_by = Some(OrderBy {
            column: column.to_string(),
            direction,
            limit,
        });
        self
    }

    pub fn with_aggregation(&self, aggregation: AggregationOp) -> Self {
        QueryPlan {
            aggregation,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    /// Check the plan against a table schema.
    pub fn validate(&self, db: &SubDatabase) -> Result<(), QaError> {
        if db.label() != self.table {
            return Err(QaError::LabelMismatch {
                plan: self.table,
                table: db.label(),
            });
        }
        if self.project.is_empty() {
            return Err(QaError::EmptyProjection);
        }
        let column = |name: &str| {
            db.column_index(name)
                .ok_or_else(|| QaError::ColumnNotFound(name.to_string()))
        };
        for f in &self.filters {
            column(&f.column)?;
        }
        if let Some(o) = &self.order_by {
            column(&o.column)?;
            if o.limit == 0 {
                return Err(QaError::InvalidLimit);
            }
        }
        for p in &self.project {
            let i = column(p)?;
            if matches!(self.aggregation, AggregationOp::Sum | AggregationOp::Avg)
                && db.columns()[i].kind != ColumnKind::Number
            {
                return Err(QaError::TypeMismatch(p.clone()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregation_indices() {
        let idx: Vec<usize> = AggregationOp::ALL.iter().map(|a| a.index()).collect();
        assert_eq!(idx, vec![0, 1, 2, 3]);
        assert_eq!(AggregationOp::from_index(3), Some(AggregationOp::Count));
        assert_eq!(AggregationOp::from_index(4), None);
    }

    #[test]
    fn canonical_json() {
        let plan = QueryPlan::new(ElementClass::Floor, &["elevation"], AggregationOp::None).filter(
            "name",
            Comparator::Eq,
            "F2",
        );
        assert_eq!(
            plan.to_json(),
            r#"{"table":"floor","filters":[{"column":"name","op":"=","value":"F2"}],"order_by":null,"project":["elevation"],"aggregation":"NONE"}"#
        );
        let back: QueryPlan = serde_json::from_str(&plan.to_json()).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn lenient_json_forms() {
        let plan: QueryPlan = serde_json::from_str(
            r#"{"table":"door","filters":[{"column":"height","op":"≥","value":2.2}],
                "project":["door_id"],"aggregation":1}"#,
        )
        .unwrap();
        assert_eq!(plan.aggregation, AggregationOp::Sum);
        assert_eq!(plan.filters[0].op, Comparator::Ge);
        assert_eq!(plan.filters[0].value, Literal::Number(2.2));
        assert!(plan.order_by.is_none());
    }
}
