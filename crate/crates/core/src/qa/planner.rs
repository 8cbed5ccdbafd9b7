//! Keyword planner: builds a plan for one table from the wording of a
//! question, without a language model. It covers value and id lookups,
//! numeric comparisons, per-container counts and superlatives.

use crate::class::ElementClass;
use crate::table::{CellValue, ColumnKind, SubDatabase};

use super::plan::{AggregationOp, Comparator, Direction, Filter, OrderBy, QueryPlan};
use super::QaError;

/// Guess the aggregate a question asks for from its wording.
pub fn aggregation_hint(question: &str) -> AggregationOp {
    let q = question.to_lowercase();
    if q.contains("average") || q.contains("mean ") {
        AggregationOp::Avg
    } else if q.contains("how many") || q.contains("number of") || q.contains("count") {
        AggregationOp::Count
    } else if q.contains("total") || q.contains("sum ") || q.contains("summed") {
        AggregationOp::Sum
    } else {
        AggregationOp::None
    }
}

const COMPARATORS: &[(&[&str], Comparator)] = &[
    (&["at", "least"], Comparator::Ge),
    (&["at", "most"], Comparator::Le),
    (&["no", "more", "than"], Comparator::Le),
    (&["no", "less", "than"], Comparator::Ge),
    (&["more", "than"], Comparator::Gt),
    (&["greater", "than"], Comparator::Gt),
    (&["larger", "than"], Comparator::Gt),
    (&["bigger", "than"], Comparator::Gt),
    (&["higher", "than"], Comparator::Gt),
    (&["taller", "than"], Comparator::Gt),
    (&["wider", "than"], Comparator::Gt),
    (&["longer", "than"], Comparator::Gt),
    (&["above"], Comparator::Gt),
    (&["over"], Comparator::Gt),
    (&["exceeding"], Comparator::Gt),
    (&["less", "than"], Comparator::Lt),
    (&["fewer", "than"], Comparator::Lt),
    (&["smaller", "than"], Comparator::Lt),
    (&["lower", "than"], Comparator::Lt),
    (&["shorter", "than"], Comparator::Lt),
    (&["narrower", "than"], Comparator::Lt),
    (&["below"], Comparator::Lt),
    (&["under"], Comparator::Lt),
    (&["equal", "to"], Comparator::Eq),
];

const MOST: &[&str] = &[
    "most", "largest", "biggest", "highest", "greatest", "maximum", "tallest", "widest", "longest",
];
const LEAST: &[&str] = &[
    "least",
    "fewest",
    "smallest",
    "lowest",
    "minimum",
    "shortest",
    "narrowest",
];
const HAVE: &[&str] = &["have", "has", "with", "contain", "contains", "containing"];

/// Lowercased tokens; a dot between digits stays inside the number.
fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let decimal_point = c == '.'
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if c.is_alphanumeric() || decimal_point {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn stem(token: &str) -> String {
    if let Some(s) = token.strip_suffix("ies").filter(|s| s.len() > 1) {
        format!("{s}y")
    } else if token.len() >= 3 && token.ends_with('s') && !token.ends_with("ss") {
        token[..token.len() - 1].to_string()
    } else {
        token.to_string()
    }
}

/// A column named in the question. `counted` marks a bare noun standing for
/// an `<noun>_count` column, as in "2 windows".
#[derive(Debug, Clone, Copy)]
struct Mention {
    col: usize,
    start: usize,
    len: usize,
    counted: bool,
}

struct Scan<'a> {
    db: &'a SubDatabase,
    raw: Vec<String>,
    stems: Vec<String>,
    used: Vec<bool>,
    mentions: Vec<Mention>,
    taken: Vec<bool>,
    filters: Vec<Filter>,
}

impl<'a> Scan<'a> {
    fn new(question: &str, db: &'a SubDatabase) -> Self {
        let raw = tokenize(question);
        let stems = raw.iter().map(|t| stem(t)).collect();
        let used = vec![false; raw.len()];
        Scan {
            db,
            raw,
            stems,
            used,
            mentions: Vec::new(),
            taken: Vec::new(),
            filters: Vec::new(),
        }
    }

    fn free(&self, start: usize, len: usize) -> bool {
        start + len <= self.used.len() && !self.used[start..start + len].iter().any(|u| *u)
    }

    fn consume(&mut self, start: usize, len: usize) {
        self.used[start..start + len]
            .iter_mut()
            .for_each(|u| *u = true);
    }

    fn number(&self, i: usize) -> Option<f64> {
        if i < self.raw.len() && !self.used[i] {
            self.raw[i].parse::<f64>().ok()
        } else {
            None
        }
    }

    fn is_numeric(&self, col: usize) -> bool {
        self.db.columns()[col].kind == ColumnKind::Number
    }

    /// Words that name columns or classes; a cell holding just one of these
    /// is not taken as a lookup value.
    fn vocabulary(&self) -> Vec<String> {
        let mut words: Vec<String> = ElementClass::ALL
            .iter()
            .map(|c| c.as_str().to_string())
            .collect();
        for h in self.db.header() {
            words.extend(h.split('_').map(stem));
        }
        words
    }

    /// Text cells quoted in the question become equality filters, longest
    /// first.
    fn value_filters(&mut self) {
        let vocabulary = self.vocabulary();
        let mut found: Vec<(usize, usize, usize, String)> = Vec::new();
        for (c, column) in self.db.columns().iter().enumerate() {
            if column.kind != ColumnKind::Text {
                continue;
            }
            for row in self.db.rows() {
                let CellValue::Text(text) = &row[c] else {
                    continue;
                };
                let words = tokenize(text);
                if words.is_empty() || !words.iter().any(|w| w.chars().any(char::is_alphabetic)) {
                    continue;
                }
                if words.len() == 1 && vocabulary.contains(&stem(&words[0])) {
                    continue;
                }
                for start in 0..self.raw.len() {
                    if self.raw[start..].starts_with(&words) {
                        found.push((words.len(), start, c, text.clone()));
                    }
                }
            }
        }
        found.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (len, start, c, text) in found {
            if self.free(start, len) {
                self.consume(start, len);
                let name = self.db.header()[c].to_string();
                self.filters
                    .push(Filter::new(&name, Comparator::Eq, text.as_str()));
            }
        }
    }

    /// Column names, their unspaced forms ("grossfloorarea"), trailing word
    /// runs ("floor area") and bare count nouns, matched greedily by length.
    fn find_mentions(&mut self) {
        let mut found: Vec<(Mention, usize)> = Vec::new();
        for (c, name) in self.db.header().iter().enumerate() {
            let words: Vec<String> = name.split('_').map(stem).collect();
            let mut forms: Vec<(Vec<String>, usize)> = vec![(words.clone(), 3)];
            if words.len() > 1 {
                forms.push((vec![stem(&words.concat())], 3));
            }
            for k in 1..words.len().saturating_sub(1) {
                forms.push((words[k..].to_vec(), 1));
            }
            for (form, priority) in forms {
                for start in 0..self.stems.len() {
                    if self.stems[start..].starts_with(&form) {
                        let m = Mention {
                            col: c,
                            start,
                            len: form.len(),
                            counted: false,
                        };
                        found.push((m, priority));
                    }
                }
            }
            if let Some(noun) = name.strip_suffix("_count") {
                let noun = stem(noun);
                for (start, s) in self.stems.iter().enumerate() {
                    if *s == noun {
                        found.push((
                            Mention {
                                col: c,
                                start,
                                len: 1,
                                counted: true,
                            },
                            0,
                        ));
                    }
                }
            }
        }
        found.sort_by(|(a, pa), (b, pb)| {
            b.len
                .cmp(&a.len)
                .then(pb.cmp(pa))
                .then(a.start.cmp(&b.start))
                .then(a.col.cmp(&b.col))
        });
        let mut claimed = self.used.clone();
        for (m, _) in found {
            if !claimed[m.start..m.start + m.len].iter().any(|u| *u) {
                claimed[m.start..m.start + m.len]
                    .iter_mut()
                    .for_each(|u| *u = true);
                self.mentions.push(m);
            }
        }
        self.mentions.sort_by_key(|m| m.start);
        self.taken = vec![false; self.mentions.len()];
    }

    fn take(&mut self, k: usize) -> usize {
        self.taken[k] = true;
        let m = self.mentions[k];
        self.consume(m.start, m.len);
        m.col
    }

    fn counted_at(&self, i: usize) -> Option<usize> {
        (0..self.mentions.len())
            .find(|&k| !self.taken[k] && self.mentions[k].counted && self.mentions[k].start == i)
    }

    /// Nearest free numeric mention ending at or before `i`, else the first
    /// one after it.
    fn numeric_near(&self, i: usize) -> Option<usize> {
        let ok = |k: &usize| !self.taken[*k] && self.is_numeric(self.mentions[*k].col);
        let ks = 0..self.mentions.len();
        ks.clone()
            .filter(ok)
            .filter(|k| self.mentions[*k].start + self.mentions[*k].len <= i)
            .last()
            .or_else(|| ks.filter(ok).find(|k| self.mentions[*k].start > i))
    }

    fn push(&mut self, col: usize, op: Comparator, value: f64) {
        let name = self.db.header()[col].to_string();
        self.filters.push(Filter::new(&name, op, value));
    }

    /// "height greater than 2.2", "more than 2 doors".
    fn comparisons(&mut self) {
        for i in 0..self.raw.len() {
            for (phrase, op) in COMPARATORS {
                let n = phrase.len();
                if !self.free(i, n)
                    || !self.raw[i..]
                        .starts_with(&phrase.iter().map(|s| s.to_string()).collect::<Vec<_>>())
                {
                    continue;
                }
                let Some(value) = self.number(i + n) else {
                    continue;
                };
                let target = self.counted_at(i + n + 1).or_else(|| self.numeric_near(i));
                if let Some(k) = target {
                    let col = self.take(k);
                    self.consume(i, n + 1);
                    self.push(col, *op, value);
                }
                break;
            }
        }
    }

    /// "2 windows", "no columns", "not have any column", "have spaces".
    fn count_conditions(&mut self) {
        for i in 0..self.raw.len() {
            if self.used[i] {
                continue;
            }
            let (k, op, value, span) = if let Some(v) = self.number(i) {
                match self.counted_at(i + 1) {
                    Some(k) => (k, Comparator::Eq, v, 1),
                    None => continue,
                }
            } else if self.raw[i] == "no" || self.raw[i] == "without" {
                match self.counted_at(i + 1) {
                    Some(k) => (k, Comparator::Eq, 0.0, 1),
                    None => continue,
                }
            } else if self.raw[i] == "not" {
                let any = (i + 1..(i + 4).min(self.raw.len())).find(|&j| self.raw[j] == "any");
                match any.and_then(|j| self.counted_at(j + 1).map(|k| (k, j - i + 1))) {
                    Some((k, span)) => (k, Comparator::Eq, 0.0, span),
                    None => continue,
                }
            } else if HAVE.contains(&self.raw[i].as_str()) {
                match self.counted_at(i + 1) {
                    Some(k) => (k, Comparator::Gt, 0.0, 1),
                    None => continue,
                }
            } else {
                continue;
            };
            let col = self.take(k);
            self.consume(i, span);
            self.push(col, op, value);
        }
    }

    /// Whole numbers equal to a row id, or listed in an id-list column.
    fn id_filters(&mut self) {
        for i in 0..self.raw.len() {
            let Some(v) = self.number(i) else { continue };
            if v < 0.0 || v.fract() != 0.0 {
                continue;
            }
            let rows = self.db.rows();
            let is_row_id = rows
                .iter()
                .any(|r| r.first().and_then(CellValue::as_f64) == Some(v));
            if is_row_id && self.is_numeric(0) {
                self.consume(i, 1);
                self.push(0, Comparator::Eq, v);
                continue;
            }
            let listed = (0..self.db.column_count()).find(|&c| {
                rows.iter()
                    .any(|r| matches!(&r[c], CellValue::Ids(ids) if ids.contains(&(v as u64))))
            });
            if let Some(c) = listed {
                self.consume(i, 1);
                let name = self.db.header()[c].to_string();
                self.filters
                    .push(Filter::new(&name, Comparator::Contains, v));
            }
        }
    }

    /// A number left over pairs with the nearest free numeric mention.
    fn leftover_numbers(&mut self) {
        for i in 0..self.raw.len() {
            let Some(v) = self.number(i) else { continue };
            let counted =
                (0..self.mentions.len()).find(|&k| !self.taken[k] && self.mentions[k].counted);
            if let Some(k) = counted.or_else(|| self.numeric_near(i)) {
                let col = self.take(k);
                self.consume(i, 1);
                self.push(col, Comparator::Eq, v);
            }
        }
    }

    fn superlative(&mut self) -> Option<OrderBy> {
        for i in 0..self.raw.len() {
            if self.used[i] {
                continue;
            }
            let direction = if MOST.contains(&self.raw[i].as_str()) {
                Direction::Desc
            } else if LEAST.contains(&self.raw[i].as_str()) {
                Direction::Asc
            } else {
                continue;
            };
            let ok = |k: &usize| !self.taken[*k] && self.is_numeric(self.mentions[*k].col);
            let after = (0..self.mentions.len())
                .filter(ok)
                .find(|k| self.mentions[*k].start > i);
            if let Some(k) = after.or_else(|| self.numeric_near(i)) {
                self.consume(i, 1);
                let col = self.take(k);
                return Some(OrderBy {
                    column: self.db.header()[col].to_string(),
                    direction,
                    limit: 1,
                });
            }
        }
        None
    }
}

/// Plan a question against `db` from its wording alone.
pub fn derive_plan(question: &str, db: &SubDatabase) -> Result<QueryPlan, QaError> {
    let mut s = Scan::new(question, db);
    s.value_filters();
    s.find_mentions();
    s.comparisons();
    s.count_conditions();
    s.id_filters();
    s.leftover_numbers();
    let order_by = s.superlative();

    let header = db.header();
    let excluded: Vec<&str> = s
        .filters
        .iter()
        .map(|f| f.column.as_str())
        .chain(order_by.iter().map(|o| o.column.as_str()))
        .collect();
    let mut project: Vec<String> = Vec::new();
    let add = |name: &str, project: &mut Vec<String>| {
        if !excluded.contains(&name) && !project.iter().any(|p| p == name) {
            project.push(name.to_string());
        }
    };
    for (k, m) in s.mentions.iter().enumerate() {
        if !s.taken[k] && !m.counted {
            add(header[m.col], &mut project);
        }
    }
    let asks_id = s
        .stems
        .iter()
        .zip(&s.used)
        .any(|(t, u)| !u && (t == "id" || t == "identifier"));
    if asks_id {
        add(header[0], &mut project);
    }

    let mut aggregation = aggregation_hint(question);
    // "the number of windows ... is 114" names the filtered column
    let cue_spent = s.mentions.iter().enumerate().any(|(k, m)| {
        s.taken[k]
            && m.counted
            && m.start >= 2
            && s.raw[m.start - 1] == "of"
            && ["number", "count"].contains(&s.raw[m.start - 2].as_str())
    });
    if order_by.is_some() || (aggregation == AggregationOp::Count && cue_spent) {
        aggregation = AggregationOp::None;
    }
    if aggregation == AggregationOp::Count && project.is_empty() {
        let counted = s
            .mentions
            .iter()
            .enumerate()
            .find(|(k, m)| !s.taken[*k] && m.counted);
        if let Some((_, m)) = counted {
            project.push(header[m.col].to_string());
        }
    }
    if aggregation == AggregationOp::Count {
        if project.len() == 1 && project[0].ends_with("_count") {
            // reading or summing a stored count, not counting rows
            aggregation = if s.filters.is_empty() {
                AggregationOp::Sum
            } else {
                AggregationOp::None
            };
        } else {
            project = vec![header[0].to_string()];
        }
    }
    if matches!(aggregation, AggregationOp::Sum | AggregationOp::Avg) {
        project.retain(|p| db.column_index(p).is_some_and(|c| s.is_numeric(c)));
        if project.is_empty() {
            return Err(QaError::NoPlan(format!(
                "no numeric column to aggregate in {question:?}"
            )));
        }
    }
    if project.is_empty() {
        let fallback = ["long_name", "name"]
            .into_iter()
            .find(|n| db.column_index(n).is_some());
        project.push(fallback.unwrap_or(header[0]).to_string());
    }

    let plan = QueryPlan {
        table: db.label(),
        filters: s.filters,
        order_by,
        project,
        aggregation,
    };
    plan.validate(db)?;
    Ok(plan)
}
