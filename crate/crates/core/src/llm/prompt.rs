use crate::class::ElementClass;
use crate::table::SubDatabase;

use super::LlmError;

/// Default character budget for a serialized table inside a prompt.
pub const DEFAULT_TABLE_BUDGET: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub role_instruction: String,
    /// (input, expected output) pairs.
    pub few_shot_examples: Vec<(String, String)>,
    pub task_instruction: String,
}

impl PromptTemplate {
    /// `### Role`, then `### Examples` when there are any, then `### Task`
    /// followed by `body`.
    fn render(&self, format_example: impl Fn(&str, &str) -> String, body: &str) -> String {
        let mut out = String::new();
        out.push_str("### Role\n");
        out.push_str(self.role_instruction.trim_end());
        out.push_str("\n\n");
        if !self.few_shot_examples.is_empty() {
            out.push_str("### Examples\n");
            for (input, output) in &self.few_shot_examples {
                out.push_str(&format_example(input, output));
                out.push('\n');
            }
            out.push('\n');
        }
        out.push_str("### Task\n");
        out.push_str(self.task_instruction.trim_end());
        out.push('\n');
        out.push_str(body);
        out
    }
}

fn label_list() -> String {
    ElementClass::ALL
        .iter()
        .map(|c| c.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn default_intent_template() -> PromptTemplate {
    let examples = [
        ("How many bathrooms are there in the building?", "space"),
        ("What is the elevation of the second storey?", "floor"),
        ("Which windows are wider than 1.2 m?", "window"),
        ("What is the fire rating of the doors on Level 1?", "door"),
        ("Which beam has the largest cross-sectional area?", "beam"),
        ("How many columns are on the ground floor?", "column"),
        ("What is the width of the main staircase?", "stair"),
        ("How many chairs are in the meeting room?", "furniture"),
    ];
    PromptTemplate {
        role_instruction: format!(
            "You are a BIM assistant. You sort questions about a building model by the \
             element table that answers them. The only allowed labels are: {}.",
            label_list()
        ),
        few_shot_examples: examples
            .iter()
            .map(|(q, l)| (q.to_string(), l.to_string()))
            .collect(),
        task_instruction: "Classify the next query. Reply with exactly one label from the \
                           list and nothing else."
            .to_string(),
    }
}

pub fn build_intent_prompt(query: &str, tmpl: &PromptTemplate) -> String {
    tmpl.render(
        |q, label| format!("\"{q}\" → {label}"),
        &format!("Query: {}", query.trim()),
    )
}

/// Header line prefixed with `row`, then one index-prefixed CSV line per
/// data row.
pub fn serialize_table(db: &SubDatabase) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["row".to_string()];
    header.extend(db.header().iter().map(|s| s.to_string()));
    w.write_record(&header).expect("in-memory write");
    for (i, row) in db.rows().iter().enumerate() {
        let mut record = vec![i.to_string()];
        record.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

const EXAMPLE_FLOORS: &str = "row,floor_id,name,elevation,space_count\n\
0,101,00 begane grond,-3.0,5\n\
1,102,01 eerste verdieping,0.0,4\n\
2,103,02 tweede verdieping,3.0,2\n";

pub fn default_qa_template() -> PromptTemplate {
    let example = |q: &str| format!("Table (floor):\n{EXAMPLE_FLOORS}Question: {q}");
    PromptTemplate {
        role_instruction: "You are a BIM assistant that reads building element data given as \
                           a plain-text table and answers questions using only that table. \
                           Rows are numbered from 0; the header line is not a row."
            .to_string(),
        few_shot_examples: vec![
            (
                example("What is the elevation of 01 eerste verdieping?"),
                "Answer: ['0.0']\n{\"texts\": [\"0.0\"], \"float\": 0.0, \"coordinates\": [[1, 2]]}"
                    .to_string(),
            ),
            (
                example("Which floor has the most spaces?"),
                "Answer: ['00 begane grond']\n{\"texts\": [\"00 begane grond\"], \"float\": null, \"coordinates\": [[0, 1]]}"
                    .to_string(),
            ),
            (
                example("How many spaces are there in total?"),
                "Answer: ['11']\n{\"texts\": [\"11\"], \"float\": 11, \"coordinates\": [[0, 3], [1, 3], [2, 3]]}"
                    .to_string(),
            ),
        ],
        task_instruction: "Answer the question from the table below. End your reply with one \
                           line holding a JSON object {\"texts\": [...], \"float\": number or \
                           null, \"coordinates\": [[row, col], ...]} where col counts table \
                           columns from 0, not including the row number."
            .to_string(),
    }
}

/// Render the QA prompt. Fails when the serialized table exceeds
/// `budget` characters.
pub fn build_qa_prompt(
    query: &str,
    db: &SubDatabase,
    tmpl: &PromptTemplate,
    budget: usize,
) -> Result<String, LlmError> {
    let table = serialize_table(db);
    if table.chars().count() > budget {
        return Err(LlmError::TableTooLarge {
            rows: db.row_count(),
            budget,
        });
    }
    Ok(tmpl.render(
        |input, output| format!("{input}\n{output}\n"),
        &format!("Table ({}):\n{table}Question: {}", db.label(), query.trim()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{CellValue, Column, ColumnKind};

    fn floors(n: usize) -> SubDatabase {
        SubDatabase::new(
            ElementClass::Floor,
            "m",
            "METRE",
            vec![
                Column::new("name", ColumnKind::Text),
                Column::new("elevation", ColumnKind::Number),
            ],
            (0..n)
                .map(|i| {
                    vec![
                        CellValue::text(format!("F{i}")),
                        CellValue::Number(i as f64 * 3.0),
                    ]
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn intent_prompt_sections_in_order() {
        let p = build_intent_prompt(
            "How many bathrooms are there in the building?",
            &default_intent_template(),
        );
        let role = p.find("### Role").unwrap();
        let ex = p.find("### Examples").unwrap();
        let task = p.find("### Task").unwrap();
        assert!(role < ex && ex < task);
        assert!(p.contains("→ space"));
        assert!(p.ends_with("Query: How many bathrooms are there in the building?"));
        for c in ElementClass::ALL {
            assert!(p.contains(c.as_str()));
        }
    }

    #[test]
    fn no_examples_section_when_empty() {
        let mut t = default_intent_template();
        t.few_shot_examples.clear();
        let p = build_intent_prompt("q", &t);
        assert!(!p.contains("### Examples"));
        assert!(p.find("### Role").unwrap() < p.find("### Task").unwrap());
        assert_eq!(p, build_intent_prompt("q", &t));
    }

    #[test]
    fn qa_prompt_table_lines() {
        let p = build_qa_prompt(
            "q?",
            &floors(5),
            &default_qa_template(),
            DEFAULT_TABLE_BUDGET,
        )
        .unwrap();
        let table = serialize_table(&floors(5));
        assert_eq!(table.lines().count(), 6);
        assert!(p.contains(&table));
        assert!(p.contains("['0.0']"));
    }

    #[test]
    fn budget_breach() {
        let err =
            build_qa_prompt("q", &floors(10_000), &default_qa_template(), 20_000).unwrap_err();
        assert_eq!(
            err,
            LlmError::TableTooLarge {
                rows: 10_000,
                budget: 20_000
            }
        );
    }
}
