//! Language-model implementations of the routing and QA backends.

use crate::class::ElementClass;
use crate::eval::{Annotation, QaBackend};
use crate::intent::{parse_label, IntentBackend, IntentError};
use crate::qa::{
    aggregation_hint, execute_partitioned, segment_count, AggregationOp, Answer, QaError,
    QueryPlan, SegmentAnswerer, SegmentResult,
};
use crate::table::SubDatabase;

use super::client::LlmClient;
use super::parse::parse_qa_response;
use super::prompt::{build_intent_prompt, build_qa_prompt, PromptTemplate};
use super::LlmError;

/// Row count per segment when a table is too large for one prompt.
pub const DEFAULT_SEGMENT_ROWS: usize = 30;

pub struct LlmIntentBackend<'a> {
    pub client: &'a LlmClient,
    pub template: PromptTemplate,
}

impl IntentBackend for LlmIntentBackend<'_> {
    fn classify(&self, query: &str) -> Result<ElementClass, IntentError> {
        let prompt = build_intent_prompt(query, &self.template);
        let raw = self
            .client
            .complete(&prompt)
            .map_err(|e| IntentError::Backend(e.to_string()))?;
        parse_label(&raw)
    }
}

/// Answers one question per segment through the model. The plan passed to
/// `answer_segment` only tells it which aggregate to ask for.
pub struct LlmQaBackend<'a> {
    pub client: &'a LlmClient,
    pub template: PromptTemplate,
    pub question: String,
    pub budget: usize,
}

fn aggregate_instruction(op: AggregationOp) -> &'static str {
    match op {
        AggregationOp::None => "",
        AggregationOp::Sum => {
            " Only report the sum of the matching values in this table part, as the float."
        }
        AggregationOp::Avg => {
            " Only report the average of the matching values in this table part, as the float."
        }
        AggregationOp::Count => {
            " Only report how many matching cells this table part holds, as the float."
        }
    }
}

impl SegmentAnswerer for LlmQaBackend<'_> {
    fn answer_segment(
        &self,
        plan: &QueryPlan,
        segment: &SubDatabase,
    ) -> Result<SegmentResult, QaError> {
        let question = format!(
            "{}{}",
            self.question,
            aggregate_instruction(plan.aggregation)
        );
        let prompt = build_qa_prompt(&question, segment, &self.template, self.budget)
            .map_err(|e| QaError::Backend(e.to_string()))?;
        let raw = self
            .client
            .complete(&prompt)
            .map_err(|e| QaError::Backend(e.to_string()))?;
        let mut answer = parse_qa_response(&raw).map_err(|e| QaError::Backend(e.to_string()))?;
        answer
            .coordinates
            .retain(|c| c.row < segment.row_count() && c.col < segment.column_count());
        answer.aggregation = plan.aggregation;
        Ok(SegmentResult::from_answer(answer))
    }
}

/// A model answer and the number of prompts the table was split into.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmAnswer {
    pub answer: Answer,
    pub segments: usize,
}

/// Ask the model about a whole table, splitting it into segments when the
/// serialized table exceeds the budget.
pub fn answer_with_llm(
    client: &LlmClient,
    template: &PromptTemplate,
    question: &str,
    db: &SubDatabase,
    budget: usize,
    segment_rows: usize,
) -> Result<LlmAnswer, LlmError> {
    match build_qa_prompt(question, db, template, budget) {
        Ok(prompt) => Ok(LlmAnswer {
            answer: parse_qa_response(&client.complete(&prompt)?)?,
            segments: 1,
        }),
        Err(LlmError::TableTooLarge { rows, .. }) => {
            log::info!("table with {rows} rows exceeds the prompt budget; splitting every {segment_rows} rows");
            let backend = LlmQaBackend {
                client,
                template: template.clone(),
                question: question.to_string(),
                budget,
            };
            let first_column = db
                .header()
                .first()
                .map(|s| s.to_string())
                .unwrap_or_default();
            let mut shape = QueryPlan {
                table: db.label(),
                filters: Vec::new(),
                order_by: None,
                project: vec![first_column],
                aggregation: aggregation_hint(question),
            };
            if shape.validate(db).is_err() {
                shape.aggregation = AggregationOp::None;
            }
            let answer = execute_partitioned(&shape, db, segment_rows, &backend)
                .map_err(|e| LlmError::Backend(e.to_string()))?;
            Ok(LlmAnswer {
                answer,
                segments: segment_count(db.row_count(), segment_rows),
            })
        }
        Err(e) => Err(e),
    }
}

/// Evaluation backend that hands each question and its table to the model.
pub struct LlmTableQa<'a> {
    pub client: &'a LlmClient,
    pub template: PromptTemplate,
    pub budget: usize,
    pub segment_rows: usize,
}

impl QaBackend for LlmTableQa<'_> {
    fn name(&self) -> &str {
        "llm"
    }

    fn answer(&self, annotation: &Annotation, table: &SubDatabase) -> Result<Answer, String> {
        answer_with_llm(
            self.client,
            &self.template,
            &annotation.question,
            table,
            self.budget,
            self.segment_rows,
        )
        .map(|a| a.answer)
        .map_err(|e| e.to_string())
    }
}
