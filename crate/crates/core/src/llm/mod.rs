//! Prompt construction, chat-completion transport and reply parsing.

mod backends;
mod client;
mod parse;
mod prompt;

pub use backends::{
    answer_with_llm, LlmAnswer, LlmIntentBackend, LlmQaBackend, LlmTableQa, DEFAULT_SEGMENT_ROWS,
};
pub use client::{complete, ChatTransport, LlmClient, LlmConfig, TransportOutcome, UreqTransport};
pub use parse::{parse_qa_response, render_answer_json};
pub use prompt::{
    build_intent_prompt, build_qa_prompt, default_intent_template, default_qa_template,
    serialize_table, PromptTemplate, DEFAULT_TABLE_BUDGET,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("table with {rows} rows does not fit the {budget}-character prompt budget")]
    TableTooLarge { rows: usize, budget: usize },
    #[error("authentication: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("request timed out")]
    Timeout,
    #[error("transport: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unexpected response: {0}")]
    BadResponse(String),
    #[error("cannot read an answer from {0:?}")]
    Unparseable(String),
    #[error("{0}")]
    Backend(String),
}
