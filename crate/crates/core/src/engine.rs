//! Question answering over a vector index.
//!
//! One question in, one gateway call out. Retrieved chunks go into the prompt
//! best-first; when the prompt would not fit the token budget the
//! lowest-scoring chunks are dropped until it does.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::chunk::{Tokenizer, DEFAULT_MODEL_LIMIT};
use crate::embedding::{EmbedError, Embedder};
use crate::index::{IndexError, SearchHit, VectorIndex, DEFAULT_K};
use crate::llm::{
    prompt_tokens, ChatMessage, CompletionRequest, Gateway, LlmError, ANSWER_TEMPERATURE, DEFAULT_MAX_ANSWER_TOKENS,
};

pub const DEFAULT_SYSTEM_INSTRUCTION: &str = "You are a legal advisor for cooperatives and their members. \
Answer the question using the context provided. When the context supports it, cite the law and the \
article number your answer relies on. Answer in the same language as the question.";

pub const NO_CORPUS_ANSWER: &str = "No corpus is loaded, so this question cannot be answered yet.";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("the question alone needs {prompt_tokens} tokens plus {max_answer_tokens} for the answer, over the {limit}-token limit")]
    QuestionTooLong {
        prompt_tokens: usize,
        max_answer_tokens: usize,
        limit: usize,
    },
    #[error("worst case prompt needs {needed} tokens but the limit is {limit}")]
    InfeasibleBudget { needed: usize, limit: usize },
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error("query embedding does not match the index: {0}")]
    EmbedderMismatch(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub k: usize,
    pub model_limit: usize,
    pub max_answer_tokens: usize,
    pub system_instruction: String,
    pub temperature: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            model_limit: DEFAULT_MODEL_LIMIT,
            max_answer_tokens: DEFAULT_MAX_ANSWER_TOKENS,
            system_instruction: DEFAULT_SYSTEM_INSTRUCTION.to_string(),
            temperature: ANSWER_TEMPERATURE,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.k == 0 {
            return Err(EngineError::InvalidConfig("k must be at least 1".into()));
        }
        if self.max_answer_tokens == 0 {
            return Err(EngineError::InvalidConfig("max_answer_tokens must be positive".into()));
        }
        if self.system_instruction.trim().is_empty() {
            return Err(EngineError::InvalidConfig("system instruction is empty".into()));
        }
        if self.max_answer_tokens >= self.model_limit {
            return Err(EngineError::InvalidConfig(format!(
                "max_answer_tokens {} leaves no room under the {}-token limit",
                self.max_answer_tokens, self.model_limit
            )));
        }
        Ok(())
    }

    /// Checks that `k` full-size chunks, the instruction and the answer
    /// allowance fit the limit. Question length is not known up front and is
    /// left to per-request trimming.
    pub fn check_worst_case(&self, chunk_size: usize, tokenizer: &dyn Tokenizer) -> Result<(), EngineError> {
        self.validate()?;
        let needed = self.k * chunk_size + tokenizer.count(&self.system_instruction) + self.max_answer_tokens;
        if needed > self.model_limit {
            return Err(EngineError::InfeasibleBudget {
                needed,
                limit: self.model_limit,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Answer {
    pub text: String,
    pub sources: Vec<SearchHit>,
    pub prompt_tokens: usize,
    pub timing_ms: u64,
    /// Set when the index was empty and no model call was made.
    pub no_corpus: bool,
}

/// System message, then one user message holding the labelled context chunks
/// (in the given order) and the question.
pub fn render_prompt(question: &str, hits: &[SearchHit], config: &EngineConfig) -> Vec<ChatMessage> {
    let mut user = String::new();
    if !hits.is_empty() {
        user.push_str("Context:\n");
        for hit in hits {
            user.push_str(&format!("[{}]\n{}\n\n", hit.source_ref.label(), hit.text));
        }
    }
    user.push_str("Question: ");
    user.push_str(question);
    vec![
        ChatMessage::system(config.system_instruction.clone()),
        ChatMessage::user(user),
    ]
}

pub struct QueryEngine<'a> {
    pub index: &'a VectorIndex,
    pub embedder: &'a dyn Embedder,
    pub gateway: &'a Gateway,
    pub config: &'a EngineConfig,
}

impl QueryEngine<'_> {
    pub fn answer(&self, question: &str) -> Result<Answer, EngineError> {
        answer_question(question, self.index, self.config, self.gateway, self.embedder)
    }
}

pub fn answer_question(
    question: &str,
    index: &VectorIndex,
    config: &EngineConfig,
    gateway: &Gateway,
    embedder: &dyn Embedder,
) -> Result<Answer, EngineError> {
    let started = Instant::now();
    let question = question.trim();
    if question.is_empty() {
        return Err(EngineError::EmptyQuestion);
    }
    config.validate()?;
    if index.is_empty() {
        return Ok(Answer {
            text: NO_CORPUS_ANSWER.to_string(),
            sources: Vec::new(),
            prompt_tokens: 0,
            timing_ms: started.elapsed().as_millis() as u64,
            no_corpus: true,
        });
    }
    if embedder.spec() != index.provider() {
        return Err(EngineError::EmbedderMismatch(format!(
            "index was built with {:?}, query embedder is {:?}",
            index.provider(),
            embedder.spec()
        )));
    }

    let query = embedder.embed_one(question)?;
    let mut hits = index.search(&query, config.k)?;
    let limit = config.model_limit.min(gateway.model_limit());
    let tokenizer = gateway.tokenizer();

    let (messages, tokens) = loop {
        let messages = render_prompt(question, &hits, config);
        let tokens = prompt_tokens(&messages, tokenizer);
        if tokens + config.max_answer_tokens <= limit {
            break (messages, tokens);
        }
        if hits.pop().is_none() {
            return Err(EngineError::QuestionTooLong {
                prompt_tokens: tokens,
                max_answer_tokens: config.max_answer_tokens,
                limit,
            });
        }
    };

    let response = gateway.complete(&CompletionRequest {
        messages,
        max_answer_tokens: config.max_answer_tokens,
        temperature: config.temperature,
    })?;
    Ok(Answer {
        text: response.text,
        sources: hits,
        prompt_tokens: tokens,
        timing_ms: started.elapsed().as_millis() as u64,
        no_corpus: false,
    })
}
