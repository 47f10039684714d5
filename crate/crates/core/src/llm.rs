//! Chat-completion gateway.
//!
//! [`Gateway`] wraps a [`ChatBackend`] and refuses to send any request whose
//! prompt plus answer allowance exceeds the model limit. Two backends ship:
//! [`ScriptedBackend`], driven by a `mock_llm.json` rule file, and
//! [`RemoteChatBackend`] for OpenAI-style HTTP endpoints.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunk::{Tokenizer, WordSymbolTokenizer, DEFAULT_MODEL_LIMIT};
use crate::http::{Endpoint, HttpFailure, JsonPoster};
use crate::retry::RetryPolicy;

pub const DEFAULT_MAX_ANSWER_TOKENS: usize = 512;
pub const ANSWER_TEMPERATURE: f64 = 0.0;
pub const SYNTHESIS_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_CHAT_IN_FLIGHT: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum LlmError {
    #[error("request needs {prompt_tokens} prompt + {max_answer_tokens} answer tokens, over the {limit}-token limit")]
    BudgetExceeded {
        prompt_tokens: usize,
        max_answer_tokens: usize,
        limit: usize,
    },
    #[error("language model unavailable after {attempts} attempt(s): {message}")]
    ProviderUnavailable { attempts: u32, message: String },
    #[error("malformed provider reply: {0}")]
    MalformedProviderReply(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid mock script: {0}")]
    InvalidScript(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRequest {
    pub messages: Vec<ChatMessage>,
    pub max_answer_tokens: usize,
    pub temperature: f64,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        if self.messages.iter().any(|m| m.content.is_empty()) {
            return Err(LlmError::InvalidRequest("empty message content".into()));
        }
        if self.max_answer_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_answer_tokens must be positive".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::InvalidRequest(
                "temperature must be a finite value >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
}

/// Sum of the content tokens of every message.
pub fn prompt_tokens(messages: &[ChatMessage], tokenizer: &dyn Tokenizer) -> usize {
    messages.iter().map(|m| tokenizer.count(&m.content)).sum()
}

pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Produces a reply. `prompt_tokens` is the gateway's own count.
    fn complete(&self, request: &CompletionRequest, prompt_tokens: usize) -> Result<CompletionResponse, LlmError>;
}

/// Budget-enforcing front door to a backend.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    tokenizer: Arc<dyn Tokenizer>,
    model_limit: usize,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, tokenizer: Arc<dyn Tokenizer>, model_limit: usize) -> Self {
        Self {
            backend,
            tokenizer,
            model_limit,
        }
    }

    pub fn with_defaults(backend: Arc<dyn ChatBackend>) -> Self {
        Self::new(backend, Arc::new(WordSymbolTokenizer), DEFAULT_MODEL_LIMIT)
    }

    pub fn model_limit(&self) -> usize {
        self.model_limit
    }

    pub fn tokenizer(&self) -> &dyn Tokenizer {
        self.tokenizer.as_ref()
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn check_budget(&self, request: &CompletionRequest) -> Result<usize, LlmError> {
        let tokens = prompt_tokens(&request.messages, self.tokenizer.as_ref());
        if tokens + request.max_answer_tokens > self.model_limit {
            return Err(LlmError::BudgetExceeded {
                prompt_tokens: tokens,
                max_answer_tokens: request.max_answer_tokens,
                limit: self.model_limit,
            });
        }
        Ok(tokens)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        request.validate()?;
        let tokens = self.check_budget(request)?;
        let mut response = self.backend.complete(request, tokens)?;
        response.prompt_tokens = tokens;
        debug_assert!(response.prompt_tokens + response.completion_tokens <= self.model_limit);
        Ok(response)
    }
}

// ---- scripted mock ----

/// How a rule matches the concatenated message contents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Contains(String),
    Regex(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSpec {
    #[serde(flatten)]
    pub matcher: Matcher,
    /// Reply text. For regex rules, `$1`/`${name}` expand to captures.
    pub reply: String,
}

/// Contents of a `mock_llm.json` file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    pub rules: Vec<RuleSpec>,
    #[serde(default)]
    pub default: Option<String>,
}

impl MockScript {
    pub fn from_json(json: &str) -> Result<Self, LlmError> {
        serde_json::from_str(json).map_err(|e| LlmError::InvalidScript(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let json = fs::read_to_string(path).map_err(|e| LlmError::InvalidScript(format!("{}: {e}", path.display())))?;
        Self::from_json(&json)
    }
}

enum CompiledMatcher {
    Contains(String),
    Regex(Regex),
}

/// Deterministic backend: the first rule whose matcher hits the joined
/// message contents supplies the reply; otherwise the default reply, if any.
pub struct ScriptedBackend {
    rules: Vec<(CompiledMatcher, String)>,
    default: Option<String>,
    tokenizer: Arc<dyn Tokenizer>,
}

impl ScriptedBackend {
    pub fn new(script: MockScript) -> Result<Self, LlmError> {
        let rules = script
            .rules
            .into_iter()
            .map(|rule| {
                let matcher = match rule.matcher {
                    Matcher::Contains(s) => CompiledMatcher::Contains(s),
                    Matcher::Regex(p) => {
                        CompiledMatcher::Regex(Regex::new(&p).map_err(|e| LlmError::InvalidScript(e.to_string()))?)
                    }
                };
                Ok((matcher, rule.reply))
            })
            .collect::<Result<_, LlmError>>()?;
        Ok(Self {
            rules,
            default: script.default,
            tokenizer: Arc::new(WordSymbolTokenizer),
        })
    }

    pub fn reply_for(&self, haystack: &str) -> Option<String> {
        for (matcher, reply) in &self.rules {
            match matcher {
                CompiledMatcher::Contains(s) if haystack.contains(s.as_str()) => return Some(reply.clone()),
                CompiledMatcher::Regex(re) => {
                    if let Some(caps) = re.captures(haystack) {
                        let mut out = String::new();
                        caps.expand(reply, &mut out);
                        return Some(out);
                    }
                }
                _ => {}
            }
        }
        self.default.clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &CompletionRequest, prompt_tokens: usize) -> Result<CompletionResponse, LlmError> {
        let haystack = request
            .messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let text = self
            .reply_for(&haystack)
            .ok_or_else(|| LlmError::MalformedProviderReply("no mock rule matched the request".into()))?;
        let completion_tokens = self.tokenizer.count(&text).min(request.max_answer_tokens);
        Ok(CompletionResponse {
            text,
            prompt_tokens,
            completion_tokens,
        })
    }
}

// ---- remote ----

#[derive(Serialize)]
struct ChatRequestBody<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    max_tokens: usize,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatReplyBody {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReplyMessage,
}

#[derive(Deserialize)]
struct ChatReplyMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    completion_tokens: Option<usize>,
}

pub struct RemoteChatBackend {
    model: String,
    poster: JsonPoster,
}

impl RemoteChatBackend {
    pub fn new(
        model: impl Into<String>,
        endpoint: Endpoint,
        retry: RetryPolicy,
        max_in_flight: usize,
    ) -> Result<Self, LlmError> {
        let poster = JsonPoster::new(endpoint, retry, max_in_flight).map_err(LlmError::InvalidRequest)?;
        Ok(Self {
            model: model.into(),
            poster,
        })
    }

    /// Endpoint from `LLM_API_URL`, token from `LLM_API_KEY`.
    pub fn from_env(model: impl Into<String>) -> Result<Self, LlmError> {
        let endpoint = Endpoint::from_env("LLM_API_URL", "LLM_API_KEY")
            .ok_or_else(|| LlmError::InvalidRequest("LLM_API_URL is not set".into()))?;
        Self::new(model, endpoint, RetryPolicy::default(), DEFAULT_CHAT_IN_FLIGHT)
    }

    pub fn max_in_flight(&self) -> usize {
        self.poster.max_in_flight()
    }
}

impl ChatBackend for RemoteChatBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn complete(&self, request: &CompletionRequest, prompt_tokens: usize) -> Result<CompletionResponse, LlmError> {
        let body = ChatRequestBody {
            model: &self.model,
            messages: &request.messages,
            max_tokens: request.max_answer_tokens,
            temperature: request.temperature,
        };
        let value = self.poster.post(&body).map_err(|(failure, attempts)| match failure {
            HttpFailure::Transient(m) | HttpFailure::Rejected(m) => LlmError::ProviderUnavailable {
                attempts,
                message: format!("{}: {m}", self.poster.url()),
            },
            HttpFailure::BadBody(m) => LlmError::MalformedProviderReply(m),
        })?;
        let reply: ChatReplyBody =
            serde_json::from_value(value).map_err(|e| LlmError::MalformedProviderReply(e.to_string()))?;
        let usage_tokens = reply.usage.and_then(|u| u.completion_tokens);
        let text = reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| LlmError::MalformedProviderReply("reply has no message content".into()))?;
        let completion_tokens = usage_tokens.unwrap_or(0).min(request.max_answer_tokens);
        Ok(CompletionResponse {
            text,
            prompt_tokens,
            completion_tokens,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scripted(json: &str) -> Gateway {
        let backend = ScriptedBackend::new(MockScript::from_json(json).unwrap()).unwrap();
        Gateway::with_defaults(Arc::new(backend))
    }

    fn request(content: &str, max: usize) -> CompletionRequest {
        CompletionRequest {
            messages: vec![ChatMessage::user(content)],
            max_answer_tokens: max,
            temperature: ANSWER_TEMPERATURE,
        }
    }

    #[test]
    fn contains_rule_gives_canned_answer() {
        let gw = scripted(r#"{"rules":[{"contains":"Article 5","reply":"Per Article 5, yes."}]}"#);
        let a = gw.complete(&request("What does Article 5 say?", 100)).unwrap();
        let b = gw.complete(&request("What does Article 5 say?", 100)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.text, "Per Article 5, yes.");
        assert_eq!(a.prompt_tokens, 6);
        assert!(matches!(
            gw.complete(&request("unrelated", 100)),
            Err(LlmError::MalformedProviderReply(_))
        ));
    }

    #[test]
    fn regex_rule_expands_captures_and_default_applies() {
        let gw = scripted(r#"{"rules":[{"regex":"Article (\\d+)","reply":"cites $1"}],"default":"fallback"}"#);
        assert_eq!(
            gw.complete(&request("see Article 42 here", 50)).unwrap().text,
            "cites 42"
        );
        assert_eq!(gw.complete(&request("nothing", 50)).unwrap().text, "fallback");
    }

    #[test]
    fn over_budget_request_is_refused() {
        let gw = scripted(r#"{"rules":[],"default":"x"}"#);
        let content = vec!["tok"; 8100].join(" ");
        assert_eq!(
            gw.complete(&request(&content, 200)),
            Err(LlmError::BudgetExceeded {
                prompt_tokens: 8100,
                max_answer_tokens: 200,
                limit: 8192
            })
        );
        assert!(gw.complete(&request(&content, 92)).is_ok());
    }

    #[test]
    fn invalid_requests_are_rejected() {
        let gw = scripted(r#"{"rules":[],"default":"x"}"#);
        assert!(matches!(
            gw.complete(&request("", 10)),
            Err(LlmError::InvalidRequest(_))
        ));
        assert!(matches!(
            gw.complete(&request("a", 0)),
            Err(LlmError::InvalidRequest(_))
        ));
        assert!(matches!(
            ScriptedBackend::new(MockScript::from_json(r#"{"rules":[{"regex":"(","reply":""}]}"#).unwrap()),
            Err(LlmError::InvalidScript(_))
        ));
    }
}
