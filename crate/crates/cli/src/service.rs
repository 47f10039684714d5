//! HTTP service for the chat UI.
//!
//! Every request answers against the index snapshot current when it arrived;
//! [`AppState::swap_snapshot`] replaces the snapshot for later requests.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use legal_rag::corpus::CorpusStats;
use legal_rag::embedding::Embedder;
use legal_rag::engine::{answer_question, Answer, EngineConfig, EngineError};
use legal_rag::index::VectorIndex;
use legal_rag::llm::{Gateway, LlmError};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub struct Snapshot {
    pub index: VectorIndex,
    pub embedder: Arc<dyn Embedder>,
    pub corpus_stats: Option<CorpusStats>,
}

impl Snapshot {
    /// Counts derived from the index when no corpus was loaded.
    fn stats(&self) -> CorpusStats {
        if let Some(stats) = self.corpus_stats {
            return stats;
        }
        use legal_rag::corpus::SourceRef;
        use std::collections::HashSet;
        let mut docs = HashSet::new();
        let mut articles = HashSet::new();
        let mut pairs = HashSet::new();
        for e in self.index.entries() {
            docs.insert(e.source_ref.doc_id());
            match &e.source_ref {
                SourceRef::Article { doc_id, article_number } => {
                    articles.insert((doc_id, *article_number));
                }
                SourceRef::Qa { doc_id, qa_id, .. } => {
                    pairs.insert((doc_id, qa_id));
                }
            }
        }
        CorpusStats {
            documents: docs.len(),
            articles: articles.len(),
            qa_pairs: pairs.len(),
        }
    }
}

pub struct AppState {
    snapshot: RwLock<Arc<Snapshot>>,
    gateway: Gateway,
    engine: EngineConfig,
}

impl AppState {
    pub fn new(snapshot: Snapshot, gateway: Gateway, engine: EngineConfig) -> Self {
        Self {
            snapshot: RwLock::new(Arc::new(snapshot)),
            gateway,
            engine,
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().clone()
    }

    pub fn swap_snapshot(&self, snapshot: Snapshot) {
        *self.snapshot.write() = Arc::new(snapshot);
    }
}

#[derive(Debug, Deserialize)]
struct ChatRequest {
    question: String,
    #[serde(default)]
    language_hint: Option<String>,
}

#[derive(Debug, Serialize)]
struct SourceOut {
    doc_id: String,
    article_number: Option<u32>,
    score: f64,
}

#[derive(Debug, Serialize)]
struct ChatResponse {
    answer: String,
    sources: Vec<SourceOut>,
    timing_ms: u64,
}

impl From<Answer> for ChatResponse {
    fn from(a: Answer) -> Self {
        Self {
            answer: a.text,
            sources: a
                .sources
                .into_iter()
                .map(|h| SourceOut {
                    doc_id: h.source_ref.doc_id().to_string(),
                    article_number: h.source_ref.article_number(),
                    score: h.score,
                })
                .collect(),
            timing_ms: a.timing_ms,
        }
    }
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let message = e.to_string();
        match e {
            EngineError::EmptyQuestion => Self::new(StatusCode::BAD_REQUEST, "empty_question", message),
            EngineError::QuestionTooLong { .. } => Self::new(StatusCode::BAD_REQUEST, "question_too_long", message),
            EngineError::Llm(LlmError::ProviderUnavailable { .. }) | EngineError::Embed(_) => {
                Self::new(StatusCode::BAD_GATEWAY, "provider_unavailable", message)
            }
            EngineError::Llm(LlmError::MalformedProviderReply(_)) => {
                Self::new(StatusCode::BAD_GATEWAY, "malformed_provider_reply", message)
            }
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

async fn chat(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ChatResponse>, ApiError> {
    let req: ChatRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()))?;
    if let Some(hint) = &req.language_hint {
        if hint != "ar" && hint != "en" {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "invalid_language_hint",
                "language_hint must be \"ar\" or \"en\"",
            ));
        }
    }
    if req.question.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "empty_question",
            "question is empty",
        ));
    }
    let snapshot = state.snapshot();
    let worker = state.clone();
    let answer = tokio::task::spawn_blocking(move || {
        answer_question(
            &req.question,
            &snapshot.index,
            &worker.engine,
            &worker.gateway,
            snapshot.embedder.as_ref(),
        )
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(answer.into()))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({"status": "ok", "index_entries": state.snapshot().index.len()}))
}

async fn corpus_stats(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let snap = state.snapshot();
    let stats = snap.stats();
    Json(json!({
        "documents": stats.documents,
        "articles": stats.articles,
        "qa_pairs": stats.qa_pairs,
        "index_entries": snap.index.len(),
    }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>, static_dir: Option<&std::path::Path>) -> Router {
    let api = Router::new()
        .route("/api/chat", post(chat))
        .route("/api/health", get(health))
        .route("/api/corpus/stats", get(corpus_stats))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api.fallback(not_found),
    }
}

/// Serves until ctrl-c or SIGTERM, then lets in-flight requests finish.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown_signal())
        .await
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
}
