//! Settings shared by the CLI and the service.
//!
//! Values come from command-line flags, then the optional TOML config file,
//! then built-in defaults, in that order of precedence.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use legal_rag::chunk::WordSymbolTokenizer;
use legal_rag::chunk::{ChunkingConfig, DEFAULT_CHUNK_OVERLAP, DEFAULT_CHUNK_SIZE, DEFAULT_MODEL_LIMIT};
use legal_rag::embedding::{
    Embedder, EmbeddingProviderSpec, MockEmbedder, ProviderKind, RemoteEmbedder, DEFAULT_EMBED_IN_FLIGHT,
    DEFAULT_MOCK_DIMENSION, DEFAULT_MOCK_ID,
};
use legal_rag::engine::{EngineConfig, DEFAULT_SYSTEM_INSTRUCTION};
use legal_rag::index::DEFAULT_K;
use legal_rag::llm::{
    ChatBackend, Gateway, MockScript, RemoteChatBackend, ScriptedBackend, ANSWER_TEMPERATURE, DEFAULT_CHAT_IN_FLIGHT,
    DEFAULT_MAX_ANSWER_TOKENS,
};
use legal_rag::retry::RetryPolicy;
use legal_rag::Endpoint;
use serde::Deserialize;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_LLM_MODEL: &str = "gpt-4";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub listen: Option<String>,
    pub index: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    pub build_on_start: Option<bool>,
    #[serde(default)]
    pub chunking: ChunkingSection,
    #[serde(default)]
    pub engine: EngineSection,
    #[serde(default)]
    pub llm: LlmSection,
    #[serde(default)]
    pub embedder: EmbedderSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkingSection {
    pub chunk_size: Option<usize>,
    pub chunk_overlap: Option<usize>,
    pub model_limit: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub k: Option<usize>,
    pub max_answer_tokens: Option<usize>,
    pub system_instruction: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    pub backend: Option<BackendKind>,
    pub model: Option<String>,
    pub mock_script: Option<PathBuf>,
    pub max_in_flight: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderSection {
    pub kind: Option<BackendKind>,
    pub model: Option<String>,
    pub dimension: Option<usize>,
    pub max_in_flight: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Chunking flags.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ChunkArgs {
    #[arg(long)]
    pub chunk_size: Option<usize>,
    #[arg(long)]
    pub chunk_overlap: Option<usize>,
    #[arg(long)]
    pub model_limit: Option<usize>,
}

impl ChunkArgs {
    pub fn resolve(&self, file: &FileConfig) -> Result<ChunkingConfig> {
        let config = ChunkingConfig::new(
            self.chunk_size
                .or(file.chunking.chunk_size)
                .unwrap_or(DEFAULT_CHUNK_SIZE),
            self.chunk_overlap
                .or(file.chunking.chunk_overlap)
                .unwrap_or(DEFAULT_CHUNK_OVERLAP),
            self.model_limit
                .or(file.chunking.model_limit)
                .unwrap_or(DEFAULT_MODEL_LIMIT),
        )?;
        Ok(config)
    }
}

/// Embedding provider flags, used when building an index.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct EmbedArgs {
    /// Embedding provider.
    #[arg(long, value_enum)]
    pub embedder: Option<BackendKind>,
    #[arg(long)]
    pub embed_model: Option<String>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
}

impl EmbedArgs {
    pub fn resolve(&self, file: &FileConfig) -> Result<Arc<dyn Embedder>> {
        let kind = self.embedder.or(file.embedder.kind).unwrap_or(BackendKind::Mock);
        let dimension = self
            .embed_dim
            .or(file.embedder.dimension)
            .unwrap_or(DEFAULT_MOCK_DIMENSION);
        let model = self.embed_model.clone().or(file.embedder.model.clone());
        let spec = EmbeddingProviderSpec {
            provider_id: model.unwrap_or_else(|| DEFAULT_MOCK_ID.to_string()),
            dimension,
            kind: match kind {
                BackendKind::Mock => ProviderKind::Mock,
                BackendKind::Remote => ProviderKind::Remote,
            },
        };
        embedder_for(&spec, file.embedder.max_in_flight)
    }
}

/// Recreates the embedder an index was built with.
pub fn embedder_for(spec: &EmbeddingProviderSpec, max_in_flight: Option<usize>) -> Result<Arc<dyn Embedder>> {
    Ok(match spec.kind {
        ProviderKind::Mock => Arc::new(MockEmbedder::new(spec.provider_id.clone(), spec.dimension)?),
        ProviderKind::Remote => {
            let endpoint = Endpoint::from_env("EMBED_API_URL", "EMBED_API_KEY")
                .context("the index uses a remote embedder but EMBED_API_URL is not set")?;
            Arc::new(RemoteEmbedder::new(
                spec.provider_id.clone(),
                spec.dimension,
                endpoint,
                RetryPolicy::default(),
                max_in_flight.unwrap_or(DEFAULT_EMBED_IN_FLIGHT),
            )?)
        }
    })
}

/// Language model flags.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct LlmArgs {
    /// Chat backend. Defaults to `mock` when a mock script is given, else `remote`.
    #[arg(long, value_enum)]
    pub llm: Option<BackendKind>,
    /// Rule file for the mock backend.
    #[arg(long)]
    pub mock_llm: Option<PathBuf>,
    #[arg(long)]
    pub llm_model: Option<String>,
}

impl LlmArgs {
    pub fn resolve(&self, file: &FileConfig, model_limit: usize) -> Result<Gateway> {
        let script = self.mock_llm.clone().or(file.llm.mock_script.clone());
        let kind = self.llm.or(file.llm.backend).unwrap_or(if script.is_some() {
            BackendKind::Mock
        } else {
            BackendKind::Remote
        });
        let backend: Arc<dyn ChatBackend> = match kind {
            BackendKind::Mock => {
                let Some(path) = script else {
                    bail!("the mock language model needs a rule file (--mock-llm)");
                };
                Arc::new(ScriptedBackend::new(MockScript::load(&path)?)?)
            }
            BackendKind::Remote => {
                let model = self
                    .llm_model
                    .clone()
                    .or(file.llm.model.clone())
                    .unwrap_or_else(|| DEFAULT_LLM_MODEL.to_string());
                let endpoint = Endpoint::from_env("LLM_API_URL", "LLM_API_KEY")
                    .context("LLM_API_URL is not set (use --mock-llm for offline runs)")?;
                Arc::new(RemoteChatBackend::new(
                    model,
                    endpoint,
                    RetryPolicy::default(),
                    file.llm.max_in_flight.unwrap_or(DEFAULT_CHAT_IN_FLIGHT),
                )?)
            }
        };
        Ok(Gateway::new(backend, Arc::new(WordSymbolTokenizer), model_limit))
    }
}

/// Answering flags.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct EngineArgs {
    /// Chunks retrieved per question.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub model_limit: Option<usize>,
    #[arg(long)]
    pub max_answer_tokens: Option<usize>,
}

impl EngineArgs {
    pub fn resolve(&self, file: &FileConfig) -> Result<EngineConfig> {
        let config = EngineConfig {
            k: self.k.or(file.engine.k).unwrap_or(DEFAULT_K),
            model_limit: self
                .model_limit
                .or(file.chunking.model_limit)
                .unwrap_or(DEFAULT_MODEL_LIMIT),
            max_answer_tokens: self
                .max_answer_tokens
                .or(file.engine.max_answer_tokens)
                .unwrap_or(DEFAULT_MAX_ANSWER_TOKENS),
            system_instruction: file
                .engine
                .system_instruction
                .clone()
                .unwrap_or_else(|| DEFAULT_SYSTEM_INSTRUCTION.to_string()),
            temperature: ANSWER_TEMPERATURE,
        };
        config.validate()?;
        let chunk_size = file.chunking.chunk_size.unwrap_or(DEFAULT_CHUNK_SIZE);
        if let Err(e) = config.check_worst_case(chunk_size, &WordSymbolTokenizer) {
            log::warn!("{e}; low-scoring chunks will be dropped when prompts run long");
        }
        Ok(config)
    }
}
