//! Token counting and sliding-window chunking.
//!
//! The default tokenizer treats a maximal run of Unicode letters/digits as one
//! token and every other non-whitespace character as a token of its own.
//! Whitespace only separates. Each token remembers its byte span in the source
//! text so a chunk can be cut back out of the original string verbatim.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SourceRef;

pub const DEFAULT_CHUNK_SIZE: usize = 600;
pub const DEFAULT_CHUNK_OVERLAP: usize = 50;
pub const DEFAULT_MODEL_LIMIT: usize = 8192;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChunkError {
    #[error("chunk overlap {overlap} must be smaller than chunk size {size}")]
    DegenerateConfig { size: usize, overlap: usize },
    #[error("chunk size must be positive")]
    ZeroChunkSize,
    #[error("chunk size {size} exceeds the model limit {limit}")]
    ChunkExceedsModelLimit { size: usize, limit: usize },
}

/// Splits text into tokens. Implementations must be deterministic, return
/// spans in ascending order, and produce no tokens for empty input.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;

    /// Byte spans of every token in `text`.
    fn token_spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.token_spans(text).len()
    }
}

/// Letter/digit runs plus single symbols.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordSymbolTokenizer;

impl Tokenizer for WordSymbolTokenizer {
    fn name(&self) -> &str {
        "word-symbol"
    }

    fn token_spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut run_start: Option<usize> = None;
        for (idx, ch) in text.char_indices() {
            if ch.is_alphanumeric() {
                if run_start.is_none() {
                    run_start = Some(idx);
                }
                continue;
            }
            if let Some(start) = run_start.take() {
                spans.push(start..idx);
            }
            if !ch.is_whitespace() {
                spans.push(idx..idx + ch.len_utf8());
            }
        }
        if let Some(start) = run_start {
            spans.push(start..text.len());
        }
        spans
    }

    fn count(&self, text: &str) -> usize {
        // Same rule as token_spans without allocating.
        let mut count = 0;
        let mut in_run = false;
        for ch in text.chars() {
            if ch.is_alphanumeric() {
                if !in_run {
                    count += 1;
                    in_run = true;
                }
            } else {
                in_run = false;
                if !ch.is_whitespace() {
                    count += 1;
                }
            }
        }
        count
    }
}

pub fn count_tokens(text: &str, tokenizer: &dyn Tokenizer) -> usize {
    tokenizer.count(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    pub chunk_size: usize,
    pub chunk_overlap: usize,
    pub model_limit: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            chunk_size: DEFAULT_CHUNK_SIZE,
            chunk_overlap: DEFAULT_CHUNK_OVERLAP,
            model_limit: DEFAULT_MODEL_LIMIT,
        }
    }
}

impl ChunkingConfig {
    pub fn new(chunk_size: usize, chunk_overlap: usize, model_limit: usize) -> Result<Self, ChunkError> {
        let config = Self {
            chunk_size,
            chunk_overlap,
            model_limit,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ChunkError> {
        if self.chunk_size == 0 {
            return Err(ChunkError::ZeroChunkSize);
        }
        if self.chunk_overlap >= self.chunk_size {
            return Err(ChunkError::DegenerateConfig {
                size: self.chunk_size,
                overlap: self.chunk_overlap,
            });
        }
        if self.chunk_size > self.model_limit {
            return Err(ChunkError::ChunkExceedsModelLimit {
                size: self.chunk_size,
                limit: self.model_limit,
            });
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.chunk_overlap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub source_ref: SourceRef,
    pub token_start: usize,
    pub token_count: usize,
    pub text: String,
}

/// Token windows `(start, count)` for a sequence of `total` tokens.
///
/// Windows start at multiples of the stride and the last one ends at `total`.
/// An empty sequence has no windows.
pub fn window_spans(total: usize, config: &ChunkingConfig) -> Result<Vec<(usize, usize)>, ChunkError> {
    config.validate()?;
    let mut windows = Vec::new();
    if total == 0 {
        return Ok(windows);
    }
    let stride = config.stride();
    let mut start = 0;
    loop {
        let end = (start + config.chunk_size).min(total);
        windows.push((start, end - start));
        if end == total {
            break;
        }
        start += stride;
    }
    Ok(windows)
}

/// Splits one passage into overlapping chunks. Chunk ids are
/// `<source label>#c<index>`.
pub fn chunk_passage(
    text: &str,
    source_ref: &SourceRef,
    config: &ChunkingConfig,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Chunk>, ChunkError> {
    let spans = tokenizer.token_spans(text);
    let windows = window_spans(spans.len(), config)?;
    let label = source_ref.label();
    Ok(windows
        .into_iter()
        .enumerate()
        .map(|(i, (start, count))| {
            let first = &spans[start];
            let last = &spans[start + count - 1];
            Chunk {
                chunk_id: format!("{label}#c{i}"),
                source_ref: source_ref.clone(),
                token_start: start,
                token_count: count,
                text: text[first.start..last.end].to_string(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src() -> SourceRef {
        SourceRef::Article {
            doc_id: "law".into(),
            article_number: 1,
        }
    }

    fn numbered_text(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn counts_by_default_rule() {
        let tok = WordSymbolTokenizer;
        assert_eq!(count_tokens("", &tok), 0);
        assert_eq!(count_tokens("hello world", &tok), 2);
        assert_eq!(count_tokens("Article 5, para. (b)", &tok), 8);
        assert_eq!(count_tokens("   \n\t ", &tok), 0);
        // Arabic letters form runs just like Latin ones.
        assert_eq!(count_tokens("المادة 12 من القانون", &tok), 4);
    }

    #[test]
    fn count_matches_span_count() {
        let tok = WordSymbolTokenizer;
        for text in ["a-b c", "x,,y", "£10.5 ok?", "متى يجتمع؟", ""] {
            assert_eq!(tok.count(text), tok.token_spans(text).len(), "{text:?}");
        }
    }

    #[test]
    fn twelve_hundred_tokens_make_three_chunks() {
        let config = ChunkingConfig::default();
        assert_eq!(
            window_spans(1200, &config).unwrap(),
            vec![(0, 600), (550, 600), (1100, 100)]
        );
    }

    #[test]
    fn short_passage_is_one_chunk() {
        let text = numbered_text(400);
        let chunks = chunk_passage(&text, &src(), &ChunkingConfig::default(), &WordSymbolTokenizer).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].token_start, 0);
        assert_eq!(chunks[0].token_count, 400);
        assert_eq!(chunks[0].text, text);
    }

    #[test]
    fn empty_passage_has_no_chunks() {
        let chunks = chunk_passage("  ", &src(), &ChunkingConfig::default(), &WordSymbolTokenizer).unwrap();
        assert!(chunks.is_empty());
    }

    #[test]
    fn chunk_text_is_exact_substring() {
        let config = ChunkingConfig::new(4, 1, 100).unwrap();
        let text = "One,  two three\nfour five. six";
        let chunks = chunk_passage(text, &src(), &config, &WordSymbolTokenizer).unwrap();
        let texts: Vec<_> = chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, vec!["One,  two three", "three\nfour five.", ". six"]);
        assert_eq!(chunks[1].chunk_id, "law#article-1#c1");
    }

    #[test]
    fn overlap_not_below_size_is_rejected() {
        let err = ChunkingConfig::new(50, 50, 8192).unwrap_err();
        assert_eq!(err, ChunkError::DegenerateConfig { size: 50, overlap: 50 });
        let bad = ChunkingConfig {
            chunk_size: 10,
            chunk_overlap: 20,
            model_limit: 100,
        };
        assert!(chunk_passage("a b", &src(), &bad, &WordSymbolTokenizer).is_err());
    }

    #[test]
    fn zero_overlap_partitions() {
        let config = ChunkingConfig::new(7, 0, 100).unwrap();
        let windows = window_spans(30, &config).unwrap();
        let mut next = 0;
        for (start, count) in windows {
            assert_eq!(start, next);
            next = start + count;
        }
        assert_eq!(next, 30);
    }
}
