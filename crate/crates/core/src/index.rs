//! Flat exact vector index with a checksummed binary file format.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes  "LRVX"
//! version      u32
//! dimension    u32
//! entry_count  u64
//! provider     u8 kind, then string provider_id
//! checksum     32 bytes, SHA-256 of every other byte in the file
//! records      entry_count x (u32 byte length, record)
//! ```
//!
//! A record is `string chunk_id`, a source reference (`u8` tag, then
//! `string doc_id` and either `u32 article_number` or `string qa_id`,
//! `u8 has_article`, `u32 article_number`), `string text`, and
//! `dimension` x `f64` vector components. Strings are `u32` length + UTF-8.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chunk::{chunk_passage, ChunkError, ChunkingConfig, Tokenizer};
use crate::corpus::{flatten_to_passages, Corpus, SourceRef};
use crate::embedding::{dot, EmbedError, Embedder, EmbeddingProviderSpec, EmbeddingVector, ProviderKind};

pub const MAGIC: [u8; 4] = *b"LRVX";
pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_K: usize = 3;
const CHECKSUM_LEN: usize = 32;
const EMBED_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate chunk id `{0}`")]
    DuplicateChunkId(String),
    #[error("dimension mismatch: index has {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("corrupt index file: {0}")]
    CorruptIndexFile(String),
    #[error("unsupported index format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub chunk_id: String,
    pub source_ref: SourceRef,
    pub vector: EmbeddingVector,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchHit {
    pub chunk_id: String,
    pub score: f64,
    pub text: String,
    pub source_ref: SourceRef,
}

/// Exact cosine search over every stored entry.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    provider: EmbeddingProviderSpec,
    entries: Vec<IndexEntry>,
    ids: HashSet<String>,
}

// Heap element ordered so the *worst* hit sits on top of a max-heap.
struct Ranked<'a> {
    score: f64,
    entry: &'a IndexEntry,
}

impl Ranked<'_> {
    fn better_than(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.entry.chunk_id.cmp(&self.entry.chunk_id))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other.better_than(self)
    }
}

impl VectorIndex {
    pub fn new(provider: EmbeddingProviderSpec) -> Self {
        Self {
            provider,
            entries: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn provider(&self) -> &EmbeddingProviderSpec {
        &self.provider
    }

    pub fn dimension(&self) -> usize {
        self.provider.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// Adds entries atomically: either all are added or none.
    pub fn add(&mut self, entries: Vec<IndexEntry>) -> Result<(), IndexError> {
        let mut batch_ids = HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.vector.dimension() != self.dimension() {
                return Err(IndexError::DimensionMismatch {
                    expected: self.dimension(),
                    actual: e.vector.dimension(),
                });
            }
            if self.ids.contains(&e.chunk_id) || !batch_ids.insert(e.chunk_id.as_str()) {
                return Err(IndexError::DuplicateChunkId(e.chunk_id.clone()));
            }
        }
        self.ids.extend(entries.iter().map(|e| e.chunk_id.clone()));
        self.entries.extend(entries);
        Ok(())
    }

    /// Top-`k` entries by cosine similarity, ties broken by ascending chunk id.
    /// An empty index yields no hits.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        if query.dimension() != self.dimension() {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension(),
                actual: query.dimension(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: BinaryHeap<Ranked<'_>> = BinaryHeap::with_capacity(k + 1);
        for entry in &self.entries {
            let cand = Ranked {
                score: dot(query.values(), entry.vector.values()).clamp(-1.0, 1.0),
                entry,
            };
            if heap.len() < k {
                heap.push(cand);
            } else if let Some(worst) = heap.peek() {
                if cand.better_than(worst) == Ordering::Greater {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }
        // into_sorted_vec is ascending by Ord, i.e. best first.
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|r| SearchHit {
                chunk_id: r.entry.chunk_id.clone(),
                score: r.score,
                text: r.entry.text.clone(),
                source_ref: r.entry.source_ref.clone(),
            })
            .collect())
    }

    /// Chunks every passage of `corpus`, embeds the chunks and indexes them.
    pub fn build(
        corpus: &Corpus,
        config: &ChunkingConfig,
        tokenizer: &dyn Tokenizer,
        embedder: &dyn Embedder,
    ) -> Result<Self, IndexError> {
        let mut chunks = Vec::new();
        for passage in flatten_to_passages(corpus) {
            chunks.extend(chunk_passage(&passage.text, &passage.source_ref, config, tokenizer)?);
        }
        let mut index = Self::new(embedder.spec().clone());
        for batch in chunks.chunks(EMBED_BATCH) {
            let texts: Vec<String> = batch.iter().map(|c| c.text.clone()).collect();
            let vectors = embedder.embed_batch(&texts)?;
            let entries = batch
                .iter()
                .zip(vectors)
                .map(|(c, vector)| IndexEntry {
                    chunk_id: c.chunk_id.clone(),
                    source_ref: c.source_ref.clone(),
                    vector,
                    text: c.text.clone(),
                })
                .collect();
            index.add(entries)?;
        }
        Ok(index)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dimension() as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        out.push(kind_tag(self.provider.kind));
        put_str(&mut out, &self.provider.provider_id);
        let checksum_at = out.len();
        out.extend_from_slice(&[0u8; CHECKSUM_LEN]);
        let mut record = Vec::new();
        for e in &self.entries {
            record.clear();
            encode_entry(&mut record, e);
            out.extend_from_slice(&(record.len() as u32).to_le_bytes());
            out.extend_from_slice(&record);
        }
        let digest = checksum(&out[..checksum_at], &out[checksum_at + CHECKSUM_LEN..]);
        out[checksum_at..checksum_at + CHECKSUM_LEN].copy_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(IndexError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let dimension = r.u32()? as usize;
        let count = r.u64()?;
        let kind = match r.u8()? {
            0 => ProviderKind::Mock,
            1 => ProviderKind::Remote,
            t => return Err(corrupt(format!("unknown provider kind {t}"))),
        };
        let provider_id = r.string()?;
        let checksum_at = r.pos;
        let stored: [u8; CHECKSUM_LEN] = r.take(CHECKSUM_LEN)?.try_into().expect("fixed length");
        if checksum(&bytes[..checksum_at], &bytes[checksum_at + CHECKSUM_LEN..]) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        let provider = EmbeddingProviderSpec {
            provider_id,
            dimension,
            kind,
        };
        let mut index = Self::new(provider);
        for i in 0..count {
            let len = r.u32()? as usize;
            let mut rec = Reader::new(r.take(len)?);
            let entry = decode_entry(&mut rec, dimension).map_err(|e| corrupt(format!("record {i}: {e}")))?;
            if !rec.is_done() {
                return Err(corrupt(format!("record {i}: trailing bytes")));
            }
            index
                .add(vec![entry])
                .map_err(|e| corrupt(format!("record {i}: {e}")))?;
        }
        if !r.is_done() {
            return Err(corrupt("trailing bytes after last record"));
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

fn corrupt(msg: impl Into<String>) -> IndexError {
    IndexError::CorruptIndexFile(msg.into())
}

fn kind_tag(kind: ProviderKind) -> u8 {
    match kind {
        ProviderKind::Mock => 0,
        ProviderKind::Remote => 1,
    }
}

fn checksum(head: &[u8], tail: &[u8]) -> [u8; CHECKSUM_LEN] {
    let mut h = Sha256::new();
    h.update(head);
    h.update(tail);
    h.finalize().into()
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn encode_entry(out: &mut Vec<u8>, e: &IndexEntry) {
    put_str(out, &e.chunk_id);
    match &e.source_ref {
        SourceRef::Article { doc_id, article_number } => {
            out.push(0);
            put_str(out, doc_id);
            out.extend_from_slice(&article_number.to_le_bytes());
        }
        SourceRef::Qa {
            doc_id,
            qa_id,
            article_number,
        } => {
            out.push(1);
            put_str(out, doc_id);
            put_str(out, qa_id);
            out.push(article_number.is_some() as u8);
            out.extend_from_slice(&article_number.unwrap_or(0).to_le_bytes());
        }
    }
    put_str(out, &e.text);
    for v in e.vector.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn decode_entry(r: &mut Reader<'_>, dimension: usize) -> Result<IndexEntry, IndexError> {
    let chunk_id = r.string()?;
    let source_ref = match r.u8()? {
        0 => SourceRef::Article {
            doc_id: r.string()?,
            article_number: r.u32()?,
        },
        1 => {
            let doc_id = r.string()?;
            let qa_id = r.string()?;
            let has = r.u8()?;
            let number = r.u32()?;
            let article_number = match has {
                0 => None,
                1 => Some(number),
                t => return Err(corrupt(format!("bad article flag {t}"))),
            };
            SourceRef::Qa {
                doc_id,
                qa_id,
                article_number,
            }
        }
        t => return Err(corrupt(format!("unknown source tag {t}"))),
    };
    let text = r.string()?;
    let raw = r.take(dimension.checked_mul(8).ok_or_else(|| corrupt("dimension overflow"))?)?;
    let values = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    Ok(IndexEntry {
        chunk_id,
        source_ref,
        vector: EmbeddingVector::from_raw(values),
        text,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn is_done(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, IndexError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| corrupt("invalid UTF-8 string"))
    }
}
