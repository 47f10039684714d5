//! Corpus model and loader.
//!
//! A corpus directory holds a `corpus.json` manifest plus one line-delimited
//! JSON file per document: `<doc_id>.articles.jsonl` for laws and bylaws,
//! `<doc_id>.qa.jsonl` for question/answer datasets.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

pub const MANIFEST_FILE: &str = "corpus.json";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("schema violation in {record}: field `{field}`: {message}")]
    SchemaViolation {
        record: String,
        field: String,
        message: String,
    },
    #[error("duplicate id `{id}` in {scope}")]
    DuplicateId { scope: String, id: String },
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CorpusError {
    fn schema(record: impl Into<String>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::SchemaViolation {
            record: record.into(),
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentKind {
    Law,
    Bylaws,
    QaDataset,
}

impl DocumentKind {
    pub fn has_articles(self) -> bool {
        matches!(self, Self::Law | Self::Bylaws)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    Arabic,
    English,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaSource {
    Human,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub article_number: u32,
    pub heading: Option<String>,
    pub text: String,
    pub parent_doc: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub qa_id: String,
    pub question: String,
    pub answer: String,
    pub article_number: Option<u32>,
    pub source: QaSource,
}

impl QaPair {
    pub fn passage_text(&self) -> String {
        format!("Q: {}\nA: {}", self.question, self.answer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub kind: DocumentKind,
    pub language: Language,
    pub articles: Vec<Article>,
    pub qa_pairs: Vec<QaPair>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub articles: usize,
    pub qa_pairs: usize,
}

impl Corpus {
    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            documents: self.documents.len(),
            articles: self.documents.iter().map(|d| d.articles.len()).sum(),
            qa_pairs: self.documents.iter().map(|d| d.qa_pairs.len()).sum(),
        }
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    /// Resolves a passage provenance back to the passage text.
    pub fn resolve(&self, source: &SourceRef) -> Option<String> {
        let doc = self.document(source.doc_id())?;
        match source {
            SourceRef::Article { article_number, .. } => doc
                .articles
                .iter()
                .find(|a| a.article_number == *article_number)
                .map(|a| a.text.clone()),
            SourceRef::Qa { qa_id, .. } => doc
                .qa_pairs
                .iter()
                .find(|q| &q.qa_id == qa_id)
                .map(QaPair::passage_text),
        }
    }
}

/// Where a passage (and every chunk cut from it) came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceRef {
    Article {
        doc_id: String,
        article_number: u32,
    },
    Qa {
        doc_id: String,
        qa_id: String,
        article_number: Option<u32>,
    },
}

impl SourceRef {
    pub fn doc_id(&self) -> &str {
        match self {
            Self::Article { doc_id, .. } | Self::Qa { doc_id, .. } => doc_id,
        }
    }

    pub fn article_number(&self) -> Option<u32> {
        match self {
            Self::Article { article_number, .. } => Some(*article_number),
            Self::Qa { article_number, .. } => *article_number,
        }
    }

    /// Stable human-readable label used in chunk ids and prompts.
    pub fn label(&self) -> String {
        match self {
            Self::Article { doc_id, article_number } => format!("{doc_id}#article-{article_number}"),
            Self::Qa { doc_id, qa_id, .. } => format!("{doc_id}#qa-{qa_id}"),
        }
    }
}

impl fmt::Display for SourceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub source_ref: SourceRef,
    pub text: String,
}

/// One passage per article, then one per Q&A pair, in corpus order.
pub fn flatten_to_passages(corpus: &Corpus) -> Vec<Passage> {
    let mut passages = Vec::new();
    for doc in &corpus.documents {
        for article in &doc.articles {
            passages.push(Passage {
                source_ref: SourceRef::Article {
                    doc_id: doc.doc_id.clone(),
                    article_number: article.article_number,
                },
                text: article.text.clone(),
            });
        }
        for pair in &doc.qa_pairs {
            passages.push(Passage {
                source_ref: SourceRef::Qa {
                    doc_id: doc.doc_id.clone(),
                    qa_id: pair.qa_id.clone(),
                    article_number: pair.article_number,
                },
                text: pair.passage_text(),
            });
        }
    }
    passages
}

// ---- file format ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub doc_id: String,
    pub title: String,
    pub kind: DocumentKind,
    pub language: Language,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub documents: Vec<ManifestEntry>,
}

/// One line of an `.articles.jsonl` file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArticleRecord {
    pub article_number: u32,
    pub heading: Option<String>,
    pub text: String,
}

/// One line of a `.qa.jsonl` file. `qa_id` is optional on disk; when absent
/// the loader derives `<doc_id>-<line>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qa_id: Option<String>,
    pub question: String,
    pub answer: String,
    pub article_number: Option<u32>,
    pub source: QaSource,
}

impl From<&QaPair> for QaRecord {
    fn from(pair: &QaPair) -> Self {
        Self {
            qa_id: Some(pair.qa_id.clone()),
            question: pair.question.clone(),
            answer: pair.answer.clone(),
            article_number: pair.article_number,
            source: pair.source,
        }
    }
}

fn nfc(s: &str) -> String {
    s.nfc().collect()
}

fn json_error_field(err: &serde_json::Error) -> String {
    let msg = err.to_string();
    // serde messages name the field as "missing field `x`" or "unknown field `x`".
    msg.split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<record>".into())
}

/// Parses and validates one article line. `record` names the line in errors.
pub fn parse_article_line(line: &str, doc_id: &str, record: &str) -> Result<Article, CorpusError> {
    let rec: ArticleRecord =
        serde_json::from_str(line).map_err(|e| CorpusError::schema(record, json_error_field(&e), e.to_string()))?;
    if rec.article_number == 0 {
        return Err(CorpusError::schema(record, "article_number", "must be positive"));
    }
    if rec.text.trim().is_empty() {
        return Err(CorpusError::schema(record, "text", "must not be blank"));
    }
    Ok(Article {
        article_number: rec.article_number,
        heading: rec.heading.as_deref().map(nfc),
        text: nfc(&rec.text),
        parent_doc: doc_id.to_string(),
    })
}

/// Parses and validates one Q&A line.
pub fn parse_qa_line(line: &str, default_id: &str, record: &str) -> Result<QaPair, CorpusError> {
    let rec: QaRecord =
        serde_json::from_str(line).map_err(|e| CorpusError::schema(record, json_error_field(&e), e.to_string()))?;
    if rec.question.trim().is_empty() {
        return Err(CorpusError::schema(record, "question", "must not be blank"));
    }
    if rec.answer.trim().is_empty() {
        return Err(CorpusError::schema(record, "answer", "must not be blank"));
    }
    if rec.article_number == Some(0) {
        return Err(CorpusError::schema(record, "article_number", "must be positive"));
    }
    if rec.source == QaSource::Generated && rec.article_number.is_none() {
        return Err(CorpusError::schema(
            record,
            "article_number",
            "required when source is \"generated\"",
        ));
    }
    let qa_id = match rec.qa_id {
        Some(id) if id.trim().is_empty() => return Err(CorpusError::schema(record, "qa_id", "must not be blank")),
        Some(id) => id,
        None => default_id.to_string(),
    };
    Ok(QaPair {
        qa_id,
        question: nfc(&rec.question),
        answer: nfc(&rec.answer),
        article_number: rec.article_number,
        source: rec.source,
    })
}

fn read_file(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| {
        if source.kind() == io::ErrorKind::NotFound {
            CorpusError::MissingFile(path.to_path_buf())
        } else {
            CorpusError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

fn data_lines(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn articles_path(dir: &Path, doc_id: &str) -> PathBuf {
    dir.join(format!("{doc_id}.articles.jsonl"))
}

pub fn qa_path(dir: &Path, doc_id: &str) -> PathBuf {
    dir.join(format!("{doc_id}.qa.jsonl"))
}

fn validate_doc_id(doc_id: &str, record: &str) -> Result<(), CorpusError> {
    if doc_id.trim().is_empty() {
        return Err(CorpusError::schema(record, "doc_id", "must not be empty"));
    }
    if doc_id.contains(['/', '\\']) || doc_id.starts_with('.') {
        return Err(CorpusError::schema(record, "doc_id", "must be a plain file stem"));
    }
    Ok(())
}

/// Loads and validates a corpus directory. Documents come back sorted by
/// `doc_id`, articles by `article_number`; Q&A pairs keep file order.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(CorpusError::MissingFile(dir.to_path_buf()));
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_str(&read_file(&manifest_path)?)
        .map_err(|e| CorpusError::schema(MANIFEST_FILE, json_error_field(&e), e.to_string()))?;

    let mut seen = HashSet::new();
    let mut documents = Vec::with_capacity(manifest.documents.len());
    for (i, entry) in manifest.documents.into_iter().enumerate() {
        let record = format!("{MANIFEST_FILE} entry {i}");
        validate_doc_id(&entry.doc_id, &record)?;
        if !seen.insert(entry.doc_id.clone()) {
            return Err(CorpusError::DuplicateId {
                scope: MANIFEST_FILE.into(),
                id: entry.doc_id,
            });
        }
        documents.push(load_document(dir, entry)?);
    }
    documents.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok(Corpus { documents })
}

fn load_document(dir: &Path, entry: ManifestEntry) -> Result<Document, CorpusError> {
    let ManifestEntry {
        doc_id,
        title,
        kind,
        language,
    } = entry;
    let mut articles = Vec::new();
    let mut qa_pairs = Vec::new();

    if kind.has_articles() {
        let path = articles_path(dir, &doc_id);
        let file_name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let content = read_file(&path)?;
        let mut numbers = HashSet::new();
        for (line_no, line) in data_lines(&content) {
            let record = format!("{file_name}:{line_no}");
            let article = parse_article_line(line, &doc_id, &record)?;
            if !numbers.insert(article.article_number) {
                return Err(CorpusError::DuplicateId {
                    scope: file_name,
                    id: format!("article {}", article.article_number),
                });
            }
            articles.push(article);
        }
        if articles.is_empty() {
            return Err(CorpusError::schema(
                file_name,
                "articles",
                "a law or bylaws document needs at least one article",
            ));
        }
        articles.sort_by_key(|a| a.article_number);
    }

    // Q&A files are required for datasets and optional alongside laws.
    let path = qa_path(dir, &doc_id);
    if kind == DocumentKind::QaDataset || path.exists() {
        let file_name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let content = read_file(&path)?;
        let mut ids = HashSet::new();
        for (line_no, line) in data_lines(&content) {
            let record = format!("{file_name}:{line_no}");
            let pair = parse_qa_line(line, &format!("{doc_id}-{line_no}"), &record)?;
            if !ids.insert(pair.qa_id.clone()) {
                return Err(CorpusError::DuplicateId {
                    scope: file_name,
                    id: pair.qa_id,
                });
            }
            qa_pairs.push(pair);
        }
    }

    Ok(Document {
        doc_id,
        title,
        kind,
        language,
        articles,
        qa_pairs,
    })
}

/// Writes a corpus back out in the directory format `load_corpus` reads.
pub fn write_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
    let dir = dir.as_ref();
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = Manifest {
        documents: corpus
            .documents
            .iter()
            .map(|d| ManifestEntry {
                doc_id: d.doc_id.clone(),
                title: d.title.clone(),
                kind: d.kind,
                language: d.language,
            })
            .collect(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(io_err(&manifest_path))?;

    for doc in &corpus.documents {
        if doc.kind.has_articles() {
            let path = articles_path(dir, &doc.doc_id);
            let mut out = BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
            for a in &doc.articles {
                let rec = ArticleRecord {
                    article_number: a.article_number,
                    heading: a.heading.clone(),
                    text: a.text.clone(),
                };
                let line = serde_json::to_string(&rec).expect("article serializes");
                writeln!(out, "{line}").map_err(io_err(&path))?;
            }
            out.flush().map_err(io_err(&path))?;
        }
        if doc.kind == DocumentKind::QaDataset || !doc.qa_pairs.is_empty() {
            let path = qa_path(dir, &doc.doc_id);
            let mut out = BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
            for pair in &doc.qa_pairs {
                let line = serde_json::to_string(&QaRecord::from(pair)).expect("qa serializes");
                writeln!(out, "{line}").map_err(io_err(&path))?;
            }
            out.flush().map_err(io_err(&path))?;
        }
    }
    Ok(())
}
