//! Per-article question/answer generation.
//!
//! Each article gets a three-part prompt: the generation request, the article
//! itself, then the output-format instruction. The reply must contain a JSON
//! array of `{"question", "answer"}` objects; surrounding prose is tolerated.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{Article, Corpus, DocumentKind, QaPair, QaRecord, QaSource};
use crate::llm::{ChatMessage, CompletionRequest, Gateway, LlmError, DEFAULT_MAX_ANSWER_TOKENS, SYNTHESIS_TEMPERATURE};

pub const DEFAULT_QUESTIONS_PER_ARTICLE: usize = 5;
pub const DEFAULT_MAX_PARSE_RETRIES: usize = 3;

/// `{article}` is replaced by the article number.
pub const DEFAULT_ANSWER_STYLE_RULE: &str = "Begin every answer by citing the article number, \
for example \"According to Article {article}, ...\", the way a legal advisor would.";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no question/answer structure found in reply")]
    ParseFailure,
    #[error("expected {expected} pairs, reply has {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("pair {index} has an empty `{field}`")]
    EmptyField { index: usize, field: &'static str },
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("no law document with articles to synthesize from")]
    NoArticles,
    #[error("questions_per_article must be at least 1")]
    InvalidConfig,
    #[error("failed to write dataset: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesisConfig {
    pub questions_per_article: usize,
    pub max_parse_retries: usize,
    pub answer_style_rule: String,
    pub max_answer_tokens: usize,
    /// Articles processed at once. The gateway's own cap still applies.
    pub concurrency: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            questions_per_article: DEFAULT_QUESTIONS_PER_ARTICLE,
            max_parse_retries: DEFAULT_MAX_PARSE_RETRIES,
            answer_style_rule: DEFAULT_ANSWER_STYLE_RULE.to_string(),
            max_answer_tokens: DEFAULT_MAX_ANSWER_TOKENS * 4,
            concurrency: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SynthesisFailure {
    pub doc_id: String,
    pub article_number: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SynthesisReport {
    pub pairs: Vec<QaPair>,
    pub failures: Vec<SynthesisFailure>,
    pub articles_processed: usize,
    /// Answers that do not mention their article number.
    pub style_warnings: usize,
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}

pub fn build_synthesis_prompt(article: &Article, config: &SynthesisConfig) -> Vec<ChatMessage> {
    let n = config.questions_per_article;
    let request = format!(
        "Generate {} and their corresponding answers about the following article of the law. \
         The questions should be ones a member of a cooperative might ask a legal advisor.",
        plural(n, "question"),
    );
    let label = match &article.heading {
        Some(h) if !h.trim().is_empty() => format!("Article {} ({h}):", article.article_number),
        _ => format!("Article {}:", article.article_number),
    };
    let article_part = format!("{label}\n{}", article.text);
    let format_part = format!(
        "Return exactly {} as a JSON array. Each element must be a dictionary with exactly two keys: \
         \"question\" and \"answer\". {}",
        plural(n, "question/answer pair"),
        config
            .answer_style_rule
            .replace("{article}", &article.article_number.to_string()),
    );
    vec![
        ChatMessage::user(request),
        ChatMessage::user(article_part),
        ChatMessage::user(format_part),
    ]
}

fn pairs_from_value(value: &Value) -> Option<Result<Vec<(String, String)>, ParseError>> {
    let items: Vec<&Value> = match value {
        Value::Array(items) => items.iter().collect(),
        Value::Object(_) => vec![value],
        _ => return None,
    };
    if items.is_empty() {
        return None;
    }
    let mut out = Vec::with_capacity(items.len());
    for (index, item) in items.into_iter().enumerate() {
        let obj = item.as_object()?;
        if obj.len() != 2 {
            return None;
        }
        let question = obj.get("question")?.as_str()?;
        let answer = obj.get("answer")?.as_str()?;
        if question.trim().is_empty() {
            return Some(Err(ParseError::EmptyField {
                index,
                field: "question",
            }));
        }
        if answer.trim().is_empty() {
            return Some(Err(ParseError::EmptyField { index, field: "answer" }));
        }
        out.push((question.trim().to_string(), answer.trim().to_string()));
    }
    Some(Ok(out))
}

/// Extracts question/answer pairs from a model reply.
///
/// Scans for the first `[` or `{` that starts a JSON value whose elements are
/// all objects with exactly the keys `question` and `answer`.
pub fn parse_synthesis_reply(text: &str, expected: usize) -> Result<Vec<(String, String)>, ParseError> {
    for (pos, ch) in text.char_indices() {
        if ch != '[' && ch != '{' {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[pos..]).into_iter::<Value>();
        let Some(Ok(value)) = stream.next() else {
            continue;
        };
        if let Some(result) = pairs_from_value(&value) {
            let pairs = result?;
            if pairs.len() != expected {
                return Err(ParseError::CountMismatch {
                    expected,
                    found: pairs.len(),
                });
            }
            return Ok(pairs);
        }
    }
    Err(ParseError::ParseFailure)
}

#[derive(Debug)]
enum ArticleOutcome {
    Pairs(Vec<(String, String)>),
    Failed(String),
}

fn run_article(article: &Article, config: &SynthesisConfig, gateway: &Gateway) -> ArticleOutcome {
    let request = CompletionRequest {
        messages: build_synthesis_prompt(article, config),
        max_answer_tokens: config.max_answer_tokens,
        temperature: SYNTHESIS_TEMPERATURE,
    };
    let attempts = config.max_parse_retries + 1;
    let mut last = String::new();
    for attempt in 1..=attempts {
        let reply = match gateway.complete(&request) {
            Ok(r) => r,
            Err(e @ LlmError::MalformedProviderReply(_)) => {
                last = e.to_string();
                continue;
            }
            Err(e) => return ArticleOutcome::Failed(e.to_string()),
        };
        match parse_synthesis_reply(&reply.text, config.questions_per_article) {
            Ok(pairs) => return ArticleOutcome::Pairs(pairs),
            Err(e) => {
                log::debug!("article {} attempt {attempt}/{attempts}: {e}", article.article_number);
                last = e.to_string();
            }
        }
    }
    ArticleOutcome::Failed(format!("gave up after {attempts} attempt(s): {last}"))
}

fn mentions_number(answer: &str, number: u32) -> bool {
    let digits = number.to_string();
    answer.split(|c: char| !c.is_ascii_digit()).any(|run| run == digits)
}

/// Receives each article's pairs, in article order, as soon as they are known.
pub trait PairSink {
    fn append(&mut self, pairs: &[QaPair]) -> io::Result<()>;
}

impl PairSink for Vec<QaPair> {
    fn append(&mut self, pairs: &[QaPair]) -> io::Result<()> {
        self.extend_from_slice(pairs);
        Ok(())
    }
}

/// Appends pairs to a `.qa.jsonl` file, flushing after every article.
pub struct QaFileWriter {
    out: BufWriter<File>,
}

impl QaFileWriter {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        Ok(Self {
            out: BufWriter::new(file),
        })
    }
}

impl PairSink for QaFileWriter {
    fn append(&mut self, pairs: &[QaPair]) -> io::Result<()> {
        for pair in pairs {
            let line = serde_json::to_string(&QaRecord::from(pair)).map_err(io::Error::other)?;
            writeln!(self.out, "{line}")?;
        }
        self.out.flush()
    }
}

struct Accumulator<'a> {
    done: BTreeMap<usize, (Vec<QaPair>, Option<SynthesisFailure>)>,
    next: usize,
    report: SynthesisReport,
    sink: &'a mut (dyn PairSink + Send),
    io_error: Option<io::Error>,
}

impl Accumulator<'_> {
    fn finish(&mut self, slot: usize, pairs: Vec<QaPair>, failure: Option<SynthesisFailure>) {
        self.done.insert(slot, (pairs, failure));
        while let Some((pairs, failure)) = self.done.remove(&self.next) {
            if self.io_error.is_none() {
                if let Err(e) = self.sink.append(&pairs) {
                    self.io_error = Some(e);
                }
            }
            self.report.pairs.extend(pairs);
            self.report.failures.extend(failure);
            self.report.articles_processed += 1;
            self.next += 1;
        }
    }
}

/// Generates pairs for every article of every law document in `corpus`.
///
/// Articles are visited in `(doc_id, article_number)` order and reported in
/// that order whatever the completion order. Per-article failures are
/// recorded in the report and never abort the run.
pub fn synthesize_dataset(
    corpus: &Corpus,
    config: &SynthesisConfig,
    gateway: &Gateway,
    sink: &mut (dyn PairSink + Send),
) -> Result<SynthesisReport, SynthesisError> {
    if config.questions_per_article == 0 {
        return Err(SynthesisError::InvalidConfig);
    }
    let articles: Vec<(&str, &Article)> = corpus
        .documents
        .iter()
        .filter(|d| d.kind == DocumentKind::Law)
        .flat_map(|d| d.articles.iter().map(move |a| (d.doc_id.as_str(), a)))
        .collect();
    if articles.is_empty() {
        return Err(SynthesisError::NoArticles);
    }

    let acc = Mutex::new(Accumulator {
        done: BTreeMap::new(),
        next: 0,
        report: SynthesisReport::default(),
        sink,
        io_error: None,
    });
    let cursor = AtomicUsize::new(0);
    let workers = config.concurrency.clamp(1, articles.len());

    let work = || loop {
        let slot = cursor.fetch_add(1, Ordering::SeqCst);
        let Some(&(doc_id, article)) = articles.get(slot) else {
            break;
        };
        let (pairs, failure) = match run_article(article, config, gateway) {
            ArticleOutcome::Pairs(raw) => {
                let pairs = raw
                    .into_iter()
                    .enumerate()
                    .map(|(i, (question, answer))| QaPair {
                        qa_id: format!("{doc_id}-a{}-q{}", article.article_number, i + 1),
                        question,
                        answer,
                        article_number: Some(article.article_number),
                        source: QaSource::Generated,
                    })
                    .collect();
                (pairs, None)
            }
            ArticleOutcome::Failed(reason) => {
                log::warn!("article {} of {doc_id}: {reason}", article.article_number);
                (
                    Vec::new(),
                    Some(SynthesisFailure {
                        doc_id: doc_id.to_string(),
                        article_number: article.article_number,
                        reason,
                    }),
                )
            }
        };
        acc.lock()
            .unwrap_or_else(|e| e.into_inner())
            .finish(slot, pairs, failure);
    };

    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }

    let mut acc = acc.into_inner().unwrap_or_else(|e| e.into_inner());
    if let Some(e) = acc.io_error.take() {
        return Err(e.into());
    }
    let mut report = acc.report;
    report.style_warnings = report
        .pairs
        .iter()
        .filter(|p| !mentions_number(&p.answer, p.article_number.unwrap_or(0)))
        .count();
    if report.style_warnings > 0 {
        log::warn!(
            "{} generated answers do not cite their article number",
            report.style_warnings
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn article(n: u32, text: &str) -> Article {
        Article {
            article_number: n,
            heading: None,
            text: text.into(),
            parent_doc: "law".into(),
        }
    }

    #[test]
    fn prompt_has_three_parts_in_order() {
        let msgs = build_synthesis_prompt(
            &article(12, "The general assembly meets yearly."),
            &SynthesisConfig::default(),
        );
        assert_eq!(msgs.len(), 3);
        assert!(msgs[0].content.contains("Generate 5 questions"));
        assert!(msgs[1].content.starts_with("Article 12:"));
        assert!(msgs[1].content.contains("The general assembly meets yearly."));
        assert!(msgs[2].content.contains("\"question\""));
        assert!(msgs[2].content.contains("\"answer\""));
        assert!(msgs[2].content.contains("citing the article number"));
        assert!(msgs[2].content.contains("Article 12"));
    }

    #[test]
    fn single_question_prompt() {
        let config = SynthesisConfig {
            questions_per_article: 1,
            ..SynthesisConfig::default()
        };
        let msgs = build_synthesis_prompt(&article(3, "x"), &config);
        assert!(msgs[0].content.contains("Generate 1 question and"));
        assert!(msgs[2].content.contains("exactly 1 question/answer pair as"));
    }

    #[test]
    fn prompts_differ_only_in_article_segment() {
        let config = SynthesisConfig::default();
        let a = build_synthesis_prompt(&article(4, "Alpha text."), &config);
        let b = build_synthesis_prompt(&article(9, "Beta text."), &config);
        assert_eq!(a[0], b[0]);
        assert_ne!(a[1], b[1]);
        assert_eq!(a[2].content.replace("Article 4", "Article 9"), b[2].content);
    }

    #[test]
    fn parses_well_formed_reply() {
        let pairs = parse_synthesis_reply(r#"[{"question":"Q1?","answer":"Per Article 3, A1."}]"#, 1).unwrap();
        assert_eq!(pairs, vec![("Q1?".to_string(), "Per Article 3, A1.".to_string())]);
    }

    #[test]
    fn tolerates_surrounding_prose() {
        let reply = "Sure! Here are the pairs: [{\"question\": \"Who may join?\", \"answer\": \"According to Article 7, any adult.\"}, \
                     {\"question\": \"Is there a fee?\", \"answer\": \"According to Article 7, yes [see bylaws].\"}]\nHope this helps!";
        let pairs = parse_synthesis_reply(reply, 2).unwrap();
        assert_eq!(pairs[1].1, "According to Article 7, yes [see bylaws].");
        let fenced = "```json\n{\"question\":\"q\",\"answer\":\"a\"}\n```";
        assert_eq!(parse_synthesis_reply(fenced, 1).unwrap().len(), 1);
    }

    #[test]
    fn reports_count_and_shape_problems() {
        let four: Vec<String> = (0..4)
            .map(|i| format!(r#"{{"question":"q{i}","answer":"a{i}"}}"#))
            .collect();
        let reply = format!("[{}]", four.join(","));
        assert_eq!(
            parse_synthesis_reply(&reply, 5),
            Err(ParseError::CountMismatch { expected: 5, found: 4 })
        );
        assert_eq!(parse_synthesis_reply("no json here", 1), Err(ParseError::ParseFailure));
        assert_eq!(
            parse_synthesis_reply(r#"[{"question":"q","answer":"a","extra":1}]"#, 1),
            Err(ParseError::ParseFailure)
        );
        assert_eq!(
            parse_synthesis_reply(r#"[{"question":"q","answer":"  "}]"#, 1),
            Err(ParseError::EmptyField {
                index: 0,
                field: "answer"
            })
        );
    }

    #[test]
    fn number_mention_is_whole_number() {
        assert!(mentions_number("According to Article 12, yes.", 12));
        assert!(!mentions_number("According to Article 120, yes.", 12));
    }
}
