//! Synthetic corpora and mock scripts for tests, demos and benchmarks.
//!
//! Articles are assembled from a fixed vocabulary of cooperative-law phrases
//! by a seeded generator, so the same arguments always give the same corpus.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Article, Corpus, Document, DocumentKind, Language, QaPair, QaSource};
use crate::llm::{Matcher, MockScript, RuleSpec};

const SUBJECTS: &[&str] = &[
    "The general assembly",
    "The management committee",
    "Each member",
    "The cooperative",
    "The registrar",
    "The audit committee",
    "The agency",
    "A founding member",
    "The general union",
    "The liquidator",
];

const VERBS: &[&str] = &[
    "shall approve",
    "may review",
    "must submit",
    "shall publish",
    "may suspend",
    "shall record",
    "must notify",
    "shall convene to discuss",
];

const OBJECTS: &[&str] = &[
    "the annual financial statements",
    "the membership register",
    "the distribution of surplus",
    "the election of the committee",
    "any amendment to the bylaws",
    "the registration application",
    "the budget for the coming year",
    "the dissolution of the society",
    "the share capital of each member",
    "the minutes of every meeting",
];

const QUALIFIERS: &[&str] = &[
    "within thirty days of the end of the fiscal year",
    "by a majority of the members present",
    "in accordance with the bylaws",
    "after consulting the agency",
    "at least once every three months",
    "unless the law provides otherwise",
    "in writing",
    "before the ordinary meeting",
];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{} {} {} {}.",
        SUBJECTS.choose(rng).expect("non-empty"),
        VERBS.choose(rng).expect("non-empty"),
        OBJECTS.choose(rng).expect("non-empty"),
        QUALIFIERS.choose(rng).expect("non-empty"),
    )
}

/// Text of roughly `sentences` sentences (about 15 tokens each).
pub fn article_text(rng: &mut ChaCha8Rng, sentences: usize) -> String {
    (0..sentences.max(1))
        .map(|_| sentence(rng))
        .collect::<Vec<_>>()
        .join(" ")
}

/// A law-like document of `articles` articles numbered from 1. About one in
/// ten articles is long enough to need several 600-token chunks.
pub fn law_document(doc_id: &str, kind: DocumentKind, articles: u32, seed: u64) -> Document {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let articles = (1..=articles)
        .map(|n| {
            let sentences = if rng.random_bool(0.1) {
                rng.random_range(45..90)
            } else {
                rng.random_range(1..12)
            };
            Article {
                article_number: n,
                heading: (n == 1).then(|| "Definitions".to_string()),
                text: article_text(&mut rng, sentences),
                parent_doc: doc_id.to_string(),
            }
        })
        .collect();
    Document {
        doc_id: doc_id.to_string(),
        title: format!("Synthetic {doc_id}"),
        kind,
        language: Language::English,
        articles,
        qa_pairs: Vec::new(),
    }
}

/// A Q&A dataset of `pairs` human-written style pairs referring to articles
/// `1..=max_article`.
pub fn qa_document(doc_id: &str, pairs: usize, max_article: u32, seed: u64) -> Document {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qa_pairs = (1..=pairs)
        .map(|i| {
            let article = rng.random_range(1..=max_article.max(1));
            let obj = OBJECTS.choose(&mut rng).expect("non-empty");
            QaPair {
                qa_id: format!("{doc_id}-{i}"),
                question: format!("Who is responsible for {obj}?"),
                answer: format!("According to Article {article}, {}", sentence(&mut rng)),
                article_number: Some(article),
                source: QaSource::Human,
            }
        })
        .collect();
    Document {
        doc_id: doc_id.to_string(),
        title: format!("Synthetic {doc_id}"),
        kind: DocumentKind::QaDataset,
        language: Language::English,
        articles: Vec::new(),
        qa_pairs,
    }
}

/// Three article documents (law, two bylaws) and two Q&A datasets.
pub fn five_resource_corpus(seed: u64) -> Corpus {
    let mut documents = vec![
        law_document("coop-law", DocumentKind::Law, 70, seed),
        law_document("bylaws-housing", DocumentKind::Bylaws, 12, seed + 1),
        law_document("bylaws-general", DocumentKind::Bylaws, 15, seed + 2),
        qa_document("advisor-qa", 40, 70, seed + 3),
        qa_document("generated-qa", 30, 70, seed + 4),
    ];
    documents.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Corpus { documents }
}

/// A smaller three-document corpus: one law, one bylaws, one Q&A set.
pub fn small_corpus(seed: u64) -> Corpus {
    let mut documents = vec![
        law_document("coop-law", DocumentKind::Law, 20, seed),
        law_document("bylaws", DocumentKind::Bylaws, 8, seed + 1),
        qa_document("advisor-qa", 12, 20, seed + 2),
    ];
    documents.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Corpus { documents }
}

/// Rule file that answers every synthesis prompt with `per_article` valid
/// pairs citing the article, except for the `failing` articles, which always
/// get an unparseable reply.
pub fn synthesis_script(per_article: usize, failing: &[u32]) -> MockScript {
    let mut rules: Vec<RuleSpec> = failing
        .iter()
        .map(|n| RuleSpec {
            matcher: Matcher::Regex(format!(r"Article {n}(?: \([^)]*\))?:")),
            reply: "I'm sorry, I can't produce that right now.".into(),
        })
        .collect();
    let items: Vec<String> = (1..=per_article)
        .map(|i| {
            format!(
                r#"{{"question": "What does Article ${{1}} require (question {i})?", "answer": "According to Article ${{1}}, the requirement applies as written (point {i})."}}"#
            )
        })
        .collect();
    rules.push(RuleSpec {
        matcher: Matcher::Regex(r"Article (\d+)(?: \([^)]*\))?:".into()),
        reply: format!("Here are the pairs:\n[{}]", items.join(", ")),
    });
    MockScript { rules, default: None }
}

/// Rule file for question answering: echoes the first context label.
pub fn answer_script() -> MockScript {
    MockScript {
        rules: vec![RuleSpec {
            matcher: Matcher::Regex(r"\[([^\]\s]+)\]".into()),
            reply: "Based on ${1}, the answer is set out in the cited provision.".into(),
        }],
        default: Some("I could not find this in the provided context.".into()),
    }
}
