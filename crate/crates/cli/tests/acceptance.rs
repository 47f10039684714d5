//! Acceptance checks for the engine and CLI.
//!
//! Prints one PASS/FAIL line per criterion and exits non-zero if any fail.
//! Run with `cargo test -p legal-rag-cli --test acceptance`.

use std::cmp::Ordering;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use legal_rag::chunk::{chunk_passage, window_spans, ChunkingConfig, Tokenizer, WordSymbolTokenizer};
use legal_rag::corpus::{load_corpus, write_corpus, Corpus, DocumentKind, QaSource, SourceRef};
use legal_rag::embedding::{cosine_similarity, Embedder, EmbeddingProviderSpec, MockEmbedder};
use legal_rag::engine::{answer_question, EngineConfig, EngineError};
use legal_rag::eval::{f1_score, parse_judgment_line, EvalError, EvalReport, Label};
use legal_rag::fixtures;
use legal_rag::index::{IndexEntry, VectorIndex};
use legal_rag::llm::{ChatBackend, CompletionRequest, CompletionResponse, Gateway, LlmError, ScriptedBackend};
use legal_rag::synthesis::{synthesize_dataset, QaFileWriter, SynthesisConfig};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("metric reproduction", metric_reproduction),
        ("f1 arithmetic", f1_arithmetic),
        ("chunker properties", chunker_properties),
        ("retrieval oracle", retrieval_oracle),
        ("persistence round-trip", persistence_round_trip),
        ("synthesis pipeline", synthesis_pipeline),
        ("determinism and budget", determinism_and_budget),
        ("judgment schema", judgment_schema),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    let _ = panic::take_hook();
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_legal-rag"));
    cmd.env_remove("LLM_API_URL").env_remove("EMBED_API_URL");
    cmd
}

/// 33 Right, 8 Related (mean 76.875), 9 Wrong.
fn judgments_fixture() -> String {
    let related = [70, 75, 80, 85, 76, 78, 72, 79];
    let mut lines = Vec::new();
    for i in 0..50 {
        let (label, sat) = match i {
            0..=32 => ("Right", 100),
            33..=40 => ("Related", related[i - 33]),
            _ => ("Wrong", 0),
        };
        lines.push(format!(
            r#"{{"question_id": "q{i:02}", "label": "{label}", "satisfaction": {sat}}}"#
        ));
    }
    lines.join("\n") + "\n"
}

fn eval_fixture_report() -> Result<(EvalReport, Duration), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("judgments.jsonl");
    let output = dir.path().join("report.json");
    std::fs::write(&input, judgments_fixture()).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let out = bin()
        .args(["eval", "--judgments"])
        .arg(&input)
        .arg("--out")
        .arg(&output)
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure!(
        out.status.success(),
        "eval exited with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    let report = serde_json::from_str(&std::fs::read_to_string(&output).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    Ok((report, elapsed))
}

fn metric_reproduction() -> Result<String, String> {
    let (r, elapsed) = eval_fixture_report()?;
    ensure!(
        (r.n_right, r.n_related, r.n_wrong) == (33, 8, 9),
        "counts {:?}",
        (r.n_right, r.n_related, r.n_wrong)
    );
    ensure!(r.accuracy_pct == 82.0, "accuracy {}", r.accuracy_pct);
    ensure!(
        (r.avg_satisfaction_pct - 78.3).abs() <= 0.05,
        "satisfaction {}",
        r.avg_satisfaction_pct
    );
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!(
        "accuracy {:.1}, satisfaction {:.3}, {} ms",
        r.accuracy_pct,
        r.avg_satisfaction_pct,
        elapsed.as_millis()
    ))
}

fn f1_arithmetic() -> Result<String, String> {
    let f1 = f1_score(1.0, 0.79);
    ensure!((f1 - 0.8827).abs() <= 0.0005, "f1(1.0, 0.79) = {f1}");
    let (r, _) = eval_fixture_report()?;
    ensure!(r.precision_pos == 1.0, "precision {}", r.precision_pos);
    ensure!((r.recall_pos - 0.82).abs() < 1e-12, "recall {}", r.recall_pos);
    ensure!((r.f1_pos - 0.9011).abs() <= 0.0005, "f1 from counts {}", r.f1_pos);
    let c = r.confusion;
    ensure!((c.tp, c.fp, c.fn_, c.tn) == (41, 0, 9, 0), "confusion {c:?}");
    Ok(format!(
        "f1(1.0, 0.79) = {f1:.4}; from counts P {:.2} R {:.2} F1 {:.4}, TP {} FP {} FN {} TN {}",
        r.precision_pos, r.recall_pos, r.f1_pos, c.tp, c.fp, c.fn_, c.tn
    ))
}

const WORDS: &[&str] = &[
    "article",
    "member",
    "shall",
    "the",
    "of",
    "cooperative",
    "عضو",
    "الجمعية",
    "2017",
    "law",
    "assembly",
];
const SYMBOLS: &[&str] = &[",", ".", ";", "(", ")", "-", ":", "%"];

fn random_text(rng: &mut StdRng, tokens: usize) -> String {
    let mut text = String::with_capacity(tokens * 6);
    for _ in 0..tokens {
        let r: u32 = rng.random();
        let pick = (r >> 8) as usize;
        if r % 100 < 15 {
            text.push_str(SYMBOLS[pick % SYMBOLS.len()]);
        } else {
            text.push_str(WORDS[pick % WORDS.len()]);
        }
        text.push(if (r >> 4).is_multiple_of(20) { '\n' } else { ' ' });
    }
    text
}

fn chunker_properties() -> Result<String, String> {
    let config = ChunkingConfig::new(600, 50, 8192).map_err(|e| e.to_string())?;
    let tok = WordSymbolTokenizer;
    let started = Instant::now();

    let spans = window_spans(1200, &config).map_err(|e| e.to_string())?;
    ensure!(
        spans == vec![(0, 600), (550, 600), (1100, 100)],
        "1200-token spans {spans:?}"
    );

    let mut rng = StdRng::seed_from_u64(3);
    let source = SourceRef::Article {
        doc_id: "doc".into(),
        article_number: 1,
    };
    let mut chunks_seen = 0;
    let mut chunking = Duration::ZERO;
    for trial in 0..1000 {
        let n = if trial < 5 {
            [0, 1, 599, 600, 601][trial]
        } else {
            rng.random_range(0..=10_000)
        };
        let text = random_text(&mut rng, n);
        let spans = tok.token_spans(&text);
        ensure!(
            spans.len() == n,
            "trial {trial}: generator made {} tokens, wanted {n}",
            spans.len()
        );
        let t = Instant::now();
        let chunks = chunk_passage(&text, &source, &config, &tok).map_err(|e| e.to_string())?;
        chunking += t.elapsed();
        chunks_seen += chunks.len();
        let mut covered = 0;
        for (i, c) in chunks.iter().enumerate() {
            ensure!(
                c.token_count <= 600 && c.token_count > 0,
                "trial {trial}: chunk {i} has {} tokens",
                c.token_count
            );
            ensure!(
                c.token_start == i * 550,
                "trial {trial}: chunk {i} starts at {}",
                c.token_start
            );
            let end = c.token_start + c.token_count;
            let expected = &text[spans[c.token_start].start..spans[end - 1].end];
            ensure!(
                c.text == expected,
                "trial {trial}: chunk {i} text differs from its token span"
            );
            if i > 0 {
                let prev_end = chunks[i - 1].token_start + chunks[i - 1].token_count;
                ensure!(
                    prev_end - c.token_start == 50,
                    "trial {trial}: overlap {} before chunk {i}",
                    prev_end - c.token_start
                );
            }
            covered = end;
        }
        ensure!(covered == n, "trial {trial}: chunks cover {covered} of {n} tokens");
    }
    // Generating texts and re-tokenizing them for the checks is not timed.
    ensure!(chunking < Duration::from_secs(10), "chunking took {chunking:?}");
    Ok(format!(
        "1000 texts, {chunks_seen} chunks, chunking {} ms ({} ms with checks)",
        chunking.as_millis(),
        started.elapsed().as_millis()
    ))
}

fn random_entries(rng: &mut StdRng, embedder: &MockEmbedder, n: usize) -> Vec<IndexEntry> {
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..20);
            let text = random_text(rng, len);
            IndexEntry {
                chunk_id: format!("doc#article-{}#c{i}", i / 3),
                source_ref: SourceRef::Article {
                    doc_id: "doc".into(),
                    article_number: (i / 3) as u32,
                },
                vector: embedder.embed_one(&text).expect("embed"),
                text,
            }
        })
        .collect()
}

fn retrieval_oracle() -> Result<String, String> {
    let embedder = MockEmbedder::new("mock-embed-v1", 64).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(4);
    let started = Instant::now();
    let mut total_entries = 0;
    for trial in 0..100 {
        let n = rng.random_range(1..=1000);
        total_entries += n;
        let entries = random_entries(&mut rng, &embedder, n);
        let mut index = VectorIndex::new(embedder.spec().clone());
        index.add(entries.clone()).map_err(|e| e.to_string())?;
        let query = embedder
            .embed_one(&random_text(&mut rng, 8))
            .map_err(|e| e.to_string())?;

        let mut brute: Vec<(f64, &str)> = entries
            .iter()
            .map(|e| {
                (
                    cosine_similarity(&query, &e.vector).expect("same dimension"),
                    e.chunk_id.as_str(),
                )
            })
            .collect();
        brute.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.1.cmp(b.1))
        });
        brute.truncate(10);

        let hits = index.search(&query, 10).map_err(|e| e.to_string())?;
        ensure!(
            hits.len() == brute.len(),
            "trial {trial}: {} hits, expected {}",
            hits.len(),
            brute.len()
        );
        for (h, (score, id)) in hits.iter().zip(&brute) {
            ensure!(
                h.chunk_id == *id,
                "trial {trial}: got {} where brute force has {id}",
                h.chunk_id
            );
            ensure!(
                (h.score - score).abs() <= 1e-9,
                "trial {trial}: score {} vs {score}",
                h.score
            );
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "100 trials over {total_entries} entries, {} ms",
        elapsed.as_millis()
    ))
}

fn persistence_round_trip() -> Result<String, String> {
    let embedder = MockEmbedder::new("mock-embed-v1", 64).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(5);
    let mut index = VectorIndex::new(embedder.spec().clone());
    index
        .add(random_entries(&mut rng, &embedder, 420))
        .map_err(|e| e.to_string())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("round.vidx");
    index.save(&path).map_err(|e| e.to_string())?;
    let loaded = VectorIndex::load(&path).map_err(|e| e.to_string())?;
    ensure!(loaded.len() == 420, "loaded {} entries", loaded.len());

    for q in 0..20 {
        let query = embedder
            .embed_one(&random_text(&mut rng, 10))
            .map_err(|e| e.to_string())?;
        let before = index.search(&query, 10).map_err(|e| e.to_string())?;
        let after = loaded.search(&query, 10).map_err(|e| e.to_string())?;
        ensure!(before.len() == after.len(), "query {q}: result lengths differ");
        for (a, b) in before.iter().zip(&after) {
            ensure!(
                a.chunk_id == b.chunk_id && a.text == b.text && a.source_ref == b.source_ref,
                "query {q}: {} vs {}",
                a.chunk_id,
                b.chunk_id
            );
            ensure!(
                a.score.to_bits() == b.score.to_bits(),
                "query {q}: score bits differ for {}",
                a.chunk_id
            );
        }
    }
    Ok("420 entries, 20 queries bit-equal".into())
}

fn synthesize_into(dir: &Path, failing: &[u32]) -> Result<(usize, usize, usize), String> {
    let law = fixtures::law_document("coop-law", DocumentKind::Law, 70, 6);
    let corpus = Corpus { documents: vec![law] };
    let backend = ScriptedBackend::new(fixtures::synthesis_script(5, failing)).map_err(|e| e.to_string())?;
    let gateway = Gateway::with_defaults(Arc::new(backend));
    let config = SynthesisConfig {
        questions_per_article: 5,
        concurrency: 4,
        ..SynthesisConfig::default()
    };
    let mut writer = QaFileWriter::create(dir.join("generated.qa.jsonl")).map_err(|e| e.to_string())?;
    let report = synthesize_dataset(&corpus, &config, &gateway, &mut writer).map_err(|e| e.to_string())?;
    drop(writer);

    std::fs::write(
        dir.join("corpus.json"),
        r#"{"documents": [{"doc_id": "generated", "title": "Generated", "kind": "qa_dataset", "language": "english"}]}"#,
    )
    .map_err(|e| e.to_string())?;
    let reloaded = load_corpus(dir).map_err(|e| format!("reload failed: {e}"))?;
    let pairs = &reloaded.documents[0].qa_pairs;
    ensure!(
        pairs.iter().all(|p| p.source == QaSource::Generated),
        "reloaded pairs not marked generated"
    );
    Ok((report.pairs.len(), report.failures.len(), pairs.len()))
}

fn synthesis_pipeline() -> Result<String, String> {
    let ok_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (pairs, failures, reloaded) = synthesize_into(ok_dir.path(), &[])?;
    ensure!(
        (pairs, failures, reloaded) == (350, 0, 350),
        "clean run gave {pairs} pairs, {failures} failures, {reloaded} reloaded"
    );

    let bad_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (pairs, failures, reloaded) = synthesize_into(bad_dir.path(), &[17])?;
    ensure!(
        (pairs, failures, reloaded) == (345, 1, 345),
        "failing run gave {pairs} pairs, {failures} failures, {reloaded} reloaded"
    );
    Ok("350 pairs / 0 failures; 345 pairs / 1 failure; both reload".into())
}

/// Records prompt + answer budget of every call that reaches the backend.
struct Recording {
    inner: ScriptedBackend,
    seen: Mutex<Vec<usize>>,
}

impl ChatBackend for Recording {
    fn name(&self) -> &str {
        "recording"
    }

    fn complete(&self, req: &CompletionRequest, prompt_tokens: usize) -> Result<CompletionResponse, LlmError> {
        self.seen.lock().unwrap().push(prompt_tokens + req.max_answer_tokens);
        self.inner.complete(req, prompt_tokens)
    }
}

fn determinism_and_budget() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus_dir = dir.path().join("corpus");
    let corpus = fixtures::small_corpus(7);
    write_corpus(&corpus, &corpus_dir).map_err(|e| e.to_string())?;
    let script = dir.path().join("mock_llm.json");
    std::fs::write(
        &script,
        serde_json::to_string(&fixtures::answer_script()).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let index_path = dir.path().join("small.vidx");

    let out = bin()
        .args(["index", "build", "--corpus"])
        .arg(&corpus_dir)
        .arg("--out")
        .arg(&index_path)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "index build failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let mut answers = Vec::new();
    for _ in 0..5 {
        let out = bin()
            .arg("ask")
            .arg("--index")
            .arg(&index_path)
            .args([
                "--question",
                "Who must approve the annual financial statements?",
                "--mock-llm",
            ])
            .arg(&script)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(
            out.status.success(),
            "ask failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        answers.push(out.stdout);
    }
    ensure!(!answers[0].is_empty(), "empty answer");
    ensure!(answers.iter().all(|a| *a == answers[0]), "answers differ across runs");

    let index = VectorIndex::load(&index_path).map_err(|e| e.to_string())?;
    let spec: &EmbeddingProviderSpec = index.provider();
    let embedder = MockEmbedder::new(spec.provider_id.clone(), spec.dimension).map_err(|e| e.to_string())?;
    let backend = Arc::new(Recording {
        inner: ScriptedBackend::new(fixtures::answer_script()).map_err(|e| e.to_string())?,
        seen: Mutex::new(Vec::new()),
    });
    let gateway = Gateway::new(backend.clone(), Arc::new(WordSymbolTokenizer), 800);
    let config = EngineConfig {
        model_limit: 800,
        max_answer_tokens: 128,
        ..EngineConfig::default()
    };
    let mut rng = StdRng::seed_from_u64(8);
    let (mut trimmed, mut too_long) = (0, 0);
    for q in 0..200 {
        let len = rng.random_range(3..120);
        let question = random_text(&mut rng, len);
        match answer_question(&question, &index, &config, &gateway, &embedder) {
            Ok(answer) => {
                ensure!(
                    answer.prompt_tokens + config.max_answer_tokens <= 800,
                    "question {q}: {} prompt tokens",
                    answer.prompt_tokens
                );
                if answer.sources.len() < config.k {
                    trimmed += 1;
                }
            }
            Err(EngineError::QuestionTooLong { .. }) => too_long += 1,
            Err(e) => return Err(format!("question {q}: {e}")),
        }
    }
    let seen = backend.seen.lock().unwrap();
    ensure!(
        seen.iter().all(|&t| t <= 800),
        "a call of {} tokens reached the backend",
        seen.iter().max().unwrap()
    );
    ensure!(trimmed > 0, "no question needed trimming");
    Ok(format!(
        "5 identical answers; 200 questions at limit 800: {} calls, max {} tokens, {trimmed} trimmed, {too_long} rejected as too long",
        seen.len(),
        seen.iter().max().copied().unwrap_or(0)
    ))
}

fn judgment_schema() -> Result<String, String> {
    let cases = [
        ("Related", "59.9"),
        ("Related", "85.5"),
        ("Related", "100"),
        ("Right", "99"),
        ("Right", "0"),
        ("Wrong", "1"),
        ("Wrong", "60"),
    ];
    for (label, sat) in cases {
        let line = format!(r#"{{"question_id": "x", "label": "{label}", "satisfaction": {sat}}}"#);
        match parse_judgment_line(&line, "case") {
            Err(EvalError::SatisfactionOutOfBand { .. }) => {}
            other => return Err(format!("{label} at {sat}: {other:?}")),
        }
    }
    for (label, sat) in [("Related", "60"), ("Related", "85"), ("Right", "100"), ("Wrong", "0")] {
        let line = format!(r#"{{"question_id": "x", "label": "{label}", "satisfaction": {sat}}}"#);
        let j = parse_judgment_line(&line, "case").map_err(|e| format!("{label} at {sat} rejected: {e}"))?;
        ensure!(
            matches!(j.label, Label::Right | Label::Related | Label::Wrong),
            "bad label"
        );
    }
    Ok(format!(
        "{} out-of-band judgments rejected, band edges accepted",
        cases.len()
    ))
}
