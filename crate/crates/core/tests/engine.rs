use std::sync::Arc;

use legal_rag::chunk::{ChunkingConfig, WordSymbolTokenizer};
use legal_rag::embedding::{Embedder, MockEmbedder};
use legal_rag::engine::render_prompt;
use legal_rag::engine::{answer_question, EngineConfig, EngineError, NO_CORPUS_ANSWER};
use legal_rag::fixtures::{answer_script, small_corpus};
use legal_rag::index::VectorIndex;
use legal_rag::llm::{prompt_tokens, Gateway, ScriptedBackend};
use proptest::prelude::*;

fn setup() -> (VectorIndex, MockEmbedder, Gateway) {
    let embedder = MockEmbedder::default();
    let index = VectorIndex::build(
        &small_corpus(7),
        &ChunkingConfig::default(),
        &WordSymbolTokenizer,
        &embedder,
    )
    .unwrap();
    let gateway = Gateway::with_defaults(Arc::new(ScriptedBackend::new(answer_script()).unwrap()));
    (index, embedder, gateway)
}

#[test]
fn answer_cites_top_source_and_is_repeatable() {
    let (index, embedder, gateway) = setup();
    let config = EngineConfig::default();
    let a = answer_question("Who approves the budget?", &index, &config, &gateway, &embedder).unwrap();
    let b = answer_question("Who approves the budget?", &index, &config, &gateway, &embedder).unwrap();
    assert_eq!(a.text, b.text);
    assert_eq!(a.sources, b.sources);
    assert_eq!(a.sources.len(), 3);
    assert!(a.text.contains(&a.sources[0].source_ref.label()));
    assert!(a.prompt_tokens + config.max_answer_tokens <= config.model_limit);
}

#[test]
fn matching_chunk_is_retrieved_first() {
    let (index, embedder, gateway) = setup();
    // The mock embedder maps identical text to identical vectors.
    let target = &index.entries()[5];
    let answer = answer_question(&target.text, &index, &EngineConfig::default(), &gateway, &embedder).unwrap();
    assert_eq!(answer.sources[0].chunk_id, target.chunk_id);
}

#[test]
fn tiny_limit_trims_sources() {
    let (index, embedder, gateway) = setup();
    let config = EngineConfig {
        model_limit: 100,
        max_answer_tokens: 20,
        ..EngineConfig::default()
    };
    let answer = answer_question("What must the registrar publish?", &index, &config, &gateway, &embedder).unwrap();
    assert!(answer.sources.len() < config.k);
    assert!(answer.prompt_tokens + config.max_answer_tokens <= 100);
}

#[test]
fn errors_and_empty_index() {
    let (index, embedder, gateway) = setup();
    let config = EngineConfig::default();
    assert!(matches!(
        answer_question("   ", &index, &config, &gateway, &embedder),
        Err(EngineError::EmptyQuestion)
    ));
    let empty = VectorIndex::new(embedder.spec().clone());
    let answer = answer_question("Anything?", &empty, &config, &gateway, &embedder).unwrap();
    assert!(answer.no_corpus);
    assert_eq!(answer.text, NO_CORPUS_ANSWER);
    let other = MockEmbedder::new("other", 64).unwrap();
    assert!(matches!(
        answer_question("x?", &index, &config, &gateway, &other),
        Err(EngineError::EmbedderMismatch(_))
    ));
    let long_question = vec!["word"; 200].join(" ");
    let tight = EngineConfig {
        model_limit: 150,
        max_answer_tokens: 20,
        ..config
    };
    assert!(matches!(
        answer_question(&long_question, &index, &tight, &gateway, &embedder),
        Err(EngineError::QuestionTooLong { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn budget_and_source_fidelity(question in "[a-z]{1,10}( [a-z]{1,10}){0,30}\\??", limit in 120usize..1500) {
        let (index, embedder, gateway) = setup();
        let config = EngineConfig { model_limit: limit, max_answer_tokens: 40, ..EngineConfig::default() };
        match answer_question(&question, &index, &config, &gateway, &embedder) {
            Ok(answer) => {
                prop_assert!(answer.prompt_tokens + config.max_answer_tokens <= limit);
                let prompt = render_prompt(&question, &answer.sources, &config);
                prop_assert_eq!(prompt_tokens(&prompt, &WordSymbolTokenizer), answer.prompt_tokens);
                for s in &answer.sources {
                    let label = format!("[{}]", s.source_ref.label());
                    prop_assert!(prompt[1].content.contains(&label));
                }
                prop_assert!(answer.sources.windows(2).all(|w| w[0].score >= w[1].score));
            }
            Err(EngineError::QuestionTooLong { prompt_tokens, max_answer_tokens, limit: l }) => {
                prop_assert!(prompt_tokens + max_answer_tokens > l);
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}
