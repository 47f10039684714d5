#![no_main]
use legal_rag::chunk::{chunk_passage, ChunkingConfig, Tokenizer, WordSymbolTokenizer};
use legal_rag::corpus::SourceRef;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: (u8, u8, &str)| {
    let (size, overlap, text) = data;
    let Ok(config) = ChunkingConfig::new(usize::from(size), usize::from(overlap), 8192) else {
        return;
    };
    let source = SourceRef::Article {
        doc_id: "fuzz".into(),
        article_number: 1,
    };
    let chunks = chunk_passage(text, &source, &config, &WordSymbolTokenizer).unwrap();
    let total = WordSymbolTokenizer.count(text);
    let mut end = 0;
    for (i, c) in chunks.iter().enumerate() {
        assert_eq!(c.token_start, i * config.stride());
        assert!(c.token_count <= config.chunk_size);
        assert_eq!(WordSymbolTokenizer.count(&c.text), c.token_count);
        end = c.token_start + c.token_count;
    }
    assert_eq!(end, total);
});
