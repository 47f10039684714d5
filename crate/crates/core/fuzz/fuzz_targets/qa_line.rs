#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|line: &str| {
    if let Ok(pair) = legal_rag::corpus::parse_qa_line(line, "fuzz-1", "fuzz:1") {
        assert!(!pair.qa_id.is_empty());
        let _ = pair.passage_text();
    }
});
