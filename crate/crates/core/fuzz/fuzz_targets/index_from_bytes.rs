#![no_main]
use legal_rag::index::VectorIndex;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(index) = VectorIndex::from_bytes(data) {
        let bytes = index.to_bytes();
        let again = VectorIndex::from_bytes(&bytes).expect("re-encoded index decodes");
        assert_eq!(again.to_bytes(), bytes);
    }
});
