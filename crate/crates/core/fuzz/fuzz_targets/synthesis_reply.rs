#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: (u8, &str)| {
    let (expected, text) = data;
    let expected = usize::from(expected % 8) + 1;
    if let Ok(pairs) = legal_rag::synthesis::parse_synthesis_reply(text, expected) {
        assert_eq!(pairs.len(), expected);
        for (q, a) in pairs {
            assert!(!q.trim().is_empty() && !a.trim().is_empty());
        }
    }
});
