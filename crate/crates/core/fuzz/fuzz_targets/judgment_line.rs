#![no_main]
use legal_rag::eval::{evaluate, parse_judgment_line};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|line: &str| {
    if let Ok(j) = parse_judgment_line(line, "fuzz:1") {
        // Anything accepted must also evaluate cleanly.
        let report = evaluate(&[j]).unwrap();
        assert!((0.0..=100.0).contains(&report.avg_satisfaction_pct));
    }
});
