#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|line: &str| {
    if let Ok(article) = legal_rag::corpus::parse_article_line(line, "fuzz", "fuzz:1") {
        assert!(article.article_number > 0);
        assert_eq!(article.parent_doc, "fuzz");
    }
});
