#![no_main]
use legal_rag::llm::{MockScript, ScriptedBackend};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: (&str, &str)| {
    let (json, prompt) = data;
    let Ok(script) = MockScript::from_json(json) else {
        return;
    };
    if let Ok(backend) = ScriptedBackend::new(script) {
        let _ = backend.reply_for(prompt);
    }
});
