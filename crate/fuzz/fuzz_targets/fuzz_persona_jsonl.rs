#![no_main]

use std::collections::HashSet;

use libfuzzer_sys::fuzz_target;
use persona_annotate::persona::{parse_personas, CorpusFormat};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(personas) = parse_personas(text, CorpusFormat::Jsonl, "fuzz") {
        // Accepted corpora must honor the documented invariants.
        let mut ids = HashSet::new();
        for p in &personas {
            assert!(!p.description.trim().is_empty());
            assert!(ids.insert(p.id.as_str()), "duplicate id {:?} slipped through", p.id);
        }
    }
});
