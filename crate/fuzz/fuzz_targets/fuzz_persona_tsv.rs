#![no_main]

use std::collections::HashSet;

use libfuzzer_sys::fuzz_target;
use persona_annotate::persona::{parse_personas, CorpusFormat};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(personas) = parse_personas(text, CorpusFormat::Tsv, "fuzz") {
        let mut ids = HashSet::new();
        for p in &personas {
            assert!(!p.description.trim().is_empty());
            // Tab-splitting must never leave a tab inside the id column.
            assert!(!p.id.contains('\t'));
            assert!(ids.insert(p.id.as_str()), "duplicate id {:?} slipped through", p.id);
        }
    }
});
