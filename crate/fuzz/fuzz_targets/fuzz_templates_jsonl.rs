#![no_main]

use std::collections::HashSet;

use libfuzzer_sys::fuzz_target;
use persona_annotate::persona::{expand_variants, parse_templates};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(templates) = parse_templates(text, "fuzz") {
        let mut ids = HashSet::new();
        for t in &templates {
            assert!(ids.insert(t.id.as_str()), "duplicate id {:?} slipped through", t.id);
            // Expansion must either succeed or report a missing placeholder;
            // it must never panic on template text of any shape.
            if let Ok(set) = expand_variants(t) {
                assert!(!set.black.description.is_empty());
                assert!(!set.conservative.description.is_empty());
            }
        }
    }
});
