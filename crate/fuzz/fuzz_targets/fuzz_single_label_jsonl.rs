#![no_main]

use std::collections::HashSet;

use libfuzzer_sys::fuzz_target;
use persona_annotate::datasets::parse_single_label;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(dataset) = parse_single_label(text, "fuzz") {
        let mut ids = HashSet::new();
        for (instance, _) in &dataset.instances {
            assert!(!instance.text.is_empty());
            assert!(
                ids.insert(instance.instance_id.as_str()),
                "duplicate instance {:?} slipped through",
                instance.instance_id
            );
        }
    }
});
