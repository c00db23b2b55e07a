#![no_main]

use libfuzzer_sys::fuzz_target;
use persona_annotate::prompting::{parse_response, LabelSchema};

fuzz_target!(|data: &[u8]| {
    // First byte selects schema and strictness; the rest is the raw response.
    let Some((&mode, rest)) = data.split_first() else { return };
    let Ok(raw) = std::str::from_utf8(rest) else { return };
    let schema = if mode & 1 == 0 { LabelSchema::binary() } else { LabelSchema::likert5() };
    let strict = mode & 2 == 0;
    if let Ok(label) = parse_response(raw, &schema, strict) {
        // Whatever is accepted must be one of the schema's legal options.
        assert!(schema.contains(&label), "parsed {label:?} is not a legal option");
        if strict {
            assert_eq!(label, raw.trim());
        }
    }
});
