#![no_main]

use libfuzzer_sys::fuzz_target;
use persona_annotate::store::parse_store;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((records, good_bytes)) = parse_store(text, "fuzz") {
        assert!(good_bytes <= text.len());
        // Truncating to the well-formed region and reparsing must be a
        // fixed point: same records, nothing further dropped.
        let (again, again_bytes) = parse_store(&text[..good_bytes], "fuzz")
            .expect("well-formed region must reparse");
        assert_eq!(records, again);
        assert_eq!(good_bytes, again_bytes);
    }
});
