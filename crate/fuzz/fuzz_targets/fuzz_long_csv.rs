#![no_main]

use libfuzzer_sys::fuzz_target;
use persona_annotate::datasets::parse_long_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(dataset) = parse_long_csv(text, "fuzz") {
        let (instances, annotators) = dataset.shape();
        assert!(dataset.annotation_count() <= instances * annotators);
        for annotation in dataset.annotations() {
            assert!((1..=5).contains(&annotation.rating));
        }
    }
});
