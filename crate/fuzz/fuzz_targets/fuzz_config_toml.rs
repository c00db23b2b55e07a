#![no_main]

use libfuzzer_sys::fuzz_target;
use persona_annotate::experiments::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = parse_config(text, "fuzz") {
        // parse_config validates before returning; spot-check a few of the
        // guarantees analysis code relies on without rechecking.
        assert!(config.study1.n_personas > 0);
        assert!(config.study2.cluster_threshold > 0.0 && config.study2.cluster_threshold < 1.0);
        assert!(config.stats.alpha_variance > 0.0 && config.stats.alpha_variance < 1.0);
    }
});
