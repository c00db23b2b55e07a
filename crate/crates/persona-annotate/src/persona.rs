//! Persona corpus handling: loading, language cleaning, sampling, and
//! marker-variant expansion.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A short free-text description of an individual, used to steer annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub id: String,
    pub description: String,
}

/// A persona description carrying `[ATOKEN]` / `[TOKEN]` placeholder slots
/// that marker words can be substituted into.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaTemplate {
    pub id: String,
    pub description_with_placeholders: String,
}

/// The three marker variants expanded from one template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaVariantSet {
    pub template_id: String,
    pub neutral: Persona,
    pub black: Persona,
    pub conservative: Persona,
}

/// Outcome bookkeeping for a cleaning pass over a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub retained_after_language_filter: usize,
    pub removed_ids: Vec<String>,
    /// Texts the detector failed on; those personas are kept.
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate persona id {id:?} (line {line})")]
    DuplicateId { id: String, line: usize },
    #[error("persona {id:?} has an empty description")]
    EmptyDescription { id: String },
    #[error("sample size {requested} exceeds corpus size {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("template {id:?} contains no [ATOKEN] or [TOKEN] placeholder")]
    NoPlaceholder { id: String },
}

/// Source layout for [`load_personas`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    /// One JSON object per line with `id` and `description` fields.
    Jsonl,
    /// One `id<TAB>description` pair per line; a literal `id\tdescription`
    /// header line is skipped.
    Tsv,
}

#[derive(Deserialize)]
struct PersonaLine {
    id: String,
    description: String,
}

#[derive(Deserialize)]
struct TemplateLine {
    id: String,
    description: String,
    #[serde(default)]
    placeholders: bool,
}

fn read_to_string(path: &Path) -> Result<String, PersonaError> {
    fs::read_to_string(path).map_err(|source| PersonaError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parse a persona corpus from text in file order, rejecting duplicate ids
/// and empty descriptions. `origin` names the source in error messages.
pub fn parse_personas(
    content: &str,
    format: CorpusFormat,
    origin: &str,
) -> Result<Vec<Persona>, PersonaError> {
    let mut personas = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let persona = match format {
            CorpusFormat::Jsonl => {
                let parsed: PersonaLine =
                    serde_json::from_str(line).map_err(|e| PersonaError::Parse {
                        path: origin.to_string(),
                        line: lineno,
                        message: e.to_string(),
                    })?;
                Persona {
                    id: parsed.id,
                    description: parsed.description,
                }
            }
            CorpusFormat::Tsv => {
                if lineno == 1 && line == "id\tdescription" {
                    continue;
                }
                let (id, description) =
                    line.split_once('\t').ok_or_else(|| PersonaError::Parse {
                        path: origin.to_string(),
                        line: lineno,
                        message: "expected two tab-separated columns".into(),
                    })?;
                Persona {
                    id: id.to_string(),
                    description: description.to_string(),
                }
            }
        };
        if persona.description.trim().is_empty() {
            return Err(PersonaError::EmptyDescription { id: persona.id });
        }
        if !seen.insert(persona.id.clone()) {
            return Err(PersonaError::DuplicateId {
                id: persona.id,
                line: lineno,
            });
        }
        personas.push(persona);
    }
    Ok(personas)
}

/// Load a persona corpus from a file. See [`parse_personas`].
pub fn load_personas(path: &Path, format: CorpusFormat) -> Result<Vec<Persona>, PersonaError> {
    let content = read_to_string(path)?;
    parse_personas(&content, format, &path.display().to_string())
}

/// Parse persona templates from JSONL text. Template records mark themselves
/// with `"placeholders": true`; anything else is rejected so a plain corpus
/// cannot silently be treated as templates.
pub fn parse_templates(content: &str, origin: &str) -> Result<Vec<PersonaTemplate>, PersonaError> {
    let mut templates = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TemplateLine = serde_json::from_str(line).map_err(|e| PersonaError::Parse {
            path: origin.to_string(),
            line: lineno,
            message: e.to_string(),
        })?;
        if !parsed.placeholders {
            return Err(PersonaError::Parse {
                path: origin.to_string(),
                line: lineno,
                message: "template records must set \"placeholders\": true".into(),
            });
        }
        if !seen.insert(parsed.id.clone()) {
            return Err(PersonaError::DuplicateId {
                id: parsed.id,
                line: lineno,
            });
        }
        templates.push(PersonaTemplate {
            id: parsed.id,
            description_with_placeholders: parsed.description,
        });
    }
    Ok(templates)
}

/// Load persona templates from a JSONL file. See [`parse_templates`].
pub fn load_templates(path: &Path) -> Result<Vec<PersonaTemplate>, PersonaError> {
    let content = read_to_string(path)?;
    parse_templates(&content, &path.display().to_string())
}

/// Write personas as JSONL, one object per line.
pub fn save_personas(path: &Path, personas: &[Persona]) -> Result<(), PersonaError> {
    let mut out = String::new();
    for p in personas {
        // Serialization of a two-string struct cannot fail.
        out.push_str(&serde_json::to_string(p).expect("persona serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| PersonaError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Pluggable language identification. Implementations return a lowercase
/// language tag (such as `"en"`) and a confidence in `[0, 1]`.
pub trait LanguageDetector {
    fn detect(&self, text: &str) -> Result<(String, f64), String>;
}

/// Offline heuristic detector: texts whose share of common English function
/// words reaches a fixed ratio are tagged English. Deliberately coarse; the
/// certainty floor in [`filter_non_english`] exists for calibrated external
/// detectors, so this one always reports full confidence.
#[derive(Debug, Clone, Copy, Default)]
pub struct StopwordDetector;

const STOPWORD_RATIO_THRESHOLD: f64 = 0.12;

pub(crate) const ENGLISH_STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "an", "and", "any", "are", "as", "at", "be", "been", "but", "by",
    "can", "could", "did", "do", "down", "each", "first", "for", "from", "had", "has", "have",
    "he", "her", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "like", "long",
    "made", "make", "many", "may", "more", "my", "no", "not", "now", "of", "on", "one", "or",
    "other", "out", "over", "people", "said", "she", "so", "some", "than", "that", "the", "their",
    "them", "then", "there", "these", "they", "this", "time", "to", "two", "up", "use", "was",
    "way", "we", "were", "what", "when", "which", "who", "will", "with", "would", "you", "your",
];

fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

impl LanguageDetector for StopwordDetector {
    fn detect(&self, text: &str) -> Result<(String, f64), String> {
        let tokens = word_tokens(text);
        if tokens.is_empty() {
            return Err("no word tokens".into());
        }
        let hits = tokens
            .iter()
            .filter(|t| ENGLISH_STOPWORDS.binary_search(&t.as_str()).is_ok())
            .count();
        let ratio = hits as f64 / tokens.len() as f64;
        let tag = if ratio >= STOPWORD_RATIO_THRESHOLD {
            "en"
        } else {
            "other"
        };
        Ok((tag.to_string(), 1.0))
    }
}

/// Drop personas the detector confidently labels non-English. Personas tagged
/// English, tagged non-English below `certainty_floor`, or failing detection
/// outright are all retained; only clear-cut non-English texts go.
pub fn filter_non_english(
    personas: &[Persona],
    detector: &dyn LanguageDetector,
    certainty_floor: f64,
) -> (Vec<Persona>, CorpusStats) {
    let mut retained = Vec::new();
    let mut stats = CorpusStats {
        total: personas.len(),
        ..CorpusStats::default()
    };
    for p in personas {
        match detector.detect(&p.description) {
            Ok((tag, confidence)) => {
                if tag == "en" || confidence < certainty_floor {
                    retained.push(p.clone());
                } else {
                    stats.removed_ids.push(p.id.clone());
                }
            }
            Err(e) => {
                stats
                    .warnings
                    .push(format!("detector failed on {:?}: {e}", p.id));
                retained.push(p.clone());
            }
        }
    }
    stats.retained_after_language_filter = retained.len();
    (retained, stats)
}

/// Uniform sample without replacement, deterministic per seed, returned in
/// corpus order.
pub fn sample_personas(
    personas: &[Persona],
    n: usize,
    seed: u64,
) -> Result<Vec<Persona>, PersonaError> {
    if n > personas.len() {
        return Err(PersonaError::SampleTooLarge {
            requested: n,
            available: personas.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = rand::seq::index::sample(&mut rng, personas.len(), n).into_vec();
    indices.sort_unstable();
    Ok(indices.into_iter().map(|i| personas[i].clone()).collect())
}

const PLACEHOLDER_A: &str = "[ATOKEN]"; // article slot: "a black" / "a conservative" / "a"
const PLACEHOLDER_BARE: &str = "[TOKEN]"; // bare slot: "black" / "conservative" / removal

/// True when the text position right before `at` starts a sentence: the very
/// beginning, or sentence-ending punctuation followed by whitespace.
fn sentence_initial(text: &str, at: usize) -> bool {
    let before = &text[..at];
    let trimmed = before.trim_end();
    if trimmed.is_empty() {
        // Leading whitespace only counts when there is whitespace or nothing;
        // a non-punctuation prefix like "x[TOKEN]" is mid-word, not initial.
        return before.is_empty() || before.ends_with(char::is_whitespace);
    }
    before.ends_with(char::is_whitespace) && trimmed.ends_with(['.', '!', '?'])
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Substitute every placeholder with the given article-slot and bare-slot
/// replacements, capitalizing replacements that open a sentence.
fn substitute(template: &str, article: &str, bare: &str) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest_start = 0;
    loop {
        let tail = &template[rest_start..];
        let next_a = tail.find(PLACEHOLDER_A);
        let next_b = tail.find(PLACEHOLDER_BARE);
        let (offset, placeholder, replacement) = match (next_a, next_b) {
            (None, None) => break,
            (Some(a), None) => (a, PLACEHOLDER_A, article),
            (None, Some(b)) => (b, PLACEHOLDER_BARE, bare),
            (Some(a), Some(b)) => {
                if a <= b {
                    (a, PLACEHOLDER_A, article)
                } else {
                    (b, PLACEHOLDER_BARE, bare)
                }
            }
        };
        let at = rest_start + offset;
        out.push_str(&template[rest_start..at]);
        if !replacement.is_empty() && sentence_initial(template, at) {
            out.push_str(&capitalize(replacement));
        } else {
            out.push_str(replacement);
        }
        rest_start = at + placeholder.len();
    }
    out.push_str(&template[rest_start..]);
    out
}

/// Expand a placeholder template into its neutral, black-marked, and
/// conservative-marked variants. Variant ids are `<template_id>#<variant>`.
///
/// The neutral variant deletes the marker slot (`[ATOKEN]` becomes the bare
/// article, `[TOKEN]` disappears) and collapses the resulting whitespace; a
/// word following a removed `[TOKEN]` keeps its original casing.
pub fn expand_variants(template: &PersonaTemplate) -> Result<PersonaVariantSet, PersonaError> {
    let body = &template.description_with_placeholders;
    if !body.contains(PLACEHOLDER_A) && !body.contains(PLACEHOLDER_BARE) {
        return Err(PersonaError::NoPlaceholder {
            id: template.id.clone(),
        });
    }
    let make = |variant: &str, description: String| -> Result<Persona, PersonaError> {
        if description.trim().is_empty() {
            return Err(PersonaError::EmptyDescription {
                id: format!("{}#{variant}", template.id),
            });
        }
        Ok(Persona {
            id: format!("{}#{variant}", template.id),
            description,
        })
    };
    let neutral = make(
        "neutral",
        collapse_whitespace(&substitute(body, "a", "")),
    )?;
    let black = make("black", substitute(body, "a black", "black"))?;
    let conservative = make(
        "conservative",
        substitute(body, "a conservative", "conservative"),
    )?;
    Ok(PersonaVariantSet {
        template_id: template.id.clone(),
        neutral,
        black,
        conservative,
    })
}

/// Marker variant names in a fixed order, used for run bookkeeping.
pub const VARIANT_NAMES: [&str; 3] = ["neutral", "black", "conservative"];

impl PersonaVariantSet {
    pub fn get(&self, variant: &str) -> Option<&Persona> {
        match variant {
            "neutral" => Some(&self.neutral),
            "black" => Some(&self.black),
            "conservative" => Some(&self.conservative),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn stopword_list_is_sorted_for_binary_search() {
        let mut sorted = ENGLISH_STOPWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, ENGLISH_STOPWORDS);
    }

    #[test]
    fn loads_jsonl_in_order() {
        let f = write_temp(
            "{\"id\":\"p1\",\"description\":\"A nurse\"}\n{\"id\":\"p2\",\"description\":\"A pilot\"}\n",
        );
        let personas = load_personas(f.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(personas.len(), 2);
        assert_eq!(personas[0].id, "p1");
        assert_eq!(personas[1].id, "p2");
    }

    #[test]
    fn loads_five_numeric_id_personas() {
        let ids = ["189476", "11276", "123381", "81722", "73592"];
        let mut content = String::new();
        for id in ids {
            content.push_str(&format!(
                "{{\"id\":\"{id}\",\"description\":\"A persona with id {id}\"}}\n"
            ));
        }
        let f = write_temp(&content);
        let personas = load_personas(f.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(personas.len(), 5);
        let loaded: Vec<&str> = personas.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(loaded, ids);
    }

    #[test]
    fn rejects_duplicate_ids() {
        let f = write_temp(
            "{\"id\":\"p1\",\"description\":\"A nurse\"}\n{\"id\":\"p1\",\"description\":\"A pilot\"}\n",
        );
        let err = load_personas(f.path(), CorpusFormat::Jsonl).unwrap_err();
        match err {
            PersonaError::DuplicateId { id, line } => {
                assert_eq!(id, "p1");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn jsonl_parse_error_carries_line_number() {
        let f = write_temp("{\"id\":\"p1\",\"description\":\"ok\"}\nnot json\n");
        let err = load_personas(f.path(), CorpusFormat::Jsonl).unwrap_err();
        match err {
            PersonaError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn loads_tsv_with_optional_header() {
        let f = write_temp("id\tdescription\np1\tA nurse\np2\tA pilot with a plan\n");
        let personas = load_personas(f.path(), CorpusFormat::Tsv).unwrap();
        assert_eq!(personas.len(), 2);
        assert_eq!(personas[1].description, "A pilot with a plan");
    }

    #[test]
    fn tsv_without_tab_is_a_parse_error() {
        let f = write_temp("p1 A nurse\n");
        assert!(matches!(
            load_personas(f.path(), CorpusFormat::Tsv),
            Err(PersonaError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn save_then_load_round_trips() {
        let personas = vec![
            Persona {
                id: "p1".into(),
                description: "A retired teacher".into(),
            },
            Persona {
                id: "p2".into(),
                description: "A jazz trumpeter".into(),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        save_personas(&path, &personas).unwrap();
        let loaded = load_personas(&path, CorpusFormat::Jsonl).unwrap();
        assert_eq!(loaded, personas);
    }

    #[test]
    fn filter_removes_clear_non_english() {
        let personas = vec![
            Persona {
                id: "en".into(),
                description: "A retired teacher".into(),
            },
            Persona {
                id: "de".into(),
                description: "Ein pensionierter Lehrer".into(),
            },
        ];
        let (kept, stats) = filter_non_english(&personas, &StopwordDetector, 0.9);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "en");
        assert_eq!(stats.total, 2);
        assert_eq!(stats.retained_after_language_filter, 1);
        assert_eq!(stats.removed_ids, vec!["de".to_string()]);
    }

    #[test]
    fn filter_on_empty_input() {
        let (kept, stats) = filter_non_english(&[], &StopwordDetector, 0.9);
        assert!(kept.is_empty());
        assert_eq!(stats.total, 0);
        assert_eq!(stats.retained_after_language_filter, 0);
    }

    #[test]
    fn filter_keeps_all_english() {
        let personas: Vec<Persona> = (0..10)
            .map(|i| Persona {
                id: format!("p{i}"),
                description: format!("A person who likes the number {i} and the sea"),
            })
            .collect();
        let (kept, stats) = filter_non_english(&personas, &StopwordDetector, 0.9);
        assert_eq!(kept.len(), 10);
        assert!(stats.removed_ids.is_empty());
    }

    #[test]
    fn filter_never_removes_detector_labelled_english() {
        struct AlwaysEnglish;
        impl LanguageDetector for AlwaysEnglish {
            fn detect(&self, _: &str) -> Result<(String, f64), String> {
                Ok(("en".into(), 1.0))
            }
        }
        let personas = vec![Persona {
            id: "x".into(),
            description: "zzz qqq vvv".into(),
        }];
        let (kept, _) = filter_non_english(&personas, &AlwaysEnglish, 0.0);
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn filter_retains_low_confidence_and_failures() {
        struct Unsure;
        impl LanguageDetector for Unsure {
            fn detect(&self, text: &str) -> Result<(String, f64), String> {
                if text.contains("fail") {
                    Err("boom".into())
                } else {
                    Ok(("fr".into(), 0.3))
                }
            }
        }
        let personas = vec![
            Persona {
                id: "a".into(),
                description: "whatever".into(),
            },
            Persona {
                id: "b".into(),
                description: "fail here".into(),
            },
        ];
        let (kept, stats) = filter_non_english(&personas, &Unsure, 0.9);
        assert_eq!(kept.len(), 2);
        assert_eq!(stats.warnings.len(), 1);
    }

    fn corpus(n: usize) -> Vec<Persona> {
        (0..n)
            .map(|i| Persona {
                id: format!("p{i:04}"),
                description: format!("Persona number {i}"),
            })
            .collect()
    }

    #[test]
    fn sample_whole_corpus_is_identity() {
        let personas = corpus(20);
        for seed in [0, 1, 99] {
            assert_eq!(sample_personas(&personas, 20, seed).unwrap(), personas);
        }
    }

    #[test]
    fn sample_is_deterministic_and_corpus_ordered() {
        let personas = corpus(50);
        let a = sample_personas(&personas, 3, 7).unwrap();
        let b = sample_personas(&personas, 3, 7).unwrap();
        assert_eq!(a, b);
        let positions: Vec<usize> = a
            .iter()
            .map(|p| personas.iter().position(|q| q == p).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn sample_too_large_errors() {
        let personas = corpus(3);
        assert!(matches!(
            sample_personas(&personas, 4, 0),
            Err(PersonaError::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn sample_overlap_matches_hypergeometric_expectation() {
        // Two independent 500-of-1,000 samples overlap in 250 on average
        // (hypergeometric mean n*K/N). Averaged over 100 seed pairs the
        // observed mean should sit well inside 250 +/- 50.
        let personas = corpus(1000);
        let mut total_overlap = 0usize;
        for pair in 0..100u64 {
            let a = sample_personas(&personas, 500, 2 * pair).unwrap();
            let b = sample_personas(&personas, 500, 2 * pair + 1).unwrap();
            let ids: HashSet<&str> = a.iter().map(|p| p.id.as_str()).collect();
            total_overlap += b.iter().filter(|p| ids.contains(p.id.as_str())).count();
        }
        let mean = total_overlap as f64 / 100.0;
        assert!((200.0..=300.0).contains(&mean), "mean overlap {mean}");
    }

    fn template(id: &str, body: &str) -> PersonaTemplate {
        PersonaTemplate {
            id: id.into(),
            description_with_placeholders: body.into(),
        }
    }

    #[test]
    fn expands_article_slot_with_capitalization() {
        let t = template(
            "130831",
            "[ATOKEN] political science professor writing their first book about democracy",
        );
        let v = expand_variants(&t).unwrap();
        assert_eq!(
            v.black.description,
            "A black political science professor writing their first book about democracy"
        );
        assert_eq!(
            v.conservative.description,
            "A conservative political science professor writing their first book about democracy"
        );
        assert_eq!(
            v.neutral.description,
            "A political science professor writing their first book about democracy"
        );
        assert_eq!(v.black.id, "130831#black");
    }

    #[test]
    fn expands_bare_slot_mid_sentence() {
        let t = template(
            "82521",
            "An internationally recognized [TOKEN] car restoration expert with a web-based reality show",
        );
        let v = expand_variants(&t).unwrap();
        assert_eq!(
            v.black.description,
            "An internationally recognized black car restoration expert with a web-based reality show"
        );
        assert_eq!(
            v.neutral.description,
            "An internationally recognized car restoration expert with a web-based reality show"
        );
    }

    #[test]
    fn neutral_rule_from_article_slot() {
        let t = template(
            "164597",
            "[ATOKEN] receptionist at a boutique hotel who hates fake news",
        );
        let v = expand_variants(&t).unwrap();
        assert_eq!(
            v.neutral.description,
            "A receptionist at a boutique hotel who hates fake news"
        );
    }

    #[test]
    fn capitalizes_after_sentence_punctuation() {
        let t = template("t", "Retired early. [ATOKEN] sailor at heart");
        let v = expand_variants(&t).unwrap();
        assert_eq!(v.black.description, "Retired early. A black sailor at heart");
    }

    #[test]
    fn no_placeholder_is_an_error() {
        let t = template("t", "A persona without slots");
        assert!(matches!(
            expand_variants(&t),
            Err(PersonaError::NoPlaceholder { .. })
        ));
    }

    #[test]
    fn variants_differ_only_at_slots() {
        let t = template("t", "[ATOKEN] judge who reads [TOKEN] poetry aloud");
        let v = expand_variants(&t).unwrap();
        assert_eq!(
            v.black.description,
            "A black judge who reads black poetry aloud"
        );
        assert_eq!(
            v.conservative.description,
            "A conservative judge who reads conservative poetry aloud"
        );
        assert_eq!(v.neutral.description, "A judge who reads poetry aloud");
    }

    /// Removing marker words (case-insensitively) from a marked variant and
    /// collapsing whitespace must recover the neutral text.
    fn strip_marker(text: &str, marker: &str) -> String {
        let mut out = Vec::new();
        for token in text.split_whitespace() {
            if token.to_lowercase() == marker {
                continue;
            }
            out.push(token.to_string());
        }
        out.join(" ")
    }

    #[test]
    fn marker_removal_recovers_neutral() {
        let bodies = [
            "[ATOKEN] nurse",
            "An avid [TOKEN] chess player. [ATOKEN] parent of three",
            "[TOKEN] historian of rural life",
        ];
        for body in bodies {
            let v = expand_variants(&template("t", body)).unwrap();
            let stripped = strip_marker(&v.black.description, "black");
            // The neutral keeps the article from [ATOKEN]; stripping "black"
            // from "a black" leaves "a", so compare case-insensitively to
            // tolerate the capitalization difference at sentence starts.
            assert_eq!(
                stripped.to_lowercase(),
                v.neutral.description.to_lowercase(),
                "body {body:?}"
            );
        }
    }

    proptest::proptest! {
        #[test]
        fn prop_marker_removal_recovers_neutral(
            prefix in "[A-Za-z ]{0,12}",
            middle in "[A-Za-z ]{1,12}",
            suffix in "[A-Za-z ]{0,12}",
        ) {
            // Avoid the marker word itself appearing in the filler text.
            proptest::prop_assume!(!format!("{prefix}{middle}{suffix}").to_lowercase().contains("black"));
            let body = format!("{prefix}[ATOKEN] {middle} [TOKEN] {suffix}");
            let t = PersonaTemplate { id: "t".into(), description_with_placeholders: body };
            if let Ok(v) = expand_variants(&t) {
                let stripped = strip_marker(&v.black.description, "black");
                proptest::prop_assert_eq!(
                    stripped.to_lowercase(),
                    v.neutral.description.to_lowercase()
                );
            }
        }
    }
}
