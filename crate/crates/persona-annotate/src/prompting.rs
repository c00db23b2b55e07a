//! Prompt rendering and response parsing. Template bodies are fixed strings;
//! the renderer only substitutes the `[persona]` and `[text]` slots.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{BinaryLabel, Instance};
use crate::hashing::hex_fingerprint;
use crate::persona::Persona;

/// The three annotation prompts. T1 and T2 ask for a binary decision, with
/// and without a persona; T3 asks personas for a 1..5 level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    T1,
    T2,
    T3,
}

impl std::fmt::Display for TemplateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TemplateId::T1 => "T1",
            TemplateId::T2 => "T2",
            TemplateId::T3 => "T3",
        })
    }
}

impl std::str::FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "T1" => Ok(TemplateId::T1),
            "T2" => Ok(TemplateId::T2),
            "T3" => Ok(TemplateId::T3),
            other => Err(format!("unknown template id {other:?}")),
        }
    }
}

const TEMPLATE_1: &str = "<TASK> Your task is to annotate the post shown below for toxicity, taking on the perspective of the following persona: [persona]. Respond with 'TRUE' if this post seems toxic/hateful/disrespectful to you and 'FALSE' if this post does not seem toxic/hateful/disrespectful to you. <POST> [text]. <RESPONSE>";

const TEMPLATE_2: &str = "<TASK> Your task is to annotate the post shown below for toxicity. Respond with 'TRUE' if this post seems toxic/hateful/disrespectful to you and 'FALSE' if this post does not seem toxic/hateful/disrespectful to you. <POST> [text]. <RESPONSE>";

const TEMPLATE_3: &str = "<TASK> Your task is to annotate the post shown below, taking on the perspective of the following persona: [persona]. Answer the following question on a scale from 1 to 5, where 1 stands for 'Not at all' and 5 stands for 'Very much so'. How toxic/hateful/disrespectful or offensive does this post seem to you? <POST> [text]. <RESPONSE>";

impl TemplateId {
    pub fn body(self) -> &'static str {
        match self {
            TemplateId::T1 => TEMPLATE_1,
            TemplateId::T2 => TEMPLATE_2,
            TemplateId::T3 => TEMPLATE_3,
        }
    }

    pub fn requires_persona(self) -> bool {
        !matches!(self, TemplateId::T2)
    }

    pub fn schema(self) -> LabelSchema {
        match self {
            TemplateId::T1 | TemplateId::T2 => LabelSchema::binary(),
            TemplateId::T3 => LabelSchema::likert5(),
        }
    }
}

/// Kind of response a prompt solicits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaKind {
    Binary,
    Likert5,
}

/// The legal surface strings a backend may answer with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub kind: SchemaKind,
    pub options: Vec<String>,
}

impl LabelSchema {
    pub fn binary() -> Self {
        LabelSchema {
            kind: SchemaKind::Binary,
            options: vec!["TRUE".into(), "FALSE".into()],
        }
    }

    pub fn likert5() -> Self {
        LabelSchema {
            kind: SchemaKind::Likert5,
            options: vec!["1".into(), "2".into(), "3".into(), "4".into(), "5".into()],
        }
    }

    pub fn contains(&self, option: &str) -> bool {
        self.options.iter().any(|o| o == option)
    }
}

/// Interpret a legal surface label as a typed value.
pub fn to_binary(option: &str) -> Option<BinaryLabel> {
    match option {
        "TRUE" => Some(BinaryLabel::Toxic),
        "FALSE" => Some(BinaryLabel::NotToxic),
        _ => None,
    }
}

pub fn to_likert(option: &str) -> Option<u8> {
    match option {
        "1" => Some(1),
        "2" => Some(2),
        "3" => Some(3),
        "4" => Some(4),
        "5" => Some(5),
        _ => None,
    }
}

/// A fully substituted prompt plus the schema it solicits and where it came
/// from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub schema: LabelSchema,
    pub template: TemplateId,
    pub persona_id: Option<String>,
    pub instance_id: String,
}

impl RenderedPrompt {
    /// Stable content fingerprint, persisted with every run record so prompt
    /// drift between resumed sessions is detectable.
    pub fn fingerprint(&self) -> String {
        hex_fingerprint(&self.text)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {template} requires a persona")]
    MissingPersona { template: TemplateId },
    #[error("template {template} does not take a persona")]
    UnexpectedPersona { template: TemplateId },
}

/// Why a raw response could not be mapped onto the schema. Both cases are
/// retry-eligible at the backend level.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseFailure {
    #[error("response matches no schema option: {raw:?}")]
    NoMatch { raw: String },
    #[error("response is ambiguous between {first:?} and {second:?}: {raw:?}")]
    Ambiguous {
        raw: String,
        first: String,
        second: String,
    },
}

/// Substitute the persona and instance into a template. Substitution is
/// literal: no escaping, no trimming of the persona text.
pub fn render(
    template: TemplateId,
    persona: Option<&Persona>,
    instance: &Instance,
) -> Result<RenderedPrompt, PromptError> {
    match (template.requires_persona(), persona) {
        (true, None) => return Err(PromptError::MissingPersona { template }),
        (false, Some(_)) => return Err(PromptError::UnexpectedPersona { template }),
        _ => {}
    }
    let mut text = template.body().to_string();
    if let Some(p) = persona {
        text = text.replace("[persona]", &p.description);
    }
    text = text.replace("[text]", &instance.text);
    Ok(RenderedPrompt {
        text,
        schema: template.schema(),
        template,
        persona_id: persona.map(|p| p.id.clone()),
        instance_id: instance.instance_id.clone(),
    })
}

/// Map a raw backend response onto a schema option.
///
/// An exact match after whitespace trimming always wins. In non-strict mode a
/// single unambiguous case-insensitive substring match is accepted as well,
/// for backends that decorate their answers.
pub fn parse_response(
    raw: &str,
    schema: &LabelSchema,
    strict: bool,
) -> Result<String, ParseFailure> {
    let trimmed = raw.trim();
    if let Some(option) = schema.options.iter().find(|o| o.as_str() == trimmed) {
        return Ok(option.clone());
    }
    if strict {
        return Err(ParseFailure::NoMatch { raw: raw.into() });
    }
    let lowered = raw.to_lowercase();
    let mut hit: Option<&String> = None;
    for option in &schema.options {
        if lowered.contains(&option.to_lowercase()) {
            if let Some(first) = hit {
                return Err(ParseFailure::Ambiguous {
                    raw: raw.into(),
                    first: first.clone(),
                    second: option.clone(),
                });
            }
            hit = Some(option);
        }
    }
    match hit {
        Some(option) => Ok(option.clone()),
        None => Err(ParseFailure::NoMatch { raw: raw.into() }),
    }
}
