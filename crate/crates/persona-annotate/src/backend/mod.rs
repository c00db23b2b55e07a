//! Label solicitation backends. The simulator is a pure function of its
//! seeds; the HTTP backend is the only place in the crate that touches the
//! network. Both funnel through the same retry and parsing contract.

pub mod http;
pub mod simulator;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::{ParseFailure, RenderedPrompt};

pub use http::HttpBackend;
pub use simulator::{BaseSource, SimulatorBackend, SimulatorParams, SimulatorWorld};

/// Which kind of backend produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Simulator,
}

/// How prompts are shipped over the HTTP wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatWrapping {
    /// `{"prompt": "..."}` completion style.
    Plain,
    /// `{"messages": [{"role": "user", "content": "..."}]}` chat style.
    ChatUserRole,
}

/// Connection and sampling settings shared by both backend kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Required for the http kind.
    pub endpoint_url: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub request_timeout_secs: u64,
    pub max_parallel: usize,
    pub chat_wrapping: ChatWrapping,
    /// JSON pointer into the response body where the generated text lives.
    pub response_text_pointer: String,
    /// Environment variable read for the bearer token; unset means no auth.
    pub api_key_env: String,
    /// Exact-match-only response parsing when true.
    pub strict_parsing: bool,
    pub max_tokens: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Simulator,
            endpoint_url: None,
            model_name: "simulator".into(),
            temperature: 1.0,
            max_retries: 3,
            request_timeout_secs: 30,
            max_parallel: 4,
            chat_wrapping: ChatWrapping::Plain,
            response_text_pointer: "/choices/0/text".into(),
            api_key_env: "ANNOTATOR_API_KEY".into(),
            strict_parsing: false,
            max_tokens: 8,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.temperature < 0.0 {
            return Err("temperature must be non-negative".into());
        }
        if self.max_parallel == 0 {
            return Err("max_parallel must be at least 1".into());
        }
        if self.kind == BackendKind::Http && self.endpoint_url.as_deref().unwrap_or("").is_empty()
        {
            return Err("http backend requires endpoint_url".into());
        }
        Ok(())
    }
}

/// One unit of work for a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRequest {
    pub prompt: RenderedPrompt,
    pub run_id: String,
    /// Per-request noise seed; the simulator requires it, HTTP ignores it.
    pub sampling_seed: Option<u64>,
}

impl AnnotationRequest {
    pub fn instance_id(&self) -> &str {
        &self.prompt.instance_id
    }

    pub fn persona_id(&self) -> Option<&str> {
        self.prompt.persona_id.as_deref()
    }
}

/// A successfully parsed annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationResult {
    pub run_id: String,
    pub persona_id: Option<String>,
    pub instance_id: String,
    pub prompt_hash: String,
    pub raw_response: String,
    /// Schema surface string, e.g. "TRUE" or "4".
    pub label: String,
    pub attempts: u32,
    pub backend_kind: BackendKind,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("run {run_id:?} instance {instance_id:?}: no parseable response after {attempts} attempts, last failure: {last}")]
    ParseExhausted {
        run_id: String,
        instance_id: String,
        attempts: u32,
        last: ParseFailure,
    },
    #[error("run {run_id:?} instance {instance_id:?}: transport failed after {attempts} attempts: {message}")]
    Transport {
        run_id: String,
        instance_id: String,
        attempts: u32,
        message: String,
    },
    #[error("run {run_id:?} instance {instance_id:?}: HTTP status {status}")]
    HttpStatus {
        run_id: String,
        instance_id: String,
        status: u16,
    },
    #[error("simulator has no base score for instance {instance_id:?}")]
    MissingBaseScore { instance_id: String },
    #[error("simulator requests require a sampling_seed (run {run_id:?})")]
    MissingSeed { run_id: String },
}

/// A backend that can label one rendered prompt.
pub trait Annotator: Sync {
    fn kind(&self) -> BackendKind;
    fn annotate(&self, request: &AnnotationRequest) -> Result<AnnotationResult, BackendError>;
}

/// Run requests with bounded parallelism, preserving request order in the
/// output. Per-request failures are embedded, never batch-fatal.
pub fn run_batch(
    backend: &dyn Annotator,
    requests: &[AnnotationRequest],
    max_parallel: usize,
) -> Vec<Result<AnnotationResult, BackendError>> {
    let workers = max_parallel.max(1).min(requests.len().max(1));
    if workers <= 1 || requests.len() <= 1 {
        return requests.iter().map(|r| backend.annotate(r)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<AnnotationResult, BackendError>>> =
        (0..requests.len()).map(|_| None).collect();
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= requests.len() {
                    break;
                }
                let outcome = backend.annotate(&requests[i]);
                if tx.send((i, outcome)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, outcome) in rx {
            slots[i] = Some(outcome);
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every request produced an outcome"))
        .collect()
}
