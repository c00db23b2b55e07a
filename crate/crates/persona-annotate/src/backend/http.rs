//! HTTP annotation backend for OpenAI-style completion endpoints.
//!
//! Requests carry the schema's option list as `allowed_choices` so servers
//! that support constrained decoding can enforce it; responses are validated
//! through the same parser either way.

use std::time::Duration;

use serde_json::{json, Value};

use super::{
    AnnotationRequest, AnnotationResult, Annotator, BackendConfig, BackendError, BackendKind,
    ChatWrapping,
};
use crate::prompting::parse_response;

pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    model_name: String,
    temperature: f64,
    max_tokens: u32,
    max_retries: u32,
    chat_wrapping: ChatWrapping,
    response_text_pointer: String,
    strict_parsing: bool,
    api_key: Option<String>,
}

/// What one wire round trip produced.
enum Attempt {
    Text(String),
    /// Worth retrying: transport failure, 5xx, or a malformed body.
    Retryable(String),
    /// Not worth retrying: client-side HTTP error.
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn from_config(config: &BackendConfig) -> Result<HttpBackend, String> {
        config.validate()?;
        let url = config
            .endpoint_url
            .clone()
            .ok_or_else(|| "http backend requires endpoint_url".to_string())?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.request_timeout_secs)))
            .build()
            .into();
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(HttpBackend {
            agent,
            url,
            model_name: config.model_name.clone(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            max_retries: config.max_retries,
            chat_wrapping: config.chat_wrapping,
            response_text_pointer: config.response_text_pointer.clone(),
            strict_parsing: config.strict_parsing,
            api_key,
        })
    }

    fn body_for(&self, request: &AnnotationRequest) -> Value {
        let mut body = json!({
            "model": self.model_name,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "allowed_choices": request.prompt.schema.options,
        });
        match self.chat_wrapping {
            ChatWrapping::Plain => {
                body["prompt"] = Value::String(request.prompt.text.clone());
            }
            ChatWrapping::ChatUserRole => {
                body["messages"] = json!([
                    {"role": "user", "content": request.prompt.text}
                ]);
            }
        }
        body
    }

    fn round_trip(&self, request: &AnnotationRequest) -> Attempt {
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let response = call.send_json(self.body_for(request));
        let mut response = match response {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) => {
                if code >= 500 {
                    return Attempt::Retryable(format!("server error {code}"));
                }
                return Attempt::Fatal(BackendError::HttpStatus {
                    run_id: request.run_id.clone(),
                    instance_id: request.instance_id().to_string(),
                    status: code,
                });
            }
            Err(e) => return Attempt::Retryable(e.to_string()),
        };
        let value: Value = match response.body_mut().read_json() {
            Ok(v) => v,
            Err(e) => return Attempt::Retryable(format!("unreadable response body: {e}")),
        };
        match value.pointer(&self.response_text_pointer).and_then(Value::as_str) {
            Some(text) => Attempt::Text(text.to_string()),
            None => Attempt::Retryable(format!(
                "no text at pointer {:?} in response",
                self.response_text_pointer
            )),
        }
    }
}

impl Annotator for HttpBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Http
    }

    fn annotate(&self, request: &AnnotationRequest) -> Result<AnnotationResult, BackendError> {
        let max_attempts = self.max_retries + 1;
        let mut last_parse_failure = None;
        let mut last_transport = None;
        for attempt in 1..=max_attempts {
            match self.round_trip(request) {
                Attempt::Text(raw) => {
                    match parse_response(&raw, &request.prompt.schema, self.strict_parsing) {
                        Ok(label) => {
                            return Ok(AnnotationResult {
                                run_id: request.run_id.clone(),
                                persona_id: request.persona_id().map(|s| s.to_string()),
                                instance_id: request.instance_id().to_string(),
                                prompt_hash: request.prompt.fingerprint(),
                                raw_response: raw,
                                label,
                                attempts: attempt,
                                backend_kind: BackendKind::Http,
                            });
                        }
                        Err(failure) => last_parse_failure = Some(failure),
                    }
                }
                Attempt::Retryable(message) => last_transport = Some(message),
                Attempt::Fatal(error) => return Err(error),
            }
        }
        // Prefer reporting the parse failure: it means the wire worked and
        // the model simply would not answer in schema.
        if let Some(last) = last_parse_failure {
            Err(BackendError::ParseExhausted {
                run_id: request.run_id.clone(),
                instance_id: request.instance_id().to_string(),
                attempts: max_attempts,
                last,
            })
        } else {
            Err(BackendError::Transport {
                run_id: request.run_id.clone(),
                instance_id: request.instance_id().to_string(),
                attempts: max_attempts,
                message: last_transport.unwrap_or_else(|| "unknown transport failure".into()),
            })
        }
    }
}
