use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, FinishReason, Role, TokenUsage};

/// Wire format spoken by the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dialect {
    /// `POST {endpoint}/chat/completions` with the OpenAI chat payload.
    #[default]
    OpenAi,
    /// `POST {endpoint}/api/chat` with `stream: false` (Ollama).
    Ollama,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Extra attempts after a transport failure or 5xx reply.
    pub retries: u32,
    pub dialect: Dialect,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            retries: 2,
            dialect: Dialect::OpenAi,
        }
    }

    pub fn url(&self) -> String {
        let suffix = match self.dialect {
            Dialect::OpenAi => "/chat/completions",
            Dialect::Ollama => "/api/chat",
        };
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with(suffix) {
            base.to_string()
        } else {
            format!("{base}{suffix}")
        }
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    /// Request body for the configured dialect. Message content is copied
    /// verbatim.
    pub fn payload(&self, request: &ChatRequest) -> Value {
        let mut messages = Vec::with_capacity(request.messages.len() + 1);
        if !request.system.is_empty() {
            messages.push(json!({"role": Role::System.to_string(), "content": request.system}));
        }
        for m in &request.messages {
            messages.push(json!({"role": m.role.to_string(), "content": m.content}));
        }
        match self.config.dialect {
            Dialect::OpenAi => {
                let mut body = json!({
                    "model": self.config.model,
                    "messages": messages,
                    "temperature": request.temperature,
                });
                if !request.stop.is_empty() {
                    body["stop"] = json!(request.stop);
                }
                if let Some(max) = request.max_tokens {
                    body["max_tokens"] = json!(max);
                }
                body
            }
            Dialect::Ollama => {
                let mut options = json!({"temperature": request.temperature});
                if !request.stop.is_empty() {
                    options["stop"] = json!(request.stop);
                }
                if let Some(max) = request.max_tokens {
                    options["num_predict"] = json!(max);
                }
                json!({
                    "model": self.config.model,
                    "messages": messages,
                    "stream": false,
                    "options": options,
                })
            }
        }
    }

    fn decode(&self, body: &Value) -> Result<(String, FinishReason, Option<TokenUsage>), BackendError> {
        let reason = |r: Option<&str>| match r {
            Some("stop") | None => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) => FinishReason::Other,
        };
        let count = |v: &Value| v.as_u64().map(|n| n as u32);
        match self.config.dialect {
            Dialect::OpenAi => {
                let choice = body
                    .get("choices")
                    .and_then(|c| c.get(0))
                    .ok_or_else(|| BackendError::Payload("no choices in reply".into()))?;
                let content = choice
                    .pointer("/message/content")
                    .and_then(Value::as_str)
                    .ok_or_else(|| BackendError::Payload("choice has no message content".into()))?;
                let usage = body.get("usage").and_then(|u| {
                    Some(TokenUsage {
                        prompt: count(u.get("prompt_tokens")?)?,
                        completion: count(u.get("completion_tokens")?)?,
                    })
                });
                Ok((
                    content.to_string(),
                    reason(choice.get("finish_reason").and_then(Value::as_str)),
                    usage,
                ))
            }
            Dialect::Ollama => {
                let content = body
                    .pointer("/message/content")
                    .and_then(Value::as_str)
                    .ok_or_else(|| BackendError::Payload("reply has no message content".into()))?;
                let usage = (|| {
                    Some(TokenUsage {
                        prompt: count(body.get("prompt_eval_count")?)?,
                        completion: count(body.get("eval_count")?)?,
                    })
                })();
                Ok((
                    content.to_string(),
                    reason(body.get("done_reason").and_then(Value::as_str)),
                    usage,
                ))
            }
        }
    }
}

enum Attempt {
    Done(Value),
    Retry(BackendError),
    Fatal(BackendError),
}

impl HttpBackend {
    fn attempt(&self, url: &str, body: &Value) -> Attempt {
        let mut builder = self.client.post(url).json(body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = match builder.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(BackendError::Timeout(self.config.timeout)),
            Err(e) => {
                return Attempt::Retry(BackendError::Transport {
                    attempts: 0,
                    message: e.to_string(),
                })
            }
        };
        let status = response.status();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Retry(BackendError::Timeout(self.config.timeout)),
            Err(e) => {
                return Attempt::Retry(BackendError::Transport {
                    attempts: 0,
                    message: e.to_string(),
                })
            }
        };
        if status.is_server_error() {
            return Attempt::Retry(BackendError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        if !status.is_success() {
            return Attempt::Fatal(BackendError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        match serde_json::from_str(&text) {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Fatal(BackendError::Payload(e.to_string())),
        }
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        let url = self.config.url();
        let body = self.payload(request);
        let started = Instant::now();
        let attempts = self.config.retries + 1;
        let mut last = None;
        for _ in 0..attempts {
            match self.attempt(&url, &body) {
                Attempt::Done(value) => {
                    let (content, finish_reason, usage) = self.decode(&value)?;
                    return Ok(ChatResponse {
                        content,
                        finish_reason,
                        latency: started.elapsed(),
                        usage,
                    });
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => last = Some(e),
            }
        }
        Err(match last.expect("at least one attempt") {
            BackendError::Transport { message, .. } => BackendError::Transport { attempts, message },
            other => other,
        })
    }

    fn identity(&self) -> String {
        format!("http:{}@{}", self.config.model, self.config.url())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_backend::ChatMessage;

    #[test]
    fn url_suffixes() {
        let mut cfg = HttpConfig::new("http://localhost:8000/v1/", "m");
        assert_eq!(cfg.url(), "http://localhost:8000/v1/chat/completions");
        cfg.endpoint = "http://h/v1/chat/completions".into();
        assert_eq!(cfg.url(), "http://h/v1/chat/completions");
        cfg.dialect = Dialect::Ollama;
        cfg.endpoint = "http://localhost:11434".into();
        assert_eq!(cfg.url(), "http://localhost:11434/api/chat");
    }

    #[test]
    fn payload_shapes() {
        let mut req = ChatRequest::new("sys", vec![ChatMessage::user("Thought:\n  keep   spacing ")]);
        req.stop = vec!["\nObservation:".into()];
        let backend = HttpBackend::new(HttpConfig::new("http://x", "llama")).unwrap();
        let body = backend.payload(&req);
        assert_eq!(body["model"], "llama");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "Thought:\n  keep   spacing ");
        assert_eq!(body["stop"][0], "\nObservation:");
        assert_eq!(body["temperature"], 0.0);

        let mut cfg = HttpConfig::new("http://x", "llama");
        cfg.dialect = Dialect::Ollama;
        let backend = HttpBackend::new(cfg).unwrap();
        let body = backend.payload(&req);
        assert_eq!(body["stream"], false);
        assert_eq!(body["options"]["stop"][0], "\nObservation:");
    }

    #[test]
    fn unreachable_endpoint_reports_transport_error() {
        // Port 9 on localhost is closed in the sandbox; connection is refused.
        let mut cfg = HttpConfig::new("http://127.0.0.1:9", "m");
        cfg.retries = 1;
        cfg.timeout = Duration::from_secs(2);
        let backend = HttpBackend::new(cfg).unwrap();
        let err = backend
            .complete(&ChatRequest::new("", vec![ChatMessage::user("x")]))
            .unwrap_err();
        assert!(
            matches!(
                err,
                BackendError::Transport { attempts: 2, .. } | BackendError::Timeout(_)
            ),
            "{err}"
        );
    }
}
