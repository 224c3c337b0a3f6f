//! Chat-completion wire format and the HTTP transport.

use std::time::Duration;

use ctm_core::llm::Prompt;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(model: &str, prompt: &Prompt, temperature: f64) -> Self {
        ChatRequest {
            model: model.to_string(),
            messages: vec![
                Message {
                    role: "system".into(),
                    content: prompt.system.clone(),
                },
                Message {
                    role: "user".into(),
                    content: prompt.user.clone(),
                },
            ],
            temperature,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

/// Pulls `choices[0].message.content` out of a reply body.
pub fn parse_reply(body: &str) -> Result<String, SendError> {
    let r: ChatResponse = serde_json::from_str(body).map_err(|e| SendError::Malformed(e.to_string()))?;
    r.choices
        .into_iter()
        .next()
        .map(|c| c.message.content)
        .ok_or_else(|| SendError::Malformed("reply has no choices".into()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SendError {
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    Transient(String),
    /// Not worth retrying: other 4xx, bad URL.
    Fatal(String),
    Malformed(String),
}

pub fn classify_status(status: u16, body: &str) -> SendError {
    let msg = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
    if status == 429 || status >= 500 {
        SendError::Transient(msg)
    } else {
        SendError::Fatal(msg)
    }
}

/// One request, one reply. Retry, caching and concurrency live above this.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, SendError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport {
            agent,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, SendError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(request).map_err(|e| match e {
            ureq::Error::BadUri(_) | ureq::Error::HostNotFound => SendError::Fatal(e.to_string()),
            other => SendError::Transient(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| SendError::Transient(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &body));
        }
        parse_reply(&body)
    }
}
