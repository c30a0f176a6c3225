//! How a language-model agent reaches its model: a chat-completions style
//! request document in, response text out.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AgentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

pub trait ModelTransport: Send {
    fn complete(&mut self, request: &ModelRequest) -> Result<String, AgentError>;
}

/// Serves recorded responses in order. Used for offline tests.
#[derive(Debug, Clone, Default)]
pub struct ReplayTransport {
    responses: VecDeque<String>,
}

impl ReplayTransport {
    pub fn new(responses: Vec<String>) -> Self {
        Self { responses: responses.into() }
    }

    /// Loads every `NNNN.response.txt` in `dir`, in name order.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut names: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".response.txt")))
            .collect();
        names.sort();
        let responses = names.iter().map(std::fs::read_to_string).collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(responses))
    }

    pub fn remaining(&self) -> usize {
        self.responses.len()
    }
}

impl ModelTransport for ReplayTransport {
    fn complete(&mut self, _request: &ModelRequest) -> Result<String, AgentError> {
        self.responses.pop_front().ok_or_else(|| AgentError::Remote("replay transcript exhausted".into()))
    }
}

/// Endpoint settings, normally read from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteSettings {
    /// Full chat-completions URL.
    pub url: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_s: u64,
}

pub const DEFAULT_TIMEOUT_S: u64 = 30;

impl RemoteSettings {
    /// Reads `RAPP_REMOTE_URL`, `RAPP_REMOTE_MODEL`, `RAPP_REMOTE_API_KEY`
    /// and `RAPP_REMOTE_TIMEOUT_S`.
    pub fn from_env() -> Result<Self, String> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let url = get("RAPP_REMOTE_URL").filter(|s| !s.is_empty()).ok_or("RAPP_REMOTE_URL is not set")?;
        let model = get("RAPP_REMOTE_MODEL").filter(|s| !s.is_empty()).ok_or("RAPP_REMOTE_MODEL is not set")?;
        let timeout_s = match get("RAPP_REMOTE_TIMEOUT_S") {
            Some(v) => v.parse().map_err(|_| format!("RAPP_REMOTE_TIMEOUT_S: not a number: {v}"))?,
            None => DEFAULT_TIMEOUT_S,
        };
        if timeout_s == 0 {
            return Err("RAPP_REMOTE_TIMEOUT_S must be positive".into());
        }
        Ok(Self { url, api_key: get("RAPP_REMOTE_API_KEY").filter(|s| !s.is_empty()), model, timeout_s })
    }
}

#[cfg(feature = "remote")]
mod http {
    use std::time::Duration;

    use super::{AgentError, ModelRequest, ModelTransport, RemoteSettings};

    /// Blocking client for an OpenAI-compatible chat-completions endpoint.
    #[derive(Debug)]
    pub struct HttpTransport {
        client: reqwest::blocking::Client,
        settings: RemoteSettings,
    }

    impl HttpTransport {
        pub fn new(settings: RemoteSettings) -> Result<Self, AgentError> {
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(settings.timeout_s))
                .build()
                .map_err(|e| AgentError::Remote(e.to_string()))?;
            Ok(Self { client, settings })
        }
    }

    impl ModelTransport for HttpTransport {
        fn complete(&mut self, request: &ModelRequest) -> Result<String, AgentError> {
            let mut req = self.client.post(&self.settings.url).json(request);
            if let Some(key) = &self.settings.api_key {
                req = req.bearer_auth(key);
            }
            let resp = req.send().map_err(|e| {
                if e.is_timeout() {
                    AgentError::Timeout(self.settings.timeout_s)
                } else {
                    AgentError::Remote(e.to_string())
                }
            })?;
            let status = resp.status();
            let body: serde_json::Value = resp.json().map_err(|e| AgentError::Remote(e.to_string()))?;
            if !status.is_success() {
                return Err(AgentError::Remote(format!("HTTP {status}: {body}")));
            }
            body.pointer("/choices/0/message/content")
                .and_then(|c| c.as_str())
                .map(str::to_string)
                .ok_or_else(|| AgentError::Remote("response has no choices[0].message.content".into()))
        }
    }
}

#[cfg(feature = "remote")]
pub use http::HttpTransport;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_from_lookup() {
        let env = |k: &str| match k {
            "RAPP_REMOTE_URL" => Some("http://127.0.0.1:9/v1/chat/completions".to_string()),
            "RAPP_REMOTE_MODEL" => Some("m".to_string()),
            _ => None,
        };
        let s = RemoteSettings::from_lookup(env).unwrap();
        assert_eq!(s.timeout_s, DEFAULT_TIMEOUT_S);
        assert!(s.api_key.is_none());
        assert!(RemoteSettings::from_lookup(|_| None).is_err());
    }

    #[test]
    fn replay_in_order_then_exhausted() {
        let mut t = ReplayTransport::new(vec!["a".into(), "b".into()]);
        let req = ModelRequest { model: "m".into(), messages: vec![], temperature: 0.0 };
        assert_eq!(t.complete(&req).unwrap(), "a");
        assert_eq!(t.complete(&req).unwrap(), "b");
        assert!(t.complete(&req).is_err());
    }
}
