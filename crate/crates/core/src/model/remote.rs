use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde::Deserialize;

use super::{ChatModel, ChatRequest, ModelError};

/// Connection settings for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 4,
            backoff_base: Duration::from_millis(500),
            max_in_flight: 4,
        }
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.endpoint.trim_end_matches('/'))
    }
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap();
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap();
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Done(String),
    Retry(ModelError),
    Fail(ModelError),
}

/// Blocking chat-completions client with bounded retries and in-flight limit.
pub struct HttpChatModel {
    config: RemoteConfig,
    http: reqwest::blocking::Client,
    in_flight: InFlight,
}

impl HttpChatModel {
    pub fn new(config: RemoteConfig) -> Result<Self, ModelError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ModelError::Transport {
                endpoint: config.endpoint.clone(),
                message: e.to_string(),
            })?;
        let limit = config.max_in_flight.max(1);
        Ok(HttpChatModel {
            config,
            http,
            in_flight: InFlight {
                limit,
                active: Mutex::new(0),
                freed: Condvar::new(),
            },
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn attempt(&self, url: &str, request: &ChatRequest) -> Attempt {
        let endpoint = &self.config.endpoint;
        let mut builder = self.http.post(url).json(request);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = match builder.send() {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry(ModelError::Transport {
                    endpoint: endpoint.clone(),
                    message: e.to_string(),
                })
            }
        };
        let status = response.status();
        let body = match response.text() {
            Ok(b) => b,
            Err(e) => {
                return Attempt::Retry(ModelError::Transport {
                    endpoint: endpoint.clone(),
                    message: e.to_string(),
                })
            }
        };
        if !status.is_success() {
            let err = ModelError::Http {
                endpoint: endpoint.clone(),
                status: status.as_u16(),
                body: body.chars().take(512).collect(),
            };
            return if status.as_u16() == 429 || status.is_server_error() {
                Attempt::Retry(err)
            } else {
                Attempt::Fail(err)
            };
        }
        let parsed: CompletionResponse = match serde_json::from_str(&body) {
            Ok(p) => p,
            Err(e) => {
                return Attempt::Fail(ModelError::MalformedResponse {
                    endpoint: endpoint.clone(),
                    message: e.to_string(),
                })
            }
        };
        match parsed.choices.into_iter().next().and_then(|c| c.message.content) {
            Some(content) => Attempt::Done(content),
            None => Attempt::Fail(ModelError::MalformedResponse {
                endpoint: endpoint.clone(),
                message: "response has no choices or empty message content".into(),
            }),
        }
    }
}

impl ChatModel for HttpChatModel {
    fn complete(&self, request: &ChatRequest) -> Result<String, ModelError> {
        let url = self.config.url();
        let _permit = self.in_flight.acquire();
        let mut attempt = 0u32;
        loop {
            match self.attempt(&url, request) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fail(err) => return Err(err),
                Attempt::Retry(err) if attempt >= self.config.max_retries => {
                    warn!("giving up after {} attempts: {err}", attempt + 1);
                    return Err(err);
                }
                Attempt::Retry(err) => {
                    let delay = self.config.backoff_base * 2u32.saturating_pow(attempt);
                    debug!("retrying in {delay:?}: {err}");
                    thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }
}
