//! Blocking HTTP client for `mqag/1` model services.
//!
//! Transport failures, timeouts and 5xx responses are retried up to
//! `max_retries` times with exponential backoff; 4xx responses and invalid
//! payloads fail immediately. In-flight requests per client are capped by
//! `max_connections`.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::header::{AUTHORIZATION, CONTENT_TYPE};
use reqwest::Url;
use tracing::{debug, warn};

use super::wire::{self, AnswerRequestBody, AnswerResponseBody, ErrorBody, GenerateRequestBody, GenerateResponseBody};
use super::{
    AnswerRequest, Backend, BackendError, GenerationRequest, MCQuestion, DEFAULT_MAX_CONNECTIONS, DEFAULT_MAX_RETRIES,
    DEFAULT_TIMEOUT,
};
use crate::distributions::OptionDistribution;

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub timeout: Duration,
    pub max_retries: u32,
    pub max_connections: usize,
    /// Delay before the first retry; doubles on each further attempt.
    pub backoff_base: Duration,
    pub token: Option<String>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            timeout: DEFAULT_TIMEOUT,
            max_retries: DEFAULT_MAX_RETRIES,
            max_connections: DEFAULT_MAX_CONNECTIONS,
            backoff_base: Duration::from_millis(500),
            token: None,
        }
    }
}

struct ConnectionLimiter {
    max: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a ConnectionLimiter);

impl ConnectionLimiter {
    fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_use: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut in_use = self.in_use.lock().unwrap_or_else(|e| e.into_inner());
        while *in_use >= self.max {
            in_use = self.freed.wait(in_use).unwrap_or_else(|e| e.into_inner());
        }
        *in_use += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut in_use = self.0.in_use.lock().unwrap_or_else(|e| e.into_inner());
        *in_use -= 1;
        self.0.freed.notify_one();
    }
}

pub struct RemoteBackend {
    base: Url,
    client: Client,
    config: RemoteConfig,
    limiter: ConnectionLimiter,
}

enum Attempt {
    Done(String),
    Retry(BackendError),
    Fatal(BackendError),
}

impl RemoteBackend {
    pub fn new(endpoint: &str, config: RemoteConfig) -> Result<Self, BackendError> {
        let mut base = Url::parse(endpoint)
            .map_err(|e| BackendError::InvalidRequest(format!("invalid endpoint '{endpoint}': {e}")))?;
        if !base.path().ends_with('/') {
            let path = format!("{}/", base.path());
            base.set_path(&path);
        }
        let client = Client::builder()
            .timeout(config.timeout)
            .pool_max_idle_per_host(config.max_connections)
            .build()
            .map_err(|e| BackendError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        let limiter = ConnectionLimiter::new(config.max_connections);
        Ok(Self {
            base,
            client,
            config,
            limiter,
        })
    }

    pub fn endpoint(&self) -> &Url {
        &self.base
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.config.backoff_base.saturating_mul(1 << attempt.min(16))
    }

    fn attempt(&self, url: &Url, body: &str, attempts: u32) -> Attempt {
        let _permit = self.limiter.acquire();
        let mut request = self
            .client
            .post(url.clone())
            .header(CONTENT_TYPE, "application/json")
            .header(wire::PROTOCOL_HEADER, wire::PROTOCOL_VERSION)
            .body(body.to_string());
        if let Some(token) = &self.config.token {
            request = request.header(AUTHORIZATION, format!("Bearer {token}"));
        }
        let response = match request.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(BackendError::Timeout { attempts }),
            Err(e) => {
                return Attempt::Retry(BackendError::Transport {
                    attempts,
                    message: e.to_string(),
                })
            }
        };
        let status = response.status();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Retry(BackendError::Timeout { attempts }),
            Err(e) => {
                return Attempt::Retry(BackendError::Transport {
                    attempts,
                    message: e.to_string(),
                })
            }
        };
        if status.is_success() {
            Attempt::Done(text)
        } else if status.is_server_error() {
            Attempt::Retry(BackendError::Unavailable {
                attempts,
                status: status.as_u16(),
                message: error_message(&text),
            })
        } else {
            Attempt::Fatal(BackendError::Rejected {
                status: status.as_u16(),
                message: error_message(&text),
            })
        }
    }

    /// POSTs `body` to `path`, returning the raw 200 response body.
    fn post(&self, path: &str, body: &str) -> Result<String, BackendError> {
        let url = self
            .base
            .join(path)
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&url, body, attempts) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(err) => return Err(err),
                Attempt::Retry(err) if attempts > self.config.max_retries => {
                    warn!(%url, attempts, error = %err, "giving up");
                    return Err(err);
                }
                Attempt::Retry(err) => {
                    let delay = self.backoff(attempts - 1);
                    debug!(%url, attempts, error = %err, ?delay, "retrying");
                    std::thread::sleep(delay);
                }
            }
        }
    }
}

fn error_message(text: &str) -> String {
    match wire::decode::<ErrorBody>(text) {
        Ok(body) => body.error,
        Err(_) => text.chars().take(200).collect(),
    }
}

impl Backend for RemoteBackend {
    fn generate_questions(&self, req: &GenerationRequest) -> Result<Vec<MCQuestion>, BackendError> {
        let body = wire::encode(&GenerateRequestBody::from(req));
        let raw = self.post(wire::GENERATE_PATH, &body)?;
        wire::decode::<GenerateResponseBody>(&raw)?.into_questions(req, &raw)
    }

    fn answer(&self, req: &AnswerRequest) -> Result<OptionDistribution, BackendError> {
        let body = wire::encode(&AnswerRequestBody::from(req));
        let raw = self.post(wire::ANSWER_PATH, &body)?;
        wire::decode::<AnswerResponseBody>(&raw)?.into_distribution(req.question().num_options(), &raw)
    }

    fn max_concurrency(&self) -> usize {
        self.limiter.max
    }
}
