//! Question generation and answering backends.
//!
//! A [`Backend`] plays both model roles of the pipeline: it turns a context
//! into multiple-choice questions and it answers a question against a context
//! by returning a distribution over the options. Whether generation happens
//! in one stage or two (question+answer first, distractors second) is internal
//! to the backend; the contract only fixes the output shape.

mod mock;
mod remote;
pub mod wire;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::OptionDistribution;

pub use mock::{mock_answer, mock_generate, MockBackend, MOCK_TEMPERATURE};
pub use remote::{RemoteBackend, RemoteConfig};

pub const DEFAULT_NUM_OPTIONS: usize = 4;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_MAX_CONNECTIONS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid question: {0}")]
    InvalidQuestion(String),
    #[error("context has {available} distinct content tokens, {needed} needed")]
    InsufficientContent { needed: usize, available: usize },
    #[error("backend unavailable after {attempts} attempt(s): HTTP {status}: {message}")]
    Unavailable { attempts: u32, status: u16, message: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("backend rejected request with HTTP {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("could not decode response: {message}")]
    Decode { message: String, raw: String },
    #[error("protocol violation: {message}")]
    Protocol { message: String, raw: String },
    #[error("short generation: requested {requested} questions, received {received}")]
    ShortGeneration {
        requested: usize,
        received: usize,
        questions: Vec<MCQuestion>,
    },
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A question stem with `K` ordered options, one of which was the answer at
/// generation time.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MCQuestion {
    id: String,
    stem: String,
    options: Vec<String>,
    answer_index: usize,
}

impl MCQuestion {
    pub fn new(
        id: impl Into<String>,
        stem: impl Into<String>,
        options: Vec<String>,
        answer_index: usize,
    ) -> Result<Self, BackendError> {
        if options.len() < 2 {
            return Err(BackendError::InvalidQuestion(format!(
                "needs at least 2 options, got {}",
                options.len()
            )));
        }
        if answer_index >= options.len() {
            return Err(BackendError::InvalidQuestion(format!(
                "answer_index {answer_index} out of range for {} options",
                options.len()
            )));
        }
        let normalized: Vec<String> = options.iter().map(|o| normalize_ws(o)).collect();
        for (i, o) in normalized.iter().enumerate() {
            if normalized[..i].contains(o) {
                return Err(BackendError::InvalidQuestion(format!("duplicate option '{o}'")));
            }
        }
        Ok(Self {
            id: id.into(),
            stem: stem.into(),
            options,
            answer_index,
        })
    }

    /// Like [`MCQuestion::new`], but options that duplicate an earlier one
    /// get a ` (n)` suffix instead of failing.
    pub fn with_repaired_options(
        id: impl Into<String>,
        stem: impl Into<String>,
        options: Vec<String>,
        answer_index: usize,
    ) -> Result<Self, BackendError> {
        let mut seen: Vec<String> = Vec::with_capacity(options.len());
        let mut repaired = Vec::with_capacity(options.len());
        for option in options {
            let mut candidate = option.clone();
            let mut n = 2;
            while seen.contains(&normalize_ws(&candidate)) {
                candidate = format!("{} ({n})", option.trim_end());
                n += 1;
            }
            seen.push(normalize_ws(&candidate));
            repaired.push(candidate);
        }
        Self::new(id, stem, repaired, answer_index)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn stem(&self) -> &str {
        &self.stem
    }

    pub fn options(&self) -> &[String] {
        &self.options
    }

    pub fn num_options(&self) -> usize {
        self.options.len()
    }

    pub fn answer_index(&self) -> usize {
        self.answer_index
    }

    pub fn answer(&self) -> &str {
        &self.options[self.answer_index]
    }

    /// Reorders the options so that option `i` of the result is option
    /// `order[i]` of `self`; the answer index follows its option.
    pub fn permuted(&self, order: &[usize]) -> Result<Self, BackendError> {
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.options.len()).collect::<Vec<_>>() {
            return Err(BackendError::InvalidQuestion("not a permutation of the options".into()));
        }
        let options = order.iter().map(|&i| self.options[i].clone()).collect();
        let answer_index = order.iter().position(|&i| i == self.answer_index).unwrap_or(0);
        Self::new(self.id.clone(), self.stem.clone(), options, answer_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    context: String,
    num_questions: usize,
    num_options: usize,
    seed: Option<u64>,
}

impl GenerationRequest {
    pub fn new(
        context: impl Into<String>,
        num_questions: usize,
        num_options: usize,
        seed: Option<u64>,
    ) -> Result<Self, BackendError> {
        let context = context.into();
        if context.trim().is_empty() {
            return Err(BackendError::InvalidRequest("context is empty".into()));
        }
        if num_questions == 0 {
            return Err(BackendError::InvalidRequest("num_questions must be at least 1".into()));
        }
        if num_options < 2 {
            return Err(BackendError::InvalidRequest("num_options must be at least 2".into()));
        }
        Ok(Self {
            context,
            num_questions,
            num_options,
            seed,
        })
    }

    pub fn context(&self) -> &str {
        &self.context
    }

    pub fn num_questions(&self) -> usize {
        self.num_questions
    }

    pub fn num_options(&self) -> usize {
        self.num_options
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerRequest {
    context: String,
    question: MCQuestion,
}

impl AnswerRequest {
    pub fn new(context: impl Into<String>, question: MCQuestion) -> Result<Self, BackendError> {
        let context = context.into();
        if context.trim().is_empty() {
            return Err(BackendError::InvalidRequest("context is empty".into()));
        }
        Ok(Self { context, question })
    }

    pub fn context(&self) -> &str {
        &self.context
    }

    pub fn question(&self) -> &MCQuestion {
        &self.question
    }
}

pub trait Backend: Send + Sync {
    /// Generates exactly `req.num_questions()` questions of
    /// `req.num_options()` options each, or a
    /// [`BackendError::ShortGeneration`] carrying the questions that were
    /// produced.
    fn generate_questions(&self, req: &GenerationRequest) -> Result<Vec<MCQuestion>, BackendError>;

    /// Distribution over the question's options conditioned on the context.
    fn answer(&self, req: &AnswerRequest) -> Result<OptionDistribution, BackendError>;

    /// Number of requests worth keeping in flight at once.
    fn max_concurrency(&self) -> usize {
        1
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn generate_questions(&self, req: &GenerationRequest) -> Result<Vec<MCQuestion>, BackendError> {
        (**self).generate_questions(req)
    }

    fn answer(&self, req: &AnswerRequest) -> Result<OptionDistribution, BackendError> {
        (**self).answer(req)
    }

    fn max_concurrency(&self) -> usize {
        (**self).max_concurrency()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub max_connections: usize,
    /// Sent as a bearer token when set; never serialized.
    #[serde(skip)]
    pub token: Option<String>,
}

impl BackendDescriptor {
    pub fn mock() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            timeout: DEFAULT_TIMEOUT,
            max_retries: DEFAULT_MAX_RETRIES,
            max_connections: DEFAULT_MAX_CONNECTIONS,
            token: None,
        }
    }

    pub fn remote(endpoint: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Remote,
            endpoint: Some(endpoint.into()),
            ..Self::mock()
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Backend>, BackendError> {
        match self.kind {
            BackendKind::Mock => Ok(Arc::new(MockBackend)),
            BackendKind::Remote => {
                let endpoint = self
                    .endpoint
                    .as_deref()
                    .ok_or_else(|| BackendError::InvalidRequest("remote backend requires an endpoint".into()))?;
                let config = RemoteConfig {
                    timeout: self.timeout,
                    max_retries: self.max_retries,
                    max_connections: self.max_connections,
                    token: self.token.clone(),
                    ..RemoteConfig::default()
                };
                Ok(Arc::new(RemoteBackend::new(endpoint, config)?))
            }
        }
    }
}

/// Checks a generated batch against the request shape.
pub(crate) fn check_generated(
    req: &GenerationRequest,
    questions: Vec<MCQuestion>,
    raw: &str,
) -> Result<Vec<MCQuestion>, BackendError> {
    if let Some(q) = questions.iter().find(|q| q.num_options() != req.num_options()) {
        return Err(BackendError::Protocol {
            message: format!(
                "question '{}' has {} options, {} requested",
                q.id(),
                q.num_options(),
                req.num_options()
            ),
            raw: raw.to_string(),
        });
    }
    match questions.len().cmp(&req.num_questions()) {
        std::cmp::Ordering::Equal => Ok(questions),
        std::cmp::Ordering::Less => Err(BackendError::ShortGeneration {
            requested: req.num_questions(),
            received: questions.len(),
            questions,
        }),
        std::cmp::Ordering::Greater => Err(BackendError::Protocol {
            message: format!(
                "received {} questions, only {} requested",
                questions.len(),
                req.num_questions()
            ),
            raw: raw.to_string(),
        }),
    }
}
