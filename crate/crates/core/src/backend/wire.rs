//! JSON bodies of the `mqag/1` protocol.
//!
//! ```text
//! POST {endpoint}/generate  {"context","num_questions","num_options","seed"} -> {"questions":[...]}
//! POST {endpoint}/answer    {"context","stem","options"}                     -> {"probabilities":[...]}
//! ```
//!
//! Error responses (4xx) carry `{"error": string}`. Every field is required;
//! `seed` must be present even when it is `null`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};

use super::{AnswerRequest, BackendError, GenerationRequest, MCQuestion};
use crate::distributions::OptionDistribution;

pub const PROTOCOL_VERSION: &str = "mqag/1";
pub const PROTOCOL_HEADER: &str = "x-mqag-protocol";
pub const GENERATE_PATH: &str = "generate";
pub const ANSWER_PATH: &str = "answer";

// With `deserialize_with`, serde no longer treats a missing Option field as
// None.
fn nullable<'de, D, T>(d: D) -> Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Option::<T>::deserialize(d)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequestBody {
    pub context: String,
    pub num_questions: u64,
    pub num_options: u64,
    #[serde(deserialize_with = "nullable")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireQuestion {
    pub id: String,
    pub stem: String,
    pub options: Vec<String>,
    pub answer_index: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponseBody {
    pub questions: Vec<WireQuestion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRequestBody {
    pub context: String,
    pub stem: String,
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponseBody {
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub fn encode<T: Serialize>(body: &T) -> String {
    serde_json::to_string(body).expect("wire bodies always serialize")
}

pub fn decode<T: DeserializeOwned>(raw: &str) -> Result<T, BackendError> {
    serde_json::from_str(raw).map_err(|e| BackendError::Decode {
        message: e.to_string(),
        raw: raw.to_string(),
    })
}

impl From<&GenerationRequest> for GenerateRequestBody {
    fn from(req: &GenerationRequest) -> Self {
        Self {
            context: req.context().to_string(),
            num_questions: req.num_questions() as u64,
            num_options: req.num_options() as u64,
            seed: req.seed(),
        }
    }
}

impl TryFrom<GenerateRequestBody> for GenerationRequest {
    type Error = BackendError;

    fn try_from(body: GenerateRequestBody) -> Result<Self, Self::Error> {
        GenerationRequest::new(body.context, body.num_questions as usize, body.num_options as usize, body.seed)
    }
}

impl From<&AnswerRequest> for AnswerRequestBody {
    fn from(req: &AnswerRequest) -> Self {
        Self {
            context: req.context().to_string(),
            stem: req.question().stem().to_string(),
            options: req.question().options().to_vec(),
        }
    }
}

impl From<&MCQuestion> for WireQuestion {
    fn from(q: &MCQuestion) -> Self {
        Self {
            id: q.id().to_string(),
            stem: q.stem().to_string(),
            options: q.options().to_vec(),
            answer_index: q.answer_index() as i64,
        }
    }
}

fn protocol(message: impl Into<String>, raw: &str) -> BackendError {
    BackendError::Protocol {
        message: message.into(),
        raw: raw.to_string(),
    }
}

impl GenerateResponseBody {
    /// Validates the batch against the request. Duplicate options are
    /// repaired; anything else malformed is a protocol error.
    pub fn into_questions(self, req: &GenerationRequest, raw: &str) -> Result<Vec<MCQuestion>, BackendError> {
        let mut questions = Vec::with_capacity(self.questions.len());
        for q in self.questions {
            let answer_index = usize::try_from(q.answer_index)
                .map_err(|_| protocol(format!("question '{}' has negative answer_index", q.id), raw))?;
            let question = MCQuestion::with_repaired_options(q.id, q.stem, q.options, answer_index)
                .map_err(|e| protocol(e.to_string(), raw))?;
            questions.push(question);
        }
        super::check_generated(req, questions, raw)
    }
}

impl AnswerResponseBody {
    pub fn into_distribution(self, num_options: usize, raw: &str) -> Result<OptionDistribution, BackendError> {
        if self.probabilities.len() != num_options {
            return Err(protocol(
                format!("{} probabilities for {num_options} options", self.probabilities.len()),
                raw,
            ));
        }
        OptionDistribution::new(self.probabilities).map_err(|e| protocol(e.to_string(), raw))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_must_be_present() {
        let ok = r#"{"context":"c","num_questions":1,"num_options":4,"seed":null}"#;
        assert_eq!(decode::<GenerateRequestBody>(ok).unwrap().seed, None);
        let missing = r#"{"context":"c","num_questions":1,"num_options":4}"#;
        assert!(matches!(decode::<GenerateRequestBody>(missing), Err(BackendError::Decode { .. })));
    }

    #[test]
    fn answer_length_must_match() {
        let body = AnswerResponseBody {
            probabilities: vec![0.5, 0.5],
        };
        assert!(matches!(body.into_distribution(4, "raw"), Err(BackendError::Protocol { .. })));
    }

    #[test]
    fn duplicate_options_from_the_wire_are_repaired() {
        let req = GenerationRequest::new("ctx", 1, 2, None).unwrap();
        let body = GenerateResponseBody {
            questions: vec![WireQuestion {
                id: "q0".into(),
                stem: "s".into(),
                options: vec!["a bank".into(), "a  bank".into()],
                answer_index: 0,
            }],
        };
        let qs = body.into_questions(&req, "").unwrap();
        assert_eq!(qs[0].options()[1], "a  bank (2)");
    }
}
