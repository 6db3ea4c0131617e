use std::path::Path;

use mqag_core::backend::wire::{
    decode, encode, AnswerRequestBody, AnswerResponseBody, ErrorBody, GenerateRequestBody, GenerateResponseBody,
};
use mqag_core::backend::GenerationRequest;
use mqag_core::BackendError;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn fixture(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/wire").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn round_trip<T: Serialize + DeserializeOwned>(name: &str) {
    let raw = fixture(name);
    let body: T = decode(&raw).unwrap_or_else(|e| panic!("{name}: {e}"));
    assert_eq!(encode(&body), raw, "{name}");
}

#[test]
fn fixture_payloads_round_trip() {
    round_trip::<GenerateRequestBody>("generate_request.json");
    round_trip::<GenerateRequestBody>("generate_request_null_seed.json");
    round_trip::<GenerateResponseBody>("generate_response.json");
    round_trip::<AnswerRequestBody>("answer_request.json");
    round_trip::<AnswerResponseBody>("answer_response.json");
    round_trip::<AnswerResponseBody>("answer_response_uniform.json");
    round_trip::<ErrorBody>("error.json");
}

#[test]
fn fixture_payloads_convert_to_domain_types() {
    let req: GenerationRequest = decode::<GenerateRequestBody>(&fixture("generate_request.json"))
        .unwrap()
        .try_into()
        .unwrap();
    assert_eq!((req.num_questions(), req.num_options(), req.seed()), (5, 4, Some(42)));
    let two = GenerationRequest::new("ctx", 2, 4, None).unwrap();
    let raw = fixture("generate_response.json");
    let questions = decode::<GenerateResponseBody>(&raw).unwrap().into_questions(&two, &raw).unwrap();
    assert_eq!(questions[0].answer(), "Glasgow");
    let raw = fixture("answer_response.json");
    let dist = decode::<AnswerResponseBody>(&raw).unwrap().into_distribution(4, &raw).unwrap();
    assert_eq!(dist.argmax(), 1);
}

fn answer_violation(raw: &str, k: usize) -> BackendError {
    decode::<AnswerResponseBody>(raw)
        .and_then(|b| b.into_distribution(k, raw))
        .unwrap_err()
}

fn generate_violation(raw: &str, n: usize) -> BackendError {
    let req = GenerationRequest::new("ctx", n, 4, Some(1)).unwrap();
    decode::<GenerateResponseBody>(raw)
        .and_then(|b| b.into_questions(&req, raw))
        .unwrap_err()
}

fn question(i: usize) -> String {
    format!(r#"{{"id":"q{i}","stem":"s ____","options":["a","b","c","d"],"answer_index":0}}"#)
}

#[test]
fn violation_corpus() {
    // bad sums and shapes
    assert!(matches!(answer_violation(r#"{"probabilities":[0.2,0.2,0.2,0.2]}"#, 4), BackendError::Protocol { .. }));
    assert!(matches!(answer_violation(r#"{"probabilities":[0.6,0.6,0.0,0.0]}"#, 4), BackendError::Protocol { .. }));
    assert!(matches!(answer_violation(r#"{"probabilities":[-0.1,0.5,0.3,0.3]}"#, 4), BackendError::Protocol { .. }));
    assert!(matches!(answer_violation(r#"{"probabilities":[0.5,0.5]}"#, 4), BackendError::Protocol { .. }));
    // missing or mistyped fields
    assert!(matches!(answer_violation(r#"{}"#, 4), BackendError::Decode { .. }));
    assert!(matches!(answer_violation(r#"{"probabilities":["0.25"]}"#, 4), BackendError::Decode { .. }));
    assert!(matches!(answer_violation("not json", 4), BackendError::Decode { .. }));
    assert!(matches!(
        decode::<GenerateRequestBody>(r#"{"context":"c","num_questions":5,"num_options":4}"#),
        Err(BackendError::Decode { .. })
    ));
    assert!(matches!(
        generate_violation(r#"{"questions":[{"id":"q","stem":"s","options":["a","b","c","d"]}]}"#, 1),
        BackendError::Decode { .. }
    ));
    // short and long counts
    let three = format!(r#"{{"questions":[{},{},{}]}}"#, question(0), question(1), question(2));
    match generate_violation(&three, 5) {
        BackendError::ShortGeneration {
            requested,
            received,
            questions,
        } => {
            assert_eq!((requested, received), (5, 3));
            assert_eq!(questions.len(), 3);
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(generate_violation(&three, 2), BackendError::Protocol { .. }));
    // malformed questions
    let bad_index = r#"{"questions":[{"id":"q","stem":"s","options":["a","b","c","d"],"answer_index":4}]}"#;
    assert!(matches!(generate_violation(bad_index, 1), BackendError::Protocol { .. }));
    let negative = r#"{"questions":[{"id":"q","stem":"s","options":["a","b","c","d"],"answer_index":-1}]}"#;
    assert!(matches!(generate_violation(negative, 1), BackendError::Protocol { .. }));
    let two_options = r#"{"questions":[{"id":"q","stem":"s","options":["a","b"],"answer_index":0}]}"#;
    assert!(matches!(generate_violation(two_options, 1), BackendError::Protocol { .. }));
}

#[test]
fn duplicate_options_are_repaired() {
    let raw = r#"{"questions":[{"id":"q","stem":"s","options":["a","b","a","c"],"answer_index":2}]}"#;
    let req = GenerationRequest::new("ctx", 1, 4, None).unwrap();
    let qs = decode::<GenerateResponseBody>(raw).unwrap().into_questions(&req, raw).unwrap();
    let options = qs[0].options();
    let mut unique = options.to_vec();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), 4, "{options:?}");
    assert_eq!(qs[0].answer_index(), 2);
}
