//! Deterministic offline backend.
//!
//! Generation blanks one content word of a randomly chosen sentence and
//! draws distractors from the rest of the context. Answering scores each
//! option by lexical overlap with the context and applies a softmax.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_generated, AnswerRequest, Backend, BackendError, GenerationRequest, MCQuestion};
use crate::distributions::OptionDistribution;
use crate::textmetrics::{is_punctuation, tokenize};

pub const MOCK_TEMPERATURE: f64 = 0.25;

const BLANK: &str = "____";

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "before", "but", "by",
    "can", "could", "did", "do", "does", "for", "from", "had", "has", "have", "he", "her", "his", "how", "i", "if",
    "in", "into", "is", "it", "its", "many", "more", "most", "my", "no", "not", "of", "on", "one", "or", "other", "our",
    "out", "over", "said", "she", "so", "some", "than", "that", "the", "their", "them", "then", "there", "these",
    "they", "this", "those", "to", "up", "was", "we", "were", "what", "when", "where", "which", "who", "will", "with",
    "would", "you", "your",
];

#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl Backend for MockBackend {
    fn generate_questions(&self, req: &GenerationRequest) -> Result<Vec<MCQuestion>, BackendError> {
        let questions = mock_generate(req.context(), req.num_questions(), req.num_options(), req.seed())?;
        check_generated(req, questions, "")
    }

    fn answer(&self, req: &AnswerRequest) -> Result<OptionDistribution, BackendError> {
        Ok(mock_answer(req.context(), req.question()))
    }

    // pure and cheap; callers parallelize across pairs instead
    fn max_concurrency(&self) -> usize {
        1
    }
}

fn content_token(word: &str) -> Option<String> {
    let token = word.trim_matches(is_punctuation).to_lowercase();
    if token.is_empty() || !token.chars().any(char::is_alphanumeric) || STOPWORDS.contains(&token.as_str()) {
        None
    } else {
        Some(token)
    }
}

fn split_sentences(text: &str) -> Vec<Vec<&str>> {
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for word in text.split_whitespace() {
        current.push(word);
        let end = word.trim_end_matches(['"', '\'', ')', '\u{201D}', '\u{2019}']);
        if end.ends_with(['.', '!', '?']) {
            sentences.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
}

fn push_unique(list: &mut Vec<String>, token: String) {
    if !list.contains(&token) {
        list.push(token);
    }
}

/// Builds `n` cloze-style questions with `k` options each from `context`.
///
/// Pure in `(context, n, k, seed)`; a missing seed behaves like seed 0.
pub fn mock_generate(context: &str, n: usize, k: usize, seed: Option<u64>) -> Result<Vec<MCQuestion>, BackendError> {
    if context.trim().is_empty() {
        return Err(BackendError::InvalidRequest("context is empty".into()));
    }
    let sentences = split_sentences(context);
    // per sentence: (word index, token) of each content word
    let mut slots: Vec<Vec<(usize, String)>> = Vec::with_capacity(sentences.len());
    let mut vocabulary: Vec<String> = Vec::new();
    for words in &sentences {
        let mut sentence_slots = Vec::new();
        for (w, word) in words.iter().enumerate() {
            if let Some(token) = content_token(word) {
                push_unique(&mut vocabulary, token.clone());
                sentence_slots.push((w, token));
            }
        }
        slots.push(sentence_slots);
    }
    if vocabulary.len() < k {
        return Err(BackendError::InsufficientContent {
            needed: k,
            available: vocabulary.len(),
        });
    }
    let usable: Vec<usize> = (0..sentences.len()).filter(|&s| !slots[s].is_empty()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
    let mut questions = Vec::with_capacity(n);
    for i in 0..n {
        let &s = usable.choose(&mut rng).expect("vocabulary is non-empty");
        let (w, answer) = slots[s].choose(&mut rng).expect("sentence has content words").clone();

        let stem = sentences[s]
            .iter()
            .enumerate()
            .map(|(j, word)| {
                if j == w {
                    let core = word.trim_matches(is_punctuation);
                    word.replacen(core, BLANK, 1)
                } else {
                    word.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join(" ");

        let mut pool: Vec<String> = Vec::new();
        for (t, sentence_slots) in slots.iter().enumerate() {
            if t != s {
                for (_, token) in sentence_slots {
                    if *token != answer {
                        push_unique(&mut pool, token.clone());
                    }
                }
            }
        }
        let mut distractors: Vec<String> = pool.choose_multiple(&mut rng, k - 1).cloned().collect();
        if distractors.len() < k - 1 {
            // not enough words elsewhere: fall back to the whole context
            let rest: Vec<String> = vocabulary
                .iter()
                .filter(|t| **t != answer && !distractors.contains(t))
                .cloned()
                .collect();
            let missing = k - 1 - distractors.len();
            distractors.extend(rest.choose_multiple(&mut rng, missing).cloned());
        }

        let mut options = Vec::with_capacity(k);
        options.push(answer.clone());
        options.extend(distractors);
        options.shuffle(&mut rng);
        let answer_index = options.iter().position(|o| *o == answer).expect("answer is an option");
        questions.push(MCQuestion::new(format!("q{i:03}"), stem, options, answer_index)?);
    }
    Ok(questions)
}

/// Softmax over per-option lexical overlap with the context, at
/// [`MOCK_TEMPERATURE`].
pub fn mock_answer(context: &str, question: &MCQuestion) -> OptionDistribution {
    let vocabulary: HashSet<String> = tokenize(context).tokens().iter().cloned().collect();
    let scores: Vec<f64> = question
        .options()
        .iter()
        .map(|option| {
            let tokens = tokenize(option);
            if tokens.is_empty() {
                return 0.0;
            }
            let hits = tokens.iter().filter(|t| vocabulary.contains(*t)).count();
            hits as f64 / tokens.len() as f64
        })
        .collect();
    OptionDistribution::softmax(&scores, MOCK_TEMPERATURE).expect("softmax of finite scores is a distribution")
}
