//! The scoring pipeline: generate questions from one side, answer them
//! against both source and summary, drop unanswerable questions and average
//! the distances between the option distributions.
//!
//! `MQAG = 1 - (1/N) * sum_i D(P(o|q_i, source), P(o|q_i, summary))`
//!
//! The source-conditioned distribution is always the first argument of `D`,
//! whichever side the questions were generated from.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::backend::{AnswerRequest, Backend, BackendError, GenerationRequest, MCQuestion, DEFAULT_NUM_OPTIONS};
use crate::distributions::{distance, effective_options, DistanceKind, DistributionError, OptionDistribution};
use crate::par::parallel_map;

pub const DEFAULT_NUM_QUESTIONS: usize = 50;
pub const DEFAULT_ANSWERABILITY_THRESHOLD: f64 = 2.0;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Contract(String),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("backend failed while scoring: {source}")]
    Backend {
        source: BackendError,
        partial: Box<PartialReport>,
    },
    #[error("backend returned no questions for the {0} side")]
    NoQuestions(GenerationSide),
}

impl ScoringError {
    pub fn partial(&self) -> Option<&PartialReport> {
        match self {
            ScoringError::Backend { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Questions generated from the summary (consistency).
    Sum,
    /// Questions generated from the source (coverage).
    Src,
    /// Harmonic mean of `Sum` and `Src`.
    F1,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Sum => "sum",
            Variant::Src => "src",
            Variant::F1 => "f1",
        })
    }
}

impl FromStr for Variant {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(Variant::Sum),
            "src" | "source" => Ok(Variant::Src),
            "f1" => Ok(Variant::F1),
            _ => Err(ScoringError::InvalidConfig(format!(
                "unknown variant '{s}' (expected sum, src or f1)"
            ))),
        }
    }
}

/// Which text the questions were generated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerationSide {
    Summary,
    Source,
}

impl fmt::Display for GenerationSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GenerationSide::Summary => "summary",
            GenerationSide::Source => "source",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub variant: Variant,
    pub distance: DistanceKind,
    pub num_questions: usize,
    pub num_options: usize,
    /// Maximum effective number of options for a question to be kept;
    /// `None` keeps every question.
    pub answerability_threshold: Option<f64>,
    pub seed: Option<u64>,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Sum,
            distance: DistanceKind::TotalVariation,
            num_questions: DEFAULT_NUM_QUESTIONS,
            num_options: DEFAULT_NUM_OPTIONS,
            answerability_threshold: Some(DEFAULT_ANSWERABILITY_THRESHOLD),
            seed: None,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<(), ScoringError> {
        if self.num_questions == 0 {
            return Err(ScoringError::InvalidConfig("num_questions must be at least 1".into()));
        }
        if self.num_options < 2 {
            return Err(ScoringError::InvalidConfig("num_options must be at least 2".into()));
        }
        if let Some(t) = self.answerability_threshold {
            check_threshold(t, self.num_options)?;
        }
        Ok(())
    }
}

fn check_threshold(t: f64, k: usize) -> Result<(), ScoringError> {
    if !(1.0..=k as f64).contains(&t) {
        return Err(ScoringError::InvalidConfig(format!(
            "answerability threshold {t} outside [1, {k}]"
        )));
    }
    Ok(())
}

/// A question with its option distributions under both contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsweredQuestion {
    pub question: MCQuestion,
    /// Conditioned on the source.
    pub dist_x: OptionDistribution,
    /// Conditioned on the summary.
    pub dist_y: OptionDistribution,
    /// Effective number of options under the generation context.
    pub answerability: f64,
    pub kept: bool,
}

impl AnsweredQuestion {
    pub fn new(
        question: MCQuestion,
        dist_x: OptionDistribution,
        dist_y: OptionDistribution,
        side: GenerationSide,
    ) -> Result<Self, ScoringError> {
        let k = question.num_options();
        if dist_x.len() != k || dist_y.len() != k {
            return Err(ScoringError::Contract(format!(
                "question '{}' has {k} options but distributions of length {} and {}",
                question.id(),
                dist_x.len(),
                dist_y.len()
            )));
        }
        let answerability = match side {
            GenerationSide::Summary => effective_options(&dist_y),
            GenerationSide::Source => effective_options(&dist_x),
        };
        Ok(Self {
            question,
            dist_x,
            dist_y,
            answerability,
            kept: true,
        })
    }

    pub fn distance(&self, kind: DistanceKind) -> Result<f64, DistributionError> {
        distance(kind, &self.dist_x, &self.dist_y)
    }
}

/// Mean distance over `(source-conditioned, summary-conditioned)` pairs.
pub fn inconsistency(pairs: &[(OptionDistribution, OptionDistribution)], kind: DistanceKind) -> Result<f64, ScoringError> {
    let distances = pairs
        .iter()
        .map(|(p, q)| distance(kind, p, q))
        .collect::<Result<Vec<_>, _>>()?;
    mean(&distances)
}

pub fn mqag_score(pairs: &[(OptionDistribution, OptionDistribution)], kind: DistanceKind) -> Result<f64, ScoringError> {
    Ok(1.0 - inconsistency(pairs, kind)?)
}

/// Harmonic mean of the two variant scores; 0 when their sum is not positive.
pub fn mqag_f1(sum_score: f64, src_score: f64) -> f64 {
    let total = sum_score + src_score;
    if total <= 0.0 {
        0.0
    } else {
        2.0 * sum_score * src_score / total
    }
}

fn mean(values: &[f64]) -> Result<f64, ScoringError> {
    if values.is_empty() {
        return Err(ScoringError::Contract("cannot average an empty list of distances".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Keep flags for a list of answerability values: `a <= threshold`. When
/// nothing passes, the first question with the lowest value is kept alone.
pub fn kept_mask(answerability: &[f64], threshold: Option<f64>) -> Vec<bool> {
    let Some(t) = threshold else {
        return vec![true; answerability.len()];
    };
    let mut mask: Vec<bool> = answerability.iter().map(|&a| a <= t).collect();
    if !mask.iter().any(|&k| k) {
        let mut best: Option<usize> = None;
        for (i, &a) in answerability.iter().enumerate() {
            if best.is_none_or(|b| a < answerability[b]) {
                best = Some(i);
            }
        }
        if let Some(b) = best {
            mask[b] = true;
        }
    }
    mask
}

/// Marks which questions pass the answerability threshold.
pub fn filter_answerable(
    mut items: Vec<AnsweredQuestion>,
    threshold: Option<f64>,
) -> Result<Vec<AnsweredQuestion>, ScoringError> {
    if items.is_empty() {
        return Err(ScoringError::Contract("no questions to filter".into()));
    }
    if let Some(t) = threshold {
        let k = items.iter().map(|i| i.question.num_options()).max().unwrap_or(2);
        check_threshold(t, k)?;
    }
    let values: Vec<f64> = items.iter().map(|i| i.answerability).collect();
    for (item, kept) in items.iter_mut().zip(kept_mask(&values, threshold)) {
        item.kept = kept;
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub distance: f64,
    pub answerability: f64,
    pub kept: bool,
}

/// Re-aggregates per-question records at another threshold, returning the
/// score and the number of questions kept.
pub fn aggregate(records: &[QuestionRecord], threshold: Option<f64>) -> Result<(f64, usize), ScoringError> {
    let values: Vec<f64> = records.iter().map(|r| r.answerability).collect();
    let kept: Vec<f64> = records
        .iter()
        .zip(kept_mask(&values, threshold))
        .filter(|(_, k)| *k)
        .map(|(r, _)| r.distance)
        .collect();
    Ok((1.0 - mean(&kept)?, kept.len()))
}

/// Outcome of one generate-answer-aggregate pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub generated_from: GenerationSide,
    pub score: f64,
    pub n_requested: usize,
    pub n_generated: usize,
    pub n_kept: usize,
    pub questions: Vec<QuestionRecord>,
}

impl RunReport {
    pub fn rescore(&self, threshold: Option<f64>) -> Result<(f64, usize), ScoringError> {
        aggregate(&self.questions, threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub config: ScoreConfig,
    pub score: f64,
    pub sum_score: Option<f64>,
    pub src_score: Option<f64>,
    pub runs: Vec<RunReport>,
}

impl ScoreReport {
    pub fn n_generated(&self) -> usize {
        self.runs.iter().map(|r| r.n_generated).sum()
    }

    pub fn n_kept(&self) -> usize {
        self.runs.iter().map(|r| r.n_kept).sum()
    }

    pub fn per_question(&self) -> impl Iterator<Item = &QuestionRecord> {
        self.runs.iter().flat_map(|r| r.questions.iter())
    }

    /// Recomputes the report's score at another threshold without touching
    /// a backend. F1 reports recombine both runs.
    pub fn rescore(&self, threshold: Option<f64>) -> Result<(f64, usize), ScoringError> {
        let mut scores = Vec::with_capacity(self.runs.len());
        let mut kept = 0;
        for run in &self.runs {
            let (s, k) = run.rescore(threshold)?;
            scores.push(s);
            kept += k;
        }
        let score = match (self.config.variant, scores.as_slice()) {
            (Variant::F1, [a, b]) => mqag_f1(*a, *b),
            (_, [s]) => *s,
            _ => return Err(ScoringError::Contract("report has an unexpected number of runs".into())),
        };
        Ok((score, kept))
    }
}

/// What was completed before a backend failure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialReport {
    pub completed_runs: Vec<RunReport>,
    pub failed_side: Option<GenerationSide>,
    pub n_generated: usize,
    pub answered: Vec<AnsweredQuestion>,
}

pub fn score_pair(
    source: &str,
    summary: &str,
    config: &ScoreConfig,
    backend: &dyn Backend,
) -> Result<ScoreReport, ScoringError> {
    config.validate()?;
    if source.trim().is_empty() || summary.trim().is_empty() {
        return Err(ScoringError::Contract("source and summary must be non-empty".into()));
    }
    let sides: &[GenerationSide] = match config.variant {
        Variant::Sum => &[GenerationSide::Summary],
        Variant::Src => &[GenerationSide::Source],
        Variant::F1 => &[GenerationSide::Summary, GenerationSide::Source],
    };
    let mut runs: Vec<RunReport> = Vec::with_capacity(sides.len());
    for &side in sides {
        match run_side(source, summary, side, config, backend) {
            Ok(run) => runs.push(run),
            Err(SideFailure::Scoring(e)) => return Err(e),
            Err(SideFailure::Backend { error, n_generated, answered }) => {
                return Err(ScoringError::Backend {
                    source: error,
                    partial: Box::new(PartialReport {
                        completed_runs: runs,
                        failed_side: Some(side),
                        n_generated,
                        answered,
                    }),
                })
            }
        }
    }
    let (score, sum_score, src_score) = match config.variant {
        Variant::F1 => {
            let (a, b) = (runs[0].score, runs[1].score);
            (mqag_f1(a, b), Some(a), Some(b))
        }
        _ => (runs[0].score, None, None),
    };
    Ok(ScoreReport {
        config: config.clone(),
        score,
        sum_score,
        src_score,
        runs,
    })
}

enum SideFailure {
    Scoring(ScoringError),
    Backend {
        error: BackendError,
        n_generated: usize,
        answered: Vec<AnsweredQuestion>,
    },
}

impl From<ScoringError> for SideFailure {
    fn from(e: ScoringError) -> Self {
        SideFailure::Scoring(e)
    }
}

fn run_side(
    source: &str,
    summary: &str,
    side: GenerationSide,
    config: &ScoreConfig,
    backend: &dyn Backend,
) -> Result<RunReport, SideFailure> {
    let context = match side {
        GenerationSide::Summary => summary,
        GenerationSide::Source => source,
    };
    let backend_failure = |error, n_generated, answered| SideFailure::Backend {
        error,
        n_generated,
        answered,
    };
    let request = GenerationRequest::new(context, config.num_questions, config.num_options, config.seed)
        .map_err(|e| backend_failure(e, 0, Vec::new()))?;
    let questions = match backend.generate_questions(&request) {
        Ok(qs) => qs,
        Err(BackendError::ShortGeneration {
            requested,
            received,
            questions,
        }) if !questions.is_empty() => {
            warn!(%side, requested, received, "short generation, scoring the questions returned");
            questions
        }
        Err(BackendError::ShortGeneration { .. }) => return Err(ScoringError::NoQuestions(side).into()),
        Err(e) => return Err(backend_failure(e, 0, Vec::new())),
    };
    let n_generated = questions.len();

    // two answer calls per question: even slots source, odd slots summary
    let tasks: Vec<(usize, &str)> = (0..n_generated)
        .flat_map(|i| [(i, source), (i, summary)])
        .collect();
    let workers = backend.max_concurrency().min(tasks.len());
    let answers = parallel_map(&tasks, workers, |&(i, ctx)| {
        AnswerRequest::new(ctx, questions[i].clone()).and_then(|req| backend.answer(&req))
    });

    let mut answered = Vec::with_capacity(n_generated);
    let mut first_error = None;
    for (question, pair) in questions.into_iter().zip(answers.chunks(2)) {
        match (&pair[0], &pair[1]) {
            (Ok(x), Ok(y)) => answered.push(AnsweredQuestion::new(question, x.clone(), y.clone(), side)?),
            (Err(e), _) | (_, Err(e)) => {
                first_error.get_or_insert_with(|| e.clone());
            }
        }
    }
    if let Some(error) = first_error {
        return Err(backend_failure(error, n_generated, answered));
    }

    let answered = filter_answerable(answered, config.answerability_threshold)?;
    let records = answered
        .iter()
        .map(|a| {
            Ok(QuestionRecord {
                id: a.question.id().to_string(),
                distance: a.distance(config.distance)?,
                answerability: a.answerability,
                kept: a.kept,
            })
        })
        .collect::<Result<Vec<_>, ScoringError>>()?;
    let (score, n_kept) = aggregate(&records, config.answerability_threshold)?;
    Ok(RunReport {
        generated_from: side,
        score,
        n_requested: config.num_questions,
        n_generated,
        n_kept,
        questions: records,
    })
}
