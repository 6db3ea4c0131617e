//! Meta-evaluation against human judgements.
//!
//! Scores are keyed by `(system_id, doc_id)`. With `z[i][j]` the score of
//! system `i` on document `j`:
//!
//! * system level: correlate the per-system means over documents;
//! * summary level: correlate across systems within each document, then
//!   average over documents.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::Backend;
use crate::par::parallel_map;
use crate::scoring::{score_pair, ScoreConfig, ScoreReport, ScoringError, Variant};
use crate::textmetrics::{abstractiveness, TextMetricError};

pub const DEFAULT_BOOTSTRAP_REPLICATES: usize = 1000;
pub const DEFAULT_N_GRID: [usize; 6] = [1, 2, 5, 10, 20, 50];
pub const DEFAULT_THRESHOLDS: [f64; 7] = [4.0, 3.5, 3.0, 2.5, 2.0, 1.5, 1.0];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("could not read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: field '{field}' {message}")]
    Schema { line: usize, field: String, message: String },
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("duplicate record for system '{system_id}', document '{doc_id}'")]
    DuplicateKey { system_id: String, doc_id: String },
    #[error("dataset validation failed: {0}")]
    Validation(String),
    #[error("score tables do not line up: {0}")]
    Shape(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("{0}")]
    Contract(String),
    #[error("scoring ({system_id}, {doc_id}) failed: {source}")]
    Scoring {
        system_id: String,
        doc_id: String,
        source: ScoringError,
    },
    #[error(transparent)]
    TextMetric(#[from] TextMetricError),
}

/// `(system_id, doc_id)`
pub type RecordKey = (String, String);

/// Scores keyed by `(system_id, doc_id)`.
pub type ScoreTable = BTreeMap<RecordKey, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub system_id: String,
    pub doc_id: String,
    pub source: String,
    pub summary: String,
    pub human_score: f64,
}

impl EvalRecord {
    pub fn key(&self) -> RecordKey {
        (self.system_id.clone(), self.doc_id.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Summary,
    System,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Summary => "summary",
            Level::System => "system",
        })
    }
}

impl FromStr for Level {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "summary" => Ok(Level::Summary),
            "system" => Ok(Level::System),
            _ => Err(HarnessError::Validation(format!(
                "unknown level '{s}' (expected summary or system)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDataset {
    pub name: String,
    pub level: Level,
    pub records: Vec<EvalRecord>,
}

impl EvalDataset {
    pub fn new(name: impl Into<String>, level: Level, records: Vec<EvalRecord>) -> Result<Self, HarnessError> {
        if records.is_empty() {
            return Err(HarnessError::EmptyDataset);
        }
        let mut seen = BTreeSet::new();
        for r in &records {
            if !seen.insert(r.key()) {
                return Err(HarnessError::DuplicateKey {
                    system_id: r.system_id.clone(),
                    doc_id: r.doc_id.clone(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            level,
            records,
        })
    }

    pub fn systems(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.system_id.as_str()).collect()
    }

    pub fn documents(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.doc_id.as_str()).collect()
    }

    pub fn human_scores(&self) -> ScoreTable {
        self.records.iter().map(|r| (r.key(), r.human_score)).collect()
    }

    /// Checks that correlations at `level` are computable on this dataset.
    pub fn validate_for(&self, level: Level) -> Result<(), HarnessError> {
        let systems = self.systems();
        match level {
            Level::System => {
                if systems.len() < 2 {
                    return Err(HarnessError::Validation(format!(
                        "system-level correlation needs at least 2 systems, found {}",
                        systems.len()
                    )));
                }
                coverage(self.records.iter().map(|r| r.key()))?;
            }
            Level::Summary => {
                let mut per_doc: BTreeMap<&str, usize> = BTreeMap::new();
                for r in &self.records {
                    *per_doc.entry(r.doc_id.as_str()).or_default() += 1;
                }
                if let Some((doc, n)) = per_doc.iter().find(|(_, &n)| n < 2) {
                    return Err(HarnessError::Validation(format!(
                        "summary-level correlation needs at least 2 systems per document; '{doc}' has {n}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Keeps only the listed systems.
    pub fn retain_systems(&self, allow: &[String]) -> Result<Self, HarnessError> {
        let records = self
            .records
            .iter()
            .filter(|r| allow.contains(&r.system_id))
            .cloned()
            .collect();
        Self::new(self.name.clone(), self.level, records)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// One record object per line, optionally preceded by a
    /// `{"name": ..., "level": ...}` header line.
    Jsonl,
    /// A single `{"name", "level", "records": [...]}` document.
    Json,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => DatasetFormat::Json,
            _ => DatasetFormat::Jsonl,
        }
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<EvalDataset, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let default_name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    match format {
        DatasetFormat::Jsonl => parse_jsonl(&text, &default_name),
        DatasetFormat::Json => parse_json(&text, &default_name),
    }
}

const RECORD_FIELDS: [&str; 5] = ["system_id", "doc_id", "source", "summary", "human_score"];

fn record_from_value(value: &Value, line: usize) -> Result<EvalRecord, HarnessError> {
    let schema = |field: &str, message: &str| HarnessError::Schema {
        line,
        field: field.to_string(),
        message: message.to_string(),
    };
    let obj = value
        .as_object()
        .ok_or_else(|| HarnessError::Parse {
            line,
            message: "expected a JSON object".into(),
        })?;
    for field in RECORD_FIELDS {
        if !obj.contains_key(field) {
            return Err(schema(field, "is missing"));
        }
    }
    let string = |field: &str| -> Result<String, HarnessError> {
        obj[field]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| schema(field, "must be a string"))
    };
    let human_score = obj["human_score"]
        .as_f64()
        .filter(|v| v.is_finite())
        .ok_or_else(|| schema("human_score", "must be a finite number"))?;
    let record = EvalRecord {
        system_id: string("system_id")?,
        doc_id: string("doc_id")?,
        source: string("source")?,
        summary: string("summary")?,
        human_score,
    };
    for (field, text) in [("source", &record.source), ("summary", &record.summary)] {
        if text.trim().is_empty() {
            return Err(schema(field, "must not be empty"));
        }
    }
    Ok(record)
}

fn header_fields(value: &Value, line: usize) -> Result<(Option<String>, Option<Level>), HarnessError> {
    let name = match value.get("name") {
        None => None,
        Some(v) => Some(
            v.as_str()
                .ok_or_else(|| HarnessError::Schema {
                    line,
                    field: "name".into(),
                    message: "must be a string".into(),
                })?
                .to_string(),
        ),
    };
    let level = match value.get("level") {
        None => None,
        Some(v) => Some(
            v.as_str()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| HarnessError::Schema {
                    line,
                    field: "level".into(),
                    message: "must be \"summary\" or \"system\"".into(),
                })?,
        ),
    };
    Ok((name, level))
}

pub fn parse_jsonl(text: &str, default_name: &str) -> Result<EvalDataset, HarnessError> {
    let mut name = default_name.to_string();
    let mut level = Level::Summary;
    let mut records = Vec::new();
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| HarnessError::Parse {
            line,
            message: e.to_string(),
        })?;
        let is_header = first && value.is_object() && value.get("system_id").is_none() && value.get("doc_id").is_none();
        first = false;
        if is_header {
            let (n, l) = header_fields(&value, line)?;
            name = n.unwrap_or(name);
            level = l.unwrap_or(level);
            continue;
        }
        records.push(record_from_value(&value, line)?);
    }
    EvalDataset::new(name, level, records)
}

pub fn parse_json(text: &str, default_name: &str) -> Result<EvalDataset, HarnessError> {
    let value: Value = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let (name, level) = header_fields(&value, 1)?;
    let items = value
        .get("records")
        .and_then(Value::as_array)
        .ok_or_else(|| HarnessError::Schema {
            line: 1,
            field: "records".into(),
            message: "must be an array".into(),
        })?;
    // "line" is the 1-based record position for this format
    let records = items
        .iter()
        .enumerate()
        .map(|(i, v)| record_from_value(v, i + 1))
        .collect::<Result<Vec<_>, _>>()?;
    EvalDataset::new(
        name.unwrap_or_else(|| default_name.to_string()),
        level.unwrap_or(Level::Summary),
        records,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub pearson: f64,
    pub spearman: f64,
    /// Groups that entered the correlation: systems at system level,
    /// documents at summary level.
    pub n_used: usize,
    pub n_skipped: usize,
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<(), HarnessError> {
    if xs.len() != ys.len() {
        return Err(HarnessError::Shape(format!("{} vs {} values", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(HarnessError::UndefinedCorrelation(format!(
            "need at least 2 points, got {}",
            xs.len()
        )));
    }
    for (name, v) in [("first", xs), ("second", ys)] {
        if v.iter().all(|&x| x == v[0]) {
            return Err(HarnessError::UndefinedCorrelation(format!("{name} argument has zero variance")));
        }
    }
    Ok(())
}

/// Pearson product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, HarnessError> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(HarnessError::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation: Pearson on average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, HarnessError> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Checks that every system covers the same document set; returns
/// `system -> docs`.
fn coverage(keys: impl Iterator<Item = RecordKey>) -> Result<BTreeMap<String, BTreeSet<String>>, HarnessError> {
    let mut by_system: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (system, doc) in keys {
        by_system.entry(system).or_default().insert(doc);
    }
    let mut iter = by_system.iter();
    if let Some((first_system, first_docs)) = iter.next() {
        for (system, docs) in iter {
            if docs != first_docs {
                return Err(HarnessError::Shape(format!(
                    "system '{system}' covers {} documents, '{first_system}' covers {}; document sets differ",
                    docs.len(),
                    first_docs.len()
                )));
            }
        }
    }
    Ok(by_system)
}

fn same_keys(metric: &ScoreTable, human: &ScoreTable) -> Result<(), HarnessError> {
    if metric.len() != human.len() || metric.keys().zip(human.keys()).any(|(a, b)| a != b) {
        return Err(HarnessError::Shape("metric and human tables have different keys".into()));
    }
    if metric.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    Ok(())
}

pub fn system_level_corr(metric: &ScoreTable, human: &ScoreTable) -> Result<CorrelationResult, HarnessError> {
    same_keys(metric, human)?;
    let by_system = coverage(metric.keys().cloned())?;
    let mut metric_means = Vec::with_capacity(by_system.len());
    let mut human_means = Vec::with_capacity(by_system.len());
    for (system, docs) in &by_system {
        let m = docs.len() as f64;
        let key = |doc: &String| (system.clone(), doc.clone());
        metric_means.push(docs.iter().map(|d| metric[&key(d)]).sum::<f64>() / m);
        human_means.push(docs.iter().map(|d| human[&key(d)]).sum::<f64>() / m);
    }
    Ok(CorrelationResult {
        pearson: pearson(&metric_means, &human_means)?,
        spearman: spearman(&metric_means, &human_means)?,
        n_used: by_system.len(),
        n_skipped: 0,
    })
}

pub fn summary_level_corr(metric: &ScoreTable, human: &ScoreTable) -> Result<CorrelationResult, HarnessError> {
    same_keys(metric, human)?;
    let mut by_doc: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (key, &m) in metric {
        let entry = by_doc.entry(key.1.as_str()).or_default();
        entry.0.push(m);
        entry.1.push(human[key]);
    }
    let (mut p_sum, mut s_sum, mut used, mut skipped) = (0.0, 0.0, 0, 0);
    for (xs, ys) in by_doc.values() {
        match (pearson(xs, ys), spearman(xs, ys)) {
            (Ok(p), Ok(s)) => {
                p_sum += p;
                s_sum += s;
                used += 1;
            }
            (Err(HarnessError::Shape(m)), _) => return Err(HarnessError::Shape(m)),
            _ => skipped += 1,
        }
    }
    if used == 0 {
        return Err(HarnessError::UndefinedCorrelation(format!(
            "all {skipped} documents have undefined correlation"
        )));
    }
    Ok(CorrelationResult {
        pearson: p_sum / used as f64,
        spearman: s_sum / used as f64,
        n_used: used,
        n_skipped: skipped,
    })
}

pub fn correlate(level: Level, metric: &ScoreTable, human: &ScoreTable) -> Result<CorrelationResult, HarnessError> {
    match level {
        Level::System => system_level_corr(metric, human),
        Level::Summary => summary_level_corr(metric, human),
    }
}

/// Scores every record of the dataset, `jobs` records at a time. Results
/// come back in dataset order.
pub fn score_dataset(
    dataset: &EvalDataset,
    config: &ScoreConfig,
    backend: &dyn Backend,
    jobs: usize,
) -> Result<Vec<(RecordKey, ScoreReport)>, HarnessError> {
    let results = parallel_map(&dataset.records, jobs, |r| {
        score_pair(&r.source, &r.summary, config, backend)
    });
    dataset
        .records
        .iter()
        .zip(results)
        .map(|(r, res)| {
            res.map(|report| (r.key(), report))
                .map_err(|source| HarnessError::Scoring {
                    system_id: r.system_id.clone(),
                    doc_id: r.doc_id.clone(),
                    source,
                })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    /// `n` indices drawn uniformly with replacement.
    Bootstrap,
    /// The first `n` questions, no randomness.
    Prefix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub level: Level,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub resampling: Resampling,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            level: Level::Summary,
            n_grid: DEFAULT_N_GRID.to_vec(),
            replicates: DEFAULT_BOOTSTRAP_REPLICATES,
            seed: 0,
            resampling: Resampling::Bootstrap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub n: usize,
    pub mean_pearson: f64,
    pub std_pearson: f64,
    pub mean_spearman: f64,
    pub std_spearman: f64,
    /// Replicates whose correlation was undefined and left out of the
    /// statistics.
    pub n_undefined: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Correlation of the metric against human scores as a function of the
/// number of questions used per record.
///
/// For each `n` in the grid, each replicate draws `n` question indices per
/// record, scores the record as `1 - mean(distance)` over the draw and
/// correlates the resulting table with `human`.
pub fn convergence_curve(
    per_question_distances: &BTreeMap<RecordKey, Vec<f64>>,
    human: &ScoreTable,
    config: &ConvergenceConfig,
) -> Result<Vec<ConvergencePoint>, HarnessError> {
    if config.replicates == 0 {
        return Err(HarnessError::Contract("at least one replicate is required".into()));
    }
    let max_n = config.n_grid.iter().copied().max().unwrap_or(0);
    if max_n == 0 || config.n_grid.contains(&0) {
        return Err(HarnessError::Contract("question grid must contain positive counts".into()));
    }
    if let Some((key, d)) = per_question_distances.iter().find(|(_, d)| d.len() < max_n) {
        return Err(HarnessError::Contract(format!(
            "record ({}, {}) has {} questions, grid needs {max_n}",
            key.0,
            key.1,
            d.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut curve = Vec::with_capacity(config.n_grid.len());
    for &n in &config.n_grid {
        let mut pearsons = Vec::with_capacity(config.replicates);
        let mut spearmans = Vec::with_capacity(config.replicates);
        let mut undefined = 0;
        for _ in 0..config.replicates {
            let table: ScoreTable = per_question_distances
                .iter()
                .map(|(key, distances)| {
                    let total: f64 = match config.resampling {
                        Resampling::Prefix => distances[..n].iter().sum(),
                        Resampling::Bootstrap => (0..n).map(|_| distances[rng.random_range(0..distances.len())]).sum(),
                    };
                    (key.clone(), 1.0 - total / n as f64)
                })
                .collect();
            match correlate(config.level, &table, human) {
                Ok(c) => {
                    pearsons.push(c.pearson);
                    spearmans.push(c.spearman);
                }
                Err(HarnessError::UndefinedCorrelation(_)) => undefined += 1,
                Err(e) => return Err(e),
            }
        }
        let (mean_pearson, std_pearson) = mean_std(&pearsons);
        let (mean_spearman, std_spearman) = mean_std(&spearmans);
        curve.push(ConvergencePoint {
            n,
            mean_pearson,
            std_pearson,
            mean_spearman,
            std_spearman,
            n_undefined: undefined,
        });
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub correlation: CorrelationResult,
    pub mean_kept: f64,
}

/// Re-aggregates already computed reports at each threshold and correlates
/// the result with `human`. The reports must carry every generated question,
/// i.e. be scored with the threshold off (or at `K`).
pub fn answerability_sweep(
    reports: &BTreeMap<RecordKey, ScoreReport>,
    human: &ScoreTable,
    level: Level,
    thresholds: &[f64],
) -> Result<Vec<SweepPoint>, HarnessError> {
    if reports.values().any(|r| r.config.variant == Variant::F1) {
        return Err(HarnessError::Contract("the answerability sweep applies to sum and src reports only".into()));
    }
    let mut points = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let mut table = ScoreTable::new();
        let mut kept_total = 0;
        for (key, report) in reports {
            if !(1.0..=report.config.num_options as f64).contains(&t) {
                return Err(HarnessError::Contract(format!(
                    "threshold {t} outside [1, {}]",
                    report.config.num_options
                )));
            }
            let (score, kept) = report.rescore(Some(t)).map_err(|source| HarnessError::Scoring {
                system_id: key.0.clone(),
                doc_id: key.1.clone(),
                source,
            })?;
            table.insert(key.clone(), score);
            kept_total += kept;
        }
        points.push(SweepPoint {
            threshold: t,
            correlation: correlate(level, &table, human)?,
            mean_kept: kept_total as f64 / reports.len().max(1) as f64,
        });
    }
    Ok(points)
}

/// Splits records into equal halves by abstractiveness, least abstractive
/// first. Ties break by `doc_id` then `system_id`; an odd record goes to the
/// low half.
pub fn abstractiveness_split(dataset: &EvalDataset) -> Result<(Vec<EvalRecord>, Vec<EvalRecord>), HarnessError> {
    if dataset.records.len() < 2 {
        return Err(HarnessError::Contract("splitting needs at least 2 records".into()));
    }
    let mut scored = dataset
        .records
        .iter()
        .map(|r| Ok((abstractiveness(&r.summary, &r.source)?, r)))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    scored.sort_by(|(a, ra), (b, rb)| {
        a.total_cmp(b)
            .then_with(|| ra.doc_id.cmp(&rb.doc_id))
            .then_with(|| ra.system_id.cmp(&rb.system_id))
    });
    let cut = scored.len().div_ceil(2);
    let mut records: Vec<EvalRecord> = scored.into_iter().map(|(_, r)| r.clone()).collect();
    let high = records.split_off(cut);
    Ok((records, high))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table(rows: &[(&str, &str, f64)]) -> ScoreTable {
        rows.iter().map(|(s, d, v)| ((s.to_string(), d.to_string()), *v)).collect()
    }

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let affine: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert_abs_diff_eq!(pearson(&xs, &affine).unwrap(), 1.0, epsilon = 1e-15);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_abs_diff_eq!(pearson(&xs, &neg).unwrap(), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pearson(&xs, &[1.0, 3.0, 2.0, 4.0]).unwrap(), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(HarnessError::UndefinedCorrelation(_))));
        assert!(matches!(pearson(&[0.1; 3], &[1.0, 2.0, 3.0]), Err(HarnessError::UndefinedCorrelation(_))));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(HarnessError::UndefinedCorrelation(_))));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(HarnessError::Shape(_))));
    }

    #[test]
    fn spearman_examples() {
        let xs = [0.5, 1.0, 2.0, 7.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| x.exp()).collect();
        assert_abs_diff_eq!(spearman(&xs, &ys).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), -0.5, epsilon = 1e-15);
        assert_eq!(average_ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 3.0]), vec![3.0, 1.0, 3.0, 3.0]);
    }

    #[test]
    fn system_level_orders_systems() {
        let human = table(&[
            ("a", "d1", 1.0),
            ("a", "d2", 2.0),
            ("a", "d3", 3.0),
            ("b", "d1", 3.0),
            ("b", "d2", 4.0),
            ("b", "d3", 5.0),
        ]);
        let metric = table(&[
            ("a", "d1", 0.1),
            ("a", "d2", 0.9),
            ("a", "d3", 0.2),
            ("b", "d1", 0.5),
            ("b", "d2", 0.6),
            ("b", "d3", 0.7),
        ]);
        let r = system_level_corr(&metric, &human).unwrap();
        assert_abs_diff_eq!(r.spearman, 1.0, epsilon = 1e-15);
        assert_eq!(r.n_used, 2);
        assert_abs_diff_eq!(system_level_corr(&human, &human).unwrap().pearson, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn system_level_coverage_mismatch() {
        let t = table(&[("a", "d1", 1.0), ("a", "d2", 2.0), ("b", "d1", 3.0), ("b", "d3", 4.0)]);
        assert!(matches!(system_level_corr(&t, &t), Err(HarnessError::Shape(_))));
    }

    #[test]
    fn summary_level_skips_constant_documents() {
        let human = table(&[
            ("a", "d1", 1.0),
            ("b", "d1", 2.0),
            ("c", "d1", 3.0),
            ("a", "d2", 1.0),
            ("b", "d2", 3.0),
            ("c", "d2", 2.0),
        ]);
        let metric = table(&[
            ("a", "d1", 0.5),
            ("b", "d1", 0.5),
            ("c", "d1", 0.5),
            ("a", "d2", 1.0),
            ("b", "d2", 2.0),
            ("c", "d2", 3.0),
        ]);
        let r = summary_level_corr(&metric, &human).unwrap();
        assert_eq!((r.n_used, r.n_skipped), (1, 1));
        assert_abs_diff_eq!(r.pearson, pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), epsilon = 1e-15);
        assert_abs_diff_eq!(summary_level_corr(&human, &human).unwrap().pearson, 1.0, epsilon = 1e-15);

        let flat = table(&[("a", "d1", 0.5), ("b", "d1", 0.5)]);
        assert!(matches!(summary_level_corr(&flat, &flat), Err(HarnessError::UndefinedCorrelation(_))));
    }

    #[test]
    fn single_document_levels_agree() {
        let human = table(&[("a", "d", 1.0), ("b", "d", 2.5), ("c", "d", 2.0)]);
        let metric = table(&[("a", "d", 0.2), ("b", "d", 0.3), ("c", "d", 0.9)]);
        let s = system_level_corr(&metric, &human).unwrap();
        let m = summary_level_corr(&metric, &human).unwrap();
        assert_abs_diff_eq!(s.pearson, m.pearson, epsilon = 1e-15);
        assert_abs_diff_eq!(s.spearman, m.spearman, epsilon = 1e-15);
    }

    fn rec(system: &str, doc: &str, source: &str, summary: &str) -> EvalRecord {
        EvalRecord {
            system_id: system.into(),
            doc_id: doc.into(),
            source: source.into(),
            summary: summary.into(),
            human_score: 0.0,
        }
    }

    #[test]
    fn split_sizes_and_ties() {
        let src = "a b c d e f g h";
        let ds = EvalDataset::new(
            "t",
            Level::Summary,
            vec![
                rec("s", "d4", src, "a b c d"),
                rec("s", "d1", src, "x y z w"),
                rec("s", "d3", src, "a b x y"),
                rec("s", "d2", src, "a x y z"),
            ],
        )
        .unwrap();
        let (low, high) = abstractiveness_split(&ds).unwrap();
        let ids = |v: &[EvalRecord]| v.iter().map(|r| r.doc_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&low), vec!["d4", "d3"]);
        assert_eq!(ids(&high), vec!["d2", "d1"]);

        let extractive = EvalDataset::new(
            "t",
            Level::Summary,
            (0..5).map(|i| rec("s", &format!("d{}", 4 - i), src, "a b")).collect(),
        )
        .unwrap();
        let (low, high) = abstractiveness_split(&extractive).unwrap();
        assert_eq!(ids(&low), vec!["d0", "d1", "d2"]);
        assert_eq!(ids(&high), vec!["d3", "d4"]);
    }

    #[test]
    fn jsonl_header_and_records() {
        let text = concat!(
            "{\"name\":\"demo\",\"level\":\"system\"}\n",
            "{\"system_id\":\"a\",\"doc_id\":\"1\",\"source\":\"s\",\"summary\":\"y\",\"human_score\":1}\n",
            "\n",
            "{\"system_id\":\"b\",\"doc_id\":\"1\",\"source\":\"s\",\"summary\":\"y\",\"human_score\":2.5}\n",
        );
        let ds = parse_jsonl(text, "fallback").unwrap();
        assert_eq!(ds.name, "demo");
        assert_eq!(ds.level, Level::System);
        assert_eq!(ds.records.len(), 2);
        assert!(ds.validate_for(Level::System).is_ok());
    }

    #[test]
    fn jsonl_errors() {
        assert!(matches!(parse_jsonl("", "x"), Err(HarnessError::EmptyDataset)));
        let missing = "{\"system_id\":\"a\",\"doc_id\":\"1\",\"source\":\"s\",\"summary\":\"y\"}";
        match parse_jsonl(missing, "x") {
            Err(HarnessError::Schema { line: 1, field, .. }) => assert_eq!(field, "human_score"),
            other => panic!("unexpected {other:?}"),
        }
        let good = "{\"system_id\":\"a\",\"doc_id\":\"1\",\"source\":\"s\",\"summary\":\"y\",\"human_score\":1}";
        let broken = format!("{good}\n{{not json");
        assert!(matches!(parse_jsonl(&broken, "x"), Err(HarnessError::Parse { line: 2, .. })));
        let dup = format!("{good}\n{good}");
        assert!(matches!(parse_jsonl(&dup, "x"), Err(HarnessError::DuplicateKey { .. })));
        let wrong_type = good.replace("\"human_score\":1", "\"human_score\":\"high\"");
        assert!(matches!(parse_jsonl(&wrong_type, "x"), Err(HarnessError::Schema { .. })));
    }

    #[test]
    fn level_validation() {
        let ds = EvalDataset::new("t", Level::System, vec![rec("a", "1", "s", "y"), rec("a", "2", "s", "y")]).unwrap();
        assert!(matches!(ds.validate_for(Level::System), Err(HarnessError::Validation(_))));
        assert!(matches!(ds.validate_for(Level::Summary), Err(HarnessError::Validation(_))));
    }

    #[test]
    fn convergence_prefix_at_full_n_equals_full_set() {
        let distances: BTreeMap<RecordKey, Vec<f64>> = [
            (("a".to_string(), "d".to_string()), vec![0.1, 0.2, 0.3]),
            (("b".to_string(), "d".to_string()), vec![0.5, 0.4, 0.9]),
            (("c".to_string(), "d".to_string()), vec![0.0, 0.0, 0.1]),
        ]
        .into_iter()
        .collect();
        let human = table(&[("a", "d", 3.0), ("b", "d", 1.0), ("c", "d", 2.0)]);
        let config = ConvergenceConfig {
            n_grid: vec![3],
            replicates: 1,
            resampling: Resampling::Prefix,
            ..ConvergenceConfig::default()
        };
        let curve = convergence_curve(&distances, &human, &config).unwrap();
        let full: ScoreTable = distances
            .iter()
            .map(|(k, d)| (k.clone(), 1.0 - d.iter().sum::<f64>() / d.len() as f64))
            .collect();
        let expected = summary_level_corr(&full, &human).unwrap();
        assert_eq!(curve[0].mean_pearson, expected.pearson);
        assert_eq!(curve[0].std_pearson, 0.0);

        let too_big = ConvergenceConfig {
            n_grid: vec![4],
            ..config
        };
        assert!(matches!(convergence_curve(&distances, &human, &too_big), Err(HarnessError::Contract(_))));
    }
}
