//! Categorical option distributions and the distances between them.
//!
//! Every distance takes the source-conditioned distribution as its first
//! argument. Only KL divergence is asymmetric; the other three are metrics
//! bounded in `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Accepted deviation of the input sum from one before renormalization.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Floor applied to every probability before the KL log ratio.
pub const KL_EPSILON: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("a distribution needs at least 2 options, got {0}")]
    TooFewOptions(usize),
    #[error("probability at index {index} is {value}, outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("probabilities sum to {0}, not 1 within {SUM_TOLERANCE}")]
    BadSum(f64),
    #[error("distribution lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("unknown distance '{0}' (expected kl, ob, tv or hl)")]
    UnknownDistance(String),
    #[error("grid resolution must be at least 2, got {0}")]
    BadResolution(usize),
}

/// A normalized probability vector over the options of one question.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct OptionDistribution {
    probs: Vec<f64>,
}

impl OptionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, DistributionError> {
        if probs.len() < 2 {
            return Err(DistributionError::TooFewOptions(probs.len()));
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0 + SUM_TOLERANCE).contains(&value) {
                return Err(DistributionError::OutOfRange { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(DistributionError::BadSum(sum));
        }
        let probs = if sum == 1.0 {
            probs
        } else {
            probs.into_iter().map(|p| p / sum).collect()
        };
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Result<Self, DistributionError> {
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn one_hot(k: usize, index: usize) -> Result<Self, DistributionError> {
        let mut probs = vec![0.0; k];
        if let Some(p) = probs.get_mut(index) {
            *p = 1.0;
        }
        Self::new(probs)
    }

    /// Normalizes non-negative scores into a distribution via softmax at the
    /// given temperature.
    pub fn softmax(scores: &[f64], temperature: f64) -> Result<Self, DistributionError> {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores
            .iter()
            .map(|s| ((s - max) / temperature).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the most probable option; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Base-2 Shannon entropy with `0 log 0 = 0`.
    pub fn entropy_bits(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.log2())
            .sum::<f64>()
    }

    /// Returns the distribution with its options reordered so that entry `i`
    /// of the result is entry `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            probs: order.iter().map(|&i| self.probs[i]).collect(),
        }
    }
}

impl<'de> Deserialize<'de> for OptionDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let probs = Vec::<f64>::deserialize(d)?;
        Self::new(probs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistanceKind {
    #[serde(rename = "kl")]
    Kl,
    #[serde(rename = "ob")]
    OneBest,
    #[serde(rename = "tv")]
    TotalVariation,
    #[serde(rename = "hl")]
    Hellinger,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 4] = [
        DistanceKind::Kl,
        DistanceKind::OneBest,
        DistanceKind::TotalVariation,
        DistanceKind::Hellinger,
    ];

    /// Whether the distance is bounded in `[0, 1]`.
    pub fn is_bounded(self) -> bool {
        !matches!(self, DistanceKind::Kl)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            DistanceKind::Kl => "kl",
            DistanceKind::OneBest => "ob",
            DistanceKind::TotalVariation => "tv",
            DistanceKind::Hellinger => "hl",
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for DistanceKind {
    type Err = DistributionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "kl" | "kl-divergence" => Ok(DistanceKind::Kl),
            "ob" | "one-best" | "onebest" => Ok(DistanceKind::OneBest),
            "tv" | "total-variation" => Ok(DistanceKind::TotalVariation),
            "hl" | "hellinger" => Ok(DistanceKind::Hellinger),
            _ => Err(DistributionError::UnknownDistance(s.to_string())),
        }
    }
}

fn check_lengths(p: &OptionDistribution, q: &OptionDistribution) -> Result<(), DistributionError> {
    if p.len() != q.len() {
        return Err(DistributionError::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(())
}

fn clamped(p: &OptionDistribution) -> Vec<f64> {
    let floored: Vec<f64> = p.probs.iter().map(|&x| x.max(KL_EPSILON)).collect();
    let total: f64 = floored.iter().sum();
    floored.into_iter().map(|x| x / total).collect()
}

/// KL divergence in bits, `p` being the reference distribution.
///
/// Both arguments are floored at [`KL_EPSILON`] and renormalized first, so the
/// result is always finite.
pub fn kl_divergence(p: &OptionDistribution, q: &OptionDistribution) -> Result<f64, DistributionError> {
    check_lengths(p, q)?;
    if p == q {
        return Ok(0.0);
    }
    let (p, q) = (clamped(p), clamped(q));
    let kl: f64 = p.iter().zip(&q).map(|(&a, &b)| a * (a / b).log2()).sum();
    Ok(kl.max(0.0))
}

pub fn one_best(p: &OptionDistribution, q: &OptionDistribution) -> Result<f64, DistributionError> {
    check_lengths(p, q)?;
    Ok(if p.argmax() == q.argmax() { 0.0 } else { 1.0 })
}

pub fn total_variation(p: &OptionDistribution, q: &OptionDistribution) -> Result<f64, DistributionError> {
    check_lengths(p, q)?;
    let l1: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * l1).min(1.0))
}

pub fn hellinger(p: &OptionDistribution, q: &OptionDistribution) -> Result<f64, DistributionError> {
    check_lengths(p, q)?;
    let sq: f64 = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .sum();
    Ok((sq / 2.0).sqrt().min(1.0))
}

pub fn distance(kind: DistanceKind, p: &OptionDistribution, q: &OptionDistribution) -> Result<f64, DistributionError> {
    match kind {
        DistanceKind::Kl => kl_divergence(p, q),
        DistanceKind::OneBest => one_best(p, q),
        DistanceKind::TotalVariation => total_variation(p, q),
        DistanceKind::Hellinger => hellinger(p, q),
    }
}

/// Effective number of options, `2^H(p)` with `H` in bits. Ranges from 1 for a
/// one-hot distribution to `K` for the uniform one.
pub fn effective_options(p: &OptionDistribution) -> f64 {
    p.entropy_bits().exp2().clamp(1.0, p.len() as f64)
}

/// First-option probabilities of the reference Bernoulli distributions.
pub const BERNOULLI_P1: [f64; 4] = [0.0, 0.25, 0.5, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernoulliPoint {
    pub p1: f64,
    pub p2: f64,
    pub kl: f64,
    pub ob: f64,
    pub tv: f64,
    pub hl: f64,
}

/// All four distances between `[p1, 1-p1]` and `[p2, 1-p2]` for each `p1` in
/// [`BERNOULLI_P1`] and `p2 = i / (resolution - 1)`.
pub fn bernoulli_curves(resolution: usize) -> Result<Vec<BernoulliPoint>, DistributionError> {
    if resolution < 2 {
        return Err(DistributionError::BadResolution(resolution));
    }
    let bernoulli = |p: f64| OptionDistribution::new(vec![p, 1.0 - p]);
    let mut points = Vec::with_capacity(BERNOULLI_P1.len() * resolution);
    for p1 in BERNOULLI_P1 {
        let p = bernoulli(p1)?;
        for i in 0..resolution {
            let p2 = i as f64 / (resolution - 1) as f64;
            let q = bernoulli(p2)?;
            points.push(BernoulliPoint {
                p1,
                p2,
                kl: kl_divergence(&p, &q)?,
                ob: one_best(&p, &q)?,
                tv: total_variation(&p, &q)?,
                hl: hellinger(&p, &q)?,
            });
        }
    }
    Ok(points)
}
