//! Text-image matching scores and their conversion to class probabilities.
//!
//! Every backend implements [`Matcher`] and reports raw [`Evidence`] per
//! class: denoising errors (diffusion backends), cosine similarities
//! (CLIP-like backends) or ready-made scores (the reference matcher).
//! Evidence from several projection styles is pooled by [`pool_evidence`].

pub mod diffusion;
pub mod external;
pub mod prompt;
pub mod reference;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diffusion::{
    matching_score, mix_with_noise, noised_feature, sample_trials, score_from_errors, DenoiseTrial,
    Denoiser, DiffusionMatcher, Encoder, NoiseSchedule, PoolEncoder, TemplateDenoiser,
    DEFAULT_SEED, DEFAULT_TIMESTEPS, DEFAULT_TRIALS,
};
pub use external::{
    parse_response, ExternalConfig, ExternalMatcher, ExternalMode, Handshake, MATCHER_ENV,
};
pub use prompt::{build_prompt, PromptTemplate, CANDIDATE_TEMPLATES};
pub use reference::{reference_similarity, ReferenceMatcher, TemplateBank, TemplateEntry};

use crate::project::{GrayImage, ProjectionError, ProjectionStyle};

/// Temperature of the similarity-to-score mapping.
pub const SIMILARITY_TEMPERATURE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("at least one denoising trial is required")]
    NoTrials,
    #[error("class set is empty")]
    EmptyClassSet,
    #[error("score {0} is not in (0, 1]")]
    InvalidScore(f64),
    #[error("timestep {t} outside 1..={steps}")]
    TimestepOutOfRange { t: usize, steps: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid noise schedule: {0}")]
    BadSchedule(String),
    #[error("prompt template must contain exactly one [n_c] slot: {0:?}")]
    BadTemplate(String),
    #[error("template bank is empty")]
    EmptyTemplateBank,
    #[error("no templates for class {0:?}")]
    UnknownClass(String),
    #[error("cannot pool evidence of different kinds")]
    MixedEvidence,
    #[error("matcher unavailable: {0}")]
    MatcherUnavailable(String),
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("template bank {path}: {message}")]
    Bank { path: String, message: String },
}

/// A text-image matching score, always `exp(-m)` for some `m >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MatchScore(f64);

impl MatchScore {
    pub fn new(value: f64) -> Result<Self, MatchError> {
        if value > 0.0 && value <= 1.0 {
            Ok(Self(value))
        } else {
            Err(MatchError::InvalidScore(value))
        }
    }

    /// `exp(-m)`; negative `m` is clamped to 0 and the result floored at the
    /// smallest positive f64 so the score never reaches 0.
    pub fn from_exponent(m: f64) -> Self {
        Self((-m.max(0.0)).exp().max(f64::MIN_POSITIVE))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for MatchScore {
    type Error = MatchError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        MatchScore::new(v)
    }
}

impl From<MatchScore> for f64 {
    fn from(s: MatchScore) -> f64 {
        s.0
    }
}

/// Strictly positive pseudo-score of a cosine similarity,
/// `exp((s - 1) / τ)`. The shift by the maximal similarity keeps the value in
/// (0, 1] and cancels under normalization.
pub fn similarity_score(s: f64) -> MatchScore {
    MatchScore::from_exponent((1.0 - s.min(1.0)) / SIMILARITY_TEMPERATURE)
}

/// Which kind of evidence a matcher produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreFamily {
    Diffusion,
    Similarity,
    Direct,
}

/// Raw per-class output of a matcher for one image.
#[derive(Debug, Clone, PartialEq)]
pub enum Evidence {
    /// Per-trial squared denoising errors.
    SqErr(Vec<f64>),
    /// Cosine similarity between image and prompt embeddings.
    Similarity(f64),
    /// A finished score.
    Score(MatchScore),
}

impl Evidence {
    pub fn to_score(&self) -> Result<MatchScore, MatchError> {
        pool_evidence(std::slice::from_ref(self))
    }
}

/// Combine the evidence one class collected over several styles. Denoising
/// errors are averaged inside the exponent; similarities and direct scores
/// are averaged as scores.
pub fn pool_evidence(items: &[Evidence]) -> Result<MatchScore, MatchError> {
    let Some(first) = items.first() else {
        return Err(MatchError::NoTrials);
    };
    match first {
        Evidence::SqErr(_) => {
            let mut errs = Vec::new();
            for e in items {
                let Evidence::SqErr(v) = e else {
                    return Err(MatchError::MixedEvidence);
                };
                errs.extend_from_slice(v);
            }
            score_from_errors(&errs)
        }
        Evidence::Similarity(_) => {
            let mut acc = 0.0;
            for e in items {
                let Evidence::Similarity(s) = e else {
                    return Err(MatchError::MixedEvidence);
                };
                acc += similarity_score(*s).value();
            }
            MatchScore::new(acc / items.len() as f64)
        }
        Evidence::Score(_) => {
            let mut acc = 0.0;
            for e in items {
                let Evidence::Score(s) = e else {
                    return Err(MatchError::MixedEvidence);
                };
                acc += s.value();
            }
            MatchScore::new(acc / items.len() as f64)
        }
    }
}

/// A backend that scores one image against the prompts of several classes.
pub trait Matcher: Send + Sync {
    fn family(&self) -> ScoreFamily;

    /// One evidence item per class, in the order given.
    fn evidence(
        &self,
        image: &GrayImage,
        style: ProjectionStyle,
        classes: &[String],
        seed: u64,
    ) -> Result<Vec<Evidence>, MatchError>;
}

/// Owned matcher of any kind.
#[derive(Clone)]
pub enum MatcherHandle {
    Reference(Arc<ReferenceMatcher>),
    External(Arc<ExternalMatcher>),
    Custom(Arc<dyn Matcher>),
}

impl MatcherHandle {
    pub fn kind_name(&self) -> &'static str {
        match self {
            MatcherHandle::Reference(_) => "reference",
            MatcherHandle::External(_) => "external",
            MatcherHandle::Custom(_) => "custom",
        }
    }

    fn inner(&self) -> &dyn Matcher {
        match self {
            MatcherHandle::Reference(m) => m.as_ref(),
            MatcherHandle::External(m) => m.as_ref(),
            MatcherHandle::Custom(m) => m.as_ref(),
        }
    }
}

impl std::fmt::Debug for MatcherHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MatcherHandle({})", self.kind_name())
    }
}

impl Matcher for MatcherHandle {
    fn family(&self) -> ScoreFamily {
        self.inner().family()
    }

    fn evidence(
        &self,
        image: &GrayImage,
        style: ProjectionStyle,
        classes: &[String],
        seed: u64,
    ) -> Result<Vec<Evidence>, MatchError> {
        self.inner().evidence(image, style, classes, seed)
    }
}

/// Score of one image against one class prompt.
pub fn score(
    m: &dyn Matcher,
    image: &GrayImage,
    style: ProjectionStyle,
    class_name: &str,
    seed: u64,
) -> Result<MatchScore, MatchError> {
    let ev = m.evidence(image, style, &[class_name.to_string()], seed)?;
    ev.first()
        .ok_or_else(|| MatchError::ProtocolError("matcher returned no evidence".into()))?
        .to_score()
}

/// `p(c) = MS(c) / Σ_j MS(j)`.
pub fn class_probabilities(
    scores: &BTreeMap<String, MatchScore>,
) -> Result<BTreeMap<String, f64>, MatchError> {
    let values: Vec<MatchScore> = scores.values().copied().collect();
    let p = normalize_scores(&values)?;
    Ok(scores.keys().cloned().zip(p).collect())
}

/// Slice form of [`class_probabilities`] that keeps the caller's class order.
pub fn normalize_scores(scores: &[MatchScore]) -> Result<Vec<f64>, MatchError> {
    if scores.is_empty() {
        return Err(MatchError::EmptyClassSet);
    }
    // factor out the maximum so tiny scores do not underflow the sum
    let max = scores.iter().map(|s| s.value()).fold(0.0, f64::max);
    let scaled: Vec<f64> = scores.iter().map(|s| s.value() / max).collect();
    let total: f64 = scaled.iter().sum();
    Ok(scaled.into_iter().map(|v| v / total).collect())
}

/// Index of the largest probability; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}
