//! Diffusion-classifier score arithmetic.
//!
//! A clean feature `f0` is noised to timestep `t` as
//! `f_t = sqrt(ᾱ_t)·f0 + sqrt(1-ᾱ_t)·ε`; a text-conditioned denoiser predicts
//! `ε̂`, and the matching score is `exp(-E[‖ε - ε̂‖²])` over sampled `(t, ε)`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Evidence, MatchError, MatchScore, Matcher, ScoreFamily};
use crate::matching::prompt::build_prompt;
use crate::project::{GrayImage, ProjectionStyle};

pub const DEFAULT_TIMESTEPS: usize = 600;
pub const DEFAULT_TRIALS: usize = 30;
pub const DEFAULT_SEED: u64 = 42;

/// Variance schedule β₁..β_T with α_t = 1 - β_t and ᾱ_t = ∏_{i≤t} α_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self, MatchError> {
        if betas.is_empty() || betas.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(MatchError::BadSchedule("betas must lie in (0, 1)".into()));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars: Vec<f64> = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        if !(*alpha_bars.last().expect("non-empty") > 0.0) {
            return Err(MatchError::BadSchedule(
                "alpha_bar_T underflows to 0".into(),
            ));
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    /// β linear in t from `beta_1` to `beta_t`.
    pub fn linear(steps: usize, beta_1: f64, beta_t: f64) -> Result<Self, MatchError> {
        let betas = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_1
                } else {
                    beta_1 + (beta_t - beta_1) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    /// √β linear in t (the latent-diffusion convention).
    pub fn scaled_linear(steps: usize, beta_1: f64, beta_t: f64) -> Result<Self, MatchError> {
        let (a, b) = (beta_1.sqrt(), beta_t.sqrt());
        let betas = (0..steps)
            .map(|i| {
                let s = if steps == 1 {
                    a
                } else {
                    a + (b - a) * i as f64 / (steps - 1) as f64
                };
                s * s
            })
            .collect();
        Self::from_betas(betas)
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn index(&self, t: usize) -> Result<usize, MatchError> {
        if t == 0 || t > self.steps() {
            return Err(MatchError::TimestepOutOfRange {
                t,
                steps: self.steps(),
            });
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> Result<f64, MatchError> {
        Ok(self.betas[self.index(t)?])
    }

    pub fn alpha(&self, t: usize) -> Result<f64, MatchError> {
        Ok(self.alphas[self.index(t)?])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64, MatchError> {
        Ok(self.alpha_bars[self.index(t)?])
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule::linear(DEFAULT_TIMESTEPS, 1e-4, 0.02).expect("valid default schedule")
    }
}

/// `sqrt(ᾱ)·f0 + sqrt(1-ᾱ)·ε` for an explicit ᾱ.
pub fn mix_with_noise(f0: &[f64], eps: &[f64], alpha_bar: f64) -> Result<Vec<f64>, MatchError> {
    if f0.len() != eps.len() {
        return Err(MatchError::DimensionMismatch(f0.len(), eps.len()));
    }
    let (s, n) = (alpha_bar.sqrt(), (1.0 - alpha_bar).max(0.0).sqrt());
    Ok(f0.iter().zip(eps).map(|(f, e)| s * f + n * e).collect())
}

/// Forward-noised feature at timestep `t` (1-based).
pub fn noised_feature(
    f0: &[f64],
    t: usize,
    eps: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>, MatchError> {
    mix_with_noise(f0, eps, schedule.alpha_bar(t)?)
}

/// One Monte-Carlo denoising trial.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseTrial {
    pub t: usize,
    pub eps: Vec<f64>,
    pub eps_hat: Vec<f64>,
    /// Mean squared error between `eps` and `eps_hat`.
    pub sq_err: f64,
}

impl DenoiseTrial {
    pub fn new(t: usize, eps: Vec<f64>, eps_hat: Vec<f64>) -> Result<Self, MatchError> {
        if eps.len() != eps_hat.len() || eps.is_empty() {
            return Err(MatchError::DimensionMismatch(eps.len(), eps_hat.len()));
        }
        let sq_err = eps
            .iter()
            .zip(&eps_hat)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / eps.len() as f64;
        Ok(Self {
            t,
            eps,
            eps_hat,
            sq_err,
        })
    }
}

/// `exp(-mean sq_err)` over trials pooled from every style used.
pub fn matching_score(trials: &[DenoiseTrial]) -> Result<MatchScore, MatchError> {
    let errs: Vec<f64> = trials.iter().map(|t| t.sq_err).collect();
    score_from_errors(&errs)
}

pub fn score_from_errors(errors: &[f64]) -> Result<MatchScore, MatchError> {
    if errors.is_empty() {
        return Err(MatchError::NoTrials);
    }
    if errors.iter().any(|e| !(*e >= 0.0)) {
        return Err(MatchError::ProtocolError(
            "negative or NaN squared error".into(),
        ));
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok(MatchScore::from_exponent(mean))
}

/// Deterministic `(t, ε)` draws: t uniform on 1..=T, ε standard normal.
/// Identical seeds give identical draws, so two scores computed with the
/// same seed share their noise.
pub fn sample_trials(
    schedule: &NoiseSchedule,
    trials: usize,
    dim: usize,
    seed: u64,
) -> Vec<(usize, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| {
            let t = rng.random_range(1..=schedule.steps());
            let eps = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            (t, eps)
        })
        .collect()
}

/// Image encoder `E(·)`.
pub trait Encoder: Send + Sync {
    fn encode(&self, image: &GrayImage) -> Vec<f64>;
}

/// Text-conditioned noise predictor `ε_θ(f_t, t, prompt)`.
pub trait Denoiser: Send + Sync {
    fn predict_noise(
        &self,
        f_t: &[f64],
        t: usize,
        alpha_bar: f64,
        prompt: &str,
    ) -> Result<Vec<f64>, MatchError>;
}

/// Average-pools an image to a `cells × cells` grid.
#[derive(Debug, Clone, Copy)]
pub struct PoolEncoder {
    pub cells: usize,
}

impl Encoder for PoolEncoder {
    fn encode(&self, image: &GrayImage) -> Vec<f64> {
        let (w, h) = (image.width(), image.height());
        let mut out = vec![0.0; self.cells * self.cells];
        let mut counts = vec![0usize; out.len()];
        for y in 0..h {
            for x in 0..w {
                let i = (y * self.cells / h) * self.cells + x * self.cells / w;
                out[i] += image.get(x, y) as f64;
                counts[i] += 1;
            }
        }
        for (v, c) in out.iter_mut().zip(counts) {
            *v /= c.max(1) as f64;
        }
        out
    }
}

/// A denoiser that assumes the clean feature equals a stored per-prompt
/// template and inverts the forward process accordingly. It is exact (zero
/// error) when the image feature matches the template.
#[derive(Debug, Clone, Default)]
pub struct TemplateDenoiser {
    templates: HashMap<String, Vec<f64>>,
}

impl TemplateDenoiser {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prompt: impl Into<String>, feature: Vec<f64>) {
        self.templates.insert(prompt.into(), feature);
    }
}

impl Denoiser for TemplateDenoiser {
    fn predict_noise(
        &self,
        f_t: &[f64],
        _t: usize,
        alpha_bar: f64,
        prompt: &str,
    ) -> Result<Vec<f64>, MatchError> {
        let f0 = self
            .templates
            .get(prompt)
            .ok_or_else(|| MatchError::UnknownClass(prompt.to_string()))?;
        if f0.len() != f_t.len() {
            return Err(MatchError::DimensionMismatch(f0.len(), f_t.len()));
        }
        let (s, n) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt().max(1e-12));
        Ok(f_t.iter().zip(f0).map(|(ft, f)| (ft - s * f) / n).collect())
    }
}

/// In-process diffusion matcher built from an encoder and a denoiser.
pub struct DiffusionMatcher<E, D> {
    pub encoder: E,
    pub denoiser: D,
    pub schedule: NoiseSchedule,
    pub trials: usize,
}

impl<E: Encoder, D: Denoiser> DiffusionMatcher<E, D> {
    /// Every trial for one `(image, prompt)` pair.
    pub fn run_trials(
        &self,
        image: &GrayImage,
        prompt: &str,
        seed: u64,
    ) -> Result<Vec<DenoiseTrial>, MatchError> {
        if self.trials == 0 {
            return Err(MatchError::NoTrials);
        }
        let f0 = self.encoder.encode(image);
        sample_trials(&self.schedule, self.trials, f0.len(), seed)
            .into_iter()
            .map(|(t, eps)| {
                let alpha_bar = self.schedule.alpha_bar(t)?;
                let f_t = mix_with_noise(&f0, &eps, alpha_bar)?;
                let eps_hat = self.denoiser.predict_noise(&f_t, t, alpha_bar, prompt)?;
                DenoiseTrial::new(t, eps, eps_hat)
            })
            .collect()
    }
}

impl<E: Encoder, D: Denoiser> Matcher for DiffusionMatcher<E, D> {
    fn family(&self) -> ScoreFamily {
        ScoreFamily::Diffusion
    }

    fn evidence(
        &self,
        image: &GrayImage,
        style: ProjectionStyle,
        classes: &[String],
        seed: u64,
    ) -> Result<Vec<Evidence>, MatchError> {
        classes
            .iter()
            .map(|c| {
                let trials = self.run_trials(image, &build_prompt(style, c), seed)?;
                Ok(Evidence::SqErr(trials.iter().map(|t| t.sq_err).collect()))
            })
            .collect()
    }
}
