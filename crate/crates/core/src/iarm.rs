//! Iterative angle refinement for open-pose classification.
//!
//! The sample is first aligned to its principal axes so that the camera
//! starts on the smallest-variance axis looking at the widest silhouette.
//! Each class then climbs its own matching score with sign steps
//! `φ ← φ + η_r · sign(∂MS/∂φ)`, the gradient sign coming from a central
//! finite difference. Classes are compared at their refined angles.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_to_unit, GeometryError, Sample};
use crate::matching::{argmax, normalize_scores, pool_evidence, MatchError, MatchScore, Matcher};
use crate::pca::pca_align;
use crate::project::{
    project, CameraConfig, GrayImage, ProjectionError, ProjectionStyle, ViewAngles,
};

#[derive(Debug, Error)]
pub enum IarmError {
    #[error("invalid refinement config: {0}")]
    InvalidConfig(String),
    #[error("class set is empty")]
    EmptyClassSet,
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which angles the refinement may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    /// Elevation stays at its initial value; only the azimuth moves.
    AzimuthOnly,
    Full2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub rounds: usize,
    pub etas: Vec<f64>,
    /// Finite-difference probe in degrees.
    pub fd_step: f64,
    pub mode: RefineMode,
    pub initial: ViewAngles,
    /// Report the best angle seen on the trace instead of the last one.
    pub keep_best: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            etas: vec![20.0, 18.0, 16.0, 14.0, 12.0, 10.0, 8.0, 6.0, 4.0, 2.0],
            fd_step: 5.0,
            mode: RefineMode::AzimuthOnly,
            initial: ViewAngles::TOP,
            keep_best: true,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), IarmError> {
        if self.rounds < 1 {
            return Err(IarmError::InvalidConfig(
                "at least one round is required".into(),
            ));
        }
        if self.etas.len() != self.rounds {
            return Err(IarmError::InvalidConfig(format!(
                "{} step sizes for {} rounds",
                self.etas.len(),
                self.rounds
            )));
        }
        if self.etas.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(IarmError::InvalidConfig(
                "step sizes must be positive".into(),
            ));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(IarmError::InvalidConfig("fd_step must be positive".into()));
        }
        Ok(())
    }
}

/// Sign with `sign(0) = 0`.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn moved(phi: &ViewAngles, d1: f64, d2: f64) -> Result<ViewAngles, ProjectionError> {
    ViewAngles::new((phi.phi1 + d1).clamp(-90.0, 90.0), phi.phi2 + d2)
}

/// Per-dimension sign of `MS(φ + δe_i) - MS(φ - δe_i)`. Azimuth-only mode
/// returns one entry (azimuth); full mode returns (elevation, azimuth).
pub fn grad_sign<F>(
    score: &mut F,
    phi: &ViewAngles,
    mode: RefineMode,
    fd_step: f64,
) -> Result<Vec<f64>, IarmError>
where
    F: FnMut(&ViewAngles) -> Result<f64, IarmError>,
{
    let d = fd_step;
    let azimuth = sign(score(&moved(phi, 0.0, d)?)? - score(&moved(phi, 0.0, -d)?)?);
    match mode {
        RefineMode::AzimuthOnly => Ok(vec![azimuth]),
        RefineMode::Full2D => {
            let elevation = sign(score(&moved(phi, d, 0.0)?)? - score(&moved(phi, -d, 0.0)?)?);
            Ok(vec![elevation, azimuth])
        }
    }
}

/// One trace record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    pub phi: ViewAngles,
    pub score: f64,
}

/// Result of refining one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub phi: ViewAngles,
    pub score: f64,
    /// `rounds + 1` entries, the first being the initial angle.
    pub trace: Vec<TraceStep>,
}

/// Sign-gradient ascent of `score` from `cfg.initial`.
pub fn refine_angles<F>(mut score: F, cfg: &RefineConfig) -> Result<RefineOutcome, IarmError>
where
    F: FnMut(&ViewAngles) -> Result<f64, IarmError>,
{
    cfg.validate()?;
    let mut phi = ViewAngles::new(cfg.initial.phi1, cfg.initial.phi2)?;
    let mut trace = Vec::with_capacity(cfg.rounds + 1);
    trace.push(TraceStep {
        iteration: 0,
        phi,
        score: score(&phi)?,
    });
    for (r, eta) in cfg.etas.iter().enumerate() {
        let g = grad_sign(&mut score, &phi, cfg.mode, cfg.fd_step)?;
        phi = match cfg.mode {
            RefineMode::AzimuthOnly => moved(&phi, 0.0, eta * g[0])?,
            RefineMode::Full2D => moved(&phi, eta * g[0], eta * g[1])?,
        };
        trace.push(TraceStep {
            iteration: r + 1,
            phi,
            score: score(&phi)?,
        });
    }
    let chosen = if cfg.keep_best {
        // first maximum, so ties keep the earlier angle
        trace.iter().fold(
            &trace[0],
            |best, s| if s.score > best.score { s } else { best },
        )
    } else {
        trace.last().expect("non-empty trace")
    };
    Ok(RefineOutcome {
        phi: chosen.phi,
        score: chosen.score,
        trace,
    })
}

/// Memoized projections of one sample, shared by every class scorer.
#[derive(Debug, Default)]
pub struct ProjectionCache {
    images: Mutex<HashMap<(u64, u64, ProjectionStyle), Arc<GrayImage>>>,
}

impl ProjectionCache {
    pub fn get_or_project(
        &self,
        x: &Sample,
        phi: &ViewAngles,
        style: ProjectionStyle,
        camera: &CameraConfig,
    ) -> Result<Arc<GrayImage>, ProjectionError> {
        let key = (phi.phi1.to_bits(), phi.phi2.to_bits(), style);
        if let Some(img) = self.images.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(img));
        }
        let img = Arc::new(project(x, phi, style, camera)?);
        self.images
            .lock()
            .expect("cache lock")
            .insert(key, Arc::clone(&img));
        Ok(img)
    }
}

/// Scores one class of one sample at arbitrary angles, pooling all styles.
/// Every evaluation uses the same seed, so diffusion trials share their
/// noise draws across probes.
pub struct ClassScorer<'a> {
    pub sample: &'a Sample,
    pub class_name: &'a str,
    pub matcher: &'a dyn Matcher,
    pub styles: &'a [ProjectionStyle],
    pub camera: &'a CameraConfig,
    pub seed: u64,
    pub cache: Option<&'a ProjectionCache>,
}

impl ClassScorer<'_> {
    pub fn score(&self, phi: &ViewAngles) -> Result<MatchScore, IarmError> {
        if self.styles.is_empty() {
            return Err(IarmError::InvalidConfig("no projection styles".into()));
        }
        let class = [self.class_name.to_string()];
        let mut evidence = Vec::with_capacity(self.styles.len());
        for &style in self.styles {
            let img = match self.cache {
                Some(c) => c.get_or_project(self.sample, phi, style, self.camera)?,
                None => Arc::new(project(self.sample, phi, style, self.camera)?),
            };
            let mut ev = self.matcher.evidence(&img, style, &class, self.seed)?;
            if ev.len() != 1 {
                return Err(MatchError::ProtocolError(format!(
                    "expected 1 evidence item, got {}",
                    ev.len()
                ))
                .into());
            }
            evidence.push(ev.remove(0));
        }
        Ok(pool_evidence(&evidence)?)
    }
}

/// Per-class outcome inside a [`Prediction`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub class_name: String,
    pub phi: ViewAngles,
    pub score: f64,
    pub probability: f64,
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub predicted_class: String,
    pub predicted_index: usize,
    pub pca_degenerate: bool,
    pub classes: Vec<ClassResult>,
}

impl Prediction {
    /// Build from per-class outcomes, normalizing scores and breaking ties
    /// toward the lowest index.
    pub fn from_outcomes(
        classes: &[String],
        outcomes: Vec<RefineOutcome>,
        pca_degenerate: bool,
    ) -> Result<Self, IarmError> {
        if classes.is_empty() {
            return Err(IarmError::EmptyClassSet);
        }
        let scores = outcomes
            .iter()
            .map(|o| MatchScore::new(o.score))
            .collect::<Result<Vec<_>, _>>()?;
        let p = normalize_scores(&scores)?;
        let best = argmax(&p).expect("non-empty");
        let classes = classes
            .iter()
            .zip(outcomes)
            .zip(&p)
            .map(|((name, o), &probability)| ClassResult {
                class_name: name.clone(),
                phi: o.phi,
                score: o.score,
                probability,
                trace: o.trace,
            })
            .collect::<Vec<_>>();
        Ok(Self {
            predicted_class: classes[best].class_name.clone(),
            predicted_index: best,
            pca_degenerate,
            classes,
        })
    }
}

/// Full open-pose pipeline: normalize, align to principal axes, refine the
/// view for every class, then pick the class with the highest probability.
pub fn classify_openpose(
    x: &Sample,
    classes: &[String],
    matcher: &dyn Matcher,
    cfg: &RefineConfig,
    styles: &[ProjectionStyle],
    camera: &CameraConfig,
    seed: u64,
) -> Result<Prediction, IarmError> {
    if classes.is_empty() {
        return Err(IarmError::EmptyClassSet);
    }
    cfg.validate()?;
    let normalized = normalize_to_unit(x)?;
    let aligned = pca_align(&normalized)?;
    let cache = ProjectionCache::default();
    let outcomes = classes
        .par_iter()
        .map(|c| {
            let scorer = ClassScorer {
                sample: &aligned.aligned,
                class_name: c,
                matcher,
                styles,
                camera,
                seed,
                cache: Some(&cache),
            };
            refine_angles(|phi| Ok(scorer.score(phi)?.value()), cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Prediction::from_outcomes(classes, outcomes, aligned.pca_degenerate)
}
