//! Effective configuration: flags over config file over defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use op3d_core::eval::ViewKind;
use op3d_core::iarm::RefineConfig;
use op3d_core::io::load_sample;
use op3d_core::matching::{
    ExternalConfig, ExternalMatcher, ExternalMode, MatcherHandle, ReferenceMatcher, TemplateBank,
    DEFAULT_SEED, DEFAULT_TRIALS, MATCHER_ENV,
};
use op3d_core::project::{CameraConfig, ProjectionStyle};
use serde::{Deserialize, Serialize};

use crate::args::{MatcherKind, ModeArg, ScoringArgs};

/// Bad flag values. Mapped to exit code 1 like parse errors.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    matcher: Option<String>,
    bank: Option<PathBuf>,
    endpoint: Option<String>,
    mode: Option<String>,
    trials: Option<u32>,
    timeout: Option<f64>,
    views: Option<String>,
    styles: Option<String>,
    rounds: Option<usize>,
    etas: Option<Vec<f64>>,
    fd: Option<f64>,
    keep_best: Option<bool>,
    seed: Option<u64>,
    rp: Option<f64>,
    size: Option<usize>,
}

/// One entry of a class list file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSpec {
    pub name: String,
    pub canonical: Option<PathBuf>,
}

pub fn read_classes(path: &Path) -> Result<Vec<ClassSpec>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out: Vec<ClassSpec> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let name = parts.next().expect("non-empty line").to_string();
        let canonical = parts.next().map(|p| base.join(p));
        if parts.next().is_some() {
            return Err(usage(format!(
                "{}:{}: expected `name [path]`",
                path.display(),
                i + 1
            )));
        }
        if out.iter().any(|c| c.name == name) {
            return Err(usage(format!(
                "{}:{}: duplicate class {name}",
                path.display(),
                i + 1
            )));
        }
        out.push(ClassSpec { name, canonical });
    }
    if out.is_empty() {
        return Err(usage(format!("{}: no classes", path.display())));
    }
    Ok(out)
}

pub fn parse_styles(s: &str) -> Result<Vec<ProjectionStyle>> {
    let mut styles = Vec::new();
    for part in s.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
        let style: ProjectionStyle = part.parse().map_err(usage)?;
        if !styles.contains(&style) {
            styles.push(style);
        }
    }
    if styles.is_empty() {
        return Err(usage("at least one projection style is required"));
    }
    Ok(styles)
}

pub fn parse_views(s: &str) -> Result<ViewKind> {
    ViewKind::parse(s.trim()).ok_or_else(|| {
        usage(format!(
            "unknown view kind `{s}` (iarm, single, cube, circular)"
        ))
    })
}

fn parse_etas(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("bad step size `{p}`")))
        })
        .collect()
}

/// `[2R, 2R-2, ..., 2]`, which is the default schedule for R = 10.
pub fn linear_etas(rounds: usize) -> Vec<f64> {
    (0..rounds).map(|i| 2.0 * (rounds - i) as f64).collect()
}

/// Fully resolved scoring settings, echoed into every log header.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub matcher: &'static str,
    pub bank: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub mode: ExternalMode,
    pub trials: u32,
    pub timeout_s: f64,
    pub views: ViewKind,
    pub styles: Vec<ProjectionStyle>,
    pub refine: RefineConfig,
    pub seed: u64,
    pub camera: CameraConfig,
    pub classes: Vec<ClassSpec>,
}

impl RunConfig {
    pub fn resolve(a: &ScoringArgs) -> Result<Self> {
        let file: FileConfig = match &a.config {
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        let matcher = match (a.matcher, file.matcher.as_deref()) {
            (Some(MatcherKind::Ref), _) | (None, None | Some("ref")) => "ref",
            (Some(MatcherKind::Extern), _) | (None, Some("extern")) => "extern",
            (None, Some(other)) => return Err(usage(format!("unknown matcher `{other}`"))),
        };
        let mode = match (a.mode, file.mode.as_deref()) {
            (Some(ModeArg::Diffusion), _) | (None, None | Some("diffusion")) => {
                ExternalMode::Diffusion
            }
            (Some(ModeArg::Similarity), _) | (None, Some("similarity")) => ExternalMode::Similarity,
            (None, Some(other)) => return Err(usage(format!("unknown mode `{other}`"))),
        };
        let views = parse_views(
            a.views
                .as_deref()
                .or(file.views.as_deref())
                .unwrap_or("iarm"),
        )?;
        let styles = parse_styles(
            a.styles
                .as_deref()
                .or(file.styles.as_deref())
                .unwrap_or("depth"),
        )?;
        let etas = match (&a.etas, file.etas) {
            (Some(s), _) => Some(parse_etas(s)?),
            (None, e) => e,
        };
        let rounds = a.rounds.or(file.rounds);
        let defaults = RefineConfig::default();
        let (rounds, etas) = match (rounds, etas) {
            (Some(r), Some(e)) => (r, e),
            (Some(r), None) => (r, linear_etas(r)),
            (None, Some(e)) => (e.len(), e),
            (None, None) => (defaults.rounds, defaults.etas.clone()),
        };
        let refine = RefineConfig {
            rounds,
            etas,
            fd_step: a.fd.or(file.fd).unwrap_or(defaults.fd_step),
            keep_best: if a.last_iterate {
                false
            } else {
                file.keep_best.unwrap_or(true)
            },
            ..defaults
        };
        refine.validate().map_err(|e| usage(e.to_string()))?;
        let camera = CameraConfig {
            r_p: a.rp.or(file.rp).unwrap_or(2.2),
            image_px: a.size.or(file.size).unwrap_or(224),
            ..CameraConfig::default()
        };
        camera.validate().map_err(|e| usage(e.to_string()))?;
        let trials = a.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS as u32);
        if trials == 0 {
            return Err(usage("--trials must be at least 1"));
        }
        let timeout_s = a.timeout.or(file.timeout).unwrap_or(30.0);
        if !(timeout_s > 0.0) {
            return Err(usage("--timeout must be positive"));
        }
        Ok(Self {
            matcher,
            bank: a.bank.clone().or(file.bank),
            endpoint: a.endpoint.clone().or(file.endpoint),
            mode,
            trials,
            timeout_s,
            views,
            styles,
            refine,
            seed: a.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            camera,
            classes: read_classes(&a.classes)?,
        })
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn build_matcher(&self) -> Result<MatcherHandle> {
        if self.matcher == "ref" {
            let bank = match &self.bank {
                Some(dir) => TemplateBank::load(dir)?,
                None => {
                    let mut canonical = Vec::new();
                    for c in &self.classes {
                        let path = c.canonical.as_ref().ok_or_else(|| {
                            usage(format!(
                                "class {} has no canonical sample and no --bank was given",
                                c.name
                            ))
                        })?;
                        canonical.push((c.name.clone(), load_sample(path)?));
                    }
                    TemplateBank::build(&canonical, &self.styles, &self.camera)?
                }
            };
            return Ok(MatcherHandle::Reference(Arc::new(ReferenceMatcher::new(
                bank,
            ))));
        }
        let spec = match &self.endpoint {
            Some(s) => s.clone(),
            None => std::env::var(MATCHER_ENV).map_err(|_| {
                usage(format!(
                    "--matcher extern needs --endpoint or {MATCHER_ENV}"
                ))
            })?,
        };
        let cfg = ExternalConfig {
            mode: self.mode,
            trials: self.trials,
            handshake_timeout: Duration::from_secs_f64(self.timeout_s),
            ..ExternalConfig::default()
        };
        Ok(MatcherHandle::External(Arc::new(ExternalMatcher::connect(
            &spec, cfg,
        )?)))
    }
}
