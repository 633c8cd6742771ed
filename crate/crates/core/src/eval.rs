//! Accuracy metrics, fixed-view and refined-view baselines, and reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_to_unit, GeometryError, Sample};
use crate::iarm::{classify_openpose, IarmError, RefineConfig};
use crate::io::{load_sample, IoError};
use crate::matching::{
    argmax, normalize_scores, pool_evidence, Evidence, MatchError, MatchScore, Matcher,
};
use crate::posegen::{ManifestEntry, PoseManifest};
use crate::project::{
    fixed_view_sets, project, CameraConfig, ProjectionError, ProjectionStyle, ViewAngles, ViewSet,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no predictions to evaluate")]
    EmptyPredictions,
    #[error("class {0:?} has no samples")]
    ClassWithNoSamples(String),
    #[error("class {class:?} has styles {found:?}, expected {expected:?}")]
    StyleSetMismatch {
        class: String,
        expected: Vec<ProjectionStyle>,
        found: Vec<ProjectionStyle>,
    },
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {message}")]
    Log { path: String, message: String },
    #[error(transparent)]
    Iarm(#[from] IarmError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub sample_id: String,
    pub true_class: String,
    pub predicted_class: String,
}

/// Percentages in [0, 100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Correct predictions over all samples.
    pub acc: f64,
    /// Unweighted mean of the per-class accuracies.
    pub macc: f64,
    pub per_class: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, usize>,
}

/// Metrics over the classes that occur as true labels.
pub fn compute_metrics(preds: &[LabeledPrediction]) -> Result<MetricsReport, EvalError> {
    let classes: BTreeSet<&str> = preds.iter().map(|p| p.true_class.as_str()).collect();
    let classes: Vec<String> = classes.into_iter().map(String::from).collect();
    compute_metrics_for(preds, &classes)
}

/// Metrics over an explicit class list; every listed class needs a sample.
pub fn compute_metrics_for(
    preds: &[LabeledPrediction],
    classes: &[String],
) -> Result<MetricsReport, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::EmptyPredictions);
    }
    let mut counts: BTreeMap<String, usize> = classes.iter().map(|c| (c.clone(), 0)).collect();
    let mut correct: BTreeMap<String, usize> = counts.clone();
    for p in preds {
        *counts.entry(p.true_class.clone()).or_insert(0) += 1;
        let hit = (p.true_class == p.predicted_class) as usize;
        *correct.entry(p.true_class.clone()).or_insert(0) += hit;
    }
    let mut per_class = BTreeMap::new();
    for (c, &n) in &counts {
        if n == 0 {
            return Err(EvalError::ClassWithNoSamples(c.clone()));
        }
        per_class.insert(c.clone(), 100.0 * correct[c] as f64 / n as f64);
    }
    let total_correct: usize = correct.values().sum();
    Ok(MetricsReport {
        acc: 100.0 * total_correct as f64 / preds.len() as f64,
        macc: per_class.values().sum::<f64>() / per_class.len() as f64,
        per_class,
        counts,
    })
}

/// Combine per-style evidence into one score per class. Every class must
/// carry the same set of styles.
pub fn ensemble_styles(
    per_class: &BTreeMap<String, BTreeMap<ProjectionStyle, Evidence>>,
) -> Result<BTreeMap<String, MatchScore>, EvalError> {
    let mut expected: Option<Vec<ProjectionStyle>> = None;
    let mut out = BTreeMap::new();
    for (class, styles) in per_class {
        let found: Vec<ProjectionStyle> = styles.keys().copied().collect();
        if found.is_empty() {
            return Err(EvalError::StyleSetMismatch {
                class: class.clone(),
                expected: expected.clone().unwrap_or_default(),
                found,
            });
        }
        match &expected {
            None => expected = Some(found),
            Some(e) if *e != found => {
                return Err(EvalError::StyleSetMismatch {
                    class: class.clone(),
                    expected: e.clone(),
                    found,
                })
            }
            Some(_) => {}
        }
        let items: Vec<Evidence> = styles.values().cloned().collect();
        out.insert(class.clone(), pool_evidence(&items)?);
    }
    Ok(out)
}

/// How views are chosen for each sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    Fixed(ViewSet),
    Iarm,
}

impl ViewKind {
    /// `single`, `cube`, `circular` (12 views at 30°) or `iarm`.
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "single" | "top" => Some(ViewKind::Fixed(ViewSet::Single)),
            "cube" => Some(ViewKind::Fixed(ViewSet::Cube)),
            "circular" => Some(ViewKind::Fixed(ViewSet::Circular {
                n_views: 12,
                phi1: 30.0,
            })),
            "iarm" => Some(ViewKind::Iarm),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ViewKind::Fixed(ViewSet::Single) => "single",
            ViewKind::Fixed(ViewSet::Cube) => "cube",
            ViewKind::Fixed(ViewSet::Circular { .. }) => "circular",
            ViewKind::Iarm => "iarm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub views: ViewKind,
    pub styles: Vec<ProjectionStyle>,
    pub camera: CameraConfig,
    pub refine: RefineConfig,
    pub seed: u64,
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            views: ViewKind::Iarm,
            styles: vec![ProjectionStyle::Depth],
            camera: CameraConfig::default(),
            refine: RefineConfig::default(),
            seed: crate::matching::DEFAULT_SEED,
            jobs: 0,
        }
    }
}

/// One line of the per-sample log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub true_class: String,
    pub predicted_class: String,
    pub scores: BTreeMap<String, f64>,
    pub probabilities: BTreeMap<String, f64>,
    /// Refined angle per class (refined views) or the shared view set
    /// (fixed views) under the key `*`.
    pub angles: BTreeMap<String, Vec<ViewAngles>>,
}

impl SampleRecord {
    pub fn labeled(&self) -> LabeledPrediction {
        LabeledPrediction {
            sample_id: self.sample_id.clone(),
            true_class: self.true_class.clone(),
            predicted_class: self.predicted_class.clone(),
        }
    }
}

/// Class scores of one sample averaged over a fixed view set.
pub fn score_fixed_views(
    x: &Sample,
    classes: &[String],
    matcher: &dyn Matcher,
    views: &[ViewAngles],
    styles: &[ProjectionStyle],
    camera: &CameraConfig,
    seed: u64,
) -> Result<Vec<MatchScore>, EvalError> {
    if views.is_empty() || styles.is_empty() {
        return Err(EvalError::InvalidConfig(
            "need at least one view and one style".into(),
        ));
    }
    let mut sums = vec![0.0; classes.len()];
    for v in views {
        let mut per_class: Vec<Vec<Evidence>> =
            vec![Vec::with_capacity(styles.len()); classes.len()];
        for &style in styles {
            let img = project(x, v, style, camera)?;
            let ev = matcher.evidence(&img, style, classes, seed)?;
            if ev.len() != classes.len() {
                return Err(MatchError::ProtocolError(format!(
                    "{} evidence items for {} classes",
                    ev.len(),
                    classes.len()
                ))
                .into());
            }
            for (slot, e) in per_class.iter_mut().zip(ev) {
                slot.push(e);
            }
        }
        for (sum, items) in sums.iter_mut().zip(&per_class) {
            *sum += pool_evidence(items)?.value();
        }
    }
    sums.into_iter()
        .map(|s| Ok(MatchScore::new(s / views.len() as f64)?))
        .collect()
}

fn classify_entry(
    dataset_dir: &Path,
    entry: &ManifestEntry,
    classes: &[String],
    matcher: &dyn Matcher,
    cfg: &BaselineConfig,
) -> Result<SampleRecord, EvalError> {
    let sample = load_sample(&dataset_dir.join(&entry.file))?;
    let (scores, angles): (Vec<f64>, BTreeMap<String, Vec<ViewAngles>>) = match cfg.views {
        ViewKind::Fixed(set) => {
            let views = fixed_view_sets(&set)?;
            let x = normalize_to_unit(&sample)?;
            let s = score_fixed_views(
                &x,
                classes,
                matcher,
                &views,
                &cfg.styles,
                &cfg.camera,
                cfg.seed,
            )?;
            let mut angles = BTreeMap::new();
            angles.insert("*".to_string(), views);
            (s.into_iter().map(MatchScore::value).collect(), angles)
        }
        ViewKind::Iarm => {
            let p = classify_openpose(
                &sample,
                classes,
                matcher,
                &cfg.refine,
                &cfg.styles,
                &cfg.camera,
                cfg.seed,
            )?;
            let angles = p
                .classes
                .iter()
                .map(|c| (c.class_name.clone(), vec![c.phi]))
                .collect();
            (p.classes.iter().map(|c| c.score).collect(), angles)
        }
    };
    let ms = scores
        .iter()
        .map(|&s| MatchScore::new(s))
        .collect::<Result<Vec<_>, _>>()?;
    let probs = normalize_scores(&ms)?;
    let best = argmax(&probs).expect("non-empty class list");
    Ok(SampleRecord {
        sample_id: entry.sample_id.clone(),
        true_class: entry.class_name.clone(),
        predicted_class: classes[best].clone(),
        scores: classes.iter().cloned().zip(scores).collect(),
        probabilities: classes.iter().cloned().zip(probs).collect(),
        angles,
    })
}

/// Classify every manifest entry (files read from `dataset_dir`) and score
/// the predictions. Records come back in manifest order whatever the job
/// count.
pub fn run_baseline(
    dataset_dir: &Path,
    manifest: &PoseManifest,
    classes: &[String],
    matcher: &dyn Matcher,
    cfg: &BaselineConfig,
) -> Result<(MetricsReport, Vec<SampleRecord>), EvalError> {
    if manifest.entries.is_empty() {
        return Err(EvalError::EmptyPredictions);
    }
    if classes.is_empty() {
        return Err(MatchError::EmptyClassSet.into());
    }
    let work = || {
        manifest
            .entries
            .par_iter()
            .map(|e| classify_entry(dataset_dir, e, classes, matcher, cfg))
            .collect::<Result<Vec<_>, _>>()
    };
    let records = if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| EvalError::InvalidConfig(e.to_string()))?
            .install(work)?
    } else {
        work()?
    };
    let preds: Vec<LabeledPrediction> = records.iter().map(SampleRecord::labeled).collect();
    Ok((compute_metrics(&preds)?, records))
}

const LOG_FORMAT: &str = "op3d-eval-log";

#[derive(Debug, Serialize, Deserialize)]
struct LogHeader<C> {
    format: String,
    version: u32,
    config: C,
}

/// Line-delimited log: a header echoing `config`, then one record per line.
pub fn format_log<C: Serialize>(config: &C, records: &[SampleRecord]) -> String {
    let header = LogHeader {
        format: LOG_FORMAT.to_string(),
        version: 1,
        config,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_log<C: Serialize>(
    path: &Path,
    config: &C,
    records: &[SampleRecord],
) -> Result<(), EvalError> {
    let err = |e: std::io::Error| EvalError::Log {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut f = fs::File::create(path).map_err(err)?;
    f.write_all(format_log(config, records).as_bytes())
        .map_err(err)
}

/// Records of a log written by [`write_log`].
pub fn read_log(path: &Path) -> Result<Vec<SampleRecord>, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::Log {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let bad = |line: usize, message: String| EvalError::Log {
        path: format!("{}:{line}", path.display()),
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| bad(1, "empty log".into()))?;
    let header: LogHeader<serde_json::Value> =
        serde_json::from_str(first).map_err(|e| bad(1, e.to_string()))?;
    if header.format != LOG_FORMAT {
        return Err(bad(1, format!("unexpected format {:?}", header.format)));
    }
    lines
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| bad(i + 1, e.to_string())))
        .collect()
}

/// Markdown table with one row per method: per-class accuracies, then Acc
/// and mAcc, all to one decimal.
pub fn render_table(rows: &[(String, MetricsReport)]) -> String {
    let mut classes: BTreeSet<&str> = BTreeSet::new();
    for (_, r) in rows {
        classes.extend(r.per_class.keys().map(String::as_str));
    }
    let mut out = String::from("| Method |");
    for c in &classes {
        let _ = write!(out, " {c} |");
    }
    out.push_str(" Acc | mAcc |\n|---|");
    for _ in 0..classes.len() + 2 {
        out.push_str("---:|");
    }
    out.push('\n');
    for (name, r) in rows {
        let _ = write!(out, "| {name} |");
        for c in &classes {
            match r.per_class.get(*c) {
                Some(v) => {
                    let _ = write!(out, " {v:.1} |");
                }
                None => out.push_str(" - |"),
            }
        }
        let _ = writeln!(out, " {:.1} | {:.1} |", r.acc, r.macc);
    }
    out
}

/// Full report for one run: table, sample counts and a summary footer.
pub fn render_report(title: &str, method: &str, report: &MetricsReport) -> String {
    let mut out = format!("# {title}\n\n");
    out.push_str(&render_table(&[(method.to_string(), report.clone())]));
    out.push_str("\n| Class | Samples |\n|---|---:|\n");
    for (c, n) in &report.counts {
        let _ = writeln!(out, "| {c} | {n} |");
    }
    let total: usize = report.counts.values().sum();
    let _ = writeln!(
        out,
        "\nSamples: {total}. Acc: {:.1}. mAcc: {:.1}.",
        report.acc, report.macc
    );
    out
}
