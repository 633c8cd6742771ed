//! Deterministic reference matcher backed by a bank of stored silhouettes.
//!
//! A class/style entry holds projections of a canonical sample from a ring
//! of cameras. An image scores `exp(-(1 - IoU))` against the best-matching
//! stored view, with both sides binarized at `> 0`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Evidence, MatchError, MatchScore, Matcher, ScoreFamily};
use crate::geometry::{normalize_to_unit, Sample};
use crate::project::{
    fixed_view_sets, mask_iou, project, CameraConfig, GrayImage, ProjectionStyle, ViewAngles,
    ViewSet,
};

const INDEX_FILE: &str = "index.json";
const BANK_FORMAT: &str = "op3d-template-bank";

/// Camera ring used for the stored views.
pub const BANK_RING: ViewSet = ViewSet::Circular {
    n_views: 12,
    phi1: 30.0,
};

/// Stored views of one class in one style.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateEntry {
    pub class_name: String,
    pub style: ProjectionStyle,
    pub views: Vec<ViewAngles>,
    pub images: Vec<GrayImage>,
    masks: Vec<Vec<bool>>,
}

impl TemplateEntry {
    pub fn new(
        class_name: impl Into<String>,
        style: ProjectionStyle,
        views: Vec<ViewAngles>,
        images: Vec<GrayImage>,
    ) -> Self {
        let masks = images.iter().map(|i| i.mask(0.0)).collect();
        Self {
            class_name: class_name.into(),
            style,
            views,
            images,
            masks,
        }
    }

    /// Largest IoU between the binarized image and any stored view.
    pub fn best_iou(&self, image: &GrayImage) -> Result<f64, MatchError> {
        if self.masks.is_empty() {
            return Err(MatchError::EmptyTemplateBank);
        }
        let probe = image.mask(0.0);
        let mut best = 0.0f64;
        for m in &self.masks {
            if m.len() != probe.len() {
                return Err(MatchError::DimensionMismatch(m.len(), probe.len()));
            }
            best = best.max(mask_iou(&probe, m));
        }
        Ok(best)
    }
}

/// `exp(-(1 - max IoU))` over the entry's stored views.
pub fn reference_similarity(
    image: &GrayImage,
    entry: &TemplateEntry,
) -> Result<MatchScore, MatchError> {
    Ok(MatchScore::from_exponent(1.0 - entry.best_iou(image)?))
}

#[derive(Debug, Serialize, Deserialize)]
struct BankIndex {
    format: String,
    version: u32,
    camera: CameraConfig,
    entries: Vec<IndexEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    class_name: String,
    style: ProjectionStyle,
    views: Vec<IndexView>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexView {
    phi1: f64,
    phi2: f64,
    file: String,
}

/// Read-only collection of template entries, sorted by (class, style).
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateBank {
    camera: CameraConfig,
    entries: Vec<TemplateEntry>,
}

impl TemplateBank {
    pub fn from_entries(
        camera: CameraConfig,
        mut entries: Vec<TemplateEntry>,
    ) -> Result<Self, MatchError> {
        if entries.is_empty() {
            return Err(MatchError::EmptyTemplateBank);
        }
        entries.sort_by(|a, b| (&a.class_name, a.style).cmp(&(&b.class_name, b.style)));
        Ok(Self { camera, entries })
    }

    /// Project every canonical sample from the bank ring in every style.
    pub fn build(
        canonical: &[(String, Sample)],
        styles: &[ProjectionStyle],
        camera: &CameraConfig,
    ) -> Result<Self, MatchError> {
        let views = fixed_view_sets(&BANK_RING)?;
        let mut entries = Vec::new();
        for (class_name, sample) in canonical {
            let x = normalize_to_unit(sample).map_err(|e| MatchError::Bank {
                path: class_name.clone(),
                message: e.to_string(),
            })?;
            for &style in styles {
                let images = views
                    .iter()
                    .map(|v| project(&x, v, style, camera))
                    .collect::<Result<Vec<_>, _>>()?;
                entries.push(TemplateEntry::new(
                    class_name.clone(),
                    style,
                    views.clone(),
                    images,
                ));
            }
        }
        Self::from_entries(*camera, entries)
    }

    pub fn camera(&self) -> &CameraConfig {
        &self.camera
    }

    pub fn entries(&self) -> &[TemplateEntry] {
        &self.entries
    }

    pub fn entry(&self, class_name: &str, style: ProjectionStyle) -> Option<&TemplateEntry> {
        self.entries
            .iter()
            .find(|e| e.class_name == class_name && e.style == style)
    }

    /// Class names in sorted order, without duplicates.
    pub fn classes(&self) -> Vec<String> {
        let mut names: Vec<String> = self.entries.iter().map(|e| e.class_name.clone()).collect();
        names.dedup();
        names
    }

    pub fn styles_of(&self, class_name: &str) -> Vec<ProjectionStyle> {
        self.entries
            .iter()
            .filter(|e| e.class_name == class_name)
            .map(|e| e.style)
            .collect()
    }

    /// Write one PNG per stored view plus `index.json`.
    pub fn save(&self, dir: &Path) -> Result<(), MatchError> {
        let bank_err = |message: String| MatchError::Bank {
            path: dir.display().to_string(),
            message,
        };
        fs::create_dir_all(dir).map_err(|e| bank_err(e.to_string()))?;
        let mut index = BankIndex {
            format: BANK_FORMAT.into(),
            version: 1,
            camera: self.camera,
            entries: Vec::new(),
        };
        for (n, e) in self.entries.iter().enumerate() {
            let mut views = Vec::new();
            for (i, (v, img)) in e.views.iter().zip(&e.images).enumerate() {
                let file = format!("e{n:03}_{}_{i:02}.png", e.style);
                img.save_png(&dir.join(&file))?;
                views.push(IndexView {
                    phi1: v.phi1,
                    phi2: v.phi2,
                    file,
                });
            }
            index.entries.push(IndexEntry {
                class_name: e.class_name.clone(),
                style: e.style,
                views,
            });
        }
        let text = serde_json::to_string_pretty(&index).map_err(|e| bank_err(e.to_string()))?;
        fs::write(dir.join(INDEX_FILE), text + "\n").map_err(|e| bank_err(e.to_string()))
    }

    pub fn load(dir: &Path) -> Result<Self, MatchError> {
        let path = dir.join(INDEX_FILE);
        let bank_err = |message: String| MatchError::Bank {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(&path).map_err(|e| bank_err(e.to_string()))?;
        let index: BankIndex = serde_json::from_str(&text).map_err(|e| bank_err(e.to_string()))?;
        if index.format != BANK_FORMAT || index.version != 1 {
            return Err(bank_err(format!(
                "unsupported bank format {} v{}",
                index.format, index.version
            )));
        }
        let mut entries = Vec::new();
        for e in index.entries {
            let mut views = Vec::new();
            let mut images = Vec::new();
            for v in e.views {
                views.push(ViewAngles::new(v.phi1, v.phi2)?);
                images.push(GrayImage::load_png(&dir.join(&v.file))?);
            }
            entries.push(TemplateEntry::new(e.class_name, e.style, views, images));
        }
        Self::from_entries(index.camera, entries)
    }
}

/// Reference matcher over a template bank.
#[derive(Debug, Clone)]
pub struct ReferenceMatcher {
    bank: TemplateBank,
}

impl ReferenceMatcher {
    pub fn new(bank: TemplateBank) -> Self {
        Self { bank }
    }

    pub fn bank(&self) -> &TemplateBank {
        &self.bank
    }
}

impl Matcher for ReferenceMatcher {
    fn family(&self) -> ScoreFamily {
        ScoreFamily::Direct
    }

    fn evidence(
        &self,
        image: &GrayImage,
        style: ProjectionStyle,
        classes: &[String],
        _seed: u64,
    ) -> Result<Vec<Evidence>, MatchError> {
        classes
            .iter()
            .map(|c| {
                let entry = self
                    .bank
                    .entry(c, style)
                    .ok_or_else(|| MatchError::UnknownClass(format!("{c} ({style})")))?;
                Ok(Evidence::Score(reference_similarity(image, entry)?))
            })
            .collect()
    }
}
