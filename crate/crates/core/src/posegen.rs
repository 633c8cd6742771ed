//! Open-pose benchmark construction.
//!
//! Every source sample is rotated by a uniformly random rotation drawn from a
//! stream keyed on `(seed, index)`, so any single entry can be regenerated
//! without replaying the others. The manifest records everything needed to
//! rebuild the rotated tree bit-for-bit.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::geometry::{rotate, RotationQ, Sample};
use crate::io::{load_sample, save_sample, IoError, SampleFormat};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const MANIFEST_FORMAT: &str = "op3d-pose-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PosegenError {
    #[error("no samples found under {0}")]
    EmptyDataset(String),
    #[error("unreadable sample {path}: {source}")]
    UnreadableSample {
        path: String,
        #[source]
        source: IoError,
    },
    #[error("unknown dataset `{0}` (expected modelnet40, modelnet10 or mcgill)")]
    UnknownDataset(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: line {line}: {message}")]
    Manifest {
        path: String,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PosegenError + '_ {
    move |source| PosegenError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Uniform random rotation for sample `index` of a dataset seeded with `seed`.
///
/// Three uniform variates go through the standard unit-quaternion
/// construction, which is uniform (Haar) on SO(3).
pub fn sample_rotation(seed: u64, index: u64) -> RotationQ {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let tau = std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let (x, y) = ((tau * u2).sin() * a, (tau * u2).cos() * a);
    let (z, w) = ((tau * u3).sin() * b, (tau * u3).cos() * b);
    let n = (w * w + x * x + y * y + z * z).sqrt();
    RotationQ {
        w: w / n,
        x: x / n,
        y: y / n,
        z: z / n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub class_name: String,
    pub quaternion: RotationQ,
    /// Source path relative to the source root, `/`-separated.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestHeader {
    format: String,
    version: u32,
    dataset_name: String,
    seed: u64,
    count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseManifest {
    pub dataset_name: String,
    pub seed: u64,
    /// Sorted by `sample_id`.
    pub entries: Vec<ManifestEntry>,
}

impl PoseManifest {
    pub fn class_histogram(&self) -> BTreeMap<String, usize> {
        let mut h = BTreeMap::new();
        for e in &self.entries {
            *h.entry(e.class_name.clone()).or_insert(0) += 1;
        }
        h
    }

    pub fn to_jsonl(&self) -> String {
        let header = ManifestHeader {
            format: MANIFEST_FORMAT.to_string(),
            version: MANIFEST_VERSION,
            dataset_name: self.dataset_name.clone(),
            seed: self.seed,
            count: self.entries.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self, PosegenError> {
        let shown = path.display().to_string();
        let bad = |line: usize, message: String| PosegenError::Manifest {
            path: shown.clone(),
            line,
            message,
        };
        let file = fs::File::open(path).map_err(io_err(path))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let (_, first) = lines
            .next()
            .ok_or_else(|| bad(1, "empty manifest".into()))?;
        let first = first.map_err(io_err(path))?;
        let header: ManifestHeader =
            serde_json::from_str(&first).map_err(|e| bad(1, e.to_string()))?;
        if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
            return Err(bad(
                1,
                format!("unsupported format {} v{}", header.format, header.version),
            ));
        }
        let mut entries = Vec::with_capacity(header.count);
        let mut seen = HashSet::new();
        for (i, line) in lines {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: ManifestEntry =
                serde_json::from_str(&line).map_err(|err| bad(i + 1, err.to_string()))?;
            if !seen.insert(e.sample_id.clone()) {
                return Err(bad(i + 1, format!("duplicate sample_id {}", e.sample_id)));
            }
            entries.push(e);
        }
        if entries.len() != header.count {
            return Err(bad(
                1,
                format!(
                    "header count {} but {} entries",
                    header.count,
                    entries.len()
                ),
            ));
        }
        Ok(PoseManifest {
            dataset_name: header.dataset_name,
            seed: header.seed,
            entries,
        })
    }
}

struct SourceFile {
    rel: String,
    sample_id: String,
    class_name: String,
}

fn scan_source(source_dir: &Path) -> Result<Vec<SourceFile>, PosegenError> {
    let mut found = Vec::new();
    for entry in WalkDir::new(source_dir).sort_by_file_name() {
        let entry = entry.map_err(|e| PosegenError::Io {
            path: source_dir.display().to_string(),
            source: e.into(),
        })?;
        if !entry.file_type().is_file() || SampleFormat::from_path(entry.path()).is_none() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(source_dir)
            .expect("walkdir stays under root");
        let parts: Vec<String> = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect();
        if parts.len() < 2 {
            log::warn!("skipping {}: not inside a class directory", rel.display());
            continue;
        }
        let rel_str = parts.join("/");
        let sample_id = match rel_str.rfind('.') {
            Some(dot) => rel_str[..dot].to_string(),
            None => rel_str.clone(),
        };
        found.push(SourceFile {
            class_name: parts[0].clone(),
            rel: rel_str,
            sample_id,
        });
    }
    found.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    Ok(found)
}

/// Rebuild one rotated sample from its manifest entry.
pub fn regenerate_sample(source_dir: &Path, entry: &ManifestEntry) -> Result<Sample, PosegenError> {
    let path = source_dir.join(&entry.file);
    let unreadable = |source| PosegenError::UnreadableSample {
        path: path.display().to_string(),
        source,
    };
    let sample = load_sample(&path).map_err(unreadable)?;
    rotate(&sample, &entry.quaternion).map_err(|e| PosegenError::UnreadableSample {
        path: path.display().to_string(),
        source: IoError::Geometry {
            path: path.display().to_string(),
            source: e,
        },
    })
}

/// Rotate every class-labeled sample under `source_dir` into `out_dir`,
/// mirroring the source tree, and write `manifest.jsonl` beside them.
pub fn generate_openpose_dataset(
    source_dir: &Path,
    dataset_name: &str,
    seed: u64,
    out_dir: &Path,
) -> Result<PoseManifest, PosegenError> {
    let files = scan_source(source_dir)?;
    if files.is_empty() {
        return Err(PosegenError::EmptyDataset(source_dir.display().to_string()));
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let entries = files
        .par_iter()
        .enumerate()
        .map(|(index, f)| {
            let entry = ManifestEntry {
                sample_id: f.sample_id.clone(),
                class_name: f.class_name.clone(),
                quaternion: sample_rotation(seed, index as u64),
                file: f.rel.clone(),
            };
            let rotated = regenerate_sample(source_dir, &entry)?;
            let dst: PathBuf = out_dir.join(&f.rel);
            if let Some(parent) = dst.parent() {
                fs::create_dir_all(parent).map_err(io_err(parent))?;
            }
            let format = SampleFormat::from_path(&dst).expect("scanned files have a format");
            save_sample(&dst, &rotated, format).map_err(|source| {
                PosegenError::UnreadableSample {
                    path: dst.display().to_string(),
                    source,
                }
            })?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>, PosegenError>>()?;

    let manifest = PoseManifest {
        dataset_name: dataset_name.to_string(),
        seed,
        entries,
    };
    let mpath = out_dir.join(MANIFEST_FILE);
    let mut f = fs::File::create(&mpath).map_err(io_err(&mpath))?;
    f.write_all(manifest.to_jsonl().as_bytes())
        .map_err(io_err(&mpath))?;
    Ok(manifest)
}

/// Seen/unseen partition of a benchmark and its sample counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSplit {
    pub name: String,
    pub total_classes: usize,
    pub seen_classes: Vec<String>,
    pub unseen_classes: Vec<String>,
    /// Classes present in the raw dataset but dropped because they overlap
    /// with another benchmark's seen set.
    pub excluded_classes: Vec<String>,
    pub train: Option<usize>,
    pub valid: Option<usize>,
    pub test: Option<usize>,
}

const MODELNET10: [&str; 10] = [
    "bathtub",
    "bed",
    "chair",
    "desk",
    "dresser",
    "monitor",
    "night_stand",
    "sofa",
    "table",
    "toilet",
];

const MODELNET40_SEEN: [&str; 30] = [
    "airplane",
    "bench",
    "bookshelf",
    "bottle",
    "bowl",
    "car",
    "cone",
    "cup",
    "curtain",
    "door",
    "flower_pot",
    "glass_box",
    "guitar",
    "keyboard",
    "lamp",
    "laptop",
    "mantel",
    "person",
    "piano",
    "plant",
    "radio",
    "range_hood",
    "sink",
    "stairs",
    "stool",
    "tent",
    "tv_stand",
    "vase",
    "wardrobe",
    "xbox",
];

const MCGILL_UNSEEN: [&str; 14] = [
    "ant",
    "bird",
    "crab",
    "dinosaur",
    "dolphin",
    "fish",
    "hand",
    "octopus",
    "plier",
    "quadruped",
    "snake",
    "spectacle",
    "spider",
    "teddy",
];

const MCGILL_OVERLAP: [&str; 5] = ["airplane", "chair", "cup", "human", "table"];

fn owned(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn load_split(dataset_name: &str) -> Result<DatasetSplit, PosegenError> {
    let key = dataset_name
        .trim_end_matches('‡')
        .to_ascii_lowercase()
        .replace(['-', '_'], "");
    match key.as_str() {
        "modelnet40" => Ok(DatasetSplit {
            name: "modelnet40".into(),
            total_classes: 40,
            seen_classes: owned(&MODELNET40_SEEN),
            unseen_classes: Vec::new(),
            excluded_classes: owned(&MODELNET10),
            train: Some(5852),
            valid: Some(1560),
            test: None,
        }),
        "modelnet10" => Ok(DatasetSplit {
            name: "modelnet10".into(),
            total_classes: 10,
            seen_classes: Vec::new(),
            unseen_classes: owned(&MODELNET10),
            excluded_classes: Vec::new(),
            train: None,
            valid: None,
            test: Some(908),
        }),
        "mcgill" => Ok(DatasetSplit {
            name: "mcgill".into(),
            total_classes: 19,
            seen_classes: Vec::new(),
            unseen_classes: owned(&MCGILL_UNSEEN),
            excluded_classes: owned(&MCGILL_OVERLAP),
            train: None,
            valid: None,
            test: Some(115),
        }),
        _ => Err(PosegenError::UnknownDataset(dataset_name.to_string())),
    }
}
