//! Readers and writers for ASCII OFF meshes and XYZ point clouds.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::geometry::{GeometryError, PointCloud, Sample, TriMesh, Vec3};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Geometry {
        path: String,
        #[source]
        source: GeometryError,
    },
    #[error("{path}: unsupported sample format (expected .off or .xyz)")]
    UnsupportedFormat { path: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// File formats a sample can be stored in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Off,
    Xyz,
}

impl SampleFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "off" => Some(SampleFormat::Off),
            "xyz" | "txt" | "pts" => Some(SampleFormat::Xyz),
            _ => None,
        }
    }
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, path: &str, line: usize) -> Result<f64, IoError> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("invalid number `{tok}`")))
}

fn parse_usize(tok: &str, path: &str, line: usize) -> Result<usize, IoError> {
    tok.parse::<usize>()
        .map_err(|_| parse_err(path, line, format!("invalid count or index `{tok}`")))
}

/// Non-empty, comment-stripped lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

/// Parse an ASCII OFF file. Polygonal faces are fan-triangulated; a file
/// without faces yields a point cloud.
pub fn parse_off(text: &str, path: &str) -> Result<Sample, IoError> {
    let mut lines = content_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| parse_err(path, hline, "missing OFF header"))?
        .trim();
    // Some archives glue the counts onto the header line ("OFF490 518 0").
    let (cline, counts) = if rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| parse_err(path, hline, "missing vertex/face counts"))?
    } else {
        (hline, rest)
    };
    let toks: Vec<&str> = counts.split_whitespace().collect();
    if toks.len() < 2 {
        return Err(parse_err(path, cline, "expected `nverts nfaces [nedges]`"));
    }
    let nverts = parse_usize(toks[0], path, cline)?;
    let nfaces = parse_usize(toks[1], path, cline)?;

    let mut vertices = Vec::with_capacity(nverts);
    for _ in 0..nverts {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, cline, "unexpected end of file in vertex block"))?;
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() < 3 {
            return Err(parse_err(path, ln, "vertex needs 3 coordinates"));
        }
        vertices.push(Vec3::new(
            parse_f64(t[0], path, ln)?,
            parse_f64(t[1], path, ln)?,
            parse_f64(t[2], path, ln)?,
        ));
    }

    let mut faces = Vec::with_capacity(nfaces);
    for _ in 0..nfaces {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, cline, "unexpected end of file in face block"))?;
        let t: Vec<&str> = l.split_whitespace().collect();
        let n = parse_usize(t[0], path, ln)?;
        if n < 3 || t.len() < n + 1 {
            return Err(parse_err(path, ln, "face needs at least 3 vertex indices"));
        }
        let idx = t[1..=n]
            .iter()
            .map(|s| parse_usize(s, path, ln))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= nverts) {
            return Err(parse_err(
                path,
                ln,
                format!("vertex index {bad} out of range ({nverts} vertices)"),
            ));
        }
        for k in 1..n - 1 {
            faces.push([idx[0], idx[k], idx[k + 1]]);
        }
    }

    let geo = |source| IoError::Geometry {
        path: path.to_string(),
        source,
    };
    if faces.is_empty() {
        Ok(Sample::Cloud(PointCloud::new(vertices).map_err(geo)?))
    } else {
        Ok(Sample::Mesh(TriMesh::new(vertices, faces).map_err(geo)?))
    }
}

/// Parse whitespace-separated `x y z` lines. Extra columns are ignored.
pub fn parse_xyz(text: &str, path: &str) -> Result<PointCloud, IoError> {
    let mut points = Vec::new();
    for (ln, l) in content_lines(text) {
        let t: Vec<&str> = l
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if t.len() < 3 {
            return Err(parse_err(path, ln, "expected `x y z`"));
        }
        points.push(Vec3::new(
            parse_f64(t[0], path, ln)?,
            parse_f64(t[1], path, ln)?,
            parse_f64(t[2], path, ln)?,
        ));
    }
    PointCloud::new(points).map_err(|source| IoError::Geometry {
        path: path.to_string(),
        source,
    })
}

pub fn load_sample(path: &Path) -> Result<Sample, IoError> {
    let shown = path.display().to_string();
    let format = SampleFormat::from_path(path).ok_or_else(|| IoError::UnsupportedFormat {
        path: shown.clone(),
    })?;
    let text = fs::read_to_string(path).map_err(|source| IoError::Io {
        path: shown.clone(),
        source,
    })?;
    match format {
        SampleFormat::Off => parse_off(&text, &shown),
        SampleFormat::Xyz => parse_xyz(&text, &shown).map(Sample::Cloud),
    }
}

pub fn format_off(mesh: &TriMesh) -> String {
    let mut s = String::new();
    s.push_str("OFF\n");
    let _ = writeln!(s, "{} {} 0", mesh.vertices().len(), mesh.faces().len());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

pub fn format_xyz(cloud: &PointCloud) -> String {
    let mut s = String::new();
    for p in cloud.points() {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

/// Write `sample` in the given format. Meshes written as XYZ keep only
/// their vertices; clouds written as OFF get a face-less OFF file.
pub fn save_sample(path: &Path, sample: &Sample, format: SampleFormat) -> Result<(), IoError> {
    let text = match (sample, format) {
        (Sample::Mesh(m), SampleFormat::Off) => format_off(m),
        (Sample::Mesh(m), SampleFormat::Xyz) => format_xyz(&m.vertex_cloud()),
        (Sample::Cloud(c), SampleFormat::Xyz) => format_xyz(c),
        (Sample::Cloud(c), SampleFormat::Off) => {
            let mut s = format!("OFF\n{} 0 0\n", c.len());
            for p in c.points() {
                let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
            }
            s
        }
    };
    fs::write(path, text).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}
