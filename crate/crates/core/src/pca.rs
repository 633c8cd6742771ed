//! Principal-axis pose normalization.
//!
//! A centered sample's second-moment matrix is diagonalized with cyclic
//! Jacobi rotations; re-expressing the vertices in that eigenbasis puts the
//! largest-variance direction on x and the smallest on z.

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{centroid, normalize_to_unit, GeometryError, Vec3, Vertices};

/// Spectral gap below which two eigenvalues are treated as equal.
pub const DEGENERATE_GAP: f64 = 1e-9;

const JACOBI_TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 64;
const CENTERED_TOLERANCE: f64 = 1e-4;

/// Covariance of a sample together with its eigen-decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceFrame {
    pub sigma: Matrix3<f64>,
    /// Descending.
    pub eigvals: [f64; 3],
    /// Columns are e1, e2, e3; right-handed.
    pub eigvecs: Matrix3<f64>,
}

impl CovarianceFrame {
    pub fn axis(&self, i: usize) -> Vector3<f64> {
        self.eigvecs.column(i).into_owned()
    }

    /// True when two eigenvalues are closer than [`DEGENERATE_GAP`].
    pub fn is_degenerate(&self) -> bool {
        let [a, b, c] = self.eigvals;
        (a - b).abs() < DEGENERATE_GAP || (b - c).abs() < DEGENERATE_GAP
    }
}

/// Second-moment matrix `xᵀx / N` of an origin-centered point set.
pub fn covariance<T: Vertices>(x: &T) -> Result<Matrix3<f64>, GeometryError> {
    let pts = x.vertices();
    let c = centroid(pts);
    if c.norm() > CENTERED_TOLERANCE {
        return Err(GeometryError::NotCentered(c.norm()));
    }
    let mut sigma = Matrix3::zeros();
    for p in pts {
        sigma += p * p.transpose();
    }
    sigma /= pts.len() as f64;
    // exact symmetry
    for i in 0..3 {
        for j in (i + 1)..3 {
            let m = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
            sigma[(i, j)] = m;
            sigma[(j, i)] = m;
        }
    }
    Ok(sigma)
}

/// Cyclic Jacobi eigen-decomposition of a symmetric 3×3 matrix.
/// Returns (eigenvalues, eigenvector columns) unsorted.
fn jacobi_eigen(sigma: &Matrix3<f64>) -> ([f64; 3], Matrix3<f64>) {
    let mut a = *sigma;
    let mut v = Matrix3::identity();
    let scale = a
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for _ in 0..MAX_SWEEPS {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        if off.sqrt() <= JACOBI_TOLERANCE * scale * 1e-3 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq.abs() <= f64::MIN_POSITIVE {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = Matrix3::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = s;
            rot[(q, p)] = -s;
            a = rot.transpose() * a * rot;
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v *= rot;
        }
    }
    ([a[(0, 0)], a[(1, 1)], a[(2, 2)]], v)
}

/// Eigen-decompose a covariance matrix into a right-handed frame with
/// descending eigenvalues. Each axis is flipped so its largest-magnitude
/// component is positive, then e3 is negated if the frame is left-handed.
pub fn eigen_frame(sigma: &Matrix3<f64>) -> CovarianceFrame {
    let (vals, vecs) = jacobi_eigen(sigma);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));

    let mut eigvecs = Matrix3::zeros();
    let mut eigvals = [0.0; 3];
    for (dst, &src) in order.iter().enumerate() {
        eigvals[dst] = vals[src];
        let mut col: Vector3<f64> = vecs.column(src).normalize();
        let dominant = col
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        if dominant < 0.0 {
            col = -col;
        }
        eigvecs.set_column(dst, &col);
    }
    let handed = eigvecs
        .column(0)
        .cross(&eigvecs.column(1))
        .dot(&eigvecs.column(2));
    if handed < 0.0 {
        let e3 = -eigvecs.column(2);
        eigvecs.set_column(2, &e3);
    }
    CovarianceFrame {
        sigma: *sigma,
        eigvals,
        eigvecs,
    }
}

/// Result of [`pca_align`].
#[derive(Debug, Clone)]
pub struct PcaAlignment<T> {
    pub aligned: T,
    pub frame: CovarianceFrame,
    /// Set when the spectrum has repeated eigenvalues, in which case the
    /// frame is one valid choice among many.
    pub pca_degenerate: bool,
}

/// Normalize, diagonalize and re-express `x` in its principal frame:
/// `x' = x · [e1 e2 e3]`.
pub fn pca_align<T: Vertices>(x: &T) -> Result<PcaAlignment<T>, GeometryError> {
    let normalized = normalize_to_unit(x)?;
    let sigma = covariance(&normalized)?;
    let frame = eigen_frame(&sigma);
    let basis_t = frame.eigvecs.transpose();
    let aligned = normalized.map_vertices(|p: &Vec3| basis_t * p);
    Ok(PcaAlignment {
        aligned,
        pca_degenerate: frame.is_degenerate(),
        frame,
    })
}
