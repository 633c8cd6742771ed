//! Canny edge detection on [0, 1] grayscale images.
//!
//! Gradient magnitudes are Sobel responses divided by 4, so an unsmoothed
//! unit step has magnitude 1 and thresholds live on the same [0, 1] scale as
//! the intensities.

use std::collections::VecDeque;

use super::image::GrayImage;

pub const GAUSSIAN_SIGMA: f64 = 1.0;
const GAUSSIAN_RADIUS: isize = 2;

/// Thresholds for edges of point-cloud depth images.
pub const CLOUD_THRESHOLDS: (f32, f32) = (0.10, 0.20);
/// Mesh renders carry shading noise across faces, so only stronger gradients
/// count as edges.
pub const MESH_THRESHOLDS: (f32, f32) = (0.20, 0.40);

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let k: Vec<f64> = (-GAUSSIAN_RADIUS..=GAUSSIAN_RADIUS)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter().map(|v| (v / sum) as f32).collect()
}

#[inline]
fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

fn gaussian_blur(img: &GrayImage, sigma: f64) -> Vec<f32> {
    let (w, h) = (img.width(), img.height());
    let k = gaussian_kernel(sigma);
    let src = img.pixels();
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let xx = clamp_idx(x as isize + j as isize - GAUSSIAN_RADIUS, w);
                acc += kv * src[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let yy = clamp_idx(y as isize + j as isize - GAUSSIAN_RADIUS, h);
                acc += kv * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Sobel gradients `(gx, gy)` scaled by 1/4.
fn sobel(src: &[f32], w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
    let at = |x: isize, y: isize| src[clamp_idx(y, h) * w + clamp_idx(x, w)];
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let dx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let dy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            gx[i] = dx / 4.0;
            gy[i] = dy / 4.0;
        }
    }
    (gx, gy)
}

/// Thin gradient ridges to single-pixel width. A pixel survives if it is
/// strictly greater than its backward neighbour and at least its forward
/// neighbour along the quantized gradient direction, which keeps exactly
/// one pixel of a symmetric two-pixel ridge.
fn non_maximum_suppression(mag: &[f32], gx: &[f32], gy: &[f32], w: usize, h: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let angle = gy[i].atan2(gx[i]).to_degrees();
            let a = if angle < 0.0 { angle + 180.0 } else { angle };
            let (dx, dy): (isize, isize) = if !(22.5..157.5).contains(&a) {
                (1, 0)
            } else if a < 67.5 {
                (1, 1)
            } else if a < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let fwd = mag[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
            let back = mag[(y as isize - dy) as usize * w + (x as isize - dx) as usize];
            if m > back && m >= fwd {
                out[i] = m;
            }
        }
    }
    out
}

/// Classic Canny: Gaussian smoothing, Sobel gradients, non-maximum
/// suppression, double threshold and 8-connected hysteresis. The result is
/// binary (0 or 1).
pub fn canny_edges(img: &GrayImage, low: f32, high: f32) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let smooth = gaussian_blur(img, GAUSSIAN_SIGMA);
    let (gx, gy) = sobel(&smooth, w, h);
    let mag: Vec<f32> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let thin = non_maximum_suppression(&mag, &gx, &gy, w, h);

    let mut edges = vec![0.0f32; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= high && m > 0.0 {
            edges[i] = 1.0;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (xx, yy) = (x + dx, y + dy);
                if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                    continue;
                }
                let j = yy as usize * w + xx as usize;
                if edges[j] == 0.0 && thin[j] >= low && thin[j] > 0.0 {
                    edges[j] = 1.0;
                    queue.push_back(j);
                }
            }
        }
    }
    GrayImage::from_pixels(w, h, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(size: usize, lo: usize, hi: usize) -> GrayImage {
        let mut img = GrayImage::new(size, size);
        for y in lo..hi {
            for x in lo..hi {
                img.set(x, y, 1.0);
            }
        }
        img
    }

    #[test]
    fn uniform_image_has_no_edges() {
        let img = GrayImage::from_pixels(64, 64, vec![0.7; 64 * 64]);
        assert_eq!(canny_edges(&img, 0.1, 0.2).count_above(0.0), 0);
    }

    #[test]
    fn saturated_high_threshold_has_no_edges() {
        let img = square(64, 10, 50);
        assert_eq!(canny_edges(&img, 0.1, 1.0).count_above(0.0), 0);
    }

    #[test]
    fn output_is_binary() {
        let img = square(64, 10, 50);
        let e = canny_edges(&img, CLOUD_THRESHOLDS.0, CLOUD_THRESHOLDS.1);
        assert!(e.pixels().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(e.count_above(0.0) > 0);
    }

    #[test]
    fn step_edge_magnitude_is_below_one() {
        let mut img = GrayImage::new(32, 32);
        for y in 0..32 {
            for x in 16..32 {
                img.set(x, y, 1.0);
            }
        }
        let smooth = gaussian_blur(&img, GAUSSIAN_SIGMA);
        let (gx, gy) = sobel(&smooth, 32, 32);
        let peak = gx.iter().copied().fold(0.0f32, f32::max);
        assert!(peak > 0.4 && peak < 1.0, "peak {peak}");
        assert!(gy.iter().all(|v| v.abs() < 1e-6));
    }
}
