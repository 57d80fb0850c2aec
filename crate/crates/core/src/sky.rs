//! Hybrid sky detection for upward-facing fish-eye frames: a center-weighted
//! location prior fused with Otsu intensity thresholding on a median-blurred
//! image. Gradient magnitude is computed as a diagnostic byproduct.

use crate::camera::FisheyeFrame;
use crate::grid::Grid;
use nalgebra::Vector2;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SkyError {
    #[error("image has no intensity variation; no threshold exists")]
    ConstantImage,
    #[error("image is empty")]
    EmptyImage,
    #[error("blur window {0} larger than image")]
    WindowTooLarge(usize),
}

/// How the location-prior exponent is scaled.
///
/// `DomainCardinality` divides the pixel distance by the total pixel count
/// (which makes the prior nearly flat on large images); `Scale` divides by a
/// configured pixel distance instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorScale {
    DomainCardinality,
    Scale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkyConfig {
    /// Pre-defined center of the sky prior, in pixels.
    pub center: Vector2<f64>,
    /// Sky threshold on the hybrid probability, in (0, 1).
    pub eta: f64,
    /// Median-blur window size; odd, >= 3.
    pub blur_window: usize,
    pub prior: PriorScale,
}

impl SkyConfig {
    pub fn new(center: Vector2<f64>, eta: f64, blur_window: usize) -> Self {
        assert!(eta > 0.0 && eta < 1.0, "eta must lie in (0, 1)");
        assert!(blur_window >= 3 && blur_window % 2 == 1, "blur window must be odd and >= 3");
        Self { center, eta, blur_window, prior: PriorScale::DomainCardinality }
    }

    pub fn with_prior(mut self, prior: PriorScale) -> Self {
        self.prior = prior;
        self
    }
}

/// Per-pixel sky probability with its thresholded mask.
#[derive(Debug, Clone)]
pub struct SkyMask {
    pub probability: Grid<f64>,
    pub is_sky: Grid<bool>,
    pub otsu_threshold: f64,
    pub eta: f64,
}

impl SkyMask {
    pub fn sky_fraction(&self) -> f64 {
        let n = self.is_sky.len();
        if n == 0 {
            return 0.0;
        }
        self.is_sky.data().iter().filter(|&&s| s).count() as f64 / n as f64
    }

    /// Probability at the nearest pixel, or `None` outside the image.
    pub fn probability_at(&self, u: &Vector2<f64>) -> Option<f64> {
        let x = u.x.round();
        let y = u.y.round();
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let (x, y) = (x as usize, y as usize);
        self.probability.contains(x, y).then(|| *self.probability.get(x, y))
    }

    /// Write the boolean mask as P1 plus the probability grid as ASCII reals.
    pub fn export<W: Write>(&self, mask_out: W, prob_out: W) -> io::Result<()> {
        let mut mask_out = mask_out;
        self.is_sky.write_pbm(&mut mask_out)?;
        let mut prob_out = prob_out;
        self.probability.write_ascii(&mut prob_out)
    }
}

/// Median-blurred intensities plus the Sobel gradient magnitude of the
/// blurred image (diagnostics; the probability fusion uses intensity and
/// location only).
#[derive(Debug, Clone)]
pub struct PreprocessedFrame {
    pub blurred: Grid<f64>,
    pub gradient_magnitude: Grid<f64>,
}

/// Median blur followed by combined horizontal/vertical Sobel magnitude.
pub fn preprocess(frame: &FisheyeFrame, cfg: &SkyConfig) -> Result<PreprocessedFrame, SkyError> {
    let img = &frame.intensities;
    if img.is_empty() {
        return Err(SkyError::EmptyImage);
    }
    if cfg.blur_window > img.width() || cfg.blur_window > img.height() {
        return Err(SkyError::WindowTooLarge(cfg.blur_window));
    }
    let blurred = median_blur(img, cfg.blur_window);
    let gradient_magnitude = sobel_magnitude(&blurred);
    Ok(PreprocessedFrame { blurred, gradient_magnitude })
}

fn median_blur(img: &Grid<f64>, window: usize) -> Grid<f64> {
    let half = (window / 2) as isize;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut out = Grid::filled(img.width(), img.height(), 0.0);
    let mut buf = Vec::with_capacity(window * window);
    for y in 0..h {
        for x in 0..w {
            buf.clear();
            for dy in -half..=half {
                let sy = (y + dy).clamp(0, h - 1) as usize;
                for dx in -half..=half {
                    let sx = (x + dx).clamp(0, w - 1) as usize;
                    buf.push(*img.get(sx, sy));
                }
            }
            let mid = buf.len() / 2;
            let (_, median, _) = buf.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
            out.set(x as usize, y as usize, *median);
        }
    }
    out
}

fn sobel_magnitude(img: &Grid<f64>) -> Grid<f64> {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let at = |x: isize, y: isize| *img.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize);
    let mut out = Grid::filled(img.width(), img.height(), 0.0);
    for y in 0..h {
        for x in 0..w {
            let gx = -at(x - 1, y - 1) + at(x + 1, y - 1) - 2.0 * at(x - 1, y)
                + 2.0 * at(x + 1, y)
                - at(x - 1, y + 1)
                + at(x + 1, y + 1);
            let gy = -at(x - 1, y - 1) - 2.0 * at(x, y - 1) - at(x + 1, y - 1)
                + at(x - 1, y + 1)
                + 2.0 * at(x, y + 1)
                + at(x + 1, y + 1);
            out.set(x as usize, y as usize, (gx * gx + gy * gy).sqrt());
        }
    }
    out
}

/// Location-based sky probability `exp(-2 ||u - center|| / scale)`.
pub fn location_prior(u: &Vector2<f64>, cfg: &SkyConfig, width: usize, height: usize) -> f64 {
    let dist = (u - cfg.center).norm();
    let scale = match cfg.prior {
        PriorScale::DomainCardinality => (width * height) as f64,
        PriorScale::Scale(s) => s,
    };
    (-2.0 * dist / scale).exp()
}

/// Intensity threshold minimizing the weighted intra-class variance
/// `w_sky(k) var_sky(k) + w_inf(k) var_inf(k)`, scanned over the distinct
/// observed intensities. Pixels equal to the candidate count into the lower
/// ("sky") class. Ties resolve to the midpoint of the optimal interval.
pub fn otsu_threshold(intensities: &Grid<f64>) -> Result<f64, SkyError> {
    if intensities.is_empty() {
        return Err(SkyError::EmptyImage);
    }
    let mut sorted: Vec<f64> = intensities.data().to_vec();
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    // Run-length encode into (value, count) with prefix moments.
    let mut values = Vec::new();
    let mut counts = Vec::new();
    for &v in &sorted {
        if values.last() == Some(&v) {
            *counts.last_mut().unwrap() += 1usize;
        } else {
            values.push(v);
            counts.push(1usize);
        }
    }
    if values.len() < 2 {
        return Err(SkyError::ConstantImage);
    }
    let total = sorted.len() as f64;
    let mut cum_n = vec![0.0; values.len() + 1];
    let mut cum_s = vec![0.0; values.len() + 1];
    let mut cum_s2 = vec![0.0; values.len() + 1];
    for i in 0..values.len() {
        let c = counts[i] as f64;
        cum_n[i + 1] = cum_n[i] + c;
        cum_s[i + 1] = cum_s[i] + c * values[i];
        cum_s2[i + 1] = cum_s2[i] + c * values[i] * values[i];
    }
    let class_var = |n: f64, s: f64, s2: f64| -> f64 {
        if n <= 0.0 {
            0.0
        } else {
            (s2 / n - (s / n) * (s / n)).max(0.0)
        }
    };
    let objective = |i: usize| -> f64 {
        // Lower class: values[..=i]; upper class: values[i+1..].
        let n_lo = cum_n[i + 1];
        let n_hi = total - n_lo;
        let var_lo = class_var(n_lo, cum_s[i + 1], cum_s2[i + 1]);
        let var_hi = class_var(
            n_hi,
            cum_s.last().unwrap() - cum_s[i + 1],
            cum_s2.last().unwrap() - cum_s2[i + 1],
        );
        (n_lo / total) * var_lo + (n_hi / total) * var_hi
    };
    let mut best = f64::INFINITY;
    let objs: Vec<f64> = (0..values.len()).map(|i| {
        let j = objective(i);
        best = best.min(j);
        j
    }).collect();
    let tol = 1e-12 * (1.0 + best.abs());
    let first = objs.iter().position(|&j| j <= best + tol).unwrap();
    let last = objs.iter().rposition(|&j| j <= best + tol).unwrap();
    // The objective is piecewise constant in k between distinct intensities;
    // the optimal interval runs from the first minimizer to the next
    // distinct value above the last one.
    let lo = values[first];
    let hi = if last + 1 < values.len() { values[last + 1] } else { values[last] };
    Ok(0.5 * (lo + hi))
}

/// Hybrid per-pixel sky probability (intensity term times location prior) on
/// the median-blurred image, thresholded at `eta`.
pub fn sky_probability(frame: &FisheyeFrame, cfg: &SkyConfig) -> Result<SkyMask, SkyError> {
    let pre = preprocess(frame, cfg)?;
    sky_probability_from_preprocessed(&pre, cfg)
}

/// Same as [`sky_probability`] for an already preprocessed frame.
pub fn sky_probability_from_preprocessed(
    pre: &PreprocessedFrame,
    cfg: &SkyConfig,
) -> Result<SkyMask, SkyError> {
    let blurred = &pre.blurred;
    let thr = otsu_threshold(blurred)?;
    let (lo, hi) = blurred.min_max();
    let range = hi - lo;
    let (w, h) = (blurred.width(), blurred.height());
    let mut probability = Grid::filled(w, h, 0.0);
    let mut is_sky = Grid::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let intensity_term = (-(blurred.get(x, y) - thr).abs() / range).exp();
            let p = intensity_term
                * location_prior(&Vector2::new(x as f64, y as f64), cfg, w, h);
            probability.set(x, y, p);
            is_sky.set(x, y, p > cfg.eta);
        }
    }
    Ok(SkyMask { probability, is_sky, otsu_threshold: thr, eta: cfg.eta })
}
