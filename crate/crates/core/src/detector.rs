//! Correlation-based stand-in for a learned target detector.
//!
//! The template is the gradient magnitude of the target's log-intensity
//! texture, which is what a moving textured disc paints into an event
//! frame. `any_conf` is the best normalised cross-correlation of `|frame|`
//! with the template; `target_conf` additionally requires the radial
//! profile under the match to look like concentric rings.

use crate::frame::EventFrame;
use crate::scalar::Real;
use crate::scene::TargetConfig;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_STRIDE: usize = 2;
/// Radius of the box filter applied to `|frame|` and to the template.
pub const DEFAULT_SMOOTHING: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub any_conf: f64,
    pub target_conf: f64,
    /// `(x, y, w, h)` of the best match, when there is any correlation.
    pub bbox: Option<(usize, usize, usize, usize)>,
    pub detected: bool,
}

impl Detection {
    pub fn none() -> Self {
        Self { any_conf: 0.0, target_conf: 0.0, bbox: None, detected: false }
    }

    pub fn center(&self) -> Option<(f64, f64)> {
        self.bbox.map(|(x, y, w, h)| (x as f64 + w as f64 / 2.0, y as f64 + h as f64 / 2.0))
    }
}

/// Precomputed target signature.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    side: usize,
    values: Vec<f64>,
    /// Mean-removed values and their norm.
    centered: Vec<f64>,
    norm: f64,
    radial: Vec<f64>,
}

impl Template {
    /// Signature of a ring-textured disc: `|∇ ln(1 + modulation(r))|`.
    pub fn from_target(target: &TargetConfig) -> Self {
        let half = target.radius.ceil() as usize + 2;
        let side = 2 * half + 1;
        let c = half as f64;
        let log_at = |x: f64, y: f64| {
            let r = ((x - c).powi(2) + (y - c).powi(2)).sqrt();
            (1.0 + target.modulation(r)).ln()
        };
        let mut values = Vec::with_capacity(side * side);
        for y in 0..side {
            for x in 0..side {
                let (xf, yf) = (x as f64, y as f64);
                let gx = (log_at(xf + 1.0, yf) - log_at(xf - 1.0, yf)) / 2.0;
                let gy = (log_at(xf, yf + 1.0) - log_at(xf, yf - 1.0)) / 2.0;
                values.push(gx.hypot(gy));
            }
        }
        Self::from_values(side, values)
    }

    /// Box-filtered copy, matching what [`Detector`] does to frames.
    pub fn smoothed(&self, radius: usize) -> Self {
        Self::from_values(self.side, box_blur(&self.values, self.side, self.side, radius))
    }

    /// Uses `values` (row-major, `side x side`) verbatim as the template.
    pub fn from_values(side: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), side * side, "template values do not match side");
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
        let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
        let radial = radial_profile(&values, side, side, (0, 0), side);
        Self { side, values, centered, norm, radial }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Mean value per integer radius around the centre of the `side x side`
/// window whose top-left corner is `origin`.
fn radial_profile(data: &[f64], width: usize, height: usize, origin: (usize, usize), side: usize) -> Vec<f64> {
    let half = side / 2;
    let mut sums = vec![0.0; half + 1];
    let mut counts = vec![0usize; half + 1];
    for dy in 0..side {
        for dx in 0..side {
            let (x, y) = (origin.0 + dx, origin.1 + dy);
            if x >= width || y >= height {
                continue;
            }
            let r = ((dx as f64 - half as f64).powi(2) + (dy as f64 - half as f64).powi(2)).sqrt().round() as usize;
            if r <= half {
                sums[r] += data[y * width + x];
                counts[r] += 1;
            }
        }
    }
    sums.iter().zip(&counts).map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 }).collect()
}

/// Mean over the `(2r+1)^2` box clipped to the image.
fn box_blur(data: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return data.to_vec();
    }
    let pass = |src: &[f64], horizontal: bool| {
        let mut out = vec![0.0; src.len()];
        for y in 0..height {
            for x in 0..width {
                let (pos, len) = if horizontal { (x, width) } else { (y, height) };
                let (lo, hi) = (pos.saturating_sub(radius), (pos + radius).min(len - 1));
                let sum: f64 = (lo..=hi)
                    .map(|p| if horizontal { src[y * width + p] } else { src[p * width + x] })
                    .sum();
                out[y * width + x] = sum / (hi - lo + 1) as f64;
            }
        }
        out
    };
    pass(&pass(data, true), false)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va <= 0.0 || vb <= 0.0 {
        0.0
    } else {
        num / (va * vb).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct Detector {
    template: Template,
    smoothing: usize,
    pub threshold: f64,
    pub stride: usize,
}

impl Detector {
    pub fn new(template: Template) -> Self {
        Self::with_smoothing(template, DEFAULT_SMOOTHING)
    }

    /// Frames and `template` are both box-filtered with radius `smoothing`
    /// before matching.
    pub fn with_smoothing(template: Template, smoothing: usize) -> Self {
        let template = template.smoothed(smoothing);
        Self { template, smoothing, threshold: DEFAULT_THRESHOLD, stride: DEFAULT_STRIDE }
    }

    pub fn template(&self) -> &Template {
        &self.template
    }

    pub fn smoothing(&self) -> usize {
        self.smoothing
    }

    pub fn detect<T: Real>(&self, frame: &EventFrame<T>) -> Detection {
        let (w, h) = (usize::from(frame.width()), usize::from(frame.height()));
        let side = self.template.side;
        if w < side || h < side || self.template.norm == 0.0 {
            return Detection::none();
        }
        let mag: Vec<f64> = frame.data().iter().map(|v| v.to_f64_lossy().abs()).collect();
        let mag = box_blur(&mag, w, h, self.smoothing);
        // Integral images of |f| and |f|² with a zero border.
        let stride_ii = w + 1;
        let mut s1 = vec![0.0; (w + 1) * (h + 1)];
        let mut s2 = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let (mut r1, mut r2) = (0.0, 0.0);
            for x in 0..w {
                let v = mag[y * w + x];
                r1 += v;
                r2 += v * v;
                s1[(y + 1) * stride_ii + x + 1] = s1[y * stride_ii + x + 1] + r1;
                s2[(y + 1) * stride_ii + x + 1] = s2[y * stride_ii + x + 1] + r2;
            }
        }
        let window = |s: &[f64], x: usize, y: usize| {
            s[(y + side) * stride_ii + x + side] - s[y * stride_ii + x + side] - s[(y + side) * stride_ii + x]
                + s[y * stride_ii + x]
        };
        let n = (side * side) as f64;
        let mut best = (0.0, None);
        let stride = self.stride.max(1);
        for y0 in (0..=h - side).step_by(stride) {
            for x0 in (0..=w - side).step_by(stride) {
                let sum = window(&s1, x0, y0);
                let var = window(&s2, x0, y0) - sum * sum / n;
                if var <= 1e-12 {
                    continue;
                }
                let mut dot = 0.0;
                for ty in 0..side {
                    let row = &mag[(y0 + ty) * w + x0..][..side];
                    let trow = &self.template.centered[ty * side..][..side];
                    dot += row.iter().zip(trow).map(|(a, b)| a * b).sum::<f64>();
                }
                let ncc = dot / (var.sqrt() * self.template.norm);
                if ncc > best.0 {
                    best = (ncc, Some((x0, y0)));
                }
            }
        }
        let (any_conf, Some((x0, y0))) = best else {
            return Detection::none();
        };
        let any_conf = any_conf.min(1.0);
        let profile = radial_profile(&mag, w, h, (x0, y0), side);
        let consistency = pearson(&profile, &self.template.radial).max(0.0);
        let target_conf = any_conf * consistency;
        Detection { any_conf, target_conf, bbox: Some((x0, y0, side, side)), detected: target_conf >= self.threshold }
    }
}
