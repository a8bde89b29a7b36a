//! View synthesis and the self-supervised photometric objective, used as an
//! evaluation oracle.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::maps::{DepthMap, ImageGrid, Mask, ScalarMap};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const SSIM_WEIGHT: f64 = 0.85;

/// Source image resampled into the target view.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedImage {
    pub image: ImageGrid,
    pub valid: Mask,
}

/// Per-pixel error with the pixels that may be aggregated.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub values: ScalarMap,
    pub valid: Mask,
}

impl ErrorMap {
    pub fn mean(&self) -> Result<f64> {
        masked_mean(&self.values.data, &self.valid.data)
    }
}

fn masked_mean(values: &[f64], valid: &[bool]) -> Result<f64> {
    let (sum, n) = values
        .iter()
        .zip(valid)
        .filter(|(_, &ok)| ok)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(sum / n as f64)
}

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Reconstructs the target view by sampling `src` where each target pixel,
/// lifted with `depth`, lands after `pose` (target camera to source camera).
pub fn synthesize(src: &ImageGrid, depth: &DepthMap, k: &Intrinsics, pose: &Pose) -> Result<SynthesizedImage> {
    let (w, h) = (depth.width(), depth.height());
    if src.width != w || src.height != h || k.width != w || k.height != h {
        return Err(Error::ShapeMismatch(format!(
            "source {}x{}, depth {w}x{h}, intrinsics {}x{}",
            src.width, src.height, k.width, k.height
        )));
    }
    let c = src.channels;
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut img = vec![0.0; w * c];
            let mut valid = vec![false; w];
            for x in 0..w {
                let p = pose.transform(&k.backproject(x as f64, y as f64, depth.get(x, y)));
                if !(p.z > 0.0) {
                    continue;
                }
                let u = snap(k.f * p.x / p.z + k.cu);
                let v = snap(k.f * p.y / p.z + k.cv);
                valid[x] = src.sample_bilinear(u, v, &mut img[x * c..(x + 1) * c]);
            }
            (img, valid)
        })
        .collect();
    let mut data = Vec::with_capacity(w * h * c);
    let mut mask = Vec::with_capacity(w * h);
    for (img, valid) in rows {
        data.extend(img);
        mask.extend(valid);
    }
    Ok(SynthesizedImage {
        image: ImageGrid::from_vec(w, h, c, data)?,
        valid: Mask {
            width: w,
            height: h,
            data: mask,
        },
    })
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

/// 3×3 mean of `f(a, b)` at `(x, y)` with reflection padding.
#[inline]
fn window_mean(a: &ImageGrid, b: &ImageGrid, x: usize, y: usize, c: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    let mut sum = 0.0;
    for dy in -1..=1 {
        let yy = reflect(y as isize + dy, a.height);
        for dx in -1..=1 {
            let xx = reflect(x as isize + dx, a.width);
            sum += f(a.get(xx, yy, c), b.get(xx, yy, c));
        }
    }
    sum / 9.0
}

/// SSIM of one channel at one pixel.
pub fn ssim_at(a: &ImageGrid, b: &ImageGrid, x: usize, y: usize, c: usize) -> f64 {
    let mu_a = window_mean(a, b, x, y, c, |p, _| p);
    let mu_b = window_mean(a, b, x, y, c, |_, q| q);
    let var_a = window_mean(a, b, x, y, c, |p, _| p * p) - mu_a * mu_a;
    let var_b = window_mean(a, b, x, y, c, |_, q| q * q) - mu_b * mu_b;
    let cov = window_mean(a, b, x, y, c, |p, q| p * q) - mu_a * mu_b;
    let n = (2.0 * (mu_a * mu_b) + SSIM_C1) * (2.0 * cov + SSIM_C2);
    let d = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2);
    n / d
}

/// `0.85·(1−SSIM)/2 + 0.15·|a−b|`, averaged over channels.
pub fn photometric_error(a: &ImageGrid, b: &ImageGrid, valid: &Mask) -> Result<ErrorMap> {
    if !a.same_shape(b) || valid.width != a.width || valid.height != a.height {
        return Err(Error::ShapeMismatch("photometric inputs differ in shape".into()));
    }
    let (w, h, ch) = (a.width, a.height, a.channels);
    let data: Vec<f64> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            if !valid.data[i] {
                return 0.0;
            }
            let (x, y) = (i % w, i / w);
            let total: f64 = (0..ch)
                .map(|c| {
                    let dssim = ((1.0 - ssim_at(a, b, x, y, c)) / 2.0).clamp(0.0, 1.0);
                    let l1 = (a.get(x, y, c) - b.get(x, y, c)).abs();
                    SSIM_WEIGHT * dssim + (1.0 - SSIM_WEIGHT) * l1
                })
                .sum();
            total / ch as f64
        })
        .collect();
    Ok(ErrorMap {
        values: ScalarMap::new(w, h, data)?,
        valid: valid.clone(),
    })
}

/// Per-pixel minimum of the error over synthesized views, averaged over
/// pixels valid in every view.
pub fn min_reprojection_loss(target: &ImageGrid, synthesized: &[SynthesizedImage]) -> Result<f64> {
    let first = synthesized
        .first()
        .ok_or_else(|| Error::InvalidArgument("no synthesized views".into()))?;
    let mut joint = first.valid.clone();
    for s in &synthesized[1..] {
        if s.valid.width != joint.width || s.valid.height != joint.height {
            return Err(Error::ShapeMismatch("synthesized views differ in shape".into()));
        }
        joint = joint.and(&s.valid);
    }
    let mut best = vec![f64::INFINITY; target.width * target.height];
    for s in synthesized {
        let pe = photometric_error(target, &s.image, &joint)?;
        for (b, v) in best.iter_mut().zip(&pe.values.data) {
            *b = b.min(*v);
        }
    }
    masked_mean(&best, &joint.data)
}

/// Edge-aware smoothness of mean-normalised inverse depth.
pub fn smoothness_loss(depth: &DepthMap, image: &ImageGrid) -> Result<f64> {
    let (w, h) = (depth.width(), depth.height());
    if image.width != w || image.height != h {
        return Err(Error::ShapeMismatch(format!(
            "depth {w}x{h} vs image {}x{}",
            image.width, image.height
        )));
    }
    let inv: Vec<f64> = depth.values.data.iter().map(|d| 1.0 / d).collect();
    let mean = inv.iter().sum::<f64>() / inv.len() as f64;
    let norm: Vec<f64> = inv.iter().map(|v| v / mean).collect();
    let grad_i = |x0: usize, y0: usize, x1: usize, y1: usize| -> f64 {
        (0..image.channels)
            .map(|c| (image.get(x1, y1, c) - image.get(x0, y0, c)).abs())
            .sum::<f64>()
            / image.channels as f64
    };
    let mut sx = 0.0;
    for y in 0..h {
        for x in 0..w.saturating_sub(1) {
            let dd = (norm[y * w + x + 1] - norm[y * w + x]).abs();
            sx += dd * (-grad_i(x, y, x + 1, y)).exp();
        }
    }
    let mut sy = 0.0;
    for y in 0..h.saturating_sub(1) {
        for x in 0..w {
            let dd = (norm[(y + 1) * w + x] - norm[y * w + x]).abs();
            sy += dd * (-grad_i(x, y, x, y + 1)).exp();
        }
    }
    let mx = if w > 1 { sx / ((w - 1) * h) as f64 } else { 0.0 };
    let my = if h > 1 { sy / (w * (h - 1)) as f64 } else { 0.0 };
    Ok(mx + my)
}

/// `λ₁..₃` for mono, MVS and fused depth, and the smoothness weight `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: [f64; 3],
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: [1.0; 3],
            gamma: 0.001,
        }
    }
}

/// A neighbouring frame with the pose from the target camera into it.
#[derive(Debug, Clone, Copy)]
pub struct SourceView<'a> {
    pub image: &'a ImageGrid,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy)]
pub struct DepthSet<'a> {
    pub mono: &'a DepthMap,
    pub mvs: &'a DepthMap,
    pub fused: &'a DepthMap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// `Σ λᵢ·L_r(Dᵢ)`.
    pub reprojection: f64,
    /// `Σ λᵢ·L_s(Dᵢ)`, before scaling by `γ`.
    pub smoothness: f64,
    /// `L(D) = L_r(D) + γ·L_s(D)` for mono, MVS and fused depth.
    pub per_depth: [f64; 3],
    pub total: f64,
}

/// Reprojection loss of one depth map against every source view.
pub fn reprojection_loss(
    target: &ImageGrid,
    sources: &[SourceView<'_>],
    depth: &DepthMap,
    k: &Intrinsics,
) -> Result<f64> {
    let views = sources
        .iter()
        .map(|s| synthesize(s.image, depth, k, &s.pose))
        .collect::<Result<Vec<_>>>()?;
    min_reprojection_loss(target, &views)
}

pub fn composite_loss(
    target: &ImageGrid,
    sources: &[SourceView<'_>],
    depths: DepthSet<'_>,
    k: &Intrinsics,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let mut out = LossBreakdown {
        reprojection: 0.0,
        smoothness: 0.0,
        per_depth: [0.0; 3],
        total: 0.0,
    };
    for (i, depth) in [depths.mono, depths.mvs, depths.fused].into_iter().enumerate() {
        let lambda = weights.lambda[i];
        if lambda == 0.0 {
            continue;
        }
        let lr = reprojection_loss(target, sources, depth, k)?;
        let ls = smoothness_loss(depth, target)?;
        out.per_depth[i] = lr + weights.gamma * ls;
        out.reprojection += lambda * lr;
        out.smoothness += lambda * ls;
        out.total += lambda * out.per_depth[i];
    }
    Ok(out)
}
