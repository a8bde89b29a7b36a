//! Matching evidence for plane-sweep depth: quarter-resolution features,
//! the warped source volume, group-wise correlation and the per-pixel depth
//! distribution.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::maps::ImageGrid;
use crate::sampling::HypothesisGrid;

/// Spatial downscale between images and features.
pub const FEATURE_STRIDE: usize = 4;
/// Number of feature channels produced by [`extract_features`].
pub const FEATURE_CHANNELS: usize = 32;

const NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub grid: ImageGrid,
    /// Every channel was constant over the frame and has been zeroed.
    pub textureless: bool,
}

impl FeatureGrid {
    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn channels(&self) -> usize {
        self.grid.channels
    }
}

/// Single-channel full-resolution plane used while building features.
struct Plane<'a> {
    w: usize,
    h: usize,
    data: &'a [f64],
}

impl Plane<'_> {
    #[inline]
    fn at(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.data[y * self.w + x]
    }

    fn dx(&self) -> Vec<f64> {
        self.map(|p, x, y| 0.5 * (p.at(x + 1, y) - p.at(x - 1, y)))
    }

    fn dy(&self) -> Vec<f64> {
        self.map(|p, x, y| 0.5 * (p.at(x, y + 1) - p.at(x, y - 1)))
    }

    fn dxx(&self) -> Vec<f64> {
        self.map(|p, x, y| p.at(x + 1, y) - 2.0 * p.at(x, y) + p.at(x - 1, y))
    }

    fn dyy(&self) -> Vec<f64> {
        self.map(|p, x, y| p.at(x, y + 1) - 2.0 * p.at(x, y) + p.at(x, y - 1))
    }

    fn dxy(&self) -> Vec<f64> {
        self.map(|p, x, y| {
            0.25 * (p.at(x + 1, y + 1) - p.at(x - 1, y + 1) - p.at(x + 1, y - 1)
                + p.at(x - 1, y - 1))
        })
    }

    fn map(&self, f: impl Fn(&Self, isize, isize) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w * self.h);
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                out.push(f(self, x, y));
            }
        }
        out
    }

    /// Mean over a `(2r+1)²` window with replicated borders.
    fn box_mean(&self, r: isize) -> Vec<f64> {
        let (w, h) = (self.w as isize, self.h as isize);
        let horizontal: Vec<f64> = (0..h)
            .flat_map(|y| {
                (0..w).map(move |x| (-r..=r).map(|k| self.at(x + k, y)).sum::<f64>())
            })
            .collect();
        let tmp = Plane {
            w: self.w,
            h: self.h,
            data: &horizontal,
        };
        let n = ((2 * r + 1) * (2 * r + 1)) as f64;
        tmp.map(|p, x, y| (-r..=r).map(|k| p.at(x, y + k)).sum::<f64>() / n)
    }

    /// `(I − μ_r)/(σ_r + 0.02)` over a `(2r+1)²` window.
    fn local_contrast(&self, r: isize) -> Vec<f64> {
        let mean = self.box_mean(r);
        let sq: Vec<f64> = self.data.iter().map(|v| v * v).collect();
        let sq_mean = Plane {
            w: self.w,
            h: self.h,
            data: &sq,
        }
        .box_mean(r);
        self.data
            .iter()
            .zip(mean.iter().zip(&sq_mean))
            .map(|(v, (m, s))| (v - m) / ((s - m * m).max(0.0).sqrt() + 0.02))
            .collect()
    }
}

fn plane(w: usize, h: usize, data: &[f64]) -> Plane<'_> {
    Plane { w, h, data }
}

/// Hand-crafted features on a `H/4 × W/4` grid with
/// [`FEATURE_CHANNELS`] channels: 4×4 block means of intensities, their
/// gradients and local-contrast-normalised intensities, each normalised to
/// zero mean and unit variance over the frame.
pub fn extract_features(image: &ImageGrid) -> Result<FeatureGrid> {
    let (w, h) = (image.width, image.height);
    if image.channels != 3 {
        return Err(Error::ShapeMismatch(format!(
            "expected 3 image channels, got {}",
            image.channels
        )));
    }
    if w % FEATURE_STRIDE != 0 || h % FEATURE_STRIDE != 0 || w == 0 || h == 0 {
        return Err(Error::ShapeMismatch(format!(
            "{w}x{h} not divisible by {FEATURE_STRIDE}"
        )));
    }
    let rgb: Vec<Vec<f64>> = (0..3).map(|c| image.channel(c)).collect();
    let gray = image.gray();
    let rg: Vec<f64> = rgb[0].iter().zip(&rgb[1]).map(|(r, g)| r - g).collect();
    let by: Vec<f64> = (0..w * h)
        .map(|i| rgb[2][i] - 0.5 * (rgb[0][i] + rgb[1][i]))
        .collect();

    let mut responses: Vec<Vec<f64>> = Vec::with_capacity(FEATURE_CHANNELS);
    for c in rgb.iter().chain(std::iter::once(&gray)) {
        responses.push(c.clone());
    }
    for c in rgb.iter().chain(std::iter::once(&gray)) {
        let p = plane(w, h, c);
        responses.push(p.dx());
        responses.push(p.dy());
    }
    for r in [3, 6] {
        for c in rgb.iter().chain(std::iter::once(&gray)) {
            responses.push(plane(w, h, c).local_contrast(r));
        }
    }
    let lcn = plane(w, h, &gray).local_contrast(3);
    responses.push(plane(w, h, &lcn).dx());
    responses.push(plane(w, h, &lcn).dy());
    let g = plane(w, h, &gray);
    responses.push(g.dxx());
    responses.push(g.dyy());
    responses.push(g.dxy());
    let blurred = g.box_mean(4);
    responses.push(plane(w, h, &blurred).dx());
    responses.push(plane(w, h, &blurred).dy());
    responses.push(blurred);
    responses.push(plane(w, h, &rg).dx());
    responses.push(plane(w, h, &by).dx());
    responses.push(rg);
    responses.push(by);
    debug_assert_eq!(responses.len(), FEATURE_CHANNELS);

    let (fw, fh) = (w / FEATURE_STRIDE, h / FEATURE_STRIDE);
    let area = (FEATURE_STRIDE * FEATURE_STRIDE) as f64;
    let mut grid = ImageGrid::zeros(fw, fh, FEATURE_CHANNELS);
    for (c, response) in responses.iter().enumerate() {
        for by in 0..fh {
            for bx in 0..fw {
                let mut sum = 0.0;
                for dy in 0..FEATURE_STRIDE {
                    let row = (by * FEATURE_STRIDE + dy) * w + bx * FEATURE_STRIDE;
                    sum += response[row..row + FEATURE_STRIDE].iter().sum::<f64>();
                }
                grid.set(bx, by, c, sum / area);
            }
        }
    }

    let n = (fw * fh) as f64;
    let mut degenerate = 0;
    for c in 0..FEATURE_CHANNELS {
        let values = grid.channel(c);
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let scale = if var < NORM_EPS {
            degenerate += 1;
            0.0
        } else {
            1.0 / var.sqrt()
        };
        for y in 0..fh {
            for x in 0..fw {
                let v = grid.get(x, y, c);
                grid.set(x, y, c, (v - mean) * scale);
            }
        }
    }
    Ok(FeatureGrid {
        grid,
        textureless: degenerate == FEATURE_CHANNELS,
    })
}

/// How source features are resampled at warped positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Interpolation {
    Bilinear,
    /// Catmull-Rom bicubic.
    Cubic,
}

/// Source features resampled at every (pixel, hypothesis) cell.
/// Layout: pixel-major, then hypothesis, then channel.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedVolume {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub count: usize,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl WarpedVolume {
    #[inline]
    pub fn cell(&self, x: usize, y: usize, j: usize) -> &[f64] {
        let i = ((y * self.width + x) * self.count + j) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize, j: usize) -> bool {
        self.valid[(y * self.width + x) * self.count + j]
    }
}

/// Warps every current-frame feature pixel to each of its depth hypotheses in
/// the source frame (`pose` maps current-camera to source-camera coordinates)
/// and samples the source features there.
pub fn build_warped_volume(
    feat_prev: &FeatureGrid,
    hypotheses: &HypothesisGrid,
    k_scaled: &Intrinsics,
    pose: &Pose,
    interpolation: Interpolation,
) -> Result<WarpedVolume> {
    let (w, h, c) = (feat_prev.width(), feat_prev.height(), feat_prev.channels());
    if hypotheses.width != w || hypotheses.height != h {
        return Err(Error::ShapeMismatch(format!(
            "hypotheses {}x{} vs features {w}x{h}",
            hypotheses.width, hypotheses.height
        )));
    }
    if k_scaled.width != w || k_scaled.height != h {
        return Err(Error::ShapeMismatch(format!(
            "intrinsics {}x{} vs features {w}x{h}",
            k_scaled.width, k_scaled.height
        )));
    }
    let count = hypotheses.count;
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut data = vec![0.0; w * count * c];
            let mut valid = vec![false; w * count];
            for x in 0..w {
                let rotated = pose.rotation * k_scaled.ray(x as f64, y as f64);
                for (j, &d) in hypotheses.at(x, y).iter().enumerate() {
                    let p = rotated * d + pose.translation;
                    if !(p.z > 0.0) {
                        continue;
                    }
                    let u = k_scaled.f * p.x / p.z + k_scaled.cu;
                    let v = k_scaled.f * p.y / p.z + k_scaled.cv;
                    let cell = x * count + j;
                    let out = &mut data[cell * c..(cell + 1) * c];
                    let ok = match interpolation {
                        Interpolation::Bilinear => feat_prev.grid.sample_bilinear(u, v, out),
                        Interpolation::Cubic => feat_prev.grid.sample_cubic(u, v, out),
                    };
                    if ok {
                        valid[cell] = true;
                    }
                }
            }
            (data, valid)
        })
        .collect();
    let mut data = Vec::with_capacity(w * h * count * c);
    let mut valid = Vec::with_capacity(w * h * count);
    for (d, v) in rows {
        data.extend(d);
        valid.extend(v);
    }
    Ok(WarpedVolume {
        width: w,
        height: h,
        channels: c,
        count,
        data,
        valid,
    })
}

/// Group similarities. Layout: pixel-major, then hypothesis, then group.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub width: usize,
    pub height: usize,
    pub groups: usize,
    pub count: usize,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl CostVolume {
    #[inline]
    pub fn get(&self, x: usize, y: usize, g: usize, j: usize) -> f64 {
        self.data[((y * self.width + x) * self.count + j) * self.groups + g]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize, j: usize) -> bool {
        self.valid[(y * self.width + x) * self.count + j]
    }
}

/// Rescales every `groups`-way channel group of each vector in `data` to
/// Euclidean norm `√groups`, so that [`group_correlation`] of two rescaled
/// vectors yields per-group cosines. All-zero groups stay zero.
fn normalize_groups(data: &mut [f64], channels: usize, groups: usize) -> Result<()> {
    if groups == 0 || channels % groups != 0 {
        return Err(Error::InvalidArgument(format!(
            "{channels} channels not divisible into {groups} groups"
        )));
    }
    let target = (groups as f64).sqrt();
    data.par_chunks_mut(channels / groups).for_each(|group| {
        let norm = group.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            group.iter_mut().for_each(|v| *v *= target / norm);
        } else {
            group.fill(0.0);
        }
    });
    Ok(())
}

impl FeatureGrid {
    /// Copy with each channel group rescaled per pixel; see
    /// [`WarpedVolume::normalize_groups`].
    pub fn normalized_groups(&self, groups: usize) -> Result<FeatureGrid> {
        let mut out = self.clone();
        normalize_groups(&mut out.grid.data, self.channels(), groups)?;
        Ok(out)
    }
}

impl WarpedVolume {
    /// Rescales each channel group of every cell to norm `√groups`; paired
    /// with [`FeatureGrid::normalized_groups`] the correlation becomes a
    /// per-group cosine similarity.
    pub fn normalize_groups(&mut self, groups: usize) -> Result<()> {
        normalize_groups(&mut self.data, self.channels, groups)
    }
}

/// `s^g = (1/G)·⟨v^g, f^g⟩` for each of `groups` contiguous channel groups.
pub fn group_correlation(
    volume: &WarpedVolume,
    feat_cur: &FeatureGrid,
    groups: usize,
) -> Result<CostVolume> {
    let c = volume.channels;
    if groups == 0 || c % groups != 0 {
        return Err(Error::InvalidArgument(format!(
            "{c} channels not divisible into {groups} groups"
        )));
    }
    if feat_cur.width() != volume.width
        || feat_cur.height() != volume.height
        || feat_cur.channels() != c
    {
        return Err(Error::ShapeMismatch(
            "current features do not match the warped volume".into(),
        ));
    }
    let per_group = c / groups;
    let scale = 1.0 / groups as f64;
    let cells = volume.width * volume.height * volume.count;
    let mut data = vec![0.0; cells * groups];
    data.par_chunks_mut(groups)
        .enumerate()
        .for_each(|(cell, out)| {
            if !volume.valid[cell] {
                return;
            }
            let pixel = cell / volume.count;
            let f = feat_cur
                .grid
                .pixel(pixel % volume.width, pixel / volume.width);
            let v = &volume.data[cell * c..(cell + 1) * c];
            for (g, s) in out.iter_mut().enumerate() {
                let range = g * per_group..(g + 1) * per_group;
                *s = scale
                    * v[range.clone()]
                        .iter()
                        .zip(&f[range])
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
            }
        });
    Ok(CostVolume {
        width: volume.width,
        height: volume.height,
        groups,
        count: volume.count,
        data,
        valid: volume.valid.clone(),
    })
}

/// Per-pixel distribution over depth hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    pub width: usize,
    pub height: usize,
    pub count: usize,
    pub data: Vec<f64>,
    /// No hypothesis of this pixel had a valid warp; its row is uniform.
    pub low_evidence: Vec<bool>,
}

impl ProbabilityVolume {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.count;
        &self.data[i..i + self.count]
    }
}

/// Numerically stable softmax of `logits / temperature`.
pub fn softmax(logits: &[f64], temperature: f64, out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = ((l - max) / temperature).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Decodes the cost volume into probabilities: the logit of each hypothesis
/// is the mean group similarity, followed by a temperature softmax. Invalid
/// cells carry zero similarity and take part as zero-evidence logits; a
/// pixel with no valid cell comes out uniform and flagged low-evidence.
pub fn cost_to_probability(cost: &CostVolume, temperature: f64) -> Result<ProbabilityVolume> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature {temperature} must be > 0"
        )));
    }
    let (d, g) = (cost.count, cost.groups);
    let pixels = cost.width * cost.height;
    let mut data = vec![0.0; pixels * d];
    let low_evidence: Vec<bool> = data
        .par_chunks_mut(d)
        .enumerate()
        .map(|(p, out)| {
            let logits: Vec<f64> = (0..d)
                .map(|j| {
                    let base = (p * d + j) * g;
                    cost.data[base..base + g].iter().sum::<f64>() / g as f64
                })
                .collect();
            softmax(&logits, temperature, out);
            !cost.valid[p * d..(p + 1) * d].iter().any(|&v| v)
        })
        .collect();
    Ok(ProbabilityVolume {
        width: cost.width,
        height: cost.height,
        count: d,
        data,
        low_evidence,
    })
}

/// Analytic size of the warped and cost volumes in MiB
/// (`H/4·W/4·(C+G)·D` values of 4 bytes).
pub fn volume_memory_mib(width: usize, height: usize, channels: usize, groups: usize, count: usize) -> f64 {
    let floats = (width / FEATURE_STRIDE) * (height / FEATURE_STRIDE) * (channels + groups) * count;
    floats as f64 * 4.0 / (1024.0 * 1024.0)
}
