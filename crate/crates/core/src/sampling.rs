//! Depth-hypothesis generation around a per-pixel monocular prior.
//!
//! A [`DepthRange`] is centred on the prior and spans `center·(1 ± fraction)`.
//! The fraction comes from the camera velocity (scaled by `β`), from a fixed
//! value, from halving a previous stage, or from prior confidence. Candidates
//! are then spread uniformly in inverse depth between the bounds.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Lower clamp on the range fraction; a static camera collapses to this.
pub const FRACTION_FLOOR: f64 = 1e-4;
/// Upper clamp on the range fraction, keeping `d_min > 0`.
pub const FRACTION_CEIL: f64 = 1.0 - 1e-4;
/// Minimum confidence accepted by [`confidence_range`].
pub const CONFIDENCE_EPS: f64 = 1e-3;

pub fn clamp_fraction(fraction: f64) -> f64 {
    fraction.clamp(FRACTION_FLOOR, FRACTION_CEIL)
}

/// Bounds applied to computed range fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionClamp {
    pub floor: f64,
    pub ceil: f64,
}

impl Default for FractionClamp {
    fn default() -> Self {
        Self {
            floor: FRACTION_FLOOR,
            ceil: FRACTION_CEIL,
        }
    }
}

impl FractionClamp {
    pub fn new(floor: f64, ceil: f64) -> Result<Self> {
        if !(floor > 0.0 && floor <= ceil && ceil < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fraction clamp [{floor}, {ceil}] must satisfy 0 < floor <= ceil < 1"
            )));
        }
        Ok(Self { floor, ceil })
    }

    pub fn apply(&self, fraction: f64) -> f64 {
        fraction.clamp(self.floor, self.ceil)
    }
}

/// Search interval `[d_min, d_max]` around `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthRange {
    pub d_min: f64,
    pub d_max: f64,
    pub center: f64,
    pub fraction: f64,
}

impl DepthRange {
    /// `center·(1 ± fraction)`, requiring `center > 0` and `0 < fraction < 1`.
    pub fn centered(center: f64, fraction: f64) -> Result<Self> {
        if !(center.is_finite() && center > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "range centre {center} must be > 0"
            )));
        }
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "range fraction {fraction} outside (0, 1)"
            )));
        }
        Ok(Self {
            d_min: center * (1.0 - fraction),
            d_max: center * (1.0 + fraction),
            center,
            fraction,
        })
    }

    pub fn contains(&self, depth: f64) -> bool {
        depth >= self.d_min && depth <= self.d_max
    }
}

/// Candidate depths for one pixel, farthest first.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthHypothesisSet {
    pub depths: Vec<f64>,
    pub range: DepthRange,
}

impl DepthHypothesisSet {
    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    /// Index of the candidate nearest to `depth`.
    pub fn nearest_index(&self, depth: f64) -> usize {
        self.depths
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - depth).abs().total_cmp(&(b.1 - depth).abs()))
            .map(|(j, _)| j)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocitySource {
    GroundTruth,
    PoseProvider,
}

/// Maps a velocity estimate onto metric scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleFn {
    Identity,
    /// Multiply by a reference-over-estimate median ratio.
    MedianRatio { ratio: f64 },
}

impl ScaleFn {
    /// Ratio of the medians of `reference` and `estimate`.
    pub fn median_ratio(reference: &[f64], estimate: &[f64]) -> Result<Self> {
        let r = median(reference).ok_or(Error::NoValidPixels)?;
        let e = median(estimate).ok_or(Error::NoValidPixels)?;
        if !(e > 0.0 && r > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "median ratio needs positive medians, got {r} / {e}"
            )));
        }
        Ok(ScaleFn::MedianRatio { ratio: r / e })
    }

    pub fn apply(&self, v: f64) -> f64 {
        match self {
            ScaleFn::Identity => v,
            ScaleFn::MedianRatio { ratio } => v * ratio,
        }
    }
}

pub(crate) fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityEstimate {
    /// Speed in m/s, before scaling.
    pub v: f64,
    pub source: VelocitySource,
    pub scale_fn: ScaleFn,
}

impl VelocityEstimate {
    pub fn with_source(mut self, source: VelocitySource) -> Self {
        self.source = source;
        self
    }

    pub fn with_scale(mut self, scale_fn: ScaleFn) -> Self {
        self.scale_fn = scale_fn;
        self
    }

    /// Metric-scale speed `𝒯(v)`.
    pub fn scaled(&self) -> f64 {
        self.scale_fn.apply(self.v)
    }
}

/// Speed implied by an inter-frame translation: `frame_rate·‖T‖₂`.
pub fn estimate_velocity(translation: &Vector3<f64>, frame_rate: f64) -> Result<VelocityEstimate> {
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "frame rate {frame_rate} must be > 0"
        )));
    }
    Ok(VelocityEstimate {
        v: frame_rate * translation.norm(),
        source: VelocitySource::PoseProvider,
        scale_fn: ScaleFn::Identity,
    })
}

/// Velocity-guided range: `fraction = clamp(β·𝒯(v))`.
pub fn velocity_range(center: f64, velocity: &VelocityEstimate, beta: f64) -> Result<DepthRange> {
    velocity_range_within(center, velocity, beta, &FractionClamp::default())
}

pub fn velocity_range_within(
    center: f64,
    velocity: &VelocityEstimate,
    beta: f64,
    clamp: &FractionClamp,
) -> Result<DepthRange> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("beta {beta} must be > 0")));
    }
    DepthRange::centered(center, clamp.apply(beta * velocity.scaled()))
}

pub fn fixed_range(center: f64, fraction: f64) -> Result<DepthRange> {
    DepthRange::centered(center, fraction)
}

/// Next cascade stage: same centre, half the fraction (never below the floor).
pub fn cascade_range(prev: &DepthRange) -> DepthRange {
    let fraction = (prev.fraction * 0.5).max(FRACTION_FLOOR.min(prev.fraction));
    DepthRange {
        d_min: prev.center * (1.0 - fraction),
        d_max: prev.center * (1.0 + fraction),
        center: prev.center,
        fraction,
    }
}

/// Confidence-driven range: `fraction = clamp(β·(1 − c))` with `c` clamped to
/// `[CONFIDENCE_EPS, 1]`.
pub fn confidence_range(center: f64, confidence: f64, beta: f64) -> Result<DepthRange> {
    confidence_range_within(center, confidence, beta, &FractionClamp::default())
}

pub fn confidence_range_within(
    center: f64,
    confidence: f64,
    beta: f64,
    clamp: &FractionClamp,
) -> Result<DepthRange> {
    if !(confidence > 0.0 && confidence <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence {confidence} outside (0, 1]"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("beta {beta} must be > 0")));
    }
    let c = confidence.max(CONFIDENCE_EPS);
    DepthRange::centered(center, clamp.apply(beta * (1.0 - c)))
}

/// `count` candidates uniformly spaced in inverse depth, from `d_max` down to
/// `d_min`.
pub fn inverse_sample(range: &DepthRange, count: usize) -> Result<DepthHypothesisSet> {
    if count < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two hypotheses, got {count}"
        )));
    }
    if range.d_min == range.d_max {
        return Ok(DepthHypothesisSet {
            depths: vec![range.center; count],
            range: *range,
        });
    }
    let inv_min = 1.0 / range.d_min;
    let inv_max = 1.0 / range.d_max;
    let last = (count - 1) as f64;
    let mut depths: Vec<f64> = (0..count)
        .map(|j| 1.0 / ((inv_min - inv_max) * j as f64 / last + inv_max))
        .collect();
    depths[0] = range.d_max;
    depths[count - 1] = range.d_min;
    Ok(DepthHypothesisSet {
        depths,
        range: *range,
    })
}

/// Per-pixel hypothesis sets for a whole grid, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisGrid {
    pub width: usize,
    pub height: usize,
    pub count: usize,
    pub depths: Vec<f64>,
    pub ranges: Vec<DepthRange>,
}

impl HypothesisGrid {
    pub fn from_ranges(
        width: usize,
        height: usize,
        ranges: Vec<DepthRange>,
        count: usize,
    ) -> Result<Self> {
        if ranges.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} ranges for a {width}x{height} grid",
                ranges.len()
            )));
        }
        let mut depths = Vec::with_capacity(ranges.len() * count);
        for range in &ranges {
            depths.extend(inverse_sample(range, count)?.depths);
        }
        Ok(Self {
            width,
            height,
            count,
            depths,
            ranges,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.count;
        &self.depths[i..i + self.count]
    }

    pub fn set(&self, x: usize, y: usize) -> DepthHypothesisSet {
        DepthHypothesisSet {
            depths: self.at(x, y).to_vec(),
            range: self.ranges[y * self.width + x],
        }
    }
}
