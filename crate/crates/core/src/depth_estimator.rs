//! From probability volumes to depth: localmax regression, entropy,
//! uncertainty, fusion and upsampling.

use rayon::prelude::*;

use crate::cost_volume::ProbabilityVolume;
use crate::error::{Error, Result};
use crate::maps::{DepthKind, DepthMap, Resolution, ScalarMap, UncertaintyMap};
use crate::sampling::HypothesisGrid;

const WEIGHT_EPS: f64 = 1e-12;

/// Index of the largest probability, lowest index on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = j;
        }
    }
    best
}

/// Probability-weighted mean inverse depth over `[X−r, X+r] ∩ [0, D−1]`
/// around the argmax `X`, returned as depth.
pub fn localmax(p: &[f64], depths: &[f64], r: usize) -> f64 {
    let x = argmax(p);
    let lo = x.saturating_sub(r);
    let hi = (x + r).min(p.len() - 1);
    let (mut num, mut den) = (0.0, 0.0);
    for j in lo..=hi {
        num += p[j] / depths[j];
        den += p[j];
    }
    if den < WEIGHT_EPS {
        return depths[x];
    }
    den / num
}

/// Runs [`localmax`] at every pixel against its own hypothesis set.
pub fn localmax_depth(prob: &ProbabilityVolume, hypotheses: &HypothesisGrid, r: usize) -> Result<DepthMap> {
    if prob.width != hypotheses.width || prob.height != hypotheses.height || prob.count != hypotheses.count {
        return Err(Error::ShapeMismatch(format!(
            "probabilities {}x{}x{} vs hypotheses {}x{}x{}",
            prob.width, prob.height, prob.count, hypotheses.width, hypotheses.height, hypotheses.count
        )));
    }
    if 2 * r + 1 > prob.count {
        return Err(Error::InvalidArgument(format!(
            "window radius {r} too large for {} hypotheses",
            prob.count
        )));
    }
    let d = prob.count;
    let data: Vec<f64> = (0..prob.width * prob.height)
        .into_par_iter()
        .map(|i| localmax(&prob.data[i * d..(i + 1) * d], &hypotheses.depths[i * d..(i + 1) * d], r))
        .collect();
    DepthMap::new(
        ScalarMap::new(prob.width, prob.height, data)?,
        Resolution::Quarter,
        DepthKind::Mvs,
    )
}

/// Shannon entropy in nats with `0·ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    h.clamp(0.0, (p.len() as f64).ln())
}

pub fn probability_entropy(prob: &ProbabilityVolume) -> ScalarMap {
    let d = prob.count;
    ScalarMap {
        width: prob.width,
        height: prob.height,
        data: prob.data.par_chunks(d).map(entropy).collect(),
    }
}

/// How entropy becomes uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UncertaintyMapping {
    /// `H / ln D`.
    Normalized,
    /// `σ(a·(H − b))`.
    AffineSigmoid { a: f64, b: f64 },
}

impl UncertaintyMapping {
    pub fn apply(&self, h: f64, count: usize) -> f64 {
        match *self {
            Self::Normalized => {
                if count <= 1 {
                    0.0
                } else {
                    (h / (count as f64).ln()).clamp(0.0, 1.0)
                }
            }
            Self::AffineSigmoid { a, b } => 1.0 / (1.0 + (-a * (h - b)).exp()),
        }
    }
}

pub fn uncertainty_from_entropy(
    entropy: &ScalarMap,
    count: usize,
    mapping: UncertaintyMapping,
) -> Result<UncertaintyMap> {
    if let UncertaintyMapping::AffineSigmoid { a, b } = mapping {
        if !(a >= 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigmoid mapping needs finite a >= 0 and b, got a={a} b={b}"
            )));
        }
    }
    UncertaintyMap::new(entropy.map(|h| mapping.apply(h, count)))
}

/// `U·mono + (1−U)·mvs`, per pixel.
pub fn fuse_depth(mono: &DepthMap, mvs: &DepthMap, u: &UncertaintyMap) -> Result<DepthMap> {
    if mono.resolution != mvs.resolution
        || !mono.values.same_shape(&mvs.values)
        || !mono.values.same_shape(&u.values)
    {
        return Err(Error::ShapeMismatch(format!(
            "cannot fuse {}x{} mono with {}x{} mvs and {}x{} uncertainty",
            mono.width(),
            mono.height(),
            mvs.width(),
            mvs.height(),
            u.values.width,
            u.values.height
        )));
    }
    let data = mono
        .values
        .data
        .iter()
        .zip(&mvs.values.data)
        .zip(&u.values.data)
        .map(|((m, s), w)| {
            let fused = w * m + (1.0 - w) * s;
            fused.clamp(m.min(*s), m.max(*s))
        })
        .collect();
    DepthMap::new(
        ScalarMap::new(mono.width(), mono.height(), data)?,
        mono.resolution,
        DepthKind::Fused,
    )
}

/// Bilinear upsampling by an integer factor. Output pixel `x` samples the
/// input at `(x − (factor−1)/2)/factor`, clamped to the input extent.
pub fn upsample_scalar(map: &ScalarMap, factor: usize) -> ScalarMap {
    let (w, h) = (map.width * factor, map.height * factor);
    let s = factor as f64;
    let offset = (s - 1.0) / 2.0;
    let coord = |x: usize, n: usize| -> (usize, usize, f64) {
        let c = ((x as f64 - offset) / s).clamp(0.0, (n - 1) as f64);
        let i0 = c.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, c - i0 as f64)
    };
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1, ty) = coord(y, map.height);
        for x in 0..w {
            let (x0, x1, tx) = coord(x, map.width);
            let top = map.get(x0, y0) + tx * (map.get(x1, y0) - map.get(x0, y0));
            let bottom = map.get(x0, y1) + tx * (map.get(x1, y1) - map.get(x0, y1));
            data.push(top + ty * (bottom - top));
        }
    }
    ScalarMap {
        width: w,
        height: h,
        data,
    }
}

/// Upsamples a quarter-resolution depth by interpolating inverse depth.
pub fn upsample_depth(quarter: &DepthMap, factor: usize) -> Result<DepthMap> {
    if factor == 0 {
        return Err(Error::InvalidArgument("upsampling factor must be >= 1".into()));
    }
    let inv = quarter.values.map(|d| 1.0 / d);
    let mut up = upsample_scalar(&inv, factor).map(|v| 1.0 / v);
    // Constant inputs stay bit-exact.
    if let Some(&first) = quarter.values.data.first() {
        if quarter.values.data.iter().all(|&d| d == first) {
            up.data.fill(first);
        }
    }
    let (lo, hi) = quarter
        .values
        .data
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
    for v in &mut up.data {
        *v = v.clamp(lo, hi);
    }
    DepthMap::new(up, Resolution::Full, quarter.kind)
}

/// Upsamples uncertainty with plain bilinear interpolation.
pub fn upsample_uncertainty(u: &UncertaintyMap, factor: usize) -> Result<UncertaintyMap> {
    UncertaintyMap::new(upsample_scalar(&u.values, factor).map(|v| v.clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use crate::sampling::{inverse_sample, DepthRange};

    #[test]
    fn localmax_examples() {
        let depths = [8.0, 4.0, 2.0, 1.0];
        assert_eq!(localmax(&[0.0, 0.0, 1.0, 0.0], &depths, 1), 2.0);
        let d = localmax(&[0.1, 0.6, 0.2, 0.1], &depths, 1);
        // Oracle: weighted harmonic mean over bins 0..=2.
        let oracle = 0.9 / (0.1 / 8.0 + 0.6 / 4.0 + 0.2 / 2.0);
        assert_relative_eq!(d, oracle, epsilon = 1e-12);
        assert_relative_eq!(d, 3.4286, epsilon = 1e-4);
        assert_eq!(localmax(&[0.1, 0.6, 0.2, 0.1], &depths, 0), 4.0);
        // Ties go to the lowest index.
        assert_eq!(localmax(&[0.5, 0.5, 0.0, 0.0], &depths, 0), 8.0);
        // Window truncated at the far end.
        let d = localmax(&[0.0, 0.0, 0.3, 0.7], &depths, 1);
        assert_relative_eq!(d, 1.0 / (0.3 / 2.0 + 0.7), epsilon = 1e-12);
        // Zero mass in the window falls back to the argmax bin.
        assert_eq!(localmax(&[0.0; 4], &depths, 1), 8.0);
    }

    #[test]
    fn localmax_depth_checks_window() {
        let range = DepthRange::centered(4.0, 0.5).unwrap();
        let hyp = HypothesisGrid::from_ranges(1, 1, vec![range], 2).unwrap();
        let prob = ProbabilityVolume {
            width: 1,
            height: 1,
            count: 2,
            data: vec![0.5, 0.5],
            low_evidence: vec![false],
        };
        assert!(localmax_depth(&prob, &hyp, 1).is_err());
        let d = localmax_depth(&prob, &hyp, 0).unwrap();
        assert_eq!(d.get(0, 0), 6.0);
        assert_eq!((d.resolution, d.kind), (Resolution::Quarter, DepthKind::Mvs));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert_relative_eq!(entropy(&[1.0 / 16.0; 16]), 16f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(entropy(&[0.5, 0.5, 0.0, 0.0]), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(16f64.ln(), 2.7726, epsilon = 1e-4);
    }

    #[test]
    fn uncertainty_examples() {
        let ln16 = 16f64.ln();
        let e = ScalarMap::new(3, 1, vec![0.0, ln16, 0.5 * ln16]).unwrap();
        let u = uncertainty_from_entropy(&e, 16, UncertaintyMapping::Normalized).unwrap();
        assert_eq!(u.values.data[0], 0.0);
        assert_relative_eq!(u.values.data[1], 1.0, epsilon = 1e-15);
        assert_relative_eq!(u.values.data[2], 0.5, epsilon = 1e-15);
        let s = UncertaintyMapping::AffineSigmoid { a: 4.0, b: 1.0 };
        let u = uncertainty_from_entropy(&e, 16, s).unwrap();
        assert!(u.values.data[0] < u.values.data[2] && u.values.data[2] < u.values.data[1]);
        let bad = UncertaintyMapping::AffineSigmoid { a: -1.0, b: 0.0 };
        assert!(uncertainty_from_entropy(&e, 16, bad).is_err());
    }

    fn depth(w: usize, h: usize, data: Vec<f64>) -> DepthMap {
        DepthMap::new(ScalarMap::new(w, h, data).unwrap(), Resolution::Quarter, DepthKind::Mono).unwrap()
    }

    #[test]
    fn fusion_examples() {
        let mono = depth(1, 1, vec![4.0]);
        let mvs = depth(1, 1, vec![2.0]).with_kind(DepthKind::Mvs);
        let u = |v| UncertaintyMap::new(ScalarMap::filled(1, 1, v)).unwrap();
        assert_eq!(fuse_depth(&mono, &mvs, &u(1.0)).unwrap().get(0, 0), 4.0);
        assert_eq!(fuse_depth(&mono, &mvs, &u(0.0)).unwrap().get(0, 0), 2.0);
        let f = fuse_depth(&mono, &mvs, &u(0.5)).unwrap();
        assert_eq!(f.get(0, 0), 3.0);
        assert_eq!(f.kind, DepthKind::Fused);
        let other = depth(2, 1, vec![1.0, 1.0]);
        assert!(fuse_depth(&mono, &other, &u(0.5)).is_err());
        let mut full = mvs.clone();
        full.resolution = Resolution::Full;
        assert!(fuse_depth(&mono, &full, &u(0.5)).is_err());
    }

    #[test]
    fn upsampling_examples() {
        let c = upsample_depth(&depth(3, 2, vec![7.0; 6]), 4).unwrap();
        assert_eq!((c.width(), c.height(), c.resolution), (12, 8, Resolution::Full));
        assert!(c.values.data.iter().all(|&v| v == 7.0));

        // Inverse depth 1 on the left, 0.5 on the right.
        let step = upsample_depth(&depth(2, 1, vec![1.0, 2.0]), 4).unwrap();
        let inv: Vec<f64> = step.values.data.iter().map(|d| 1.0 / d).collect();
        for x in 0..2 {
            assert_relative_eq!(inv[x], 1.0, epsilon = 1e-12);
            assert_relative_eq!(inv[6 + x], 0.5, epsilon = 1e-12);
        }
        // Linear ramp between the two input centres (1.5 and 5.5).
        for x in 1..6 {
            let t = (x as f64 - 1.5) / 4.0;
            let expected = 1.0 - 0.5 * t.clamp(0.0, 1.0);
            assert_relative_eq!(inv[x], expected, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn upsample_stays_within_input_bounds(values in prop::collection::vec(0.5..50.0f64, 12)) {
            let q = depth(4, 3, values.clone());
            let up = upsample_depth(&q, 4).unwrap();
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(0.0, f64::max);
            prop_assert!(up.values.data.iter().all(|&v| v >= lo && v <= hi));
        }

        #[test]
        fn fusion_is_convex(m in 0.5..80.0f64, s in 0.5..80.0f64, w in 0.0..=1.0f64) {
            let f = fuse_depth(
                &depth(1, 1, vec![m]),
                &depth(1, 1, vec![s]),
                &UncertaintyMap::new(ScalarMap::filled(1, 1, w)).unwrap(),
            )
            .unwrap()
            .get(0, 0);
            prop_assert!(f >= m.min(s) && f <= m.max(s));
        }

        #[test]
        fn localmax_within_window_and_entropy_bounded(
            raw in prop::collection::vec(0.0..1.0f64, 16),
            center in 1.0..60.0f64,
            fraction in 0.01..0.9f64,
            r in 0usize..4,
        ) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-9);
            let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let set = inverse_sample(&DepthRange::centered(center, fraction).unwrap(), 16).unwrap();
            let d = localmax(&p, &set.depths, r);
            let x = argmax(&p);
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(15);
            // Depths descend with the index.
            prop_assert!(d <= set.depths[lo] * (1.0 + 1e-12) && d >= set.depths[hi] * (1.0 - 1e-12));
            let h = entropy(&p);
            prop_assert!(h >= 0.0 && h <= 16f64.ln());
        }
    }
}
