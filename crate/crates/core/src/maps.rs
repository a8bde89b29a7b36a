//! Dense raster containers shared by every stage.

use crate::error::{Error, Result};

/// Row-major `height × width × channels` array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageGrid {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let i = self.index(x, y, c);
        self.data[i] = value;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = self.index(x, y, 0);
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Bilinear sample of all channels at continuous `(u, v)` into `out`.
    /// Returns `false` (leaving `out` untouched) outside `[0, width) × [0, height)`;
    /// coordinates within 1e-9 below zero count as zero.
    #[inline]
    pub fn sample_bilinear(&self, u: f64, v: f64, out: &mut [f64]) -> bool {
        if !(u >= -1e-9 && v >= -1e-9 && u < self.width as f64 && v < self.height as f64) {
            return false;
        }
        let (u, v) = (u.max(0.0), v.max(0.0));
        let x0 = u.floor() as usize;
        let y0 = v.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (tx, ty) = (u - x0 as f64, v - y0 as f64);
        let (a, b) = (self.pixel(x0, y0), self.pixel(x1, y0));
        let (c, d) = (self.pixel(x0, y1), self.pixel(x1, y1));
        for ch in 0..self.channels {
            let top = a[ch] + tx * (b[ch] - a[ch]);
            let bottom = c[ch] + tx * (d[ch] - c[ch]);
            out[ch] = top + ty * (bottom - top);
        }
        true
    }

    /// Catmull-Rom bicubic sample with the same validity rule as
    /// [`sample_bilinear`](Self::sample_bilinear); neighbours beyond the
    /// border are clamped.
    #[inline]
    pub fn sample_cubic(&self, u: f64, v: f64, out: &mut [f64]) -> bool {
        if !(u >= -1e-9 && v >= -1e-9 && u < self.width as f64 && v < self.height as f64) {
            return false;
        }
        let (u, v) = (u.max(0.0), v.max(0.0));
        let (x0, y0) = (u.floor() as isize, v.floor() as isize);
        let wx = catmull_rom(u - x0 as f64);
        let wy = catmull_rom(v - y0 as f64);
        let (w, h) = (self.width as isize, self.height as isize);
        out[..self.channels].fill(0.0);
        for (j, wy) in wy.iter().enumerate() {
            let y = (y0 + j as isize - 1).clamp(0, h - 1) as usize;
            for (i, wx) in wx.iter().enumerate() {
                let x = (x0 + i as isize - 1).clamp(0, w - 1) as usize;
                let weight = wx * wy;
                for (o, p) in out.iter_mut().zip(self.pixel(x, y)) {
                    *o += weight * p;
                }
            }
        }
        true
    }

    /// Single channel as a plain scalar grid.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    /// Per-pixel mean over channels.
    pub fn gray(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.channels)
            .map(|px| px.iter().sum::<f64>() / self.channels as f64)
            .collect()
    }
}

/// Catmull-Rom weights for the samples at offsets −1, 0, 1, 2.
#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let (t2, t3) = (t * t, t * t * t);
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Which resolution a map lives at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Resolution {
    Quarter,
    Full,
}

/// Provenance of a depth map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DepthKind {
    GroundTruth,
    Mono,
    Mvs,
    Fused,
}

/// Scalar raster in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ScalarMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn same_shape(&self, other: &ScalarMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Strictly positive depth raster with resolution and provenance tags.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub values: ScalarMap,
    pub resolution: Resolution,
    pub kind: DepthKind,
}

impl DepthMap {
    pub fn new(values: ScalarMap, resolution: Resolution, kind: DepthKind) -> Result<Self> {
        if let Some(bad) = values.data.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "depth values must be finite and positive, found {bad}"
            )));
        }
        Ok(Self {
            values,
            resolution,
            kind,
        })
    }

    pub fn width(&self) -> usize {
        self.values.width
    }

    pub fn height(&self) -> usize {
        self.values.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values.get(x, y)
    }

    pub fn with_kind(mut self, kind: DepthKind) -> Self {
        self.kind = kind;
        self
    }
}

/// Per-pixel uncertainty in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    pub values: ScalarMap,
}

impl UncertaintyMap {
    pub fn new(values: ScalarMap) -> Result<Self> {
        if let Some(bad) = values.data.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "uncertainty {bad} outside [0, 1]"
            )));
        }
        Ok(Self { values })
    }
}

/// Boolean raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        }
    }

    /// Keeps pixels whose whole `(2r+1)²` window is set. Pixels whose window
    /// leaves the grid are cleared.
    pub fn eroded(&self, radius: usize) -> Mask {
        let (w, h) = (self.width, self.height);
        let data = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                x >= radius
                    && y >= radius
                    && x + radius < w
                    && y + radius < h
                    && (y - radius..=y + radius).all(|yy| (x - radius..=x + radius).all(|xx| self.get(xx, yy)))
            })
            .collect();
        Mask { width: w, height: h, data }
    }
}
