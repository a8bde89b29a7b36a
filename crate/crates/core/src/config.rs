//! Experiment configuration: flat `key = value` text, typed and validated.
//!
//! `#` starts a comment. Unknown keys, duplicate keys and unparsable values
//! are errors. Every key has a default, so an empty file is a valid
//! configuration.

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::cost_volume::Interpolation;
use crate::depth_estimator::UncertaintyMapping;
use crate::error::{Error, Result};
use crate::metrics::{EvalOptions, DDAD_CAP, KITTI_CAP};
use crate::photometric::LossWeights;
use crate::sampling::{FractionClamp, FRACTION_CEIL, FRACTION_FLOOR};
use crate::scene_sim::PriorNoise;

macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!(
                        "expected one of {}",
                        [$($text),+].join(", ")
                    )),
                }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(
    /// Synthetic scene layouts.
    ScenePreset {
        Textured => "textured",
        MovingObject => "moving_object",
        TexturelessPatch => "textureless_patch",
        Fusion => "fusion",
    }
);

keyword_enum!(MotionDirection {
    Lateral => "lateral",
    Forward => "forward",
});

keyword_enum!(
    /// How per-pixel search ranges are chosen around the prior.
    StrategyKind {
        Velocity => "velocity",
        Fixed => "fixed",
        Cascade => "cascade",
        Confidence => "confidence",
    }
);

keyword_enum!(MappingKind {
    Normalized => "normalized",
    AffineSigmoid => "affine_sigmoid",
});

keyword_enum!(FuseAt {
    Quarter => "quarter",
    Full => "full",
});

keyword_enum!(PriorKind {
    Multiplicative => "multiplicative",
    Bias => "bias",
    LowFrequency => "low_frequency",
});

keyword_enum!(
    /// Pose provider error model. `chained` composes independently
    /// perturbed per-step increments.
    PoseNoiseMode {
        None => "none",
        Isotropic => "isotropic",
        Chained => "chained",
    }
);

keyword_enum!(InterpolationKind {
    Cubic => "cubic",
    Bilinear => "bilinear",
});

keyword_enum!(VelocityScale {
    Identity => "identity",
    MedianRatio => "median_ratio",
});

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scene: ScenePreset,
    pub width: usize,
    pub height: usize,
    /// Full-resolution focal length in pixels.
    pub focal: f64,
    /// Camera speed in m/s.
    pub speed: f64,
    pub direction: MotionDirection,
    pub frame_rate: f64,
    pub frames: usize,
    pub depth_bins: usize,
    pub groups: usize,
    pub channels: usize,
    pub beta: f64,
    pub fraction_floor: f64,
    pub fraction_ceil: f64,
    pub radius: usize,
    pub temperature: f64,
    pub interpolation: InterpolationKind,
    /// Rescale feature groups to a common norm before correlating.
    pub normalize_features: bool,
    pub strategy: StrategyKind,
    /// Half-width of the `fixed` range and of the first cascade stage.
    pub fixed_fraction: f64,
    pub uncertainty: MappingKind,
    pub sigmoid_a: f64,
    pub sigmoid_b: f64,
    pub fuse_at: FuseAt,
    pub fuse: bool,
    pub lambda: [f64; 3],
    pub gamma: f64,
    pub prior_noise: PriorKind,
    pub prior_sigma: f64,
    pub prior_bias: f64,
    pub prior_cells: usize,
    pub pose_noise: PoseNoiseMode,
    pub pose_noise_sigma: f64,
    pub pose_scale: f64,
    pub velocity_scale: VelocityScale,
    pub eval_cap: f64,
    pub median_scale: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: ScenePreset::Textured,
            width: 160,
            height: 48,
            focal: 320.0,
            speed: 2.0,
            direction: MotionDirection::Lateral,
            frame_rate: 5.0,
            frames: 3,
            depth_bins: 16,
            groups: 16,
            channels: 32,
            beta: 0.15,
            fraction_floor: FRACTION_FLOOR,
            fraction_ceil: FRACTION_CEIL,
            radius: 1,
            temperature: 0.1,
            interpolation: InterpolationKind::Cubic,
            normalize_features: true,
            strategy: StrategyKind::Velocity,
            fixed_fraction: 0.5,
            uncertainty: MappingKind::AffineSigmoid,
            sigmoid_a: 10.0,
            sigmoid_b: 2.2,
            fuse_at: FuseAt::Quarter,
            fuse: true,
            lambda: [1.0; 3],
            gamma: 0.001,
            prior_noise: PriorKind::Multiplicative,
            prior_sigma: 0.1,
            prior_bias: 1.0,
            prior_cells: 4,
            pose_noise: PoseNoiseMode::None,
            pose_noise_sigma: 0.0,
            pose_scale: 1.0,
            velocity_scale: VelocityScale::Identity,
            eval_cap: KITTI_CAP,
            median_scale: true,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?} ({e})")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", i + 1)));
            }
            config
                .set(key, value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_config(e))))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key from its textual value without validating the whole
    /// configuration.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "scene" => self.scene = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "focal" => self.focal = parse(key, value)?,
            "speed" => self.speed = parse(key, value)?,
            "direction" => self.direction = parse(key, value)?,
            "frame_rate" => self.frame_rate = parse(key, value)?,
            "frames" => self.frames = parse(key, value)?,
            "depth_bins" => self.depth_bins = parse(key, value)?,
            "groups" => self.groups = parse(key, value)?,
            "channels" => self.channels = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "fraction_floor" => self.fraction_floor = parse(key, value)?,
            "fraction_ceil" => self.fraction_ceil = parse(key, value)?,
            "radius" => self.radius = parse(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "interpolation" => self.interpolation = parse(key, value)?,
            "normalize_features" => self.normalize_features = parse_bool(key, value)?,
            "strategy" => self.strategy = parse(key, value)?,
            "fixed_fraction" => self.fixed_fraction = parse(key, value)?,
            "uncertainty" => self.uncertainty = parse(key, value)?,
            "sigmoid_a" => self.sigmoid_a = parse(key, value)?,
            "sigmoid_b" => self.sigmoid_b = parse(key, value)?,
            "fuse_at" => self.fuse_at = parse(key, value)?,
            "fuse" => self.fuse = parse_bool(key, value)?,
            "lambda_mono" => self.lambda[0] = parse(key, value)?,
            "lambda_mvs" => self.lambda[1] = parse(key, value)?,
            "lambda_fused" => self.lambda[2] = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "prior_noise" => self.prior_noise = parse(key, value)?,
            "prior_sigma" => self.prior_sigma = parse(key, value)?,
            "prior_bias" => self.prior_bias = parse(key, value)?,
            "prior_cells" => self.prior_cells = parse(key, value)?,
            "pose_noise" => self.pose_noise = parse(key, value)?,
            "pose_noise_sigma" => self.pose_noise_sigma = parse(key, value)?,
            "pose_scale" => self.pose_scale = parse(key, value)?,
            "velocity_scale" => self.velocity_scale = parse(key, value)?,
            "eval_cap" => {
                self.eval_cap = match value {
                    "kitti" => KITTI_CAP,
                    "ddad" => DDAD_CAP,
                    _ => parse(key, value)?,
                }
            }
            "median_scale" => self.median_scale = parse_bool(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Every key with its current value, sorted by key.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("beta", num(self.beta)),
            ("channels", self.channels.to_string()),
            ("depth_bins", self.depth_bins.to_string()),
            ("direction", self.direction.to_string()),
            ("eval_cap", num(self.eval_cap)),
            ("fixed_fraction", num(self.fixed_fraction)),
            ("focal", num(self.focal)),
            ("fraction_ceil", num(self.fraction_ceil)),
            ("fraction_floor", num(self.fraction_floor)),
            ("frame_rate", num(self.frame_rate)),
            ("frames", self.frames.to_string()),
            ("fuse", self.fuse.to_string()),
            ("fuse_at", self.fuse_at.to_string()),
            ("gamma", num(self.gamma)),
            ("groups", self.groups.to_string()),
            ("height", self.height.to_string()),
            ("interpolation", self.interpolation.to_string()),
            ("lambda_fused", num(self.lambda[2])),
            ("lambda_mono", num(self.lambda[0])),
            ("lambda_mvs", num(self.lambda[1])),
            ("median_scale", self.median_scale.to_string()),
            ("normalize_features", self.normalize_features.to_string()),
            ("pose_noise", self.pose_noise.to_string()),
            ("pose_noise_sigma", num(self.pose_noise_sigma)),
            ("pose_scale", num(self.pose_scale)),
            ("prior_bias", num(self.prior_bias)),
            ("prior_cells", self.prior_cells.to_string()),
            ("prior_noise", self.prior_noise.to_string()),
            ("prior_sigma", num(self.prior_sigma)),
            ("radius", self.radius.to_string()),
            ("scene", self.scene.to_string()),
            ("seed", self.seed.to_string()),
            ("sigmoid_a", num(self.sigmoid_a)),
            ("sigmoid_b", num(self.sigmoid_b)),
            ("speed", num(self.speed)),
            ("strategy", self.strategy.to_string()),
            ("temperature", num(self.temperature)),
            ("uncertainty", self.uncertainty.to_string()),
            ("velocity_scale", self.velocity_scale.to_string()),
            ("width", self.width.to_string()),
        ];
        out.sort_by_key(|(k, _)| *k);
        out
    }

    /// Canonical text form; parses back to an equal configuration.
    pub fn to_canonical(&self) -> String {
        self.pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.width == 0 || self.height == 0 || self.width % 4 != 0 || self.height % 4 != 0 {
            return fail(format!(
                "width and height must be positive multiples of 4, got {}x{}",
                self.width, self.height
            ));
        }
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return fail(format!("focal must be > 0, got {}", self.focal));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return fail(format!("speed must be >= 0, got {}", self.speed));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return fail(format!("frame_rate must be > 0, got {}", self.frame_rate));
        }
        if self.frames < 2 {
            return fail(format!("frames must be >= 2, got {}", self.frames));
        }
        if self.depth_bins < 2 {
            return fail(format!("depth_bins must be >= 2, got {}", self.depth_bins));
        }
        if self.channels == 0 || self.channels > crate::cost_volume::FEATURE_CHANNELS {
            return fail(format!(
                "channels must be in 1..={}, got {}",
                crate::cost_volume::FEATURE_CHANNELS,
                self.channels
            ));
        }
        if self.groups == 0 || self.channels % self.groups != 0 {
            return fail(format!(
                "channels ({}) must be divisible by groups ({})",
                self.channels, self.groups
            ));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return fail(format!("beta must be > 0, got {}", self.beta));
        }
        if let Err(e) = FractionClamp::new(self.fraction_floor, self.fraction_ceil) {
            return fail(strip_config(e));
        }
        if 2 * self.radius + 1 > self.depth_bins {
            return fail(format!(
                "radius {} too large for {} depth bins",
                self.radius, self.depth_bins
            ));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail(format!("temperature must be > 0, got {}", self.temperature));
        }
        if !(self.fixed_fraction > 0.0 && self.fixed_fraction < 1.0) {
            return fail(format!(
                "fixed_fraction must be in (0, 1), got {}",
                self.fixed_fraction
            ));
        }
        if !(self.sigmoid_a >= 0.0 && self.sigmoid_a.is_finite() && self.sigmoid_b.is_finite()) {
            return fail("sigmoid_a must be >= 0 and sigmoid_b finite".into());
        }
        if self.lambda.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return fail("loss weights must be >= 0".into());
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !(self.prior_sigma >= 0.0 && self.prior_sigma.is_finite()) {
            return fail(format!("prior_sigma must be >= 0, got {}", self.prior_sigma));
        }
        if !(self.prior_bias > 0.0 && self.prior_bias.is_finite()) {
            return fail(format!("prior_bias must be > 0, got {}", self.prior_bias));
        }
        if self.prior_cells == 0 {
            return fail("prior_cells must be >= 1".into());
        }
        if !(self.pose_noise_sigma >= 0.0 && self.pose_noise_sigma.is_finite()) {
            return fail(format!(
                "pose_noise_sigma must be >= 0, got {}",
                self.pose_noise_sigma
            ));
        }
        if !(self.pose_scale > 0.0 && self.pose_scale.is_finite()) {
            return fail(format!("pose_scale must be > 0, got {}", self.pose_scale));
        }
        if !(self.eval_cap > crate::metrics::MIN_DEPTH && self.eval_cap.is_finite()) {
            return fail(format!("eval_cap too small: {}", self.eval_cap));
        }
        Ok(())
    }

    pub fn fraction_clamp(&self) -> FractionClamp {
        FractionClamp {
            floor: self.fraction_floor,
            ceil: self.fraction_ceil,
        }
    }

    pub fn sampler(&self) -> Interpolation {
        match self.interpolation {
            InterpolationKind::Cubic => Interpolation::Cubic,
            InterpolationKind::Bilinear => Interpolation::Bilinear,
        }
    }

    pub fn mapping(&self) -> UncertaintyMapping {
        match self.uncertainty {
            MappingKind::Normalized => UncertaintyMapping::Normalized,
            MappingKind::AffineSigmoid => UncertaintyMapping::AffineSigmoid {
                a: self.sigmoid_a,
                b: self.sigmoid_b,
            },
        }
    }

    pub fn prior(&self) -> PriorNoise {
        match self.prior_noise {
            PriorKind::Multiplicative => PriorNoise::Multiplicative {
                sigma: self.prior_sigma,
            },
            PriorKind::Bias => PriorNoise::Bias {
                factor: self.prior_bias,
            },
            PriorKind::LowFrequency => PriorNoise::LowFrequency {
                sigma: self.prior_sigma,
                cells: self.prior_cells,
            },
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda: self.lambda,
            gamma: self.gamma,
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            median_scale: self.median_scale,
            cap: self.eval_cap,
        }
    }
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config(msg) => msg,
        other => other.to_string(),
    }
}
