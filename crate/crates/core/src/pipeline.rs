//! End-to-end runs: scene and trajectory from a configuration, then per frame
//! pair velocity → ranges → hypotheses → features → warp → correlation →
//! probability → localmax → entropy → uncertainty → fusion → upsampling →
//! evaluation.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::{Vector3, Rotation3, Unit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, FuseAt, MotionDirection, PoseNoiseMode, ScenePreset, StrategyKind, VelocityScale};
use crate::cost_volume::{
    build_warped_volume, cost_to_probability, extract_features, group_correlation, FeatureGrid, ProbabilityVolume,
    FEATURE_STRIDE,
};
use crate::depth_estimator::{
    fuse_depth, localmax_depth, probability_entropy, uncertainty_from_entropy, upsample_depth, upsample_uncertainty,
};
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::maps::{DepthKind, DepthMap, ImageGrid, Mask, Resolution, ScalarMap, UncertaintyMap};
use crate::metrics::{evaluate, MetricReport};
use crate::pfm::{export_depth, export_uncertainty};
use crate::photometric::{composite_loss, DepthSet, LossBreakdown, SourceView};
use crate::sampling::{
    confidence_range_within, estimate_velocity, fixed_range, median, velocity_range_within, DepthRange, HypothesisGrid, ScaleFn,
    VelocityEstimate, VelocitySource,
};
use crate::scene_sim::{make_sequence, perturb_prior, render_at, RenderedFrame, Scene, Shape, Surface, Texture, Trajectory};

pub const SCHEMA_VERSION: u32 = 1;

/// Texture wavelength targeted on screen, in full-resolution pixels.
const TEXTURE_PIXELS: f64 = 16.0;

/// World velocity of the moving board, m/s. It keeps pace with the default
/// camera laterally, so it shows no parallax.
pub const MOVING_VELOCITY: [f64; 3] = [2.0, 1.0, 0.0];

fn mix(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn camera(config: &ExperimentConfig) -> Result<Intrinsics> {
    Intrinsics::centered(config.focal, config.width, config.height)
}

fn textured(seed: u64, depth: f64, focal: f64) -> Texture {
    Texture::noise(seed, TEXTURE_PIXELS * depth / focal)
}

fn board(x: f64, z: f64, half_w: f64, seed: u64, focal: f64) -> Surface {
    Surface::new(Shape::fronto_parallel(x, 0.0, z, half_w, 5.0), textured(seed, z, focal))
}

/// Scene for a preset. Every preset looks at a textured wall receding from
/// 5 m on the left to 20 m on the right; the other presets add boards
/// spanning the full image height in front of it.
pub fn build_scene(config: &ExperimentConfig) -> Scene {
    let f = config.focal;
    let s = config.seed;
    let yaw = 15f64.atan2(10.0);
    let mut scene = Scene::new(25.0, textured(mix(s, 100), 25.0, f))
        .with_depth_bounds(0.5, 30.0)
        .with_surface(Surface::new(
            Shape::yawed_wall(Vector3::new(3.0, 0.0, 12.5), yaw, 11.0, 5.0),
            textured(mix(s, 101), 10.0, f),
        ));
    if matches!(config.scene, ScenePreset::TexturelessPatch | ScenePreset::Fusion) {
        scene = scene.with_surface(Surface::new(
            Shape::fronto_parallel(-0.75, 0.0, 6.0, 0.35, 5.0),
            Texture::flat([0.55, 0.5, 0.45]),
        ));
    }
    if matches!(config.scene, ScenePreset::MovingObject | ScenePreset::Fusion) {
        let v = Vector3::from(MOVING_VELOCITY);
        scene = scene.with_surface(board(0.9, 8.0, 0.7, mix(s, 105), f).moving(v));
    }
    scene
}

pub fn build_trajectory(config: &ExperimentConfig) -> Result<Trajectory> {
    let dir = match config.direction {
        MotionDirection::Lateral => Vector3::x(),
        MotionDirection::Forward => Vector3::z(),
    };
    let velocity = dir * config.speed;
    let span = config.speed * (config.frames - 1) as f64 / config.frame_rate;
    let start = match config.direction {
        MotionDirection::Lateral => -dir * (span / 2.0),
        MotionDirection::Forward => Vector3::zeros(),
    };
    Trajectory::constant_velocity(start, velocity, config.frame_rate, config.frames)
}

/// Relative poses as a pose estimator would report them.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseProvider {
    /// `increments[k]` maps camera `k+1` into camera `k`.
    increments: Vec<Pose>,
    pub scale_fn: ScaleFn,
    pub exact: bool,
}

fn small_rotation(rng: &mut ChaCha8Rng, sigma: f64) -> nalgebra::Matrix3<f64> {
    let axis = Vector3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    );
    let angle: f64 = StandardNormal.sample(rng);
    match Unit::try_new(axis, 1e-12) {
        Some(axis) => *Rotation3::from_axis_angle(&axis, sigma * angle).matrix(),
        None => nalgebra::Matrix3::identity(),
    }
}

impl PoseProvider {
    pub fn new(config: &ExperimentConfig, trajectory: &Trajectory) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, 7));
        let sigma = config.pose_noise_sigma;
        let n = trajectory.poses.len();
        let mut truth = Vec::with_capacity(n.saturating_sub(1));
        let mut increments = Vec::with_capacity(n.saturating_sub(1));
        for k in 0..n - 1 {
            let gt = trajectory.relative(k + 1, k);
            truth.push(gt.translation.norm());
            let noise = Vector3::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
            let (rotation, translation) = match config.pose_noise {
                PoseNoiseMode::None => (gt.rotation, gt.translation),
                PoseNoiseMode::Isotropic => (gt.rotation, gt.translation + noise * sigma),
                PoseNoiseMode::Chained => (
                    small_rotation(&mut rng, sigma) * gt.rotation,
                    gt.translation + noise * sigma,
                ),
            };
            increments.push(Pose {
                rotation,
                translation: translation * config.pose_scale,
            });
        }
        let estimates: Vec<f64> = increments.iter().map(|p| p.translation.norm()).collect();
        let scale_fn = match config.velocity_scale {
            VelocityScale::Identity => ScaleFn::Identity,
            VelocityScale::MedianRatio => ScaleFn::median_ratio(&truth, &estimates)?,
        };
        Ok(Self {
            increments,
            scale_fn,
            exact: config.pose_noise == PoseNoiseMode::None && config.pose_scale == 1.0,
        })
    }

    /// Pose from camera `from` into camera `to`, chained through the
    /// per-step increments and rescaled by the scale function.
    pub fn relative(&self, from: usize, to: usize) -> Pose {
        let mut pose = Pose::identity();
        if from > to {
            for k in (to..from).rev() {
                pose = pose.then(&self.increments[k]);
            }
        } else {
            for k in from..to {
                pose = pose.then(&self.increments[k].inverse());
            }
        }
        pose.translation = pose.translation.map(|t| self.scale_fn.apply(t));
        pose
    }

    pub fn velocity(&self, from: usize, to: usize, frame_rate: f64) -> Result<VelocityEstimate> {
        let mut raw = Pose::identity();
        if from > to {
            for k in (to..from).rev() {
                raw = raw.then(&self.increments[k]);
            }
        } else {
            for k in from..to {
                raw = raw.then(&self.increments[k].inverse());
            }
        }
        let source = if self.exact {
            VelocitySource::GroundTruth
        } else {
            VelocitySource::PoseProvider
        };
        let steps = from.abs_diff(to).max(1) as f64;
        Ok(estimate_velocity(&raw.translation, frame_rate / steps)?
            .with_source(source)
            .with_scale(self.scale_fn))
    }
}

/// Metric reports for the three depth estimates of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthReports {
    pub mono: MetricReport,
    pub mvs: MetricReport,
    pub fused: MetricReport,
}

impl DepthReports {
    pub fn get(&self, kind: DepthKind) -> Option<&MetricReport> {
        match kind {
            DepthKind::Mono => Some(&self.mono),
            DepthKind::Mvs => Some(&self.mvs),
            DepthKind::Fused => Some(&self.fused),
            DepthKind::GroundTruth => None,
        }
    }
}

/// Everything computed for one target frame.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub index: usize,
    pub velocity: f64,
    /// Mean per-pixel range fraction; equals `β·𝒯(v)` for the velocity
    /// strategy.
    pub fraction: f64,
    pub prior_quarter: DepthMap,
    pub mvs_quarter: DepthMap,
    pub uncertainty_quarter: UncertaintyMap,
    pub mono: DepthMap,
    pub mvs: DepthMap,
    pub fused: DepthMap,
    pub uncertainty: UncertaintyMap,
    pub gt: DepthMap,
    pub gt_quarter: DepthMap,
    pub labels: Vec<u32>,
    pub labels_quarter: Vec<u32>,
    pub probability: ProbabilityVolume,
    pub hypotheses: HypothesisGrid,
    pub low_evidence: usize,
    pub metrics: DepthReports,
    pub loss: Option<LossBreakdown>,
}

impl FrameOutput {
    pub fn label_mask(&self, pred: impl Fn(u32) -> bool) -> Mask {
        Mask {
            width: self.gt.width(),
            height: self.gt.height(),
            data: self.labels.iter().map(|&l| pred(l)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum FrameResult {
    Done(Box<FrameOutput>),
    Failed { index: usize, diagnostic: String },
}

impl FrameResult {
    pub fn index(&self) -> usize {
        match self {
            FrameResult::Done(f) => f.index,
            FrameResult::Failed { index, .. } => *index,
        }
    }

    pub fn output(&self) -> Option<&FrameOutput> {
        match self {
            FrameResult::Done(f) => Some(f),
            FrameResult::Failed { .. } => None,
        }
    }
}

/// Rendered inputs shared by every frame of a run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scene: Scene,
    pub camera: Intrinsics,
    pub camera_quarter: Intrinsics,
    pub trajectory: Trajectory,
    pub frames: Vec<RenderedFrame>,
    pub quarter: Vec<RenderedFrame>,
    pub priors: Vec<DepthMap>,
    pub provider: PoseProvider,
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let scene = build_scene(config);
        let camera = camera(config)?;
        let camera_quarter = camera.downscaled(FEATURE_STRIDE)?;
        let trajectory = build_trajectory(config)?;
        let frames = make_sequence(&scene, &trajectory, &camera)?;
        let quarter: Vec<RenderedFrame> = trajectory
            .poses
            .par_iter()
            .enumerate()
            .map(|(i, pose)| {
                let mut q = render_at(&scene, &camera_quarter, pose, trajectory.time(i))?;
                q.depth_gt.resolution = Resolution::Quarter;
                Ok(q)
            })
            .collect::<Result<_>>()?;
        let priors = quarter
            .iter()
            .enumerate()
            .map(|(i, q)| perturb_prior(&q.depth_gt, config.prior(), mix(config.seed, 1000 + i as u64)))
            .collect::<Result<_>>()?;
        let provider = PoseProvider::new(config, &trajectory)?;
        Ok(Self {
            config: config.clone(),
            scene,
            camera,
            camera_quarter,
            trajectory,
            frames,
            quarter,
            priors,
            provider,
        })
    }

    fn features(&self, image: &ImageGrid) -> Result<FeatureGrid> {
        let mut feat = extract_features(image)?;
        let c = self.config.channels;
        if c < feat.channels() {
            let g = &feat.grid;
            feat.grid = ImageGrid::from_fn(g.width, g.height, c, |x, y, ch| g.get(x, y, ch));
        }
        Ok(feat)
    }

    fn ranges(&self, prior: &DepthMap, velocity: &VelocityEstimate) -> Result<Vec<DepthRange>> {
        let c = &self.config;
        match c.strategy {
            StrategyKind::Velocity => prior
                .values
                .data
                .iter()
                .map(|&d| velocity_range_within(d, velocity, c.beta, &c.fraction_clamp()))
                .collect(),
            StrategyKind::Fixed | StrategyKind::Cascade => prior
                .values
                .data
                .iter()
                .map(|&d| fixed_range(d, c.fixed_fraction))
                .collect(),
            StrategyKind::Confidence => {
                let conf = prior_confidence(&prior.values);
                prior
                    .values
                    .data
                    .iter()
                    .zip(&conf.data)
                    .map(|(&d, &k)| confidence_range_within(d, k, c.beta, &c.fraction_clamp()))
                    .collect()
            }
        }
    }

    fn sweep(
        &self,
        ranges: Vec<DepthRange>,
        feat_cur: &FeatureGrid,
        feat_src: &FeatureGrid,
        pose: &Pose,
    ) -> Result<(HypothesisGrid, ProbabilityVolume, DepthMap)> {
        let c = &self.config;
        let hyp = HypothesisGrid::from_ranges(feat_cur.width(), feat_cur.height(), ranges, c.depth_bins)?;
        let mut volume = build_warped_volume(feat_src, &hyp, &self.camera_quarter, pose, c.sampler())?;
        let cost = if c.normalize_features {
            volume.normalize_groups(c.groups)?;
            group_correlation(&volume, &feat_cur.normalized_groups(c.groups)?, c.groups)?
        } else {
            group_correlation(&volume, feat_cur, c.groups)?
        };
        let prob = cost_to_probability(&cost, c.temperature)?;
        let mvs = localmax_depth(&prob, &hyp, c.radius)?;
        Ok((hyp, prob, mvs))
    }

    /// Runs the pipeline for target frame `t` against source frame `t − 1`.
    pub fn process(&self, t: usize) -> Result<FrameOutput> {
        if t == 0 || t >= self.frames.len() {
            return Err(Error::InvalidArgument(format!(
                "target frame {t} needs a previous frame"
            )));
        }
        let c = &self.config;
        let pose = self.provider.relative(t, t - 1);
        let velocity = self.provider.velocity(t, t - 1, c.frame_rate)?;
        let prior = &self.priors[t];
        let feat_cur = self.features(&self.frames[t].image)?;
        let feat_src = self.features(&self.frames[t - 1].image)?;

        let ranges = self.ranges(prior, &velocity)?;
        let (mut hyp, mut prob, mut mvs_q) = self.sweep(ranges, &feat_cur, &feat_src, &pose)?;
        if c.strategy == StrategyKind::Cascade {
            let ranges = hyp
                .ranges
                .iter()
                .zip(&mvs_q.values.data)
                .map(|(r, &d)| DepthRange::centered(d, crate::sampling::cascade_range(r).fraction))
                .collect::<Result<Vec<_>>>()?;
            (hyp, prob, mvs_q) = self.sweep(ranges, &feat_cur, &feat_src, &pose)?;
        }
        let fraction = hyp.ranges.iter().map(|r| r.fraction).sum::<f64>() / hyp.ranges.len() as f64;

        let entropy = probability_entropy(&prob);
        let u_q = uncertainty_from_entropy(&entropy, c.depth_bins, c.mapping())?;
        let u_full = upsample_uncertainty(&u_q, FEATURE_STRIDE)?;
        let mono = upsample_depth(prior, FEATURE_STRIDE)?;
        let mvs = upsample_depth(&mvs_q, FEATURE_STRIDE)?;
        let fused = if !c.fuse {
            mvs.clone().with_kind(DepthKind::Fused)
        } else {
            match c.fuse_at {
                FuseAt::Quarter => upsample_depth(&fuse_depth(prior, &mvs_q, &u_q)?, FEATURE_STRIDE)?,
                FuseAt::Full => fuse_depth(&mono, &mvs, &u_full)?,
            }
        };

        let gt = &self.frames[t].depth_gt;
        let opts = c.eval_options();
        let metrics = DepthReports {
            mono: evaluate(&mono, gt, None, &opts)?,
            mvs: evaluate(&mvs, gt, None, &opts)?,
            fused: evaluate(&fused, gt, None, &opts)?,
        };

        let loss = if c.lambda.iter().any(|&l| l > 0.0) {
            let mut sources = vec![SourceView {
                image: &self.frames[t - 1].image,
                pose,
            }];
            if t + 1 < self.frames.len() {
                sources.push(SourceView {
                    image: &self.frames[t + 1].image,
                    pose: self.provider.relative(t, t + 1),
                });
            }
            let depths = DepthSet {
                mono: &mono,
                mvs: &mvs,
                fused: &fused,
            };
            Some(composite_loss(&self.frames[t].image, &sources, depths, &self.camera, &c.loss_weights())?)
        } else {
            None
        };

        Ok(FrameOutput {
            index: t,
            velocity: velocity.scaled(),
            fraction,
            prior_quarter: prior.clone(),
            mvs_quarter: mvs_q,
            uncertainty_quarter: u_q,
            mono,
            mvs,
            fused,
            uncertainty: u_full,
            gt: gt.clone(),
            gt_quarter: self.quarter[t].depth_gt.clone(),
            labels: self.frames[t].labels.clone(),
            labels_quarter: self.quarter[t].labels.clone(),
            low_evidence: prob.low_evidence.iter().filter(|&&b| b).count(),
            probability: prob,
            hypotheses: hyp,
            metrics,
            loss,
        })
    }

    /// Processes every target frame; a failing frame is recorded, not fatal.
    pub fn run(&self) -> Vec<FrameResult> {
        (1..self.frames.len())
            .into_par_iter()
            .map(|t| match self.process(t) {
                Ok(out) => FrameResult::Done(Box::new(out)),
                Err(e) => FrameResult::Failed {
                    index: t,
                    diagnostic: e.to_string(),
                },
            })
            .collect()
    }
}

/// `exp(−|p − med₃ₓ₃(p)| / (0.1·med₃ₓ₃(p)))`: high where the prior agrees
/// with its neighbourhood.
pub fn prior_confidence(prior: &ScalarMap) -> ScalarMap {
    let (w, h) = (prior.width as isize, prior.height as isize);
    let mut out = ScalarMap::filled(prior.width, prior.height, 1.0);
    for y in 0..h {
        for x in 0..w {
            let mut window = Vec::with_capacity(9);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (xx, yy) = (x + dx, y + dy);
                    if xx >= 0 && yy >= 0 && xx < w && yy < h {
                        window.push(prior.get(xx as usize, yy as usize));
                    }
                }
            }
            let m = median(&window).unwrap_or(1.0);
            let p = prior.get(x as usize, y as usize);
            let conf = (-(p - m).abs() / (0.1 * m)).exp();
            out.set(x as usize, y as usize, conf.clamp(crate::sampling::CONFIDENCE_EPS, 1.0));
        }
    }
    out
}

/// Summary of a run. Everything except `wall_clock` is a pure function of
/// the configuration.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config_hash: String,
    pub frames: Vec<FrameSummary>,
    pub aggregate: Option<DepthReports>,
    pub wall_clock: Duration,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameSummary {
    pub index: usize,
    pub velocity: Option<f64>,
    pub fraction: Option<f64>,
    pub metrics: Option<DepthReports>,
    pub loss_total: Option<f64>,
    pub low_evidence: Option<usize>,
    pub diagnostic: Option<String>,
}

impl From<&FrameResult> for FrameSummary {
    fn from(r: &FrameResult) -> Self {
        match r {
            FrameResult::Done(f) => FrameSummary {
                index: f.index,
                velocity: Some(f.velocity),
                fraction: Some(f.fraction),
                metrics: Some(f.metrics),
                loss_total: f.loss.map(|l| l.total),
                low_evidence: Some(f.low_evidence),
                diagnostic: None,
            },
            FrameResult::Failed { index, diagnostic } => FrameSummary {
                index: *index,
                velocity: None,
                fraction: None,
                metrics: None,
                loss_total: None,
                low_evidence: None,
                diagnostic: Some(diagnostic.clone()),
            },
        }
    }
}

pub fn aggregate(frames: &[FrameSummary]) -> Option<DepthReports> {
    let done: Vec<&DepthReports> = frames.iter().filter_map(|f| f.metrics.as_ref()).collect();
    let pick = |f: fn(&DepthReports) -> MetricReport| {
        MetricReport::aggregate(&done.iter().map(|r| f(r)).collect::<Vec<_>>())
    };
    Some(DepthReports {
        mono: pick(|r| r.mono)?,
        mvs: pick(|r| r.mvs)?,
        fused: pick(|r| r.fused)?,
    })
}

pub const METRICS_HEADER: [&str; 4] = ["frame", "depth", "velocity", "fraction"];

fn metrics_csv(frames: &[FrameSummary], agg: Option<&DepthReports>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = METRICS_HEADER.iter().chain(MetricReport::CSV_FIELDS.iter()).copied().collect();
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    let kinds = [("fused", DepthKind::Fused), ("mono", DepthKind::Mono), ("mvs", DepthKind::Mvs)];
    let mut sorted: Vec<&FrameSummary> = frames.iter().collect();
    sorted.sort_by_key(|f| f.index);
    for f in sorted {
        let Some(m) = &f.metrics else { continue };
        for (name, kind) in kinds {
            let mut row = vec![
                f.index.to_string(),
                name.to_string(),
                format!("{:.9}", f.velocity.unwrap_or(f64::NAN)),
                format!("{:.9}", f.fraction.unwrap_or(f64::NAN)),
            ];
            row.extend(m.get(kind).expect("depth kind").csv_values());
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    if let Some(a) = agg {
        for (name, kind) in kinds {
            let mut row = vec!["all".to_string(), name.to_string(), String::new(), String::new()];
            row.extend(a.get(kind).expect("depth kind").csv_values());
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs a full experiment and, when `out_dir` is given, writes per-frame
/// depth and uncertainty PFMs, `metrics.csv` and `summary.json` there.
pub fn run_pipeline(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunRecord> {
    let start = Instant::now();
    let experiment = Experiment::prepare(config)?;
    let results = experiment.run();
    let frames: Vec<FrameSummary> = results.iter().map(FrameSummary::from).collect();
    let agg = aggregate(&frames);
    let mut outputs = Vec::new();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for r in &results {
            let Some(f) = r.output() else { continue };
            for (name, map) in [("gt", &f.gt), ("mono", &f.mono), ("mvs", &f.mvs), ("fused", &f.fused)] {
                let path = dir.join(format!("frame_{:03}_{name}.pfm", f.index));
                export_depth(map, &path)?;
                outputs.push(path);
            }
            let path = dir.join(format!("frame_{:03}_uncertainty.pfm", f.index));
            export_uncertainty(&f.uncertainty, &path)?;
            outputs.push(path);
        }
        let csv_path = dir.join("metrics.csv");
        write(&csv_path, &metrics_csv(&frames, agg.as_ref())?)?;
        outputs.push(csv_path);
        let json_path = dir.join("summary.json");
        outputs.push(json_path.clone());
        let names: Vec<String> = outputs
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        let config_map: serde_json::Map<String, serde_json::Value> = config
            .pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
            .collect();
        let summary = json!({
            "schema_version": SCHEMA_VERSION,
            "config_hash": config.hash(),
            "config": config_map,
            "frames": frames,
            "aggregate": agg,
            "outputs": names,
        });
        let mut text = serde_json::to_string_pretty(&summary).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        text.push('\n');
        write(&json_path, text.as_bytes())?;
    }
    Ok(RunRecord {
        config_hash: config.hash(),
        frames,
        aggregate: agg,
        wall_clock: start.elapsed(),
        outputs,
    })
}
