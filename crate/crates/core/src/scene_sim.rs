//! Deterministic ray-cast renderer for synthetic multi-frame sequences with
//! exact depth, poses and per-pixel surface labels.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::maps::{DepthKind, DepthMap, ImageGrid, Mask, Resolution, ScalarMap};

/// Label of pixels that hit the background wall.
pub const BACKGROUND_LABEL: u32 = u32::MAX;

const HIT_EPS: f64 = 1e-9;

/// Procedural colour pattern in surface-local metric coordinates: value
/// noise summed over octaves plus a softened checkerboard.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    pub base: [f64; 3],
    /// Noise amplitude. Zero makes the surface textureless.
    pub contrast: f64,
    /// Lattice cell size of the coarsest noise octave, in metres.
    pub noise_scale: f64,
    pub octaves: u32,
    /// Checker period in metres; ignored when `checker_weight` is zero.
    pub checker_period: f64,
    pub checker_weight: f64,
    pub seed: u64,
}

impl Texture {
    pub fn noise(seed: u64, noise_scale: f64) -> Self {
        Self {
            base: [0.5, 0.5, 0.5],
            contrast: 0.35,
            noise_scale,
            octaves: 2,
            checker_period: 4.0 * noise_scale,
            checker_weight: 0.08,
            seed,
        }
    }

    pub fn flat(color: [f64; 3]) -> Self {
        Self {
            base: color,
            contrast: 0.0,
            noise_scale: 1.0,
            octaves: 0,
            checker_period: 1.0,
            checker_weight: 0.0,
            seed: 0,
        }
    }

    pub fn is_textureless(&self) -> bool {
        self.contrast == 0.0 && self.checker_weight == 0.0
    }

    pub fn color(&self, s: f64, t: f64) -> [f64; 3] {
        let mut out = self.base;
        if self.contrast != 0.0 && self.octaves > 0 {
            for (c, value) in out.iter_mut().enumerate() {
                let mut amplitude = 1.0;
                let mut scale = self.noise_scale;
                let mut total = 0.0;
                let mut norm = 0.0;
                for octave in 0..self.octaves {
                    let seed = self.seed ^ ((c as u64) << 48) ^ ((octave as u64) << 40);
                    total += amplitude * value_noise(s / scale, t / scale, seed);
                    norm += amplitude;
                    amplitude *= 0.5;
                    scale *= 0.5;
                }
                *value += self.contrast * total / norm;
            }
        }
        if self.checker_weight != 0.0 {
            let k = std::f64::consts::PI / self.checker_period;
            let checker = 0.5 * (3.0 * (k * s).sin() * (k * t).sin()).tanh();
            for value in out.iter_mut() {
                *value += self.checker_weight * checker;
            }
        }
        out.map(|v| v.clamp(0.0, 1.0))
    }
}

fn lattice_hash(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut h = seed
        ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    h = h.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Smooth lattice value noise in `[-1, 1]`.
fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let (tx, ty) = (fade(x - fx), fade(y - fy));
    let a = lattice_hash(ix, iy, seed);
    let b = lattice_hash(ix + 1, iy, seed);
    let c = lattice_hash(ix, iy + 1, seed);
    let d = lattice_hash(ix + 1, iy + 1, seed);
    let top = a + tx * (b - a);
    let bottom = c + tx * (d - c);
    top + ty * (bottom - top)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Plane through `origin` spanned by orthonormal `u_axis`, `v_axis`;
    /// bounded to `|s| ≤ half_extent.0`, `|t| ≤ half_extent.1` when given.
    Plane {
        origin: Vector3<f64>,
        u_axis: Vector3<f64>,
        v_axis: Vector3<f64>,
        half_extent: Option<(f64, f64)>,
    },
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
}

impl Shape {
    /// Camera-facing rectangle at world depth `z`, centred on `(x, y)`.
    pub fn fronto_parallel(x: f64, y: f64, z: f64, half_w: f64, half_h: f64) -> Self {
        Shape::Plane {
            origin: Vector3::new(x, y, z),
            u_axis: Vector3::x(),
            v_axis: Vector3::y(),
            half_extent: Some((half_w, half_h)),
        }
    }

    /// Vertical rectangle rotated by `yaw` radians about the world y axis.
    pub fn yawed_wall(center: Vector3<f64>, yaw: f64, half_w: f64, half_h: f64) -> Self {
        Shape::Plane {
            origin: center,
            u_axis: Vector3::new(yaw.cos(), 0.0, yaw.sin()),
            v_axis: Vector3::y(),
            half_extent: Some((half_w, half_h)),
        }
    }

    fn translated(&self, offset: &Vector3<f64>) -> Shape {
        match self {
            Shape::Plane {
                origin,
                u_axis,
                v_axis,
                half_extent,
            } => Shape::Plane {
                origin: origin + offset,
                u_axis: *u_axis,
                v_axis: *v_axis,
                half_extent: *half_extent,
            },
            Shape::Sphere { center, radius } => Shape::Sphere {
                center: center + offset,
                radius: *radius,
            },
        }
    }

    /// Ray parameter, texture coordinates and outward normal of the nearest
    /// hit with `λ > 0`.
    fn intersect(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
    ) -> Option<(f64, (f64, f64), Vector3<f64>)> {
        match self {
            Shape::Plane {
                origin: o,
                u_axis,
                v_axis,
                half_extent,
            } => {
                let n = u_axis.cross(v_axis);
                let denom = n.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let lambda = n.dot(&(o - origin)) / denom;
                if lambda <= HIT_EPS {
                    return None;
                }
                let rel = origin + dir * lambda - o;
                let (s, t) = (rel.dot(u_axis), rel.dot(v_axis));
                if let Some((hw, hh)) = half_extent {
                    if s.abs() > *hw || t.abs() > *hh {
                        return None;
                    }
                }
                Some((lambda, (s, t), n))
            }
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let a = dir.dot(dir);
                let b = 2.0 * oc.dot(dir);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let near = (-b - sq) / (2.0 * a);
                let lambda = if near > HIT_EPS {
                    near
                } else {
                    (-b + sq) / (2.0 * a)
                };
                if lambda <= HIT_EPS {
                    return None;
                }
                let n = (origin + dir * lambda - center) / *radius;
                let s = radius * n.x.atan2(-n.z);
                let t = radius * n.y.asin();
                Some((lambda, (s, t), n))
            }
        }
    }

    fn contains_point(&self, p: &Vector3<f64>) -> bool {
        match self {
            Shape::Plane {
                origin,
                u_axis,
                v_axis,
                half_extent,
            } => {
                let rel = p - origin;
                let n = u_axis.cross(v_axis);
                if n.dot(&rel).abs() > 1e-9 {
                    return false;
                }
                match half_extent {
                    Some((hw, hh)) => rel.dot(u_axis).abs() <= *hw && rel.dot(v_axis).abs() <= *hh,
                    None => true,
                }
            }
            Shape::Sphere { center, radius } => (p - center).norm() <= *radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub shape: Shape,
    pub texture: Texture,
    /// World-frame velocity in m/s; non-zero surfaces violate the static-scene
    /// assumption.
    pub velocity: Vector3<f64>,
    /// Strength of a view-dependent highlight; zero is Lambertian.
    pub specular: f64,
}

impl Surface {
    pub fn new(shape: Shape, texture: Texture) -> Self {
        Self {
            shape,
            texture,
            velocity: Vector3::zeros(),
            specular: 0.0,
        }
    }

    pub fn moving(mut self, velocity: Vector3<f64>) -> Self {
        self.velocity = velocity;
        self
    }

    pub fn with_specular(mut self, strength: f64) -> Self {
        self.specular = strength;
        self
    }

    pub fn is_moving(&self) -> bool {
        self.velocity != Vector3::zeros()
    }

    fn at_time(&self, time: f64) -> Shape {
        if self.is_moving() {
            self.shape.translated(&(self.velocity * time))
        } else {
            self.shape.clone()
        }
    }
}

/// Immutable scene description: surfaces in front of an infinite textured
/// back wall at world `z = background_depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub surfaces: Vec<Surface>,
    pub background_depth: f64,
    pub background_texture: Texture,
    pub depth_floor: f64,
    pub depth_ceiling: f64,
}

impl Scene {
    pub fn new(background_depth: f64, background_texture: Texture) -> Self {
        Self {
            surfaces: Vec::new(),
            background_depth,
            background_texture,
            depth_floor: 1e-3,
            depth_ceiling: f64::INFINITY,
        }
    }

    pub fn with_surface(mut self, surface: Surface) -> Self {
        self.surfaces.push(surface);
        self
    }

    pub fn with_depth_bounds(mut self, floor: f64, ceiling: f64) -> Self {
        self.depth_floor = floor;
        self.depth_ceiling = ceiling;
        self
    }
}

/// Camera poses (world → camera) sampled at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
    pub frame_rate: f64,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>, frame_rate: f64) -> Result<Self> {
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "frame rate {frame_rate} must be > 0"
            )));
        }
        Ok(Self { poses, frame_rate })
    }

    /// Unrotated camera starting at world `start` moving with `velocity` m/s.
    pub fn constant_velocity(
        start: Vector3<f64>,
        velocity: Vector3<f64>,
        frame_rate: f64,
        frames: usize,
    ) -> Result<Self> {
        let poses = (0..frames)
            .map(|i| {
                let center = start + velocity * (i as f64 / frame_rate);
                Pose::from_translation(-center)
            })
            .collect();
        Self::new(poses, frame_rate)
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 / self.frame_rate
    }

    /// Pose mapping camera-`from` coordinates into camera-`to` coordinates.
    pub fn relative(&self, from: usize, to: usize) -> Pose {
        self.poses[from].inverse().then(&self.poses[to])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub image: ImageGrid,
    pub depth_gt: DepthMap,
    pub pose: Pose,
    /// Index into `Scene::surfaces`, or [`BACKGROUND_LABEL`].
    pub labels: Vec<u32>,
    pub time: f64,
}

impl RenderedFrame {
    pub fn label_mask(&self, pred: impl Fn(u32) -> bool) -> Mask {
        Mask {
            width: self.image.width,
            height: self.image.height,
            data: self.labels.iter().map(|&l| pred(l)).collect(),
        }
    }
}

pub fn render(scene: &Scene, camera: &Intrinsics, pose: &Pose) -> Result<RenderedFrame> {
    render_at(scene, camera, pose, 0.0)
}

/// Ray-casts every pixel centre. Moving surfaces are placed at `time`.
pub fn render_at(
    scene: &Scene,
    camera: &Intrinsics,
    pose: &Pose,
    time: f64,
) -> Result<RenderedFrame> {
    let shapes: Vec<Shape> = scene.surfaces.iter().map(|s| s.at_time(time)).collect();
    let cam_to_world = pose.inverse();
    let center = cam_to_world.translation;
    if let Some(i) = shapes.iter().position(|s| s.contains_point(&center)) {
        return Err(Error::InvalidCameraPlacement(format!(
            "camera centre {center:?} lies inside surface {i}"
        )));
    }
    if center.z >= scene.background_depth {
        return Err(Error::InvalidCameraPlacement(format!(
            "camera behind the background wall at z = {}",
            scene.background_depth
        )));
    }
    let light = Vector3::new(0.3, -1.0, -0.6).normalize();
    let (w, h) = (camera.width, camera.height);
    let rows: Vec<Result<Vec<([f64; 3], f64, u32)>>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let dir = cam_to_world.rotation * camera.ray(x as f64, y as f64);
                    let mut best: Option<(f64, (f64, f64), Vector3<f64>, u32)> = None;
                    for (i, shape) in shapes.iter().enumerate() {
                        if let Some((lambda, st, n)) = shape.intersect(&center, &dir) {
                            if best.map_or(true, |b| lambda < b.0) {
                                best = Some((lambda, st, n, i as u32));
                            }
                        }
                    }
                    if best.is_none() && dir.z > 0.0 {
                        let lambda = (scene.background_depth - center.z) / dir.z;
                        let p = center + dir * lambda;
                        best = Some((lambda, (p.x, p.y), -Vector3::z(), BACKGROUND_LABEL));
                    }
                    let (lambda, (s, t), normal, label) = best.ok_or_else(|| {
                        Error::InvalidCameraPlacement(format!("pixel ({x}, {y}) sees no surface"))
                    })?;
                    if !(lambda >= scene.depth_floor && lambda <= scene.depth_ceiling) {
                        return Err(Error::InvalidCameraPlacement(format!(
                            "depth {lambda} at ({x}, {y}) outside [{}, {}]",
                            scene.depth_floor, scene.depth_ceiling
                        )));
                    }
                    let (texture, specular) = if label == BACKGROUND_LABEL {
                        (&scene.background_texture, 0.0)
                    } else {
                        let s = &scene.surfaces[label as usize];
                        (&s.texture, s.specular)
                    };
                    let mut color = texture.color(s, t);
                    if specular > 0.0 {
                        let view = -dir.normalize();
                        let n = if normal.dot(&view) < 0.0 { -normal } else { normal };
                        let half = (view + light).normalize();
                        let highlight = specular * n.dot(&half).max(0.0).powi(8);
                        color = color.map(|c| (c + highlight).clamp(0.0, 1.0));
                    }
                    // The ray direction has unit z in the camera frame, so λ is the z-depth.
                    Ok((color, lambda, label))
                })
                .collect()
        })
        .collect();

    let mut image = ImageGrid::zeros(w, h, 3);
    let mut depth = Vec::with_capacity(w * h);
    let mut labels = Vec::with_capacity(w * h);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, (color, d, label)) in row?.into_iter().enumerate() {
            for (c, value) in color.iter().enumerate() {
                image.set(x, y, c, *value);
            }
            depth.push(d);
            labels.push(label);
        }
    }
    Ok(RenderedFrame {
        image,
        depth_gt: DepthMap::new(
            ScalarMap::new(w, h, depth)?,
            Resolution::Full,
            DepthKind::GroundTruth,
        )?,
        pose: *pose,
        labels,
        time,
    })
}

pub fn make_sequence(
    scene: &Scene,
    trajectory: &Trajectory,
    camera: &Intrinsics,
) -> Result<Vec<RenderedFrame>> {
    if trajectory.poses.len() < 2 {
        return Err(Error::InvalidArgument(
            "a sequence needs at least two poses".into(),
        ));
    }
    trajectory
        .poses
        .par_iter()
        .enumerate()
        .map(|(i, pose)| render_at(scene, camera, pose, trajectory.time(i)))
        .collect()
}

/// Error model applied to ground truth to manufacture a monocular prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorNoise {
    /// `gt·(1 + σ·n)`, `n ~ N(0, 1)` i.i.d. per pixel.
    Multiplicative { sigma: f64 },
    /// `gt·factor`.
    Bias { factor: f64 },
    /// `gt·(1 + σ·φ)` with `φ` a smooth unit-variance field interpolated
    /// from a `cells × cells` lattice.
    LowFrequency { sigma: f64, cells: usize },
}

const MIN_PRIOR_FACTOR: f64 = 0.05;

pub fn perturb_prior(depth_gt: &DepthMap, noise: PriorNoise, seed: u64) -> Result<DepthMap> {
    let (w, h) = (depth_gt.width(), depth_gt.height());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors: Vec<f64> = match noise {
        PriorNoise::Multiplicative { sigma } => {
            check_sigma(sigma)?;
            (0..w * h)
                .map(|_| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    (1.0 + sigma * n).max(MIN_PRIOR_FACTOR)
                })
                .collect()
        }
        PriorNoise::Bias { factor } => {
            if !(factor > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "bias factor {factor} must be > 0"
                )));
            }
            vec![factor; w * h]
        }
        PriorNoise::LowFrequency { sigma, cells } => {
            check_sigma(sigma)?;
            let cells = cells.max(1);
            let lattice: Vec<f64> = (0..(cells + 1) * (cells + 1))
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            // Smoothstep interpolation shrinks variance; rescale empirically.
            let mut field = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    let gx = (x as f64 + 0.5) / w as f64 * cells as f64;
                    let gy = (y as f64 + 0.5) / h as f64 * cells as f64;
                    let (ix, iy) = ((gx.floor() as usize).min(cells - 1), (gy.floor() as usize).min(cells - 1));
                    let (tx, ty) = (fade(gx - ix as f64), fade(gy - iy as f64));
                    let at = |i: usize, j: usize| lattice[j * (cells + 1) + i];
                    let top = at(ix, iy) + tx * (at(ix + 1, iy) - at(ix, iy));
                    let bottom = at(ix, iy + 1) + tx * (at(ix + 1, iy + 1) - at(ix, iy + 1));
                    field.push(top + ty * (bottom - top));
                }
            }
            let n = field.len() as f64;
            let rms = (field.iter().map(|v| v * v).sum::<f64>() / n).sqrt().max(1e-12);
            field
                .into_iter()
                .map(|v| (1.0 + sigma * v / rms).max(MIN_PRIOR_FACTOR))
                .collect()
        }
    };
    let data = depth_gt
        .values
        .data
        .iter()
        .zip(&factors)
        .map(|(d, f)| d * f)
        .collect();
    DepthMap::new(
        ScalarMap::new(w, h, data)?,
        depth_gt.resolution,
        DepthKind::Mono,
    )
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sigma {sigma} must be ≥ 0")))
    }
}

/// Pixels of `target` whose ground-truth surface point is visible, unmoved
/// and unoccluded in `source`. `target_to_source` maps target-camera
/// coordinates to source-camera coordinates.
pub fn covisibility(
    scene: &Scene,
    target: &RenderedFrame,
    source: &RenderedFrame,
    camera: &Intrinsics,
    target_to_source: &Pose,
) -> Mask {
    let (w, h) = (target.image.width, target.image.height);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let label = target.labels[y * w + x];
            let moving = label != BACKGROUND_LABEL && scene.surfaces[label as usize].is_moving();
            let d = target.depth_gt.get(x, y);
            let p = target_to_source.transform(&camera.backproject(x as f64, y as f64, d));
            let visible = !moving && p.z > 0.0 && {
                let u = camera.f * p.x / p.z + camera.cu;
                let v = camera.f * p.y / p.z + camera.cv;
                camera.contains(u, v) && {
                    let (xi, yi) = ((u.round() as usize).min(w - 1), (v.round() as usize).min(h - 1));
                    let ds = source.depth_gt.get(xi, yi);
                    source.labels[yi * w + xi] == label && (ds - p.z).abs() <= 0.02 * p.z
                }
            };
            data.push(visible);
        }
    }
    Mask {
        width: w,
        height: h,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera() -> Intrinsics {
        Intrinsics::centered(120.0, 160, 48).unwrap()
    }

    fn wall_scene(z: f64) -> Scene {
        Scene::new(z, Texture::noise(7, 0.8))
    }

    #[test]
    fn fronto_parallel_plane_has_constant_depth() {
        let frame = render(&wall_scene(10.0), &camera(), &Pose::identity()).unwrap();
        assert!(frame.depth_gt.values.data.iter().all(|&d| (d - 10.0).abs() < 1e-12));
        let moved = Pose::from_translation(Vector3::new(0.0, 0.0, -5.0));
        let frame = render(&wall_scene(10.0), &camera(), &moved).unwrap();
        assert!(frame.depth_gt.values.data.iter().all(|&d| (d - 5.0).abs() < 1e-12));
    }

    #[test]
    fn render_is_deterministic() {
        let scene = wall_scene(12.0).with_surface(Surface::new(
            Shape::Sphere {
                center: Vector3::new(0.0, 0.0, 8.0),
                radius: 1.0,
            },
            Texture::noise(3, 0.3),
        ));
        let a = render(&scene, &camera(), &Pose::identity()).unwrap();
        let b = render(&scene, &camera(), &Pose::identity()).unwrap();
        let bits = |f: &RenderedFrame| f.image.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.depth_gt, b.depth_gt);
    }

    #[test]
    fn camera_inside_sphere_is_rejected() {
        let scene = wall_scene(12.0).with_surface(Surface::new(
            Shape::Sphere {
                center: Vector3::zeros(),
                radius: 1.0,
            },
            Texture::noise(3, 0.3),
        ));
        assert!(matches!(
            render(&scene, &camera(), &Pose::identity()),
            Err(Error::InvalidCameraPlacement(_))
        ));
    }

    #[test]
    fn depth_bounds_are_enforced() {
        let scene = wall_scene(30.0).with_depth_bounds(1.0, 20.0);
        assert!(render(&scene, &camera(), &Pose::identity()).is_err());
    }

    #[test]
    fn sequences() {
        let scene = wall_scene(10.0);
        let still = Trajectory::new(vec![Pose::identity(); 3], 10.0).unwrap();
        let frames = make_sequence(&scene, &still, &camera()).unwrap();
        assert!(frames.windows(2).all(|f| f[0].image == f[1].image));

        let lateral =
            Trajectory::constant_velocity(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), 10.0, 3)
                .unwrap();
        let t = lateral.relative(1, 0).translation;
        assert!((t.norm() - 0.1).abs() < 1e-12);
        let composed = lateral.relative(2, 1).then(&lateral.relative(1, 0));
        let direct = lateral.relative(2, 0);
        assert!((composed.translation - direct.translation).norm() < 1e-12);
        assert_eq!(make_sequence(&scene, &lateral, &camera()).unwrap().len(), 3);

        let single = Trajectory::new(vec![Pose::identity()], 10.0).unwrap();
        assert!(make_sequence(&scene, &single, &camera()).is_err());
    }

    #[test]
    fn prior_noise_models() {
        let gt = render(&wall_scene(10.0), &camera(), &Pose::identity())
            .unwrap()
            .depth_gt;
        let exact = perturb_prior(&gt, PriorNoise::Multiplicative { sigma: 0.0 }, 1).unwrap();
        assert_eq!(exact.values, gt.values);
        let biased = perturb_prior(&gt, PriorNoise::Bias { factor: 1.2 }, 1).unwrap();
        assert!(biased.values.data.iter().zip(&gt.values.data).all(|(p, g)| *p == 1.2 * g));
        let a = perturb_prior(&gt, PriorNoise::LowFrequency { sigma: 0.1, cells: 3 }, 4).unwrap();
        let b = perturb_prior(&gt, PriorNoise::LowFrequency { sigma: 0.1, cells: 3 }, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.values.data.iter().all(|&d| d > 0.0));
        assert!(perturb_prior(&gt, PriorNoise::Multiplicative { sigma: -1.0 }, 1).is_err());
    }

    #[test]
    fn multiplicative_prior_error_matches_half_normal_mean() {
        // Monte-Carlo oracle over the noise law itself: E|σn| = σ·√(2/π) ≈ 0.0798.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let oracle: f64 = (0..200_000)
            .map(|_| {
                let n: f64 = StandardNormal.sample(&mut rng);
                (0.1 * n).abs()
            })
            .sum::<f64>()
            / 200_000.0;
        assert!((0.07..=0.10).contains(&oracle));

        let gt = DepthMap::new(ScalarMap::filled(400, 300, 8.0), Resolution::Full, DepthKind::GroundTruth)
            .unwrap();
        let prior = perturb_prior(&gt, PriorNoise::Multiplicative { sigma: 0.1 }, 5).unwrap();
        let abs_rel = prior.values.data.iter().map(|p| (p - 8.0).abs() / 8.0).sum::<f64>()
            / prior.values.data.len() as f64;
        assert!((0.07..=0.10).contains(&abs_rel), "{abs_rel}");
        assert!((abs_rel - oracle).abs() < 2e-3);
    }

    #[test]
    fn textures() {
        let flat = Texture::flat([0.2, 0.3, 0.4]);
        assert!(flat.is_textureless());
        assert_eq!(flat.color(1.3, -2.0), [0.2, 0.3, 0.4]);
        let tex = Texture::noise(1, 0.5);
        let samples: Vec<f64> = (0..50).map(|i| tex.color(i as f64 * 0.11, 0.3)[0]).collect();
        let mean = samples.iter().sum::<f64>() / 50.0;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0;
        assert!(var > 1e-4);
    }
}
