//! Pinhole camera model, rigid poses and two-view relations.
//!
//! Conventions: x right, y down, z forward. Pixel `(0, 0)` is the centre of
//! the top-left pixel. A [`Pose`] maps points from one camera frame into
//! another: `X' = R·X + T`.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;
const EPIPOLE_TOL: f64 = 1e-12;

/// Pinhole intrinsics with a single focal length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub f: f64,
    pub cu: f64,
    pub cv: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(f: f64, cu: f64, cv: f64, width: usize, height: usize) -> Result<Self> {
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::InvalidIntrinsics(format!("focal length {f} must be > 0")));
        }
        if !(cu >= 0.0 && cu < width as f64) {
            return Err(Error::InvalidIntrinsics(format!(
                "cu = {cu} outside [0, {width})"
            )));
        }
        if !(cv >= 0.0 && cv < height as f64) {
            return Err(Error::InvalidIntrinsics(format!(
                "cv = {cv} outside [0, {height})"
            )));
        }
        Ok(Self {
            f,
            cu,
            cv,
            width,
            height,
        })
    }

    /// Centred principal point for a `width`×`height` image.
    pub fn centered(f: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            f,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    /// Intrinsics of the grid obtained by averaging `factor`×`factor` pixel
    /// blocks. Block `i` is centred on full-resolution coordinate
    /// `factor·i + (factor − 1)/2`.
    pub fn downscaled(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.width % factor != 0 || self.height % factor != 0 {
            return Err(Error::InvalidArgument(format!(
                "{}x{} not divisible by {factor}",
                self.width, self.height
            )));
        }
        let s = factor as f64;
        let shift = (s - 1.0) / 2.0;
        Self::new(
            self.f / s,
            (self.cu - shift) / s,
            (self.cv - shift) / s,
            self.width / factor,
            self.height / factor,
        )
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.f, 0.0, self.cu, 0.0, self.f, self.cv, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        let inv_f = 1.0 / self.f;
        Matrix3::new(
            inv_f,
            0.0,
            -self.cu * inv_f,
            0.0,
            inv_f,
            -self.cv * inv_f,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Normalised viewing ray `K⁻¹·(u, v, 1)`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cu) / self.f, (v - self.cv) / self.f, 1.0)
    }

    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        self.ray(u, v) * depth
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64
    }
}

/// Rigid transform between two camera frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(ortho <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidPose(format!(
                "RᵀR deviates from identity by {ortho:e}"
            )));
        }
        let det = rotation.determinant();
        if !((det - 1.0).abs() <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidPose(format!("det(R) = {det}")));
        }
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidPose("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis`, followed by `translation`.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = if axis.norm() == 0.0 || angle == 0.0 {
            Matrix3::identity()
        } else {
            *Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).matrix()
        };
        Self {
            rotation,
            translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Pose) -> Self {
        Self {
            rotation: next.rotation * self.rotation,
            translation: next.rotation * self.translation + next.translation,
        }
    }

    pub fn transform(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }
}

/// Continuous pixel location with an optional hypothesised depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
    pub depth: Option<f64>,
}

impl PixelCoord {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v, depth: None }
    }

    pub fn with_depth(u: f64, v: f64, depth: f64) -> Self {
        Self {
            u,
            v,
            depth: Some(depth),
        }
    }
}

/// Result of warping a pixel into another view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Warp {
    pub pixel: PixelCoord,
    /// Warped point lies behind (or on) the target camera plane.
    pub behind: bool,
    /// Warped pixel leaves `[0, width) × [0, height)`.
    pub out_of_bounds: bool,
}

impl Warp {
    pub fn is_valid(&self) -> bool {
        !self.behind && !self.out_of_bounds
    }
}

pub fn project(point: &Vector3<f64>, k: &Intrinsics) -> Result<PixelCoord> {
    let depth = point.z;
    if !(depth > 0.0) {
        return Err(Error::DegenerateProjection { depth });
    }
    Ok(PixelCoord::with_depth(
        k.f * point.x / depth + k.cu,
        k.f * point.y / depth + k.cv,
        depth,
    ))
}

/// Warps `p` (which must carry a positive depth) through `pose`:
/// `K·(R·(K⁻¹·p·d) + T)`, dehomogenised.
pub fn warp_pixel(p: &PixelCoord, k: &Intrinsics, pose: &Pose) -> Result<Warp> {
    let d = match p.depth {
        Some(d) if d > 0.0 => d,
        other => {
            return Err(Error::InvalidArgument(format!(
                "warp needs a positive depth, got {other:?}"
            )))
        }
    };
    let point = pose.transform(&(k.inverse_matrix() * Vector3::new(p.u, p.v, 1.0) * d));
    let h = k.matrix() * point;
    if !(point.z > 0.0) {
        return Ok(Warp {
            pixel: PixelCoord::with_depth(f64::NAN, f64::NAN, point.z),
            behind: true,
            out_of_bounds: true,
        });
    }
    let (u, v) = (h.x / h.z, h.y / h.z);
    Ok(Warp {
        pixel: PixelCoord::with_depth(u, v, point.z),
        behind: false,
        out_of_bounds: !k.contains(u, v),
    })
}

/// Depth in the second view of the point seen at `(u1, v1)` in the first
/// view and at column `u2` in the second, where `pose` maps first-view
/// coordinates to second-view coordinates.
pub fn ego_motion_depth(u1: f64, v1: f64, u2: f64, k: &Intrinsics, pose: &Pose) -> Result<f64> {
    let t = pose.translation;
    if t.norm() < EPIPOLE_TOL {
        return Err(Error::EpipoleDegenerate {
            denominator: t.norm(),
        });
    }
    let ray = k.ray(u1, v1);
    let r1 = pose.rotation.row(0).transpose().dot(&ray);
    let r3 = pose.rotation.row(2).transpose().dot(&ray);
    let denominator = r3 * (u2 - k.cu) - r1 * k.f;
    if denominator.abs() < EPIPOLE_TOL {
        return Err(Error::EpipoleDegenerate { denominator });
    }
    Ok(k.f * (r3 * t.x - r1 * t.z) / denominator)
}

/// Per-pixel effective baseline of a camera translating forward at `vz`
/// with heading `yaw`: `α·(tan γ − (u1 − cu)/f)·Vz`, `α` being the frame rate.
pub fn generalized_baseline(
    u1: f64,
    k: &Intrinsics,
    yaw: f64,
    vz: f64,
    frame_rate: f64,
) -> Result<f64> {
    if !(frame_rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "frame rate {frame_rate} must be > 0"
        )));
    }
    Ok(frame_rate * (yaw.tan() - (u1 - k.cu) / k.f) * vz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn k() -> Intrinsics {
        Intrinsics::new(100.0, 320.0, 96.0, 640, 192).unwrap()
    }

    #[test]
    fn project_examples() {
        let p = project(&Vector3::new(0.0, 0.0, 5.0), &k()).unwrap();
        assert_eq!((p.u, p.v), (320.0, 96.0));
        let p = project(&Vector3::new(1.0, 0.0, 10.0), &k()).unwrap();
        assert_relative_eq!(p.u, 330.0, epsilon = 1e-12);
        assert_eq!(p.v, 96.0);
        assert!(matches!(
            project(&Vector3::new(0.0, 0.0, -1.0), &k()),
            Err(Error::DegenerateProjection { .. })
        ));
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(0.0, 1.0, 1.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, -0.5, 4, 4).is_err());
    }

    #[test]
    fn downscaled_maps_block_centres() {
        let full = Intrinsics::centered(120.0, 160, 48).unwrap();
        let q = full.downscaled(4).unwrap();
        assert_eq!((q.width, q.height), (40, 12));
        // A point seen at full-res block centre 4i + 1.5 lands on quarter pixel i.
        let x = Vector3::new(0.7, -0.2, 9.0);
        let pf = project(&x, &full).unwrap();
        let pq = project(&x, &q).unwrap();
        assert_relative_eq!(pq.u, (pf.u - 1.5) / 4.0, epsilon = 1e-12);
        assert_relative_eq!(pq.v, (pf.v - 1.5) / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn pose_rejects_non_rotation() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = 1.1;
        assert!(Pose::new(m, Vector3::zeros()).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(reflect, Vector3::zeros()).is_err());
    }

    #[test]
    fn warp_examples() {
        let p = PixelCoord::with_depth(320.0, 96.0, 10.0);
        let w = warp_pixel(&p, &k(), &Pose::identity()).unwrap();
        assert_eq!((w.pixel.u, w.pixel.v), (320.0, 96.0));

        let lateral = Pose::from_translation(Vector3::new(0.5, 0.0, 0.0));
        let w = warp_pixel(&p, &k(), &lateral).unwrap();
        assert_relative_eq!(w.pixel.u, 325.0, epsilon = 1e-9);
        assert_relative_eq!(w.pixel.v, 96.0, epsilon = 1e-9);
        assert!(w.is_valid());

        let backwards = Pose::from_translation(Vector3::new(0.0, 0.0, -20.0));
        let w = warp_pixel(&p, &k(), &backwards).unwrap();
        assert!(w.behind && !w.is_valid());

        let off = Pose::from_translation(Vector3::new(100.0, 0.0, 0.0));
        let w = warp_pixel(&p, &k(), &off).unwrap();
        assert!(w.out_of_bounds && !w.behind);

        assert!(warp_pixel(&PixelCoord::new(1.0, 1.0), &k(), &lateral).is_err());
    }

    #[test]
    fn ego_motion_depth_examples() {
        let lateral = Pose::from_translation(Vector3::new(0.5, 0.0, 0.0));
        let d = ego_motion_depth(300.0, 90.0, 305.0, &k(), &lateral).unwrap();
        assert_relative_eq!(d, 10.0, epsilon = 1e-12);

        let forward = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
        assert!(matches!(
            ego_motion_depth(320.0, 50.0, 320.0, &k(), &forward),
            Err(Error::EpipoleDegenerate { .. })
        ));
        assert!(matches!(
            ego_motion_depth(300.0, 50.0, 310.0, &k(), &Pose::identity()),
            Err(Error::EpipoleDegenerate { .. })
        ));
    }

    #[test]
    fn ego_motion_depth_with_rotation() {
        let pose = Pose::from_axis_angle(
            Vector3::new(0.1, 1.0, 0.05),
            0.03,
            Vector3::new(0.4, -0.05, 0.3),
        );
        let x1 = Vector3::new(-1.3, 0.4, 11.0);
        let p1 = project(&x1, &k()).unwrap();
        let x2 = pose.transform(&x1);
        let p2 = project(&x2, &k()).unwrap();
        let d = ego_motion_depth(p1.u, p1.v, p2.u, &k(), &pose).unwrap();
        assert_relative_eq!(d, x2.z, max_relative = 1e-9);
    }

    #[test]
    fn generalized_baseline_examples() {
        let k = k();
        assert_eq!(generalized_baseline(250.0, &k, 0.1, 0.0, 10.0).unwrap(), 0.0);
        assert_eq!(generalized_baseline(k.cu, &k, 0.0, 3.0, 10.0).unwrap(), 0.0);
        let b = generalized_baseline(k.cu - 100.0, &k, 0.0, 2.0, 10.0).unwrap();
        assert_relative_eq!(b, 20.0, epsilon = 1e-12);
        assert!(generalized_baseline(1.0, &k, 0.0, 1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn identity_warp_is_identity(u in 0.0..640.0f64, v in 0.0..192.0f64, d in 0.1..100.0f64) {
            let w = warp_pixel(&PixelCoord::with_depth(u, v, d), &k(), &Pose::identity()).unwrap();
            prop_assert!((w.pixel.u - u).abs() < 1e-9 && (w.pixel.v - v).abs() < 1e-9);
        }

        #[test]
        fn warp_round_trip(
            u in 50.0..590.0f64, v in 20.0..170.0f64, d in 2.0..50.0f64,
            ax in -1.0..1.0f64, ay in -1.0..1.0f64, az in -1.0..1.0f64, angle in -0.1..0.1f64,
            tx in -1.0..1.0f64, ty in -0.3..0.3f64, tz in -1.0..1.0f64,
        ) {
            let pose = Pose::from_axis_angle(Vector3::new(ax, ay, az), angle, Vector3::new(tx, ty, tz));
            let fwd = warp_pixel(&PixelCoord::with_depth(u, v, d), &k(), &pose).unwrap();
            prop_assume!(!fwd.behind);
            let back = warp_pixel(&fwd.pixel, &k(), &pose.inverse()).unwrap();
            prop_assert!((back.pixel.u - u).abs() < 1e-6);
            prop_assert!((back.pixel.v - v).abs() < 1e-6);
        }

        #[test]
        fn baseline_grows_with_speed(u1 in 0.0..640.0f64, yaw in -0.3..0.3f64, v1 in 0.0..20.0f64, dv in 0.01..10.0f64) {
            let k = k();
            let slope = yaw.tan() - (u1 - k.cu) / k.f;
            prop_assume!(slope.abs() > 1e-6);
            let b1 = generalized_baseline(u1, &k, yaw, v1, 10.0).unwrap().abs();
            let b2 = generalized_baseline(u1, &k, yaw, v1 + dv, 10.0).unwrap().abs();
            prop_assert!(b2 > b1);
        }
    }
}
