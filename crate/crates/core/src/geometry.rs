//! Rotation and pose math shared by every other module.
//!
//! Planar angles are kept in `(-π, π]`. Spatial rotations use
//! [`nalgebra::Rotation3`] as storage; the exponential and logarithm maps are
//! implemented here so the near-π behaviour is under our control.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};

/// Timestamps are unsigned nanoseconds.
pub type Nanos = u64;

pub type Rotation3 = nalgebra::Rotation3<f64>;

const SMALL_ANGLE: f64 = 1e-8;

/// Maps any angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Argument of a planar vector, in `(-π, π]`.
pub fn ang(v: &Vector2<f64>) -> Result<f64> {
    if v.x == 0.0 && v.y == 0.0 {
        return Err(Error::Domain("argument of the zero vector".into()));
    }
    Ok(wrap_angle(v.y.atan2(v.x)))
}

/// Seconds elapsed from `from` to `to` (negative when `to < from`).
pub fn seconds_between(from: Nanos, to: Nanos) -> f64 {
    (to as i128 - from as i128) as f64 * 1e-9
}

/// Planar rotation stored as a normalized angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation2 {
    angle: f64,
}

impl Rotation2 {
    pub fn new(angle: f64) -> Self {
        Self {
            angle: wrap_angle(angle),
        }
    }

    pub fn identity() -> Self {
        Self { angle: 0.0 }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        rot2(self.angle)
    }

    pub fn compose(&self, other: &Rotation2) -> Rotation2 {
        Rotation2::new(self.angle + other.angle)
    }

    pub fn inverse(&self) -> Rotation2 {
        Rotation2::new(-self.angle)
    }

    pub fn rotate(&self, v: &Vector2<f64>) -> Vector2<f64> {
        self.matrix() * v
    }
}

/// Planar rotation matrix for `angle`.
pub fn rot2(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Skew-symmetric matrix `v^` with `v^ u = v × u`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues exponential map from a rotation vector to SO(3).
pub fn exp_so3(omega: &Vector3<f64>) -> Rotation3 {
    let theta2 = omega.norm_squared();
    let k = skew(omega);
    let (a, b) = if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let m = Matrix3::identity() + k * a + k * k * b;
    Rotation3::from_matrix_unchecked(m)
}

/// Logarithm map from SO(3) to a rotation vector with norm in `[0, π]`.
pub fn log_so3(r: &Rotation3) -> Vector3<f64> {
    let m = r.matrix();
    let v = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let cos_theta = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin_theta = 0.5 * v.norm();
    let theta = sin_theta.atan2(cos_theta);

    if theta < SMALL_ANGLE {
        return v * (0.5 * (1.0 + theta * theta / 6.0));
    }
    if PI - theta > 1e-6 {
        return v * (0.5 * theta / sin_theta);
    }

    // Near π the antisymmetric part vanishes; recover the axis from the
    // symmetric part, R + Rᵀ = 2cosθ I + 2(1 - cosθ) a aᵀ.
    let sym = (m + m.transpose()) * 0.5;
    let outer = (sym - Matrix3::identity() * cos_theta) / (1.0 - cos_theta);
    let mut col = 0;
    for i in 1..3 {
        if outer[(i, i)] > outer[(col, col)] {
            col = i;
        }
    }
    let mut axis = Vector3::new(outer[(0, col)], outer[(1, col)], outer[(2, col)]);
    axis /= axis.norm();
    if axis.dot(&v) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Rotation about +z by `yaw`.
pub fn rot_z(yaw: f64) -> Rotation3 {
    Rotation3::from_axis_angle(&Vector3::z_axis(), yaw)
}

/// Heading of a rotation: the angle of its x-axis projected into the plane.
pub fn yaw_of(r: &Rotation3) -> f64 {
    let m = r.matrix();
    wrap_angle(m[(1, 0)].atan2(m[(0, 0)]))
}

/// Rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation3,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: Rotation3, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation3::identity(), Vector3::zeros())
    }

    /// Planar pose at height zero.
    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Self::new(rot_z(yaw), Vector3::new(x, y, 0.0))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.inverse();
        Pose::new(rt, -(rt * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn yaw(&self) -> f64 {
        yaw_of(&self.rotation)
    }

    pub fn is_identity(&self) -> bool {
        self.translation == Vector3::zeros() && *self.rotation.matrix() == Matrix3::identity()
    }

    /// `[x, y, z, qx, qy, qz, qw]`, with `qw >= 0`.
    pub fn to_xyz_quat(&self) -> [f64; 7] {
        let q = UnitQuaternion::from_rotation_matrix(&self.rotation);
        let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
        let t = &self.translation;
        [t.x, t.y, t.z, q.i, q.j, q.k, q.w]
    }

    /// Inverse of [`Pose::to_xyz_quat`]; the quaternion need not be unit.
    pub fn from_xyz_quat(v: &[f64; 7]) -> Result<Pose> {
        let q = Quaternion::new(v[6], v[3], v[4], v[5]);
        if !(q.norm() > 1e-9) {
            return Err(Error::Domain("zero quaternion".into()));
        }
        let rotation = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        Ok(Pose::new(rotation, Vector3::new(v[0], v[1], v[2])))
    }
}

/// Time-ordered poses that can be queried at any instant they span.
#[derive(Debug, Clone, Default)]
pub struct TimedPoseBuffer {
    entries: Vec<(Nanos, Pose)>,
}

impl TimedPoseBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<(Nanos, Pose)>) -> Result<Self> {
        if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Domain(
                "pose buffer timestamps must be strictly increasing".into(),
            ));
        }
        Ok(Self { entries })
    }

    /// Appends a pose. A timestamp that does not advance replaces the last
    /// entry when equal and is rejected when earlier.
    pub fn push(&mut self, t: Nanos, pose: Pose) -> Result<()> {
        match self.entries.last_mut() {
            Some(last) if last.0 == t => {
                last.1 = pose;
                Ok(())
            }
            Some(last) if last.0 > t => Err(Error::Domain(format!(
                "pose at {t} ns precedes buffer end {} ns",
                last.0
            ))),
            _ => {
                self.entries.push((t, pose));
                Ok(())
            }
        }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Nanos, Pose)] {
        &self.entries
    }

    pub fn first(&self) -> Option<&(Nanos, Pose)> {
        self.entries.first()
    }

    pub fn last(&self) -> Option<&(Nanos, Pose)> {
        self.entries.last()
    }

    /// Drops every entry strictly older than `t`, keeping the one at or just
    /// before `t` so the buffer still covers `t`.
    pub fn retain_from(&mut self, t: Nanos) {
        let keep_from = match self.entries.iter().rposition(|(ts, _)| *ts <= t) {
            Some(i) => i,
            None => return,
        };
        self.entries.drain(..keep_from);
    }

    pub fn covers(&self, t: Nanos) -> bool {
        matches!((self.first(), self.last()), (Some(a), Some(b)) if a.0 <= t && t <= b.0)
    }

    /// Pose at time `t`: linear in translation, geodesic in rotation.
    pub fn interpolate(&self, t: Nanos) -> Result<Pose> {
        let (first, last) = match (self.entries.first(), self.entries.last()) {
            (Some(a), Some(b)) => (a.0, b.0),
            _ => return Err(Error::Extrapolation { t, start: 0, end: 0 }),
        };
        if t < first || t > last {
            return Err(Error::Extrapolation {
                t,
                start: first,
                end: last,
            });
        }
        let idx = self.entries.partition_point(|(ts, _)| *ts < t);
        let (t1, p1) = &self.entries[idx];
        if *t1 == t {
            return Ok(*p1);
        }
        let (t0, p0) = &self.entries[idx - 1];
        let alpha = (t - t0) as f64 / (t1 - t0) as f64;
        Ok(interpolate_poses(p0, p1, alpha))
    }
}

/// Constant-twist interpolation between two poses, `alpha ∈ [0, 1]`.
pub fn interpolate_poses(p0: &Pose, p1: &Pose, alpha: f64) -> Pose {
    let delta = log_so3(&(p0.rotation.inverse() * p1.rotation));
    let rotation = p0.rotation * exp_so3(&(delta * alpha));
    let translation = p0.translation + (p1.translation - p0.translation) * alpha;
    Pose::new(rotation, translation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn ang_axes_and_quadrants() {
        assert_eq!(ang(&Vector2::new(1.0, 0.0)).unwrap(), 0.0);
        assert_relative_eq!(ang(&Vector2::new(0.0, 1.0)).unwrap(), PI / 2.0);
        assert_relative_eq!(ang(&Vector2::new(-1.0, -1.0)).unwrap(), -3.0 * PI / 4.0);
        assert_eq!(ang(&Vector2::new(-1.0, 0.0)).unwrap(), PI);
        assert!(ang(&Vector2::zeros()).is_err());
    }

    #[test]
    fn wrap_lands_in_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0);
        assert_relative_eq!(Rotation2::new(3.0).compose(&Rotation2::new(3.0)).angle(), 6.0 - 2.0 * PI);
    }

    #[test]
    fn exp_known_values() {
        assert_eq!(*exp_so3(&Vector3::zeros()).matrix(), Matrix3::identity());
        let r = exp_so3(&Vector3::new(0.0, 0.0, PI / 2.0));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(*r.matrix(), expected, epsilon = 1e-15);
    }

    #[test]
    fn log_at_pi_uses_axis_branch() {
        let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
        let r = exp_so3(&(axis * PI));
        let w = log_so3(&r);
        assert_relative_eq!(w.norm(), PI, epsilon = 1e-9);
        // ±axis·π describe the same rotation.
        assert!((w.normalize() - axis).norm() < 1e-8 || (w.normalize() + axis).norm() < 1e-8);
    }

    #[test]
    fn skew_is_cross_product() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        let y = skew(&Vector3::z()) * Vector3::x();
        assert_eq!(y, Vector3::y());
    }

    #[test]
    fn interpolate_hits_stored_samples_and_midpoints() {
        let yaw10 = 10f64.to_radians();
        let buf = TimedPoseBuffer::from_entries(vec![
            (100, Pose::identity()),
            (200, Pose::planar(2.0, 0.0, yaw10)),
        ])
        .unwrap();
        assert_eq!(buf.interpolate(200).unwrap(), Pose::planar(2.0, 0.0, yaw10));
        let mid = buf.interpolate(150).unwrap();
        assert_relative_eq!(mid.yaw(), yaw10 / 2.0, epsilon = 1e-12);
        assert_relative_eq!(mid.translation.x, 1.0, epsilon = 1e-12);
        assert!(matches!(buf.interpolate(99), Err(Error::Extrapolation { .. })));
        assert!(buf.interpolate(201).is_err());
    }

    #[test]
    fn interpolate_tracks_analytic_trajectory() {
        // Unicycle along a circle: radius 10 m, yaw rate 0.5 rad/s, sampled at 100 Hz.
        let truth = |t: f64| {
            let yaw = 0.5 * t;
            Pose::planar(10.0 * yaw.sin(), 10.0 * (1.0 - yaw.cos()), yaw)
        };
        let entries = (0..=200)
            .map(|k| (k as u64 * 10_000_000, truth(k as f64 * 0.01)))
            .collect();
        let buf = TimedPoseBuffer::from_entries(entries).unwrap();
        for q in 0..1000 {
            let t_ns = 3_000_000 + q as u64 * 1_997_000;
            let got = buf.interpolate(t_ns).unwrap();
            let want = truth(t_ns as f64 * 1e-9);
            assert!((got.translation - want.translation).norm() < 1e-4);
            assert!(log_so3(&(got.rotation.inverse() * want.rotation)).norm() < 1e-4);
        }
    }

    #[test]
    fn buffer_rejects_unordered_entries() {
        assert!(TimedPoseBuffer::from_entries(vec![(5, Pose::identity()), (5, Pose::identity())]).is_err());
        let mut b = TimedPoseBuffer::new();
        b.push(10, Pose::identity()).unwrap();
        assert!(b.push(9, Pose::identity()).is_err());
    }

    fn small_vec3(limit: f64) -> impl Strategy<Value = Vector3<f64>> {
        (-limit..limit, -limit..limit, -limit..limit).prop_map(|(a, b, c)| Vector3::new(a, b, c))
    }

    fn pose_strategy() -> impl Strategy<Value = Pose> {
        (small_vec3(1.8), small_vec3(50.0)).prop_map(|(w, t)| Pose::new(exp_so3(&w), t))
    }

    proptest! {
        #[test]
        fn exp_log_round_trip(w in small_vec3(2.0)) {
            prop_assume!(w.norm() < PI - 1e-3);
            let back = log_so3(&exp_so3(&w));
            prop_assert!((back - w).norm() < 1e-9);
            let r = exp_so3(&w);
            prop_assert!((r.matrix().transpose() * r.matrix() - Matrix3::identity()).norm() < 1e-9);
            prop_assert!((r.matrix().determinant() - 1.0).abs() < 1e-9);
            let ident = exp_so3(&w) * exp_so3(&-w);
            prop_assert!((ident.matrix() - Matrix3::identity()).norm() < 1e-12);
        }

        #[test]
        fn skew_matches_cross(v in small_vec3(10.0), u in small_vec3(10.0)) {
            prop_assert!((skew(&v) * u - v.cross(&u)).norm() < 1e-12);
            prop_assert_eq!(skew(&v).transpose(), -skew(&v));
        }

        #[test]
        fn composition_matches_homogeneous(a in pose_strategy(), b in pose_strategy(), c in pose_strategy()) {
            let h = a.to_homogeneous() * b.to_homogeneous();
            prop_assert!((a.compose(&b).to_homogeneous() - h).norm() < 1e-9);
            let left = a.compose(&b).compose(&c).to_homogeneous();
            let right = a.compose(&b.compose(&c)).to_homogeneous();
            prop_assert!((left - right).norm() < 1e-9);
            let id = a.compose(&a.inverse()).to_homogeneous();
            prop_assert!((id - Matrix4::identity()).norm() < 1e-9);
        }

        #[test]
        fn interpolation_monotone_under_constant_twist(speed in 0.5f64..20.0, rate in -1.0f64..1.0) {
            let truth = |t: f64| Pose::planar(speed * t, 0.0, rate * t);
            let entries = (0..=10).map(|k| (k as u64 * 100_000_000, truth(k as f64 * 0.1))).collect();
            let buf = TimedPoseBuffer::from_entries(entries).unwrap();
            let mut prev_x = f64::NEG_INFINITY;
            let mut prev_yaw = if rate >= 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
            for k in 0..=100u64 {
                let p = buf.interpolate(k * 10_000_000).unwrap();
                prop_assert!(p.translation.x >= prev_x);
                if rate >= 0.0 { prop_assert!(p.yaw() >= prev_yaw - 1e-15); } else { prop_assert!(p.yaw() <= prev_yaw + 1e-15); }
                prev_x = p.translation.x;
                prev_yaw = p.yaw();
            }
        }
    }

    #[test]
    fn xyz_quat_round_trip() {
        let pose = Pose::new(exp_so3(&Vector3::new(0.3, -1.2, 2.9)), Vector3::new(1.0, -2.0, 0.5));
        let v = pose.to_xyz_quat();
        assert!(v[6] >= 0.0);
        let back = Pose::from_xyz_quat(&v).unwrap();
        assert_relative_eq!(back.rotation.matrix(), pose.rotation.matrix(), epsilon = 1e-12);
        assert_relative_eq!(back.translation, pose.translation);
        assert!(Pose::from_xyz_quat(&[0.0; 7]).is_err());
    }
}
