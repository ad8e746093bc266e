//! Within-scan motion and Doppler compensation of radar keypoints.

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{rot2, wrap_angle, Pose, TimedPoseBuffer};
use crate::radar::Keypoint;

pub const DEFAULT_DOPPLER_BETA: f64 = 0.049;

/// Motion compensation runs only for moderate rotation across a scan: tiny
/// rotations gain nothing from it, and large ones are poorly predicted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensationGate {
    /// Degrees.
    pub min_for_mc: f64,
    /// Degrees.
    pub max_for_mc: f64,
}

impl Default for CompensationGate {
    fn default() -> Self {
        Self {
            min_for_mc: 2.0,
            max_for_mc: 9.0,
        }
    }
}

impl CompensationGate {
    pub fn new(min_for_mc: f64, max_for_mc: f64) -> Result<Self> {
        if !(0.0 <= min_for_mc && min_for_mc < max_for_mc) {
            return Err(Error::Config(format!(
                "compensation gate needs 0 <= min < max, got ({min_for_mc}, {max_for_mc})"
            )));
        }
        Ok(Self { min_for_mc, max_for_mc })
    }
}

pub fn should_compensate(predicted_rotation_deg: f64, gate: &CompensationGate) -> bool {
    gate.min_for_mc <= predicted_rotation_deg && predicted_rotation_deg <= gate.max_for_mc
}

/// Magnitude of the yaw change between the first and last buffered pose, in
/// degrees; zero for fewer than two poses.
pub fn predicted_scan_rotation(buffer: &TimedPoseBuffer) -> f64 {
    match (buffer.first(), buffer.last()) {
        (Some((_, a)), Some((_, b))) => wrap_angle(b.yaw() - a.yaw()).abs().to_degrees(),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionCompensation {
    pub keypoints: Vec<Keypoint>,
    /// Keypoints whose timestamp the buffer did not cover; passed through.
    pub uncovered: usize,
}

/// Re-expresses every keypoint in the radar frame at the buffer's last pose.
///
/// `buffer` holds IMU poses; `t_ir` maps radar coordinates into the IMU frame.
pub fn compensate_motion(kps: &[Keypoint], buffer: &TimedPoseBuffer, t_ir: &Pose) -> MotionCompensation {
    let Some(&(t_end, end)) = buffer.last() else {
        return MotionCompensation {
            keypoints: kps.to_vec(),
            uncovered: kps.len(),
        };
    };
    let end_inv = end.inverse();
    let t_ri = t_ir.inverse();
    let mut uncovered = 0;
    let keypoints = kps
        .iter()
        .map(|kp| {
            if kp.t == t_end {
                return *kp;
            }
            let Ok(pose) = buffer.interpolate(kp.t) else {
                uncovered += 1;
                return *kp;
            };
            let relative = t_ri.compose(&end_inv.compose(&pose)).compose(t_ir);
            if relative.is_identity() {
                return *kp;
            }
            let p = relative.transform_point(&Vector3::new(kp.xy.x, kp.xy.y, 0.0));
            let r = rot2(relative.yaw());
            let cov = r * kp.cov * r.transpose();
            Keypoint::from_xy(Vector2::new(p.x, p.y), kp.t, (cov + cov.transpose()) * 0.5)
        })
        .collect();
    MotionCompensation { keypoints, uncovered }
}

/// Removes the range bias `β·v_r` a moving FMCW radar adds to each return,
/// where `v_r` is the sensor velocity along the keypoint bearing.
pub fn compensate_doppler(kps: &[Keypoint], v_sensor: &Vector2<f64>, beta: f64) -> Vec<Keypoint> {
    kps.iter()
        .map(|kp| {
            let shift = beta * (v_sensor.x * kp.phi.cos() + v_sensor.y * kp.phi.sin());
            if shift == 0.0 {
                return *kp;
            }
            let rho = kp.rho - shift;
            Keypoint {
                rho,
                xy: Vector2::new(rho * kp.phi.cos(), rho * kp.phi.sin()),
                ..*kp
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rot_z, Nanos};
    use approx::assert_relative_eq;
    use nalgebra::Matrix2;

    fn kp_at(x: f64, y: f64, t: Nanos) -> Keypoint {
        Keypoint::from_polar((x * x + y * y).sqrt(), y.atan2(x), t, 0.05, 0.01).unwrap()
    }

    #[test]
    fn gate_thresholds() {
        let g = CompensationGate::default();
        assert!(!should_compensate(1.0, &g));
        assert!(should_compensate(5.0, &g));
        assert!(!should_compensate(12.0, &g));
        assert!(should_compensate(2.0, &g) && should_compensate(9.0, &g));
        assert!(CompensationGate::new(5.0, 5.0).is_err());
    }

    #[test]
    fn stationary_buffer_is_identity() {
        let buffer = TimedPoseBuffer::from_entries(vec![(0, Pose::identity()), (1000, Pose::identity())]).unwrap();
        let kps = vec![kp_at(3.0, 4.0, 10), kp_at(-5.0, 1.0, 900)];
        let t_ir = Pose::planar(0.3, 0.0, 0.2);
        let out = compensate_motion(&kps, &buffer, &t_ir);
        assert_eq!(out.keypoints, kps);
        assert_eq!(out.uncovered, 0);
    }

    #[test]
    fn keypoint_at_scan_end_is_unchanged() {
        let buffer = TimedPoseBuffer::from_entries(vec![(0, Pose::identity()), (1000, Pose::planar(1.0, 0.5, 0.1))]).unwrap();
        let kps = vec![kp_at(10.0, 2.0, 1000)];
        assert_eq!(compensate_motion(&kps, &buffer, &Pose::identity()).keypoints, kps);
    }

    #[test]
    fn uncovered_keypoints_pass_through() {
        let buffer = TimedPoseBuffer::from_entries(vec![(100, Pose::identity()), (200, Pose::planar(1.0, 0.0, 0.0))]).unwrap();
        let kps = vec![kp_at(10.0, 2.0, 50), kp_at(10.0, 2.0, 150)];
        let out = compensate_motion(&kps, &buffer, &Pose::identity());
        assert_eq!(out.uncovered, 1);
        assert_eq!(out.keypoints[0], kps[0]);
        assert_relative_eq!(out.keypoints[1].xy.x, 9.5, epsilon = 1e-12);
    }

    #[test]
    fn covariance_follows_rotation() {
        let buffer = TimedPoseBuffer::from_entries(vec![(0, Pose::identity()), (1000, Pose::planar(0.0, 0.0, 0.5))]).unwrap();
        let kp = kp_at(10.0, 0.0, 0);
        let out = compensate_motion(&[kp], &buffer, &Pose::identity()).keypoints[0];
        let r = rot2(-0.5);
        assert_relative_eq!(out.cov, r * kp.cov * r.transpose(), epsilon = 1e-12);
        assert!(out.cov.cholesky().is_some());
        assert_relative_eq!(out.phi, -0.5, epsilon = 1e-12);
    }

    /// Wall at x = 20 swept while yawing at constant rate: fit residual of the
    /// raw points versus the compensated ones.
    #[test]
    fn restores_straight_wall() {
        let yaw_rate = 0.6; // rad/s
        let period: Nanos = 250_000_000;
        let n = 400;
        let pose_at = |t: Nanos| {
            let s = t as f64 * 1e-9;
            Pose::new(rot_z(yaw_rate * s), Vector3::new(3.0 * s, 0.0, 0.0))
        };
        let entries: Vec<_> = (0..=25).map(|k| (k * period / 25, pose_at(k * period / 25))).collect();
        let buffer = TimedPoseBuffer::from_entries(entries).unwrap();
        let kps: Vec<_> = (0..n)
            .map(|i| {
                let t = i as Nanos * period / n as Nanos;
                let world = Vector3::new(20.0, -15.0 + 30.0 * i as f64 / n as f64, 0.0);
                let local = pose_at(t).inverse().transform_point(&world);
                kp_at(local.x, local.y, t)
            })
            .collect();
        let out = compensate_motion(&kps, &buffer, &Pose::identity());
        let before = line_fit_rms(&kps);
        let after = line_fit_rms(&out.keypoints);
        assert!(after * 5.0 <= before, "before {before} after {after}");
    }

    fn line_fit_rms(kps: &[Keypoint]) -> f64 {
        let n = kps.len() as f64;
        let mean = kps.iter().map(|k| k.xy).sum::<Vector2<f64>>() / n;
        let mut s = Matrix2::zeros();
        for k in kps {
            let d = k.xy - mean;
            s += d * d.transpose();
        }
        let eig = s.symmetric_eigen();
        (eig.eigenvalues.min() / n).sqrt()
    }

    #[test]
    fn doppler_examples() {
        let kps = vec![kp_at(30.0, 0.0, 0), kp_at(0.0, 12.0, 0)];
        assert_eq!(compensate_doppler(&kps, &Vector2::new(20.0, 0.0), 0.0), kps);
        let out = compensate_doppler(&kps, &Vector2::new(20.0, 0.0), 0.05);
        assert_relative_eq!(out[0].rho, 29.0, epsilon = 1e-12);
        assert_relative_eq!(out[0].xy.x, 29.0, epsilon = 1e-12);
        assert_relative_eq!(out[1].rho, 12.0, epsilon = 1e-12);
    }

    #[test]
    fn scan_rotation_from_buffer() {
        let buffer = TimedPoseBuffer::from_entries(vec![
            (0, Pose::planar(0.0, 0.0, 3.1)),
            (10, Pose::planar(0.0, 0.0, -3.1)),
        ])
        .unwrap();
        assert_relative_eq!(predicted_scan_rotation(&buffer), (2.0 * std::f64::consts::PI - 6.2).to_degrees(), epsilon = 1e-9);
        assert_eq!(predicted_scan_rotation(&TimedPoseBuffer::new()), 0.0);
    }
}
