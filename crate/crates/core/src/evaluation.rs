//! Trajectory accuracy metrics: segment-based relative error and aligned
//! absolute error.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::{log_so3, Nanos, Pose};

pub const DEFAULT_SEGMENT_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];
/// Largest timestamp gap accepted when pairing estimate and ground truth.
pub const ASSOCIATION_TOLERANCE_NS: Nanos = 50_000_000;
/// Absorbs rounding in accumulated arc length when locating segment ends.
const ARC_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub t: Nanos,
    pub pose: Pose,
}

/// Header of the pose CSV format shared by ground truth and estimates.
pub const TRAJECTORY_HEADER: &str = "t_ns,x,y,z,qx,qy,qz,qw";

/// Formats one `t_ns,x,y,z,qx,qy,qz,qw` row without a line terminator.
pub fn format_pose_row(t: Nanos, pose: &Pose) -> String {
    let v = pose.to_xyz_quat();
    format!("{t},{},{},{},{},{},{},{}", v[0], v[1], v[2], v[3], v[4], v[5], v[6])
}

pub fn write_trajectory_csv(path: &Path, poses: &[StampedPose]) -> Result<()> {
    let mut s = String::with_capacity(64 * (poses.len() + 1));
    s.push_str(TRAJECTORY_HEADER);
    s.push('\n');
    for p in poses {
        s.push_str(&format_pose_row(p.t, &p.pose));
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Reads a pose CSV whose first eight columns are `t_ns,x,y,z,qx,qy,qz,qw`.
/// A non-numeric first line is treated as a header; extra columns are ignored.
pub fn read_trajectory_csv(path: &Path) -> Result<Vec<StampedPose>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    let mut offset = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line_offset = offset;
        offset += line.len() + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if lineno == 0 && fields[0].parse::<u64>().is_err() {
            continue;
        }
        let bad = |msg: String| Error::format(path, line_offset as u64, msg);
        if fields.len() < 8 {
            return Err(bad(format!("line {}: expected at least 8 columns, got {}", lineno + 1, fields.len())));
        }
        let t: Nanos = fields[0]
            .parse()
            .map_err(|_| bad(format!("line {}: bad timestamp {:?}", lineno + 1, fields[0])))?;
        let mut v = [0.0; 7];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = fields[k + 1]
                .parse()
                .map_err(|_| bad(format!("line {}: bad number {:?}", lineno + 1, fields[k + 1])))?;
        }
        let pose = Pose::from_xyz_quat(&v).map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
        if out.last().is_some_and(|p: &StampedPose| p.t >= t) {
            return Err(bad(format!("line {}: timestamps must increase", lineno + 1)));
        }
        out.push(StampedPose { t, pose });
    }
    Ok(out)
}

/// Pairs each estimate with the nearest-in-time ground-truth pose, keeping
/// pairs within the association tolerance. Returns `(estimate, truth)`.
pub fn associate(est: &[StampedPose], gt: &[StampedPose]) -> Vec<(Pose, Pose)> {
    let mut out = Vec::new();
    if gt.is_empty() {
        return out;
    }
    for e in est {
        let idx = gt.partition_point(|g| g.t < e.t);
        let candidates = [idx.checked_sub(1), (idx < gt.len()).then_some(idx)];
        let best = candidates
            .into_iter()
            .flatten()
            .min_by_key(|&i| gt[i].t.abs_diff(e.t))
            .expect("non-empty ground truth");
        if gt[best].t.abs_diff(e.t) <= ASSOCIATION_TOLERANCE_NS {
            out.push((e.pose, gt[best].pose));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentError {
    pub length: f64,
    pub count: usize,
    /// Mean translation error, percent of segment length.
    pub translation_pct: f64,
    /// Mean rotation error, degrees per 100 m.
    pub rotation_deg_per_100m: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelativeErrorReport {
    /// Only lengths with at least one segment.
    pub segments: Vec<SegmentError>,
    /// Mean over all segments of all lengths.
    pub translation_pct: f64,
    pub rotation_deg_per_100m: f64,
    pub diagnostic: Option<String>,
}

impl RelativeErrorReport {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("length_m,segments,translation_pct,rotation_deg_per_100m\n");
        for seg in &self.segments {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6}",
                seg.length, seg.count, seg.translation_pct, seg.rotation_deg_per_100m
            );
        }
        let total: usize = self.segments.iter().map(|s| s.count).sum();
        let _ = writeln!(s, "all,{},{:.6},{:.6}", total, self.translation_pct, self.rotation_deg_per_100m);
        s
    }
}

/// Segment-based drift: every associated pose starts a segment of each
/// length, measured by ground-truth arc length.
pub fn relative_errors(est: &[StampedPose], gt: &[StampedPose], lengths: &[f64]) -> RelativeErrorReport {
    let pairs = associate(est, gt);
    if pairs.len() < 2 {
        return RelativeErrorReport {
            diagnostic: Some(format!("only {} associated poses", pairs.len())),
            ..Default::default()
        };
    }
    let mut dist = vec![0.0; pairs.len()];
    for i in 1..pairs.len() {
        dist[i] = dist[i - 1] + (pairs[i].1.translation - pairs[i - 1].1.translation).norm();
    }
    let mut segments = Vec::new();
    let (mut t_sum, mut r_sum, mut n_sum) = (0.0, 0.0, 0usize);
    for &len in lengths {
        let (mut t_acc, mut r_acc, mut count) = (0.0, 0.0, 0usize);
        let mut j = 0;
        for i in 0..pairs.len() {
            j = j.max(i);
            while j < pairs.len() && dist[j] - dist[i] < len - ARC_SLACK {
                j += 1;
            }
            if j == pairs.len() {
                break;
            }
            let d_est = pairs[i].0.inverse().compose(&pairs[j].0);
            let d_gt = pairs[i].1.inverse().compose(&pairs[j].1);
            let e = d_est.inverse().compose(&d_gt);
            t_acc += e.translation.norm() / len * 100.0;
            r_acc += log_so3(&e.rotation).norm().to_degrees() / len * 100.0;
            count += 1;
        }
        if count > 0 {
            segments.push(SegmentError {
                length: len,
                count,
                translation_pct: t_acc / count as f64,
                rotation_deg_per_100m: r_acc / count as f64,
            });
            t_sum += t_acc;
            r_sum += r_acc;
            n_sum += count;
        }
    }
    if n_sum == 0 {
        return RelativeErrorReport {
            diagnostic: Some(format!(
                "trajectory length {:.1} m is shorter than the shortest segment",
                dist.last().copied().unwrap_or(0.0)
            )),
            ..Default::default()
        };
    }
    RelativeErrorReport {
        segments,
        translation_pct: t_sum / n_sum as f64,
        rotation_deg_per_100m: r_sum / n_sum as f64,
        diagnostic: None,
    }
}

/// Position RMSE after the planar rigid alignment that best maps the
/// estimate onto ground truth.
pub fn absolute_error(est: &[StampedPose], gt: &[StampedPose]) -> Result<f64> {
    let pairs = associate(est, gt);
    if pairs.len() < 3 {
        return Err(Error::Domain(format!(
            "absolute error needs 3 associated poses, got {}",
            pairs.len()
        )));
    }
    let xy = |p: &Pose| Vector2::new(p.translation.x, p.translation.y);
    let n = pairs.len() as f64;
    let ce = pairs.iter().map(|(e, _)| xy(e)).sum::<Vector2<f64>>() / n;
    let cg = pairs.iter().map(|(_, g)| xy(g)).sum::<Vector2<f64>>() / n;
    let (mut dot, mut cross) = (0.0, 0.0);
    for (e, g) in &pairs {
        let (a, b) = (xy(e) - ce, xy(g) - cg);
        dot += a.dot(&b);
        cross += a.x * b.y - a.y * b.x;
    }
    let r = crate::geometry::rot2(cross.atan2(dot));
    let sse: f64 = pairs
        .iter()
        .map(|(e, g)| (r * (xy(e) - ce) - (xy(g) - cg)).norm_squared())
        .sum();
    Ok((sse / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(n: usize, step: f64, heading: f64, yaw: f64) -> Vec<StampedPose> {
        (0..n)
            .map(|i| StampedPose {
                t: i as Nanos * 100_000_000,
                pose: Pose::planar(i as f64 * step * heading.cos(), i as f64 * step * heading.sin(), yaw),
            })
            .collect()
    }

    fn curvy(n: usize) -> Vec<StampedPose> {
        (0..n)
            .map(|i| {
                let s = i as f64;
                StampedPose {
                    t: i as Nanos * 100_000_000,
                    pose: Pose::planar(60.0 * (s / 80.0).sin() + s, 40.0 * (s / 50.0).cos(), s / 60.0),
                }
            })
            .collect()
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let gt = curvy(600);
        let r = relative_errors(&gt, &gt, &DEFAULT_SEGMENT_LENGTHS);
        assert!(!r.is_empty());
        assert!(r.translation_pct.abs() < 1e-9 && r.rotation_deg_per_100m.abs() < 1e-9);
        assert!(absolute_error(&gt, &gt).unwrap() < 1e-12);
    }

    #[test]
    fn rigid_offset_is_invisible() {
        let gt = curvy(600);
        let offset = Pose::planar(12.0, -3.0, 0.7);
        let est: Vec<_> = gt
            .iter()
            .map(|p| StampedPose { t: p.t, pose: offset.compose(&p.pose) })
            .collect();
        let r = relative_errors(&est, &gt, &DEFAULT_SEGMENT_LENGTHS);
        assert!(r.translation_pct < 1e-9 && r.rotation_deg_per_100m < 1e-9);
        assert!(absolute_error(&est, &gt).unwrap() < 1e-9);
    }

    #[test]
    fn scaled_yaw_on_straight_line() {
        let psi = 0.8;
        let gt = line(1700, 0.5, psi, psi);
        let est = line(1700, 0.5, psi, 1.01 * psi);
        let r = relative_errors(&est, &gt, &DEFAULT_SEGMENT_LENGTHS);
        assert_eq!(r.segments.len(), 8);
        let want = 2.0 * (0.005 * psi).sin() * 100.0;
        for seg in &r.segments {
            assert_relative_eq!(seg.translation_pct, want, epsilon = 1e-9);
            assert!(seg.rotation_deg_per_100m < 1e-9);
        }
    }

    #[test]
    fn drift_ramp_rmse() {
        let k = 0.01;
        let gt: Vec<_> = (0..200)
            .map(|i| StampedPose { t: i * 1000, pose: Pose::planar(i as f64, 0.0, 0.0) })
            .collect();
        let est: Vec<_> = gt
            .iter()
            .enumerate()
            .map(|(i, p)| StampedPose {
                t: p.t,
                pose: Pose::planar(p.pose.translation.x + k * i as f64, 0.0, 0.0),
            })
            .collect();
        let mean = 199.0 / 2.0;
        let var = (0..200).map(|i| (i as f64 - mean).powi(2)).sum::<f64>() / 200.0;
        assert_relative_eq!(absolute_error(&est, &gt).unwrap(), k * var.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn short_trajectory_reports_diagnostic() {
        let gt = line(50, 1.0, 0.0, 0.0);
        let r = relative_errors(&gt, &gt, &DEFAULT_SEGMENT_LENGTHS);
        assert!(r.is_empty());
        assert!(r.diagnostic.is_some());
        assert!(absolute_error(&gt[..2], &gt[..2]).is_err());
    }

    #[test]
    fn association_respects_tolerance() {
        let gt = line(5, 1.0, 0.0, 0.0);
        let est: Vec<_> = gt
            .iter()
            .map(|p| StampedPose { t: p.t + 60_000_000, pose: p.pose })
            .collect();
        // Estimates lag by 60 ms; all but the last have a later truth pose
        // 40 ms away.
        let pairs = associate(&est, &gt);
        assert_eq!(pairs.len(), 4);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        std::fs::write(&path, "t_ns,x,y,z,qx,qy,qz,qw,extra\n10,1,2,0,0,0,0,1,5\n20,2,2,0,0,0,0.7071067811865476,0.7071067811865476,5\n").unwrap();
        let traj = read_trajectory_csv(&path).unwrap();
        assert_eq!(traj.len(), 2);
        write_trajectory_csv(&path, &traj).unwrap();
        for (a, b) in read_trajectory_csv(&path).unwrap().iter().zip(&traj) {
            assert_eq!(a.t, b.t);
            assert_relative_eq!(a.pose.translation, b.pose.translation);
            assert_relative_eq!(a.pose.rotation.matrix(), b.pose.rotation.matrix(), epsilon = 1e-12);
        }
        assert_relative_eq!(traj[1].pose.yaw(), std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        std::fs::write(&path, "10,1,2,0,0,0,0,1\n5,1,2,0,0,0,0,1\n").unwrap();
        assert!(read_trajectory_csv(&path).is_err());
        std::fs::write(&path, "10,1,2\n").unwrap();
        assert!(read_trajectory_csv(&path).is_err());
    }
}
