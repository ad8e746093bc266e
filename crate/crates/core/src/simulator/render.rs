//! Radar scan and IMU synthesis.

use std::f64::consts::{PI, TAU};

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use super::scenario::{Landmark, Scenario};
use super::trajectory::{MotionState, Trajectory};
use super::{rng_stream, STREAM_IMU, STREAM_SCAN};
use crate::error::Result;
use crate::eskf::ImuSample;
use crate::geometry::{log_so3, wrap_angle, Nanos, Pose};
use crate::radar::PolarScan;

/// Returns closer than this to a wall along the same ray stay visible.
const OCCLUSION_MARGIN: f64 = 0.5;
/// Bumps are drawn out to this many widths.
const BUMP_SPAN: f64 = 4.0;

/// Radar pose in the world and sensor-frame velocity of its origin.
///
/// The lever-arm term `ω × t` is ignored; extrinsics in the bundled
/// scenarios have no translation.
pub fn radar_state(extrinsic: &Pose, imu: &MotionState) -> (Pose, Vector2<f64>) {
    let pose = imu.pose.compose(extrinsic);
    let v = pose.rotation.inverse() * imu.velocity;
    (pose, Vector2::new(v.x, v.y))
}

/// Renders the revolution that starts at `start`. `motion` gives the IMU
/// state at any instant of the revolution; each azimuth is cast from the
/// pose at its own timestamp. `scan_index` selects the noise stream.
pub fn render_scan(
    scenario: &Scenario,
    motion: impl Fn(Nanos) -> MotionState,
    start: Nanos,
    scan_index: u64,
) -> Result<PolarScan> {
    scenario.validate()?;
    let radar = &scenario.radar;
    let (az_count, bins, res) = (radar.azimuths, radar.range_bins, radar.range_resolution);
    let step = TAU / az_count as f64;
    let period = scenario.azimuth_period();
    let times: Vec<Nanos> = (0..az_count as u64).map(|a| start + a * period).collect();
    let mut rng = rng_stream(scenario.seed, STREAM_SCAN + scan_index);

    let mut points = Vec::new();
    let mut walls = Vec::new();
    for lm in &scenario.landmarks {
        match *lm {
            Landmark::Point { xy, intensity } => points.push((xy, intensity)),
            Landmark::Wall { a, b, intensity } => walls.push((a, b, intensity)),
        }
    }
    // Per-detection jitter, drawn in a fixed order so output is reproducible.
    let mut jitter = |sigma: f64| -> f64 {
        if sigma > 0.0 {
            sigma * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        }
    };
    let point_jitter: Vec<(f64, f64)> = points
        .iter()
        .map(|_| (jitter(radar.sigma_rho), jitter(radar.sigma_phi)))
        .collect();
    let wall_jitter: Vec<f64> = (0..az_count).map(|_| jitter(radar.sigma_rho)).collect();

    let states: Vec<(Pose, Vector2<f64>)> = times
        .iter()
        .map(|&t| radar_state(&scenario.extrinsic, &motion(t)))
        .collect();
    let candidates = point_candidates(&points, &states, scenario.max_range(), step);

    let width = radar.bump_width * res;
    let mut row = vec![0.0f64; bins];
    let mut intensities = Vec::with_capacity(az_count * bins);
    for a in 0..az_count {
        row.fill(radar.noise_floor);
        if radar.noise_std > 0.0 {
            for v in row.iter_mut() {
                *v += radar.noise_std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let (pose, v_sensor) = &states[a];
        let beam = a as f64 * step;
        let origin = Vector2::new(pose.translation.x, pose.translation.y);
        let heading = pose.yaw() + beam;
        let doppler = |u: Vector2<f64>| radar.doppler_beta * v_sensor.dot(&u);
        let inv = pose.inverse();

        let wall_hit = nearest_wall(&walls, &origin, heading);
        if let Some((range, intensity)) = wall_hit {
            let u = Vector2::new(beam.cos(), beam.sin());
            add_bump(&mut row, range + wall_jitter[a] + doppler(u), intensity, width, res);
        }
        for &j in &candidates[a] {
            let (xy, intensity) = points[j as usize];
            let local = inv.transform_point(&Vector3::new(xy.x, xy.y, 0.0));
            let (d_rho, d_phi) = point_jitter[j as usize];
            let phi = local.y.atan2(local.x) + d_phi;
            let off = wrap_angle(phi - beam);
            if !(-step / 2.0..step / 2.0).contains(&off) {
                continue;
            }
            let rho = local.xy().norm();
            let blocked = nearest_wall(&walls, &origin, heading + off)
                .is_some_and(|(r, _)| r < rho - OCCLUSION_MARGIN);
            if !blocked {
                let u = Vector2::new(phi.cos(), phi.sin());
                add_bump(&mut row, rho + d_rho + doppler(u), intensity, width, res);
            }
        }
        intensities.extend(row.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    }
    PolarScan::new(bins, res, times, intensities)
}

/// For each azimuth, the point landmarks it might illuminate. The bearing of
/// every point is sampled at a few instants of the revolution and the beam
/// window around the swept arc, padded by two azimuths, is kept.
fn point_candidates(
    points: &[(Vector2<f64>, f64)],
    states: &[(Pose, Vector2<f64>)],
    max_range: f64,
    step: f64,
) -> Vec<Vec<u32>> {
    let n = states.len();
    let samples: Vec<Pose> = (0..5).map(|k| states[k * (n - 1) / 4].0.inverse()).collect();
    let mut out = vec![Vec::new(); n];
    for (j, (xy, _)) in points.iter().enumerate() {
        let p = Vector3::new(xy.x, xy.y, 0.0);
        let locals: Vec<Vector3<f64>> = samples.iter().map(|inv| inv.transform_point(&p)).collect();
        if locals.iter().all(|l| l.xy().norm() > max_range + 1.0) {
            continue;
        }
        let first = locals[0].y.atan2(locals[0].x);
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for l in &locals[1..] {
            let d = wrap_angle(l.y.atan2(l.x) - first);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if hi - lo > PI / 2.0 || locals.iter().any(|l| l.xy().norm() < 2.0) {
            // Close passes sweep fast; test every azimuth.
            out.iter_mut().for_each(|c| c.push(j as u32));
            continue;
        }
        let a0 = ((first + lo) / step).floor() as i64 - 2;
        let a1 = ((first + hi) / step).ceil() as i64 + 2;
        for a in a0..=a1 {
            out[a.rem_euclid(n as i64) as usize].push(j as u32);
        }
    }
    out
}

/// Range and intensity of the closest wall along a world-frame ray.
fn nearest_wall(walls: &[(Vector2<f64>, Vector2<f64>, f64)], origin: &Vector2<f64>, heading: f64) -> Option<(f64, f64)> {
    let d = Vector2::new(heading.cos(), heading.sin());
    let mut best: Option<(f64, f64)> = None;
    for (a, b, intensity) in walls {
        let e = b - a;
        let denom = d.x * e.y - d.y * e.x;
        if denom.abs() < 1e-12 {
            continue;
        }
        let w = a - origin;
        let s = (w.x * e.y - w.y * e.x) / denom;
        let u = (w.x * d.y - w.y * d.x) / denom;
        if s > 0.0 && (0.0..=1.0).contains(&u) && best.is_none_or(|(r, _)| s < r) {
            best = Some((s, *intensity));
        }
    }
    best
}

fn add_bump(row: &mut [f64], range: f64, intensity: f64, width: f64, res: f64) {
    if !(range > 0.0) {
        return;
    }
    let lo = ((range - BUMP_SPAN * width) / res).floor().max(0.0) as usize;
    let hi = (((range + BUMP_SPAN * width) / res).ceil() as usize).min(row.len());
    for (b, v) in row.iter_mut().enumerate().take(hi).skip(lo) {
        let z = ((b as f64 + 0.5) * res - range) / width;
        *v += intensity * (-0.5 * z * z).exp();
    }
}

/// IMU stream over the scenario duration. Sample `k` is stamped at the
/// start of its interval and holds the rates that carry the exact state at
/// `t_k` to the exact state at `t_{k+1}` under the filter's kinematics,
/// plus bias and white noise.
pub fn render_imu(scenario: &Scenario, trajectory: &Trajectory) -> Vec<ImuSample> {
    let spec = &scenario.imu;
    let period = scenario.imu_period();
    let dt = period as f64 * 1e-9;
    let end = (scenario.duration * 1e9).round() as u64;
    let g = Vector3::new(0.0, 0.0, -scenario.gravity);
    let mut rng = rng_stream(scenario.seed, STREAM_IMU);
    let mut gauss3 = |sigma: f64| -> Vector3<f64> {
        if sigma > 0.0 {
            Vector3::from_fn(|_, _| sigma * rng.sample::<f64, _>(StandardNormal))
        } else {
            Vector3::zeros()
        }
    };
    let (mut bg, mut ba) = (spec.gyro_bias, spec.accel_bias);
    let mut out = Vec::new();
    let mut t = 0u64;
    let mut s0 = trajectory.state(0.0);
    while t + period <= end {
        let s1 = trajectory.state((t + period) as f64 * 1e-9);
        let omega = log_so3(&(s0.pose.rotation.inverse() * s1.pose.rotation)) / dt;
        let accel = s0.pose.rotation.inverse() * ((s1.velocity - s0.velocity) / dt - g);
        let noise_g = gauss3(spec.gyro_noise / dt.sqrt());
        let noise_a = gauss3(spec.accel_noise / dt.sqrt());
        out.push(ImuSample {
            t,
            omega: omega + bg + noise_g,
            accel: accel + ba + noise_a,
        });
        bg += gauss3(spec.gyro_bias_walk * dt.sqrt());
        ba += gauss3(spec.accel_bias_walk * dt.sqrt());
        s0 = s1;
        t += period;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eskf::{Eskf, NominalState, NoiseConfig};
    use crate::radar::{extract_keypoints, ExtractionParams};
    use crate::simulator::trajectory::PlanarStart;
    use approx::assert_relative_eq;

    fn still(x: f64, y: f64, yaw: f64) -> impl Fn(Nanos) -> MotionState {
        move |_| MotionState {
            pose: Pose::planar(x, y, yaw),
            velocity: Vector3::zeros(),
        }
    }

    fn scene(landmarks: Vec<Landmark>) -> Scenario {
        Scenario {
            landmarks,
            ..Scenario::default()
        }
    }

    #[test]
    fn single_point_lands_in_its_cell() {
        let s = scene(vec![Landmark::Point { xy: Vector2::new(0.0, 25.03), intensity: 150.0 }]);
        let scan = render_scan(&s, still(0.0, 0.0, 0.0), 0, 0).unwrap();
        // Bearing 90° is azimuth 100 of 400; range 25.03 m is bin 250.
        let mut brightest = (0, 0, 0u8);
        for a in 0..scan.azimuth_count() {
            for (b, &v) in scan.row(a).iter().enumerate() {
                if v > brightest.2 {
                    brightest = (a, b, v);
                }
            }
        }
        assert_eq!((brightest.0, brightest.1), (100, 250));
        let lit = (0..scan.azimuth_count()).filter(|&a| scan.row(a).iter().any(|&v| v > 15)).count();
        assert_eq!(lit, 1);
    }

    #[test]
    fn wall_keypoints_sit_at_true_range() {
        // Wall along y = 20 m seen from the origin.
        let s = scene(vec![Landmark::Wall {
            a: Vector2::new(-15.0, 20.0),
            b: Vector2::new(15.0, 20.0),
            intensity: 120.0,
        }]);
        let scan = render_scan(&s, still(0.0, 0.0, 0.0), 0, 0).unwrap();
        let kps = extract_keypoints(&scan, &ExtractionParams::default()).unwrap();
        let mut lit = 0;
        for a in 0..scan.azimuth_count() {
            let beam = scan.azimuth_angle(a);
            let d = Vector2::new(beam.cos(), beam.sin());
            if d.y <= 0.0 || (20.0 / d.y * d.x).abs() > 15.0 {
                continue;
            }
            lit += 1;
            let true_range = 20.0 / d.y;
            let row: Vec<_> = kps.iter().filter(|k| k.t == scan.azimuth_timestamps()[a]).collect();
            assert!(
                row.iter().any(|k| (k.rho - true_range).abs() <= 0.1),
                "azimuth {a}: no keypoint near {true_range}"
            );
        }
        assert!(lit > 50);
    }

    #[test]
    fn walls_occlude_points_behind_them() {
        let wall = Landmark::Wall {
            a: Vector2::new(10.0, -5.0),
            b: Vector2::new(10.0, 5.0),
            intensity: 100.0,
        };
        let hidden = Landmark::Point { xy: Vector2::new(20.0, 0.3), intensity: 250.0 };
        let s = scene(vec![wall, hidden]);
        let scan = render_scan(&s, still(0.0, 0.0, 0.0), 0, 0).unwrap();
        assert!(scan.intensities().iter().all(|&v| v < 200));
    }

    #[test]
    fn constant_motion_equals_static_render() {
        let s = scene(vec![
            Landmark::Point { xy: Vector2::new(5.0, 7.0), intensity: 150.0 },
            Landmark::Wall { a: Vector2::new(-30.0, -10.0), b: Vector2::new(30.0, -10.0), intensity: 90.0 },
        ]);
        let traj = Trajectory::Stationary { start: PlanarStart { x: 1.0, y: 2.0, yaw: 0.3 } };
        let a = render_scan(&s, |t| traj.state(t as f64 * 1e-9), 1_000_000, 3).unwrap();
        let b = render_scan(&s, still(1.0, 2.0, 0.3), 1_000_000, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_is_seeded_and_raises_false_positives() {
        let point = Landmark::Point { xy: Vector2::new(30.0, 0.0), intensity: 200.0 };
        let mut s = scene(vec![point]);
        let count = |s: &Scenario| {
            let scan = render_scan(s, still(0.0, 0.0, 0.0), 0, 0).unwrap();
            extract_keypoints(&scan, &ExtractionParams::default()).unwrap().len()
        };
        let mut counts = Vec::new();
        for std in [0.0, 0.05, 0.1, 0.2] {
            s.radar.noise_std = std;
            counts.push(count(&s));
        }
        assert!(counts.windows(2).all(|w| w[1] >= w[0]), "{counts:?}");
        assert!(counts[3] > counts[0], "{counts:?}");
        s.radar.noise_std = 2.0;
        let a = render_scan(&s, still(0.0, 0.0, 0.0), 0, 5).unwrap();
        assert_eq!(a, render_scan(&s, still(0.0, 0.0, 0.0), 0, 5).unwrap());
        assert_ne!(a, render_scan(&s, still(0.0, 0.0, 0.0), 0, 6).unwrap());
    }

    #[test]
    fn doppler_shifts_range_along_motion() {
        let mut s = scene(vec![Landmark::Point { xy: Vector2::new(20.03, 0.0), intensity: 200.0 }]);
        s.radar.doppler_beta = 0.2;
        let moving = |_| MotionState {
            pose: Pose::identity(),
            velocity: Vector3::new(5.0, 0.0, 0.0),
        };
        let scan = render_scan(&s, moving, 0, 0).unwrap();
        let row = scan.row(0);
        let peak = (0..row.len()).max_by_key(|&b| row[b]).unwrap();
        // 20.03 m + 0.2 · 5 m/s = 21.03 m.
        assert_eq!(peak, 210);
    }

    #[test]
    fn imu_at_rest_reads_gravity() {
        let s = Scenario { duration: 1.0, ..Scenario::default() };
        let imu = render_imu(&s, &s.trajectory);
        assert_eq!(imu.len(), 100);
        for sample in &imu {
            assert_eq!(sample.omega, Vector3::zeros());
            assert_relative_eq!(sample.accel, Vector3::new(0.0, 0.0, 9.81), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_walk_keeps_bias_constant() {
        let mut s = Scenario { duration: 2.0, ..Scenario::default() };
        s.imu.gyro_bias = Vector3::new(0.01, -0.02, 0.003);
        s.imu.accel_bias = Vector3::new(0.1, 0.0, -0.05);
        let imu = render_imu(&s, &s.trajectory);
        for sample in &imu {
            assert_eq!(sample.omega, s.imu.gyro_bias);
            assert_relative_eq!(sample.accel, Vector3::new(0.1, 0.0, 9.76), epsilon = 1e-12);
        }
    }

    #[test]
    fn noiseless_circle_integrates_exactly() {
        let traj = Trajectory::Twist {
            start: PlanarStart::default(),
            speed: 5.0,
            yaw_rate: 5.0 / 30.0,
        };
        let s = Scenario {
            duration: 60.0,
            trajectory: traj.clone(),
            ..Scenario::default()
        };
        let imu = render_imu(&s, &traj);
        let start = traj.state(0.0);
        let mut state = NominalState::at_rest(start.pose.rotation, Vector3::new(0.0, 0.0, -9.81));
        state.v = start.velocity;
        let mut filter = Eskf::new(state, NoiseConfig::default());
        for sample in &imu {
            assert!(filter.predict(sample, 0.01));
        }
        let truth = traj.pose(60.0);
        let yaw_err = wrap_angle(filter.state.pose().yaw() - truth.yaw());
        assert!(yaw_err.abs() < 1e-6, "yaw error {yaw_err}");
        let pos_err = (filter.state.p - truth.translation).norm();
        assert!(pos_err < 0.01, "position error {pos_err}");
    }
}
