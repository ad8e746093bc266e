//! Offline odometry over a dataset directory.
//!
//! Per scan: propagate the filter to the scan end (buffering poses), take
//! the extracted keypoints, match them against the previous scan, apply the
//! stationary gate, correct Doppler and motion skew, register, lift the
//! result into a pose observation and fuse it.

mod config;
mod dataset;
mod frontend;

pub use config::{Mode, PipelineConfig};
pub use dataset::{read_calib, read_imu_csv, Dataset};

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{Vector2, Vector3};
use rand::Rng;

use crate::deskew::{compensate_doppler, compensate_motion, predicted_scan_rotation, should_compensate};
use crate::error::{Error, Result};
use crate::eskf::{initialize_gravity, Eskf, ImuSample, NominalState, PlanarPoseMeasurement, GRAVITY_INIT_SAMPLES, MAX_DT};
use crate::geometry::{interpolate_poses, rot_z, Nanos, Pose, TimedPoseBuffer};
use crate::matching::{match_descriptors, CorrespondenceSet, Describer, Descriptor};
use crate::radar::Keypoint;
use crate::registration::{register, Confidence, PoseObservation, Registration, RegistrationFailure};
use frontend::FrontFrame;

/// True when the scan pair has so many matches that the platform is taken
/// to be standing still.
pub fn stationary_gate(n_matches: usize, thr_for_stop: usize) -> bool {
    n_matches > thr_for_stop
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameStatus {
    /// First processed scan; defines the origin.
    Bootstrap,
    Fused,
    /// Registered from a clique smaller than three; fused with inflated variances.
    LowConfidence,
    Stationary,
    /// Registration failed; the pose comes from prediction alone.
    PredictOnly,
    /// No IMU data around this scan; the radar observation replaced the state.
    Bridged,
}

/// What to do with a registration outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FusionStep {
    PredictOnly,
    Update(PoseObservation, Confidence),
}

/// Failures skip the update and let prediction carry the state;
/// low-confidence results are fused with the variances `register` already
/// inflated.
pub fn on_estimation_failure(outcome: &std::result::Result<Registration, RegistrationFailure>) -> FusionStep {
    match outcome {
        Ok(reg) => FusionStep::Update(reg.observation, reg.confidence),
        Err(_) => FusionStep::PredictOnly,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// Scan end time.
    pub t: Nanos,
    /// IMU pose in the odometry frame.
    pub pose: Pose,
    /// Relative radar motion as fused (after any inflation).
    pub observation: Option<PoseObservation>,
    /// Variances of the fused observation; NaN when nothing was fused.
    pub var_t: Vector2<f64>,
    pub var_theta: f64,
    pub n_inliers: usize,
    pub n_keypoints: usize,
    pub n_matches: usize,
    pub stationary: bool,
    pub status: FrameStatus,
    /// Raised after `failure_limit` consecutive failed registrations.
    pub health_warning: bool,
    pub deskewed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub frames: usize,
    /// Registration plus fusion time, summed over frames.
    pub estimation: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub records: Vec<TrajectoryRecord>,
    /// World-frame clique-inlier keypoints.
    pub map: Vec<Vector2<f64>>,
    pub warnings: Vec<String>,
    pub stats: RunStats,
}

pub const TRAJECTORY_COLUMNS: &str = "t_ns,x,y,z,qx,qy,qz,qw,var_t1,var_t2,var_theta,n_inliers,stationary";

impl RunOutput {
    pub fn trajectory_csv(&self) -> String {
        let mut s = String::with_capacity(160 * (self.records.len() + 1));
        s.push_str(TRAJECTORY_COLUMNS);
        s.push('\n');
        for r in &self.records {
            let v = r.pose.to_xyz_quat();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                v[0],
                v[1],
                v[2],
                v[3],
                v[4],
                v[5],
                v[6],
                r.var_t.x,
                r.var_t.y,
                r.var_theta,
                r.n_inliers,
                u8::from(r.stationary)
            );
        }
        s
    }

    pub fn map_csv(&self) -> String {
        let mut s = String::from("x,y\n");
        for p in &self.map {
            let _ = writeln!(s, "{},{}", p.x, p.y);
        }
        s
    }

    /// Writes `trajectory.csv` and `map.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("trajectory.csv"), self.trajectory_csv())?;
        std::fs::write(dir.join("map.csv"), self.map_csv())?;
        Ok(())
    }
}

pub fn run(dataset_dir: &Path, config: &PipelineConfig) -> Result<RunOutput> {
    let dataset = Dataset::open(dataset_dir)?;
    run_dataset(&dataset, config)
}

pub fn run_dataset(dataset: &Dataset, config: &PipelineConfig) -> Result<RunOutput> {
    config.validate()?;
    let started = Instant::now();
    let describer = Describer::new(config.descriptor_seed, config.extraction.max_range);
    let t_ir = config.t_ir.unwrap_or(dataset.t_ir);
    let mut runner = Runner::new(config, dataset, t_ir)?;
    std::thread::scope(|scope| -> Result<()> {
        let frames = frontend::frames(scope, &dataset.scans, &config.extraction, &describer, config.two_stage);
        for frame in frames {
            runner.step(frame?)?;
        }
        Ok(())
    })?;
    let mut out = runner.finish();
    out.stats.total = started.elapsed();
    Ok(out)
}

/// Previous scan, kept for matching and as the registration reference.
struct Reference {
    keypoints: Vec<Keypoint>,
    descriptors: Vec<Descriptor>,
    pose: Pose,
    t: Nanos,
}

struct Runner<'a> {
    config: &'a PipelineConfig,
    t_ir: Pose,
    filter: Option<FilterDriver<'a>>,
    reference: Option<Reference>,
    last_end: Option<Nanos>,
    /// Radar-only state: chained pose and the last inter-scan motion.
    chain_pose: Pose,
    last_motion: Option<(Pose, Nanos)>,
    consecutive_failures: usize,
    bridging: bool,
    out: RunOutput,
}

impl<'a> Runner<'a> {
    fn new(config: &'a PipelineConfig, dataset: &'a Dataset, t_ir: Pose) -> Result<Self> {
        let filter = match config.mode {
            Mode::Fused => Some(FilterDriver::new(&dataset.imu, config)?),
            Mode::RadarOnly => None,
        };
        Ok(Self {
            config,
            t_ir,
            filter,
            reference: None,
            last_end: None,
            chain_pose: Pose::identity(),
            last_motion: None,
            consecutive_failures: 0,
            bridging: false,
            out: RunOutput::default(),
        })
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.out.warnings.push(msg);
    }

    fn step(&mut self, frame: FrontFrame) -> Result<()> {
        if self.last_end.is_some_and(|e| frame.start <= e) {
            return Err(Error::format(&frame.path, 24, "scan starts before the previous scan ends"));
        }
        self.last_end = Some(frame.end);

        // Propagate to the scan end and pick the skew model.
        let (buffer, v_radar, bridging) = match self.filter.as_mut() {
            Some(f) => {
                if frame.end < f.time {
                    // Scan predates filter initialisation.
                    return Ok(());
                }
                let bridging = !f.advance_to(frame.end)?;
                let state = &f.eskf.state;
                let r_radar = state.r * self.t_ir.rotation;
                let v = r_radar.inverse() * state.v;
                let mut buffer = f.history.clone();
                buffer.retain_from(frame.start);
                (buffer, Vector2::new(v.x, v.y), bridging)
            }
            None => {
                let (buffer, v) = self.constant_velocity_buffer(&frame);
                (buffer, v, false)
            }
        };
        if bridging && !self.bridging {
            self.warn(format!(
                "no IMU data within {} s of scan end {} ns; bridging on radar alone",
                self.config.imu_gap, frame.end
            ));
        }
        self.bridging = bridging;

        let (keypoints, deskewed) = self.correct(&frame.keypoints, &buffer, &v_radar, bridging);

        let Some(reference) = self.reference.take() else {
            let pose = self.current_pose();
            self.push_record(&frame, pose, None, FrameStatus::Bootstrap, 0, deskewed);
            self.reference = Some(Reference {
                keypoints,
                descriptors: frame.descriptors,
                pose,
                t: frame.end,
            });
            return Ok(());
        };

        let estimation_start = Instant::now();
        let corr = match_descriptors(&reference.descriptors, &frame.descriptors, self.config.match_threshold);
        let n_matches = corr.len();
        let stationary = stationary_gate(n_matches, self.config.thr_for_stop);
        let (step, clique_curr) = if stationary {
            let obs = PoseObservation {
                theta: 0.0,
                t: Vector2::zeros(),
                var_theta: self.config.stationary_var_theta,
                var_t: Vector2::repeat(self.config.stationary_var_t),
                n_inliers: n_matches,
            };
            (FusionStep::Update(obs, Confidence::Nominal), Vec::new())
        } else {
            let (curr, corr) = self.inject_outliers(&frame, &keypoints, corr);
            let outcome = register(&reference.keypoints, &curr, &corr, &self.config.registration);
            let clique_curr: Vec<Keypoint> = match &outcome {
                Ok(reg) => reg.clique.iter().map(|&i| curr[corr.pairs[i].curr]).collect(),
                Err(_) => Vec::new(),
            };
            (on_estimation_failure(&outcome), clique_curr)
        };

        let (pose, status, fused) = self.fuse(&reference, &frame, step, stationary, bridging);
        self.out.stats.estimation += estimation_start.elapsed();

        if status == FrameStatus::PredictOnly {
            self.consecutive_failures += 1;
        } else {
            self.consecutive_failures = 0;
        }
        let radar_world = pose.compose(&self.t_ir);
        self.out.map.extend(clique_curr.iter().map(|kp| {
            let w = radar_world.transform_point(&Vector3::new(kp.xy.x, kp.xy.y, 0.0));
            Vector2::new(w.x, w.y)
        }));
        self.push_record(&frame, pose, fused, status, n_matches, deskewed);
        if let Some(r) = self.out.records.last_mut() {
            r.stationary = stationary;
        }
        // Without an IMU the scan was corrected with the previous motion;
        // redo it with its own estimate so errors at motion changes do not
        // carry into the next pair.
        let keypoints = if self.filter.is_none() && status != FrameStatus::PredictOnly {
            let (buffer, v) = self.constant_velocity_buffer(&frame);
            self.correct(&frame.keypoints, &buffer, &v, false).0
        } else {
            keypoints
        };
        self.reference = Some(Reference {
            keypoints,
            descriptors: frame.descriptors,
            pose,
            t: frame.end,
        });
        Ok(())
    }

    /// Doppler, then motion skew; both act on sensor-frame keypoints.
    fn correct(
        &self,
        raw: &[Keypoint],
        buffer: &TimedPoseBuffer,
        v_radar: &Vector2<f64>,
        bridging: bool,
    ) -> (Vec<Keypoint>, bool) {
        let keypoints = if self.config.beta != 0.0 {
            compensate_doppler(raw, v_radar, self.config.beta)
        } else {
            raw.to_vec()
        };
        if !bridging && buffer.len() >= 2 && should_compensate(predicted_scan_rotation(buffer), &self.config.gate) {
            (compensate_motion(&keypoints, buffer, &self.t_ir).keypoints, true)
        } else {
            (keypoints, false)
        }
    }

    fn current_pose(&self) -> Pose {
        match &self.filter {
            Some(f) => f.eskf.state.pose(),
            None => self.chain_pose,
        }
    }

    /// Applies one fusion step and returns the new pose, the frame status and
    /// the observation actually consumed.
    fn fuse(
        &mut self,
        reference: &Reference,
        frame: &FrontFrame,
        step: FusionStep,
        stationary: bool,
        bridging: bool,
    ) -> (Pose, FrameStatus, Option<PoseObservation>) {
        let (obs, confidence) = match step {
            FusionStep::Update(obs, c) => (obs, c),
            FusionStep::PredictOnly => {
                let pose = match self.filter.as_mut() {
                    Some(f) if bridging => f.coast(frame.end),
                    Some(f) => f.eskf.state.pose(),
                    None => self.coast_chain(reference, frame.end),
                };
                return (pose, FrameStatus::PredictOnly, None);
            }
        };
        // Motion of the radar from the previous scan end to this one.
        let relative = Pose::planar(obs.t.x, obs.t.y, obs.theta).inverse();
        let radar_prev = reference.pose.compose(&self.t_ir);
        let radar_obs = radar_prev.compose(&relative);
        let imu_obs = radar_obs.compose(&self.t_ir.inverse());
        let status = if stationary {
            FrameStatus::Stationary
        } else if confidence == Confidence::Low {
            FrameStatus::LowConfidence
        } else {
            FrameStatus::Fused
        };
        match self.filter.as_mut() {
            Some(f) => {
                let meas = PlanarPoseMeasurement {
                    xy: imu_obs.translation.xy(),
                    yaw: imu_obs.yaw(),
                    var_t: obs.var_t,
                    var_theta: obs.var_theta,
                    frame_yaw: radar_obs.yaw(),
                };
                if bridging {
                    let dt = (frame.end - reference.t) as f64 * 1e-9;
                    let pose = f.overwrite(&meas, &reference.pose, dt, frame.end);
                    return (pose, FrameStatus::Bridged, Some(obs));
                }
                if !f.eskf.update(&meas) {
                    return (f.eskf.state.pose(), FrameStatus::PredictOnly, None);
                }
                let pose = f.eskf.state.pose();
                // Later interpolation starts from the corrected pose.
                let _ = f.history.push(frame.end, pose);
                (pose, status, Some(obs))
            }
            None => {
                let motion = reference.pose.inverse().compose(&imu_obs);
                self.last_motion = Some((motion, frame.end - reference.t));
                self.chain_pose = imu_obs;
                (imu_obs, status, Some(obs))
            }
        }
    }

    /// Radar-only failure path: repeat the last motion, scaled to this gap.
    fn coast_chain(&mut self, reference: &Reference, t: Nanos) -> Pose {
        if let Some((motion, dt)) = self.last_motion {
            let alpha = (t - reference.t) as f64 / dt as f64;
            self.chain_pose = reference.pose.compose(&scale_motion(&motion, alpha));
        }
        self.chain_pose
    }

    /// Radar-only skew model: the previous inter-scan motion continued at
    /// constant rate, expressed with the scan end as origin.
    fn constant_velocity_buffer(&self, frame: &FrontFrame) -> (TimedPoseBuffer, Vector2<f64>) {
        let Some((motion, dt)) = self.last_motion else {
            return (TimedPoseBuffer::new(), Vector2::zeros());
        };
        const SAMPLES: u64 = 8;
        let span = frame.end - frame.start;
        let mut entries = Vec::with_capacity(SAMPLES as usize + 1);
        for k in 0..=SAMPLES {
            let t = frame.start + span * k / SAMPLES;
            let back = (frame.end - t) as f64 / dt as f64;
            entries.push((t, scale_motion(&motion, back).inverse()));
        }
        let buffer = TimedPoseBuffer::from_entries(entries).unwrap_or_default();
        let v_imu = motion.translation / (dt as f64 * 1e-9);
        let v = self.t_ir.rotation.inverse() * v_imu;
        (buffer, Vector2::new(v.x, v.y))
    }

    /// Replaces some matches by random in-range points, at a per-scan rate.
    fn inject_outliers(
        &self,
        frame: &FrontFrame,
        keypoints: &[Keypoint],
        mut corr: CorrespondenceSet,
    ) -> (Vec<Keypoint>, CorrespondenceSet) {
        let cfg = self.config;
        let upper = cfg.outlier_rate_upper();
        if upper == 0.0 {
            return (keypoints.to_vec(), corr);
        }
        let mut rng = crate::simulator::rng_stream(cfg.outlier_seed, frame.index as u64);
        let rate = if upper > cfg.outlier_rate {
            rng.random_range(cfg.outlier_rate..upper)
        } else {
            upper
        };
        let mut curr = keypoints.to_vec();
        let (sigma_rho, sigma_phi) = frame.sigmas;
        let max_range = cfg.extraction.max_range;
        for pair in &mut corr.pairs {
            if rng.random::<f64>() < rate {
                let rho = max_range * rng.random::<f64>().sqrt().max(1e-3);
                let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                if let Ok(kp) = Keypoint::from_polar(rho, phi, frame.end, sigma_rho, sigma_phi) {
                    pair.curr = curr.len();
                    curr.push(kp);
                }
            }
        }
        (curr, corr)
    }

    fn push_record(
        &mut self,
        frame: &FrontFrame,
        pose: Pose,
        obs: Option<PoseObservation>,
        status: FrameStatus,
        n_matches: usize,
        deskewed: bool,
    ) {
        let (var_t, var_theta, n_inliers) = match obs {
            Some(o) => (o.var_t, o.var_theta, o.n_inliers),
            None => (Vector2::repeat(f64::NAN), f64::NAN, 0),
        };
        let health_warning = self.consecutive_failures >= self.config.failure_limit;
        if health_warning && self.consecutive_failures == self.config.failure_limit {
            self.warn(format!(
                "{} consecutive registration failures at scan {}",
                self.consecutive_failures,
                frame.path.display()
            ));
        }
        self.out.records.push(TrajectoryRecord {
            t: frame.end,
            pose,
            observation: obs,
            var_t,
            var_theta,
            n_inliers,
            n_keypoints: frame.keypoints.len(),
            n_matches,
            stationary: status == FrameStatus::Stationary,
            status,
            health_warning,
            deskewed,
        });
        self.out.stats.frames += 1;
    }

    fn finish(self) -> RunOutput {
        self.out
    }
}

/// The fraction `alpha` of a relative motion (extrapolating when > 1).
fn scale_motion(motion: &Pose, alpha: f64) -> Pose {
    interpolate_poses(&Pose::identity(), motion, alpha)
}

/// Owns the filter and feeds it IMU samples in time order.
struct FilterDriver<'a> {
    imu: &'a [ImuSample],
    next: usize,
    last: ImuSample,
    /// Time the filter state refers to.
    time: Nanos,
    eskf: Eskf,
    /// Poses at every propagation step; trimmed per scan by the caller.
    history: TimedPoseBuffer,
    gap: Nanos,
}

impl<'a> FilterDriver<'a> {
    /// Levels the filter on the first samples, which must be at rest.
    fn new(imu: &'a [ImuSample], config: &PipelineConfig) -> Result<Self> {
        if imu.len() < GRAVITY_INIT_SAMPLES {
            return Err(Error::Pipeline(format!(
                "need at least {GRAVITY_INIT_SAMPLES} IMU samples to initialise, got {}",
                imu.len()
            )));
        }
        let accels: Vec<_> = imu[..GRAVITY_INIT_SAMPLES].iter().map(|s| s.accel).collect();
        let (r, g) = initialize_gravity(&accels)?;
        let last = imu[GRAVITY_INIT_SAMPLES - 1];
        let eskf = Eskf::new(NominalState::at_rest(r, g), config.noise.clone());
        let mut history = TimedPoseBuffer::new();
        history.push(last.t, eskf.state.pose())?;
        Ok(Self {
            imu,
            next: GRAVITY_INIT_SAMPLES,
            last,
            time: last.t,
            eskf,
            history,
            gap: (config.imu_gap * 1e9) as Nanos,
        })
    }

    /// Integrates every sample up to `t`, then on to `t` itself. Returns
    /// false, leaving the state short of `t`, when the IMU has been silent
    /// for longer than the gap limit.
    fn advance_to(&mut self, t: Nanos) -> Result<bool> {
        while self.next < self.imu.len() && self.imu[self.next].t <= t {
            let s = self.imu[self.next];
            // After a gap the stale sample says nothing about the silent
            // stretch; the fresh one is the better guess.
            let held = if s.t - self.last.t > self.gap { s } else { self.last };
            self.integrate(&held, s.t)?;
            self.last = s;
            self.next += 1;
        }
        if t - self.last.t > self.gap {
            return Ok(false);
        }
        let held = self.last;
        self.integrate(&held, t)?;
        Ok(true)
    }

    /// Zero-order hold of `sample` from the filter time to `to`, in steps
    /// no longer than the filter accepts.
    fn integrate(&mut self, sample: &ImuSample, to: Nanos) -> Result<()> {
        if to <= self.time {
            return Ok(());
        }
        let max_step = (MAX_DT * 1e9) as Nanos;
        let total = to - self.time;
        let steps = total.div_ceil(max_step);
        for k in 1..=steps {
            let next = self.time + (to - self.time) / (steps - k + 1);
            self.eskf.predict(sample, (next - self.time) as f64 * 1e-9);
            self.time = next;
            self.history.push(next, self.eskf.state.pose())?;
        }
        Ok(())
    }

    /// Radar-only bridging: adopt the observed planar pose and the velocity
    /// implied by it.
    fn overwrite(&mut self, meas: &PlanarPoseMeasurement, prev: &Pose, dt: f64, t: Nanos) -> Pose {
        let s = &mut self.eskf.state;
        let yaw_change = meas.yaw - s.pose().yaw();
        s.r = rot_z(yaw_change) * s.r;
        let p_new = Vector3::new(meas.xy.x, meas.xy.y, s.p.z);
        if dt > 0.0 {
            s.v = (p_new - prev.translation) / dt;
            s.v.z = 0.0;
        }
        s.p = p_new;
        self.time = t;
        let pose = s.pose();
        let _ = self.history.push(t, pose);
        pose
    }

    /// Bridging without an observation: constant velocity.
    fn coast(&mut self, t: Nanos) -> Pose {
        let dt = t.saturating_sub(self.time) as f64 * 1e-9;
        let s = &mut self.eskf.state;
        s.p += s.v * dt;
        self.time = self.time.max(t);
        let pose = s.pose();
        let _ = self.history.push(self.time, pose);
        pose
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_gate_examples() {
        assert!(stationary_gate(700, 600));
        assert!(!stationary_gate(599, 600));
        assert!(!stationary_gate(600, 600));
        assert!(!stationary_gate(0, 600));
    }

    #[test]
    fn failure_policy() {
        let fail: std::result::Result<Registration, RegistrationFailure> =
            Err(RegistrationFailure::TooFewCorrespondences(2));
        assert_eq!(on_estimation_failure(&fail), FusionStep::PredictOnly);
        let obs = PoseObservation {
            theta: 0.1,
            t: Vector2::new(1.0, 0.0),
            var_theta: 1.0,
            var_t: Vector2::new(100.0, 100.0),
            n_inliers: 2,
        };
        let low = Ok(Registration {
            observation: obs,
            confidence: Confidence::Low,
            clique_exact: true,
            clique: vec![0, 1],
        });
        assert_eq!(on_estimation_failure(&low), FusionStep::Update(obs, Confidence::Low));
    }

    #[test]
    fn scaled_motion_is_linear_in_translation_and_yaw() {
        let m = Pose::planar(2.0, 0.0, 0.2);
        let half = scale_motion(&m, 0.5);
        assert!((half.translation.x - 1.0).abs() < 1e-12);
        assert!((half.yaw() - 0.1).abs() < 1e-12);
        let double = scale_motion(&m, 2.0);
        assert!((double.yaw() - 0.4).abs() < 1e-12);
    }
}
