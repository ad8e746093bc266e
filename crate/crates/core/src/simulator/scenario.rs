//! Scenario description and its plain-text format.
//!
//! ```text
//! # comment
//! seed = 7
//! trajectory = loop          # stationary | twist | loop
//! loop_size = 170 90
//! point 12.0 -3.5 180        # x y intensity
//! wall 0 10 50 10 120        # x1 y1 x2 y2 intensity
//! row 0 -10 50 -10 4 200     # points every 4 m along a segment
//! scatter 300 -40 -40 40 40  # count xmin ymin xmax ymax [imin imax]
//! ```
//!
//! Angles in the file are degrees; everything else is SI.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::Rng;

use super::rng_stream;
use super::trajectory::{corner_tangent, max_transition, PlanarStart, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Landmark {
    Point { xy: Vector2<f64>, intensity: f64 },
    Wall { a: Vector2<f64>, b: Vector2<f64>, intensity: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadarSpec {
    pub azimuths: usize,
    pub range_bins: usize,
    /// Meters per range bin.
    pub range_resolution: f64,
    /// Revolutions per second.
    pub rate_hz: f64,
    /// Mean background intensity.
    pub noise_floor: f64,
    /// Standard deviation of the per-cell background speckle.
    pub noise_std: f64,
    /// Gaussian return width, in range bins.
    pub bump_width: f64,
    /// Range jitter of each detection, m.
    pub sigma_rho: f64,
    /// Bearing jitter of each point detection, rad.
    pub sigma_phi: f64,
    /// Range shift per m/s of radial velocity; zero disables Doppler.
    pub doppler_beta: f64,
}

impl Default for RadarSpec {
    fn default() -> Self {
        Self {
            azimuths: 400,
            range_bins: 1000,
            range_resolution: 0.1,
            rate_hz: 4.0,
            noise_floor: 15.0,
            noise_std: 0.0,
            bump_width: 1.0,
            sigma_rho: 0.0,
            sigma_phi: 0.0,
            doppler_beta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImuSpec {
    pub rate_hz: f64,
    /// White-noise densities, (m/s²)/√Hz and (rad/s)/√Hz.
    pub accel_noise: f64,
    pub gyro_noise: f64,
    /// Bias random-walk densities.
    pub accel_bias_walk: f64,
    pub gyro_bias_walk: f64,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
}

impl Default for ImuSpec {
    fn default() -> Self {
        Self {
            rate_hz: 100.0,
            accel_noise: 0.0,
            gyro_noise: 0.0,
            accel_bias_walk: 0.0,
            gyro_bias_walk: 0.0,
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    /// Length of the IMU and ground-truth streams, s.
    pub duration: f64,
    /// Time of the first radar revolution, s.
    pub scan_start: f64,
    pub trajectory: Trajectory,
    pub radar: RadarSpec,
    pub imu: ImuSpec,
    /// Radar pose in the IMU frame.
    pub extrinsic: Pose,
    /// Gravity magnitude, m/s².
    pub gravity: f64,
    pub landmarks: Vec<Landmark>,
    /// Probability that a synthetic correspondence is replaced by an outlier.
    pub outlier_rate: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 0,
            duration: 10.0,
            scan_start: 1.0,
            trajectory: Trajectory::Stationary { start: PlanarStart::default() },
            radar: RadarSpec::default(),
            imu: ImuSpec::default(),
            extrinsic: Pose::identity(),
            gravity: 9.81,
            landmarks: Vec::new(),
            outlier_rate: 0.0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let r = &self.radar;
        if r.azimuths < 2 || r.range_bins < 2 {
            return bad("radar needs at least two azimuths and two range bins".into());
        }
        for (name, v) in [
            ("radar_resolution", r.range_resolution),
            ("radar_rate", r.rate_hz),
            ("bump_width", r.bump_width),
            ("imu_rate", self.imu.rate_hz),
            ("duration", self.duration),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("noise_floor", r.noise_floor),
            ("noise_std", r.noise_std),
            ("sigma_rho", r.sigma_rho),
            ("sigma_phi", r.sigma_phi),
            ("accel_noise", self.imu.accel_noise),
            ("gyro_noise", self.imu.gyro_noise),
            ("accel_bias_walk", self.imu.accel_bias_walk),
            ("gyro_bias_walk", self.imu.gyro_bias_walk),
            ("scan_start", self.scan_start),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return bad(format!("outlier_rate must lie in [0, 1], got {}", self.outlier_rate));
        }
        // Scan and IMU periods must be whole nanoseconds apart for exact,
        // reproducible timestamps.
        if 1e9 / (r.rate_hz * r.azimuths as f64) < 1.0 {
            return bad("azimuth period below one nanosecond".into());
        }
        if let Trajectory::Loop {
            width,
            height,
            radius,
            transition,
            ramp,
            ..
        } = self.trajectory
        {
            if !(radius > 0.0 && ramp > 0.0) {
                return bad("loop needs a positive radius and ramp".into());
            }
            if !(0.0..=max_transition(radius)).contains(&transition) {
                return bad(format!("loop transition must lie in [0, {:.3}] m", max_transition(radius)));
            }
            let tangent = corner_tangent(radius, transition);
            if width < 2.0 * tangent || height < 2.0 * tangent {
                return bad(format!("loop sides must be at least {:.3} m", 2.0 * tangent));
            }
        }
        Ok(())
    }

    /// Nanoseconds between azimuths.
    pub fn azimuth_period(&self) -> u64 {
        (1e9 / (self.radar.rate_hz * self.radar.azimuths as f64)).round() as u64
    }

    pub fn imu_period(&self) -> u64 {
        (1e9 / self.imu.rate_hz).round() as u64
    }

    pub fn scan_period(&self) -> u64 {
        self.azimuth_period() * self.radar.azimuths as u64
    }

    /// Number of complete revolutions between `scan_start` and `duration`.
    pub fn scan_count(&self) -> usize {
        let start = (self.scan_start * 1e9).round() as u64;
        let end = (self.duration * 1e9).round() as u64;
        if end <= start {
            0
        } else {
            ((end - start) / self.scan_period()) as usize
        }
    }

    pub fn max_range(&self) -> f64 {
        self.radar.range_bins as f64 * self.radar.range_resolution
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Parses the text format; `origin` only labels errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut parser = Parser {
            scenario: Scenario::default(),
            origin,
            seen: HashSet::new(),
            traj: TrajectoryKeys::default(),
            generators: Vec::new(),
        };
        let mut offset = 0u64;
        for raw in text.split_inclusive('\n') {
            let line = raw.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                parser.line(line, offset)?;
            }
            offset += raw.len() as u64;
        }
        parser.finish()
    }
}

#[derive(Debug, Default)]
struct TrajectoryKeys {
    kind: Option<String>,
    start: PlanarStart,
    speed: f64,
    yaw_rate: f64,
    loop_size: (f64, f64),
    loop_radius: f64,
    loop_transition: f64,
    rest: f64,
    ramp: f64,
}

enum Generator {
    Scatter { count: usize, min: Vector2<f64>, max: Vector2<f64>, intensity: (f64, f64) },
}

struct Parser<'a> {
    scenario: Scenario,
    origin: &'a Path,
    seen: HashSet<String>,
    traj: TrajectoryKeys,
    generators: Vec<Generator>,
}

fn numbers(origin: &Path, line: u64, fields: &[&str], min: usize, max: usize) -> Result<Vec<f64>> {
    if fields.len() < min || fields.len() > max {
        let want = if min == max { format!("{min}") } else { format!("{min}-{max}") };
        return Err(Error::format(origin, line, format!("expected {want} numbers, got {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::format(origin, line, format!("not a number: {f}")))
        })
        .collect()
}

impl Parser<'_> {
    fn err(&self, line: u64, msg: impl Into<String>) -> Error {
        Error::format(self.origin, line, msg)
    }

    fn numbers(&self, line: u64, fields: &[&str], min: usize, max: usize) -> Result<Vec<f64>> {
        numbers(self.origin, line, fields, min, max)
    }

    fn line(&mut self, line: &str, no: u64) -> Result<()> {
        if let Some((key, value)) = line.split_once('=') {
            let key = key.trim().to_string();
            if !self.seen.insert(key.clone()) {
                return Err(self.err(no, format!("duplicate key {key}")));
            }
            let fields: Vec<&str> = value.split_whitespace().collect();
            return self.key(&key, &fields, no);
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (kind, rest) = fields.split_first().expect("non-empty line");
        match *kind {
            "point" => {
                let v = self.numbers(no, rest, 3, 3)?;
                self.scenario.landmarks.push(Landmark::Point {
                    xy: Vector2::new(v[0], v[1]),
                    intensity: v[2],
                });
            }
            "wall" => {
                let v = self.numbers(no, rest, 5, 5)?;
                let (a, b) = (Vector2::new(v[0], v[1]), Vector2::new(v[2], v[3]));
                if (a - b).norm() == 0.0 {
                    return Err(self.err(no, "wall endpoints coincide"));
                }
                self.scenario.landmarks.push(Landmark::Wall { a, b, intensity: v[4] });
            }
            "row" => {
                let v = self.numbers(no, rest, 6, 6)?;
                let (a, b, spacing) = (Vector2::new(v[0], v[1]), Vector2::new(v[2], v[3]), v[4]);
                if !(spacing > 0.0) {
                    return Err(self.err(no, "row spacing must be positive"));
                }
                let n = ((b - a).norm() / spacing).floor() as usize;
                let dir = (b - a).try_normalize(0.0).unwrap_or_else(Vector2::zeros);
                for k in 0..=n {
                    self.scenario.landmarks.push(Landmark::Point {
                        xy: a + dir * (k as f64 * spacing),
                        intensity: v[5],
                    });
                }
            }
            "scatter" => {
                let v = self.numbers(no, rest, 5, 7)?;
                if v[0] < 0.0 || v[0].fract() != 0.0 {
                    return Err(self.err(no, "scatter count must be a non-negative integer"));
                }
                let (min, max) = (Vector2::new(v[1], v[2]), Vector2::new(v[3], v[4]));
                if !(max.x > min.x && max.y > min.y) {
                    return Err(self.err(no, "scatter box must have positive area"));
                }
                let intensity = if v.len() == 7 { (v[5], v[6]) } else { (60.0, 200.0) };
                if !(intensity.1 >= intensity.0) {
                    return Err(self.err(no, "scatter intensity range is inverted"));
                }
                self.generators.push(Generator::Scatter {
                    count: v[0] as usize,
                    min,
                    max,
                    intensity,
                });
            }
            other => return Err(self.err(no, format!("unknown landmark kind {other}"))),
        }
        Ok(())
    }

    fn key(&mut self, key: &str, f: &[&str], no: u64) -> Result<()> {
        let origin = self.origin;
        let err = |msg: String| Error::format(origin, no, msg);
        let one = || numbers(origin, no, f, 1, 1).map(|v| v[0]);
        let count = || {
            let v = one()?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(err(format!("{key} must be a non-negative integer")));
            }
            Ok(v as usize)
        };
        let three = || numbers(origin, no, f, 3, 3).map(|v| Vector3::new(v[0], v[1], v[2]));
        let s = &mut self.scenario;
        let t = &mut self.traj;
        match key {
            "seed" => {
                let [v] = f else {
                    return Err(err("seed takes one integer".into()));
                };
                s.seed = v.parse().map_err(|_| err(format!("bad seed {v}")))?;
            }
            "duration" => s.duration = one()?,
            "scan_start" => s.scan_start = one()?,
            "gravity" => s.gravity = one()?,
            "outlier_rate" => s.outlier_rate = one()?,
            "trajectory" => {
                let [v] = f else {
                    return Err(err("trajectory takes one word".into()));
                };
                t.kind = Some(v.to_string());
            }
            "start" => {
                let v = three()?;
                t.start = PlanarStart { x: v.x, y: v.y, yaw: v.z.to_radians() };
            }
            "speed" => t.speed = one()?,
            "yaw_rate" => t.yaw_rate = one()?.to_radians(),
            "loop_size" => {
                let v = numbers(origin, no, f, 2, 2)?;
                t.loop_size = (v[0], v[1]);
            }
            "loop_radius" => t.loop_radius = one()?,
            "loop_transition" => t.loop_transition = one()?,
            "rest" => t.rest = one()?,
            "ramp" => t.ramp = one()?,
            "radar_azimuths" => s.radar.azimuths = count()?,
            "radar_bins" => s.radar.range_bins = count()?,
            "radar_resolution" => s.radar.range_resolution = one()?,
            "radar_rate" => s.radar.rate_hz = one()?,
            "noise_floor" => s.radar.noise_floor = one()?,
            "noise_std" => s.radar.noise_std = one()?,
            "bump_width" => s.radar.bump_width = one()?,
            "sigma_rho" => s.radar.sigma_rho = one()?,
            "sigma_phi" => s.radar.sigma_phi = one()?.to_radians(),
            "doppler_beta" => s.radar.doppler_beta = one()?,
            "imu_rate" => s.imu.rate_hz = one()?,
            "accel_noise" => s.imu.accel_noise = one()?,
            "gyro_noise" => s.imu.gyro_noise = one()?,
            "accel_bias_walk" => s.imu.accel_bias_walk = one()?,
            "gyro_bias_walk" => s.imu.gyro_bias_walk = one()?,
            "accel_bias" => s.imu.accel_bias = three()?,
            "gyro_bias" => s.imu.gyro_bias = three()?,
            "extrinsic" => {
                let v = three()?;
                s.extrinsic = Pose::planar(v.x, v.y, v.z.to_radians());
            }
            other => return Err(err(format!("unknown key {other}"))),
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Scenario> {
        let t = &self.traj;
        self.scenario.trajectory = match t.kind.as_deref().unwrap_or("stationary") {
            "stationary" => Trajectory::Stationary { start: t.start },
            "twist" => Trajectory::Twist {
                start: t.start,
                speed: t.speed,
                yaw_rate: t.yaw_rate,
            },
            "loop" => Trajectory::Loop {
                start: t.start,
                width: t.loop_size.0,
                height: t.loop_size.1,
                radius: t.loop_radius,
                transition: t.loop_transition,
                speed: t.speed,
                rest: t.rest,
                ramp: t.ramp,
            },
            other => return Err(Error::Config(format!("unknown trajectory kind {other}"))),
        };
        for (k, generator) in self.generators.iter().enumerate() {
            let Generator::Scatter { count, min, max, intensity } = generator;
            let mut rng = rng_stream(self.scenario.seed, super::STREAM_SCATTER + k as u64);
            for _ in 0..*count {
                let xy = Vector2::new(rng.random_range(min.x..max.x), rng.random_range(min.y..max.y));
                let i = if intensity.1 > intensity.0 {
                    rng.random_range(intensity.0..intensity.1)
                } else {
                    intensity.0
                };
                self.scenario.landmarks.push(Landmark::Point { xy, intensity: i });
            }
        }
        self.scenario.validate()?;
        Ok(self.scenario)
    }
}
