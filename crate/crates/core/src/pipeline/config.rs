//! Pipeline configuration: a flat `key = value` file. Parameter-table names
//! may carry a trailing underscore (`zw_ = 3.0`).

use std::collections::HashSet;
use std::path::Path;

use crate::deskew::{CompensationGate, DEFAULT_DOPPLER_BETA};
use crate::error::{Error, Result};
use crate::eskf::NoiseConfig;
use crate::geometry::Pose;
use crate::matching::{DEFAULT_MATCH_THRESHOLD, DEFAULT_PATTERN_SEED};
use crate::radar::ExtractionParams;
use crate::registration::{RegistrationParams, TimMode, TranslationSource, TruncationRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Radar observations fused into the inertial filter.
    #[default]
    Fused,
    /// Registrations chained directly; the IMU is ignored and de-skew uses
    /// the previous inter-scan motion.
    RadarOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub extraction: ExtractionParams,
    pub registration: RegistrationParams,
    pub gate: CompensationGate,
    pub noise: NoiseConfig,
    /// Matches above this count mark the platform as stationary.
    pub thr_for_stop: usize,
    pub match_threshold: u32,
    pub descriptor_seed: u64,
    /// Doppler range-shift coefficient, s; zero disables the correction.
    pub beta: f64,
    /// Overrides the dataset calibration when set.
    pub t_ir: Option<Pose>,
    /// Variances of the identity observation fused while stationary.
    pub stationary_var_t: f64,
    pub stationary_var_theta: f64,
    pub mode: Mode,
    /// Extract and describe the next scan on a second thread.
    pub two_stage: bool,
    /// Per-scan outlier injection: each match is replaced by a random
    /// in-range point with a probability drawn uniformly from
    /// `[outlier_rate, outlier_rate_max]`.
    pub outlier_rate: f64,
    pub outlier_rate_max: f64,
    pub outlier_seed: u64,
    /// Consecutive failed registrations before the health flag is raised.
    pub failure_limit: usize,
    /// IMU silence (s) after which the filter bridges on radar alone.
    pub imu_gap: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            extraction: ExtractionParams::default(),
            registration: RegistrationParams::default(),
            gate: CompensationGate::default(),
            noise: NoiseConfig::default(),
            thr_for_stop: 600,
            match_threshold: DEFAULT_MATCH_THRESHOLD,
            descriptor_seed: DEFAULT_PATTERN_SEED,
            beta: DEFAULT_DOPPLER_BETA,
            t_ir: None,
            stationary_var_t: 1e-6,
            stationary_var_theta: 1e-8,
            mode: Mode::Fused,
            two_stage: true,
            outlier_rate: 0.0,
            outlier_rate_max: 0.0,
            outlier_seed: 0,
            failure_limit: 10,
            imu_gap: 1.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.extraction.validate()?;
        self.registration.validate()?;
        self.noise.validate()?;
        CompensationGate::new(self.gate.min_for_mc, self.gate.max_for_mc)?;
        if !(self.beta.is_finite()) {
            return Err(Error::Config("beta must be finite".into()));
        }
        if !(self.stationary_var_t > 0.0 && self.stationary_var_theta > 0.0) {
            return Err(Error::Config("stationary variances must be positive".into()));
        }
        if !((0.0..=1.0).contains(&self.outlier_rate) && (0.0..=1.0).contains(&self.outlier_rate_max)) {
            return Err(Error::Config("outlier rates must lie in [0, 1]".into()));
        }
        // A zero maximum means "fixed rate".
        if self.outlier_rate_max != 0.0 && self.outlier_rate_max < self.outlier_rate {
            return Err(Error::Config("outlier_rate_max is below outlier_rate".into()));
        }
        if self.failure_limit == 0 {
            return Err(Error::Config("failure_limit must be at least 1".into()));
        }
        if !(self.imu_gap > 0.0) {
            return Err(Error::Config("imu_gap must be positive".into()));
        }
        Ok(())
    }

    /// Upper end of the per-scan outlier rate range.
    pub fn outlier_rate_upper(&self) -> f64 {
        self.outlier_rate_max.max(self.outlier_rate)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        let mut offset = 0u64;
        for raw in text.split_inclusive('\n') {
            let here = offset;
            offset += raw.len() as u64;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::format(origin, here, msg);
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(format!("expected key = value, got {line:?}")));
            };
            let key = key.trim();
            let key = key.strip_suffix('_').unwrap_or(key);
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key}")));
            }
            cfg.set(key, value).map_err(|m| err(format!("{key}: {m}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse {v:?}"))
        }
        fn flag(v: &str) -> std::result::Result<bool, String> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(format!("expected a boolean, got {v:?}")),
            }
        }
        let e = &mut self.extraction;
        let r = &mut self.registration;
        let n = &mut self.noise;
        match key {
            "zw" => e.zw = num(value)?,
            "wf" => e.wf = num(value)?,
            "max_range" => e.max_range = num(value)?,
            "highpass_factor" => e.highpass_factor = num(value)?,
            "keypoint_sigmas" => {
                let v: Vec<f64> = value.split_whitespace().map(num).collect::<std::result::Result<_, _>>()?;
                let [rho, phi_deg] = v[..] else {
                    return Err("expected sigma_rho sigma_phi_deg".into());
                };
                e.sigmas = Some((rho, phi_deg.to_radians()));
            }
            "min_for_mc" => self.gate.min_for_mc = num(value)?,
            "max_for_mc" => self.gate.max_for_mc = num(value)?,
            "thr_for_stop" => self.thr_for_stop = num(value)?,
            "thr_for_inlier" => r.thr_for_inlier = num(value)?,
            "cbar_radial" => r.cbar_radial = num(value)?,
            "cbar_tangential" => r.cbar_tangential = num(value)?,
            "truncation" => {
                r.truncation = match value {
                    "sigma" => TruncationRule::Sigma,
                    "variance" => TruncationRule::Variance,
                    _ => return Err("expected sigma or variance".into()),
                }
            }
            "tim_mode" => {
                r.tim_mode = match value {
                    "disjoint" => TimMode::Disjoint,
                    "clique_edges" => TimMode::CliqueEdges,
                    _ => return Err("expected disjoint or clique_edges".into()),
                }
            }
            "translation_source" => {
                r.translation_source = match value {
                    "clique" => TranslationSource::CliqueInliers,
                    "all" => TranslationSource::AllCorrespondences,
                    _ => return Err("expected clique or all".into()),
                }
            }
            "edge_cap" => r.edge_cap = num(value)?,
            "clique_budget" => r.clique_budget = num(value)?,
            "low_confidence_inflation" => r.low_confidence_inflation = num(value)?,
            "registration_seed" => r.seed = num(value)?,
            "sigma_accel" => n.sigma_accel = num(value)?,
            "sigma_gyro" => n.sigma_gyro = num(value)?,
            "sigma_accel_bias" => n.sigma_accel_bias = num(value)?,
            "sigma_gyro_bias" => n.sigma_gyro_bias = num(value)?,
            "init_position" => n.init_position = num(value)?,
            "init_velocity" => n.init_velocity = num(value)?,
            "init_attitude" => n.init_attitude = num(value)?,
            "init_gyro_bias" => n.init_gyro_bias = num(value)?,
            "init_accel_bias" => n.init_accel_bias = num(value)?,
            "init_gravity" => n.init_gravity = num(value)?,
            "match_threshold" => self.match_threshold = num(value)?,
            "descriptor_seed" => self.descriptor_seed = num(value)?,
            "beta" => self.beta = num(value)?,
            "t_ir" => {
                let v: Vec<f64> = value.split_whitespace().map(num).collect::<std::result::Result<_, _>>()?;
                let arr: [f64; 7] = v.try_into().map_err(|_| "expected x y z qx qy qz qw".to_string())?;
                self.t_ir = Some(Pose::from_xyz_quat(&arr).map_err(|e| e.to_string())?);
            }
            "stationary_var_t" => self.stationary_var_t = num(value)?,
            "stationary_var_theta" => self.stationary_var_theta = num(value)?,
            "mode" => {
                self.mode = match value {
                    "fused" => Mode::Fused,
                    "radar_only" => Mode::RadarOnly,
                    _ => return Err("expected fused or radar_only".into()),
                }
            }
            "two_stage" => self.two_stage = flag(value)?,
            "outlier_rate" => self.outlier_rate = num(value)?,
            "outlier_rate_max" => self.outlier_rate_max = num(value)?,
            "outlier_seed" => self.outlier_seed = num(value)?,
            "failure_limit" => self.failure_limit = num(value)?,
            "imu_gap" => self.imu_gap = num(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }
}
