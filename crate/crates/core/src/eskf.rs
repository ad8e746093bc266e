//! Error-state Kalman filter over `[p, v, R, b_g, b_a, g]`.
//!
//! The error state is ordered `δp, δv, δθ, δb_g, δb_a, δg` (3 each). The
//! nominal state is driven by IMU samples; planar radar poses update the
//! error state, which is then injected and reset to zero.

use nalgebra::{Matrix2, Matrix3, SMatrix, SVector, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{exp_so3, log_so3, rot2, rot_z, skew, Nanos, Pose, Rotation3};

pub type ErrorVector = SVector<f64, 18>;
pub type Covariance = SMatrix<f64, 18, 18>;
pub type Vector6 = SVector<f64, 6>;
pub type Matrix6 = SMatrix<f64, 6, 6>;

pub const P: usize = 0;
pub const V: usize = 3;
pub const THETA: usize = 6;
pub const BG: usize = 9;
pub const BA: usize = 12;
pub const G: usize = 15;

/// Longest accepted propagation step, seconds.
pub const MAX_DT: f64 = 0.1;
/// Variance of the fixed z / roll / pitch pseudo-observations.
pub const PLANAR_PSEUDO_VARIANCE: f64 = 1e-6;
pub const GRAVITY_INIT_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub r: Rotation3,
    pub bg: Vector3<f64>,
    pub ba: Vector3<f64>,
    pub g: Vector3<f64>,
}

impl NominalState {
    pub fn at_rest(r: Rotation3, g: Vector3<f64>) -> Self {
        Self {
            p: Vector3::zeros(),
            v: Vector3::zeros(),
            r,
            bg: Vector3::zeros(),
            ba: Vector3::zeros(),
            g,
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.r, self.p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: Nanos,
    /// Body angular rate, rad/s.
    pub omega: Vector3<f64>,
    /// Specific force, m/s².
    pub accel: Vector3<f64>,
}

/// Continuous-time noise densities and the initial error covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Accelerometer white noise, m/s²/√Hz.
    pub sigma_accel: f64,
    /// Gyroscope white noise, rad/s/√Hz.
    pub sigma_gyro: f64,
    /// Accelerometer bias random walk, m/s³/√Hz.
    pub sigma_accel_bias: f64,
    /// Gyroscope bias random walk, rad/s²/√Hz.
    pub sigma_gyro_bias: f64,
    /// Initial standard deviations per block.
    pub init_position: f64,
    pub init_velocity: f64,
    pub init_attitude: f64,
    pub init_gyro_bias: f64,
    pub init_accel_bias: f64,
    pub init_gravity: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_accel: 0.02,
            sigma_gyro: 1e-3,
            sigma_accel_bias: 1e-4,
            sigma_gyro_bias: 1e-5,
            init_position: 1e-3,
            init_velocity: 1e-2,
            init_attitude: 1e-2,
            init_gyro_bias: 1e-3,
            init_accel_bias: 1e-2,
            init_gravity: 1e-2,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sigma_accel,
            self.sigma_gyro,
            self.sigma_accel_bias,
            self.sigma_gyro_bias,
            self.init_position,
            self.init_velocity,
            self.init_attitude,
            self.init_gyro_bias,
            self.init_accel_bias,
            self.init_gravity,
        ];
        if all.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config("noise parameters must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn initial_covariance(&self) -> Covariance {
        let mut p = Covariance::zeros();
        for (start, sigma) in [
            (P, self.init_position),
            (V, self.init_velocity),
            (THETA, self.init_attitude),
            (BG, self.init_gyro_bias),
            (BA, self.init_accel_bias),
            (G, self.init_gravity),
        ] {
            for k in start..start + 3 {
                p[(k, k)] = sigma * sigma;
            }
        }
        p
    }
}

fn symmetrize(p: &Covariance) -> Covariance {
    (p + p.transpose()) * 0.5
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt <= MAX_DT {
        Ok(())
    } else {
        Err(Error::Domain(format!("propagation step {dt} s outside (0, {MAX_DT}]")))
    }
}

/// Nominal kinematics with the attitude held at its start-of-step value.
pub fn predict_nominal(state: &NominalState, sample: &ImuSample, dt: f64) -> NominalState {
    let acc = state.r * (sample.accel - state.ba);
    NominalState {
        p: state.p + state.v * dt + 0.5 * acc * dt * dt + 0.5 * state.g * dt * dt,
        v: state.v + acc * dt + state.g * dt,
        r: state.r * exp_so3(&((sample.omega - state.bg) * dt)),
        ..*state
    }
}

/// Error-state transition `A` linearised at the start-of-step nominal state.
pub fn transition_matrix(state: &NominalState, sample: &ImuSample, dt: f64) -> Covariance {
    let mut a = Covariance::identity();
    let r = *state.r.matrix();
    let i3 = Matrix3::identity();
    a.fixed_view_mut::<3, 3>(P, V).copy_from(&(i3 * dt));
    a.fixed_view_mut::<3, 3>(V, THETA)
        .copy_from(&(-r * skew(&(sample.accel - state.ba)) * dt));
    a.fixed_view_mut::<3, 3>(V, BA).copy_from(&(-r * dt));
    a.fixed_view_mut::<3, 3>(V, G).copy_from(&(i3 * dt));
    a.fixed_view_mut::<3, 3>(THETA, THETA)
        .copy_from(exp_so3(&(-(sample.omega - state.bg) * dt)).matrix());
    a.fixed_view_mut::<3, 3>(THETA, BG).copy_from(&(-i3 * dt));
    a
}

/// Discrete process noise for a step of `dt` seconds.
pub fn process_noise(noise: &NoiseConfig, dt: f64) -> Covariance {
    let mut b = Covariance::zeros();
    for (start, sigma) in [
        (V, noise.sigma_accel),
        (THETA, noise.sigma_gyro),
        (BG, noise.sigma_gyro_bias),
        (BA, noise.sigma_accel_bias),
    ] {
        for k in start..start + 3 {
            b[(k, k)] = sigma * sigma * dt;
        }
    }
    b
}

/// One IMU propagation step. The error mean stays zero between updates, so
/// only the covariance is carried.
pub fn predict(
    state: &NominalState,
    cov: &Covariance,
    sample: &ImuSample,
    dt: f64,
    noise: &NoiseConfig,
) -> Result<(NominalState, Covariance)> {
    check_dt(dt)?;
    let a = transition_matrix(state, sample, dt);
    let next = predict_nominal(state, sample, dt);
    let cov = symmetrize(&(a * cov * a.transpose() + process_noise(noise, dt)));
    Ok((next, cov))
}

/// A planar pose measurement of the IMU in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarPoseMeasurement {
    pub xy: Vector2<f64>,
    pub yaw: f64,
    /// Position variances along the axes of the frame rotated by `frame_yaw`.
    pub var_t: Vector2<f64>,
    pub var_theta: f64,
    pub frame_yaw: f64,
}

/// Embeds a planar measurement as a 6-D `(δp, δθ)` observation: z, roll and
/// pitch are observed as zero with a small fixed variance.
pub fn lift_observation(obs: &PlanarPoseMeasurement, state: &NominalState) -> Result<(Vector6, Matrix6)> {
    let vars = [obs.var_t.x, obs.var_t.y, obs.var_theta];
    if vars.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Domain(format!("observation variances must be positive, got {vars:?}")));
    }
    if !(obs.xy.iter().all(|x| x.is_finite()) && obs.yaw.is_finite() && obs.frame_yaw.is_finite()) {
        return Err(Error::Domain("non-finite pose observation".into()));
    }
    let dp = Vector3::new(obs.xy.x, obs.xy.y, 0.0) - state.p;
    let dtheta = log_so3(&(state.r.inverse() * rot_z(obs.yaw)));
    let mut dz = Vector6::zeros();
    dz.fixed_rows_mut::<3>(0).copy_from(&dp);
    dz.fixed_rows_mut::<3>(3).copy_from(&dtheta);

    let rf = rot2(obs.frame_yaw);
    let cov_xy = rf * Matrix2::from_diagonal(&obs.var_t) * rf.transpose();
    let mut d = Matrix6::zeros();
    d.fixed_view_mut::<2, 2>(0, 0).copy_from(&((cov_xy + cov_xy.transpose()) * 0.5));
    d[(2, 2)] = PLANAR_PSEUDO_VARIANCE;
    d[(3, 3)] = PLANAR_PSEUDO_VARIANCE;
    d[(4, 4)] = PLANAR_PSEUDO_VARIANCE;
    d[(5, 5)] = obs.var_theta;
    Ok((dz, d))
}

fn observed_index(row: usize) -> usize {
    if row < 3 {
        P + row
    } else {
        THETA + row - 3
    }
}

/// Kalman update with the observation selecting `δp` and `δθ`; the
/// covariance uses the Joseph form.
pub fn update(dx_pred: &ErrorVector, cov: &Covariance, dz: &Vector6, d: &Matrix6) -> Result<(ErrorVector, Covariance)> {
    let mut c = SMatrix::<f64, 6, 18>::zeros();
    for row in 0..6 {
        c[(row, observed_index(row))] = 1.0;
    }
    let s = c * cov * c.transpose() + d;
    let s_inv = s
        .cholesky()
        .ok_or_else(|| Error::Degenerate("innovation covariance is not positive definite".into()))?
        .inverse();
    let k = cov * c.transpose() * s_inv;
    let dx = dx_pred + k * (dz - c * dx_pred);
    let ikc = Covariance::identity() - k * c;
    let cov = symmetrize(&(ikc * cov * ikc.transpose() + k * d * k.transpose()));
    Ok((dx, cov))
}

/// Folds the error into the nominal state and moves the covariance to the
/// new attitude tangent space.
pub fn inject_and_reset(state: &NominalState, dx: &ErrorVector, cov: &Covariance) -> (NominalState, Covariance) {
    let seg = |k: usize| Vector3::new(dx[k], dx[k + 1], dx[k + 2]);
    let dtheta = seg(THETA);
    let next = NominalState {
        p: state.p + seg(P),
        v: state.v + seg(V),
        r: state.r * exp_so3(&dtheta),
        bg: state.bg + seg(BG),
        ba: state.ba + seg(BA),
        g: state.g + seg(G),
    };
    if dtheta == Vector3::zeros() {
        return (next, *cov);
    }
    let mut j = Covariance::identity();
    j.fixed_view_mut::<3, 3>(THETA, THETA)
        .copy_from(&(Matrix3::identity() - 0.5 * skew(&dtheta)));
    (next, symmetrize(&(j * cov * j.transpose())))
}

/// Levelled initial attitude (zero yaw) and gravity from stationary
/// accelerometer readings.
pub fn initialize_gravity(accels: &[Vector3<f64>]) -> Result<(Rotation3, Vector3<f64>)> {
    if accels.is_empty() {
        return Err(Error::Domain("gravity initialisation needs accelerometer samples".into()));
    }
    let mean = accels.iter().sum::<Vector3<f64>>() / accels.len() as f64;
    if !(mean.norm() > 1.0) {
        return Err(Error::Degenerate(format!("mean specific force {} too small to level", mean.norm())));
    }
    let roll = mean.y.atan2(mean.z);
    let pitch = (-mean.x).atan2((mean.y * mean.y + mean.z * mean.z).sqrt());
    let r = Rotation3::from_axis_angle(&Vector3::y_axis(), pitch) * Rotation3::from_axis_angle(&Vector3::x_axis(), roll);
    Ok((r, -(r * mean)))
}

/// Stateful wrapper that owns the nominal state and covariance.
#[derive(Debug, Clone)]
pub struct Eskf {
    pub state: NominalState,
    pub cov: Covariance,
    pub noise: NoiseConfig,
    rejected_samples: usize,
    skipped_updates: usize,
}

impl Eskf {
    pub fn new(state: NominalState, noise: NoiseConfig) -> Self {
        Self {
            state,
            cov: noise.initial_covariance(),
            noise,
            rejected_samples: 0,
            skipped_updates: 0,
        }
    }

    /// Propagates by `dt`; out-of-range steps are counted and ignored.
    pub fn predict(&mut self, sample: &ImuSample, dt: f64) -> bool {
        match predict(&self.state, &self.cov, sample, dt, &self.noise) {
            Ok((state, cov)) => {
                self.state = state;
                self.cov = cov;
                true
            }
            Err(_) => {
                self.rejected_samples += 1;
                false
            }
        }
    }

    /// Update, inject and reset; invalid observations or a singular
    /// innovation leave the filter untouched.
    pub fn update(&mut self, obs: &PlanarPoseMeasurement) -> bool {
        let result = lift_observation(obs, &self.state)
            .and_then(|(dz, d)| update(&ErrorVector::zeros(), &self.cov, &dz, &d));
        match result {
            Ok((dx, cov)) => {
                let (state, cov) = inject_and_reset(&self.state, &dx, &cov);
                self.state = state;
                self.cov = cov;
                true
            }
            Err(_) => {
                self.skipped_updates += 1;
                false
            }
        }
    }

    pub fn rejected_samples(&self) -> usize {
        self.rejected_samples
    }

    pub fn skipped_updates(&self) -> usize {
        self.skipped_updates
    }
}
