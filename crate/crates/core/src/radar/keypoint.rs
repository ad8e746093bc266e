use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::geometry::{rot2, Nanos};
use crate::radar::PolarScan;

/// A detected radar return in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    /// Range, meters.
    pub rho: f64,
    /// Bearing, radians.
    pub phi: f64,
    /// Cartesian position `(ρ cos φ, ρ sin φ)`.
    pub xy: Vector2<f64>,
    /// Capture time of the azimuth the return came from.
    pub t: Nanos,
    /// Position covariance, m².
    pub cov: Matrix2<f64>,
}

impl Keypoint {
    pub fn from_polar(rho: f64, phi: f64, t: Nanos, sigma_rho: f64, sigma_phi: f64) -> Result<Self> {
        let cov = keypoint_covariance(rho, phi, sigma_rho, sigma_phi)?;
        Ok(Self {
            rho,
            phi,
            xy: Vector2::new(rho * phi.cos(), rho * phi.sin()),
            t,
            cov,
        })
    }

    /// Builds a keypoint from Cartesian coordinates, keeping `cov` as given.
    pub fn from_xy(xy: Vector2<f64>, t: Nanos, cov: Matrix2<f64>) -> Self {
        Self {
            rho: xy.norm(),
            phi: xy.y.atan2(xy.x),
            xy,
            t,
            cov,
        }
    }
}

/// First-order covariance of a point observed with independent range and
/// bearing noise: `diag(σρ², ρ²σφ²)` in the radial/tangential frame, rotated
/// into the sensor frame by `φ`.
pub fn keypoint_covariance(rho: f64, phi: f64, sigma_rho: f64, sigma_phi: f64) -> Result<Matrix2<f64>> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("keypoint range {rho} must be positive")));
    }
    if !(sigma_rho > 0.0 && sigma_phi > 0.0) {
        return Err(Error::Domain("keypoint sigmas must be positive".into()));
    }
    let r = rot2(phi);
    let local = Matrix2::new(sigma_rho * sigma_rho, 0.0, 0.0, rho * rho * sigma_phi * sigma_phi);
    let c = r * local * r.transpose();
    Ok((c + c.transpose()) * 0.5)
}

/// Half-cell measurement sigmas `(σρ, σφ)` for a scan's grid.
pub fn default_sigmas(scan: &PolarScan) -> (f64, f64) {
    (scan.range_resolution() / 2.0, scan.azimuth_step() / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn covariance_axis_aligned_cases() {
        let (sr, sp, rho) = (0.1, 0.01, 20.0);
        let c0 = keypoint_covariance(rho, 0.0, sr, sp).unwrap();
        assert_relative_eq!(c0, Matrix2::new(0.01, 0.0, 0.0, 0.04), epsilon = 1e-15);
        let c90 = keypoint_covariance(rho, PI / 2.0, sr, sp).unwrap();
        assert_relative_eq!(c90, Matrix2::new(0.04, 0.0, 0.0, 0.01), epsilon = 1e-15);
        assert!(keypoint_covariance(0.0, 0.0, sr, sp).is_err());
        assert!(keypoint_covariance(-1.0, 0.0, sr, sp).is_err());
    }

    #[test]
    fn half_cell_sigmas() {
        let scan = PolarScan::blank(400, 10, 0.0596, 0, 1).unwrap();
        let (sr, sp) = default_sigmas(&scan);
        assert_relative_eq!(sr, 0.0298);
        assert_relative_eq!(sp, 0.00785, epsilon = 1e-5);
        let scan = PolarScan::blank(400, 10, 0.175, 0, 1).unwrap();
        assert_relative_eq!(default_sigmas(&scan).0, 0.0875);
        let doubled = PolarScan::blank(800, 10, 0.175, 0, 1).unwrap();
        assert_relative_eq!(default_sigmas(&doubled).1, default_sigmas(&scan).1 / 2.0);
    }

    proptest! {
        #[test]
        fn covariance_eigenvalues_and_determinant(rho in 0.5f64..200.0, phi in -PI..PI, sr in 0.01f64..0.5, sp in 0.001f64..0.05) {
            let c = keypoint_covariance(rho, phi, sr, sp).unwrap();
            prop_assert_eq!(c, c.transpose());
            // Eigenvalues of a symmetric 2×2 from trace/determinant.
            let tr = c.trace();
            let det = c.determinant();
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            let mut eig = [tr / 2.0 - disc, tr / 2.0 + disc];
            let mut want = [sr * sr, rho * rho * sp * sp];
            eig.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            let scale = want[1];
            prop_assert!((eig[0] - want[0]).abs() <= 1e-12 * scale.max(1.0));
            prop_assert!((eig[1] - want[1]).abs() <= 1e-12 * scale.max(1.0));
            // `ad - b²` carries rounding error on the order of eps·trace².
            prop_assert!((det - want[0] * want[1]).abs() <= 1e-14 * tr * tr);
            prop_assert!(eig[0] > 0.0);
        }
    }
}
