//! Rotation from translation-invariant measurements (TIMs).

use nalgebra::{Matrix2, Vector2};

use super::tls::{solve_scalar_tls_with, ScalarTlsProblem, TruncationRule};
use crate::error::{Error, Result};
use crate::geometry::{ang, wrap_angle};

/// Difference vectors below this length carry no usable direction.
pub const MIN_TIM_NORM: f64 = 1e-6;

/// Difference of two correspondences, seen in both scans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tim {
    pub p: Vector2<f64>,
    pub q: Vector2<f64>,
    pub cov_p: Matrix2<f64>,
    pub cov_q: Matrix2<f64>,
}

impl Tim {
    pub fn angle(&self) -> Result<f64> {
        Ok(wrap_angle(ang(&self.q)? - ang(&self.p)?))
    }

    pub fn is_degenerate(&self) -> bool {
        self.p.norm() < MIN_TIM_NORM || self.q.norm() < MIN_TIM_NORM
    }

    pub fn angle_variance(&self) -> Result<f64> {
        tim_angle_variance(&self.p, &self.q, &self.cov_p, &self.cov_q)
    }
}

/// Variance component of `cov` perpendicular to `dir`.
fn tangential(dir: &Vector2<f64>, cov: &Matrix2<f64>) -> f64 {
    let n = Vector2::new(-dir.y, dir.x) / dir.norm();
    (n.transpose() * cov * n)[(0, 0)]
}

/// First-order variance of `Ang(q) - Ang(p)`: each direction error is the
/// tangential noise divided by the vector length squared.
pub fn tim_angle_variance(
    p: &Vector2<f64>,
    q: &Vector2<f64>,
    cov_p: &Matrix2<f64>,
    cov_q: &Matrix2<f64>,
) -> Result<f64> {
    let (np, nq) = (p.norm(), q.norm());
    if np < MIN_TIM_NORM || nq < MIN_TIM_NORM {
        return Err(Error::Degenerate(format!("TIM too short: |p|={np}, |q|={nq}")));
    }
    Ok(tangential(p, cov_p) / (np * np) + tangential(q, cov_q) / (nq * nq))
}

/// Circular median: the sample minimising the summed wrapped distance to all
/// others. `O(K log K)`; ties pick the smallest angle.
pub fn circular_median(angles: &[f64]) -> Option<f64> {
    use std::f64::consts::{PI, TAU};
    let k = angles.len();
    if k == 0 {
        return None;
    }
    let mut a: Vec<f64> = angles.iter().map(|&x| wrap_angle(x)).collect();
    a.sort_by(f64::total_cmp);
    // Unrolled circle: ext[j] for j in [i, i + k) covers one lap from a[i].
    let ext: Vec<f64> = a.iter().cloned().chain(a.iter().map(|x| x + TAU)).collect();
    let mut prefix = vec![0.0; 2 * k + 1];
    for j in 0..2 * k {
        prefix[j + 1] = prefix[j] + ext[j];
    }
    let mut split = 0;
    let mut best = (f64::INFINITY, a[0]);
    for i in 0..k {
        split = split.max(i);
        while split < i + k && ext[split] - a[i] <= PI {
            split += 1;
        }
        let near = (prefix[split] - prefix[i]) - (split - i) as f64 * a[i];
        let far_n = (i + k - split) as f64;
        let far = far_n * (TAU + a[i]) - (prefix[i + k] - prefix[split]);
        let total = near + far;
        if total < best.0 - 1e-12 {
            best = (total, a[i]);
        }
    }
    Some(best.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationEstimate {
    /// Wrapped to `(-π, π]`.
    pub theta: f64,
    pub variance: f64,
    /// Indices into the TIM list.
    pub inliers: Vec<usize>,
}

/// Robust rotation from TIM angles. Angles are unwrapped around their
/// circular median so the 1-D solver sees a contiguous cluster.
pub fn estimate_rotation(tims: &[Tim], cbar2: f64, rule: TruncationRule) -> Result<RotationEstimate> {
    let mut values = Vec::with_capacity(tims.len());
    let mut variances = Vec::with_capacity(tims.len());
    let mut source = Vec::with_capacity(tims.len());
    for (k, tim) in tims.iter().enumerate() {
        if tim.is_degenerate() {
            continue;
        }
        let var = tim.angle_variance()?;
        if !(var > 0.0 && var.is_finite()) {
            continue;
        }
        values.push(tim.angle()?);
        variances.push(var);
        source.push(k);
    }
    let centre = circular_median(&values)
        .ok_or_else(|| Error::Degenerate("no usable TIMs for rotation".into()))?;
    for v in &mut values {
        *v = centre + wrap_angle(*v - centre);
    }
    let solution = solve_scalar_tls_with(&ScalarTlsProblem::new(values, variances, cbar2)?, rule)?;
    Ok(RotationEstimate {
        theta: wrap_angle(solution.x_hat),
        variance: solution.variance,
        inliers: solution.inliers.iter().map(|&i| source[i]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rot2;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn iso(s: f64) -> Matrix2<f64> {
        Matrix2::identity() * s
    }

    #[test]
    fn isotropic_variance_example() {
        let p = Vector2::new(3.0, 4.0);
        let q = Vector2::new(0.0, 10.0);
        let var = tim_angle_variance(&p, &q, &iso(0.02), &iso(0.02)).unwrap();
        assert_relative_eq!(var, 0.02 / 25.0 + 0.02 / 100.0, epsilon = 1e-15);
    }

    #[test]
    fn radial_noise_does_not_affect_angle() {
        let p = Vector2::new(5.0, 0.0);
        let radial = Matrix2::new(1.0, 0.0, 0.0, 0.0);
        let var = tim_angle_variance(&p, &p, &radial, &radial).unwrap();
        assert_relative_eq!(var, 0.0);
    }

    #[test]
    fn short_tim_is_degenerate() {
        let z = Vector2::new(1e-8, 0.0);
        assert!(tim_angle_variance(&z, &Vector2::x(), &iso(1.0), &iso(1.0)).is_err());
    }

    #[test]
    fn median_across_the_seam() {
        let m = circular_median(&[PI - 0.1, -PI + 0.05, -PI + 0.1, 0.5]).unwrap();
        assert_relative_eq!(m, -PI + 0.05, epsilon = 1e-12);
    }

    fn brute_median(angles: &[f64]) -> f64 {
        let cost = |c: f64| angles.iter().map(|&a| wrap_angle(a - c).abs()).sum::<f64>();
        angles.iter().map(|&c| (cost(c), c)).fold((f64::INFINITY, 0.0), |b, x| if x.0 < b.0 { x } else { b }).0
    }

    proptest! {
        #[test]
        fn median_matches_brute_force(angles in prop::collection::vec(-PI..PI, 1..40)) {
            let m = circular_median(&angles).unwrap();
            let cost = |c: f64| angles.iter().map(|&a| wrap_angle(a - c).abs()).sum::<f64>();
            prop_assert!((cost(m) - brute_median(&angles)).abs() < 1e-9);
        }
    }

    fn noisy_tims(theta: f64, n: usize, sigma: f64, seed: u64) -> Vec<Tim> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let r = rot2(theta);
        (0..n)
            .map(|_| {
                let p = Vector2::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
                let dp = Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                let dq = Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                Tim {
                    p: p + dp,
                    q: r * p + dq,
                    cov_p: iso(sigma * sigma),
                    cov_q: iso(sigma * sigma),
                }
            })
            .collect()
    }

    #[test]
    fn recovers_rotation_near_the_seam() {
        let theta = PI - 0.01;
        let mut tims = noisy_tims(theta, 60, 0.02, 5);
        // A few gross outliers.
        for t in tims.iter_mut().take(8) {
            t.q = rot2(1.0) * t.q;
        }
        let est = estimate_rotation(&tims, 0.0262, TruncationRule::Sigma).unwrap();
        assert!(wrap_angle(est.theta - theta).abs() < 0.01, "{}", est.theta);
        assert!(est.inliers.iter().all(|&i| i >= 8));
    }

    #[test]
    fn predicted_variance_matches_monte_carlo() {
        let p = Vector2::new(12.0, -5.0);
        let theta = 0.3;
        let q = rot2(theta) * p;
        let (cp, cq) = (Matrix2::new(0.04, 0.01, 0.01, 0.02), Matrix2::new(0.03, -0.005, -0.005, 0.05));
        let predicted = tim_angle_variance(&p, &q, &cp, &cq).unwrap();
        let lp = cp.cholesky().unwrap().l();
        let lq = cq.cholesky().unwrap().l();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 40_000;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let zp = Vector2::new(rng.sample::<f64, _>(rand_distr::StandardNormal), rng.sample::<f64, _>(rand_distr::StandardNormal));
            let zq = Vector2::new(rng.sample::<f64, _>(rand_distr::StandardNormal), rng.sample::<f64, _>(rand_distr::StandardNormal));
            let tim = Tim { p: p + lp * zp, q: q + lq * zq, cov_p: cp, cov_q: cq };
            let e = wrap_angle(tim.angle().unwrap() - theta);
            sum2 += e * e;
        }
        let empirical = sum2 / n as f64;
        assert!((empirical / predicted - 1.0).abs() < 0.2, "empirical {empirical} predicted {predicted}");
    }

    #[test]
    fn all_degenerate_is_an_error() {
        let z = Tim { p: Vector2::zeros(), q: Vector2::zeros(), cov_p: iso(1.0), cov_q: iso(1.0) };
        assert!(estimate_rotation(&[z, z], 0.0262, TruncationRule::Sigma).is_err());
    }
}
