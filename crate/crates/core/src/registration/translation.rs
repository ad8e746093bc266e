use nalgebra::{Matrix2, Vector2};

use super::tls::{solve_scalar_tls_with, ScalarTlsProblem, TruncationRule};
use crate::error::Result;
use crate::geometry::rot2;

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationEstimate {
    pub t: Vector2<f64>,
    pub variance: Vector2<f64>,
    /// Per-component inlier indices into the input lists.
    pub inliers: [Vec<usize>; 2],
}

/// Component-wise robust translation given the rotation estimate: each
/// `t_i = q_i - R p_i` votes on x and y independently with the matching
/// diagonal entry of `C_q + R C_p Rᵀ`.
pub fn estimate_translation(
    p: &[Vector2<f64>],
    q: &[Vector2<f64>],
    cov_p: &[Matrix2<f64>],
    cov_q: &[Matrix2<f64>],
    theta: f64,
    cbar2: f64,
    rule: TruncationRule,
) -> Result<TranslationEstimate> {
    let r = rot2(theta);
    let n = p.len();
    let mut xs = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut vars = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let t = q[i] - r * p[i];
        let c = cov_q[i] + r * cov_p[i] * r.transpose();
        xs.0.push(t.x);
        xs.1.push(t.y);
        vars.0.push(c[(0, 0)]);
        vars.1.push(c[(1, 1)]);
    }
    let sx = solve_scalar_tls_with(&ScalarTlsProblem::new(xs.0, vars.0, cbar2)?, rule)?;
    let sy = solve_scalar_tls_with(&ScalarTlsProblem::new(xs.1, vars.1, cbar2)?, rule)?;
    Ok(TranslationEstimate {
        t: Vector2::new(sx.x_hat, sy.x_hat),
        variance: Vector2::new(sx.variance, sy.variance),
        inliers: [sx.inliers, sy.inliers],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_rigid_transform() {
        let theta = -0.7;
        let t = Vector2::new(3.0, -1.5);
        let p: Vec<_> = (0..10).map(|i| Vector2::new(i as f64, (i * 7 % 5) as f64)).collect();
        let q: Vec<_> = p.iter().map(|x| rot2(theta) * x + t).collect();
        let c = vec![Matrix2::identity() * 0.01; 10];
        let est = estimate_translation(&p, &q, &c, &c, theta, 0.1, TruncationRule::Sigma).unwrap();
        assert_relative_eq!(est.t, t, epsilon = 1e-12);
    }

    #[test]
    fn isotropic_pure_translation_has_equal_variances() {
        let p: Vec<_> = (0..6).map(|i| Vector2::new(i as f64, 1.0)).collect();
        let q: Vec<_> = p.iter().map(|x| x + Vector2::new(1.0, 2.0)).collect();
        let c = vec![Matrix2::identity() * 0.04; 6];
        let est = estimate_translation(&p, &q, &c, &c, 0.0, 0.1, TruncationRule::Sigma).unwrap();
        assert_relative_eq!(est.variance.x, est.variance.y);
        assert_relative_eq!(est.variance.x, 0.08 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(estimate_translation(&[], &[], &[], &[], 0.0, 0.1, TruncationRule::Sigma).is_err());
    }
}
