//! Putative correspondence sets with known ground truth, bypassing the
//! radar and the descriptor matcher.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::rng_stream;
use crate::geometry::rot2;
use crate::matching::CorrespondenceSet;
use crate::radar::Keypoint;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPairSpec {
    pub count: usize,
    /// Isotropic position noise added to both scans, m.
    pub sigma: f64,
    /// Probability that a pair's current point is replaced by a uniform
    /// random in-range point.
    pub outlier_rate: f64,
    /// Points are drawn uniformly in a disk of this radius, m.
    pub extent: f64,
    /// True motion: `q = R(theta) p + t`.
    pub theta: f64,
    pub t: Vector2<f64>,
    /// Seeds the point layout.
    pub geometry_seed: u64,
    /// Seeds noise and outliers, so one layout can be re-noised.
    pub noise_seed: u64,
}

impl Default for SyntheticPairSpec {
    fn default() -> Self {
        Self {
            count: 200,
            sigma: 0.05,
            outlier_rate: 0.0,
            extent: 50.0,
            theta: 0.0,
            t: Vector2::zeros(),
            geometry_seed: 0,
            noise_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub prev: Vec<Keypoint>,
    pub curr: Vec<Keypoint>,
    /// Pair `i` links `prev[i]` and `curr[i]`.
    pub correspondences: CorrespondenceSet,
    pub is_inlier: Vec<bool>,
}

impl SyntheticPair {
    pub fn inlier_count(&self) -> usize {
        self.is_inlier.iter().filter(|&&b| b).count()
    }
}

fn in_disk(rng: &mut impl Rng, radius: f64) -> Vector2<f64> {
    let r = radius * rng.random::<f64>().sqrt();
    let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    Vector2::new(r * a.cos(), r * a.sin())
}

pub fn synthetic_correspondences(spec: &SyntheticPairSpec) -> SyntheticPair {
    let mut geo = rng_stream(spec.geometry_seed, 0);
    let mut rng = rng_stream(spec.noise_seed, 1);
    let cov = Matrix2::identity() * (spec.sigma * spec.sigma).max(1e-12);
    let r = rot2(spec.theta);
    let truth: Vec<Vector2<f64>> = (0..spec.count).map(|_| in_disk(&mut geo, spec.extent)).collect();
    let noise = |rng: &mut rand_chacha::ChaCha8Rng| {
        Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * spec.sigma
    };
    let mut prev = Vec::with_capacity(spec.count);
    let mut curr = Vec::with_capacity(spec.count);
    let mut is_inlier = Vec::with_capacity(spec.count);
    for p in &truth {
        let p_obs = p + noise(&mut rng);
        let outlier = rng.random::<f64>() < spec.outlier_rate;
        let q_obs = if outlier {
            in_disk(&mut rng, spec.extent)
        } else {
            r * p + spec.t + noise(&mut rng)
        };
        prev.push(Keypoint::from_xy(p_obs, 0, cov));
        curr.push(Keypoint::from_xy(q_obs, 0, cov));
        is_inlier.push(!outlier);
    }
    SyntheticPair {
        prev,
        curr,
        correspondences: CorrespondenceSet::identity(spec.count),
        is_inlier,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inliers_follow_the_transform() {
        let spec = SyntheticPairSpec {
            sigma: 0.0,
            outlier_rate: 0.3,
            theta: 0.4,
            t: Vector2::new(1.0, -2.0),
            ..Default::default()
        };
        let pair = synthetic_correspondences(&spec);
        let r = rot2(0.4);
        for i in 0..pair.prev.len() {
            let err = (r * pair.prev[i].xy + spec.t - pair.curr[i].xy).norm();
            assert_eq!(err < 1e-9, pair.is_inlier[i]);
        }
        let frac = 1.0 - pair.inlier_count() as f64 / 200.0;
        assert!((0.2..0.4).contains(&frac), "{frac}");
    }

    #[test]
    fn geometry_seed_fixes_layout() {
        let a = synthetic_correspondences(&SyntheticPairSpec { noise_seed: 1, ..Default::default() });
        let b = synthetic_correspondences(&SyntheticPairSpec { noise_seed: 2, ..Default::default() });
        let shift = (a.prev[0].xy - b.prev[0].xy).norm();
        assert!(shift > 0.0 && shift < 0.5);
    }
}
