//! Non-iterative scan-to-scan registration: length-consistency graph,
//! maximum-clique inlier selection, then robust 1-D voting for the rotation
//! angle and each translation component.

mod clique;
mod graph;
mod rotation;
mod tls;
mod translation;

pub use clique::{max_clique, max_clique_with_budget, MaxClique, DEFAULT_CLIQUE_BUDGET};
pub use graph::{build_graph, CompatibilityGraph};
pub use rotation::{circular_median, estimate_rotation, tim_angle_variance, RotationEstimate, Tim, MIN_TIM_NORM};
pub use tls::{solve_scalar_tls, solve_scalar_tls_with, ScalarTlsProblem, ScalarTlsSolution, TruncationRule};
pub use translation::{estimate_translation, TranslationEstimate};

use nalgebra::Vector2;
use rand::seq::index::sample;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::matching::CorrespondenceSet;
use crate::radar::Keypoint;

/// Which clique pairs become rotation measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimMode {
    /// Clique members sorted by bearing around their centroid and paired
    /// with the member half a turn away: every keypoint is used once, so the
    /// measurements are independent and the reported variance stays
    /// calibrated, and baselines are long.
    #[default]
    Disjoint,
    /// Every clique edge, subsampled to the edge cap. More measurements but
    /// strongly correlated ones, which makes the variance optimistic.
    CliqueEdges,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TranslationSource {
    #[default]
    CliqueInliers,
    AllCorrespondences,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationParams {
    /// Length-consistency threshold (m) for graph edges.
    pub thr_for_inlier: f64,
    /// `c̄²` for the translation components.
    pub cbar_radial: f64,
    /// `c̄²` for the rotation angle.
    pub cbar_tangential: f64,
    pub truncation: TruncationRule,
    pub tim_mode: TimMode,
    pub edge_cap: usize,
    pub clique_budget: u64,
    /// Variance multiplier for estimates from cliques smaller than 3.
    pub low_confidence_inflation: f64,
    pub translation_source: TranslationSource,
    pub seed: u64,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            thr_for_inlier: 0.3,
            cbar_radial: 0.1,
            cbar_tangential: 0.0262,
            truncation: TruncationRule::Sigma,
            tim_mode: TimMode::Disjoint,
            edge_cap: 2000,
            clique_budget: DEFAULT_CLIQUE_BUDGET,
            low_confidence_inflation: 100.0,
            translation_source: TranslationSource::CliqueInliers,
            seed: 0,
        }
    }
}

impl RegistrationParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("thr_for_inlier", self.thr_for_inlier),
            ("cbar_radial", self.cbar_radial),
            ("cbar_tangential", self.cbar_tangential),
            ("low_confidence_inflation", self.low_confidence_inflation),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.edge_cap == 0 {
            return Err(Error::Config("edge_cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Rigid motion `q = R(theta) p + t` from previous-scan to current-scan
/// coordinates, with per-quantity variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseObservation {
    pub theta: f64,
    pub t: Vector2<f64>,
    pub var_theta: f64,
    pub var_t: Vector2<f64>,
    pub n_inliers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Confidence {
    Nominal,
    /// Clique smaller than 3; variances already inflated.
    Low,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub observation: PoseObservation,
    pub confidence: Confidence,
    /// False when the clique search hit its budget.
    pub clique_exact: bool,
    /// Correspondence indices in the maximum clique, ascending.
    pub clique: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistrationFailure {
    #[error("need at least 3 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("no usable rotation measurements")]
    NoUsableTims,
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl From<Error> for RegistrationFailure {
    fn from(e: Error) -> Self {
        RegistrationFailure::Invalid(e.to_string())
    }
}

pub fn register(
    prev: &[Keypoint],
    curr: &[Keypoint],
    corr: &CorrespondenceSet,
    params: &RegistrationParams,
) -> std::result::Result<Registration, RegistrationFailure> {
    params.validate()?;
    let n = corr.len();
    if n < 3 {
        return Err(RegistrationFailure::TooFewCorrespondences(n));
    }
    if let Some(c) = corr.pairs.iter().find(|c| c.prev >= prev.len() || c.curr >= curr.len()) {
        return Err(RegistrationFailure::Invalid(format!(
            "correspondence ({}, {}) out of range",
            c.prev, c.curr
        )));
    }
    let graph = build_graph(prev, curr, corr, params.thr_for_inlier)?;
    let clique = max_clique_with_budget(&graph, params.clique_budget)?;

    let p_of = |i: usize| &prev[corr.pairs[i].prev];
    let q_of = |i: usize| &curr[corr.pairs[i].curr];
    let anchors: Vec<Vector2<f64>> = clique.nodes.iter().map(|&i| p_of(i).xy).collect();
    let tims: Vec<Tim> = tim_pairs(&clique.nodes, &anchors, params)
        .into_iter()
        .map(|(i, j)| Tim {
            p: p_of(j).xy - p_of(i).xy,
            q: q_of(j).xy - q_of(i).xy,
            cov_p: p_of(i).cov + p_of(j).cov,
            cov_q: q_of(i).cov + q_of(j).cov,
        })
        .filter(|t| !t.is_degenerate())
        .collect();
    if tims.is_empty() {
        return Err(RegistrationFailure::NoUsableTims);
    }
    let rotation = estimate_rotation(&tims, params.cbar_tangential, params.truncation)?;

    let members: Vec<usize> = match params.translation_source {
        TranslationSource::CliqueInliers => clique.nodes.clone(),
        TranslationSource::AllCorrespondences => (0..n).collect(),
    };
    let p: Vec<_> = members.iter().map(|&i| p_of(i).xy).collect();
    let q: Vec<_> = members.iter().map(|&i| q_of(i).xy).collect();
    let cp: Vec<_> = members.iter().map(|&i| p_of(i).cov).collect();
    let cq: Vec<_> = members.iter().map(|&i| q_of(i).cov).collect();
    let translation = estimate_translation(&p, &q, &cp, &cq, rotation.theta, params.cbar_radial, params.truncation)?;

    let confidence = if clique.nodes.len() < 3 {
        Confidence::Low
    } else {
        Confidence::Nominal
    };
    let scale = match confidence {
        Confidence::Low => params.low_confidence_inflation,
        Confidence::Nominal => 1.0,
    };
    Ok(Registration {
        observation: PoseObservation {
            theta: rotation.theta,
            t: translation.t,
            var_theta: rotation.variance * scale,
            var_t: translation.variance * scale,
            n_inliers: clique.nodes.len(),
        },
        confidence,
        clique_exact: clique.exact,
        clique: clique.nodes,
    })
}

fn tim_pairs(nodes: &[usize], positions: &[Vector2<f64>], params: &RegistrationParams) -> Vec<(usize, usize)> {
    let k = nodes.len();
    match params.tim_mode {
        TimMode::Disjoint => {
            let centre = positions.iter().sum::<Vector2<f64>>() / k.max(1) as f64;
            let mut order: Vec<usize> = (0..k).collect();
            let bearing = |i: usize| {
                let d = positions[i] - centre;
                d.y.atan2(d.x)
            };
            order.sort_by(|&a, &b| bearing(a).total_cmp(&bearing(b)).then(a.cmp(&b)));
            (0..k / 2).map(|i| (nodes[order[i]], nodes[order[i + k / 2]])).collect()
        }
        TimMode::CliqueEdges => {
            let all: Vec<(usize, usize)> = (0..k)
                .flat_map(|a| (a + 1..k).map(move |b| (nodes[a], nodes[b])))
                .collect();
            if all.len() <= params.edge_cap {
                return all;
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed);
            let mut picked = sample(&mut rng, all.len(), params.edge_cap).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| all[i]).collect()
        }
    }
}
