//! Exact 1-D truncated least squares by sweeping consensus intervals.
//!
//! Each measurement `x_m` with standard deviation `σ_m` is an inlier of a
//! candidate `x` when `|x - x_m| <= w_m`. The real line splits into at most
//! `2M - 1` intervals with a constant inlier set; on each one the cost is a
//! convex quadratic whose minimiser is the clamped weighted mean. The sweep
//! keeps weighted running sums so the whole solve is `O(M log M)`.

use crate::error::{Error, Result};

/// Half-width of a measurement's consensus interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruncationRule {
    /// `w = σ·c̄`: a measurement is an inlier when its normalised residual is
    /// within `c̄`, which is what makes the cost truncation consistent.
    #[default]
    Sigma,
    /// `w = σ²·c̄²`, kept for comparison runs.
    Variance,
}

impl TruncationRule {
    pub fn half_width(self, variance: f64, cbar2: f64) -> f64 {
        match self {
            TruncationRule::Sigma => (variance * cbar2).sqrt(),
            TruncationRule::Variance => variance * cbar2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTlsProblem {
    pub values: Vec<f64>,
    pub variances: Vec<f64>,
    /// Squared truncation bound `c̄²`.
    pub cbar2: f64,
}

impl ScalarTlsProblem {
    pub fn new(values: Vec<f64>, variances: Vec<f64>, cbar2: f64) -> Result<Self> {
        let p = Self {
            values,
            variances,
            cbar2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Domain("TLS problem has no measurements".into()));
        }
        if self.values.len() != self.variances.len() {
            return Err(Error::Domain(format!(
                "{} values but {} variances",
                self.values.len(),
                self.variances.len()
            )));
        }
        if let Some(x) = self.values.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite measurement {x}")));
        }
        if let Some(v) = self.variances.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Domain(format!("variance must be positive and finite, got {v}")));
        }
        if !(self.cbar2.is_finite() && self.cbar2 > 0.0) {
            return Err(Error::Domain(format!("cbar2 must be positive, got {}", self.cbar2)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Truncated cost at `x` under `rule`'s inlier test.
    pub fn cost(&self, x: f64, rule: TruncationRule) -> f64 {
        self.values
            .iter()
            .zip(&self.variances)
            .map(|(&xm, &var)| {
                if (x - xm).abs() <= rule.half_width(var, self.cbar2) {
                    (x - xm) * (x - xm) / var
                } else {
                    self.cbar2
                }
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTlsSolution {
    pub x_hat: f64,
    /// `1 / Σ 1/σ²` over the inliers.
    pub variance: f64,
    /// Ascending indices of the inlier measurements.
    pub inliers: Vec<usize>,
    pub cost: f64,
}

pub fn solve_scalar_tls(problem: &ScalarTlsProblem) -> Result<ScalarTlsSolution> {
    solve_scalar_tls_with(problem, TruncationRule::default())
}

pub fn solve_scalar_tls_with(problem: &ScalarTlsProblem, rule: TruncationRule) -> Result<ScalarTlsSolution> {
    problem.validate()?;
    let m = problem.len();
    let cbar2 = problem.cbar2;
    // Work relative to a central value to keep the running sums well scaled.
    let reference = {
        let (lo, hi) = problem
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        0.5 * (lo + hi)
    };
    let half: Vec<f64> = problem.variances.iter().map(|&v| rule.half_width(v, cbar2)).collect();

    // (position, is_exit, index); entries sort before exits at equal positions.
    let mut events: Vec<(f64, bool, usize)> = Vec::with_capacity(2 * m);
    for i in 0..m {
        let d = problem.values[i] - reference;
        events.push((d - half[i], false, i));
        events.push((d + half[i], true, i));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let (mut w, mut wx, mut wxx) = (0.0f64, 0.0f64, 0.0f64);
    let mut active = 0usize;
    // (cost, x, lo, hi) in shifted coordinates.
    let mut best: Option<(f64, f64, f64, f64)> = None;

    let mut k = 0;
    while k < events.len() {
        let pos = events[k].0;
        // Closed intervals: a measurement entering at `pos` is already an
        // inlier at `pos`, one exiting at `pos` still is. Evaluate the single
        // point `pos` with entries applied but exits pending, then the open
        // stretch to the next event with both applied.
        let mut j = k;
        while j < events.len() && events[j].0 == pos && !events[j].1 {
            let i = events[j].2;
            let (ww, d) = (1.0 / problem.variances[i], problem.values[i] - reference);
            w += ww;
            wx += ww * d;
            wxx += ww * d * d;
            active += 1;
            j += 1;
        }
        if active > 0 {
            consider(&mut best, w, wx, wxx, active, m, cbar2, pos, pos);
        }
        while j < events.len() && events[j].0 == pos {
            let i = events[j].2;
            let (ww, d) = (1.0 / problem.variances[i], problem.values[i] - reference);
            w -= ww;
            wx -= ww * d;
            wxx -= ww * d * d;
            active -= 1;
            j += 1;
        }
        if active == 0 {
            // Reset accumulated rounding whenever the active set empties.
            w = 0.0;
            wx = 0.0;
            wxx = 0.0;
        } else if j < events.len() {
            let next = events[j].0;
            if next > pos {
                consider(&mut best, w, wx, wxx, active, m, cbar2, pos, next);
            }
        }
        k = j;
    }

    let (_, x_shift, lo, hi) = best.expect("every measurement opens a non-empty interval");
    let x_hat = x_shift + reference;
    // Inliers re-derived from the winning stretch rather than the drifting sums.
    let inliers: Vec<usize> = (0..m)
        .filter(|&i| {
            let d = problem.values[i] - reference;
            d - half[i] <= lo && d + half[i] >= hi
        })
        .collect();
    let info: f64 = inliers.iter().map(|&i| 1.0 / problem.variances[i]).sum();
    let x_hat = if lo < hi && x_shift > lo && x_shift < hi {
        // Unclamped optimum: recompute the weighted mean directly.
        inliers
            .iter()
            .map(|&i| problem.values[i] / problem.variances[i])
            .sum::<f64>()
            / info
    } else {
        x_hat
    };
    let cost = problem.cost(x_hat, rule);
    Ok(ScalarTlsSolution {
        x_hat,
        variance: 1.0 / info,
        inliers,
        cost,
    })
}

const TIE_TOLERANCE: f64 = 1e-12;

#[allow(clippy::too_many_arguments)]
fn consider(
    best: &mut Option<(f64, f64, f64, f64)>,
    w: f64,
    wx: f64,
    wxx: f64,
    active: usize,
    m: usize,
    cbar2: f64,
    lo: f64,
    hi: f64,
) {
    let x = (wx / w).clamp(lo, hi);
    let cost = (w * x * x - 2.0 * wx * x + wxx).max(0.0) + (m - active) as f64 * cbar2;
    // Running sums leave rounding noise in the cost, so near-equal costs count
    // as a tie and the earlier (smaller) candidate is kept.
    if best.is_none_or(|(c, ..)| cost < c - TIE_TOLERANCE * (1.0 + c.abs())) {
        *best = Some((cost, x, lo, hi));
    }
}
