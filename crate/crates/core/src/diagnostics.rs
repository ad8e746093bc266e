//! Per-frame uncertainty series: how the fused observation variances track
//! the inlier count and the scene geometry.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Nanos;
use crate::pipeline::TrajectoryRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyRow {
    pub t: Nanos,
    pub n_inliers: usize,
    pub var_theta: f64,
    /// Along the radar x axis (forward).
    pub var_t1: f64,
    pub var_t2: f64,
}

impl UncertaintyRow {
    /// Sum of the three variances; the angle term is in rad², so this only
    /// orders frames, it is not a physical quantity.
    pub fn total_variance(&self) -> f64 {
        self.var_t1 + self.var_t2 + self.var_theta
    }

    fn is_finite(&self) -> bool {
        self.total_variance().is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySeries {
    /// One row per record, in record order.
    pub rows: Vec<UncertaintyRow>,
    /// Rank correlation between inlier count and total variance over frames
    /// with an observation; `None` when either side is constant or fewer
    /// than two such frames exist.
    pub correlation: Option<f64>,
}

impl UncertaintySeries {
    pub fn from_rows(rows: Vec<UncertaintyRow>) -> Self {
        let (n, v): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.is_finite())
            .map(|r| (r.n_inliers as f64, r.total_variance()))
            .unzip();
        let correlation = spearman(&n, &v);
        Self { rows, correlation }
    }

    /// Fraction of observed frames whose along-track variance exceeds the
    /// cross-track one.
    pub fn along_track_dominant_fraction(&self) -> Option<f64> {
        let observed: Vec<_> = self.rows.iter().filter(|r| r.is_finite()).collect();
        if observed.is_empty() {
            return None;
        }
        let hits = observed.iter().filter(|r| r.var_t1 > r.var_t2).count();
        Some(hits as f64 / observed.len() as f64)
    }

    /// Median total variance over observed frames.
    pub fn median_total_variance(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.rows.iter().filter(|r| r.is_finite()).map(|r| r.total_variance()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
    }

    /// `t_ns,n_inliers,var_theta,var_t1,var_t2,total_variance`, then a
    /// comment line with the correlation (`undefined` when absent).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_ns,n_inliers,var_theta,var_t1,var_t2,total_variance\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.t,
                r.n_inliers,
                r.var_theta,
                r.var_t1,
                r.var_t2,
                r.total_variance()
            );
        }
        match self.correlation {
            Some(c) => {
                let _ = writeln!(s, "# spearman(n_inliers,total_variance)={c}");
            }
            None => s.push_str("# spearman(n_inliers,total_variance)=undefined\n"),
        }
        s
    }
}

pub fn uncertainty_series(records: &[TrajectoryRecord]) -> UncertaintySeries {
    let rows = records
        .iter()
        .map(|r| UncertaintyRow {
            t: r.t,
            n_inliers: r.n_inliers,
            var_theta: r.var_theta,
            var_t1: r.var_t.x,
            var_t2: r.var_t.y,
        })
        .collect();
    UncertaintySeries::from_rows(rows)
}

/// Reads the uncertainty columns back from a pipeline trajectory CSV
/// (`...,var_t1,var_t2,var_theta,n_inliers,stationary`).
pub fn read_uncertainty_csv(path: &Path) -> Result<Vec<UncertaintyRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut offset = 0u64;
    for (lineno, raw) in text.split_inclusive('\n').enumerate() {
        let here = offset;
        offset += raw.len() as u64;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if lineno == 0 && f[0].parse::<u64>().is_err() {
            continue;
        }
        let bad = |msg: String| Error::format(path, here, msg);
        if f.len() < 13 {
            return Err(bad(format!("expected 13 columns, got {}", f.len())));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad(format!("bad number {:?}", f[k])));
        rows.push(UncertaintyRow {
            t: f[0].parse().map_err(|_| bad(format!("bad timestamp {:?}", f[0])))?,
            var_t1: num(8)?,
            var_t2: num(9)?,
            var_theta: num(10)?,
            n_inliers: f[11].parse().map_err(|_| bad(format!("bad count {:?}", f[11])))?,
        });
    }
    Ok(rows)
}

/// Ranks with ties sharing their average rank.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, v: f64) -> UncertaintyRow {
        UncertaintyRow {
            t: n as u64,
            n_inliers: n,
            var_theta: 0.0,
            var_t1: v,
            var_t2: 0.0,
        }
    }

    #[test]
    fn spearman_matches_hand_computed_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 10.0, 100.0]), Some(1.0));
        // Ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4): r = 4.5 / sqrt(4.5 * 5).
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r - 4.5 / 22.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(spearman(&[1.0], &[1.0]), None);
    }

    #[test]
    fn constant_series_has_no_correlation() {
        let s = UncertaintySeries::from_rows(vec![row(5, 1.0); 4]);
        assert_eq!(s.correlation, None);
        assert!(s.to_csv().ends_with("=undefined\n"));
    }

    #[test]
    fn unobserved_frames_are_kept_but_not_ranked() {
        let mut rows = vec![row(10, 1.0), row(5, 2.0), row(2, 4.0)];
        rows.push(UncertaintyRow {
            var_t1: f64::NAN,
            ..row(0, 0.0)
        });
        let s = UncertaintySeries::from_rows(rows);
        assert_eq!(s.rows.len(), 4);
        assert_eq!(s.correlation, Some(-1.0));
        assert_eq!(s.median_total_variance(), Some(2.0));
        assert_eq!(s.along_track_dominant_fraction(), Some(1.0));
    }

    #[test]
    fn reads_pipeline_trajectory_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trajectory.csv");
        std::fs::write(
            &p,
            format!(
                "{}\n5,0,0,0,0,0,0,1,0.2,0.1,0.01,42,0\n9,1,0,0,0,0,0,1,NaN,NaN,NaN,0,0\n",
                crate::pipeline::TRAJECTORY_COLUMNS
            ),
        )
        .unwrap();
        let rows = read_uncertainty_csv(&p).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].n_inliers, 42);
        assert_eq!(rows[0].var_t1, 0.2);
        assert!(rows[1].var_t1.is_nan());
    }
}
