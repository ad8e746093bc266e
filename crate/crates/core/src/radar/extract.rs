//! Row-wise peak extraction: high-pass filter, z-score threshold, local
//! maxima that stand above their neighbourhood median, hard range limit.

use crate::error::{Error, Result};
use crate::radar::{default_sigmas, Keypoint, PolarScan};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionParams {
    /// Z-score threshold over the filtered row.
    pub zw: f64,
    /// Median-filter width in bins; odd, at least 3.
    pub wf: usize,
    /// Returns beyond this range (m) are dropped.
    pub max_range: f64,
    /// The high-pass moving average spans `highpass_factor * wf` bins.
    pub highpass_factor: usize,
    /// Overrides the half-cell `(σρ, σφ)` used for keypoint covariances.
    pub sigmas: Option<(f64, f64)>,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            zw: 3.0,
            wf: 17,
            max_range: 80.0,
            highpass_factor: 4,
            sigmas: None,
        }
    }
}

impl ExtractionParams {
    pub fn validate(&self) -> Result<()> {
        if self.wf < 3 || self.wf % 2 == 0 {
            return Err(Error::Config(format!("wf must be odd and >= 3, got {}", self.wf)));
        }
        if !(self.zw > 0.0) {
            return Err(Error::Config(format!("zw must be positive, got {}", self.zw)));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::Config(format!("max_range must be positive, got {}", self.max_range)));
        }
        if self.highpass_factor == 0 {
            return Err(Error::Config("highpass_factor must be at least 1".into()));
        }
        if let Some((sr, sp)) = self.sigmas {
            if !(sr > 0.0 && sp > 0.0) {
                return Err(Error::Config("keypoint sigmas must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Extracts keypoints from every azimuth row, azimuth-major then by range.
pub fn extract_keypoints(scan: &PolarScan, params: &ExtractionParams) -> Result<Vec<Keypoint>> {
    params.validate()?;
    let (sigma_rho, sigma_phi) = params.sigmas.unwrap_or_else(|| default_sigmas(scan));
    let res = scan.range_resolution();
    let mut out = Vec::new();
    let mut scratch = RowScratch::new(scan.range_bins());
    for a in 0..scan.azimuth_count() {
        let phi = scan.azimuth_angle(a);
        let t = scan.azimuth_timestamps()[a];
        for bin in scratch.peaks(scan.row(a), params) {
            let rho = (bin + 0.5) * res;
            if rho > params.max_range {
                continue;
            }
            out.push(Keypoint::from_polar(rho, phi, t, sigma_rho, sigma_phi)?);
        }
    }
    Ok(out)
}

struct RowScratch {
    filtered: Vec<f64>,
    prefix: Vec<f64>,
    window: Vec<f64>,
}

impl RowScratch {
    fn new(bins: usize) -> Self {
        Self {
            filtered: vec![0.0; bins],
            prefix: vec![0.0; bins + 1],
            window: Vec::new(),
        }
    }

    /// Fractional peak bins of one row.
    fn peaks(&mut self, row: &[u8], params: &ExtractionParams) -> Vec<f64> {
        let n = row.len();
        self.high_pass(row, params.highpass_factor * params.wf / 2);
        let hp = &self.filtered;

        let mean = hp.iter().sum::<f64>() / n as f64;
        let var = hp.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let threshold = mean + params.zw * var.sqrt();

        let half = params.wf / 2;
        let mut peaks = Vec::new();
        for r in 0..n {
            if hp[r] <= threshold || !is_local_max(hp, r) {
                continue;
            }
            let lo = r.saturating_sub(half);
            let hi = (r + half + 1).min(n);
            self.window.clear();
            self.window.extend_from_slice(&hp[lo..hi]);
            let mid = self.window.len() / 2;
            let (_, median, _) = self.window.select_nth_unstable_by(mid, f64::total_cmp);
            if hp[r] <= *median {
                continue;
            }
            peaks.push(basin_centroid(hp, r, threshold));
        }
        peaks
    }

    /// Subtracts a centered moving average and clamps negatives to zero.
    fn high_pass(&mut self, row: &[u8], half_width: usize) {
        let n = row.len();
        for (i, &v) in row.iter().enumerate() {
            self.prefix[i + 1] = self.prefix[i] + v as f64;
        }
        for r in 0..n {
            let lo = r.saturating_sub(half_width);
            let hi = (r + half_width + 1).min(n);
            let avg = (self.prefix[hi] - self.prefix[lo]) / (hi - lo) as f64;
            self.filtered[r] = (row[r] as f64 - avg).max(0.0);
        }
    }
}

/// Rising-or-flat on the left, strictly falling on the right, so a plateau
/// yields a single maximum at its last bin.
fn is_local_max(hp: &[f64], r: usize) -> bool {
    let left_ok = r == 0 || hp[r] >= hp[r - 1];
    let right_ok = r + 1 == hp.len() || hp[r] > hp[r + 1];
    left_ok && right_ok
}

/// Power-weighted centroid over the above-threshold bins that descend
/// monotonically away from the peak at `r`.
fn basin_centroid(hp: &[f64], r: usize, threshold: f64) -> f64 {
    let mut lo = r;
    while lo > 0 && hp[lo - 1] > threshold && hp[lo - 1] <= hp[lo] {
        lo -= 1;
    }
    let mut hi = r;
    while hi + 1 < hp.len() && hp[hi + 1] > threshold && hp[hi + 1] <= hp[hi] {
        hi += 1;
    }
    let (mut w, mut wx) = (0.0, 0.0);
    for (i, &v) in hp.iter().enumerate().take(hi + 1).skip(lo) {
        w += v;
        wx += v * i as f64;
    }
    wx / w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scan_with(a: usize, bins: usize, res: f64) -> PolarScan {
        PolarScan::blank(a, bins, res, 1_000, 625_000).unwrap()
    }

    #[test]
    fn all_zero_scan_has_no_keypoints() {
        let scan = scan_with(16, 200, 0.1);
        assert!(extract_keypoints(&scan, &ExtractionParams::default()).unwrap().is_empty());
    }

    #[test]
    fn single_impulse_gives_one_keypoint() {
        let mut scan = scan_with(16, 200, 0.1);
        scan.row_mut(5)[73] = 255;
        let kps = extract_keypoints(&scan, &ExtractionParams::default()).unwrap();
        assert_eq!(kps.len(), 1);
        let k = kps[0];
        assert_relative_eq!(k.rho, 73.5 * 0.1, epsilon = 1e-12);
        assert_relative_eq!(k.phi, scan.azimuth_angle(5));
        assert_eq!(k.t, scan.azimuth_timestamps()[5]);
        assert_relative_eq!(k.xy.x, k.rho * k.phi.cos(), epsilon = 1e-9);
    }

    #[test]
    fn impulse_beyond_max_range_is_dropped() {
        let mut scan = scan_with(8, 200, 0.1);
        scan.row_mut(2)[190] = 255;
        let params = ExtractionParams {
            max_range: 15.0,
            ..Default::default()
        };
        assert!(extract_keypoints(&scan, &params).unwrap().is_empty());
    }

    #[test]
    fn thick_return_yields_one_centroid() {
        let mut scan = scan_with(4, 300, 0.1);
        let row = scan.row_mut(1);
        for (i, v) in [60u8, 140, 220, 140, 60].iter().enumerate() {
            row[100 + i] = *v;
        }
        let kps = extract_keypoints(&scan, &ExtractionParams::default()).unwrap();
        assert_eq!(kps.len(), 1);
        assert!((kps[0].rho - 10.25).abs() < 0.1);
    }

    #[test]
    fn rejects_even_median_width() {
        let scan = scan_with(4, 50, 0.1);
        let params = ExtractionParams {
            wf: 16,
            ..Default::default()
        };
        assert!(extract_keypoints(&scan, &params).is_err());
    }

    #[test]
    fn count_is_monotone_in_threshold() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut scan = scan_with(32, 400, 0.1);
        for v in scan.intensities_mut() {
            *v = rng.random_range(0..40);
        }
        for _ in 0..100 {
            let a = rng.random_range(0..32);
            let b = rng.random_range(0..400);
            scan.row_mut(a)[b] = rng.random_range(60..=255);
        }
        let mut prev = usize::MAX;
        for zw in [0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 8.0] {
            let params = ExtractionParams {
                zw,
                ..Default::default()
            };
            let kps = extract_keypoints(&scan, &params).unwrap();
            assert!(kps.len() <= prev, "zw={zw}: {} > {prev}", kps.len());
            assert!(kps.iter().all(|k| k.rho <= params.max_range));
            prev = kps.len();
        }
    }
}
