//! Binary patch descriptors and brute-force mutual-nearest-neighbour
//! matching between consecutive scans.
//!
//! The descriptor is BRIEF-like: 256 intensity comparisons on a fixed,
//! seeded sampling pattern inside a 16 m × 16 m patch, rotated to the patch's
//! intensity-centroid direction. Intensities come from a Cartesian rendering
//! of the polar scan so that patch geometry is metric.

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::radar::{Keypoint, PolarScan};

pub const DESCRIPTOR_BITS: usize = 256;
pub const DEFAULT_PATTERN_SEED: u64 = 0x5EED_0B1E;
pub const DEFAULT_MATCH_THRESHOLD: u32 = 64;

/// Side length of the descriptor patch, meters.
pub const PATCH_SIZE: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    pub fn bit(&self, k: usize) -> bool {
        self.0[k / 64] >> (k % 64) & 1 == 1
    }

    fn set(&mut self, k: usize) {
        self.0[k / 64] |= 1 << (k % 64);
    }
}

/// Index pair into the previous and current keypoint lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Correspondence {
    pub prev: usize,
    pub curr: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<Correspondence>) -> Self {
        Self { pairs }
    }

    /// `i ↔ i` for the first `n` keypoints of both lists.
    pub fn identity(n: usize) -> Self {
        Self::new((0..n).map(|i| Correspondence { prev: i, curr: i }).collect())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Swaps the roles of the previous and current scans.
    pub fn inverted(&self) -> Self {
        let mut pairs: Vec<_> = self
            .pairs
            .iter()
            .map(|c| Correspondence {
                prev: c.curr,
                curr: c.prev,
            })
            .collect();
        pairs.sort_by_key(|c| c.prev);
        Self { pairs }
    }
}

/// Fixed comparison pattern in keypoint-local metric coordinates.
#[derive(Debug, Clone)]
pub struct DescriptorPattern {
    pairs: Vec<(Vector2<f64>, Vector2<f64>)>,
}

impl DescriptorPattern {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let radius = PATCH_SIZE / 2.0;
        let normal = Normal::new(0.0, PATCH_SIZE / 5.0).expect("positive sigma");
        let draw = |rng: &mut ChaCha8Rng| loop {
            let p = Vector2::new(normal.sample(rng), normal.sample(rng));
            if p.norm() <= radius {
                return p;
            }
        };
        let pairs = (0..DESCRIPTOR_BITS)
            .map(|_| loop {
                let a = draw(&mut rng);
                let b = draw(&mut rng);
                // Near-coincident points compare a pixel with itself.
                if (a - b).norm() > 0.5 {
                    return (a, b);
                }
            })
            .collect();
        Self { pairs }
    }
}

/// Cartesian raster of a polar scan used as the descriptor sampling surface.
#[derive(Debug, Clone)]
pub struct ScanImage {
    cell: f64,
    half_extent: f64,
    side: usize,
    data: Vec<f32>,
}

impl ScanImage {
    /// Rasterizes `scan` on a square grid of `cell`-meter pixels reaching
    /// `extent` meters from the sensor. Each pixel takes the strongest return
    /// in its range span on the nearest azimuth, then a 3×3 box blur.
    pub fn from_scan(scan: &PolarScan, cell: f64, extent: f64) -> Self {
        let side = (2.0 * extent / cell).ceil() as usize + 1;
        let half_extent = (side - 1) as f64 * cell / 2.0;
        let res = scan.range_resolution();
        let bins = scan.range_bins();
        let az_count = scan.azimuth_count();
        let az_step = scan.azimuth_step();
        let half_span = (0.5 * cell / res).ceil() as isize;

        let mut raw = vec![0f32; side * side];
        for iy in 0..side {
            let y = iy as f64 * cell - half_extent;
            for ix in 0..side {
                let x = ix as f64 * cell - half_extent;
                let r = x.hypot(y);
                let center_bin = (r / res - 0.5).round() as isize;
                if center_bin - half_span >= bins as isize {
                    continue;
                }
                let az = (y.atan2(x).rem_euclid(2.0 * std::f64::consts::PI) / az_step).round() as usize
                    % az_count;
                let lo = (center_bin - half_span).max(0);
                let hi = (center_bin + half_span).min(bins as isize - 1);
                if lo > hi {
                    continue;
                }
                let row = &scan.row(az)[lo as usize..=hi as usize];
                raw[iy * side + ix] = row.iter().copied().max().unwrap_or(0) as f32;
            }
        }

        let mut data = vec![0f32; side * side];
        for iy in 0..side {
            for ix in 0..side {
                let mut acc = 0f32;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (jx, jy) = (ix as isize + dx, iy as isize + dy);
                        if jx >= 0 && jy >= 0 && (jx as usize) < side && (jy as usize) < side {
                            acc += raw[jy as usize * side + jx as usize];
                        }
                    }
                }
                data[iy * side + ix] = acc / 9.0;
            }
        }
        Self {
            cell,
            half_extent,
            side,
            data,
        }
    }

    fn pixel(&self, ix: isize, iy: isize) -> f64 {
        if ix < 0 || iy < 0 || ix as usize >= self.side || iy as usize >= self.side {
            0.0
        } else {
            self.data[iy as usize * self.side + ix as usize] as f64
        }
    }

    /// Bilinear sample at a sensor-frame point; zero outside the raster.
    pub fn sample(&self, p: &Vector2<f64>) -> f64 {
        let fx = (p.x + self.half_extent) / self.cell;
        let fy = (p.y + self.half_extent) / self.cell;
        let (x0, y0) = (fx.floor(), fy.floor());
        let (tx, ty) = (fx - x0, fy - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let a = lerp(self.pixel(x0, y0), self.pixel(x0 + 1, y0), tx);
        let b = lerp(self.pixel(x0, y0 + 1), self.pixel(x0 + 1, y0 + 1), tx);
        lerp(a, b, ty)
    }
}

/// Computes descriptors for keypoints of one scan.
#[derive(Debug, Clone)]
pub struct Describer {
    pattern: DescriptorPattern,
    /// Raster pixel size, meters.
    pub cell: f64,
    /// Keypoints beyond this range are never described, so the raster
    /// stops at `max_range + PATCH_SIZE`.
    pub max_range: f64,
}

impl Describer {
    pub fn new(seed: u64, max_range: f64) -> Self {
        Self {
            pattern: DescriptorPattern::new(seed),
            cell: 0.5,
            max_range,
        }
    }

    pub fn image(&self, scan: &PolarScan) -> ScanImage {
        let scan_extent = scan.range_bins() as f64 * scan.range_resolution();
        ScanImage::from_scan(scan, self.cell, scan_extent.min(self.max_range) + PATCH_SIZE)
    }

    /// Descriptor of a single keypoint; rasterizes the whole scan, so prefer
    /// [`Describer::describe_all`] for batches.
    pub fn describe(&self, scan: &PolarScan, kp: &Keypoint) -> Descriptor {
        self.describe_in(&self.image(scan), kp)
    }

    pub fn describe_all(&self, scan: &PolarScan, kps: &[Keypoint]) -> Vec<Descriptor> {
        let image = self.image(scan);
        kps.iter().map(|kp| self.describe_in(&image, kp)).collect()
    }

    pub fn describe_in(&self, image: &ScanImage, kp: &Keypoint) -> Descriptor {
        let angle = self.orientation(image, kp);
        let (s, c) = angle.sin_cos();
        let place = |p: &Vector2<f64>| kp.xy + Vector2::new(c * p.x - s * p.y, s * p.x + c * p.y);
        let mut d = Descriptor([0; 4]);
        for (k, (a, b)) in self.pattern.pairs.iter().enumerate() {
            if image.sample(&place(a)) < image.sample(&place(b)) {
                d.set(k);
            }
        }
        d
    }

    /// Direction from the keypoint to the patch intensity centroid; zero
    /// when the first moments vanish.
    fn orientation(&self, image: &ScanImage, kp: &Keypoint) -> f64 {
        let radius = PATCH_SIZE / 2.0;
        let steps = (radius / self.cell).round() as isize;
        let (mut m10, mut m01) = (0.0, 0.0);
        for j in -steps..=steps {
            for i in -steps..=steps {
                let u = Vector2::new(i as f64 * self.cell, j as f64 * self.cell);
                if u.norm() > radius {
                    continue;
                }
                let v = image.sample(&(kp.xy + u));
                m10 += u.x * v;
                m01 += u.y * v;
            }
        }
        if m10 == 0.0 && m01 == 0.0 {
            0.0
        } else {
            m01.atan2(m10)
        }
    }
}

/// Mutual nearest neighbours under Hamming distance, accepted at or below
/// `threshold`. Ties resolve to the lowest index, so the result does not
/// depend on which list is called "previous".
pub fn match_descriptors(prev: &[Descriptor], curr: &[Descriptor], threshold: u32) -> CorrespondenceSet {
    if prev.is_empty() || curr.is_empty() {
        return CorrespondenceSet::default();
    }
    let mut best_for_curr = vec![(u32::MAX, usize::MAX); curr.len()];
    let mut best_for_prev = vec![(u32::MAX, usize::MAX); prev.len()];
    for (i, p) in prev.iter().enumerate() {
        for (j, q) in curr.iter().enumerate() {
            let d = p.hamming(q);
            if d < best_for_prev[i].0 {
                best_for_prev[i] = (d, j);
            }
            if d < best_for_curr[j].0 {
                best_for_curr[j] = (d, i);
            }
        }
    }
    let pairs = best_for_prev
        .iter()
        .enumerate()
        .filter(|(i, (d, j))| *d <= threshold && best_for_curr[*j].1 == *i)
        .map(|(i, (_, j))| Correspondence { prev: i, curr: *j })
        .collect();
    CorrespondenceSet { pairs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn textured_scan(shift: usize) -> PolarScan {
        // Deterministic blobs; `shift` rotates the scan by whole azimuth cells.
        let a_count = 400;
        let mut scan = PolarScan::blank(a_count, 200, 0.2, 0, 625_000).unwrap();
        let blobs = [(10, 50, 250u8), (14, 60, 120), (3, 40, 200), (390, 45, 90), (20, 75, 180), (8, 30, 150)];
        for (a, b, v) in blobs {
            let a = (a + shift) % a_count;
            for da in 0..2 {
                let row = scan.row_mut((a + da) % a_count);
                row[b] = v;
                row[b + 1] = v / 2;
            }
        }
        scan
    }

    #[test]
    fn describing_twice_is_identical() {
        let scan = textured_scan(0);
        let d = Describer::new(DEFAULT_PATTERN_SEED, 40.0);
        let kp = Keypoint::from_polar(10.1, scan.azimuth_angle(10), 0, 0.1, 0.01).unwrap();
        assert_eq!(d.describe(&scan, &kp).hamming(&d.describe(&scan, &kp)), 0);
    }

    #[test]
    fn rotated_patch_keeps_descriptor() {
        let d = Describer::new(DEFAULT_PATTERN_SEED, 40.0);
        let scan = textured_scan(0);
        let rotated = textured_scan(100);
        let kp = Keypoint::from_polar(10.1, scan.azimuth_angle(10), 0, 0.1, 0.01).unwrap();
        let kp_rot = Keypoint::from_polar(10.1, scan.azimuth_angle(110), 0, 0.1, 0.01).unwrap();
        let a = d.describe(&scan, &kp);
        let b = d.describe(&rotated, &kp_rot);
        assert!(a.hamming(&b) <= 32, "distance {}", a.hamming(&b));
        assert!(a.0.iter().any(|w| *w != 0));
    }

    #[test]
    fn uniform_patch_is_all_zero_bits() {
        let mut scan = PolarScan::blank(400, 300, 0.2, 0, 1).unwrap();
        scan.intensities_mut().fill(77);
        let d = Describer::new(DEFAULT_PATTERN_SEED, 30.0);
        let kp = Keypoint::from_polar(20.0, 0.3, 0, 0.1, 0.01).unwrap();
        assert_eq!(d.describe(&scan, &kp), Descriptor([0; 4]));
    }

    #[test]
    fn patch_outside_scan_pads_with_zero() {
        let scan = textured_scan(0);
        let d = Describer::new(DEFAULT_PATTERN_SEED, 40.0);
        let kp = Keypoint::from_polar(39.0, 0.0, 0, 0.1, 0.01).unwrap();
        let _ = d.describe(&scan, &kp);
    }

    #[test]
    fn disjoint_and_identical_lists() {
        let a = vec![Descriptor([0; 4]), Descriptor([u64::MAX, 0, 0, 0])];
        let b = vec![Descriptor([u64::MAX; 4]), Descriptor([0, u64::MAX, u64::MAX, u64::MAX])];
        assert!(match_descriptors(&a, &b, 64).is_empty());
        let m = match_descriptors(&a, &a, 64);
        assert_eq!(m, CorrespondenceSet::identity(2));
        assert!(match_descriptors(&[], &a, 64).is_empty());
    }

    fn descriptors(max: usize) -> impl Strategy<Value = Vec<Descriptor>> {
        prop::collection::vec(any::<[u64; 4]>().prop_map(Descriptor), 0..max)
    }

    proptest! {
        #[test]
        fn matching_is_symmetric_and_bounded(a in descriptors(20), b in descriptors(20), thr in 96u32..160) {
            let ab = match_descriptors(&a, &b, thr);
            let ba = match_descriptors(&b, &a, thr);
            prop_assert_eq!(ab.inverted(), ba.clone());
            prop_assert!(ab.len() <= a.len().min(b.len()));
            let mut currs: Vec<_> = ab.pairs.iter().map(|c| c.curr).collect();
            currs.sort();
            currs.dedup();
            prop_assert_eq!(currs.len(), ab.len());
        }

        #[test]
        fn hamming_is_a_metric(a in any::<[u64; 4]>(), b in any::<[u64; 4]>(), c in any::<[u64; 4]>()) {
            let (a, b, c) = (Descriptor(a), Descriptor(b), Descriptor(c));
            prop_assert_eq!(a.hamming(&a), 0);
            prop_assert_eq!(a.hamming(&b), b.hamming(&a));
            prop_assert!(a.hamming(&c) <= a.hamming(&b) + b.hamming(&c));
        }
    }
}
