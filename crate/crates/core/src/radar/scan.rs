use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Nanos;

pub const SCAN_MAGIC: &[u8; 4] = b"RSCN";
pub const SCAN_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8;

/// One radar revolution: an azimuth × range intensity grid.
///
/// Azimuth index `a` points along `2πa/A` in the sensor frame and was
/// captured at `azimuth_timestamps[a]`. Intensities are stored azimuth-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarScan {
    azimuth_count: usize,
    range_bins: usize,
    range_resolution: f64,
    azimuth_timestamps: Vec<Nanos>,
    intensities: Vec<u8>,
}

impl PolarScan {
    pub fn new(
        range_bins: usize,
        range_resolution: f64,
        azimuth_timestamps: Vec<Nanos>,
        intensities: Vec<u8>,
    ) -> Result<Self> {
        let azimuth_count = azimuth_timestamps.len();
        if azimuth_count == 0 || range_bins == 0 {
            return Err(Error::Domain("scan needs at least one azimuth and one range bin".into()));
        }
        if !(range_resolution > 0.0 && range_resolution.is_finite()) {
            return Err(Error::Domain(format!("range resolution {range_resolution} must be positive")));
        }
        if azimuth_timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("azimuth timestamps must be strictly increasing".into()));
        }
        if intensities.len() != azimuth_count * range_bins {
            return Err(Error::Domain(format!(
                "expected {} intensities, got {}",
                azimuth_count * range_bins,
                intensities.len()
            )));
        }
        Ok(Self {
            azimuth_count,
            range_bins,
            range_resolution,
            azimuth_timestamps,
            intensities,
        })
    }

    /// All-zero scan with evenly spaced azimuth times.
    pub fn blank(
        azimuth_count: usize,
        range_bins: usize,
        range_resolution: f64,
        start: Nanos,
        azimuth_period: Nanos,
    ) -> Result<Self> {
        let ts = (0..azimuth_count as u64).map(|a| start + a * azimuth_period).collect();
        Self::new(range_bins, range_resolution, ts, vec![0; azimuth_count * range_bins])
    }

    pub fn azimuth_count(&self) -> usize {
        self.azimuth_count
    }

    pub fn range_bins(&self) -> usize {
        self.range_bins
    }

    pub fn range_resolution(&self) -> f64 {
        self.range_resolution
    }

    pub fn azimuth_timestamps(&self) -> &[Nanos] {
        &self.azimuth_timestamps
    }

    pub fn intensities(&self) -> &[u8] {
        &self.intensities
    }

    pub fn intensities_mut(&mut self) -> &mut [u8] {
        &mut self.intensities
    }

    pub fn row(&self, azimuth: usize) -> &[u8] {
        let start = azimuth * self.range_bins;
        &self.intensities[start..start + self.range_bins]
    }

    pub fn row_mut(&mut self, azimuth: usize) -> &mut [u8] {
        let start = azimuth * self.range_bins;
        &mut self.intensities[start..start + self.range_bins]
    }

    pub fn azimuth_step(&self) -> f64 {
        2.0 * PI / self.azimuth_count as f64
    }

    pub fn azimuth_angle(&self, azimuth: usize) -> f64 {
        2.0 * PI * azimuth as f64 / self.azimuth_count as f64
    }

    pub fn start_time(&self) -> Nanos {
        self.azimuth_timestamps[0]
    }

    pub fn end_time(&self) -> Nanos {
        *self.azimuth_timestamps.last().expect("scan has at least one azimuth")
    }

    /// Encodes the scan in the little-endian `RSCN` v1 layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            HEADER_LEN + 8 * self.azimuth_count + self.intensities.len(),
        );
        out.extend_from_slice(SCAN_MAGIC);
        out.extend_from_slice(&SCAN_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.azimuth_count as u32).to_le_bytes());
        out.extend_from_slice(&(self.range_bins as u32).to_le_bytes());
        out.extend_from_slice(&self.range_resolution.to_le_bytes());
        for t in &self.azimuth_timestamps {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out.extend_from_slice(&self.intensities);
        out
    }

    /// Decodes an `RSCN` v1 buffer; `path` is only used in diagnostics.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(path, bytes.len() as u64, "truncated scan header"));
        }
        if &bytes[0..4] != SCAN_MAGIC {
            return Err(Error::format(path, 0, "bad magic, expected RSCN"));
        }
        let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != SCAN_VERSION {
            return Err(Error::format(path, 4, format!("unsupported version {version}")));
        }
        let azimuths = u32_at(8) as usize;
        let bins = u32_at(12) as usize;
        let resolution = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        if azimuths == 0 || bins == 0 {
            return Err(Error::format(path, 8, "zero azimuth or range-bin count"));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::format(path, 16, format!("invalid range resolution {resolution}")));
        }
        let expected = HEADER_LEN + 8 * azimuths + azimuths * bins;
        if bytes.len() != expected {
            return Err(Error::format(
                path,
                bytes.len() as u64,
                format!("expected {expected} bytes for {azimuths}x{bins} scan"),
            ));
        }
        let mut timestamps = Vec::with_capacity(azimuths);
        for a in 0..azimuths {
            let off = HEADER_LEN + 8 * a;
            let t = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            if let Some(&prev) = timestamps.last() {
                if t <= prev {
                    return Err(Error::format(path, off as u64, "azimuth timestamps not increasing"));
                }
            }
            timestamps.push(t);
        }
        let data_start = HEADER_LEN + 8 * azimuths;
        Self::new(bins, resolution, timestamps, bytes[data_start..].to_vec())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }
}

/// Zero-padded file name for scan number `index`.
pub fn scan_file_name(index: usize) -> String {
    format!("{index:06}.rscn")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let scan = PolarScan::new(2, 0.5, vec![7, 9], vec![1, 2, 3, 4]).unwrap();
        let b = scan.to_bytes();
        assert_eq!(&b[..4], b"RSCN");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &2u32.to_le_bytes());
        assert_eq!(&b[12..16], &2u32.to_le_bytes());
        assert_eq!(&b[16..24], &0.5f64.to_le_bytes());
        assert_eq!(&b[24..32], &7u64.to_le_bytes());
        assert_eq!(&b[40..], &[1, 2, 3, 4]);
    }

    #[test]
    fn corrupt_headers_report_offsets() {
        let p = Path::new("x.rscn");
        let good = PolarScan::new(2, 0.5, vec![7, 9], vec![1, 2, 3, 4]).unwrap().to_bytes();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(PolarScan::from_bytes(&bad, p), Err(Error::Format { offset: 0, .. })));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(PolarScan::from_bytes(&bad, p), Err(Error::Format { offset: 4, .. })));
        assert!(PolarScan::from_bytes(&good[..good.len() - 1], p).is_err());
        assert!(PolarScan::from_bytes(&good[..10], p).is_err());
    }

    #[test]
    fn invalid_scans_are_rejected() {
        assert!(PolarScan::new(2, 0.5, vec![], vec![]).is_err());
        assert!(PolarScan::new(2, 0.5, vec![3, 3], vec![0; 4]).is_err());
        assert!(PolarScan::new(2, -1.0, vec![3, 4], vec![0; 4]).is_err());
        assert!(PolarScan::new(2, 0.5, vec![3, 4], vec![0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(a in 1usize..6, b in 1usize..9, res in 0.01f64..2.0, seed in any::<u64>()) {
            let ts: Vec<u64> = (0..a as u64).map(|i| seed % 1000 + i * 37).collect();
            let data: Vec<u8> = (0..a * b).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 7) as u8).collect();
            let scan = PolarScan::new(b, res, ts, data).unwrap();
            let back = PolarScan::from_bytes(&scan.to_bytes(), Path::new("mem")).unwrap();
            prop_assert_eq!(back, scan);
        }
    }
}
