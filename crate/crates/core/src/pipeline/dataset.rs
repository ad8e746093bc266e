//! Reading a dataset directory: `scans/*.rscn`, `imu.csv`, `calib.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::eskf::ImuSample;
use crate::geometry::Pose;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    /// Scan files in name order.
    pub scans: Vec<PathBuf>,
    pub imu: Vec<ImuSample>,
    /// Radar pose in the IMU frame.
    pub t_ir: Pose,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let scan_dir = root.join("scans");
        if !scan_dir.is_dir() {
            return Err(Error::Pipeline(format!("{}: missing scans/ directory", root.display())));
        }
        let mut scans: Vec<PathBuf> = fs::read_dir(&scan_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "rscn"))
            .collect();
        scans.sort();
        if scans.is_empty() {
            return Err(Error::Pipeline(format!("{}: no scans", scan_dir.display())));
        }
        let imu = read_imu_csv(&root.join("imu.csv"))?;
        let t_ir = read_calib(&root.join("calib.txt"))?;
        Ok(Self {
            root: root.to_path_buf(),
            scans,
            imu,
            t_ir,
        })
    }
}

fn missing(path: &Path) -> Error {
    Error::Pipeline(format!("{}: missing file", path.display()))
}

/// `t_ns,gx,gy,gz,ax,ay,az`, optional header, strictly increasing time.
pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuSample>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => missing(path),
        _ => e.into(),
    })?;
    let mut out: Vec<ImuSample> = Vec::new();
    let mut offset = 0u64;
    for (lineno, raw) in text.split_inclusive('\n').enumerate() {
        let here = offset;
        offset += raw.len() as u64;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if lineno == 0 && fields[0].parse::<u64>().is_err() {
            continue;
        }
        let bad = |msg: String| Error::format(path, here, msg);
        if fields.len() != 7 {
            return Err(bad(format!("expected 7 columns, got {}", fields.len())));
        }
        let t: u64 = fields[0].parse().map_err(|_| bad(format!("bad timestamp {:?}", fields[0])))?;
        let mut v = [0.0; 6];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = fields[k + 1]
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| bad(format!("bad number {:?}", fields[k + 1])))?;
        }
        if out.last().is_some_and(|s| s.t >= t) {
            return Err(bad(format!("timestamp {t} does not increase")));
        }
        out.push(ImuSample {
            t,
            omega: Vector3::new(v[0], v[1], v[2]),
            accel: Vector3::new(v[3], v[4], v[5]),
        });
    }
    Ok(out)
}

/// One line of seven numbers: `x y z qx qy qz qw`.
pub fn read_calib(path: &Path) -> Result<Pose> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => missing(path),
        _ => e.into(),
    })?;
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|f| f.parse::<f64>().map_err(|_| Error::format(path, 0, format!("bad number {f:?}"))))
        .collect::<Result<_>>()?;
    let arr: [f64; 7] = values
        .try_into()
        .map_err(|v: Vec<f64>| Error::format(path, 0, format!("expected 7 numbers, got {}", v.len())))?;
    Pose::from_xyz_quat(&arr).map_err(|e| Error::format(path, 0, e.to_string()))
}
