//! On-disk dataset layout:
//!
//! ```text
//! scans/000000.rscn ...   one file per revolution
//! imu.csv                 t_ns,gx,gy,gz,ax,ay,az
//! calib.txt               x y z qx qy qz qw   (radar pose in the IMU frame)
//! gt.csv                  t_ns,x,y,z,qx,qy,qz,qw (IMU pose in the world)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::render::{render_imu, render_scan};
use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::evaluation::{write_trajectory_csv, StampedPose};
use crate::geometry::Nanos;
use crate::radar::{scan_file_name, PolarScan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetSummary {
    pub scans: usize,
    pub imu_samples: usize,
    pub ground_truth_poses: usize,
}

/// Timestamp of the first azimuth of revolution `index`.
pub fn scan_start(scenario: &Scenario, index: usize) -> Nanos {
    (scenario.scan_start * 1e9).round() as u64 + index as u64 * scenario.scan_period()
}

pub fn render_scan_at(scenario: &Scenario, index: usize) -> Result<PolarScan> {
    let traj = &scenario.trajectory;
    render_scan(
        scenario,
        |t| traj.state(t as f64 * 1e-9),
        scan_start(scenario, index),
        index as u64,
    )
}

/// IMU poses at every IMU tick plus every scan end time, in time order.
pub fn ground_truth(scenario: &Scenario) -> Vec<StampedPose> {
    let end = (scenario.duration * 1e9).round() as u64;
    let mut times: Vec<Nanos> = (0..).map(|k| k * scenario.imu_period()).take_while(|&t| t <= end).collect();
    let last_azimuth = (scenario.radar.azimuths as u64 - 1) * scenario.azimuth_period();
    times.extend((0..scenario.scan_count()).map(|i| scan_start(scenario, i) + last_azimuth));
    times.sort_unstable();
    times.dedup();
    times
        .into_iter()
        .map(|t| StampedPose {
            t,
            pose: scenario.trajectory.pose(t as f64 * 1e-9),
        })
        .collect()
}

/// Writes the full dataset under `dir`, rendering scans on all cores.
/// Output depends only on the scenario.
pub fn write_dataset(scenario: &Scenario, dir: &Path) -> Result<DatasetSummary> {
    scenario.validate()?;
    let scan_dir = dir.join("scans");
    fs::create_dir_all(&scan_dir)?;

    let count = scenario.scan_count();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(count.max(1));
    std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let scan_dir = &scan_dir;
                scope.spawn(move || -> Result<()> {
                    for i in (w..count).step_by(workers) {
                        render_scan_at(scenario, i)?.write(&scan_dir.join(scan_file_name(i)))?;
                    }
                    Ok(())
                })
            })
            .collect();
        for h in handles {
            h.join().map_err(|_| Error::Pipeline("scan rendering thread panicked".into()))??;
        }
        Ok(())
    })?;

    let imu = render_imu(scenario, &scenario.trajectory);
    let mut text = String::from("t_ns,gx,gy,gz,ax,ay,az\n");
    for s in &imu {
        let (g, a) = (s.omega, s.accel);
        let _ = writeln!(text, "{},{},{},{},{},{},{}", s.t, g.x, g.y, g.z, a.x, a.y, a.z);
    }
    fs::write(dir.join("imu.csv"), text)?;

    let c = scenario.extrinsic.to_xyz_quat();
    fs::write(
        dir.join("calib.txt"),
        format!("{} {} {} {} {} {} {}\n", c[0], c[1], c[2], c[3], c[4], c[5], c[6]),
    )?;

    let gt = ground_truth(scenario);
    write_trajectory_csv(&dir.join("gt.csv"), &gt)?;
    Ok(DatasetSummary {
        scans: count,
        imu_samples: imu.len(),
        ground_truth_poses: gt.len(),
    })
}
