use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rio_core::diagnostics::{read_uncertainty_csv, UncertaintySeries};
use rio_core::evaluation::{absolute_error, read_trajectory_csv, relative_errors, DEFAULT_SEGMENT_LENGTHS};
use rio_core::registration::{solve_scalar_tls, ScalarTlsProblem};
use rio_core::simulator::{write_dataset, Scenario};
use rio_core::{Error, PipelineConfig};

mod problem;

#[derive(Parser)]
#[command(name = "rio", version, about = "Radar-inertial odometry toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run odometry over a dataset directory.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        /// Key=value configuration; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a synthetic dataset from a scenario file.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an estimated trajectory against ground truth.
    Evaluate {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Segment lengths in meters.
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<f64>>,
        /// Also export the per-frame uncertainty series of a pipeline trajectory.
        #[arg(long)]
        diagnose: bool,
        /// Directory for report.csv, drift.dat and diagnostics.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one scalar truncated-least-squares problem and print the result.
    Solve {
        #[arg(long)]
        problem: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { dataset, config, out } => run(&dataset, config.as_deref(), &out),
        Command::Simulate { scenario, out } => {
            let scenario = Scenario::read(&scenario)?;
            let summary = write_dataset(&scenario, &out)?;
            println!(
                "wrote {} scans, {} IMU samples, {} ground-truth poses to {}",
                summary.scans,
                summary.imu_samples,
                summary.ground_truth_poses,
                out.display()
            );
            Ok(())
        }
        Command::Evaluate {
            traj,
            gt,
            lengths,
            diagnose,
            out,
        } => evaluate(&traj, &gt, lengths.as_deref(), diagnose, out.as_deref()),
        Command::Solve { problem } => {
            let text = fs::read_to_string(&problem)?;
            let p: ScalarTlsProblem = problem::parse(&text, &problem)?;
            let s = solve_scalar_tls(&p)?;
            let inliers: Vec<String> = s.inliers.iter().map(usize::to_string).collect();
            println!("x_hat={}", s.x_hat);
            println!("variance={}", s.variance);
            println!("cost={}", s.cost);
            println!("inliers={}", inliers.join(","));
            Ok(())
        }
    }
}

fn run(dataset: &Path, config: Option<&Path>, out: &Path) -> Result<(), Error> {
    let config = match config {
        Some(p) => PipelineConfig::read(p)?,
        None => PipelineConfig::default(),
    };
    let output = rio_core::run(dataset, &config)?;
    output.write(out)?;
    let s = &output.stats;
    let per_frame = s.estimation.as_secs_f64() * 1e3 / s.frames.max(1) as f64;
    println!(
        "{} frames in {:.2} s ({:.2} ms registration+fusion per frame), {} map points, {} warnings",
        s.frames,
        s.total.as_secs_f64(),
        per_frame,
        output.map.len(),
        output.warnings.len()
    );
    Ok(())
}

fn evaluate(traj: &Path, gt: &Path, lengths: Option<&[f64]>, diagnose: bool, out: Option<&Path>) -> Result<(), Error> {
    let est = read_trajectory_csv(traj)?;
    let truth = read_trajectory_csv(gt)?;
    let report = relative_errors(&est, &truth, lengths.unwrap_or(&DEFAULT_SEGMENT_LENGTHS));
    if let Some(d) = &report.diagnostic {
        eprintln!("warning: {d}");
    }
    let csv = report.to_csv();
    print!("{csv}");
    match absolute_error(&est, &truth) {
        Ok(rmse) => println!("# aligned position RMSE {rmse:.6} m"),
        Err(e) => eprintln!("warning: {e}"),
    }
    let series = if diagnose {
        let s = UncertaintySeries::from_rows(read_uncertainty_csv(traj)?);
        match s.correlation {
            Some(c) => println!("# spearman(n_inliers, total variance) = {c:.4}"),
            None => println!("# spearman(n_inliers, total variance) undefined"),
        }
        Some(s)
    } else {
        None
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.csv"), &csv)?;
        let mut dat = String::from("# length_m translation_pct rotation_deg_per_100m\n");
        for seg in &report.segments {
            let _ = writeln!(dat, "{} {} {}", seg.length, seg.translation_pct, seg.rotation_deg_per_100m);
        }
        fs::write(dir.join("drift.dat"), dat)?;
        if let Some(s) = &series {
            fs::write(dir.join("diagnostics.csv"), s.to_csv())?;
        }
    }
    Ok(())
}
