//! Synthetic datasets: scenes, trajectories, radar scans with motion skew
//! and Doppler, IMU streams and ground truth, plus brute-force reference
//! solvers used to cross-check the fast ones.

mod correspondences;
mod dataset;
pub mod oracle;
mod render;
mod scenario;
mod trajectory;

pub use correspondences::{synthetic_correspondences, SyntheticPair, SyntheticPairSpec};
pub use dataset::{ground_truth, render_scan_at, scan_start, write_dataset, DatasetSummary};
pub use render::{radar_state, render_imu, render_scan};
pub use scenario::{ImuSpec, Landmark, RadarSpec, Scenario};
pub use trajectory::{loop_perimeter, MotionState, PlanarStart, Trajectory};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STREAM_IMU: u64 = 1;
const STREAM_SCATTER: u64 = 1 << 16;
const STREAM_SCAN: u64 = 1 << 32;

/// Independent, reproducible random stream `stream` under `seed`.
pub(crate) fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
