//! Radar front end: scan container and file format, keypoint extraction and
//! the anisotropic keypoint noise model.

mod extract;
mod keypoint;
mod scan;

pub use extract::{extract_keypoints, ExtractionParams};
pub use keypoint::{default_sigmas, keypoint_covariance, Keypoint};
pub use scan::{scan_file_name, PolarScan, SCAN_MAGIC, SCAN_VERSION};
