//! Radar-inertial odometry: radar keypoint front end, descriptor matching,
//! non-iterative robust registration and an error-state Kalman filter fusing
//! it with IMU propagation, plus a simulator and evaluation tooling.

pub mod deskew;
pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod eskf;
pub mod geometry;
pub mod matching;
pub mod radar;
pub mod registration;
pub mod pipeline;
pub mod simulator;

pub use error::{Error, Result};
pub use geometry::{Nanos, Pose, TimedPoseBuffer};
pub use matching::{Correspondence, CorrespondenceSet, Descriptor};
pub use radar::{Keypoint, PolarScan};
pub use registration::{register, PoseObservation, Registration, RegistrationParams};
pub use pipeline::{run, PipelineConfig, RunOutput, TrajectoryRecord};
