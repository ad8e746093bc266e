//! Per-scan work that does not depend on the filter: decoding, keypoint
//! extraction and description. Runs either inline or one scan ahead on a
//! worker thread.

use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use std::thread::Scope;

use crate::error::Result;
use crate::geometry::Nanos;
use crate::matching::{Describer, Descriptor};
use crate::radar::{default_sigmas, extract_keypoints, ExtractionParams, Keypoint, PolarScan};

#[derive(Debug, Clone)]
pub(crate) struct FrontFrame {
    pub index: usize,
    pub path: PathBuf,
    pub start: Nanos,
    pub end: Nanos,
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
    /// `(σρ, σφ)` used for this scan's keypoint covariances.
    pub sigmas: (f64, f64),
}

pub(crate) fn process(index: usize, path: &Path, params: &ExtractionParams, describer: &Describer) -> Result<FrontFrame> {
    let scan = PolarScan::read(path)?;
    let keypoints = extract_keypoints(&scan, params)?;
    let descriptors = describer.describe_all(&scan, &keypoints);
    Ok(FrontFrame {
        index,
        path: path.to_path_buf(),
        start: scan.start_time(),
        end: scan.end_time(),
        keypoints,
        descriptors,
        sigmas: params.sigmas.unwrap_or_else(|| default_sigmas(&scan)),
    })
}

/// Frames in order. With `threaded`, a worker stays at most one finished
/// scan ahead of the consumer (queue depth one); it stops after the first
/// error or when the consumer goes away.
pub(crate) fn frames<'scope, 'env>(
    scope: &'scope Scope<'scope, 'env>,
    paths: &'env [PathBuf],
    params: &'env ExtractionParams,
    describer: &'env Describer,
    threaded: bool,
) -> Box<dyn Iterator<Item = Result<FrontFrame>> + 'scope> {
    if !threaded {
        return Box::new(
            paths
                .iter()
                .enumerate()
                .map(move |(i, p)| process(i, p, params, describer)),
        );
    }
    let (tx, rx) = sync_channel(1);
    scope.spawn(move || {
        for (i, p) in paths.iter().enumerate() {
            let frame = process(i, p, params, describer);
            let failed = frame.is_err();
            if tx.send(frame).is_err() || failed {
                break;
            }
        }
    });
    Box::new(rx.into_iter())
}
