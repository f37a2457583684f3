//! Warp engine for pair stitching: middle-plane homography decomposition,
//! FFD-accelerated thin-plate-spline warping, keypoint rasterization,
//! adaptive mixture-of-experts fusion, and masked quality metrics.
//!
//! The [`stitcher`] module ties everything into a pipeline that aligns an
//! image pair by fitting a global homography from correspondences, splitting
//! it onto a virtual middle plane, and then optimizing residual TPS control
//! offsets for both views against a combined alignment/shape objective.

pub mod amoe;
pub mod cli;
pub mod error;
pub mod homography;
pub mod imaging;
pub mod metrics;
pub mod npt;
pub mod objective;
pub mod stitcher;
pub mod tps;

pub use error::{Error, Result};

use std::sync::Once;

static POOL_INIT: Once = Once::new();

/// Initializes the global worker pool, honoring `WARPFORGE_THREADS`
/// (0 or unset = one worker per core). Safe to call repeatedly.
pub fn init_thread_pool() {
    POOL_INIT.call_once(|| {
        let requested = std::env::var("WARPFORGE_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or(0);
        if requested > 0 {
            // Ignore the error: a pool may already exist if the host
            // application configured rayon itself.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(requested)
                .build_global();
        }
    });
}
