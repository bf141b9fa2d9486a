//! Subcommand implementations. Each returns a [`CommandReport`]; fatal
//! problems (bad config, unreadable manifest) are errors instead.

pub mod eval;
pub mod losses;
pub mod overlay;
pub mod pseudomask;
pub mod refine;

pub use eval::{cmd_eval, EvalArgs, EvalReportFile};
pub use losses::{cmd_losses, LossesArgs};
pub use overlay::{cmd_overlay, OverlayArgs};
pub use pseudomask::{cmd_pseudomask, PseudomaskArgs};
pub use refine::{cmd_refine, RefineArgs};

use crate::error::ExitStatus;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandReport {
    /// Human-readable summary, printed to stdout.
    pub lines: Vec<String>,
    /// Printed to stderr.
    pub warnings: Vec<String>,
    /// Some records were skipped.
    pub partial: bool,
}

impl CommandReport {
    pub fn status(&self) -> ExitStatus {
        if self.partial {
            ExitStatus::Partial
        } else {
            ExitStatus::Success
        }
    }
}

/// Per-image seed: independent of processing order and of the other images
/// in the manifest.
pub fn image_seed(seed: u64, image_id: &str) -> u64 {
    // FNV-1a over the id, then a splitmix finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in image_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
