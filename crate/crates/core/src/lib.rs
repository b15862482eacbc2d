//! Downlink beam prediction from uplink SRS channel estimates.
//!
//! The crate is organised as a pipeline:
//!
//! ```text
//! scene ──► srs ──► ground_truth ──► net ──► eval
//!   (uplink CTF)  (|G_t| features)  (η targets)  (encoder)  (top-n metrics)
//! ```
//!
//! [`harness`] ties the stages together behind the `beampred` binary and
//! owns the on-disk formats (dataset container, raw Q15 ingest, checkpoints
//! and reports).

pub mod error;
pub mod eval;
pub mod ground_truth;
pub mod harness;
pub mod net;
pub mod scene;
pub mod srs;

pub use error::{Error, Result};

/// Number of UE antennas (uplink layers) sounded per snapshot.
pub const NUM_UE_LAYERS: usize = 4;
/// Beams in the grid of beams, both polarizations.
pub const NUM_BEAMS: usize = 64;
/// PRBs in a 100 MHz carrier at 30 kHz subcarrier spacing.
pub const NUM_PRB: usize = 273;
/// PRB subgroups after the two-stage reduction.
pub const NUM_PRSG: usize = 46;
