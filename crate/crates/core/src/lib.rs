//! Topology-aware losses, product-manifold geometry and structure-aware
//! evaluation metrics for binary segmentation on pixel grids.
//!
//! The crate is backbone independent: every operation works on plain grids
//! ([`BinaryMask`], [`ProbMap`]) or plain coordinate slices.
//!
//! * [`topology`]: exact Euler characteristic, connected components, Betti numbers.
//! * [`soft_euler`]: differentiable Euler characteristic, total variation, loss schedule.
//! * [`manifold`]: Poincare-ball distance, adapter projections, hyperbolic contrastive loss.
//! * [`persistence`]: H0 superlevel persistence diagrams and diagram distances.
//! * [`metrics`]: Dice, IoU, Boundary-F1, Betti errors, Dice/BCE losses.
//! * [`harness`]: file codecs, synthetic masks, batch evaluation, checkpoint selection.
//!
//! With the default `parallel` feature the grid kernels and batch evaluation fan
//! out over rayon; every reduction is performed in a fixed order so results are
//! bit-identical to the sequential path.

pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod grid;
pub mod harness;
pub mod manifold;
pub mod metrics;
pub mod persistence;
pub mod soft_euler;
pub mod topology;

pub use error::{Error, Result};
pub use exec::Exec;
pub use grid::{BinaryMask, GradMap, ProbMap};
