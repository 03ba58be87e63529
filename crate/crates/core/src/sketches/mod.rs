//! The two linear sketches over the implicit matrix and their simulated
//! counterparts over explicit matrices.
//!
//! Both sketches normalize by `m` only at query time: the accumulators are
//! linear in the pair counts, so merging two states with equal seeds is the
//! same as ingesting the concatenated stream.

mod cauchy;
pub mod codec;
mod im;
pub mod simulated;
mod stable;

pub use cauchy::{median_abs, CoefficientFamily};
pub use im::{check_ba2_floor, IMMatrixSketch};
pub use simulated::{sim_ba1, sim_ba2, SimulatedBlackbox};
pub use stable::{check_ba1_floor, StableL1VectorSketch};

pub(crate) use im::{ba2_value, Ba2Family};
pub(crate) use stable::{ba1_value, check_unit};

use crate::hashing::BitHash;
use crate::Result;

/// Query access to both estimators for arbitrary row masks.
pub trait Blackboxes {
    fn n(&self) -> usize;

    /// Estimate of `‖g[J·I_H·A]‖₁`.
    fn ba1(&self, mask: &BitHash) -> Result<f64>;

    /// Estimate of `‖g[I_H·A]‖₁`.
    fn ba2(&self, mask: &BitHash) -> Result<f64>;
}
