//! Streaming estimation of `‖g[A]‖₁` for even, subadditive, non-negative
//! Hadamard functions `g` over an implicit `n × n` matrix `A`.
//!
//! The motivating instance is independence measurement: a stream of pairs
//! `(i, j)` defines `a_ij = f_ij/m − f_i·f_j/m²`, and `‖A‖₁` is the L₁
//! distance between the empirical joint distribution and the product of its
//! marginals.
//!
//! The estimator is layered:
//!
//! - [`sketches`]: two linear Cauchy sketches. [`StableL1VectorSketch`]
//!   gives a `(1±ε′)` estimate of the row-masked aggregate vector, and
//!   [`IMMatrixSketch`] gives a coarse `r(n)`-factor estimate of the
//!   row-masked matrix norm.
//! - [`keyrow`]: finds a row that dominates all other rows combined by voting
//!   over random bipartitions of the rows.
//! - [`heavyrows`]: hashes rows into buckets and runs the key-row search per
//!   bucket, producing an `(α, ε)`-cover of the row-weight vector.
//! - [`recsum`]: a random-halving cascade that turns per-level covers into a
//!   `(1±ε)` estimate of the total.
//!
//! [`stream`] holds the exact oracle used to verify all of the above.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
mod error;
pub mod hadamard;
pub mod hashing;
pub mod heavyrows;
pub mod keyrow;
pub mod params;
pub mod recsum;
pub mod sketches;
pub mod stream;

pub use error::{Error, Result};
pub use hadamard::{ExplicitMatrix, HadamardFunction, WeightVector};
pub use hashing::{BitHash, BucketHash};
pub use heavyrows::{Cover, HeavyRowsConfig, HeavyRowsSketch};
pub use keyrow::{KeyRowConfig, KeyRowOutcome, KeyRowSketch};
pub use params::{Calibration, Regime};
pub use recsum::{FinalEstimate, RecursiveSum, RecursiveSumConfig};
pub use sketches::{IMMatrixSketch, StableL1VectorSketch};
pub use stream::{ExactHistogram, GeneratorMode, PairCounts, StreamEvent};
