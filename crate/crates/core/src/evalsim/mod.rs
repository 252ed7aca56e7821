//! Desk-scale experiments on centroid distributions.
//!
//! - [`mixture`]: the 2-D Gaussian-plus-uniform pool on `[-3, 3]²`
//! - [`kde`]: grid kernel density estimates and their divergence from uniform
//! - [`divergence`]: discrete distributions and the `p^t` flattening check
//! - [`zador`]: 1-D centroid histograms against `p`, `p^(1/3)` and uniform
//! - [`imbalance`]: power-law class resampling and labeled blob pools
//! - [`balance`]: per-class cluster counts and sizes for a tree
//! - [`simulate`]: KL-to-uniform of top-level centroids for several tree shapes

pub mod balance;
pub mod divergence;
pub mod imbalance;
pub mod kde;
pub mod mixture;
pub mod simulate;
pub mod zador;

/// Simulation-stream keys, one per generator, so experiments never share draws.
pub(crate) mod keys {
    pub const MIXTURE: u64 = 1;
    pub const UNIFORM_BASELINE: u64 = 2;
    pub const TEMPERING: u64 = 3;
    pub const ZADOR: u64 = 4;
    pub const IMBALANCE: u64 = 5;
    pub const POOL: u64 = 6;
}
