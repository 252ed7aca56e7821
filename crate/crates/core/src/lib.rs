//! Balanced subset curation for pools of embedding vectors.
//!
//! The pipeline clusters a pool bottom-up with hierarchical k-means plus
//! resampling-clustering ([`hierarchy`]), which spreads top-level centroids
//! close to uniformly over the data support, then draws a balanced subset from
//! the resulting tree ([`sampling`]). [`evalsim`] holds small-scale numerical
//! experiments that check how centroid distributions behave.

pub mod config;
pub mod dataset;
pub mod error;
pub mod evalsim;
pub mod hierarchy;
pub mod kmeans;
pub mod rng;
pub mod sampling;
pub mod tree;

pub use config::{ClusterConfig, Init};
pub use dataset::{EmbeddingDataset, Matrix};
pub use error::{Error, Result};
pub use hierarchy::{build_hierarchy, resample_cluster};
pub use kmeans::{
    assign, distortion, kmeans, kmeanspp_init, lloyd, power_kmeans, DescentConfig, KMeansParams, KMeansResult,
};
pub use sampling::{allocate, flat_sample, hierarchical_sample, Mode, SamplePlan, SampleSpec, Strategy};
pub use tree::{ClusterTree, Level};
