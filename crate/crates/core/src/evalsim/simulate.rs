//! KL-to-uniform of top-level centroids for several tree shapes on the 2-D mixture.

use serde::{Deserialize, Serialize};

use crate::config::{geometric_schedule, ClusterConfig};
use crate::dataset::{EmbeddingDataset, Matrix};
use crate::error::Result;
use crate::hierarchy::build_hierarchy;

use super::kde::{kde, kl_to_uniform, scott_factor, Support};
use super::mixture::{gen_mixture, uniform_points, MixtureSpec};

pub const BASELINE_NAME: &str = "random_baseline";

/// One tree shape. `cluster.seed` is replaced by the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub name: String,
    pub cluster: ClusterConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateParams {
    pub mixture: MixtureSpec,
    pub top_k: usize,
    pub configs: Vec<SimConfig>,
    /// Shared by every configuration so their KDEs are comparable.
    pub bandwidth: f64,
    pub resolution: usize,
}

impl Default for SimulateParams {
    /// Geometric k schedules ending at 300 clusters, resampling at every level for the last shape.
    fn default() -> Self {
        let mixture = MixtureSpec::default();
        let n = mixture.n;
        let top_k = 300;
        let shape = |name: &str, levels: usize, m: usize| {
            let mut cluster = ClusterConfig::new(geometric_schedule(n, top_k, levels)).with_resampling(m);
            cluster.resample_all = m > 0;
            SimConfig {
                name: name.to_string(),
                cluster,
            }
        };
        let half = mixture.half_width;
        Self {
            configs: vec![
                shape("1-level", 1, 0),
                shape("2-level", 2, 0),
                shape("3-level", 3, 0),
                shape("3-level+resampling", 3, 10),
            ],
            // Scott's rule for top_k points uniform on the square: std = half / sqrt(3)
            bandwidth: scott_factor(top_k, 2) * half / 3f64.sqrt(),
            resolution: 100,
            mixture,
            top_k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub config_name: String,
    pub seed: u64,
    pub kl_to_uniform: f64,
    /// Top-level centroids, or the random points for the baseline.
    pub centroids: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub data: EmbeddingDataset,
    pub rows: Vec<SimRow>,
}

impl SimRun {
    pub fn kl(&self, name: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.config_name == name)
            .map(|r| r.kl_to_uniform)
    }
}

/// KL-to-uniform of the KDE of `points` on the mixture square.
pub fn centroid_kl(points: &Matrix, params: &SimulateParams) -> Result<f64> {
    let w = params.mixture.half_width;
    let grid = kde(points, params.bandwidth, params.resolution, &Support::cube(2, -w, w))?;
    Ok(kl_to_uniform(&grid))
}

/// Builds every configured tree on one mixture draw, then adds the uniform baseline row.
pub fn simulate(params: &SimulateParams, seed: u64) -> Result<SimRun> {
    let data = gen_mixture(&params.mixture, seed)?;
    let mut rows = Vec::with_capacity(params.configs.len() + 1);
    for c in &params.configs {
        let cfg = ClusterConfig {
            seed,
            ..c.cluster.clone()
        };
        let tree = build_hierarchy(&data, &cfg)?;
        let centroids = tree.top().centroids.clone();
        rows.push(SimRow {
            config_name: c.name.clone(),
            seed,
            kl_to_uniform: centroid_kl(&centroids, params)?,
            centroids,
        });
    }
    let baseline = uniform_points(params.top_k, 2, params.mixture.half_width, seed);
    rows.push(SimRow {
        config_name: BASELINE_NAME.to_string(),
        seed,
        kl_to_uniform: centroid_kl(&baseline, params)?,
        centroids: baseline,
    });
    Ok(SimRun { data, rows })
}
