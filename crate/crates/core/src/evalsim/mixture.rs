use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingDataset, Matrix};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

use super::keys;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: [f64; 2],
    pub sigma: f64,
}

/// Isotropic Gaussians plus a uniform component, restricted to `[-half_width, half_width]²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub n: usize,
    pub half_width: f64,
    pub gaussians: Vec<GaussianComponent>,
    pub uniform_weight: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        let g = |mean: [f64; 2]| GaussianComponent {
            weight: 0.3,
            mean,
            sigma: 0.35,
        };
        Self {
            n: 9000,
            half_width: 3.0,
            gaussians: vec![g([-1.5, -1.5]), g([0.0, 1.5]), g([1.5, -1.0])],
            uniform_weight: 0.1,
        }
    }
}

impl MixtureSpec {
    fn validate(&self) -> Result<()> {
        let total: f64 = self.gaussians.iter().map(|g| g.weight).sum::<f64>() + self.uniform_weight;
        if self.n == 0 || !(self.half_width > 0.0) {
            return Err(Error::Argument("mixture needs n >= 1 and a positive half width".into()));
        }
        if (total - 1.0).abs() > 1e-9 || self.gaussians.iter().any(|g| g.weight < 0.0 || !(g.sigma > 0.0)) {
            return Err(Error::Argument(format!(
                "mixture weights must be non-negative and sum to 1 (got {total})"
            )));
        }
        Ok(())
    }
}

/// Draws from the mixture; Gaussian draws landing outside the square are redrawn.
pub fn gen_mixture(spec: &MixtureSpec, seed: u64) -> Result<EmbeddingDataset> {
    spec.validate()?;
    let mut rng = stream_rng(seed, Stream::Simulation, &[keys::MIXTURE]);
    let w = spec.half_width;
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut data = Vec::with_capacity(spec.n * 2);
    for _ in 0..spec.n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let comp = spec.gaussians.iter().find(|g| {
            acc += g.weight;
            u < acc
        });
        let p = match comp {
            None => [rng.random_range(-w..w), rng.random_range(-w..w)],
            Some(g) => loop {
                let x = g.mean[0] + g.sigma * std.sample(&mut rng);
                let y = g.mean[1] + g.sigma * std.sample(&mut rng);
                if x.abs() <= w && y.abs() <= w {
                    break [x, y];
                }
            },
        };
        data.push(p[0] as f32);
        data.push(p[1] as f32);
    }
    EmbeddingDataset::new(Matrix::new(spec.n, 2, data)?)
}

/// The default 9000-point pool.
pub fn gen_mixture_2d(seed: u64) -> Result<EmbeddingDataset> {
    gen_mixture(&MixtureSpec::default(), seed)
}

/// `n` points uniform on `[-half_width, half_width]^dim`.
pub fn uniform_points(n: usize, dim: usize, half_width: f64, seed: u64) -> Matrix {
    let mut rng = stream_rng(seed, Stream::Simulation, &[keys::UNIFORM_BASELINE]);
    let data = (0..n * dim)
        .map(|_| rng.random_range(-half_width..half_width) as f32)
        .collect();
    Matrix::new(n, dim, data).expect("shape")
}
