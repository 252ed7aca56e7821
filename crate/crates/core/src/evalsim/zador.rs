//! 1-D check of how k-means centroids distribute relative to the data density.
//!
//! Squared-error centroids follow roughly `p^(1/3)`; with `‖x − c‖^s` the
//! exponent becomes `1/(1+s)`, so larger `s` flattens the centroid histogram.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::kmeans::{power_kmeans, DescentConfig};
use crate::rng::{stream_rng, Stream};

use super::divergence::kl_discrete;
use super::keys;

/// A density restricted to `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Density1d {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
        lo: f64,
        hi: f64,
    },
    /// Two equally weighted normals.
    Bimodal {
        means: [f64; 2],
        sd: f64,
        lo: f64,
        hi: f64,
    },
    /// `rate · e^(−rate (x − lo))` on `[lo, hi]`.
    Exponential {
        rate: f64,
        lo: f64,
        hi: f64,
    },
}

impl Density1d {
    pub fn truncated_normal() -> Self {
        Density1d::Normal {
            mean: 0.0,
            sd: 1.0,
            lo: -3.0,
            hi: 3.0,
        }
    }

    pub fn truncated_bimodal() -> Self {
        Density1d::Bimodal {
            means: [-1.5, 1.5],
            sd: 0.6,
            lo: -3.0,
            hi: 3.0,
        }
    }

    pub fn truncated_exponential() -> Self {
        Density1d::Exponential {
            rate: 1.0,
            lo: 0.0,
            hi: 4.0,
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Density1d::Uniform { lo, hi }
            | Density1d::Normal { lo, hi, .. }
            | Density1d::Bimodal { lo, hi, .. }
            | Density1d::Exponential { lo, hi, .. } => (lo, hi),
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.support();
        let scale_ok = match *self {
            Density1d::Uniform { .. } => true,
            Density1d::Normal { sd, .. } | Density1d::Bimodal { sd, .. } => sd > 0.0,
            Density1d::Exponential { rate, .. } => rate > 0.0,
        };
        if !(lo < hi) || !scale_ok {
            return Err(Error::Argument(format!("invalid density {self:?}")));
        }
        Ok(())
    }

    /// Density up to a constant factor, zero outside the support.
    pub fn unnormalized(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        let gauss = |m: f64, sd: f64| (-0.5 * ((x - m) / sd).powi(2)).exp();
        match *self {
            Density1d::Uniform { .. } => 1.0,
            Density1d::Normal { mean, sd, .. } => gauss(mean, sd),
            Density1d::Bimodal { means, sd, .. } => gauss(means[0], sd) + gauss(means[1], sd),
            Density1d::Exponential { rate, lo, .. } => (-rate * (x - lo)).exp(),
        }
    }

    /// One draw, by rejection against the support.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.support();
        loop {
            let x = match *self {
                Density1d::Uniform { .. } => rng.random_range(lo..hi),
                Density1d::Normal { mean, sd, .. } => Normal::new(mean, sd).unwrap().sample(rng),
                Density1d::Bimodal { means, sd, .. } => {
                    let m = if rng.random::<bool>() { means[0] } else { means[1] };
                    Normal::new(m, sd).unwrap().sample(rng)
                }
                Density1d::Exponential { rate, .. } => lo + Exp::new(rate).unwrap().sample(rng),
            };
            if x >= lo && x <= hi {
                return x;
            }
        }
    }

    /// Probability mass of `density^power` (renormalized) in each of `bins` equal bins.
    pub fn bin_masses(&self, bins: usize, power: f64) -> Vec<f64> {
        let (lo, hi) = self.support();
        let w = (hi - lo) / bins as f64;
        // composite Simpson per bin
        const SUB: usize = 64;
        let h = w / SUB as f64;
        let f = |x: f64| self.unnormalized(x).powf(power);
        let masses: Vec<f64> = (0..bins)
            .map(|b| {
                let a = lo + b as f64 * w;
                let mut s = f(a) + f(a + w);
                for i in 1..SUB {
                    s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
                }
                s * h / 3.0
            })
            .collect();
        let total: f64 = masses.iter().sum();
        masses.into_iter().map(|m| m / total).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZadorResult {
    pub centroids: Vec<f64>,
    /// Fraction of centroids per bin.
    pub histogram: Vec<f64>,
    pub kl_vs_p: f64,
    pub kl_vs_p13: f64,
    pub kl_vs_uniform: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZadorParams {
    pub samples: usize,
    pub k: usize,
    pub s: f64,
    pub bins: usize,
    pub descent: DescentConfig,
}

impl ZadorParams {
    pub fn new(samples: usize, k: usize, s: f64) -> Self {
        Self {
            samples,
            k,
            s,
            bins: 16,
            descent: DescentConfig::default(),
        }
    }
}

/// Histogram divergences floored at this mass.
const MASS_FLOOR: f64 = 1e-12;

/// Samples the density, runs `‖x − c‖^s` k-means and compares the centroid
/// histogram with `p`, normalized `p^(1/3)`, and uniform on the support.
pub fn zador_experiment_1d(density: &Density1d, params: &ZadorParams, seed: u64) -> Result<ZadorResult> {
    density.validate()?;
    if params.k == 0 || params.k > params.samples || params.bins == 0 {
        return Err(Error::Argument(format!(
            "need 1 <= k <= samples and bins >= 1 (k={}, samples={}, bins={})",
            params.k, params.samples, params.bins
        )));
    }
    let mut rng = stream_rng(seed, Stream::Simulation, &[keys::ZADOR]);
    let xs: Vec<f32> = (0..params.samples).map(|_| density.sample(&mut rng) as f32).collect();
    let data = Matrix::new(params.samples, 1, xs)?;
    let res = power_kmeans(&data, params.k, params.s, seed, &params.descent)?;
    let centroids: Vec<f64> = res.centroids.iter_rows().map(|r| r[0] as f64).collect();

    let (lo, hi) = density.support();
    let mut counts = vec![0usize; params.bins];
    for &c in &centroids {
        let b = (((c - lo) / (hi - lo)) * params.bins as f64).floor();
        counts[(b.max(0.0) as usize).min(params.bins - 1)] += 1;
    }
    let histogram: Vec<f64> = counts.iter().map(|&c| c as f64 / params.k as f64).collect();
    let p = density.bin_masses(params.bins, 1.0);
    let p13 = density.bin_masses(params.bins, 1.0 / 3.0);
    let u = vec![1.0 / params.bins as f64; params.bins];
    Ok(ZadorResult {
        kl_vs_p: kl_discrete(&histogram, &p, MASS_FLOOR),
        kl_vs_p13: kl_discrete(&histogram, &p13, MASS_FLOOR),
        kl_vs_uniform: kl_discrete(&histogram, &u, MASS_FLOOR),
        centroids,
        histogram,
    })
}
