use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    #[default]
    KMeansPP,
    Random,
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeanspp" | "kmeans++" => Ok(Init::KMeansPP),
            "random" => Ok(Init::Random),
            other => Err(Error::Config(format!("unknown init {other:?}"))),
        }
    }
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Init::KMeansPP => "kmeanspp",
            Init::Random => "random",
        })
    }
}

pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-4;

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

/// Parameters of a hierarchical k-means build.
///
/// As a TOML file:
///
/// ```toml
/// levels = 3
/// k = [3000, 1000, 300]
/// m = 10                 # resampling steps per level
/// r = [2, 2, 2]          # optional; default ceil(avg cluster size / 2)
/// resample_all = false   # true also resamples level 1
/// init = "kmeanspp"      # or "random"
/// seed = 0
/// tol = 1e-4
/// max_iters = 100
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub levels: usize,
    pub k: Vec<usize>,
    #[serde(default)]
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<usize>>,
    #[serde(default)]
    pub resample_all: bool,
    #[serde(default)]
    pub init: Init,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

impl ClusterConfig {
    /// Config with the given k schedule and defaults elsewhere (no resampling).
    pub fn new(k: Vec<usize>) -> Self {
        Self {
            levels: k.len(),
            k,
            m: 0,
            r: None,
            resample_all: false,
            init: Init::KMeansPP,
            seed: 0,
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }

    pub fn with_resampling(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ClusterConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks that do not depend on the data size.
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::Config("levels must be >= 1".into()));
        }
        if self.k.len() != self.levels {
            return Err(Error::Config(format!(
                "k lists {} values for {} levels",
                self.k.len(),
                self.levels
            )));
        }
        if self.k.contains(&0) {
            return Err(Error::Config("every k must be >= 1".into()));
        }
        if self.k.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config(format!("k schedule {:?} must be non-increasing", self.k)));
        }
        if let Some(r) = &self.r {
            if r.len() != self.levels {
                return Err(Error::Config(format!(
                    "r lists {} values for {} levels",
                    r.len(),
                    self.levels
                )));
            }
            for (t, &rt) in r.iter().enumerate() {
                if rt == 0 && self.resamples_level(t + 1) {
                    return Err(Error::Config(format!("r for level {} must be >= 1", t + 1)));
                }
            }
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol {} must be finite and >= 0", self.tol)));
        }
        Ok(())
    }

    /// Checks against the dataset size: `k_t` never exceeds the level's input count.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        self.validate()?;
        let mut input = n;
        for (t, &k) in self.k.iter().enumerate() {
            if k > input {
                return Err(Error::KExceedsInput { level: t + 1, k, input });
            }
            input = k;
        }
        Ok(())
    }

    /// Level 1 is skipped unless `resample_all` is set.
    pub fn resamples_level(&self, t: usize) -> bool {
        self.m > 0 && (t > 1 || self.resample_all)
    }

    /// Points kept per cluster when resampling level `t` with `inputs` items.
    pub fn resample_count(&self, t: usize, inputs: usize) -> usize {
        match &self.r {
            Some(r) => r[t - 1],
            None => default_resample_count(inputs, self.k[t - 1]),
        }
    }
}

/// Half the average cluster size, rounded up, at least 1.
pub fn default_resample_count(inputs: usize, k: usize) -> usize {
    // ceil(inputs / k / 2) == ceil(inputs / 2k)
    inputs.div_ceil(2 * k).max(1)
}

/// Geometric k schedule from `n` down to `top`: `k_t = round(n · (top/n)^(t/levels))`,
/// so lower levels hold more, smaller clusters. The last entry is exactly `top`.
pub fn geometric_schedule(n: usize, top: usize, levels: usize) -> Vec<usize> {
    assert!(levels >= 1 && top >= 1 && top <= n);
    let ratio = top as f64 / n as f64;
    let mut ks: Vec<usize> = (1..=levels)
        .map(|t| {
            if t == levels {
                top
            } else {
                ((n as f64) * ratio.powf(t as f64 / levels as f64)).round() as usize
            }
        })
        .collect();
    for i in 1..ks.len() {
        ks[i] = ks[i].min(ks[i - 1]);
    }
    ks
}

/// Cluster counts used for a 743M-image pool with four levels.
pub const REFERENCE_WEB_SCALE_SCHEDULE: [usize; 4] = [10_000_000, 500_000, 50_000, 10_000];
