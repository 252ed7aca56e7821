//! Balanced subset extraction from a cluster tree.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{sq_dist, Matrix};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::tree::ClusterTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Flat,
    Hierarchical,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(Mode::Flat),
            "hier" | "hierarchical" => Ok(Mode::Hierarchical),
            other => Err(Error::Argument(format!("unknown mode {other:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Flat => "flat",
            Mode::Hierarchical => "hier",
        })
    }
}

/// How points are picked inside one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// uniformly at random, without replacement
    #[serde(rename = "r")]
    Random,
    /// nearest to the centroid
    #[serde(rename = "c")]
    Closest,
    /// farthest from the centroid
    #[serde(rename = "f")]
    Furthest,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r" => Ok(Strategy::Random),
            "c" => Ok(Strategy::Closest),
            "f" => Ok(Strategy::Furthest),
            other => Err(Error::Argument(format!("unknown strategy {other:?}"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Random => "r",
            Strategy::Closest => "c",
            Strategy::Furthest => "f",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub target: usize,
    pub mode: Mode,
    pub strategy: Strategy,
    pub seed: u64,
}

/// Per-cluster quotas at the level where points are drawn
/// (top level for flat sampling, level 1 for hierarchical sampling).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePlan {
    pub level: usize,
    pub quotas: Vec<usize>,
    pub total: usize,
}

fn capped_total(cap: usize, sizes: &[usize]) -> usize {
    sizes.iter().map(|&s| s.min(cap)).sum()
}

/// Smallest `n` in `[0, target]` with `Σ min(n, s_j) ≥ value`, if any.
fn first_reaching(value: usize, target: usize, sizes: &[usize]) -> Option<usize> {
    if capped_total(target, sizes) < value {
        return None;
    }
    let (mut lo, mut hi) = (0usize, target);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if capped_total(mid, sizes) >= value {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(lo)
}

/// Per-cluster cap `n ∈ [0, target]` minimizing `|target − Σ_j min(n, sizes_j)|`.
/// Among minimizers the smallest `n` wins.
///
/// `Σ min(n, s_j)` is non-decreasing in `n`, so the best cap is either the
/// first `n` reaching the target or the first `n` reaching the largest total
/// that stays below it. Both are found by binary search.
pub fn allocate(target: usize, sizes: &[usize]) -> usize {
    let over = first_reaching(target, target, sizes);
    let under_total = match over {
        Some(0) => return 0,
        Some(n) => capped_total(n - 1, sizes),
        None => capped_total(target, sizes),
    };
    let under = first_reaching(under_total, target, sizes).expect("total is reachable");
    match over {
        Some(n) if capped_total(n, sizes) - target < target - under_total => n,
        _ => under,
    }
}

fn draw(
    leaves: &[u32],
    quota: usize,
    centroid: &[f32],
    data: Option<&Matrix>,
    strategy: Strategy,
    seed: u64,
) -> Result<Vec<u32>> {
    if quota >= leaves.len() {
        return Ok(leaves.to_vec());
    }
    if quota == 0 {
        return Ok(Vec::new());
    }
    let mut out = match strategy {
        Strategy::Random => {
            let mut rng = stream_rng(seed, Stream::Sampling, &[leaves[0] as u64]);
            index::sample(&mut rng, leaves.len(), quota)
                .into_iter()
                .map(|i| leaves[i])
                .collect::<Vec<u32>>()
        }
        Strategy::Closest | Strategy::Furthest => {
            let data = data.ok_or_else(|| Error::Argument(format!("strategy {strategy} needs the dataset")))?;
            let mut scored: Vec<(f64, u32)> = leaves
                .iter()
                .map(|&i| (sq_dist(data.row(i as usize), centroid), i))
                .collect();
            if strategy == Strategy::Closest {
                scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            } else {
                scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            }
            scored[..quota].iter().map(|&(_, i)| i).collect()
        }
    };
    out.sort_unstable();
    Ok(out)
}

fn check_inputs(tree: &ClusterTree, data: Option<&Matrix>) -> Result<()> {
    if tree.levels.is_empty() || tree.n == 0 {
        return Err(Error::Tree("empty tree".into()));
    }
    if let Some(d) = data {
        if d.rows() != tree.n || d.dim() != tree.dim {
            return Err(Error::DimensionMismatch {
                expected: tree.n * tree.dim,
                got: d.rows() * d.dim(),
            });
        }
    }
    Ok(())
}

/// Quotas for drawing in `spec.mode`.
pub fn plan(tree: &ClusterTree, spec: &SampleSpec) -> Result<SamplePlan> {
    check_inputs(tree, None)?;
    if spec.target > tree.n {
        return Err(Error::Argument(format!(
            "target {} exceeds pool size {}",
            spec.target, tree.n
        )));
    }
    let top = tree.depth();
    let top_counts = tree.leaf_counts(top)?;
    let cap = allocate(spec.target, &top_counts);
    let mut quotas: Vec<usize> = top_counts.iter().map(|&s| s.min(cap)).collect();
    let level = match spec.mode {
        Mode::Flat => top,
        Mode::Hierarchical => {
            for t in (2..=top).rev() {
                let child_counts = tree.leaf_counts(t - 1)?;
                let children = tree.children(t)?;
                let mut below = vec![0usize; child_counts.len()];
                for (j, kids) in children.iter().enumerate() {
                    let sizes: Vec<usize> = kids.iter().map(|&c| child_counts[c as usize]).collect();
                    let cap = allocate(quotas[j], &sizes);
                    for &c in kids {
                        below[c as usize] = child_counts[c as usize].min(cap);
                    }
                }
                quotas = below;
            }
            1
        }
    };
    let total = quotas.iter().sum();
    Ok(SamplePlan { level, quotas, total })
}

/// Draws the planned quotas. Strategies "c" and "f" measure distance to the
/// centroid of the cluster being drawn from and therefore need `data`.
pub fn sample(tree: &ClusterTree, data: Option<&Matrix>, spec: &SampleSpec) -> Result<Vec<u64>> {
    check_inputs(tree, data)?;
    let plan = plan(tree, spec)?;
    let leaves = tree.leaves_by_node(plan.level)?;
    let centroids = &tree.level(plan.level).centroids;
    let picks: Vec<Vec<u32>> = leaves
        .par_iter()
        .zip(plan.quotas.par_iter())
        .enumerate()
        .map(|(j, (l, &q))| draw(l, q, centroids.row(j), data, spec.strategy, spec.seed))
        .collect::<Result<_>>()?;
    let mut out: Vec<u64> = picks.into_iter().flatten().map(u64::from).collect();
    out.sort_unstable();
    Ok(out)
}

/// A fixed number of leaves from every top-level subtree.
pub fn flat_sample(tree: &ClusterTree, data: Option<&Matrix>, spec: &SampleSpec) -> Result<Vec<u64>> {
    sample(
        tree,
        data,
        &SampleSpec {
            mode: Mode::Flat,
            ..*spec
        },
    )
}

/// Quotas split top-down with [`allocate`] at every level, drawn from level-1 clusters.
pub fn hierarchical_sample(tree: &ClusterTree, data: Option<&Matrix>, spec: &SampleSpec) -> Result<Vec<u64>> {
    sample(
        tree,
        data,
        &SampleSpec {
            mode: Mode::Hierarchical,
            ..*spec
        },
    )
}
