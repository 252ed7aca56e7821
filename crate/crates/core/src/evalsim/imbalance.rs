use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, Normal};

use crate::dataset::{EmbeddingDataset, Matrix};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

use super::keys;

/// Target size of the class at 1-based `rank`: `⌊largest · rank^(−alpha)⌋`.
pub fn power_law_target(largest: usize, rank: usize, alpha: f64) -> usize {
    let t = largest as f64 * (rank as f64).powf(-alpha);
    (t + 1e-9).floor() as usize
}

/// Subsamples classes so their sizes follow a power law.
///
/// Classes are ranked by a seeded random permutation. The class of rank `i`
/// keeps `min(size, ⌊M · i^(−alpha)⌋)` members drawn uniformly without
/// replacement, where `M` is the largest class size, so `alpha = 0` keeps
/// everything. Returns sorted point indices.
pub fn imbalance_resample(labels: &[u32], alpha: f64, seed: u64) -> Result<Vec<u64>> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Argument(format!("alpha={alpha} must be finite and >= 0")));
    }
    let mut classes: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i as u64);
    }
    let largest = classes.values().map(Vec::len).max().unwrap_or(0);
    let mut rng = stream_rng(seed, Stream::Simulation, &[keys::IMBALANCE]);
    let mut order: Vec<u32> = classes.keys().copied().collect();
    order.shuffle(&mut rng);
    let mut out = Vec::new();
    for (rank, class) in order.iter().enumerate() {
        let members = &classes[class];
        let keep = power_law_target(largest, rank + 1, alpha).min(members.len());
        if keep == members.len() {
            out.extend_from_slice(members);
        } else {
            out.extend(
                index::sample(&mut rng, members.len(), keep)
                    .into_iter()
                    .map(|i| members[i]),
            );
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Labeled pool of well-separated Gaussian blobs, one per class.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Distance between neighbouring class centers on a square lattice.
    pub spacing: f64,
    pub sigma: f64,
}

impl PoolSpec {
    /// Enough points per class that a power-law cut with exponent `alpha`
    /// leaves about `total` points.
    pub fn for_total(classes: usize, alpha: f64, total: usize) -> Self {
        let harmonic: f64 = (1..=classes).map(|i| (i as f64).powf(-alpha)).sum();
        Self {
            classes,
            per_class: (total as f64 / harmonic).ceil() as usize,
            dim: 2,
            spacing: 4.0,
            sigma: 0.6,
        }
    }
}

/// Blob centers sit on a square lattice in the first two coordinates.
pub fn blob_pool(spec: &PoolSpec, seed: u64) -> Result<(EmbeddingDataset, Vec<u32>)> {
    if spec.classes == 0 || spec.per_class == 0 || spec.dim == 0 || !(spec.sigma > 0.0) {
        return Err(Error::Argument(format!("invalid pool {spec:?}")));
    }
    let side = (spec.classes as f64).sqrt().ceil() as usize;
    let mut rng = stream_rng(seed, Stream::Simulation, &[keys::POOL]);
    let noise = Normal::new(0.0, spec.sigma).expect("sigma > 0");
    let mut data = Vec::with_capacity(spec.classes * spec.per_class * spec.dim);
    let mut labels = Vec::with_capacity(spec.classes * spec.per_class);
    for c in 0..spec.classes {
        let center = [(c % side) as f64 * spec.spacing, (c / side) as f64 * spec.spacing];
        for _ in 0..spec.per_class {
            for a in 0..spec.dim {
                let base = if a < 2 { center[a] } else { 0.0 };
                data.push((base + noise.sample(&mut rng)) as f32);
            }
            labels.push(c as u32);
        }
    }
    let n = labels.len();
    Ok((EmbeddingDataset::new(Matrix::new(n, spec.dim, data)?)?, labels))
}

/// Blob pool cut to power-law class sizes.
pub fn power_law_pool(spec: &PoolSpec, alpha: f64, seed: u64) -> Result<(EmbeddingDataset, Vec<u32>)> {
    let (full, labels) = blob_pool(spec, seed)?;
    let keep = imbalance_resample(&labels, alpha, seed)?;
    let idx: Vec<u32> = keep.iter().map(|&i| i as u32).collect();
    let data = EmbeddingDataset::new(full.matrix().select_rows(&idx))?;
    let labels = idx.iter().map(|&i| labels[i as usize]).collect();
    Ok((data, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class_sizes(labels: &[u32], keep: &[u64]) -> Vec<usize> {
        let mut sizes = BTreeMap::new();
        for &i in keep {
            *sizes.entry(labels[i as usize]).or_insert(0) += 1;
        }
        let mut v: Vec<usize> = sizes.into_values().collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v
    }

    #[test]
    fn alpha_zero_keeps_everything() {
        let labels: Vec<u32> = (0..250).map(|i| (i % 7) as u32 * (i % 3) as u32).collect();
        let keep = imbalance_resample(&labels, 0.0, 4).unwrap();
        assert_eq!(keep, (0..250).collect::<Vec<u64>>());
    }

    #[test]
    fn alpha_one_three_equal_classes() {
        let labels: Vec<u32> = (0..300).map(|i| (i / 100) as u32).collect();
        let keep = imbalance_resample(&labels, 1.0, 9).unwrap();
        // direct formula: 100 · i^-1 for i = 1, 2, 3
        let expect: Vec<usize> = (1..=3).map(|i| (100.0 / i as f64).floor() as usize).collect();
        assert_eq!(expect, vec![100, 50, 33]);
        assert_eq!(class_sizes(&labels, &keep), expect);
    }

    #[test]
    fn deterministic_per_seed() {
        let labels: Vec<u32> = (0..500).map(|i| (i % 10) as u32).collect();
        let a = imbalance_resample(&labels, 2.0, 1).unwrap();
        assert_eq!(a, imbalance_resample(&labels, 2.0, 1).unwrap());
        assert_ne!(a, imbalance_resample(&labels, 2.0, 2).unwrap());
        assert!(imbalance_resample(&labels, -1.0, 1).is_err());
    }

    #[test]
    fn pool_total_is_near_request() {
        let spec = PoolSpec::for_total(20, 1.0, 20_000);
        let (data, labels) = power_law_pool(&spec, 1.0, 0).unwrap();
        assert_eq!(data.n(), labels.len());
        assert!((data.n() as i64 - 20_000).abs() < 40, "{}", data.n());
        let sizes = class_sizes(&labels, &(0..labels.len() as u64).collect::<Vec<_>>());
        assert_eq!(sizes.len(), 20);
        assert_eq!(sizes[0], spec.per_class);
        assert_eq!(sizes[1], spec.per_class / 2);
    }
}
