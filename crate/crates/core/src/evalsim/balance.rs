//! How top-level clusters split across labeled classes.
//!
//! Each top-level centroid is given the majority label of its `knn_k` nearest
//! data points. Per class we then count attributed clusters and average their
//! leaf counts, and fit straight lines of both against class size.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dataset::{sq_dist, Matrix};
use crate::error::{Error, Result};
use crate::tree::ClusterTree;

pub const DEFAULT_KNN: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassBalance {
    pub class_id: u32,
    pub class_size: usize,
    pub cluster_count: usize,
    /// `None` when no cluster was attributed to the class.
    pub mean_cluster_size: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceStats {
    pub classes: Vec<ClassBalance>,
    /// Label given to each top-level cluster.
    pub attribution: Vec<u32>,
    /// cluster count against class size
    pub count_fit: Option<LineFit>,
    /// mean cluster size against class size, over classes that have clusters
    pub size_fit: Option<LineFit>,
}

/// Ordinary least squares `y = intercept + slope · x`; `None` for fewer than
/// two points or constant `x`.
pub fn fit_line(points: &[(f64, f64)]) -> Option<LineFit> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
    })
}

/// Majority label among the `knn_k` points nearest to `centroid`; ties go to the lowest label.
fn attribute(data: &Matrix, labels: &[u32], centroid: &[f32], knn_k: usize) -> u32 {
    let mut scored: Vec<(f64, usize)> = (0..data.rows()).map(|i| (sq_dist(data.row(i), centroid), i)).collect();
    let k = knn_k.min(scored.len());
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
    }
    let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
    for &(_, i) in &scored[..k] {
        *votes.entry(labels[i]).or_insert(0) += 1;
    }
    // BTreeMap iterates labels in ascending order, so max_by keeps the lowest on ties
    votes
        .into_iter()
        .fold(
            (u32::MAX, 0usize),
            |best, (l, c)| if c > best.1 { (l, c) } else { best },
        )
        .0
}

pub fn balance_stats(data: &Matrix, tree: &ClusterTree, labels: &[u32], knn_k: usize) -> Result<BalanceStats> {
    if labels.len() != data.rows() || data.rows() != tree.n {
        return Err(Error::DimensionMismatch {
            expected: tree.n,
            got: labels.len(),
        });
    }
    if knn_k == 0 {
        return Err(Error::Argument("knn_k must be >= 1".into()));
    }
    let top = tree.top();
    let leaf_counts = tree.leaf_counts(tree.depth())?;
    let attribution: Vec<u32> = (0..top.k())
        .into_par_iter()
        .map(|j| attribute(data, labels, top.centroids.row(j), knn_k))
        .collect();

    let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
    for &l in labels {
        *sizes.entry(l).or_insert(0) += 1;
    }
    let mut per_class: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (j, &l) in attribution.iter().enumerate() {
        let e = per_class.entry(l).or_insert((0, 0));
        e.0 += 1;
        e.1 += leaf_counts[j];
    }
    let classes: Vec<ClassBalance> = sizes
        .iter()
        .map(|(&class_id, &class_size)| {
            let (count, leaves) = per_class.get(&class_id).copied().unwrap_or((0, 0));
            ClassBalance {
                class_id,
                class_size,
                cluster_count: count,
                mean_cluster_size: (count > 0).then(|| leaves as f64 / count as f64),
            }
        })
        .collect();
    let count_pts: Vec<(f64, f64)> = classes
        .iter()
        .map(|c| (c.class_size as f64, c.cluster_count as f64))
        .collect();
    let size_pts: Vec<(f64, f64)> = classes
        .iter()
        .filter_map(|c| c.mean_cluster_size.map(|m| (c.class_size as f64, m)))
        .collect();
    Ok(BalanceStats {
        count_fit: fit_line(&count_pts),
        size_fit: fit_line(&size_pts),
        classes,
        attribution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Level;

    #[test]
    fn line_fit_exact_and_degenerate() {
        let f = fit_line(&[(1.0, 3.0), (3.0, 7.0)]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!(fit_line(&[(1.0, 3.0)]).is_none());
        assert!(fit_line(&[(1.0, 3.0), (1.0, 4.0)]).is_none());
    }

    #[test]
    fn two_separated_blobs() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..6 {
            rows.push([i as f32 * 0.1, 0.0]);
            labels.push(0);
        }
        for i in 0..3 {
            rows.push([10.0 + i as f32 * 0.1, 0.0]);
            labels.push(1);
        }
        let data = Matrix::from_rows(&rows).unwrap();
        let tree = ClusterTree {
            n: 9,
            dim: 2,
            levels: vec![Level {
                centroids: Matrix::from_rows(&[[10.1f32, 0.0], [0.25, 0.0]]).unwrap(),
                assignment: vec![1, 1, 1, 1, 1, 1, 0, 0, 0],
            }],
            data_checksum: None,
        };
        let s = balance_stats(&data, &tree, &labels, 3).unwrap();
        assert_eq!(s.attribution, vec![1, 0]);
        assert_eq!(s.classes[0].cluster_count, 1);
        assert_eq!(s.classes[1].cluster_count, 1);
        assert_eq!(s.classes[0].mean_cluster_size, Some(6.0));
        let f = s.count_fit.unwrap();
        assert!(f.slope.abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        let g = s.size_fit.unwrap();
        assert!((g.slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn class_without_clusters_is_flagged() {
        let data = Matrix::from_rows(&[[0.0f32], [0.1], [5.0]]).unwrap();
        let tree = ClusterTree {
            n: 3,
            dim: 1,
            levels: vec![Level {
                centroids: Matrix::from_rows(&[[0.05f32]]).unwrap(),
                assignment: vec![0, 0, 0],
            }],
            data_checksum: None,
        };
        let s = balance_stats(&data, &tree, &[0, 0, 1], 2).unwrap();
        assert_eq!(s.classes[1].cluster_count, 0);
        assert_eq!(s.classes[1].mean_cluster_size, None);
    }

    #[test]
    fn vote_ties_pick_lowest_label() {
        let data = Matrix::from_rows(&[[1.0f32], [-1.0], [9.0]]).unwrap();
        assert_eq!(attribute(&data, &[4, 2, 2], &[0.0], 2), 2);
        assert_eq!(attribute(&data, &[1, 3, 3], &[0.0], 2), 1);
    }
}
