//! Bottom-up hierarchical k-means with resampling-clustering.
//!
//! Level `t` clusters its input (the points for `t = 1`, the level-`t−1`
//! centroids otherwise) into `k_t` groups. Each resampling step then keeps the
//! `r_t` members closest to every centroid, reruns k-means on that subset from a
//! fresh initialization, and reassigns the whole input to the new centroids.

use crate::config::ClusterConfig;
use crate::dataset::{sq_dist, EmbeddingDataset, Matrix};
use crate::error::{Error, Result};
use crate::kmeans::{assign, kmeans_with_rng, KMeansParams};
use crate::rng::init_rng;
use crate::tree::{ClusterTree, Level};

/// The `min(r, |members|)` members nearest to `centroid`, returned in ascending index order.
pub fn resample_cluster(members: &[u32], points: &Matrix, centroid: &[f32], r: usize) -> Vec<u32> {
    if r >= members.len() {
        let mut all = members.to_vec();
        all.sort_unstable();
        return all;
    }
    let mut scored: Vec<(f64, u32)> = members
        .iter()
        .map(|&i| (sq_dist(points.row(i as usize), centroid), i))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<u32> = scored[..r].iter().map(|&(_, i)| i).collect();
    out.sort_unstable();
    out
}

fn group_members(assignment: &[u32], k: usize) -> Vec<Vec<u32>> {
    let mut groups = vec![Vec::new(); k];
    for (i, &a) in assignment.iter().enumerate() {
        groups[a as usize].push(i as u32);
    }
    groups
}

/// Builds the tree level by level. Level `t` uses initialization stream
/// `(t, 0)` for its first k-means and `(t, s)` for resampling step `s`.
pub fn build_hierarchy(data: &EmbeddingDataset, cfg: &ClusterConfig) -> Result<ClusterTree> {
    cfg.validate_for(data.n())?;
    let mut levels: Vec<Level> = Vec::with_capacity(cfg.levels);
    for t in 1..=cfg.levels {
        let input: &Matrix = match levels.last() {
            None => data.matrix(),
            Some(prev) => &prev.centroids,
        };
        let k = cfg.k[t - 1];
        if k > input.rows() {
            return Err(Error::KExceedsInput {
                level: t,
                k,
                input: input.rows(),
            });
        }
        let params = KMeansParams {
            k,
            init: cfg.init,
            max_iters: cfg.max_iters,
            tol: cfg.tol,
            n_init: 1,
        };
        let first = kmeans_with_rng(input, &params, &mut init_rng(cfg.seed, t, 0))?;
        let mut centroids = first.centroids;
        let mut assignment = first.assignment;

        if cfg.resamples_level(t) {
            let r = cfg.resample_count(t, input.rows());
            for step in 1..=cfg.m {
                let groups = group_members(&assignment, k);
                let mut subset: Vec<u32> = groups
                    .iter()
                    .enumerate()
                    .flat_map(|(j, g)| resample_cluster(g, input, centroids.row(j), r))
                    .collect();
                subset.sort_unstable();
                if subset.len() < k {
                    return Err(Error::Degenerate(format!(
                        "level {t} step {step}: resampled set of {} items for k={k}",
                        subset.len()
                    )));
                }
                let sub = input.select_rows(&subset);
                let res = kmeans_with_rng(&sub, &params, &mut init_rng(cfg.seed, t, step))?;
                centroids = res.centroids;
                assignment = assign(input, &centroids)?;
            }
        }

        ensure_nonempty(input, &mut centroids, &mut assignment)?;
        levels.push(Level { centroids, assignment });
    }
    let tree = ClusterTree {
        n: data.n(),
        dim: data.d(),
        levels,
        data_checksum: Some(data.checksum()),
    };
    tree.validate()?;
    Ok(tree)
}

/// Reassignment of the full input can leave a centroid without members only when
/// inputs repeat. Such a centroid is moved onto the input farthest from its own
/// centroid, taken from a cluster with at least two members.
fn ensure_nonempty(input: &Matrix, centroids: &mut Matrix, assignment: &mut [u32]) -> Result<()> {
    let k = centroids.rows();
    let mut sizes = vec![0usize; k];
    for &a in assignment.iter() {
        sizes[a as usize] += 1;
    }
    for e in 0..k {
        if sizes[e] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, &a) in assignment.iter().enumerate() {
            if sizes[a as usize] < 2 {
                continue;
            }
            let d = sq_dist(input.row(i), centroids.row(a as usize));
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let Some((p, _)) = best else {
            return Err(Error::Degenerate(format!(
                "cannot fill empty cluster {e}: fewer distinct inputs than clusters"
            )));
        };
        sizes[assignment[p] as usize] -= 1;
        assignment[p] = e as u32;
        sizes[e] = 1;
        centroids.row_mut(e).copy_from_slice(input.row(p));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kmeans::kmeans;

    #[test]
    fn resample_saturation_and_single() {
        let pts = Matrix::from_rows(&[[0.0f32], [3.0], [1.0], [2.0]]).unwrap();
        let members = [3u32, 0, 2];
        assert_eq!(resample_cluster(&members, &pts, &[0.0], 5), vec![0, 2, 3]);
        assert_eq!(resample_cluster(&members, &pts, &[1.9], 1), vec![3]);
    }

    #[test]
    fn resample_picks_nearest_by_sorted_distance() {
        // Members at distances 0.3, 0.1, 0.4, 0.2 from the origin.
        let pts = Matrix::from_rows(&[[0.3f32], [0.1], [-0.4], [-0.2]]).unwrap();
        let members = [0u32, 1, 2, 3];
        let got = resample_cluster(&members, &pts, &[0.0], 2);
        // oracle: sort by distance
        let mut by_dist: Vec<(f32, u32)> = members.iter().map(|&i| (pts.row(i as usize)[0].abs(), i)).collect();
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut expect: Vec<u32> = by_dist[..2].iter().map(|p| p.1).collect();
        expect.sort();
        assert_eq!(got, expect);
        assert_eq!(got, vec![1, 3]);
    }

    #[test]
    fn resample_ties_prefer_lower_index() {
        let pts = Matrix::from_rows(&[[1.0f32], [-1.0], [1.0]]).unwrap();
        assert_eq!(resample_cluster(&[2, 1, 0], &pts, &[0.0], 2), vec![0, 1]);
    }

    #[test]
    fn single_level_without_resampling_is_plain_kmeans() {
        let rows: Vec<[f32; 2]> = (0..60)
            .map(|i| [((i * 37) % 17) as f32 * 0.3, ((i * 11) % 13) as f32 * 0.2])
            .collect();
        let data = EmbeddingDataset::from_rows(&rows).unwrap();
        let cfg = ClusterConfig::new(vec![5]).with_seed(21);
        let tree = build_hierarchy(&data, &cfg).unwrap();
        let flat = kmeans(data.matrix(), &KMeansParams::new(5), 21).unwrap();
        assert_eq!(tree.levels[0].centroids, flat.centroids);
        assert_eq!(tree.levels[0].assignment, flat.assignment);
    }

    #[test]
    fn k_larger_than_input_is_rejected() {
        let data = EmbeddingDataset::from_rows(&[[0.0f32], [1.0], [2.0]]).unwrap();
        assert!(matches!(
            build_hierarchy(&data, &ClusterConfig::new(vec![4])),
            Err(Error::KExceedsInput { .. })
        ));
    }

    #[test]
    fn duplicate_centroids_get_filled() {
        let input = Matrix::from_rows(&[[0.0f32], [0.0], [5.0], [6.0]]).unwrap();
        let mut c = Matrix::from_rows(&[[0.0f32], [0.0], [5.5]]).unwrap();
        let mut a = assign(&input, &c).unwrap();
        assert_eq!(a, vec![0, 0, 2, 2]);
        ensure_nonempty(&input, &mut c, &mut a).unwrap();
        assert!(a.contains(&1));
    }
    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn every_level_partitions_the_points(
                coords in prop::collection::vec((-100i16..100, -100i16..100), 30..120),
                k1 in 6usize..15,
                k2 in 2usize..6,
                m in 0usize..3,
                resample_all in any::<bool>(),
                seed in any::<u64>(),
            ) {
                let rows: Vec<[f32; 2]> = coords.iter().map(|&(x, y)| [x as f32 * 0.05, y as f32 * 0.05]).collect();
                let data = EmbeddingDataset::from_rows(&rows).unwrap();
                let mut cfg = ClusterConfig::new(vec![k1, k2]).with_resampling(m).with_seed(seed);
                cfg.resample_all = resample_all;
                let tree = match build_hierarchy(&data, &cfg) {
                    Ok(t) => t,
                    Err(Error::Degenerate(_)) => return Ok(()),
                    Err(e) => panic!("{e}"),
                };
                tree.validate().unwrap();
                prop_assert_eq!(tree.levels[0].k(), k1);
                prop_assert_eq!(tree.levels[1].k(), k2);
                for t in 1..=2 {
                    let mut all: Vec<u32> = tree.leaves_by_node(t).unwrap().concat();
                    all.sort_unstable();
                    prop_assert_eq!(all, (0..rows.len() as u32).collect::<Vec<_>>());
                    prop_assert_eq!(tree.leaf_counts(t).unwrap().iter().sum::<usize>(), rows.len());
                }
                // refinement: each level-2 leaf set is the union of its children's leaf sets
                let lower = tree.leaves_by_node(1).unwrap();
                for (j, kids) in tree.children(2).unwrap().iter().enumerate() {
                    let mut union: Vec<u32> = kids.iter().flat_map(|&c| lower[c as usize].clone()).collect();
                    union.sort_unstable();
                    prop_assert_eq!(&union, &tree.leaves_by_node(2).unwrap()[j]);
                }
            }
        }
    }
}
