//! The cluster hierarchy and its on-disk form.
//!
//! A tree is written as a TOML manifest plus two raw little-endian arrays per
//! level that sit next to it:
//!
//! ```text
//! tree.toml                  manifest (format, version, n, dim, per-level metadata + sha256)
//! tree.l1.centroids.f32      k_1 × dim f32, row-major
//! tree.l1.assign.u32         n u32
//! tree.l2.centroids.f32      k_2 × dim f32
//! tree.l2.assign.u32         k_1 u32
//! ...
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{sha256_hex, Matrix};
use crate::error::{Error, Result};

pub const TREE_FORMAT: &str = "hikm-tree";
pub const TREE_VERSION: u32 = 1;

/// One level of the hierarchy: `k` centroids and the assignment of every
/// input item (points for level 1, previous-level centroids above) to them.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub centroids: Matrix,
    pub assignment: Vec<u32>,
}

impl Level {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn inputs(&self) -> usize {
        self.assignment.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTree {
    pub n: usize,
    pub dim: usize,
    /// Levels bottom-up: `levels[0]` clusters the data points.
    pub levels: Vec<Level>,
    /// Checksum of the dataset the tree was built from, when known.
    pub data_checksum: Option<String>,
}

impl ClusterTree {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Level `t`, 1-based.
    pub fn level(&self, t: usize) -> &Level {
        &self.levels[t - 1]
    }

    pub fn top(&self) -> &Level {
        self.levels.last().expect("tree has at least one level")
    }

    fn check_level(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.depth() {
            return Err(Error::Argument(format!("level {t} outside 1..={}", self.depth())));
        }
        Ok(())
    }

    /// For every data point, the index of the level-`t` node above it.
    pub fn point_to_node(&self, t: usize) -> Result<Vec<u32>> {
        self.check_level(t)?;
        let mut map = self.levels[0].assignment.clone();
        for lvl in &self.levels[1..t] {
            for m in map.iter_mut() {
                *m = lvl.assignment[*m as usize];
            }
        }
        Ok(map)
    }

    /// Sorted point indices under each node of level `t`.
    pub fn leaves_by_node(&self, t: usize) -> Result<Vec<Vec<u32>>> {
        let map = self.point_to_node(t)?;
        let mut out = vec![Vec::new(); self.level(t).k()];
        for (i, &j) in map.iter().enumerate() {
            out[j as usize].push(i as u32);
        }
        Ok(out)
    }

    /// Level-(t−1) children of each level-`t` node, ascending. For `t = 1` these are points.
    pub fn children(&self, t: usize) -> Result<Vec<Vec<u32>>> {
        self.check_level(t)?;
        let lvl = self.level(t);
        let mut out = vec![Vec::new(); lvl.k()];
        for (c, &p) in lvl.assignment.iter().enumerate() {
            out[p as usize].push(c as u32);
        }
        Ok(out)
    }

    /// Number of data points under every node of level `t`.
    pub fn leaf_counts(&self, t: usize) -> Result<Vec<usize>> {
        self.check_level(t)?;
        let mut counts = vec![0usize; self.levels[0].k()];
        for &a in &self.levels[0].assignment {
            counts[a as usize] += 1;
        }
        for lvl in &self.levels[1..t] {
            let mut up = vec![0usize; lvl.k()];
            for (c, &p) in lvl.assignment.iter().enumerate() {
                up[p as usize] += counts[c];
            }
            counts = up;
        }
        Ok(counts)
    }

    pub fn subtree_leaf_count(&self, t: usize, node: usize) -> Result<usize> {
        self.check_level(t)?;
        let counts = self.leaf_counts(t)?;
        counts
            .get(node)
            .copied()
            .ok_or_else(|| Error::Argument(format!("node {node} outside level {t} with {} nodes", counts.len())))
    }

    /// Structural checks: shapes chain, indices in range, no empty clusters,
    /// non-increasing k.
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Tree("no levels".into()));
        }
        let mut inputs = self.n;
        let mut prev_k = usize::MAX;
        for (t, lvl) in self.levels.iter().enumerate() {
            let t = t + 1;
            let k = lvl.k();
            if lvl.centroids.dim() != self.dim {
                return Err(Error::Tree(format!(
                    "level {t}: centroid dim {} != {}",
                    lvl.centroids.dim(),
                    self.dim
                )));
            }
            if lvl.inputs() != inputs {
                return Err(Error::Tree(format!(
                    "level {t}: {} assignments for {inputs} inputs",
                    lvl.inputs()
                )));
            }
            if k == 0 || k > prev_k {
                return Err(Error::Tree(format!("level {t}: k={k} breaks non-increasing schedule")));
            }
            let mut seen = vec![false; k];
            for (item, &a) in lvl.assignment.iter().enumerate() {
                let a = a as usize;
                if a >= k {
                    return Err(Error::InvalidAssignment { item, index: a, k });
                }
                seen[a] = true;
            }
            if let Some(j) = seen.iter().position(|s| !s) {
                return Err(Error::Tree(format!("level {t}: cluster {j} is empty")));
            }
            if let Some((row, col)) = lvl.centroids.first_non_finite() {
                return Err(Error::Tree(format!(
                    "level {t}: non-finite centroid value at ({row}, {col})"
                )));
            }
            inputs = k;
            prev_k = k;
        }
        Ok(())
    }

    pub fn save(&self, manifest_path: impl AsRef<Path>) -> Result<()> {
        let manifest_path = manifest_path.as_ref();
        for (name, bytes) in self.sibling_files(manifest_path)? {
            let p = sibling(manifest_path, &name);
            fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        }
        let text = self.manifest_text(manifest_path)?;
        fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))
    }

    /// Binary payload files as `(file name, bytes)`, named after the manifest stem.
    pub fn sibling_files(&self, manifest_path: &Path) -> Result<Vec<(String, Vec<u8>)>> {
        let stem = stem_of(manifest_path)?;
        let mut out = Vec::with_capacity(2 * self.depth());
        for (t, lvl) in self.levels.iter().enumerate() {
            let t = t + 1;
            out.push((
                format!("{stem}.l{t}.centroids.f32"),
                f32_bytes(lvl.centroids.as_slice()),
            ));
            out.push((format!("{stem}.l{t}.assign.u32"), u32_bytes(&lvl.assignment)));
        }
        Ok(out)
    }

    pub fn manifest_text(&self, manifest_path: &Path) -> Result<String> {
        self.validate()?;
        let stem = stem_of(manifest_path)?;
        let levels = self
            .levels
            .iter()
            .enumerate()
            .map(|(t, lvl)| {
                let t = t + 1;
                LevelManifest {
                    k: lvl.k() as u64,
                    inputs: lvl.inputs() as u64,
                    centroids: format!("{stem}.l{t}.centroids.f32"),
                    centroids_sha256: sha256_hex(&f32_bytes(lvl.centroids.as_slice())),
                    assignment: format!("{stem}.l{t}.assign.u32"),
                    assignment_sha256: sha256_hex(&u32_bytes(&lvl.assignment)),
                }
            })
            .collect();
        let m = TreeManifest {
            format: TREE_FORMAT.into(),
            version: TREE_VERSION,
            n: self.n as u64,
            dim: self.dim as u64,
            data_sha256: self.data_checksum.clone(),
            levels,
        };
        toml::to_string(&m).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let manifest_path = manifest_path.as_ref();
        let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let m: TreeManifest = toml::from_str(&text).map_err(|e| Error::Format(format!("tree manifest: {e}")))?;
        if m.format != TREE_FORMAT {
            return Err(Error::Format(format!("unknown tree format {:?}", m.format)));
        }
        if m.version != TREE_VERSION {
            return Err(Error::Version {
                expected: TREE_VERSION,
                found: m.version,
            });
        }
        let dim = m.dim as usize;
        let mut levels = Vec::with_capacity(m.levels.len());
        for (t, lm) in m.levels.iter().enumerate() {
            let cbytes = read_checked(manifest_path, &lm.centroids, &lm.centroids_sha256)?;
            let abytes = read_checked(manifest_path, &lm.assignment, &lm.assignment_sha256)?;
            let k = lm.k as usize;
            if cbytes.len() != 4 * k * dim {
                return Err(Error::Tree(format!(
                    "level {}: centroid file holds {} bytes, expected {}",
                    t + 1,
                    cbytes.len(),
                    4 * k * dim
                )));
            }
            if abytes.len() != 4 * lm.inputs as usize {
                return Err(Error::Tree(format!(
                    "level {}: assignment file holds {} bytes, expected {}",
                    t + 1,
                    abytes.len(),
                    4 * lm.inputs
                )));
            }
            let centroids = Matrix::new(
                k,
                dim,
                cbytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )?;
            let assignment = abytes
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            levels.push(Level { centroids, assignment });
        }
        let tree = ClusterTree {
            n: m.n as usize,
            dim,
            levels,
            data_checksum: m.data_sha256,
        };
        tree.validate()?;
        Ok(tree)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeManifest {
    format: String,
    version: u32,
    n: u64,
    dim: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data_sha256: Option<String>,
    levels: Vec<LevelManifest>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelManifest {
    k: u64,
    inputs: u64,
    centroids: String,
    centroids_sha256: String,
    assignment: String,
    assignment_sha256: String,
}

fn stem_of(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| Error::Argument(format!("bad tree path {}", path.display())))
}

pub fn sibling(manifest_path: &Path, name: &str) -> PathBuf {
    manifest_path
        .parent()
        .map(|p| p.join(name))
        .unwrap_or_else(|| PathBuf::from(name))
}

fn read_checked(manifest_path: &Path, name: &str, sha: &str) -> Result<Vec<u8>> {
    if name.contains('/') || name.contains('\\') {
        return Err(Error::Format(format!("payload name {name:?} must be a bare file name")));
    }
    let p = sibling(manifest_path, name);
    let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    if sha256_hex(&bytes) != sha {
        return Err(Error::Checksum(name.to_owned()));
    }
    Ok(bytes)
}

fn f32_bytes(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn u32_bytes(v: &[u32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 5 points, level 1 k=3, level 2 k=2.
    pub(crate) fn small_tree() -> ClusterTree {
        ClusterTree {
            n: 5,
            dim: 1,
            levels: vec![
                Level {
                    centroids: Matrix::new(3, 1, vec![0.0, 1.0, 5.0]).unwrap(),
                    assignment: vec![0, 0, 1, 2, 2],
                },
                Level {
                    centroids: Matrix::new(2, 1, vec![0.5, 5.0]).unwrap(),
                    assignment: vec![0, 0, 1],
                },
            ],
            data_checksum: None,
        }
    }

    #[test]
    fn leaf_bookkeeping() {
        let t = small_tree();
        assert_eq!(t.leaf_counts(1).unwrap(), vec![2, 1, 2]);
        assert_eq!(t.leaf_counts(2).unwrap(), vec![3, 2]);
        assert_eq!(t.subtree_leaf_count(2, 0).unwrap(), 3);
        assert_eq!(t.leaves_by_node(2).unwrap(), vec![vec![0, 1, 2], vec![3, 4]]);
        assert_eq!(t.children(2).unwrap(), vec![vec![0, 1], vec![2]]);
        assert!(t.subtree_leaf_count(3, 0).is_err());
        assert!(t.subtree_leaf_count(2, 2).is_err());
    }

    #[test]
    fn round_trip_small() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tree.toml");
        let mut t = small_tree();
        t.data_checksum = Some("abc".into());
        t.save(&p).unwrap();
        assert_eq!(ClusterTree::load(&p).unwrap(), t);
    }

    #[test]
    fn out_of_range_assignment_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.toml");
        let t = small_tree();
        t.save(&p).unwrap();
        // Rewrite the level-1 assignment with an index 7 and patch the checksum.
        let bad = u32_bytes(&[0, 0, 1, 7, 2]);
        fs::write(dir.path().join("t.l1.assign.u32"), &bad).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let good_sha = sha256_hex(&u32_bytes(&t.levels[0].assignment));
        fs::write(&p, text.replace(&good_sha, &sha256_hex(&bad))).unwrap();
        match ClusterTree::load(&p) {
            Err(Error::InvalidAssignment { item, index, k }) => assert_eq!((item, index, k), (3, 7, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_and_checksum_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.toml");
        small_tree().save(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        fs::write(&p, text.replace("version = 1", "version = 9")).unwrap();
        assert!(matches!(ClusterTree::load(&p), Err(Error::Version { found: 9, .. })));
        fs::write(&p, &text).unwrap();
        fs::write(dir.path().join("t.l2.assign.u32"), u32_bytes(&[1, 0, 1])).unwrap();
        assert!(matches!(ClusterTree::load(&p), Err(Error::Checksum(_))));
    }

    #[test]
    fn validate_catches_empty_cluster() {
        let mut t = small_tree();
        t.levels[0].assignment = vec![0, 0, 0, 2, 2];
        assert!(matches!(t.validate(), Err(Error::Tree(_))));
    }
}
