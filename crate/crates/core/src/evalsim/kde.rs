//! Gaussian kernel density on a regular grid, and its KL divergence from uniform.

use rayon::prelude::*;

use crate::dataset::Matrix;
use crate::error::{Error, Result};

/// Densities are floored at this value before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Support {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn contains(&self, x: &[f32]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&l, &h))| (v as f64) >= l && (v as f64) <= h)
    }
}

/// Density values at cell centers, last axis varying fastest.
/// `Σ values × cell_volume = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub support: Support,
    pub resolution: usize,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn cell_volume(&self) -> f64 {
        self.support.volume() / (self.resolution.pow(self.support.dim() as u32)) as f64
    }

    /// Center of cell `flat` (row-major index).
    pub fn cell_center(&self, flat: usize) -> Vec<f64> {
        cell_center(&self.support, self.resolution, flat)
    }

    /// The uniform density over the support.
    pub fn uniform(support: Support, resolution: usize) -> Self {
        let cells = resolution.pow(support.dim() as u32);
        let u = 1.0 / support.volume();
        Self {
            support,
            resolution,
            values: vec![u; cells],
        }
    }

    /// Builds a grid from raw non-negative values, rescaling to unit mass.
    pub fn from_values(support: Support, resolution: usize, mut values: Vec<f64>) -> Result<Self> {
        let cells = resolution.pow(support.dim() as u32);
        if values.len() != cells {
            return Err(Error::DimensionMismatch {
                expected: cells,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Argument("density values must be finite and >= 0".into()));
        }
        let cell = support.volume() / cells as f64;
        let mass: f64 = values.iter().sum::<f64>() * cell;
        if !(mass > 0.0) {
            return Err(Error::Argument("density has zero mass".into()));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Ok(Self {
            support,
            resolution,
            values,
        })
    }

    /// Swaps axes `a` and `b`.
    pub fn transpose(&self, a: usize, b: usize) -> Self {
        let dim = self.support.dim();
        let r = self.resolution;
        let mut support = self.support.clone();
        support.lo.swap(a, b);
        support.hi.swap(a, b);
        let mut values = vec![0.0; self.values.len()];
        for (flat, &v) in self.values.iter().enumerate() {
            let mut idx = unflatten(flat, r, dim);
            idx.swap(a, b);
            values[flatten(&idx, r)] = v;
        }
        Self {
            support,
            resolution: r,
            values,
        }
    }
}

fn unflatten(mut flat: usize, r: usize, dim: usize) -> Vec<usize> {
    let mut idx = vec![0; dim];
    for i in (0..dim).rev() {
        idx[i] = flat % r;
        flat /= r;
    }
    idx
}

fn flatten(idx: &[usize], r: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * r + i)
}

fn cell_center(support: &Support, r: usize, flat: usize) -> Vec<f64> {
    let idx = unflatten(flat, r, support.dim());
    idx.iter()
        .enumerate()
        .map(|(a, &i)| {
            let w = (support.hi[a] - support.lo[a]) / r as f64;
            support.lo[a] + (i as f64 + 0.5) * w
        })
        .collect()
}

/// Scott's rule: `n^(−1/(dim+4))` times the mean per-axis standard deviation.
pub fn scott_bandwidth(points: &Matrix) -> f64 {
    let n = points.rows() as f64;
    let dim = points.dim();
    let mut stds = 0.0;
    for a in 0..dim {
        let mean = points.iter_rows().map(|r| r[a] as f64).sum::<f64>() / n;
        let var = points.iter_rows().map(|r| (r[a] as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        stds += var.sqrt();
    }
    scott_factor(points.rows(), dim) * stds / dim as f64
}

pub fn scott_factor(n: usize, dim: usize) -> f64 {
    (n as f64).powf(-1.0 / (dim as f64 + 4.0))
}

/// Isotropic Gaussian KDE evaluated at the cell centers and renormalized over the support.
pub fn kde(points: &Matrix, bandwidth: f64, resolution: usize, support: &Support) -> Result<DensityGrid> {
    if points.rows() == 0 {
        return Err(Error::Argument("kde needs at least one point".into()));
    }
    if points.dim() != support.dim() {
        return Err(Error::DimensionMismatch {
            expected: support.dim(),
            got: points.dim(),
        });
    }
    if !(bandwidth > 0.0) || resolution == 0 {
        return Err(Error::Argument(format!(
            "bandwidth {bandwidth} and resolution {resolution} must be positive"
        )));
    }
    if let Some(i) = (0..points.rows()).find(|&i| !support.contains(points.row(i))) {
        return Err(Error::Argument(format!("point {i} lies outside the support")));
    }
    let cells = resolution.pow(support.dim() as u32);
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let values: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|flat| {
            let c = cell_center(support, resolution, flat);
            points
                .iter_rows()
                .map(|p| {
                    let d2: f64 = p.iter().zip(&c).map(|(&x, &y)| (x as f64 - y).powi(2)).sum();
                    (-d2 * inv).exp()
                })
                .sum::<f64>()
        })
        .collect();
    DensityGrid::from_values(support.clone(), resolution, values)
}

/// `Σ_cells p · vol · ln(p / u)` with `u = 1 / vol(support)`.
pub fn kl_to_uniform(density: &DensityGrid) -> f64 {
    let cell = density.cell_volume();
    let ln_u = -density.support.volume().ln();
    let kl: f64 = density
        .values
        .iter()
        .map(|&p| {
            let q = p.max(LOG_FLOOR);
            p * cell * (q.ln() - ln_u)
        })
        .sum();
    kl.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Support {
        Support::cube(2, -3.0, 3.0)
    }

    #[test]
    fn normalization() {
        let pts = Matrix::from_rows(&[[0.5f32, -1.0], [2.0, 2.0]]).unwrap();
        let g = kde(&pts, 0.4, 40, &square()).unwrap();
        let mass: f64 = g.values.iter().sum::<f64>() * g.cell_volume();
        assert!((mass - 1.0).abs() < 1e-9);
        assert!(g.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn single_point_peaks_at_center() {
        let pts = Matrix::from_rows(&[[0.0f32, 0.0]]).unwrap();
        let g = kde(&pts, 0.5, 21, &square()).unwrap();
        let arg = g.values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(arg, 10 * 21 + 10);
        assert_eq!(g.cell_center(arg), vec![0.0, 0.0]);
    }

    #[test]
    fn two_points_give_symmetric_peaks() {
        let pts = Matrix::from_rows(&[[-2.0f32, 0.0], [2.0, 0.0]]).unwrap();
        let g = kde(&pts, 0.3, 30, &square()).unwrap();
        // cells centered at x = ∓2.1 (i = 4 and 25), y = -0.1 (j = 14)
        let left = g.values[4 * 30 + 14];
        let right = g.values[25 * 30 + 14];
        assert!((left - right).abs() < 1e-12 * left.max(1.0));
        let middle = g.values[15 * 30 + 14];
        assert!(left > 100.0 * middle);
    }

    #[test]
    fn lattice_with_wide_bandwidth_is_flat() {
        let mut rows = Vec::new();
        for i in 0..12 {
            for j in 0..12 {
                rows.push([-2.75 + 0.5 * i as f32, -2.75 + 0.5 * j as f32]);
            }
        }
        let pts = Matrix::from_rows(&rows).unwrap();
        let h = 8.0;
        let g = kde(&pts, h, 20, &square()).unwrap();
        // direct evaluation oracle at the cell centers
        let eval = |c: &[f64]| -> f64 {
            rows.iter()
                .map(|p| (-((p[0] as f64 - c[0]).powi(2) + (p[1] as f64 - c[1]).powi(2)) / (2.0 * h * h)).exp())
                .sum()
        };
        let direct: Vec<f64> = (0..400).map(|f| eval(&g.cell_center(f))).collect();
        let scale = g.values[0] / direct[0];
        for (v, d) in g.values.iter().zip(&direct) {
            assert!((v - d * scale).abs() < 1e-9 * v);
        }
        let mx = g.values.iter().cloned().fold(f64::MIN, f64::max);
        let mn = g.values.iter().cloned().fold(f64::MAX, f64::min);
        assert!(mx / mn <= 1.2, "{mx} / {mn}");
    }

    #[test]
    fn kl_uniform_is_zero_and_axis_symmetric() {
        let u = DensityGrid::uniform(square(), 50);
        assert!(kl_to_uniform(&u).abs() < 1e-9);
        let pts = Matrix::from_rows(&[[1.0f32, -2.0], [1.5, -2.5], [0.3, 0.1]]).unwrap();
        let g = kde(&pts, 0.5, 30, &square()).unwrap();
        let t = g.transpose(0, 1);
        assert!((kl_to_uniform(&g) - kl_to_uniform(&t)).abs() < 1e-12);
        assert!(kl_to_uniform(&g) > 0.0);
    }

    #[test]
    fn errors() {
        let empty = Matrix::zeros(0, 2);
        assert!(kde(&empty, 0.3, 10, &square()).is_err());
        let out = Matrix::from_rows(&[[4.0f32, 0.0]]).unwrap();
        assert!(kde(&out, 0.3, 10, &square()).is_err());
    }
}
