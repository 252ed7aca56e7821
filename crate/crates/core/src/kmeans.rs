//! Flat k-means: initialization, Lloyd iterations, and the power-distortion variant.
//!
//! All per-point work (distance to every centroid, nearest-centroid search) runs
//! in parallel over rayon, but every reduction is performed in a fixed order:
//! distortion is summed per fixed-size chunk and the chunk sums are added in
//! chunk order, and centroid sums are accumulated sequentially in point order.
//! Results are therefore bit-identical for any thread count.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::config::{Init, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::dataset::{sq_dist, Matrix};
use crate::error::{Error, Result};
use crate::rng::{init_rng, StreamRng};

/// Points per reduction chunk. Fixed so partial sums do not depend on scheduling.
pub const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Matrix,
    pub assignment: Vec<u32>,
    /// Sum of squared distances to the assigned centroid.
    pub distortion: f64,
    /// Value of the optimized objective `Σ ‖x − c‖^s` (equals `distortion` when s = 2).
    pub objective: f64,
    pub iters_run: usize,
    pub converged: bool,
    /// Objective after initialization and after every iteration.
    pub trace: Vec<f64>,
}

impl KMeansResult {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignment {
            sizes[a as usize] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub init: Init,
    pub max_iters: usize,
    pub tol: f64,
    /// Independent initializations; the run with the lowest distortion wins, earliest on ties.
    pub n_init: usize,
}

impl KMeansParams {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            init: Init::KMeansPP,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            n_init: 1,
        }
    }

    pub fn init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }
}

/// k-means on `data` with the level-1 initialization stream of `seed`.
pub fn kmeans(data: &Matrix, params: &KMeansParams, seed: u64) -> Result<KMeansResult> {
    let mut rng = init_rng(seed, 1, 0);
    kmeans_with_rng(data, params, &mut rng)
}

pub fn kmeans_with_rng(data: &Matrix, params: &KMeansParams, rng: &mut StreamRng) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for _ in 0..params.n_init.max(1) {
        let init = initialize(data, params.k, params.init, rng)?;
        let run = lloyd(data, init, params.max_iters, params.tol)?;
        if best.as_ref().is_none_or(|b| run.distortion < b.distortion) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one run"))
}

pub fn initialize(data: &Matrix, k: usize, init: Init, rng: &mut StreamRng) -> Result<Matrix> {
    match init {
        Init::KMeansPP => kmeanspp_init(data, k, rng),
        Init::Random => random_init(data, k, rng),
    }
}

fn check_k(data: &Matrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Argument("k must be >= 1".into()));
    }
    if k > data.rows() {
        return Err(Error::Argument(format!(
            "k exceeds input size: k={k} > n={}",
            data.rows()
        )));
    }
    Ok(())
}

/// `k` distinct rows drawn uniformly without replacement.
pub fn random_init(data: &Matrix, k: usize, rng: &mut StreamRng) -> Result<Matrix> {
    check_k(data, k)?;
    let picks: Vec<u32> = index::sample(rng, data.rows(), k)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    Ok(data.select_rows(&picks))
}

/// D² seeding: the first row uniformly, each further row with probability
/// proportional to its squared distance to the nearest row already chosen.
///
/// When every remaining row coincides with a chosen one (possible only with
/// duplicates), the next row is drawn uniformly from the rows not yet chosen.
pub fn kmeanspp_init(data: &Matrix, k: usize, rng: &mut StreamRng) -> Result<Matrix> {
    check_k(data, k)?;
    let n = data.rows();
    if k > 1 && (1..n).all(|i| data.row(i) == data.row(0)) {
        return Err(Error::Degenerate(format!(
            "all {n} points are identical, cannot seed {k} centroids"
        )));
    }
    let mut chosen = vec![false; n];
    let mut picks = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    chosen[first] = true;
    picks.push(first as u32);
    let mut d2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| sq_dist(data.row(i), data.row(first)))
        .collect();
    d2[first] = 0.0;

    while picks.len() < k {
        let total = chunked_sum(&d2);
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                if acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` just above the running sum; take the last
            // positive-weight row then.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        picks.push(next as u32);
        let c = data.row(next);
        d2.par_iter_mut().enumerate().for_each(|(i, w)| {
            let d = sq_dist(data.row(i), c);
            if d < *w {
                *w = d;
            }
        });
        d2[next] = 0.0;
    }
    Ok(data.select_rows(&picks))
}

/// Nearest centroid for every row; ties go to the lowest centroid index.
pub fn assign(data: &Matrix, centroids: &Matrix) -> Result<Vec<u32>> {
    Ok(assign_with_distances(data, centroids)?.0)
}

/// Nearest centroid and the squared distance to it, for every row.
pub fn assign_with_distances(data: &Matrix, centroids: &Matrix) -> Result<(Vec<u32>, Vec<f64>)> {
    if data.dim() != centroids.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: centroids.dim(),
        });
    }
    if centroids.rows() == 0 {
        return Err(Error::Argument("no centroids".into()));
    }
    let pairs: Vec<(u32, f64)> = (0..data.rows())
        .into_par_iter()
        .with_min_len(CHUNK / 4)
        .map(|i| nearest(data.row(i), centroids))
        .collect();
    Ok(pairs.into_iter().unzip())
}

#[inline]
fn nearest(x: &[f32], centroids: &Matrix) -> (u32, f64) {
    let mut best = 0u32;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = sq_dist(x, c);
        if d < best_d {
            best_d = d;
            best = j as u32;
        }
    }
    (best, best_d)
}

/// Sum of `values` in fixed chunks, chunk totals added in order.
pub fn chunked_sum(values: &[f64]) -> f64 {
    let partial: Vec<f64> = values.par_chunks(CHUNK).map(|c| c.iter().sum::<f64>()).collect();
    partial.iter().sum()
}

/// `sq^(s/2)`, i.e. a distance raised to `s` given its square.
#[inline]
fn power(sq: f64, s: f64) -> f64 {
    let half = s / 2.0;
    if half == 1.0 {
        sq
    } else if half.fract() == 0.0 && (0.0..=32.0).contains(&half) {
        sq.powi(half as i32)
    } else {
        sq.powf(half)
    }
}

/// `Σ_i ‖x_i − c_{assignment[i]}‖^s` for `s ≥ 2`.
pub fn distortion(data: &Matrix, centroids: &Matrix, assignment: &[u32], s: f64) -> Result<f64> {
    if !(s >= 2.0) {
        return Err(Error::Argument(format!("exponent s={s} must be >= 2")));
    }
    if data.dim() != centroids.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: centroids.dim(),
        });
    }
    if assignment.len() != data.rows() {
        return Err(Error::DimensionMismatch {
            expected: data.rows(),
            got: assignment.len(),
        });
    }
    let k = centroids.rows();
    if let Some((item, &a)) = assignment.iter().enumerate().find(|(_, &a)| a as usize >= k) {
        return Err(Error::InvalidAssignment {
            item,
            index: a as usize,
            k,
        });
    }
    let per_point: Vec<f64> = assignment
        .par_iter()
        .enumerate()
        .map(|(i, &a)| power(sq_dist(data.row(i), centroids.row(a as usize)), s))
        .collect();
    Ok(chunked_sum(&per_point))
}

/// Lloyd's algorithm from the given centroids.
///
/// Stops when the assignment no longer changes, when the relative improvement
/// of the distortion falls below `tol`, or after `max_iters` updates.
pub fn lloyd(data: &Matrix, init: Matrix, max_iters: usize, tol: f64) -> Result<KMeansResult> {
    iterate(data, init, max_iters, tol, &Update::Mean)
}

/// Settings for the gradient-descent centroid step of [`power_kmeans`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentConfig {
    pub steps: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
        }
    }
}

/// k-means under `d(x, y) = ‖x − y‖^s`.
///
/// Assignment is unchanged (nearest centroid in L2). Each centroid is refined
/// from its cluster mean by descent on `Σ ‖x − c‖^s`, using a step of
/// `1 / (s (s−1) Σ ‖x − c‖^(s−2))` with halving whenever a step fails to
/// decrease the objective; the mean is kept if nothing improves on it.
/// With `s = 2` the mean is optimal and this is exactly [`kmeans`].
pub fn power_kmeans(data: &Matrix, k: usize, s: f64, seed: u64, descent: &DescentConfig) -> Result<KMeansResult> {
    if !(s >= 2.0) {
        return Err(Error::Argument(format!("exponent s={s} must be >= 2")));
    }
    let mut rng = init_rng(seed, 1, 0);
    let init = kmeanspp_init(data, k, &mut rng)?;
    let update = if s == 2.0 {
        Update::Mean
    } else {
        Update::Descent {
            s,
            steps: descent.steps,
        }
    };
    iterate(data, init, descent.max_iters, descent.tol, &update)
}

enum Update {
    Mean,
    Descent { s: f64, steps: usize },
}

impl Update {
    fn exponent(&self) -> f64 {
        match self {
            Update::Mean => 2.0,
            Update::Descent { s, .. } => *s,
        }
    }
}

fn iterate(data: &Matrix, init: Matrix, max_iters: usize, tol: f64, update: &Update) -> Result<KMeansResult> {
    let k = init.rows();
    check_k(data, k)?;
    if init.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: init.dim(),
        });
    }
    if let Some((row, col)) = init.first_non_finite() {
        return Err(Error::Argument(format!(
            "initial centroid ({row}, {col}) is not finite"
        )));
    }
    let s = update.exponent();
    let mut centroids = init;
    let (mut assignment, mut d2) = assign_with_distances(data, &centroids)?;
    let mut current = objective_from(&d2, s);
    let mut trace = vec![current];
    let mut converged = false;
    let mut iters = 0;

    while iters < max_iters {
        iters += 1;
        repair_empty(&mut assignment, &mut d2, k);
        centroids = update_centroids(data, &assignment, k, update);
        let (next_assignment, next_d2) = assign_with_distances(data, &centroids)?;
        let next = objective_from(&next_d2, s);
        let stable = next_assignment == assignment;
        assignment = next_assignment;
        d2 = next_d2;
        trace.push(next);
        let improvement = if current > 0.0 { (current - next) / current } else { 0.0 };
        current = next;
        if stable || improvement < tol {
            converged = true;
            break;
        }
    }

    // A final assignment may still leave a cluster empty; repair until none is.
    let mut guard = 0;
    while has_empty(&assignment, k) && guard < k {
        guard += 1;
        repair_empty(&mut assignment, &mut d2, k);
        centroids = update_centroids(data, &assignment, k, update);
        let (a, d) = assign_with_distances(data, &centroids)?;
        assignment = a;
        d2 = d;
        current = objective_from(&d2, s);
        trace.push(current);
    }

    let distortion = if s == 2.0 { current } else { chunked_sum(&d2) };
    Ok(KMeansResult {
        centroids,
        assignment,
        distortion,
        objective: current,
        iters_run: iters,
        converged,
        trace,
    })
}

fn objective_from(d2: &[f64], s: f64) -> f64 {
    if s == 2.0 {
        chunked_sum(d2)
    } else {
        let p: Vec<f64> = d2.iter().map(|&d| power(d, s)).collect();
        chunked_sum(&p)
    }
}

fn has_empty(assignment: &[u32], k: usize) -> bool {
    let mut seen = vec![false; k];
    for &a in assignment {
        seen[a as usize] = true;
    }
    seen.iter().any(|s| !s)
}

/// Gives each empty cluster the point farthest from its current centroid,
/// taken only from clusters with more than one member (ties: lowest index).
fn repair_empty(assignment: &mut [u32], d2: &mut [f64], k: usize) {
    let mut sizes = vec![0usize; k];
    for &a in assignment.iter() {
        sizes[a as usize] += 1;
    }
    for e in 0..k {
        if sizes[e] > 0 {
            continue;
        }
        let mut best: Option<usize> = None;
        for i in 0..assignment.len() {
            if sizes[assignment[i] as usize] < 2 {
                continue;
            }
            if best.is_none_or(|b| d2[i] > d2[b]) {
                best = Some(i);
            }
        }
        let Some(p) = best else { break };
        sizes[assignment[p] as usize] -= 1;
        assignment[p] = e as u32;
        sizes[e] = 1;
        d2[p] = 0.0;
    }
}

fn update_centroids(data: &Matrix, assignment: &[u32], k: usize, update: &Update) -> Matrix {
    let d = data.dim();
    let mut sums = vec![0.0f64; k * d];
    let mut counts = vec![0usize; k];
    for (i, &a) in assignment.iter().enumerate() {
        let a = a as usize;
        counts[a] += 1;
        for (s, &x) in sums[a * d..(a + 1) * d].iter_mut().zip(data.row(i)) {
            *s += x as f64;
        }
    }
    for (j, &c) in counts.iter().enumerate() {
        if c > 0 {
            for s in &mut sums[j * d..(j + 1) * d] {
                *s /= c as f64;
            }
        }
    }
    if let Update::Descent { s, steps } = *update {
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); k];
        for (i, &a) in assignment.iter().enumerate() {
            members[a as usize].push(i as u32);
        }
        let refined: Vec<Vec<f64>> = members
            .par_iter()
            .enumerate()
            .map(|(j, m)| {
                let start = &sums[j * d..(j + 1) * d];
                if m.is_empty() {
                    start.to_vec()
                } else {
                    descend(data, m, start, s, steps)
                }
            })
            .collect();
        for (j, c) in refined.into_iter().enumerate() {
            sums[j * d..(j + 1) * d].copy_from_slice(&c);
        }
    }
    Matrix::new(k, d, sums.into_iter().map(|v| v as f32).collect()).expect("shape")
}

fn power_cost(data: &Matrix, members: &[u32], c: &[f64], s: f64) -> f64 {
    members
        .iter()
        .map(|&i| power(sq_dist_f64(data.row(i as usize), c), s))
        .sum()
}

#[inline]
fn sq_dist_f64(x: &[f32], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(&a, &b)| {
            let t = a as f64 - b;
            t * t
        })
        .sum()
}

/// Minimizes `Σ ‖x − c‖^s` over the members, starting from `start` (the mean).
fn descend(data: &Matrix, members: &[u32], start: &[f64], s: f64, steps: usize) -> Vec<f64> {
    let d = start.len();
    let mut c = start.to_vec();
    let mut cost = power_cost(data, members, &c, s);
    let mut grad = vec![0.0f64; d];
    let mut trial = vec![0.0f64; d];
    for _ in 0..steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut curvature = 0.0;
        for &i in members {
            let x = data.row(i as usize);
            let sq = sq_dist_f64(x, &c);
            if sq == 0.0 {
                continue;
            }
            let w = power(sq, s - 2.0);
            curvature += w;
            for ((g, &xv), &cv) in grad.iter_mut().zip(x).zip(&c) {
                *g += w * (cv - xv as f64);
            }
        }
        if curvature == 0.0 {
            break;
        }
        // gradient is s·grad; curvature bound s(s−1)·curvature
        let mut step = 1.0 / ((s - 1.0) * curvature);
        let mut accepted = false;
        for _ in 0..20 {
            for ((t, &cv), &g) in trial.iter_mut().zip(&c).zip(&grad) {
                *t = cv - step * g;
            }
            let trial_cost = power_cost(data, members, &trial, s);
            if trial_cost < cost {
                let gain = (cost - trial_cost) / cost;
                c.copy_from_slice(&trial);
                cost = trial_cost;
                accepted = gain > 1e-12;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    c
}
