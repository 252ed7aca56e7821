//! Discrete distributions and the tempering check `KL(p^t / Z ‖ U) ≤ KL(p ‖ U)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

use super::keys;

/// Absolute slack when comparing two divergences computed in floating point.
pub const KL_SLACK: f64 = 1e-12;

/// Strictly positive probabilities summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Argument("distribution needs a non-empty support".into()));
        }
        if probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::Argument("probabilities must be finite and > 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Normalizes positive weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Argument("weights must have a positive finite sum".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `p^t / Σ p^t`.
    pub fn tempered(&self, t: f64) -> Self {
        let w: Vec<f64> = self.probs.iter().map(|p| p.powf(t)).collect();
        let z: f64 = w.iter().sum();
        Self {
            probs: w.into_iter().map(|v| v / z).collect(),
        }
    }

    /// `Σ p ln(p k)`: divergence from the uniform distribution on the same support.
    pub fn kl_to_uniform(&self) -> f64 {
        let ln_k = (self.probs.len() as f64).ln();
        let kl: f64 = self.probs.iter().map(|&p| p * (p.ln() + ln_k)).sum();
        kl.max(0.0)
    }

    /// Random distribution over `k` outcomes; the exponent spread gives both
    /// near-uniform and very peaked draws.
    pub fn random<R: Rng>(k: usize, rng: &mut R) -> Self {
        let sharpness = rng.random_range(0.0..6.0f64).exp2();
        let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powf(sharpness) + 1e-300).collect();
        Self::from_weights(&w).expect("positive weights")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperingCheck {
    pub kl_q_u: f64,
    pub kl_p_u: f64,
    pub holds: bool,
}

/// Compares `KL(Q‖U)` with `KL(P‖U)` for `Q ∝ P^t`.
pub fn tempering_check(p: &DiscreteDist, t: f64) -> Result<TemperingCheck> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Argument(format!("t={t} must lie in (0, 1)")));
    }
    let kl_p_u = p.kl_to_uniform();
    let kl_q_u = p.tempered(t).kl_to_uniform();
    Ok(TemperingCheck {
        kl_q_u,
        kl_p_u,
        holds: kl_q_u <= kl_p_u + KL_SLACK,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperingSearch {
    pub checks: usize,
    pub violations: usize,
    /// Largest `KL(Q‖U) − KL(P‖U)` seen; negative when every check held strictly.
    pub worst_gap: f64,
    /// Largest `|KL(Q‖U) − KL(P‖U)|` over uniform inputs.
    pub uniform_gap: f64,
}

/// Runs [`tempering_check`] on `trials` random distributions with supports of
/// size 1 to `max_support`, for every `t` in `ts`, plus a uniform input per trial.
pub fn tempering_search(trials: usize, max_support: usize, ts: &[f64], seed: u64) -> Result<TemperingSearch> {
    if max_support == 0 {
        return Err(Error::Argument("max_support must be >= 1".into()));
    }
    let mut rng = stream_rng(seed, Stream::Simulation, &[keys::TEMPERING]);
    let mut out = TemperingSearch {
        checks: 0,
        violations: 0,
        worst_gap: f64::NEG_INFINITY,
        uniform_gap: 0.0,
    };
    for _ in 0..trials {
        let k = rng.random_range(1..=max_support);
        let p = DiscreteDist::random(k, &mut rng);
        let u = DiscreteDist::uniform(k);
        for &t in ts {
            let r = tempering_check(&p, t)?;
            out.checks += 1;
            out.violations += usize::from(!r.holds);
            out.worst_gap = out.worst_gap.max(r.kl_q_u - r.kl_p_u);
            let ru = tempering_check(&u, t)?;
            out.uniform_gap = out.uniform_gap.max((ru.kl_q_u - ru.kl_p_u).abs());
        }
    }
    Ok(out)
}

/// `Σ a ln(a / b)` over cells where `a > 0`; `b` is floored at `floor`.
pub fn kl_discrete(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(&x, _)| x > 0.0)
        .map(|(&x, &y)| x * (x.ln() - y.max(floor).ln()))
        .sum::<f64>()
        .max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_equality() {
        let r = tempering_check(&DiscreteDist::uniform(7), 0.5).unwrap();
        assert!(r.kl_p_u.abs() < 1e-12 && r.kl_q_u.abs() < 1e-12);
        assert!(r.holds);
    }

    #[test]
    fn two_point_example_by_hand() {
        let p = DiscreteDist::new(vec![0.8, 0.2]).unwrap();
        let r = tempering_check(&p, 0.5).unwrap();
        let kl_p = 0.8 * (0.8f64 * 2.0).ln() + 0.2 * (0.2f64 * 2.0).ln();
        // q = (sqrt .8, sqrt .2) / (sqrt .8 + sqrt .2) = (2/3, 1/3)
        let kl_q = (2.0 / 3.0) * (4.0f64 / 3.0).ln() + (1.0 / 3.0) * (2.0f64 / 3.0).ln();
        assert!((r.kl_p_u - kl_p).abs() < 1e-12);
        assert!((r.kl_q_u - kl_q).abs() < 1e-12);
        assert!(r.kl_q_u < r.kl_p_u);
    }

    #[test]
    fn t_outside_open_interval() {
        let p = DiscreteDist::uniform(3);
        for t in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(tempering_check(&p, t).is_err());
        }
    }

    #[test]
    fn seeded_search_is_reproducible() {
        let a = tempering_search(300, 16, &[0.2, 0.8], 5).unwrap();
        assert_eq!(a.checks, 600);
        assert_eq!(a.violations, 0);
        assert!(a.uniform_gap < 1e-12);
        assert_eq!(a, tempering_search(300, 16, &[0.2, 0.8], 5).unwrap());
        assert!(tempering_search(1, 4, &[1.0], 0).is_err());
    }

    #[test]
    fn invalid_distributions() {
        assert!(DiscreteDist::new(vec![]).is_err());
        assert!(DiscreteDist::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteDist::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn randomized_search_finds_no_counterexample() {
        let mut rng = stream_rng(0, Stream::Simulation, &[99]);
        for _ in 0..2000 {
            let k = rng.random_range(1..=32);
            let p = DiscreteDist::random(k, &mut rng);
            for t in [0.1, 0.5, 0.9] {
                assert!(tempering_check(&p, t).unwrap().holds);
            }
        }
    }
}
