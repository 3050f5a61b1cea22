//! Concave reward functionals over state distributions.
//!
//! Each functional exposes a value, an exact gradient, and smoothness
//! constants `(beta, B)` with `||grad R(x) - grad R(y)||_inf <= beta
//! ||x - y||_inf` and `||grad R(x)||_inf <= B`. All three families apply
//! additive smoothing `log(d(s) + sigma)` inside every logarithm of the
//! argument distribution, which keeps gradients finite on the boundary of
//! the simplex. Entropies are in nats.
//!
//! Everything here is exposed as a maximization objective; the divergence
//! forms are negated internally so the optimizer contract is uniform.

use crate::mdp::StateDistribution;
use ndarray::{Array1, ArrayView1};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("smoothing parameter sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("target distribution entry {index} is {p}; must be strictly positive for the KL objective")]
    TargetNotPositive { index: usize, p: f64 },
    #[error("target has length {got}; expected {expected}")]
    TargetLength { got: usize, expected: usize },
}

/// Smoothness constant and gradient bound for a functional.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessBundle {
    /// Lipschitz constant of the gradient in the sup norm.
    pub beta: f64,
    /// Bound on the sup norm of the gradient.
    pub bound: f64,
}

/// A concave functional of a state distribution.
#[derive(Clone, Debug)]
pub enum RewardFunctional {
    /// `-sum_s d(s) log(d(s) + sigma)`
    SmoothedEntropy { sigma: f64 },
    /// `-sum_s d(s) log((d(s) + sigma) / q(s))`, the negated smoothed
    /// divergence from `d` to the target `q` (larger is better).
    KlToTarget { sigma: f64, target: StateDistribution },
    /// `sum_s q(s) log(d(s) + sigma)`, the negated smoothed cross entropy
    /// of `d` under the target `q`.
    CrossEntropyToTarget { sigma: f64, target: StateDistribution },
}

impl RewardFunctional {
    pub fn smoothed_entropy(sigma: f64) -> Result<Self, ObjectiveError> {
        if !(sigma > 0.0) {
            return Err(ObjectiveError::BadSigma(sigma));
        }
        Ok(Self::SmoothedEntropy { sigma })
    }

    pub fn kl_to_target(sigma: f64, target: StateDistribution) -> Result<Self, ObjectiveError> {
        if !(sigma > 0.0) {
            return Err(ObjectiveError::BadSigma(sigma));
        }
        if let Some((i, &p)) = target.probs().iter().enumerate().find(|(_, &p)| p <= 0.0) {
            return Err(ObjectiveError::TargetNotPositive { index: i, p });
        }
        Ok(Self::KlToTarget { sigma, target })
    }

    pub fn cross_entropy_to_target(
        sigma: f64,
        target: StateDistribution,
    ) -> Result<Self, ObjectiveError> {
        if !(sigma > 0.0) {
            return Err(ObjectiveError::BadSigma(sigma));
        }
        Ok(Self::CrossEntropyToTarget { sigma, target })
    }

    pub fn sigma(&self) -> f64 {
        match self {
            Self::SmoothedEntropy { sigma }
            | Self::KlToTarget { sigma, .. }
            | Self::CrossEntropyToTarget { sigma, .. } => *sigma,
        }
    }

    pub fn target(&self) -> Option<&StateDistribution> {
        match self {
            Self::SmoothedEntropy { .. } => None,
            Self::KlToTarget { target, .. } | Self::CrossEntropyToTarget { target, .. } => {
                Some(target)
            }
        }
    }

    /// Replace the smoothing parameter, keeping the kind and target.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self, ObjectiveError> {
        match self {
            Self::SmoothedEntropy { .. } => Self::smoothed_entropy(sigma),
            Self::KlToTarget { target, .. } => Self::kl_to_target(sigma, target.clone()),
            Self::CrossEntropyToTarget { target, .. } => {
                Self::cross_entropy_to_target(sigma, target.clone())
            }
        }
    }

    /// Functional value at a validated distribution.
    pub fn value(&self, d: &StateDistribution) -> f64 {
        self.value_at(d.probs())
    }

    /// Functional value evaluated on a raw vector.
    ///
    /// The formulas extend off the simplex; finite-difference checks rely on
    /// that. The caller is responsible for keeping every `d(s) + sigma`
    /// positive.
    pub fn value_at(&self, d: ArrayView1<f64>) -> f64 {
        let sigma = self.sigma();
        match self {
            Self::SmoothedEntropy { .. } => {
                -d.iter().map(|&p| p * (p + sigma).ln()).sum::<f64>()
            }
            Self::KlToTarget { target, .. } => {
                self.check_len(d.len());
                -d.iter()
                    .zip(target.probs().iter())
                    .map(|(&p, &q)| p * ((p + sigma) / q).ln())
                    .sum::<f64>()
            }
            Self::CrossEntropyToTarget { target, .. } => {
                self.check_len(d.len());
                d.iter()
                    .zip(target.probs().iter())
                    .map(|(&p, &q)| q * (p + sigma).ln())
                    .sum::<f64>()
            }
        }
    }

    /// Exact gradient at a validated distribution.
    pub fn gradient(&self, d: &StateDistribution) -> Array1<f64> {
        self.gradient_at(d.probs())
    }

    /// Gradient evaluated on a raw vector; see [`Self::value_at`].
    pub fn gradient_at(&self, d: ArrayView1<f64>) -> Array1<f64> {
        let sigma = self.sigma();
        match self {
            Self::SmoothedEntropy { .. } => {
                d.mapv(|p| -((p + sigma).ln() + p / (p + sigma)))
            }
            Self::KlToTarget { target, .. } => {
                self.check_len(d.len());
                Array1::from_iter(
                    d.iter()
                        .zip(target.probs().iter())
                        .map(|(&p, &q)| -(((p + sigma) / q).ln() + p / (p + sigma))),
                )
            }
            Self::CrossEntropyToTarget { target, .. } => {
                self.check_len(d.len());
                Array1::from_iter(
                    d.iter().zip(target.probs().iter()).map(|(&p, &q)| q / (p + sigma)),
                )
            }
        }
    }

    /// Smoothness constant and gradient bound over distributions of the
    /// given length.
    pub fn smoothness(&self, n_states: usize) -> SmoothnessBundle {
        let sigma = self.sigma();
        if let Some(target) = self.target() {
            assert_eq!(
                target.len(),
                n_states,
                "functional target has length {}, asked about {} states",
                target.len(),
                n_states
            );
        }
        match self {
            Self::SmoothedEntropy { .. } => SmoothnessBundle {
                beta: 2.0 / sigma,
                bound: (1.0 / sigma).ln() + 1.0,
            },
            Self::KlToTarget { target, .. } => {
                let max_inv_q = target
                    .probs()
                    .iter()
                    .map(|&q| (1.0 / q).ln())
                    .fold(f64::NEG_INFINITY, f64::max);
                SmoothnessBundle {
                    beta: 2.0 / sigma,
                    bound: (1.0 / sigma).ln() + 1.0 + max_inv_q,
                }
            }
            Self::CrossEntropyToTarget { target, .. } => {
                let max_q = target.probs().iter().copied().fold(0.0, f64::max);
                SmoothnessBundle { beta: max_q / (sigma * sigma), bound: max_q / sigma }
            }
        }
    }

    fn check_len(&self, len: usize) {
        if let Some(target) = self.target() {
            assert_eq!(
                target.len(),
                len,
                "distribution has length {len}, functional target has length {}",
                target.len()
            );
        }
    }
}

/// Shannon entropy `-sum_{d(s) > 0} d(s) log d(s)` in nats.
pub fn raw_entropy(d: &StateDistribution) -> f64 {
    raw_entropy_of(d.probs())
}

/// Shannon entropy of a raw non-negative vector; zero entries contribute 0.
pub fn raw_entropy_of(d: ArrayView1<f64>) -> f64 {
    -d.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::random_distribution;
    use ndarray::arr1;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn functionals(n: usize, sigma: f64, seed: u64) -> Vec<RewardFunctional> {
        let q = random_distribution(n, seed, 0.4);
        // shift the target away from zero so the KL form accepts it
        let mut probs = q.probs().to_owned();
        probs += 0.05;
        probs /= probs.sum();
        let q = StateDistribution::new(probs).unwrap();
        vec![
            RewardFunctional::smoothed_entropy(sigma).unwrap(),
            RewardFunctional::kl_to_target(sigma, q.clone()).unwrap(),
            RewardFunctional::cross_entropy_to_target(sigma, q).unwrap(),
        ]
    }

    #[test]
    fn rejects_bad_sigma_and_targets() {
        assert!(RewardFunctional::smoothed_entropy(0.0).is_err());
        assert!(RewardFunctional::smoothed_entropy(-1.0).is_err());
        let q = StateDistribution::new(arr1(&[1.0, 0.0])).unwrap();
        assert!(RewardFunctional::kl_to_target(0.1, q.clone()).is_err());
        assert!(RewardFunctional::cross_entropy_to_target(0.1, q).is_ok());
    }

    #[test]
    fn smoothed_entropy_uniform_four_states() {
        let f = RewardFunctional::smoothed_entropy(0.25).unwrap();
        let d = StateDistribution::uniform(4);
        assert!(close(f.value(&d), std::f64::consts::LN_2, 1e-12));
        let g = f.gradient(&d);
        let expected = -(0.5f64.ln() + 0.5);
        for s in 0..4 {
            assert!(close(g[s], expected, 1e-12));
        }
    }

    #[test]
    fn smoothed_entropy_tracks_raw_entropy_within_n_sigma() {
        for seed in 0..50u64 {
            let n = 3 + (seed % 6) as usize;
            let d = random_distribution(n, seed, 0.3);
            for &sigma in &[1e-3, 1e-2, 0.1] {
                let f = RewardFunctional::smoothed_entropy(sigma).unwrap();
                let gap = (f.value(&d) - raw_entropy(&d)).abs();
                assert!(gap <= n as f64 * sigma + 1e-12, "seed {seed} sigma {sigma} gap {gap}");
            }
        }
    }

    #[test]
    fn kl_to_self_vanishes_as_sigma_shrinks() {
        let n = 5;
        let d = random_distribution(n, 77, 1.5);
        // strictly positive variant of d as its own target
        let mut probs = d.probs().to_owned();
        probs += 0.02;
        probs /= probs.sum();
        let d = StateDistribution::new(probs).unwrap();
        for &sigma in &[1e-6, 1e-9] {
            let f = RewardFunctional::kl_to_target(sigma, d.clone()).unwrap();
            let v = f.value(&d);
            assert!(v.abs() <= n as f64 * sigma * 1.001, "sigma {sigma}: value {v}");
        }
    }

    #[test]
    fn cross_entropy_gradient_example() {
        let q = StateDistribution::uniform(2);
        let f = RewardFunctional::cross_entropy_to_target(0.5, q).unwrap();
        let d = StateDistribution::new(arr1(&[1.0, 0.0])).unwrap();
        let g = f.gradient(&d);
        assert!(close(g[0], 1.0 / 3.0, 1e-15));
        assert!(close(g[1], 1.0, 1e-15));
    }

    #[test]
    fn entropy_gradient_prefers_unvisited_states() {
        for &sigma in &[0.01, 0.1, 0.5] {
            let f = RewardFunctional::smoothed_entropy(sigma).unwrap();
            let n = 6;
            let d = StateDistribution::delta(n, 2);
            let g = f.gradient(&d);
            for s in 0..n {
                if s != 2 {
                    assert!(g[s] > g[2], "sigma {sigma}: g[{s}]={} vs g[2]={}", g[s], g[2]);
                }
            }
        }
    }

    /// Central finite differences of `value_at` with step `h`.
    fn finite_difference(f: &RewardFunctional, d: ArrayView1<f64>, h: f64) -> Array1<f64> {
        let mut g = Array1::zeros(d.len());
        let mut probe = d.to_owned();
        for i in 0..d.len() {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f.value_at(probe.view());
            probe[i] = orig - h;
            let minus = f.value_at(probe.view());
            probe[i] = orig;
            g[i] = (plus - minus) / (2.0 * h);
        }
        g
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut checked = 0usize;
        for seed in 0..100u64 {
            let n = 3 + (seed % 5) as usize;
            let mut d = random_distribution(n, seed, 0.5).probs().to_owned();
            if seed % 2 == 0 {
                // force an exact zero entry and renormalize
                let argmin = (0..n).min_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap()).unwrap();
                d[argmin] = 0.0;
                let sum = d.sum();
                d /= sum;
            }
            let d = StateDistribution::from_computed(d).unwrap();
            for f in functionals(n, 0.05, seed) {
                let g = f.gradient(&d);
                let fd = finite_difference(&f, d.probs(), 1e-6);
                for i in 0..n {
                    let rel = (g[i] - fd[i]).abs() / g[i].abs().max(1.0);
                    assert!(rel <= 1e-4, "seed {seed} i {i}: grad {} fd {}", g[i], fd[i]);
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn concave_along_segments() {
        for seed in 0..30u64 {
            let n = 4;
            let d1 = random_distribution(n, seed, 0.8);
            let d2 = random_distribution(n, seed + 1000, 0.8);
            for f in functionals(n, 0.05, seed) {
                for k in 1..10 {
                    let lambda = k as f64 / 10.0;
                    let mid = StateDistribution::from_computed(
                        lambda * &d1.probs().to_owned() + (1.0 - lambda) * &d2.probs().to_owned(),
                    )
                    .unwrap();
                    let lhs = f.value(&mid);
                    let rhs = lambda * f.value(&d1) + (1.0 - lambda) * f.value(&d2);
                    assert!(lhs >= rhs - 1e-10, "seed {seed} lambda {lambda}: {lhs} < {rhs}");
                }
            }
        }
    }

    #[test]
    fn gradient_is_beta_lipschitz_and_bounded() {
        for seed in 0..30u64 {
            let n = 5;
            let d1 = random_distribution(n, seed + 10, 0.7);
            let d2 = random_distribution(n, seed + 2000, 0.7);
            for f in functionals(n, 0.05, seed) {
                let bundle = f.smoothness(n);
                let g1 = f.gradient(&d1);
                let g2 = f.gradient(&d2);
                let grad_gap =
                    g1.iter().zip(g2.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let dist = d1.linf_distance(&d2);
                assert!(
                    grad_gap <= bundle.beta * dist + 1e-12,
                    "seed {seed}: gap {grad_gap} > beta {} * dist {dist}",
                    bundle.beta
                );
                for g in [&g1, &g2] {
                    let norm = g.iter().map(|x| x.abs()).fold(0.0, f64::max);
                    assert!(norm <= bundle.bound + 1e-12, "norm {norm} > B {}", bundle.bound);
                }
            }
        }
    }

    #[test]
    fn smoothness_constants_for_entropy() {
        let f = RewardFunctional::smoothed_entropy(0.01).unwrap();
        let bundle = f.smoothness(8);
        assert!(close(bundle.beta, 200.0, 1e-12));
        assert!(close(bundle.bound, 100f64.ln() + 1.0, 1e-12));
        // brute-force the gradient magnitude over a fine grid of d in [0, 1]
        let sigma = 0.01;
        let mut max_mag: f64 = 0.0;
        let steps = 1_000_000usize;
        for k in 0..=steps {
            let x = k as f64 / steps as f64;
            let mag = ((x + sigma).ln() + x / (x + sigma)).abs();
            max_mag = max_mag.max(mag);
        }
        assert!(max_mag <= bundle.bound, "grid max {max_mag} exceeds B {}", bundle.bound);
    }

    #[test]
    fn smoothness_constants_for_cross_entropy() {
        let q = StateDistribution::uniform(10);
        let f = RewardFunctional::cross_entropy_to_target(0.1, q).unwrap();
        let bundle = f.smoothness(10);
        assert!(close(bundle.beta, 10.0, 1e-12));
        // second derivative magnitude q / (d + sigma)^2 maximized on the grid
        let sigma = 0.1;
        let mut max_curv: f64 = 0.0;
        for k in 0..=100_000 {
            let x = k as f64 / 100_000.0;
            max_curv = max_curv.max(0.1 / ((x + sigma) * (x + sigma)));
        }
        assert!(max_curv <= bundle.beta + 1e-9, "grid {max_curv} vs beta {}", bundle.beta);
    }

    #[test]
    fn raw_entropy_basics() {
        assert!(close(raw_entropy(&StateDistribution::uniform(7)), 7f64.ln(), 1e-12));
        assert_eq!(raw_entropy(&StateDistribution::delta(5, 3)), 0.0);
        let witness =
            StateDistribution::new(arr1(&[3.0 / 8.0, 1.0 / 4.0, 3.0 / 8.0])).unwrap();
        let h = raw_entropy(&witness);
        assert!(close(h, 1.0822, 1e-4), "witness entropy {h}");
        assert!(h < 3f64.ln());
    }
}
