//! Deterministic random number generation for simulation and environment
//! synthesis.
//!
//! Two flavors:
//!
//! - [`CounterRng`]: stateless, counter-based. Every draw is a pure function
//!   of `(seed, trajectory, step, draw)`, so rollouts generated in parallel
//!   are bit-identical to the same rollouts generated sequentially.
//! - [`StreamRng`]: a plain sequential splitmix64 stream, used where a single
//!   consumer walks through draws in order (environment generation).
//!
//! Not cryptographically secure; reproducibility across platforms is the
//! only goal.

/// splitmix64 finalizer: a cheap 64-bit bijective mixer.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Derive an independent seed from a master seed and a domain tag.
///
/// Used to split one user-facing seed into streams for unrelated consumers
/// (environment dynamics vs. agent action sampling vs. generators).
#[inline]
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    mix64(mix64(master) ^ mix64(tag.wrapping_mul(0xA24BAED4963EE407)))
}

#[inline]
fn to_unit_f64(x: u64) -> f64 {
    // 53 high bits -> [0, 1)
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Counter-based generator keyed by a single 64-bit seed.
///
/// `u64_at(traj, step, draw)` is a pure function of its arguments; there is
/// no hidden state. Callers index draws explicitly.
#[derive(Clone, Copy, Debug)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { key: mix64(seed) }
    }

    #[inline]
    pub fn u64_at(&self, traj: u64, step: u64, draw: u64) -> u64 {
        let mut h = self.key;
        h = mix64(h ^ traj.wrapping_mul(0x8CB92BA72F3D8DD7));
        h = mix64(h ^ step.wrapping_mul(0xD6E8FEB86659FD93));
        h = mix64(h ^ draw.wrapping_mul(0xCA5A826395121157));
        h
    }

    /// Uniform draw in `[0, 1)` at the given counter coordinates.
    #[inline]
    pub fn f64_at(&self, traj: u64, step: u64, draw: u64) -> f64 {
        to_unit_f64(self.u64_at(traj, step, draw))
    }
}

/// Sequential splitmix64 stream.
#[derive(Clone, Debug)]
pub struct StreamRng {
    state: u64,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        Self { state: mix64(seed) }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut x = self.state;
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
        x ^ (x >> 31)
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        to_unit_f64(self.next_u64())
    }

    /// Standard normal via Box-Muller (consumes two uniforms).
    pub fn next_normal(&mut self) -> f64 {
        loop {
            let u1 = self.next_f64();
            let u2 = self.next_f64();
            if u1 > 0.0 {
                return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            }
        }
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
    pub fn next_gamma(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0, "gamma shape must be positive");
        if shape < 1.0 {
            // boost: G(a) = G(a+1) * U^(1/a)
            let g = self.next_gamma(shape + 1.0);
            let u = self.next_f64().max(f64::MIN_POSITIVE);
            return g * u.powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.next_normal();
            let v = (1.0 + c * x).powi(3);
            if v <= 0.0 {
                continue;
            }
            let u = self.next_f64().max(f64::MIN_POSITIVE);
            if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
                return d * v;
            }
        }
    }

    /// Point on the probability simplex ~ symmetric Dirichlet(alpha).
    pub fn next_dirichlet(&mut self, dim: usize, alpha: f64) -> Vec<f64> {
        let mut g: Vec<f64> = (0..dim).map(|_| self.next_gamma(alpha)).collect();
        let total: f64 = g.iter().sum();
        if total <= 0.0 {
            // all-zero draw is vanishingly unlikely; fall back to uniform
            return vec![1.0 / dim as f64; dim];
        }
        for v in &mut g {
            *v /= total;
        }
        g
    }
}

/// Sample an index from a probability row using one uniform draw.
///
/// Walks the CDF; any residual mass from rounding goes to the last index
/// with positive probability.
#[inline]
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_draws_are_pure() {
        let rng = CounterRng::new(7);
        let a = rng.u64_at(3, 5, 0);
        let b = rng.u64_at(3, 5, 0);
        assert_eq!(a, b);
        assert_ne!(a, rng.u64_at(3, 5, 1));
        assert_ne!(a, rng.u64_at(3, 6, 0));
        assert_ne!(a, rng.u64_at(4, 5, 0));
    }

    #[test]
    fn derived_seeds_differ_by_tag() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(1, 2), derive_seed(1, 2));
    }

    #[test]
    fn unit_draws_in_range() {
        let mut s = StreamRng::new(42);
        for _ in 0..1000 {
            let x = s.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn dirichlet_sums_to_one() {
        let mut s = StreamRng::new(9);
        for &alpha in &[0.3, 1.0, 5.0] {
            let p = s.next_dirichlet(6, alpha);
            let total: f64 = p.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn gamma_mean_roughly_matches_shape() {
        let mut s = StreamRng::new(1);
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| s.next_gamma(2.5)).sum::<f64>() / n as f64;
        assert!((mean - 2.5).abs() < 0.1, "gamma(2.5) sample mean {mean}");
    }

    #[test]
    fn sample_index_respects_cdf() {
        let row = [0.25, 0.0, 0.75];
        assert_eq!(sample_index(&row, 0.0), 0);
        assert_eq!(sample_index(&row, 0.2499), 0);
        assert_eq!(sample_index(&row, 0.25), 2);
        assert_eq!(sample_index(&row, 0.9999), 2);
    }
}
