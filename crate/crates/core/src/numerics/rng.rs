//! Seeded, splittable random number generation.
//!
//! Every stream is a ChaCha8 keystream keyed by a 64-bit seed and selected by a
//! 64-bit stream id, so per-task generators can be derived from
//! `(master seed, task index)` in any order without coordination.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Child generator for sub-task `id`. Depends only on this generator's
    /// `(seed, stream)` and `id`, never on how much of the parent was consumed.
    pub fn child(&self, id: u64) -> Rng {
        Rng::with_stream(self.seed, mix(self.stream, id))
    }

    /// Child generator keyed by a label, e.g. `"snip/width=500/trial=3"`.
    pub fn child_named(&self, label: &str) -> Rng {
        self.child(fnv1a(label.as_bytes()))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn gaussian(&mut self, mean: f64, variance: f64) -> Result<f64> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::Domain(format!("gaussian variance must be finite and >= 0, got {variance}")));
        }
        if variance == 0.0 {
            return Ok(mean);
        }
        Ok(mean + variance.sqrt() * self.standard_normal())
    }

    pub fn bernoulli(&mut self, p: f64) -> Result<bool> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("bernoulli probability must lie in [0, 1], got {p}")));
        }
        Ok(self.bernoulli_unchecked(p))
    }

    /// `uniform() < p`; exact at both ends since `uniform()` never returns 1.
    #[inline]
    pub(crate) fn bernoulli_unchecked(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

// splitmix64 finalizer over the pair
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_seeds_give_identical_streams() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        let xs: Vec<u64> = (0..1000).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..1000).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);

        let mut a = Rng::new(7);
        let mut b = Rng::new(7);
        for _ in 0..1000 {
            assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
        }
    }

    #[test]
    fn children_do_not_depend_on_parent_consumption() {
        let parent = Rng::new(3);
        let mut used = parent.clone();
        for _ in 0..17 {
            used.next_u64();
        }
        assert_eq!(parent.child(5).next_u64(), used.child(5).next_u64());
        assert_ne!(parent.child(5).next_u64(), parent.child(6).next_u64());
    }

    #[test]
    fn degenerate_bernoulli_and_gaussian() {
        let mut rng = Rng::new(1);
        assert!((0..10_000).all(|_| !rng.bernoulli(0.0).unwrap()));
        assert!((0..10_000).all(|_| rng.bernoulli(1.0).unwrap()));
        assert_eq!(rng.gaussian(2.5, 0.0).unwrap(), 2.5);
        assert!(matches!(rng.gaussian(0.0, -1.0), Err(Error::Domain(_))));
        assert!(rng.bernoulli(1.5).is_err());
    }

    #[test]
    fn gaussian_sample_mean_within_clt_bound() {
        // 1e6 draws: standard error 1e-3, bound 0.01 is 10 sigma.
        let mut rng = Rng::new(2024);
        let n = 1_000_000;
        let mean = (0..n).map(|_| rng.gaussian(0.0, 1.0).unwrap()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn streams_pass_chi_squared_uniformity() {
        // 16 bins, 15 dof: critical value at significance 0.01 is 30.578.
        const CRIT: f64 = 30.578;
        for seed in [0u64, 1, 2, 99, 12345] {
            let mut rng = Rng::new(seed);
            let n = 16_000;
            let mut bins = [0usize; 16];
            for _ in 0..n {
                bins[(rng.uniform() * 16.0) as usize] += 1;
            }
            let expected = n as f64 / 16.0;
            let chi2: f64 = bins.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
            assert!(chi2 < CRIT, "seed {seed}: chi2 {chi2}");
        }
    }

    #[test]
    fn distinct_seeds_are_independent() {
        // 4x4 contingency table of paired draws from two seeds, 9 dof: critical 21.666.
        let mut a = Rng::new(10);
        let mut b = Rng::new(11);
        let n = 16_000;
        let mut table = [[0usize; 4]; 4];
        for _ in 0..n {
            table[(a.uniform() * 4.0) as usize][(b.uniform() * 4.0) as usize] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = table
            .iter()
            .flatten()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 21.666, "chi2 {chi2}");
    }
}
