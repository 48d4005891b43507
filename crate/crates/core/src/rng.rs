//! Seeded random stream. Identical seeds give bit-identical sample streams.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

const STREAM_STEP: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    draws: u64,
    inner: Xoshiro256PlusPlus,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            draws: 0,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 64-bit words consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.inner.next_u64()
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Draws a single Bernoulli(p) sample using exactly one word.
    pub fn bernoulli(&mut self, p: f64) -> Result<bool> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Contract(format!(
                "bernoulli probability {p} outside [0, 1]"
            )));
        }
        Ok(self.uniform() < p)
    }

    /// Bernoulli draw for probabilities the caller already knows are valid.
    #[inline]
    pub(crate) fn bernoulli_unchecked(&mut self, p: f64) -> f64 {
        if self.uniform() < p {
            1.0
        } else {
            0.0
        }
    }

    pub fn gaussian(&mut self) -> f64 {
        let mut counted = Counted(self);
        StandardNormal.sample(&mut counted)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let mut counted = Counted(self);
        items.shuffle(&mut counted);
    }

    /// Derives `n` independent child streams. Consumes one word from `self`;
    /// child `i` depends only on that word and `i`.
    pub fn split(&mut self, n: usize) -> Vec<Rng> {
        let base = self.next_u64();
        (0..n as u64).map(|i| Rng::child_of(base, i)).collect()
    }

    /// Derives one child stream, consuming one word.
    pub fn fork(&mut self) -> Rng {
        let base = self.next_u64();
        Rng::child_of(base, 0)
    }

    pub(crate) fn child_of(base: u64, index: u64) -> Rng {
        Rng::new(base.wrapping_add(index.wrapping_add(1).wrapping_mul(STREAM_STEP)))
    }
}

/// Adapter that lets `rand` distributions draw from [`Rng`] while keeping its
/// draw counter accurate.
struct Counted<'a>(&'a mut Rng);

impl RngCore for Counted<'_> {
    fn next_u32(&mut self) -> u32 {
        (self.0.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.0.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_eq!(a.gaussian().to_bits(), b.gaussian().to_bits());
        let mut xs: Vec<u32> = (0..50).collect();
        let mut ys = xs.clone();
        a.shuffle(&mut xs);
        b.shuffle(&mut ys);
        assert_eq!(xs, ys);
    }

    #[test]
    fn bernoulli_degenerate_cases() {
        let mut rng = Rng::new(1);
        for _ in 0..1000 {
            assert!(!rng.bernoulli(0.0).unwrap());
            assert!(rng.bernoulli(1.0).unwrap());
        }
    }

    #[test]
    fn bernoulli_consumes_one_draw() {
        let mut rng = Rng::new(5);
        rng.bernoulli(0.3).unwrap();
        assert_eq!(rng.draws(), 1);
    }

    #[test]
    fn bernoulli_rejects_out_of_range() {
        let mut rng = Rng::new(1);
        assert!(rng.bernoulli(-0.1).is_err());
        assert!(rng.bernoulli(1.5).is_err());
        assert!(rng.bernoulli(f64::NAN).is_err());
    }

    #[test]
    fn bernoulli_half_mean_within_three_sigma() {
        let mut rng = Rng::new(2024);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| rng.bernoulli(0.5).unwrap()).count();
        let mean = hits as f64 / n as f64;
        assert!((0.497..=0.503).contains(&mean), "mean {mean}");
    }

    #[test]
    fn children_are_distinct_and_reproducible() {
        let mut a = Rng::new(9);
        let mut b = Rng::new(9);
        let mut ca = a.split(3);
        let mut cb = b.split(3);
        let first: Vec<u64> = ca.iter_mut().map(|r| r.next_u64()).collect();
        let again: Vec<u64> = cb.iter_mut().map(|r| r.next_u64()).collect();
        assert_eq!(first, again);
        assert_ne!(first[0], first[1]);
        assert_ne!(first[1], first[2]);
    }
}
