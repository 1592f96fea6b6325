//! Seeded, splittable random streams.
//!
//! Every stream is a ChaCha12 generator. A child stream is keyed by the
//! parent's seed and a label (plus an optional index), never by how many
//! values the parent has drawn, so drawing from one stream cannot shift
//! another. Labels are hashed with FNV-1a and mixed into the seed with the
//! SplitMix64 finalizer; both are fixed here and platform independent.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha12Rng,
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn child(&self, label: &str) -> Rng {
        Rng::new(splitmix64(self.seed ^ splitmix64(fnv1a(label.as_bytes()))))
    }

    pub fn child_indexed(&self, label: &str, index: u64) -> Rng {
        let keyed = splitmix64(fnv1a(label.as_bytes()) ^ splitmix64(index));
        Rng::new(splitmix64(self.seed ^ keyed))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    pub fn normal(&mut self, shape: &Shape, mean: f64, std: f64) -> Result<Tensor> {
        if !(std >= 0.0) || !mean.is_finite() {
            return Err(Error::InvalidDistribution(format!("normal(mean={mean}, std={std})")));
        }
        let data = (0..shape.numel())
            .map(|_| mean + std * self.standard_normal())
            .collect();
        Tensor::from_shape(shape.clone(), data)
    }

    pub fn uniform(&mut self, shape: &Shape, lo: f64, hi: f64) -> Result<Tensor> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidDistribution(format!("uniform(lo={lo}, hi={hi})")));
        }
        let data = (0..shape.numel())
            .map(|_| {
                let v = self.uniform_in(lo, hi);
                // rounding can land exactly on `hi`
                if v >= hi && hi > lo {
                    lo
                } else {
                    v
                }
            })
            .collect();
        Tensor::from_shape(shape.clone(), data)
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_draws() {
        let shape = Shape::new(vec![4, 5]).unwrap();
        let a = Rng::new(7).normal(&shape, 0.0, 1.0).unwrap();
        let b = Rng::new(7).normal(&shape, 0.0, 1.0).unwrap();
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn uniform_mean_close_to_half() {
        let shape = Shape::new(vec![100_000]).unwrap();
        let t = Rng::new(1).uniform(&shape, 0.0, 1.0).unwrap();
        let mean = t.data().iter().sum::<f64>() / t.numel() as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
        assert!(t.data().iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn degenerate_normal_is_constant() {
        let shape = Shape::new(vec![10]).unwrap();
        let t = Rng::new(3).normal(&shape, 0.0, 0.0).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_parameters_rejected() {
        let shape = Shape::new(vec![2]).unwrap();
        assert!(matches!(
            Rng::new(0).normal(&shape, 0.0, -1.0),
            Err(Error::InvalidDistribution(_))
        ));
        assert!(matches!(
            Rng::new(0).uniform(&shape, 1.0, 0.0),
            Err(Error::InvalidDistribution(_))
        ));
    }

    #[test]
    fn child_streams_ignore_parent_draws() {
        let mut parent = Rng::new(11);
        let before = parent.child("data").next_u64();
        for _ in 0..100 {
            parent.next_u64();
        }
        assert_eq!(before, parent.child("data").next_u64());
        assert_ne!(parent.child("data").next_u64(), parent.child("init").next_u64());
        assert_ne!(
            parent.child_indexed("run", 0).next_u64(),
            parent.child_indexed("run", 1).next_u64()
        );
    }
}
