//! Seeded, splittable random streams.
//!
//! Every stream is a ChaCha generator keyed by the experiment seed. Substreams
//! share the key and select a different ChaCha stream id derived from a label
//! (and optionally an index), so `Rng::new(s).substream("data")` always yields
//! the same draws regardless of what other substreams were consumed first.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::domain::BoxDomain;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha12Rng,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream named by `label`, derived from this stream's identity
    /// (not from its current position).
    pub fn substream(&self, label: &str) -> Rng {
        let h = fnv1a(fnv1a(FNV_OFFSET, &self.stream.to_le_bytes()), label.as_bytes());
        Self::with_stream(self.seed, h)
    }

    /// Independent stream named by `label` and `index`, e.g. one per data pair.
    pub fn substream_indexed(&self, label: &str, index: u64) -> Rng {
        let h = fnv1a(fnv1a(FNV_OFFSET, &self.stream.to_le_bytes()), label.as_bytes());
        Self::with_stream(self.seed, fnv1a(h, &index.to_le_bytes()))
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform draw on `[lo, hi]`; returns `lo` exactly when `lo == hi`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            // still consume a draw so streams stay aligned across configs
            let _ = self.uniform();
            return lo;
        }
        (lo + (hi - lo) * self.uniform()).min(hi)
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

/// One point drawn uniformly from `domain`, coordinate by coordinate.
pub fn sample_uniform_box(domain: &BoxDomain, rng: &mut Rng) -> Vec<f64> {
    domain
        .lo()
        .iter()
        .zip(domain.hi())
        .map(|(&lo, &hi)| rng.uniform_in(lo, hi))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::rng::Rng;

    #[test]
    fn degenerate_box_returns_the_point() {
        let b = BoxDomain::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let mut rng = Rng::new(7);
        assert_eq!(sample_uniform_box(&b, &mut rng), vec![0.0, 1.0]);
    }

    #[test]
    fn two_draws_are_distinct_and_in_range() {
        let b = BoxDomain::interval(0.0, 1.0).unwrap();
        let mut rng = Rng::new(42);
        let a = sample_uniform_box(&b, &mut rng)[0];
        let c = sample_uniform_box(&b, &mut rng)[0];
        assert_ne!(a, c);
        assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&c));
    }

    #[test]
    fn empirical_mean_of_unit_interval() {
        let b = BoxDomain::interval(0.0, 1.0).unwrap();
        let mut rng = Rng::new(3);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_uniform_box(&b, &mut rng)[0]).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() <= 0.01, "mean = {mean}");
    }

    #[test]
    fn substreams_do_not_depend_on_consumption_order() {
        let root = Rng::new(11);
        let mut a = root.substream("data");
        let mut other = root.substream("init");
        let _ = other.uniform();
        let mut root2 = Rng::new(11);
        let _ = root2.uniform();
        let mut b = root2.substream("data");
        for _ in 0..16 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
        let mut c = root.substream("init");
        let mut d = root.substream("data");
        assert_ne!(c.uniform(), d.uniform());
        assert_ne!(
            root.substream_indexed("pair", 0).uniform(),
            root.substream_indexed("pair", 1).uniform()
        );
    }

    proptest! {
        #[test]
        fn equal_seeds_give_identical_streams(seed in any::<u64>()) {
            let mut a = Rng::new(seed);
            let mut b = Rng::new(seed);
            for _ in 0..32 {
                prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
                prop_assert_eq!(a.normal().to_bits(), b.normal().to_bits());
            }
        }

        #[test]
        fn samples_stay_inside_the_box(
            seed in any::<u64>(),
            corners in prop::collection::vec((-10.0f64..10.0, 0.0f64..5.0), 1..6),
        ) {
            let lo: Vec<f64> = corners.iter().map(|c| c.0).collect();
            let hi: Vec<f64> = corners.iter().map(|c| c.0 + c.1).collect();
            let b = BoxDomain::new(lo, hi).unwrap();
            let mut rng = Rng::new(seed);
            for _ in 0..20 {
                let p = sample_uniform_box(&b, &mut rng);
                prop_assert!(b.contains(&p));
            }
        }
    }
}
