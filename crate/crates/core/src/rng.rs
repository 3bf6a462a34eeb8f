//! Deterministic counter-based random streams.
//!
//! Every consumer of randomness in this crate derives its own substream from
//! a `(seed, label, indices...)` key, so results never depend on thread
//! scheduling or on how many draws another component made. Within a substream
//! the generator is splitmix64: output `i` is a fixed mix of `key + i·phi`,
//! which makes any prefix of a stream independent of how long the stream is.

use rand::RngCore;

const PHI: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a substream key from a base seed and a list of indices.
///
/// Each index is absorbed with a full mix round so that nearby tuples
/// (e.g. consecutive rollout indices) land on unrelated streams.
pub fn stream_key(seed: u64, indices: &[u64]) -> u64 {
    let mut state = mix64(seed ^ PHI);
    for &ix in indices {
        state = mix64(state ^ ix.wrapping_mul(PHI).wrapping_add(PHI));
    }
    state
}

/// Cheap one-round derivation of a value-level substream from a parent key.
#[inline]
pub fn substream(base: u64, index: u64) -> CounterRng {
    CounterRng::new(mix64(base ^ index.wrapping_mul(PHI).wrapping_add(PHI)))
}

/// Counter-based generator over a fixed substream key.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        CounterRng { key, counter: 0 }
    }

    /// Substream for `(seed, indices...)`; see [`stream_key`].
    pub fn from_parts(seed: u64, indices: &[u64]) -> Self {
        CounterRng::new(stream_key(seed, indices))
    }

    #[inline]
    pub fn next_u64_value(&mut self) -> u64 {
        let v = mix64(self.key.wrapping_add(self.counter.wrapping_mul(PHI)).wrapping_add(PHI));
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform draw strictly inside (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64_value() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform draw in [lo, hi).
    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * ((self.next_u64_value() >> 11) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal draw (ziggurat, via `rand_distr`).
    #[inline]
    pub fn normal(&mut self) -> f64 {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, self)
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64_value() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.next_u64_value()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let v = self.next_u64_value().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let mut a = CounterRng::from_parts(7, &[1, 2, 3]);
        let mut b = CounterRng::from_parts(7, &[1, 2, 3]);
        for _ in 0..256 {
            assert_eq!(a.next_u64_value(), b.next_u64_value());
        }
    }

    #[test]
    fn distinct_indices_give_distinct_streams() {
        let a: Vec<u64> = {
            let mut r = CounterRng::from_parts(7, &[0, 4]);
            (0..16).map(|_| r.next_u64_value()).collect()
        };
        let b: Vec<u64> = {
            let mut r = CounterRng::from_parts(7, &[1, 4]);
            (0..16).map(|_| r.next_u64_value()).collect()
        };
        assert_ne!(a, b);
    }

    #[test]
    fn prefix_property() {
        // Drawing n values then extending the stream must not change the prefix.
        let mut r = CounterRng::from_parts(42, &[9]);
        let first: Vec<f64> = (0..8).map(|_| r.uniform()).collect();
        let mut r2 = CounterRng::from_parts(42, &[9]);
        let longer: Vec<f64> = (0..64).map(|_| r2.uniform()).collect();
        assert_eq!(&longer[..8], &first[..]);
    }

    #[test]
    fn normal_moments() {
        let mut r = CounterRng::from_parts(3, &[0]);
        let n = 200_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let z = r.normal();
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn uniform_is_open_interval() {
        let mut r = CounterRng::from_parts(1, &[]);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
