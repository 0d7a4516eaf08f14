//! Counter-based deterministic random numbers.
//!
//! Every random value in the library is a pure function of a [`StreamKey`]
//! (derived from a master seed plus a path of integer words, e.g.
//! `(seed, sample_index, coordinate)`) and a small counter. Nothing is stored
//! and nothing depends on evaluation order, so hashing two vectors that share a
//! coordinate sees the same draws for that coordinate, and results do not
//! depend on how work is split across threads.
//!
//! The mixer is the SplitMix64 finalizer applied over the key path.

use rand::RngCore;
use statrs::function::erf::erfc_inv;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Domain tags keep the streams of different algorithms apart.
pub mod domain {
    pub const GCWS: u64 = 0x4743_5753;
    pub const RFF: u64 = 0x5246_4600;
    pub const SIM_RFF: u64 = 0x5349_4d52;
    pub const SIM_GCWS: u64 = 0x5349_4d47;
    pub const SIM_BINOMIAL: u64 = 0x5349_4d42;
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Position in the tree of random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(seed: u64, domain: u64) -> Self {
        StreamKey(mix64(mix64(seed ^ GOLDEN).wrapping_add(domain)))
    }

    /// Descend one level in the key path.
    #[inline]
    pub fn with(self, word: u64) -> Self {
        StreamKey(mix64(
            self.0.rotate_left(23) ^ mix64(word.wrapping_mul(GOLDEN).wrapping_add(0x632b_e59b_d9b4_e019)),
        ))
    }

    #[inline]
    pub fn bits(self, counter: u64) -> u64 {
        mix64(mix64(self.0 ^ counter.wrapping_mul(GOLDEN)).wrapping_add(self.0))
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn open_unit(self, counter: u64) -> f64 {
        ((self.bits(counter) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Gamma(2, 1) as `-ln(U1) - ln(U2)`; consumes counters `counter` and `counter + 1`.
    #[inline]
    pub fn gamma2(self, counter: u64) -> f64 {
        -(self.open_unit(counter) * self.open_unit(counter + 1)).ln()
    }

    /// Standard normal by inverse CDF of one uniform.
    #[inline]
    pub fn std_normal(self, counter: u64) -> f64 {
        inverse_normal_cdf(self.open_unit(counter))
    }

    /// Sequential generator over this key, for use with `rand_distr` samplers.
    pub fn stream(self) -> CounterRng {
        CounterRng { key: self, counter: 0 }
    }
}

/// Inverse of the standard normal CDF for `p` in (0, 1).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// `RngCore` adaptor walking the counter of a fixed [`StreamKey`].
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: StreamKey,
    counter: u64,
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let v = self.key.bits(self.counter);
        self.counter += 1;
        v
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}
