//! Reproducible random streams.
//!
//! A stream is identified by `(seed, stream_id)` and backed by ChaCha8 with
//! the stream id in the cipher's stream word, so the output is identical on
//! every platform and independent streams never share state.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A child stream; depends only on `(seed, stream_id, index)`.
    pub fn fork(&self, index: u64) -> Self {
        Self::new(self.seed, splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(1))))
    }

    /// Uniform digit in `0..p` by multiply-shift of one 64-bit word.
    ///
    /// The bias is at most `p / 2^64`, below `2^-32` for every supported `p`.
    #[inline]
    pub fn digit(&mut self, p: u32) -> u32 {
        ((self.inner.next_u64() as u128 * p as u128) >> 64) as u32
    }

    /// Uniform in `0..n`, `n >= 1`.
    #[inline]
    pub fn next_index(&mut self, n: usize) -> usize {
        ((self.inner.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn unit_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
