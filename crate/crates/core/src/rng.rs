//! Reproducible random streams.
//!
//! A stream is ChaCha8 keyed by a 64-bit seed and positioned on a 64-bit
//! stream id. Replication `k` of a study seeded with `base` draws from
//! `RandomStream::substream(base, k)`; a replication that needs several
//! independent sources splits its own stream with [`RandomStream::split`].

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    /// Stream `(base_seed, k)`.
    pub fn substream(base_seed: u64, k: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
        rng.set_stream(k);
        Self { seed: base_seed, stream: k, rng }
    }

    /// Child stream `i`, independent of the parent and of its siblings.
    pub fn split(&self, i: u64) -> Self {
        let key = splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x5851_F42D_4C95_7F2D)));
        Self::substream(key, i)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RandomStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_seeds_equal_sequences() {
        let mut a = RandomStream::substream(7, 3);
        let mut b = RandomStream::substream(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn substreams_and_splits_differ() {
        let mut a = RandomStream::substream(7, 0);
        let mut b = RandomStream::substream(7, 1);
        let mut c = a.split(0);
        let mut d = a.split(1);
        let xs = [a.next_u64(), b.next_u64(), c.next_u64(), d.next_u64()];
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert_ne!(xs[i], xs[j]);
            }
        }
    }
}
