//! Counter-based random streams.
//!
//! A [`PublicRandomness`] handle names a stream by `(seed, stream_id)`. Every
//! consumer that opens the same handle sees the same draw sequence, regardless
//! of which other streams were opened before it or on which thread. Streams are
//! ChaCha8 keystreams: the key is derived from the seed and the ChaCha stream
//! counter is set to the stream id.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Names one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PublicRandomness {
    pub seed: u64,
    pub stream_id: u64,
}

impl PublicRandomness {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Opens the stream at its first draw.
    pub fn stream(&self) -> Stream {
        Stream::new(self.seed, self.stream_id)
    }

    /// A child handle under the same seed. Children of distinct `(stream_id, tag)`
    /// pairs are distinct streams.
    pub fn derive(&self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: mix(self.stream_id ^ mix(tag.wrapping_add(0x632b_e59b_d9b4_e019))),
        }
    }
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn key_from_seed(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        state = mix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// An open random stream. Implements [`RngCore`] so it can drive `rand_distr`
/// samplers directly.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
    bits: u64,
    bits_left: u32,
}

impl Stream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(key_from_seed(seed));
        rng.set_stream(stream_id);
        Self {
            rng,
            bits: 0,
            bits_left: 0,
        }
    }

    /// A fair coin.
    #[inline]
    pub fn coin(&mut self) -> bool {
        if self.bits_left == 0 {
            self.bits = self.rng.next_u64();
            self.bits_left = 64;
        }
        let bit = self.bits & 1 == 1;
        self.bits >>= 1;
        self.bits_left -= 1;
        bit
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// `true` with probability `p` (clamped to `[0, 1]`).
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            self.uniform() < p
        }
    }

    /// A Rademacher (uniform ±1) value.
    #[inline]
    pub fn rademacher(&mut self) -> i8 {
        if self.coin() {
            1
        } else {
            -1
        }
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}
