//! Reproducible random streams. Every parallel task draws from its own ChaCha stream
//! derived from a master seed and a task index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Derives a sub-seed for a named purpose so that unrelated stages do not share streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Buffered neighbour-index draws: two indices per 64-bit output via multiply-shift.
/// The modulo bias is below `2d / 2^32`.
#[derive(Default)]
pub struct NeighborDraw {
    buf: u64,
    left: u8,
}

impl NeighborDraw {
    #[inline]
    pub fn next<R: Rng>(&mut self, rng: &mut R, d: usize) -> usize {
        if self.left == 0 {
            self.buf = rng.next_u64();
            self.left = 2;
        }
        let half = self.buf & 0xFFFF_FFFF;
        self.buf >>= 32;
        self.left -= 1;
        ((half * 2 * d as u64) >> 32) as usize
    }
}
