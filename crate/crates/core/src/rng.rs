//! Seed handling and reproducible substreams.
//!
//! Every randomized stage takes an [`RngSeed`] and derives one independent
//! ChaCha stream per unit of work (trajectory, labeled sample, evaluation
//! cell). Outputs therefore depend only on the seed and the work-unit index,
//! never on thread scheduling or worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A 64-bit master seed for one pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSeed {
    /// Derives the generator for work-unit `stream`.
    pub fn substream(self, stream: u64) -> ChaCha8Rng {
        let mut state = self.0 ^ stream.wrapping_mul(0xA076_1D64_78BD_642F);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }

    /// Generator for single-draw operations (stream 0).
    pub fn rng(self) -> ChaCha8Rng {
        self.substream(0)
    }
}

/// Fills `out` with i.i.d. standard normal draws.
pub fn fill_standard_normal<R: Rng>(rng: &mut R, out: &mut [f64]) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

/// Returns `n` i.i.d. standard normal draws.
pub fn standard_normal_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    fill_standard_normal(rng, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_are_deterministic() {
        let a: Vec<u64> = (0..4).map(|_| RngSeed(7).substream(3).gen()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn substreams_differ_across_streams_and_seeds() {
        let x: u64 = RngSeed(7).substream(1).gen();
        let y: u64 = RngSeed(7).substream(2).gen();
        let z: u64 = RngSeed(8).substream(1).gen();
        assert_ne!(x, y);
        assert_ne!(x, z);
    }
}
