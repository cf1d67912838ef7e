//! Deterministic random-number streams.
//!
//! Every random draw in the crate flows from a master seed through a
//! counter-based key derivation: the tuple `(master, trial, node, iteration,
//! role)` is mixed with SplitMix64 into a 256-bit ChaCha key. Streams keyed
//! by distinct tuples are independent for practical purposes, and a stream's
//! output does not depend on the order in which other streams are consumed.
//! That makes parallel trial execution reproducible: each trial derives its
//! own generators and the results are reduced in trial order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is used for. Keeps streams for different purposes
/// disjoint even when the other key components coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// The common signal component shared by all nodes in one trial.
    SignalX = 1,
    /// Per-node observation noise.
    NoiseN = 2,
    /// Subtractive dither offsets for one (node, iteration) slot.
    Dither = 3,
    /// Additive Gaussian noise for the vector-quantizer proxy.
    ProxyNoise = 4,
    /// Graph topology draws.
    Topology = 5,
}

/// SplitMix64 mixing step. Used only for key derivation, never as the
/// output generator.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 256-bit ChaCha key from the stream coordinates and returns the
/// generator positioned at the start of that stream.
pub fn derived_rng(master: u64, trial: u64, node: u64, iteration: u64, role: Role) -> ChaCha8Rng {
    let mut state = master;
    // Absorb each coordinate; the running state chains them so that
    // (a, b) and (b, a) key different streams.
    let mut key = [0u8; 32];
    let coords = [trial, node, iteration, role as u64];
    let mut words = [0u64; 4];
    for (w, c) in words.iter_mut().zip(coords) {
        state ^= splitmix64(&mut state).wrapping_add(c);
        *w = splitmix64(&mut state);
    }
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Derives a plain `u64` sub-seed, used where an API wants a seed rather
/// than a generator (e.g. retry seeds for graph redraws).
pub fn derived_seed(master: u64, salt: u64) -> u64 {
    let mut state = master ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    splitmix64(&mut state)
}
