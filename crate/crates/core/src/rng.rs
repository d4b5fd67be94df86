//! Counter-based random streams.
//!
//! Every random draw in the simulator comes from a stream addressed by
//! (seed, agent, iteration, purpose). The address is hashed into a fresh
//! 256-bit ChaCha8 key, so streams are mutually independent, reproducible
//! from the scalar seed alone, and immune to changes in scheduling or worker
//! count: an agent's draws at iteration t are the same whether the step runs
//! on one thread or sixteen.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is consumed for. Separating purposes keeps draws for
/// distinct roles (batch selection vs. compression vs. dataset synthesis)
/// independent even at the same (agent, iteration) address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Synthetic dataset generation.
    DataGen,
    /// Initial batch used to seed the momentum estimator.
    InitBatch,
    /// Per-iteration minibatch selection (and gradient noise).
    Batch,
    /// Randomized compression of iterate messages.
    ThetaCompress,
    /// Randomized compression of tracker messages.
    GradCompress,
    /// Monte Carlo probes and estimators outside the main loop.
    Probe,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::DataGen => 1,
            Purpose::InitBatch => 2,
            Purpose::Batch => 3,
            Purpose::ThetaCompress => 4,
            Purpose::GradCompress => 5,
            Purpose::Probe => 6,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for (seed, agent, iteration, purpose).
pub fn stream(seed: u64, agent: u64, iteration: u64, purpose: Purpose) -> ChaCha8Rng {
    // Mix the address into the splitmix state sequentially; each absorbed
    // word passes through the full avalanche, so nearby addresses produce
    // unrelated keys.
    let mut state = seed;
    let _ = splitmix64(&mut state);
    state ^= agent.wrapping_mul(0xa076_1d64_78bd_642f);
    let _ = splitmix64(&mut state);
    state ^= iteration.wrapping_mul(0xe703_7ed1_a0b4_28db);
    let _ = splitmix64(&mut state);
    state ^= purpose.tag().wrapping_mul(0x8ebc_6af0_9c88_c6e3);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
