//! Keyed random streams.
//!
//! Every random draw in a simulation is taken from a stream addressed by
//! `(seed, agent, iteration, tag)`. Two implementations of the same
//! algorithm that compress the same quantity for the same agent at the same
//! iteration therefore consume identical randomness, independent of how the
//! agents are scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which quantity a stream is feeding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamTag {
    /// Difference compression of the decision variable, `compress(x - h_x)`.
    XDiff,
    /// Difference compression of the gradient tracker, `compress(y - h_y)`.
    YDiff,
    /// Error-feedback compression of the decision variable.
    XErrorFeedback,
    /// Error-feedback compression of the gradient tracker.
    YErrorFeedback,
    /// Anything outside the per-iteration protocol (Monte Carlo trials,
    /// initial points, data generation).
    Aux(u32),
}

impl StreamTag {
    fn code(self) -> u64 {
        match self {
            StreamTag::XDiff => 1,
            StreamTag::YDiff => 2,
            StreamTag::XErrorFeedback => 3,
            StreamTag::YErrorFeedback => 4,
            StreamTag::Aux(k) => (1 << 32) | u64::from(k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub agent: u64,
    pub iteration: u64,
    pub tag: StreamTag,
}

impl StreamKey {
    pub fn new(seed: u64, agent: usize, iteration: u64, tag: StreamTag) -> Self {
        Self {
            seed,
            agent: agent as u64,
            iteration,
            tag,
        }
    }

    /// The key packed verbatim into a 256-bit ChaCha seed. The packing is
    /// injective, so distinct keys always select distinct generators.
    fn seed_bytes(&self) -> [u8; 32] {
        let mut bytes = [0u8; 32];
        for (chunk, word) in bytes
            .chunks_exact_mut(8)
            .zip([self.seed, self.agent, self.iteration, self.tag.code()])
        {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        bytes
    }
}

/// A deterministic random stream opened from a [`StreamKey`].
#[derive(Debug, Clone)]
pub struct RngStream {
    key: StreamKey,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(key: StreamKey) -> Self {
        Self {
            inner: ChaCha8Rng::from_seed(key.seed_bytes()),
            key,
        }
    }

    /// Convenience for streams that are not tied to the iteration protocol.
    pub fn aux(seed: u64, index: u64, tag: u32) -> Self {
        Self::new(StreamKey {
            seed,
            agent: u64::MAX,
            iteration: index,
            tag: StreamTag::Aux(tag),
        })
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
