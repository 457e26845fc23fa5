//! Deterministic random number generation.
//!
//! All randomness in this crate (dataset positions, scalar fields, initial
//! centroid draws, empty-slot repair draws) flows through [`SplitMix64`].
//! The generator is pinned to a published algorithm on purpose: a run is
//! reproducible bit-for-bit from its seed, and an implementation in another
//! language can replay the exact same draw stream.
//!
//! Uniform floats are derived as `(next_u64() >> 11) * 2^-53`, i.e. 53
//! uniform mantissa bits in `[0, 1)`.

/// Sebastiano Vigna's SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[low, high)`. Degenerate ranges return `low`.
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.next_f64()
    }
}
