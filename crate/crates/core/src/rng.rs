//! splitmix64, the only PRNG used anywhere in the toolkit.
//!
//! Every shuffled order and every hash permutation is derived from this
//! generator, so outputs are bit-identical across platforms and runs.

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 output finalizer.
#[inline]
pub const fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// First output of a splitmix64 generator whose state starts at `x`.
#[inline]
pub const fn splitmix64(x: u64) -> u64 {
    mix64(x.wrapping_add(GOLDEN_GAMMA))
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub const fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Draw in `[0, bound)` by plain modulo reduction.
    #[inline]
    pub fn below(&mut self, bound: u64) -> u64 {
        self.next() % bound
    }
}

/// Seed for the shuffle of epoch `epoch` under the run seed `seed`.
pub const fn epoch_seed(seed: u64, epoch: u64) -> u64 {
    splitmix64(seed ^ GOLDEN_GAMMA.wrapping_mul(epoch + 1))
}

/// In-place Fisher–Yates shuffle, walking `i` from the end down to 1.
pub fn fisher_yates<T>(items: &mut [T], rng: &mut SplitMix64) {
    for i in (1..items.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        items.swap(i, j);
    }
}
