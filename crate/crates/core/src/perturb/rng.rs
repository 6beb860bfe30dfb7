//! Portable randomness for the jumble and repeat transforms.
//!
//! The generator is SplitMix64 (state += 0x9E3779B97F4A7C15, then the
//! standard xor-shift/multiply finalizer). Bounded draws use rejection:
//! values below `(2⁶⁴ − bound) mod bound` are discarded and the rest are
//! reduced `mod bound`. Both procedures are fixed so any implementation can
//! reproduce the same permutations and index sets from the same seed.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw from `0..bound`. `bound` must be positive.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % bound;
            }
        }
    }
}

/// Which transform the randomness is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RandomKind {
    Jumble,
    Repeat,
    /// Repeat positions drawn with replacement; a position may repeat twice.
    RepeatWithReplacement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Randomness {
    /// `output[i] = input[perm[i]]`
    Permutation(Vec<usize>),
    /// Positions to duplicate, ascending.
    Indices(Vec<usize>),
}

/// Fisher–Yates from the identity, `i` running from `m − 1` down to `1`,
/// swapping `i` with `below(i + 1)`.
pub fn seeded_permutation(m: usize, seed: u64) -> Vec<usize> {
    let mut rng = SplitMix64::new(seed);
    let mut perm: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    perm
}

/// `floor(m/2)` distinct positions by a partial Fisher–Yates over `0..m`
/// (position `i` swapped with `i + below(m − i)`), returned sorted.
pub fn seeded_repeat_indices(m: usize, seed: u64) -> Vec<usize> {
    let k = m / 2;
    let mut rng = SplitMix64::new(seed);
    let mut pool: Vec<usize> = (0..m).collect();
    for i in 0..k {
        let j = i + rng.below((m - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut chosen = pool[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

/// `floor(m/2)` independent draws of `below(m)`, sorted.
pub fn seeded_repeat_indices_with_replacement(m: usize, seed: u64) -> Vec<usize> {
    let mut rng = SplitMix64::new(seed);
    let mut chosen: Vec<usize> = (0..m / 2).map(|_| rng.below(m as u64) as usize).collect();
    chosen.sort_unstable();
    chosen
}

pub fn sample_randomness(kind: RandomKind, m: usize, seed: u64) -> Randomness {
    match kind {
        RandomKind::Jumble => Randomness::Permutation(seeded_permutation(m, seed)),
        RandomKind::Repeat => Randomness::Indices(seeded_repeat_indices(m, seed)),
        RandomKind::RepeatWithReplacement => Randomness::Indices(seeded_repeat_indices_with_replacement(m, seed)),
    }
}
