//! Deterministic PRNG used for every random choice the sampler makes.
//!
//! The generator is xoshiro256** seeded by expanding a 64-bit seed through
//! SplitMix64. Bounded draws use rejection, never floating point, so a seed
//! produces the same draft on every platform and build. Changing anything in
//! this file changes which drafts seeds map to; treat it as a wire format.

use num_bigint::BigUint;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step: advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of stream `index` from `base`. Distinct indices give
/// distinct seeds for a fixed base (the map is a bijection of `index`).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut s = base;
    let key = splitmix64(&mut s);
    let mut t = index ^ key;
    splitmix64(&mut t)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExamRng {
    s: [u64; 4],
}

impl ExamRng {
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Self { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform value in `0..bound`. Panics when `bound == 0`.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        // Outputs below 2^64 mod bound are the biased tail.
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % bound;
            }
        }
    }

    /// Uniform value in `0..bound` for an arbitrary-precision bound.
    ///
    /// Bounds that fit in 64 bits go through [`ExamRng::below`]. Larger
    /// bounds draw `ceil(bits / 64)` words (least significant first), mask
    /// the top word to the bound's bit length and reject values `>= bound`.
    pub fn below_big(&mut self, bound: &BigUint) -> BigUint {
        let bits = bound.bits();
        assert!(bits > 0, "empty range");
        if bits <= 64 {
            let b = bound.iter_u64_digits().next().unwrap_or(0);
            return BigUint::from(self.below(b));
        }
        let words = bits.div_ceil(64) as usize;
        let top_bits = bits - 64 * (words as u64 - 1);
        let top_mask = if top_bits == 64 {
            u64::MAX
        } else {
            (1u64 << top_bits) - 1
        };
        loop {
            let mut digits = Vec::with_capacity(words * 2);
            for i in 0..words {
                let mut w = self.next_u64();
                if i == words - 1 {
                    w &= top_mask;
                }
                digits.push(w as u32);
                digits.push((w >> 32) as u32);
            }
            let candidate = BigUint::new(digits);
            if &candidate < bound {
                return candidate;
            }
        }
    }
}
