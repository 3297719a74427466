//! Seeded pseudo-random number generation.
//!
//! The workbench promises byte-identical outputs for a given master seed on
//! every platform, so it cannot depend on an external RNG crate whose stream
//! may change between versions. The implementation here is a fixed
//! xoshiro256** generator seeded through splitmix64, plus a Gaussian sampler
//! built from exactly-rounded arithmetic only.

/// splitmix64 step; used for seeding and for the seed-derivation mix.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const FNV_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derives a subsystem seed from the campaign master seed.
///
/// KDF: splitmix64 finalizer over
/// `master ^ fnv1a64(tag) ^ (index * 0x9E3779B97F4A7C15)`.
/// Stable across releases; documented so external tooling can reproduce
/// per-trace randomness.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut s = master ^ fnv1a64(tag.as_bytes()) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    splitmix64(&mut s)
}

/// xoshiro256** generator.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { s }
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

    pub fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    pub fn next_byte(&mut self) -> u8 {
        (self.next_u64() >> 56) as u8
    }

    /// Uniform integer in `[0, n)`. Rejection sampling, no modulo bias.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Uniform f64 in [0, 1) with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard-normal sample via the Irwin-Hall sum of 12 uniforms.
    ///
    /// Uses only additions of exactly-rounded f64 values, so the stream is
    /// bit-identical on every IEEE-754 platform (no libm involved). Tails are
    /// truncated at +/-6 sigma, which is irrelevant at trace-noise scale.
    pub fn gauss(&mut self) -> f64 {
        let mut acc = 0.0;
        for _ in 0..12 {
            acc += self.next_f64();
        }
        acc - 6.0
    }

    pub fn fill_bytes(&mut self, out: &mut [u8]) {
        for chunk in out.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }

    /// Fisher-Yates shuffle of indices 0..n.
    pub fn shuffled_indices(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i as u64 + 1) as usize;
            idx.swap(i, j);
        }
        idx
    }

    /// Geometric sample: number of trials until first success, minimum 1.
    /// Mean is approximately `1/p` for small p.
    pub fn geometric(&mut self, p: f64) -> u64 {
        let mut n = 1;
        while !self.chance(p) && n < 1_000_000 {
            n += 1;
        }
        n
    }
}
