//! TRNG peripheral: a digital noise source feeding a post-processing stage,
//! with the result latched in a 32-bit memory-mapped register that is
//! refreshed periodically.
//!
//! Physical entropy does not exist in a simulator, so the noise sources are
//! seeded stochastic bit processes whose statistical defects (bias,
//! correlation) match the character of the modeled circuit. Determinism is
//! required for campaign reproducibility.

use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    /// Non-linear feedback with independent samples, slightly biased to 1.
    Nlfiro,
    /// Periodic pattern with sampling jitter.
    Pll,
    /// Markov bit process: each bit flips the previous one with p = 0.4.
    EdgeSampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostProcessing {
    /// Consecutive bit pairs folded to their XOR.
    Xor,
    /// Von Neumann corrector: 01 -> 0, 10 -> 1, 00/11 discarded.
    VonNeumann,
    /// Bits mixed into a 32-bit Fibonacci LFSR, x^32 + x^22 + x^2 + x + 1.
    Lfsr,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrngConfig {
    pub noise_source: NoiseSource,
    pub post_processing: PostProcessing,
    /// Cycles between output-register refreshes (>= 1).
    pub refresh_period: u64,
    pub seed: u64,
}

impl Default for TrngConfig {
    fn default() -> Self {
        TrngConfig {
            noise_source: NoiseSource::Nlfiro,
            post_processing: PostProcessing::Lfsr,
            refresh_period: 16,
            seed: 1,
        }
    }
}

/// NLFIRO bias: P(bit = 1).
const NLFIRO_BIAS: f64 = 0.55;
/// PLL jitter: probability a sampled bit is flipped.
const PLL_JITTER: f64 = 0.1;
/// PLL base pattern (period 5).
const PLL_PATTERN: [u8; 5] = [1, 0, 1, 1, 0];
/// Edge-sampling flip probability.
const EDGE_FLIP: f64 = 0.4;

/// Raw noise-source bit stream.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    source: NoiseSource,
    rng: Rng,
    phase: u64,
    last: u8,
}

impl NoiseStream {
    pub fn new(source: NoiseSource, seed: u64) -> Self {
        NoiseStream {
            source,
            rng: Rng::from_seed(seed),
            phase: 0,
            last: 0,
        }
    }

    pub fn next_bit(&mut self) -> u8 {
        match self.source {
            NoiseSource::Nlfiro => u8::from(self.rng.chance(NLFIRO_BIAS)),
            NoiseSource::Pll => {
                let base = PLL_PATTERN[(self.phase % 5) as usize];
                self.phase += 1;
                base ^ u8::from(self.rng.chance(PLL_JITTER))
            }
            NoiseSource::EdgeSampling => {
                if self.rng.chance(EDGE_FLIP) {
                    self.last ^= 1;
                }
                self.last
            }
        }
    }
}

/// Applies a post-processing method to a finite raw bit sequence.
/// Exposed standalone because the methods are interesting on their own;
/// the peripheral uses the same logic in streaming form.
pub fn postprocess(raw_bits: &[u8], method: PostProcessing) -> Vec<u8> {
    match method {
        PostProcessing::Xor => raw_bits.chunks_exact(2).map(|p| p[0] ^ p[1]).collect(),
        PostProcessing::VonNeumann => raw_bits
            .chunks_exact(2)
            .filter_map(|p| match (p[0], p[1]) {
                (0, 1) => Some(0),
                (1, 0) => Some(1),
                _ => None,
            })
            .collect(),
        PostProcessing::Lfsr => {
            let mut lfsr = Lfsr32::new(1);
            raw_bits.iter().map(|&b| lfsr.shift(b)).collect()
        }
    }
}

/// 32-bit Fibonacci LFSR with polynomial x^32 + x^22 + x^2 + x + 1.
/// Feedback taps at state bits 31, 21, 1, 0; input bit XORed into the
/// feedback; register shifts left.
#[derive(Debug, Clone)]
pub struct Lfsr32 {
    pub state: u32,
}

impl Lfsr32 {
    pub fn new(seed: u32) -> Self {
        Lfsr32 {
            state: if seed == 0 { 1 } else { seed },
        }
    }

    /// Shifts one input bit in and returns the bit shifted out (MSB).
    pub fn shift(&mut self, input: u8) -> u8 {
        let s = self.state;
        let out = (s >> 31) as u8;
        let fb = ((s >> 31) ^ (s >> 21) ^ (s >> 1) ^ s) as u8 & 1;
        self.state = (s << 1) | u32::from(fb ^ (input & 1));
        out
    }
}

/// The TRNG peripheral.
#[derive(Debug, Clone)]
pub struct Trng {
    noise: NoiseStream,
    method: PostProcessing,
    lfsr: Lfsr32,
    word: u32,
    refresh_period: u64,
    countdown: u64,
}

impl Trng {
    pub fn new(cfg: &TrngConfig) -> Self {
        assert!(cfg.refresh_period >= 1, "refresh_period must be >= 1");
        let mut t = Trng {
            noise: NoiseStream::new(cfg.noise_source, cfg.seed),
            method: cfg.post_processing,
            lfsr: Lfsr32::new(cfg.seed as u32),
            word: 0,
            refresh_period: cfg.refresh_period,
            countdown: cfg.refresh_period,
        };
        t.word = t.generate_word();
        t
    }

    pub fn refresh_period(&self) -> u64 {
        self.refresh_period
    }

    /// Reseeds the bit process (a fresh-entropy stand-in between traces).
    pub fn reseed(&mut self, seed: u64) {
        let source = self.noise.source;
        self.noise = NoiseStream::new(source, seed);
        self.word = self.generate_word();
        self.countdown = self.refresh_period;
    }

    /// Current latched word; reading has no side effect.
    #[inline]
    pub fn word(&self) -> u32 {
        self.word
    }

    /// One CPU cycle of wall time for the peripheral.
    #[inline]
    pub fn tick(&mut self) {
        self.countdown -= 1;
        if self.countdown == 0 {
            self.word = self.generate_word();
            self.countdown = self.refresh_period;
        }
    }

    fn next_out_bit(&mut self) -> u8 {
        match self.method {
            PostProcessing::Xor => {
                let a = self.noise.next_bit();
                let b = self.noise.next_bit();
                a ^ b
            }
            PostProcessing::VonNeumann => loop {
                let a = self.noise.next_bit();
                let b = self.noise.next_bit();
                match (a, b) {
                    (0, 1) => return 0,
                    (1, 0) => return 1,
                    _ => {}
                }
            },
            PostProcessing::Lfsr => {
                let b = self.noise.next_bit();
                self.lfsr.shift(b)
            }
        }
    }

    fn generate_word(&mut self) -> u32 {
        if self.method == PostProcessing::Lfsr {
            // Mix 32 fresh raw bits, then expose the whole register.
            for _ in 0..32 {
                let b = self.noise.next_bit();
                self.lfsr.shift(b);
            }
            return self.lfsr.state;
        }
        let mut w = 0u32;
        for i in 0..32 {
            w |= u32::from(self.next_out_bit()) << i;
        }
        w
    }
}
