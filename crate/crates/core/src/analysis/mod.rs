//! The analyze phase: attacks against first-round AES SubBytes, quality
//! metrics, and leakage-source localization.

mod cnn;
mod cpa;
mod locate;
mod metrics;
mod template;

pub use cnn::{cnn_predict, cnn_train, sbox_labels, CnnHyper, CnnModel};
pub use cpa::{cpa_attack, CpaTracker};
pub use locate::{locate_leakage, LeakLocation};
pub use metrics::{
    guessing_distance, guessing_entropy, min_traces_from_ranks, success_rate, AttackMetrics,
};
pub use template::{template_build, template_match, Templates};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::leakage::{capture_window, PowerTrace};
use crate::workloads::SBOX;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("trace set is degenerate (no sample variance anywhere)")]
    DegenerateTraces,
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("attack window length {got} does not match templates built for {expected}")]
    WindowMismatch { expected: usize, got: usize },
    #[error("training diverged (non-finite loss) with lr={lr}, epoch {epoch}")]
    NonFiniteLoss { lr: f64, epoch: usize },
    #[error("trace has an empty or missing trigger window")]
    EmptyWindow,
    #[error("key byte index {0} out of range")]
    BadByteIndex(usize),
}

/// Aligned, windowed traces ready for attacks.
///
/// Windows of different sample lengths (DFS, morphing, chaff runs) are
/// linearly resampled to a common length: the median window length by
/// default, or an explicit target.
#[derive(Debug, Clone)]
pub struct TraceSet {
    /// N windows, each `window_len` samples.
    pub windows: Vec<Vec<f32>>,
    pub plaintexts: Vec<[u8; 16]>,
    /// The campaign key; used only for evaluation and profiling labels.
    pub key: [u8; 16],
    pub window_len: usize,
}

fn resample(src: &[u16], target: usize) -> Vec<f32> {
    assert!(!src.is_empty() && target > 0);
    if src.len() == target {
        return src.iter().map(|&s| f32::from(s)).collect();
    }
    if src.len() == 1 {
        return vec![f32::from(src[0]); target];
    }
    let scale = (src.len() - 1) as f64 / (target - 1).max(1) as f64;
    (0..target)
        .map(|j| {
            let pos = j as f64 * scale;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if i + 1 < src.len() {
                (f64::from(src[i]) * (1.0 - frac) + f64::from(src[i + 1]) * frac) as f32
            } else {
                f32::from(src[i])
            }
        })
        .collect()
}

/// Windows one captured trace by its trigger edges and resamples it to
/// `target` samples; lets callers build large trace sets incrementally
/// without retaining the raw captures.
pub fn resample_window(trace: &PowerTrace, target: usize) -> Result<Vec<f32>, AnalysisError> {
    let w = capture_window(trace).map_err(|_| AnalysisError::EmptyWindow)?;
    if w.is_empty() {
        return Err(AnalysisError::EmptyWindow);
    }
    Ok(resample(w, target))
}

impl TraceSet {
    /// Builds a trace set from captured power traces, windowing each one by
    /// its trigger edges and resampling to a common length.
    pub fn from_power_traces(
        traces: &[PowerTrace],
        key: [u8; 16],
        target_len: Option<usize>,
    ) -> Result<Self, AnalysisError> {
        if traces.is_empty() {
            return Err(AnalysisError::Insufficient("no traces".into()));
        }
        let mut lens: Vec<usize> = Vec::with_capacity(traces.len());
        for t in traces {
            let w = capture_window(t).map_err(|_| AnalysisError::EmptyWindow)?;
            if w.is_empty() {
                return Err(AnalysisError::EmptyWindow);
            }
            lens.push(w.len());
        }
        let window_len = target_len.unwrap_or_else(|| {
            let mut sorted = lens.clone();
            sorted.sort_unstable();
            sorted[sorted.len() / 2]
        });
        let mut windows = Vec::with_capacity(traces.len());
        let mut plaintexts = Vec::with_capacity(traces.len());
        for t in traces {
            let w = capture_window(t).unwrap();
            windows.push(resample(w, window_len));
            plaintexts.push(t.meta.plaintext);
        }
        Ok(TraceSet {
            windows,
            plaintexts,
            key,
            window_len,
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// A new set holding the given trace index range.
    pub fn slice(&self, range: std::ops::Range<usize>) -> TraceSet {
        TraceSet {
            windows: self.windows[range.clone()].to_vec(),
            plaintexts: self.plaintexts[range].to_vec(),
            key: self.key,
            window_len: self.window_len,
        }
    }
}

/// Hamming weight of a byte.
#[inline]
pub fn hw8(v: u8) -> u8 {
    v.count_ones() as u8
}

/// The canonical first-round attack intermediate: `SBOX[ptx ^ key]`.
#[inline]
pub fn sbox_out(ptx_byte: u8, key_byte: u8) -> u8 {
    SBOX[(ptx_byte ^ key_byte) as usize]
}

/// Per-key-byte hypothesis scores.
///
/// `probs` is present for attacks with probability semantics (template,
/// CNN) and absent for CPA, whose guessing distance is therefore undefined.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyRanking {
    pub byte_index: usize,
    pub scores: Vec<f64>,
    pub probs: Option<Vec<f64>>,
}

impl KeyRanking {
    pub fn new(byte_index: usize, scores: Vec<f64>, probabilistic: bool) -> Self {
        assert_eq!(scores.len(), 256);
        let probs = probabilistic.then(|| softmax(&scores));
        KeyRanking {
            byte_index,
            scores,
            probs,
        }
    }

    /// Keys sorted by descending score; ties broken by ascending key value.
    pub fn sorted_keys(&self) -> Vec<u8> {
        let mut keys: Vec<u8> = (0..=255).collect();
        keys.sort_by(|&a, &b| {
            self.scores[b as usize]
                .partial_cmp(&self.scores[a as usize])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        keys
    }

    /// 1-based rank of a key hypothesis (1 = most likely).
    pub fn rank_of(&self, key: u8) -> usize {
        let s = self.scores[key as usize];
        let better = self
            .scores
            .iter()
            .enumerate()
            .filter(|&(i, &v)| v > s || (v == s && (i as u8) < key))
            .count();
        better + 1
    }

    pub fn best(&self) -> u8 {
        self.sorted_keys()[0]
    }
}

/// Numerically stable softmax onto the probability simplex.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}
