//! Correlation power analysis against first-round SubBytes.
//!
//! Hypothesis for key guess k on trace i: `HW(SBOX[ptx_i[b] ^ k])`. The
//! score of a guess is the maximum absolute Pearson correlation between
//! the hypothesis vector and any sample column. Two equivalent engines are
//! provided: a one-shot attack that partitions traces by plaintext-byte
//! value (cheap for large N), and an incremental tracker that can produce
//! a ranking after every added trace (for minimum-traces searches). Both
//! compute the same statistic.

#![allow(clippy::needless_range_loop)] // index loops mirror the statistics

use super::{hw8, sbox_out, AnalysisError, KeyRanking, TraceSet};

/// sum over classes of hw(sbox(v ^ k)) weighted stats, shared by both paths
fn hypothesis_table(byte_index: usize) -> [[f64; 256]; 256] {
    // h[k][v] = HW(SBOX[v ^ k]); byte_index does not change the table but
    // keeps the call sites honest.
    let _ = byte_index;
    let mut h = [[0.0; 256]; 256];
    for (k, row) in h.iter_mut().enumerate() {
        for (v, cell) in row.iter_mut().enumerate() {
            *cell = f64::from(hw8(sbox_out(v as u8, k as u8)));
        }
    }
    h
}

/// One-shot CPA over a whole trace set.
pub fn cpa_attack(ts: &TraceSet, byte_index: usize) -> Result<KeyRanking, AnalysisError> {
    if byte_index >= 16 {
        return Err(AnalysisError::BadByteIndex(byte_index));
    }
    if ts.len() < 2 {
        return Err(AnalysisError::Insufficient(format!(
            "CPA needs at least 2 traces, got {}",
            ts.len()
        )));
    }
    let n = ts.len() as f64;
    let l = ts.window_len;

    // Partition sums by plaintext byte value.
    let mut counts = [0f64; 256];
    let mut value_sums = vec![[0f64; 256]; l]; // [sample][value]
    let mut sum_x = vec![0f64; l];
    let mut sum_x2 = vec![0f64; l];
    for (w, p) in ts.windows.iter().zip(&ts.plaintexts) {
        let v = p[byte_index] as usize;
        counts[v] += 1.0;
        for (j, &s) in w.iter().enumerate() {
            let x = f64::from(s);
            value_sums[j][v] += x;
            sum_x[j] += x;
            sum_x2[j] += x * x;
        }
    }
    let col_var: Vec<f64> = (0..l)
        .map(|j| n * sum_x2[j] - sum_x[j] * sum_x[j])
        .collect();
    if col_var.iter().all(|&v| v <= 0.0) {
        return Err(AnalysisError::DegenerateTraces);
    }

    let h = hypothesis_table(byte_index);
    let mut scores = vec![0.0; 256];
    for k in 0..256 {
        let hk = &h[k];
        let mut sum_h = 0.0;
        let mut sum_h2 = 0.0;
        for v in 0..256 {
            sum_h += counts[v] * hk[v];
            sum_h2 += counts[v] * hk[v] * hk[v];
        }
        let var_h = n * sum_h2 - sum_h * sum_h;
        if var_h <= 0.0 {
            scores[k] = 0.0;
            continue;
        }
        let mut best = 0.0f64;
        for j in 0..l {
            if col_var[j] <= 0.0 {
                continue;
            }
            let mut sum_hx = 0.0;
            let vs = &value_sums[j];
            for v in 0..256 {
                sum_hx += hk[v] * vs[v];
            }
            let cov = n * sum_hx - sum_h * sum_x[j];
            let corr = cov / (var_h * col_var[j]).sqrt();
            let a = corr.abs();
            if a > best {
                best = a;
            }
        }
        scores[k] = best;
    }
    Ok(KeyRanking::new(byte_index, scores, false))
}

/// Incremental CPA: add traces one at a time, ask for a ranking at any
/// prefix. Keeps per-(guess, sample) cross sums, so `add` is O(256 * L).
pub struct CpaTracker {
    byte_index: usize,
    window_len: usize,
    n: usize,
    h: Box<[[f64; 256]; 256]>,
    /// per guess: sum over traces of h * x[j]
    sum_hx: Vec<Vec<f64>>,
    sum_h: [f64; 256],
    sum_h2: [f64; 256],
    sum_x: Vec<f64>,
    sum_x2: Vec<f64>,
}

impl CpaTracker {
    pub fn new(byte_index: usize, window_len: usize) -> Self {
        CpaTracker {
            byte_index,
            window_len,
            n: 0,
            h: Box::new(hypothesis_table(byte_index)),
            sum_hx: vec![vec![0.0; window_len]; 256],
            sum_h: [0.0; 256],
            sum_h2: [0.0; 256],
            sum_x: vec![0.0; window_len],
            sum_x2: vec![0.0; window_len],
        }
    }

    pub fn traces_seen(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, window: &[f32], ptx: &[u8; 16]) {
        assert_eq!(window.len(), self.window_len);
        let v = ptx[self.byte_index] as usize;
        for k in 0..256 {
            let hv = self.h[k][v];
            if hv == 0.0 {
                continue;
            }
            let row = &mut self.sum_hx[k];
            for (j, &s) in window.iter().enumerate() {
                row[j] += hv * f64::from(s);
            }
            self.sum_h[k] += hv;
            self.sum_h2[k] += hv * hv;
        }
        for (j, &s) in window.iter().enumerate() {
            let x = f64::from(s);
            self.sum_x[j] += x;
            self.sum_x2[j] += x * x;
        }
        self.n += 1;
    }

    pub fn ranking(&self) -> KeyRanking {
        let n = self.n as f64;
        let l = self.window_len;
        let col_var: Vec<f64> = (0..l)
            .map(|j| n * self.sum_x2[j] - self.sum_x[j] * self.sum_x[j])
            .collect();
        let mut scores = vec![0.0; 256];
        if self.n < 2 {
            return KeyRanking::new(self.byte_index, scores, false);
        }
        for k in 0..256 {
            let var_h = n * self.sum_h2[k] - self.sum_h[k] * self.sum_h[k];
            if var_h <= 0.0 {
                continue;
            }
            let mut best = 0.0f64;
            let row = &self.sum_hx[k];
            for j in 0..l {
                if col_var[j] <= 0.0 {
                    continue;
                }
                let cov = n * row[j] - self.sum_h[k] * self.sum_x[j];
                let a = (cov / (var_h * col_var[j]).sqrt()).abs();
                if a > best {
                    best = a;
                }
            }
            scores[k] = best;
        }
        KeyRanking::new(self.byte_index, scores, false)
    }
}
