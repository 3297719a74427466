//! Small convolutional network classifying the first-round SubBytes output
//! byte (256 classes) from a trace window.
//!
//! Fixed topology: conv(8 filters, kernel 11, same padding, ReLU) ->
//! average-pool 4 -> conv(16 filters, kernel 11, same padding, ReLU) ->
//! average-pool 4 -> dense 256-way softmax. Training is plain mini-batch
//! gradient descent with a seeded shuffle; everything is f64 and
//! hand-differentiated, so runs are bit-reproducible and the gradients can
//! be checked against finite differences.

use serde::{Deserialize, Serialize};

use super::{sbox_out, AnalysisError, KeyRanking, TraceSet};
use crate::rng::Rng;

const C1: usize = 8;
const C2: usize = 16;
const K: usize = 11;
const PAD: isize = (K as isize - 1) / 2;
const CLASSES: usize = 256;
const POOL: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnHyper {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub batch: usize,
}

impl Default for CnnHyper {
    fn default() -> Self {
        CnnHyper {
            epochs: 20,
            lr: 0.02,
            seed: 1,
            batch: 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CnnModel {
    pub input_len: usize,
    p1: usize,
    p2: usize,
    feat: usize,
    params: Vec<f64>,
    norm_mean: f64,
    norm_std: f64,
    pub hyper: CnnHyper,
}

// Flat parameter layout.
const W1: usize = 0; // C1 * K
const B1: usize = W1 + C1 * K;
const W2: usize = B1 + C1; // C2 * C1 * K
const B2: usize = W2 + C2 * C1 * K;
const WD: usize = B2 + C2; // CLASSES * feat

struct Acts {
    x: Vec<f64>,    // normalized input, L
    a1: Vec<f64>,   // C1 x L (post-ReLU)
    p1: Vec<f64>,   // C1 x P1
    a2: Vec<f64>,   // C2 x P1 (post-ReLU)
    p2: Vec<f64>,   // C2 x P2
    logp: Vec<f64>, // log-softmax over classes
}

impl CnnModel {
    fn new(input_len: usize, hyper: CnnHyper, norm_mean: f64, norm_std: f64) -> Self {
        let p1 = input_len / POOL;
        let p2 = p1 / POOL;
        let feat = C2 * p2;
        let n_params = WD + CLASSES * feat + CLASSES;
        let mut rng = Rng::from_seed(hyper.seed);
        let mut params = vec![0.0; n_params];
        let mut init = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[range] {
                *p = (2.0 * rng.next_f64() - 1.0) * limit;
            }
        };
        init(W1..B1, K, K * C1);
        init(W2..B2, C1 * K, C2 * K);
        init(WD..WD + CLASSES * feat, feat, CLASSES);
        CnnModel {
            input_len,
            p1,
            p2,
            feat,
            params,
            norm_mean,
            norm_std,
            hyper,
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn param(&self, i: usize) -> f64 {
        self.params[i]
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        self.params[i] = v;
    }

    fn bd(&self) -> usize {
        WD + CLASSES * self.feat
    }

    fn forward(&self, window: &[f32]) -> Acts {
        let l = self.input_len;
        let x: Vec<f64> = window
            .iter()
            .map(|&s| (f64::from(s) - self.norm_mean) / self.norm_std)
            .collect();
        // conv1 (same padding) + ReLU
        let mut a1 = vec![0.0; C1 * l];
        for f in 0..C1 {
            let w = &self.params[W1 + f * K..W1 + (f + 1) * K];
            let b = self.params[B1 + f];
            for t in 0..l {
                let mut z = b;
                for (u, &wu) in w.iter().enumerate() {
                    let src = t as isize + u as isize - PAD;
                    if src >= 0 && (src as usize) < l {
                        z += wu * x[src as usize];
                    }
                }
                a1[f * l + t] = z.max(0.0);
            }
        }
        // pool1
        let p1l = self.p1;
        let mut p1 = vec![0.0; C1 * p1l];
        for f in 0..C1 {
            for t in 0..p1l {
                let mut acc = 0.0;
                for u in 0..POOL {
                    acc += a1[f * l + t * POOL + u];
                }
                p1[f * p1l + t] = acc / POOL as f64;
            }
        }
        // conv2 + ReLU
        let mut a2 = vec![0.0; C2 * p1l];
        for g in 0..C2 {
            let b = self.params[B2 + g];
            for t in 0..p1l {
                let mut z = b;
                for f in 0..C1 {
                    let wbase = W2 + (g * C1 + f) * K;
                    for u in 0..K {
                        let src = t as isize + u as isize - PAD;
                        if src >= 0 && (src as usize) < p1l {
                            z += self.params[wbase + u] * p1[f * p1l + src as usize];
                        }
                    }
                }
                a2[g * p1l + t] = z.max(0.0);
            }
        }
        // pool2
        let p2l = self.p2;
        let mut p2 = vec![0.0; C2 * p2l];
        for g in 0..C2 {
            for t in 0..p2l {
                let mut acc = 0.0;
                for u in 0..POOL {
                    acc += a2[g * p1l + t * POOL + u];
                }
                p2[g * p2l + t] = acc / POOL as f64;
            }
        }
        // dense + log-softmax
        let bd = self.bd();
        let mut logits = vec![0.0; CLASSES];
        for (c, logit) in logits.iter_mut().enumerate() {
            let wbase = WD + c * self.feat;
            let mut z = self.params[bd + c];
            for (i, &v) in p2.iter().enumerate() {
                z += self.params[wbase + i] * v;
            }
            *logit = z;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
        let logp = logits.iter().map(|&z| z - lse).collect();
        Acts {
            x,
            a1,
            p1,
            a2,
            p2,
            logp,
        }
    }

    /// Cross-entropy loss and parameter gradient for one example.
    fn backward(&self, acts: &Acts, label: u8, grads: &mut [f64]) -> f64 {
        let l = self.input_len;
        let (p1l, p2l) = (self.p1, self.p2);
        let bd = self.bd();
        let loss = -acts.logp[label as usize];

        // dense layer
        let mut dlogits: Vec<f64> = acts.logp.iter().map(|&lp| lp.exp()).collect();
        dlogits[label as usize] -= 1.0;
        let mut dp2 = vec![0.0; C2 * p2l];
        for c in 0..CLASSES {
            let dz = dlogits[c];
            if dz == 0.0 {
                continue;
            }
            let wbase = WD + c * self.feat;
            grads[bd + c] += dz;
            for i in 0..self.feat {
                grads[wbase + i] += dz * acts.p2[i];
                dp2[i] += dz * self.params[wbase + i];
            }
        }
        // pool2 backward
        let mut da2 = vec![0.0; C2 * p1l];
        for g in 0..C2 {
            for t in 0..p2l {
                let d = dp2[g * p2l + t] / POOL as f64;
                for u in 0..POOL {
                    da2[g * p1l + t * POOL + u] = d;
                }
            }
        }
        // conv2 backward (through ReLU)
        let mut dp1 = vec![0.0; C1 * p1l];
        for g in 0..C2 {
            for t in 0..p1l {
                if acts.a2[g * p1l + t] <= 0.0 {
                    continue;
                }
                let dz = da2[g * p1l + t];
                if dz == 0.0 {
                    continue;
                }
                grads[B2 + g] += dz;
                for f in 0..C1 {
                    let wbase = W2 + (g * C1 + f) * K;
                    for u in 0..K {
                        let src = t as isize + u as isize - PAD;
                        if src >= 0 && (src as usize) < p1l {
                            let s = src as usize;
                            grads[wbase + u] += dz * acts.p1[f * p1l + s];
                            dp1[f * p1l + s] += dz * self.params[wbase + u];
                        }
                    }
                }
            }
        }
        // pool1 backward
        let mut da1 = vec![0.0; C1 * l];
        for f in 0..C1 {
            for t in 0..p1l {
                let d = dp1[f * p1l + t] / POOL as f64;
                for u in 0..POOL {
                    da1[f * l + t * POOL + u] = d;
                }
            }
        }
        // conv1 backward
        for f in 0..C1 {
            let wbase = W1 + f * K;
            for t in 0..l {
                if acts.a1[f * l + t] <= 0.0 {
                    continue;
                }
                let dz = da1[f * l + t];
                if dz == 0.0 {
                    continue;
                }
                grads[B1 + f] += dz;
                for u in 0..K {
                    let src = t as isize + u as isize - PAD;
                    if src >= 0 && (src as usize) < l {
                        grads[wbase + u] += dz * acts.x[src as usize];
                    }
                }
            }
        }
        loss
    }

    /// Mean loss and gradient over a batch (test and training helper).
    pub fn loss_and_grads(&self, windows: &[&[f32]], labels: &[u8]) -> (f64, Vec<f64>) {
        let mut grads = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (w, &y) in windows.iter().zip(labels) {
            let acts = self.forward(w);
            loss += self.backward(&acts, y, &mut grads);
        }
        let scale = 1.0 / windows.len() as f64;
        for g in &mut grads {
            *g *= scale;
        }
        (loss * scale, grads)
    }

    /// Class log-probabilities for one window.
    pub fn log_probs(&self, window: &[f32]) -> Vec<f64> {
        self.forward(window).logp
    }

    /// Fraction of examples whose argmax class matches the label.
    pub fn accuracy(&self, ts: &TraceSet, labels: &[u8]) -> f64 {
        let mut hits = 0usize;
        for (w, &y) in ts.windows.iter().zip(labels) {
            let lp = self.log_probs(w);
            let best = lp
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            hits += usize::from(best == y as usize);
        }
        hits as f64 / labels.len() as f64
    }
}

/// Trains the classifier on profiling traces labeled with the SubBytes
/// output byte value.
pub fn cnn_train(
    profiling: &TraceSet,
    labels: &[u8],
    hyper: CnnHyper,
) -> Result<CnnModel, AnalysisError> {
    if profiling.window_len < 32 {
        return Err(AnalysisError::Insufficient(format!(
            "window length {} below the minimum of 32",
            profiling.window_len
        )));
    }
    if profiling.len() != labels.len() || profiling.is_empty() {
        return Err(AnalysisError::Insufficient(
            "profiling traces and labels must be non-empty and equal-length".into(),
        ));
    }
    // Global standardization constants from the training set.
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut count = 0usize;
    for w in &profiling.windows {
        for &s in w {
            sum += f64::from(s);
            sumsq += f64::from(s) * f64::from(s);
            count += 1;
        }
    }
    let mean = sum / count as f64;
    let var = (sumsq / count as f64 - mean * mean).max(1e-12);
    let mut model = CnnModel::new(profiling.window_len, hyper, mean, var.sqrt());

    let mut rng = Rng::from_seed(hyper.seed ^ 0x5EED_CAFE);
    let n = profiling.len();
    for epoch in 0..hyper.epochs {
        let order = rng.shuffled_indices(n);
        for chunk in order.chunks(hyper.batch.max(1)) {
            let windows: Vec<&[f32]> = chunk
                .iter()
                .map(|&i| profiling.windows[i].as_slice())
                .collect();
            let batch_labels: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = model.loss_and_grads(&windows, &batch_labels);
            if !loss.is_finite() {
                return Err(AnalysisError::NonFiniteLoss {
                    lr: hyper.lr,
                    epoch,
                });
            }
            for (p, g) in model.params.iter_mut().zip(&grads) {
                *p -= hyper.lr * g;
            }
        }
    }
    Ok(model)
}

/// Accumulates per-trace class log-probabilities into key-hypothesis scores
/// via the plaintext mapping, yielding a ranking for the byte.
pub fn cnn_predict(
    model: &CnnModel,
    attack: &TraceSet,
    byte_index: usize,
) -> Result<KeyRanking, AnalysisError> {
    if byte_index >= 16 {
        return Err(AnalysisError::BadByteIndex(byte_index));
    }
    if attack.window_len != model.input_len {
        return Err(AnalysisError::WindowMismatch {
            expected: model.input_len,
            got: attack.window_len,
        });
    }
    if attack.is_empty() {
        return Err(AnalysisError::Insufficient("empty attack set".into()));
    }
    let mut scores = vec![0.0; 256];
    for (w, p) in attack.windows.iter().zip(&attack.plaintexts) {
        let logp = model.log_probs(w);
        let v = p[byte_index];
        for (k, s) in scores.iter_mut().enumerate() {
            *s += logp[sbox_out(v, k as u8) as usize];
        }
    }
    Ok(KeyRanking::new(byte_index, scores, true))
}

/// Labels for profiling: the SubBytes output byte under the known key.
pub fn sbox_labels(ts: &TraceSet, byte_index: usize) -> Vec<u8> {
    ts.plaintexts
        .iter()
        .map(|p| sbox_out(p[byte_index], ts.key[byte_index]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::hw8;

    /// Tiny separable set: one sample region encodes the class HW cleanly.
    fn hw_separable_set(key: [u8; 16], n: usize, sigma: f64, seed: u64, l: usize) -> TraceSet {
        let mut rng = Rng::from_seed(seed);
        let mut windows = Vec::new();
        let mut plaintexts = Vec::new();
        for _ in 0..n {
            let mut p = [0u8; 16];
            rng.fill_bytes(&mut p);
            let leak = f64::from(hw8(sbox_out(p[0], key[0])));
            let w: Vec<f32> = (0..l)
                .map(|j| {
                    let base = if (16..24).contains(&j) {
                        10.0 + 4.0 * leak
                    } else {
                        10.0
                    };
                    (base + rng.gauss() * sigma) as f32
                })
                .collect();
            windows.push(w);
            plaintexts.push(p);
        }
        TraceSet {
            windows,
            plaintexts,
            key,
            window_len: l,
        }
    }

    #[test]
    fn untrained_model_is_at_chance_level() {
        let key = [0x42u8; 16];
        let ts = hw_separable_set(key, 256, 1.0, 3, 48);
        // average over a few seeds: expected GE about 128.5 +/- 15
        let mut ges = Vec::new();
        for seed in 0..5 {
            let model = CnnModel::new(
                48,
                CnnHyper {
                    seed,
                    ..Default::default()
                },
                10.0,
                4.0,
            );
            let r = cnn_predict(&model, &ts, 0).unwrap();
            ges.push(r.rank_of(key[0]) as f64);
        }
        let ge = ges.iter().sum::<f64>() / ges.len() as f64;
        assert!((ge - 128.5).abs() < 60.0, "chance-level GE {ge}");
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let key = [0x11u8; 16];
        let ts = hw_separable_set(key, 8, 0.5, 5, 40);
        let labels = sbox_labels(&ts, 0);
        let model = cnn_train(
            &ts,
            &labels,
            CnnHyper {
                epochs: 1,
                lr: 0.01,
                seed: 2,
                batch: 4,
            },
        )
        .unwrap();
        let windows: Vec<&[f32]> = ts.windows.iter().map(|w| w.as_slice()).collect();
        let (_, grads) = model.loss_and_grads(&windows, &labels);
        // probe a spread of parameters across all layers
        let n = model.n_params();
        let picks = [
            0,
            45,
            B1 + 3,
            W2 + 100,
            B2 + 7,
            WD + 17,
            n - 1,
            n - 200,
            W2 + 900,
            70,
        ];
        let h = 1e-5;
        for &i in &picks {
            let mut m_plus = model.clone();
            m_plus.set_param(i, model.param(i) + h);
            let (lp, _) = m_plus.loss_and_grads(&windows, &labels);
            let mut m_minus = model.clone();
            m_minus.set_param(i, model.param(i) - h);
            let (lm, _) = m_minus.loss_and_grads(&windows, &labels);
            let fd = (lp - lm) / (2.0 * h);
            let denom = grads[i].abs().max(fd.abs()).max(1e-8);
            let rel = (grads[i] - fd).abs() / denom;
            assert!(
                rel < 1e-4,
                "param {i}: analytic {} vs fd {fd}, rel {rel}",
                grads[i]
            );
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let key = [0x9Du8; 16];
        let ts = hw_separable_set(key, 64, 0.5, 6, 40);
        let labels = sbox_labels(&ts, 0);
        let hyper = CnnHyper {
            epochs: 2,
            lr: 0.02,
            seed: 7,
            batch: 16,
        };
        let a = cnn_train(&ts, &labels, hyper).unwrap();
        let b = cnn_train(&ts, &labels, hyper).unwrap();
        assert_eq!(a.params, b.params);
        let ra = cnn_predict(&a, &ts, 0).unwrap();
        let rb = cnn_predict(&b, &ts, 0).unwrap();
        assert_eq!(ra.scores, rb.scores);
    }

    #[test]
    fn learns_noiseless_separable_data() {
        let key = [0x5Au8; 16];
        let train = hw_separable_set(key, 1200, 0.1, 8, 48);
        let labels = sbox_labels(&train, 0);
        let model = cnn_train(
            &train,
            &labels,
            CnnHyper {
                epochs: 20,
                lr: 0.05,
                seed: 3,
                batch: 32,
            },
        )
        .unwrap();
        // HW classes cap single-trace accuracy, but key ranking over a
        // fresh attack set must converge to rank 1.
        let attack = hw_separable_set(key, 100, 0.1, 99, 48);
        let r = cnn_predict(&model, &attack, 0).unwrap();
        assert_eq!(r.rank_of(key[0]), 1, "GE {}", r.rank_of(key[0]));
        let p = r.probs.as_ref().unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn short_window_rejected() {
        let key = [1u8; 16];
        let ts = hw_separable_set(key, 16, 0.5, 4, 16);
        let labels = sbox_labels(&ts, 0);
        assert!(matches!(
            cnn_train(&ts, &labels, CnnHyper::default()),
            Err(AnalysisError::Insufficient(_))
        ));
    }
}
