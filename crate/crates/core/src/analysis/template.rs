//! Template attack: multivariate-Gaussian models of the trace at a few
//! points of interest, one model per Hamming-weight class of the
//! first-round SubBytes output, matched by Bayes log-likelihood.

#![allow(clippy::needless_range_loop)] // index loops mirror the matrix math

use super::{hw8, sbox_out, AnalysisError, KeyRanking, TraceSet};

const N_CLASSES: usize = 9; // HW of a byte: 0..=8

#[derive(Debug, Clone)]
pub struct Templates {
    pub byte_index: usize,
    pub window_len: usize,
    pub pois: Vec<usize>,
    /// Per class: mean vector over the POIs.
    pub means: Vec<Vec<f64>>,
    /// Inverse of the pooled, ridge-regularized covariance.
    inv_cov: Vec<Vec<f64>>,
    log_det: f64,
}

/// Builds templates from a profiling set with a known key: each trace is
/// labeled with `HW(SBOX[ptx ^ key])`, POIs are the `n_poi` samples with
/// the largest between-class variance of class means, and a single pooled
/// covariance (ridge term `1e-6 * mean(diag)`) is shared by all classes.
pub fn template_build(
    profiling: &TraceSet,
    byte_index: usize,
    n_poi: usize,
) -> Result<Templates, AnalysisError> {
    if byte_index >= 16 {
        return Err(AnalysisError::BadByteIndex(byte_index));
    }
    let l = profiling.window_len;
    let n = profiling.len();
    let labels: Vec<usize> = profiling
        .plaintexts
        .iter()
        .map(|p| hw8(sbox_out(p[byte_index], profiling.key[byte_index])) as usize)
        .collect();
    let mut class_counts = [0usize; N_CLASSES];
    for &c in &labels {
        class_counts[c] += 1;
    }
    if class_counts.iter().any(|&c| c < 2) {
        return Err(AnalysisError::Insufficient(format!(
            "need >= 2 profiling traces per class, got {class_counts:?}"
        )));
    }

    // Class means over the full window.
    let mut class_means = vec![vec![0f64; l]; N_CLASSES];
    for (w, &c) in profiling.windows.iter().zip(&labels) {
        for (j, &s) in w.iter().enumerate() {
            class_means[c][j] += f64::from(s);
        }
    }
    for (c, m) in class_means.iter_mut().enumerate() {
        for v in m.iter_mut() {
            *v /= class_counts[c] as f64;
        }
    }
    let mut grand = vec![0f64; l];
    for (c, m) in class_means.iter().enumerate() {
        for (j, &v) in m.iter().enumerate() {
            grand[j] += v * class_counts[c] as f64 / n as f64;
        }
    }

    // POIs: top samples by between-class variance.
    let mut between: Vec<(usize, f64)> = (0..l)
        .map(|j| {
            let s: f64 = class_means
                .iter()
                .enumerate()
                .map(|(c, m)| class_counts[c] as f64 * (m[j] - grand[j]).powi(2))
                .sum();
            (j, s)
        })
        .collect();
    between.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let n_poi = n_poi.clamp(1, l);
    let mut pois: Vec<usize> = between[..n_poi].iter().map(|&(j, _)| j).collect();
    pois.sort_unstable();

    // Class means at the POIs and pooled covariance.
    let means: Vec<Vec<f64>> = class_means
        .iter()
        .map(|m| pois.iter().map(|&j| m[j]).collect())
        .collect();
    let mut cov = vec![vec![0f64; n_poi]; n_poi];
    for (w, &c) in profiling.windows.iter().zip(&labels) {
        let d: Vec<f64> = pois
            .iter()
            .enumerate()
            .map(|(pi, &j)| f64::from(w[j]) - means[c][pi])
            .collect();
        for a in 0..n_poi {
            for b in 0..n_poi {
                cov[a][b] += d[a] * d[b];
            }
        }
    }
    let denom = (n - N_CLASSES) as f64;
    let mut diag_mean = 0.0;
    for a in 0..n_poi {
        for b in 0..n_poi {
            cov[a][b] /= denom;
        }
        diag_mean += cov[a][a];
    }
    diag_mean /= n_poi as f64;
    let ridge = 1e-6 * diag_mean.max(f64::MIN_POSITIVE);
    for (a, row) in cov.iter_mut().enumerate() {
        row[a] += ridge;
    }

    let (inv_cov, log_det) = invert_spd(&cov).ok_or_else(|| {
        AnalysisError::Insufficient("covariance not invertible even with ridge".into())
    })?;

    Ok(Templates {
        byte_index,
        window_len: l,
        pois,
        means,
        inv_cov,
        log_det,
    })
}

/// Gauss-Jordan inverse with partial pivoting plus log-determinant.
/// Fine for the few dozen POIs templates use.
fn invert_spd(m: &[Vec<f64>]) -> Option<(Vec<Vec<f64>>, f64)> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    let mut log_det = 0.0;
    for col in 0..n {
        let (pivot, pv) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())?;
        if pv == 0.0 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        log_det += d.abs().ln();
        for j in 0..n {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for j in 0..n {
                        a[r][j] -= f * a[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Some((inv, log_det))
}

impl Templates {
    /// Gaussian log-likelihood of one trace under one class model.
    fn log_likelihood(&self, window: &[f32], class: usize) -> f64 {
        let d: Vec<f64> = self
            .pois
            .iter()
            .enumerate()
            .map(|(pi, &j)| f64::from(window[j]) - self.means[class][pi])
            .collect();
        let n = d.len();
        let mut quad = 0.0;
        for a in 0..n {
            let mut acc = 0.0;
            for b in 0..n {
                acc += self.inv_cov[a][b] * d[b];
            }
            quad += d[a] * acc;
        }
        -0.5 * (quad + self.log_det + n as f64 * (2.0 * std::f64::consts::PI).ln())
    }
}

/// Scores every key guess by the summed log-likelihood of the attack traces
/// under the class implied by `(ptx, k)`. Log-likelihood accumulation is a
/// sum, hence order-invariant.
pub fn template_match(
    templates: &Templates,
    attack: &TraceSet,
    byte_index: usize,
) -> Result<KeyRanking, AnalysisError> {
    if byte_index != templates.byte_index {
        return Err(AnalysisError::BadByteIndex(byte_index));
    }
    if attack.is_empty() {
        return Err(AnalysisError::Insufficient("empty attack set".into()));
    }
    if attack.window_len != templates.window_len {
        return Err(AnalysisError::WindowMismatch {
            expected: templates.window_len,
            got: attack.window_len,
        });
    }
    let mut scores = vec![0.0; 256];
    for (w, p) in attack.windows.iter().zip(&attack.plaintexts) {
        // one likelihood per class, shared by all guesses mapping onto it
        let class_ll: Vec<f64> = (0..N_CLASSES)
            .map(|c| templates.log_likelihood(w, c))
            .collect();
        let v = p[byte_index];
        for (k, s) in scores.iter_mut().enumerate() {
            *s += class_ll[hw8(sbox_out(v, k as u8)) as usize];
        }
    }
    Ok(KeyRanking::new(byte_index, scores, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    /// Synthetic profiling set: one sample carries the HW class plus noise.
    fn synthetic_set(key: [u8; 16], n: usize, sigma: f64, seed: u64) -> TraceSet {
        let mut rng = Rng::from_seed(seed);
        let mut windows = Vec::new();
        let mut plaintexts = Vec::new();
        for _ in 0..n {
            let mut p = [0u8; 16];
            rng.fill_bytes(&mut p);
            let leak = f64::from(hw8(sbox_out(p[0], key[0])));
            windows.push(vec![
                (10.0 + rng.gauss() * sigma) as f32,
                (10.0 + leak + rng.gauss() * sigma) as f32,
                (10.0 + rng.gauss() * sigma) as f32,
            ]);
            plaintexts.push(p);
        }
        TraceSet {
            windows,
            plaintexts,
            key,
            window_len: 3,
        }
    }

    #[test]
    fn poi_lands_on_the_leaking_sample() {
        let key = [0x3Cu8; 16];
        let ts = synthetic_set(key, 4000, 0.3, 1);
        let tpl = template_build(&ts, 0, 1).unwrap();
        assert_eq!(tpl.pois, vec![1]);
        // class means increase with HW
        for c in 1..9 {
            assert!(tpl.means[c][0] > tpl.means[c - 1][0]);
        }
    }

    #[test]
    fn matching_profiling_set_recovers_key() {
        let key = [0x77u8; 16];
        let ts = synthetic_set(key, 5000, 0.5, 2);
        let tpl = template_build(&ts, 0, 2).unwrap();
        let attack = ts.slice(0..64);
        let r = template_match(&tpl, &attack, 0).unwrap();
        assert_eq!(r.rank_of(key[0]), 1);
        let p = r.probs.as_ref().unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_disjoint_constant_classes_match_perfectly() {
        // Classes built by hand: traces equal 0 or 1 exactly, plus a hair of
        // noise so the covariance is positive.
        let key = [0u8; 16];
        let mut rng = Rng::from_seed(5);
        let mut windows = Vec::new();
        let mut plaintexts = Vec::new();
        for i in 0..1024u32 {
            let mut p = [0u8; 16];
            rng.fill_bytes(&mut p);
            p[0] = i as u8; // cycle all values so every HW class is populated
            let hw = f64::from(hw8(sbox_out(p[0], 0)));
            windows.push(vec![(hw + rng.gauss() * 1e-3) as f32]);
            plaintexts.push(p);
        }
        let ts = TraceSet {
            windows,
            plaintexts,
            key,
            window_len: 1,
        };
        let tpl = template_build(&ts, 0, 1).unwrap();
        let r = template_match(&tpl, &ts.slice(0..16), 0).unwrap();
        assert_eq!(r.rank_of(0), 1);
    }

    #[test]
    fn singular_covariance_survives_via_ridge() {
        // Constant second sample makes the raw covariance singular.
        let key = [9u8; 16];
        let mut rng = Rng::from_seed(6);
        let mut windows = Vec::new();
        let mut plaintexts = Vec::new();
        for _ in 0..400 {
            let mut p = [0u8; 16];
            rng.fill_bytes(&mut p);
            let leak = f64::from(hw8(sbox_out(p[0], key[0])));
            windows.push(vec![(leak + rng.gauss() * 0.2) as f32, 42.0]);
            plaintexts.push(p);
        }
        let ts = TraceSet {
            windows,
            plaintexts,
            key,
            window_len: 2,
        };
        let tpl = template_build(&ts, 0, 2).unwrap();
        let r = template_match(&tpl, &ts.slice(0..32), 0).unwrap();
        assert!(r.scores.iter().all(|s| s.is_finite()));
        assert_eq!(r.rank_of(key[0]), 1);
    }

    #[test]
    fn empty_attack_set_rejected() {
        let key = [1u8; 16];
        let ts = synthetic_set(key, 2000, 0.5, 7);
        let tpl = template_build(&ts, 0, 1).unwrap();
        let empty = ts.slice(0..0);
        assert!(matches!(
            template_match(&tpl, &empty, 0),
            Err(AnalysisError::Insufficient(_))
        ));
    }

    #[test]
    fn window_mismatch_rejected() {
        let key = [1u8; 16];
        let ts = synthetic_set(key, 2000, 0.5, 8);
        let tpl = template_build(&ts, 0, 1).unwrap();
        let mut other = ts.slice(0..10);
        for w in &mut other.windows {
            w.push(0.0);
        }
        other.window_len = 4;
        assert!(matches!(
            template_match(&tpl, &other, 0),
            Err(AnalysisError::WindowMismatch { .. })
        ));
    }

    #[test]
    fn accumulation_is_order_invariant() {
        let key = [0xA1u8; 16];
        let ts = synthetic_set(key, 3000, 0.5, 9);
        let tpl = template_build(&ts, 0, 2).unwrap();
        let fwd = ts.slice(0..40);
        let mut rev = fwd.clone();
        rev.windows.reverse();
        rev.plaintexts.reverse();
        let a = template_match(&tpl, &fwd, 0).unwrap();
        let b = template_match(&tpl, &rev, 0).unwrap();
        for k in 0..256 {
            assert!((a.scores[k] - b.scores[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn sparse_classes_rejected() {
        // All-identical plaintexts: a single class is populated.
        let ts = TraceSet {
            windows: vec![vec![1.0]; 50],
            plaintexts: vec![[0; 16]; 50],
            key: [0; 16],
            window_len: 1,
        };
        assert!(matches!(
            template_build(&ts, 0, 1),
            Err(AnalysisError::Insufficient(_))
        ));
    }
}
