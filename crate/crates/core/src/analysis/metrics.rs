//! The four attack-quality metrics.

use serde::{Deserialize, Serialize};

use super::KeyRanking;

/// Average rank of the correct key over repetitions (1 = always first).
pub fn guessing_entropy(rank_history: &[usize]) -> f64 {
    assert!(!rank_history.is_empty());
    rank_history.iter().sum::<usize>() as f64 / rank_history.len() as f64
}

/// Normalized probability margin between the correct key and the
/// best-ranked wrong one. Undefined (None) for score types without
/// probability semantics, i.e. CPA.
pub fn guessing_distance(r: &KeyRanking, correct: u8) -> Option<f64> {
    let probs = r.probs.as_ref()?;
    let pc = probs[correct as usize];
    let best_other = probs
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != correct as usize)
        .map(|(_, &p)| p)
        .fold(f64::NEG_INFINITY, f64::max);
    Some(pc - best_other)
}

/// Percentage of repetitions whose top-ranked key was the correct one.
pub fn success_rate(outcomes: &[bool]) -> f64 {
    assert!(!outcomes.is_empty());
    100.0 * outcomes.iter().filter(|&&b| b).count() as f64 / outcomes.len() as f64
}

/// Minimum number of traces for a stably correct prediction.
///
/// `ranks[i]` is the rank of the correct key when attacking the prefix of
/// `i + 1` traces. The result is the smallest N such that the rank is 1
/// for every prefix size in `[N, budget]`; None when even the full budget
/// does not end at rank 1.
pub fn min_traces_from_ranks(ranks: &[usize]) -> Option<usize> {
    if ranks.is_empty() || *ranks.last().unwrap() != 1 {
        return None;
    }
    let mut n = ranks.len();
    for (i, &r) in ranks.iter().enumerate().rev() {
        if r != 1 {
            break;
        }
        n = i + 1;
    }
    Some(n)
}

/// The quality-metric bundle reported per key byte.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AttackMetrics {
    pub guessing_entropy: f64,
    /// None renders as "undefined" in reports.
    pub guessing_distance: Option<f64>,
    /// Percentage in [0, 100].
    pub success_rate: f64,
    pub min_traces: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::softmax;

    #[test]
    fn guessing_entropy_is_the_mean_rank() {
        assert_eq!(guessing_entropy(&[1, 1, 1]), 1.0);
        assert_eq!(guessing_entropy(&[2, 4]), 3.0);
    }

    #[test]
    fn guessing_distance_margins() {
        // correct 0.90, best other 0.05 -> 0.85
        let mut scores = vec![0.0f64; 256];
        scores[10] = 0.90f64.ln();
        scores[20] = 0.05f64.ln();
        for (i, s) in scores.iter_mut().enumerate() {
            if i != 10 && i != 20 {
                *s = (0.05f64 / 254.0).ln();
            }
        }
        // build probs directly to match the stated numbers
        let mut r = KeyRanking::new(0, scores, true);
        let mut probs = vec![0.0; 256];
        probs[10] = 0.90;
        probs[20] = 0.05;
        let rest = 0.05 / 254.0;
        for (i, p) in probs.iter_mut().enumerate() {
            if i != 10 && i != 20 {
                *p = rest;
            }
        }
        r.probs = Some(probs);
        assert!((guessing_distance(&r, 10).unwrap() - 0.85).abs() < 1e-12);

        // correct 0.10, best other 0.62 -> -0.52
        let mut probs = vec![(1.0 - 0.72) / 254.0; 256];
        probs[3] = 0.10;
        probs[200] = 0.62;
        let mut r = KeyRanking::new(0, vec![0.0; 256], true);
        r.probs = Some(probs);
        assert!((guessing_distance(&r, 3).unwrap() + 0.52).abs() < 1e-12);
    }

    #[test]
    fn guessing_distance_uniform_is_zero() {
        let r = KeyRanking::new(0, vec![1.0; 256], true);
        assert_eq!(guessing_distance(&r, 42), Some(0.0));
        // and the softmax of equal scores really is uniform
        let p = softmax(&vec![3.0; 256]);
        assert!((p[0] - 1.0 / 256.0).abs() < 1e-15);
    }

    #[test]
    fn guessing_distance_undefined_without_probs() {
        let r = KeyRanking::new(0, vec![0.5; 256], false);
        assert_eq!(guessing_distance(&r, 0), None);
    }

    #[test]
    fn success_rate_percentage() {
        assert_eq!(success_rate(&[true, true, true, false]), 75.0);
        assert_eq!(success_rate(&[false]), 0.0);
    }

    #[test]
    fn min_traces_definition() {
        // rank 1 from trace 7 onward (prefix sizes 1..=100)
        let mut ranks = vec![5usize; 6];
        ranks.extend(vec![1usize; 94]);
        assert_eq!(min_traces_from_ranks(&ranks), Some(7));
        // never stabilizes
        let mut bad = vec![1usize; 99];
        bad.push(2);
        assert_eq!(min_traces_from_ranks(&bad), None);
        // immediately correct
        assert_eq!(min_traces_from_ranks(&[1, 1, 1]), Some(1));
    }
}
