//! The analyze phase: applies the selected attacks per key byte with a
//! repetition scheme, aggregates the quality metrics, and (when switching
//! logs are available) appends the leakage-localization table.
//!
//! Repetition protocol: the attack portion of the trace set is split into
//! `repetitions` disjoint subsets; guessing entropy is the mean rank of the
//! correct key over subsets, the success rate is the fraction of subsets
//! ranking it first, and the guessing distance (profiled attacks only) is
//! averaged over subsets. The minimum-traces search runs over growing
//! prefixes of the attack portion. Profiled attacks use the first
//! `profile_fraction` of traces for model building and attack the rest;
//! CPA attacks everything.

use serde::{Deserialize, Serialize};

use super::TraceRecord;
use crate::analysis::{
    cnn_train, cpa_attack, guessing_distance, guessing_entropy, locate_leakage,
    min_traces_from_ranks, sbox_out, success_rate, template_build, template_match, AnalysisError,
    AttackMetrics, CnnHyper, CpaTracker, KeyRanking, LeakLocation, TraceSet,
};
use crate::leakage::{PowerTrace, SwitchingLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Cpa,
    Template,
    Cnn,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Cpa => "cpa",
            AttackKind::Template => "template",
            AttackKind::Cnn => "cnn",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeOptions {
    pub attacks: Vec<AttackKind>,
    pub byte_indices: Vec<usize>,
    pub repetitions: usize,
    /// Resample windows to this length before attacking.
    pub window_len: Option<usize>,
    /// Prefix budget for the minimum-traces search; 0 disables it.
    pub min_traces_budget: usize,
    /// Fraction of traces used to build profiled models.
    pub profile_fraction: f64,
    pub template_pois: usize,
    pub cnn: CnnHyper,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            attacks: vec![AttackKind::Cpa],
            byte_indices: (0..16).collect(),
            repetitions: 10,
            window_len: None,
            min_traces_budget: 1000,
            profile_fraction: 0.5,
            template_pois: 5,
            cnn: CnnHyper::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ByteMetrics {
    pub byte_index: usize,
    pub metrics: AttackMetrics,
    /// Rank of the correct key over the full attack set.
    pub full_set_rank: usize,
    pub best_guess: u8,
    pub correct_key_score: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackReport {
    pub attack: String,
    pub per_byte: Vec<ByteMetrics>,
    pub mean_guessing_entropy: f64,
    /// Fraction of repetition subsets in which every attacked byte ranked
    /// first, as a percentage.
    pub full_key_success_rate: f64,
    /// Largest per-byte minimum-traces figure; None if any byte never
    /// stabilized within budget.
    pub full_key_min_traces: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_traces: usize,
    pub window_len: usize,
    pub attacks: Vec<AttackReport>,
    pub leakage_localization: Vec<LeakLocation>,
    /// Mean trigger-window span in cycles (the in-scope performance figure).
    pub mean_window_cycles: Option<f64>,
    pub mean_total_cycles: Option<f64>,
}

/// Per-byte, per-trace additive score rows (256 columns): the shape both
/// profiled attacks reduce to, enabling cheap prefix-rank evaluation.
fn prefix_ranks(rows: &[Vec<f64>], correct: u8, budget: usize) -> Vec<usize> {
    let mut acc = vec![0.0f64; 256];
    let mut ranks = Vec::new();
    for row in rows.iter().take(budget) {
        for (a, r) in acc.iter_mut().zip(row) {
            *a += r;
        }
        let r = KeyRanking::new(0, acc.clone(), false);
        ranks.push(r.rank_of(correct));
    }
    ranks
}

fn subset_bounds(n: usize, reps: usize) -> Vec<(usize, usize)> {
    let reps = reps.max(1).min(n);
    let chunk = n / reps;
    (0..reps)
        .map(|r| (r * chunk, if r == reps - 1 { n } else { (r + 1) * chunk }))
        .filter(|(a, b)| b > a)
        .collect()
}

struct ByteOutcome {
    ranks: Vec<usize>,
    distances: Vec<f64>,
    full_rank: usize,
    best: u8,
    correct_score: f64,
    prefix_ranks: Vec<usize>,
}

fn cpa_byte(
    ts: &TraceSet,
    byte: usize,
    opts: &AnalyzeOptions,
) -> Result<ByteOutcome, AnalysisError> {
    let correct = ts.key[byte];
    let full = cpa_attack(ts, byte)?;
    let mut ranks = Vec::new();
    for (a, b) in subset_bounds(ts.len(), opts.repetitions) {
        if b - a < 2 {
            continue;
        }
        let sub = ts.slice(a..b);
        ranks.push(cpa_attack(&sub, byte)?.rank_of(correct));
    }
    let mut prefix = Vec::new();
    if opts.min_traces_budget > 0 {
        let budget = opts.min_traces_budget.min(ts.len());
        let mut tracker = CpaTracker::new(byte, ts.window_len);
        for i in 0..budget {
            tracker.add(&ts.windows[i], &ts.plaintexts[i]);
            prefix.push(if i >= 1 {
                tracker.ranking().rank_of(correct)
            } else {
                256
            });
        }
    }
    Ok(ByteOutcome {
        ranks,
        distances: Vec::new(),
        full_rank: full.rank_of(correct),
        best: full.best(),
        correct_score: full.scores[correct as usize],
        prefix_ranks: prefix,
    })
}

fn profiled_byte(
    ts: &TraceSet,
    byte: usize,
    kind: AttackKind,
    opts: &AnalyzeOptions,
) -> Result<ByteOutcome, AnalysisError> {
    let correct = ts.key[byte];
    let n_prof = ((ts.len() as f64 * opts.profile_fraction) as usize).clamp(1, ts.len() - 1);
    let profiling = ts.slice(0..n_prof);
    let attack = ts.slice(n_prof..ts.len());

    // Reduce to per-trace additive 256-column score rows.
    let rows: Vec<Vec<f64>> = match kind {
        AttackKind::Template => {
            let tpl = template_build(&profiling, byte, opts.template_pois)?;
            // reuse the internal per-class likelihood through the public API:
            // one-trace matches yield the per-trace rows.
            attack
                .windows
                .iter()
                .zip(&attack.plaintexts)
                .map(|(w, p)| {
                    let one = TraceSet {
                        windows: vec![w.clone()],
                        plaintexts: vec![*p],
                        key: attack.key,
                        window_len: attack.window_len,
                    };
                    template_match(&tpl, &one, byte).map(|r| r.scores)
                })
                .collect::<Result<_, _>>()?
        }
        AttackKind::Cnn => {
            let labels: Vec<u8> = profiling
                .plaintexts
                .iter()
                .map(|p| sbox_out(p[byte], profiling.key[byte]))
                .collect();
            let model = cnn_train(&profiling, &labels, opts.cnn)?;
            attack
                .windows
                .iter()
                .zip(&attack.plaintexts)
                .map(|(w, p)| {
                    let logp = model.log_probs(w);
                    let v = p[byte];
                    Ok((0..256)
                        .map(|k| logp[sbox_out(v, k as u8) as usize])
                        .collect())
                })
                .collect::<Result<_, _>>()?
        }
        AttackKind::Cpa => unreachable!(),
    };

    let total: Vec<f64> = rows.iter().fold(vec![0.0; 256], |mut acc, row| {
        for (a, r) in acc.iter_mut().zip(row) {
            *a += r;
        }
        acc
    });
    let full = KeyRanking::new(byte, total, true);

    let mut ranks = Vec::new();
    let mut distances = Vec::new();
    for (a, b) in subset_bounds(rows.len(), opts.repetitions) {
        let scores: Vec<f64> = rows[a..b].iter().fold(vec![0.0; 256], |mut acc, row| {
            for (x, r) in acc.iter_mut().zip(row) {
                *x += r;
            }
            acc
        });
        let r = KeyRanking::new(byte, scores, true);
        ranks.push(r.rank_of(correct));
        if let Some(gd) = guessing_distance(&r, correct) {
            distances.push(gd);
        }
    }
    let prefix = if opts.min_traces_budget > 0 {
        prefix_ranks(&rows, correct, opts.min_traces_budget)
    } else {
        Vec::new()
    };
    Ok(ByteOutcome {
        ranks,
        distances,
        full_rank: full.rank_of(correct),
        best: full.best(),
        correct_score: full.scores[correct as usize],
        prefix_ranks: prefix,
    })
}

/// Runs the selected attacks and assembles the metrics report.
/// `logs` (with matching `traces`) enable the localization table.
pub fn analyze(
    traces: &[PowerTrace],
    key: [u8; 16],
    logs: &[SwitchingLog],
    records: &[TraceRecord],
    opts: &AnalyzeOptions,
) -> Result<MetricsReport, AnalysisError> {
    let ts = TraceSet::from_power_traces(traces, key, opts.window_len)?;
    let mut attacks = Vec::new();
    for &kind in &opts.attacks {
        let mut per_byte = Vec::new();
        let mut subset_success: Vec<Vec<bool>> = Vec::new();
        for &byte in &opts.byte_indices {
            let outcome = match kind {
                AttackKind::Cpa => cpa_byte(&ts, byte, opts),
                _ => profiled_byte(&ts, byte, kind, opts),
            };
            match outcome {
                Ok(o) => {
                    let ge = if o.ranks.is_empty() {
                        o.full_rank as f64
                    } else {
                        guessing_entropy(&o.ranks)
                    };
                    let gd = if o.distances.is_empty() {
                        None
                    } else {
                        Some(o.distances.iter().sum::<f64>() / o.distances.len() as f64)
                    };
                    let sr = if o.ranks.is_empty() {
                        100.0 * f64::from(u8::from(o.full_rank == 1))
                    } else {
                        success_rate(&o.ranks.iter().map(|&r| r == 1).collect::<Vec<_>>())
                    };
                    let mt = min_traces_from_ranks(&o.prefix_ranks);
                    for (i, &r) in o.ranks.iter().enumerate() {
                        if subset_success.len() <= i {
                            subset_success.push(Vec::new());
                        }
                        subset_success[i].push(r == 1);
                    }
                    per_byte.push(ByteMetrics {
                        byte_index: byte,
                        metrics: AttackMetrics {
                            guessing_entropy: ge,
                            guessing_distance: gd,
                            success_rate: sr,
                            min_traces: mt,
                        },
                        full_set_rank: o.full_rank,
                        best_guess: o.best,
                        correct_key_score: o.correct_score,
                        error: None,
                    });
                }
                Err(e) => per_byte.push(ByteMetrics {
                    byte_index: byte,
                    metrics: AttackMetrics {
                        guessing_entropy: f64::NAN,
                        guessing_distance: None,
                        success_rate: 0.0,
                        min_traces: None,
                    },
                    full_set_rank: 0,
                    best_guess: 0,
                    correct_key_score: f64::NAN,
                    error: Some(e.to_string()),
                }),
            }
        }
        let ok_bytes: Vec<&ByteMetrics> = per_byte.iter().filter(|b| b.error.is_none()).collect();
        let mean_ge = if ok_bytes.is_empty() {
            f64::NAN
        } else {
            ok_bytes
                .iter()
                .map(|b| b.metrics.guessing_entropy)
                .sum::<f64>()
                / ok_bytes.len() as f64
        };
        let full_key_sr = if subset_success.is_empty() {
            0.0
        } else {
            success_rate(
                &subset_success
                    .iter()
                    .map(|v| v.iter().all(|&b| b))
                    .collect::<Vec<_>>(),
            )
        };
        let full_key_mt = ok_bytes
            .iter()
            .map(|b| b.metrics.min_traces)
            .collect::<Option<Vec<_>>>()
            .map(|v| v.into_iter().max().unwrap_or(0));
        attacks.push(AttackReport {
            attack: kind.name().to_string(),
            per_byte,
            mean_guessing_entropy: mean_ge,
            full_key_success_rate: full_key_sr,
            full_key_min_traces: full_key_mt,
        });
    }

    // fewer than a handful of logs makes every correlation degenerate
    let localization = if logs.len() >= 8 {
        let ptx: Vec<[u8; 16]> = traces[..logs.len()]
            .iter()
            .map(|t| t.meta.plaintext)
            .collect();
        let byte = opts.byte_indices.first().copied().unwrap_or(0);
        locate_leakage(logs, &ptx, &key, byte, 1)
            .into_iter()
            .take(32)
            .collect()
    } else {
        Vec::new()
    };

    let mean_window_cycles = (!records.is_empty()).then(|| {
        records.iter().map(|r| r.window_cycles as f64).sum::<f64>() / records.len() as f64
    });
    let mean_total_cycles = (!records.is_empty())
        .then(|| records.iter().map(|r| r.total_cycles as f64).sum::<f64>() / records.len() as f64);

    Ok(MetricsReport {
        n_traces: ts.len(),
        window_len: ts.window_len,
        attacks,
        leakage_localization: localization,
        mean_window_cycles,
        mean_total_cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{configure, measure, CampaignConfig};

    #[test]
    fn cpa_report_on_small_unprotected_campaign() {
        let mut c = CampaignConfig::default();
        c.n_traces = 300;
        c.master_seed = 5;
        let resolved = configure(c).unwrap();
        let out = measure(&resolved).unwrap();
        let opts = AnalyzeOptions {
            byte_indices: vec![0, 1],
            min_traces_budget: 300,
            ..Default::default()
        };
        let report = analyze(&out.traces, resolved.key, &out.logs, &out.records, &opts).unwrap();
        let cpa = &report.attacks[0];
        assert_eq!(cpa.attack, "cpa");
        for b in &cpa.per_byte {
            assert_eq!(b.full_set_rank, 1, "byte {}", b.byte_index);
            assert!(b.metrics.min_traces.is_some());
            assert!(b.metrics.guessing_distance.is_none(), "CPA GD is undefined");
        }
        assert!(report.mean_window_cycles.unwrap() > 0.0);
    }

    #[test]
    fn template_report_has_distances() {
        let mut c = CampaignConfig::default();
        c.n_traces = 2700;
        c.master_seed = 8;
        c.plaintext_policy = crate::flow::PlaintextPolicy::BalancedSboxHw { byte_index: 0 };
        let resolved = configure(c).unwrap();
        let out = measure(&resolved).unwrap();
        let opts = AnalyzeOptions {
            attacks: vec![AttackKind::Template],
            byte_indices: vec![0],
            repetitions: 5,
            min_traces_budget: 100,
            ..Default::default()
        };
        let report = analyze(&out.traces, resolved.key, &[], &out.records, &opts).unwrap();
        let t = &report.attacks[0];
        assert!(t.per_byte[0].error.is_none(), "{:?}", t.per_byte[0].error);
        assert_eq!(t.per_byte[0].full_set_rank, 1);
        assert!(t.per_byte[0].metrics.guessing_distance.is_some());
        assert!(t.per_byte[0].metrics.guessing_distance.unwrap() > 0.0);
    }

    #[test]
    fn report_serializes_to_json() {
        let mut c = CampaignConfig::default();
        c.n_traces = 60;
        let resolved = configure(c).unwrap();
        let out = measure(&resolved).unwrap();
        let opts = AnalyzeOptions {
            byte_indices: vec![3],
            min_traces_budget: 0,
            ..Default::default()
        };
        let report = analyze(&out.traces, resolved.key, &[], &out.records, &opts).unwrap();
        let json = serde_json::to_string_pretty(&report).unwrap();
        assert!(json.contains("\"attack\": \"cpa\""));
        assert!(json.contains("guessing_entropy"));
    }
}
