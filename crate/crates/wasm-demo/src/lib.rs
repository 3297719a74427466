//! Browser demo: three interactive views over the workbench, exported
//! through wasm-bindgen. Results cross the boundary as JSON strings and are
//! rendered by the static page in `www/`.

use wasm_bindgen::prelude::*;

use voltlab_core::analysis::{cpa_attack, locate_leakage, CpaTracker, TraceSet};
use voltlab_core::flow::{configure, measure, CampaignConfig, PlaintextPolicy};
use voltlab_core::leakage::capture_window;
use voltlab_core::soc::DfsConfig;
use voltlab_core::workloads::ChaffConfig;

fn campaign(
    countermeasure: &str,
    n_traces: usize,
    noise_sigma: f64,
    seed: u64,
    keep_logs: usize,
) -> Result<voltlab_core::flow::MeasureOutput, String> {
    let mut cfg = CampaignConfig {
        n_traces,
        master_seed: seed,
        vcd_traces: 0,
        keep_logs,
        plaintext_policy: PlaintextPolicy::Uniform,
        ..Default::default()
    };
    cfg.scope.noise_sigma = noise_sigma;
    match countermeasure {
        "none" => {}
        "masking" => cfg.countermeasures.masking = true,
        "morphing" => cfg.countermeasures.morphing = true,
        "chaff" => {
            cfg.countermeasures.num_chaff = 7;
            cfg.chaff = ChaffConfig::default();
        }
        "dfs" => {
            cfg.countermeasures.dfs_random = true;
            cfg.soc.dfs = DfsConfig {
                freq_table_mhz: (0..16).map(|i| 50.0 + f64::from(i) * 3.125).collect(),
                reconfig_latency_cycles: 60,
                default_freq_mhz: 50.0,
                seed: 2,
            };
        }
        other => return Err(format!("unknown countermeasure `{other}`")),
    }
    let resolved = configure(cfg).map_err(|e| e.to_string())?;
    measure(&resolved).map_err(|e| e.to_string())
}

/// Runs a small campaign and returns a handful of trace windows for the
/// waveform view, plus window statistics.
#[wasm_bindgen]
pub fn capture_traces(
    countermeasure: &str,
    n_traces: u32,
    noise_sigma: f64,
    seed: u32,
) -> Result<String, JsValue> {
    let n = (n_traces as usize).clamp(1, 64);
    let out = campaign(countermeasure, n, noise_sigma, u64::from(seed), 0)
        .map_err(|e| JsValue::from_str(&e))?;
    let shown = out.traces.iter().take(8);
    let windows: Vec<Vec<u16>> = shown
        .map(|t| capture_window(t).unwrap_or(&[]).to_vec())
        .collect();
    let cycles: Vec<u64> = out.records.iter().map(|r| r.window_cycles).collect();
    let json = serde_json::json!({
        "workload": out.resolved.workload,
        "sample_period_ns": out.traces.first().map(|t| t.sample_period_ns),
        "windows": windows,
        "window_cycles": cycles,
        "mean_window_cycles": cycles.iter().sum::<u64>() as f64 / cycles.len() as f64,
    });
    Ok(json.to_string())
}

/// Generates traces and runs the CPA attack on one key byte, reporting the
/// per-guess correlation scores and the rank-vs-traces evolution.
#[wasm_bindgen]
pub fn run_cpa(
    countermeasure: &str,
    n_traces: u32,
    byte_index: u32,
    noise_sigma: f64,
    seed: u32,
) -> Result<String, JsValue> {
    let n = (n_traces as usize).clamp(4, 2000);
    let byte = (byte_index as usize).min(15);
    let out = campaign(countermeasure, n, noise_sigma, u64::from(seed), 0)
        .map_err(|e| JsValue::from_str(&e))?;
    let key = out.resolved.key;
    let ts = TraceSet::from_power_traces(&out.traces, key, None)
        .map_err(|e| JsValue::from_str(&e.to_string()))?;
    let ranking = cpa_attack(&ts, byte).map_err(|e| JsValue::from_str(&e.to_string()))?;

    // rank evolution on a light grid so the demo stays responsive
    let mut tracker = CpaTracker::new(byte, ts.window_len);
    let mut evolution = Vec::new();
    let stride = (n / 50).max(1);
    for i in 0..n {
        tracker.add(&ts.windows[i], &ts.plaintexts[i]);
        if i >= 1 && (i % stride == 0 || i == n - 1) {
            evolution.push((i + 1, tracker.ranking().rank_of(key[byte])));
        }
    }
    let json = serde_json::json!({
        "byte_index": byte,
        "correct_key": key[byte],
        "best_guess": ranking.best(),
        "rank": ranking.rank_of(key[byte]),
        "scores": ranking.scores,
        "evolution": evolution,
    });
    Ok(json.to_string())
}

/// Leakage localization on an unprotected campaign: which architectural
/// component leaks the SubBytes intermediate, and when.
#[wasm_bindgen]
pub fn locate(n_traces: u32, byte_index: u32, seed: u32) -> Result<String, JsValue> {
    let n = (n_traces as usize).clamp(16, 1000);
    let byte = (byte_index as usize).min(15);
    let out = campaign("none", n, 2.0, u64::from(seed), n).map_err(|e| JsValue::from_str(&e))?;
    let ptx: Vec<[u8; 16]> = out.traces.iter().map(|t| t.meta.plaintext).collect();
    let ranked = locate_leakage(&out.logs, &ptx, &out.resolved.key, byte, 1);
    let top: Vec<_> = ranked
        .iter()
        .take(12)
        .map(|l| {
            serde_json::json!({
                "component": l.component,
                "cycle_offset": l.cycle_offset,
                "abs_pcc": l.abs_pcc,
            })
        })
        .collect();
    Ok(serde_json::json!({ "byte_index": byte, "top": top }).to_string())
}
