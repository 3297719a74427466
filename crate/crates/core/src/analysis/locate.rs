//! Leakage-source localization over switching logs.
//!
//! With the key known, every (architectural component, cycle window) pair
//! is correlated against the first-round SubBytes hypothesis across traces;
//! the ranking names which component leaks and when. This is the
//! white-box counterpart of the attacks: it points at the design signal
//! responsible for the leakage rather than at the key.

use serde::{Deserialize, Serialize};

use super::{hw8, sbox_out};
use crate::leakage::SwitchingLog;

pub const COMPONENTS: [&str; 4] = ["regfile_hd", "dbus_hw", "alu_hw", "pc_hd"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeakLocation {
    pub component: String,
    /// Cycle offset of the window start, relative to the trigger rise.
    pub cycle_offset: u64,
    /// Window width in cycles.
    pub width: usize,
    pub abs_pcc: f64,
}

fn component_value(log: &SwitchingLog, which: usize, idx: usize) -> f64 {
    let f = &log.frames[idx];
    f64::from(match which {
        0 => f.regfile_hd,
        1 => f.dbus_hw,
        2 => f.alu_hw,
        _ => f.pc_hd,
    })
}

/// Ranks (component, cycle-window) pairs by |Pearson correlation| with
/// `HW(SBOX[ptx ^ key])` for the chosen byte. Logs are aligned at their
/// trigger rise; the scan covers the shortest common window. Constant
/// activity correlates as 0 and therefore ranks last.
pub fn locate_leakage(
    logs: &[SwitchingLog],
    plaintexts: &[[u8; 16]],
    key: &[u8; 16],
    byte_index: usize,
    window_width: usize,
) -> Vec<LeakLocation> {
    assert_eq!(logs.len(), plaintexts.len());
    assert!(byte_index < 16 && window_width >= 1);
    let n = logs.len();
    if n < 2 {
        return Vec::new();
    }

    // Hypothesis vector.
    let h: Vec<f64> = plaintexts
        .iter()
        .map(|p| f64::from(hw8(sbox_out(p[byte_index], key[byte_index]))))
        .collect();
    let sum_h: f64 = h.iter().sum();
    let sum_h2: f64 = h.iter().map(|v| v * v).sum();
    let var_h = n as f64 * sum_h2 - sum_h * sum_h;
    if var_h <= 0.0 {
        return Vec::new();
    }

    // Offset of the trigger rise within each log, and the common span.
    let starts: Vec<usize> = logs
        .iter()
        .map(|log| {
            let rise = log.trigger_rise.map(|m| m.cycle).unwrap_or(log.start_cycle);
            (rise - log.start_cycle) as usize
        })
        .collect();
    let span = logs
        .iter()
        .zip(&starts)
        .map(|(log, &s)| {
            let end = log
                .trigger_fall
                .map(|m| (m.cycle - log.start_cycle) as usize)
                .unwrap_or(log.frames.len());
            end.saturating_sub(s)
        })
        .min()
        .unwrap_or(0);
    if span < window_width {
        return Vec::new();
    }

    let n_windows = span - window_width + 1;
    let mut out = Vec::with_capacity(4 * n_windows);
    for (which, name) in COMPONENTS.iter().enumerate() {
        for w0 in 0..n_windows {
            let mut sum_a = 0.0;
            let mut sum_a2 = 0.0;
            let mut sum_ah = 0.0;
            for (i, log) in logs.iter().enumerate() {
                let base = starts[i] + w0;
                let mut a = 0.0;
                for u in 0..window_width {
                    a += component_value(log, which, base + u);
                }
                sum_a += a;
                sum_a2 += a * a;
                sum_ah += a * h[i];
            }
            let var_a = n as f64 * sum_a2 - sum_a * sum_a;
            let pcc = if var_a <= 0.0 {
                0.0
            } else {
                (n as f64 * sum_ah - sum_a * sum_h) / (var_a * var_h).sqrt()
            };
            out.push(LeakLocation {
                component: name.to_string(),
                cycle_offset: w0 as u64,
                width: window_width,
                abs_pcc: pcc.abs(),
            });
        }
    }
    out.sort_by(|a, b| b.abs_pcc.partial_cmp(&a.abs_pcc).unwrap());
    out
}
