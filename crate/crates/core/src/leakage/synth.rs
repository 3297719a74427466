//! Oscilloscope-style power-trace synthesis from a switching log.
//!
//! Power model: a cycle with activity counts `c` dissipates a fixed energy
//! `E = (baseline + sum(w_k * c_k)) * T_nom`, independent of the clock
//! frequency (CMOS switching energy is per-toggle). The instantaneous
//! leakage during that cycle is therefore `E / d = value * (f / f_nom)`:
//! faster cycles are shorter and proportionally taller, so the
//! leakage-time integral of a run is invariant to the DFS schedule while
//! the sampled shape is not, which is exactly the hiding effect.
//!
//! Each output sample integrates the leakage over its sample period (box
//! filter, modeling a bandwidth-limited front end), adds Gaussian noise and
//! quantizes to the configured resolution.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::SwitchingLog;
use crate::rng::Rng;

/// Frequency at which leakage values equal the raw activity sum, MHz.
pub const NOMINAL_FREQ_MHZ: f64 = 100.0;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct LeakageWeights {
    pub regfile: f64,
    pub dbus: f64,
    pub alu: f64,
    pub pc: f64,
}

impl Default for LeakageWeights {
    fn default() -> Self {
        LeakageWeights {
            regfile: 1.0,
            dbus: 0.8,
            alu: 0.6,
            pc: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ScopeConfig {
    /// Mega-samples per second.
    pub sample_rate_msps: f64,
    /// ADC resolution, 8..=16 bits.
    pub resolution_bits: u8,
    /// Gaussian noise sigma, in leakage units.
    pub noise_sigma: f64,
    pub weights: LeakageWeights,
    /// Constant leakage offset.
    pub baseline: f64,
    /// Quantizer full-scale range in leakage units.
    pub full_scale: f64,
}

impl Default for ScopeConfig {
    fn default() -> Self {
        ScopeConfig {
            sample_rate_msps: 250.0,
            resolution_bits: 12,
            noise_sigma: 2.0,
            weights: LeakageWeights::default(),
            baseline: 10.0,
            full_scale: 120.0,
        }
    }
}

impl ScopeConfig {
    pub fn sample_period_ns(&self) -> f64 {
        1000.0 / self.sample_rate_msps
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(8..=16).contains(&self.resolution_bits) {
            return Err(SynthError::BadResolution {
                bits: self.resolution_bits,
            });
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.sample_rate_msps) || !positive(self.full_scale) {
            return Err(SynthError::BadConfig);
        }
        Ok(())
    }

    /// Quantizes a leakage value to the ADC code range. Monotone, clamped.
    pub fn quantize(&self, value: f64) -> u16 {
        let max = (1u32 << self.resolution_bits) - 1;
        let code = (value / self.full_scale * f64::from(max)).round();
        if code <= 0.0 {
            0
        } else if code >= f64::from(max) {
            max as u16
        } else {
            code as u16
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("switching log is empty")]
    EmptyLog,
    #[error("sample rate below one sample per shortest cycle")]
    SampleRateTooLow,
    #[error("resolution {bits} outside 8..=16 bits")]
    BadResolution { bits: u8 },
    #[error("invalid scope configuration")]
    BadConfig,
    #[error("trace has no trigger window")]
    MissingTrigger,
}

/// Trace metadata carried alongside the samples.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct TraceMeta {
    pub plaintext: [u8; 16],
    pub key: [u8; 16],
    pub seed: u64,
    pub workload: String,
    pub countermeasures: Vec<String>,
    /// Trigger-window span in CPU cycles, from the simulator counters.
    pub window_cycles: u64,
}

/// A sampled, quantized power waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    pub samples: Vec<u16>,
    pub sample_period_ns: f64,
    /// (start, end) sample indices of the trigger window.
    pub trigger_edges: Option<(u32, u32)>,
    pub meta: TraceMeta,
}

/// Leakage power of one frame (activity scaled by frequency, see module doc).
#[inline]
fn frame_power(frame: &super::ActivityFrame, scope: &ScopeConfig) -> f64 {
    let w = &scope.weights;
    let value = scope.baseline
        + w.regfile * f64::from(frame.regfile_hd)
        + w.dbus * f64::from(frame.dbus_hw)
        + w.alu * f64::from(frame.alu_hw)
        + w.pc * f64::from(frame.pc_hd);
    value * (frame.freq_mhz / NOMINAL_FREQ_MHZ)
}

/// Synthesizes the oscilloscope capture for one switching log.
/// Deterministic: `(log, scope, seed)` fixes every output byte.
pub fn synthesize_trace(
    log: &SwitchingLog,
    scope: &ScopeConfig,
    seed: u64,
) -> Result<PowerTrace, SynthError> {
    scope.validate()?;
    if log.frames.is_empty() {
        return Err(SynthError::EmptyLog);
    }
    let period = scope.sample_period_ns();
    let shortest = log
        .frames
        .iter()
        .map(|f| f.duration_ns())
        .fold(f64::INFINITY, f64::min);
    if period > shortest {
        return Err(SynthError::SampleRateTooLow);
    }

    let total_ns = log.total_ns();
    let n_samples = (total_ns / period).floor() as usize;
    let mut rng = Rng::from_seed(seed);
    let mut samples = Vec::with_capacity(n_samples);

    // Walk frames and samples together; each sample integrates the power
    // of the frames overlapping its period.
    let mut fi = 0usize;
    let mut frame_start = 0.0f64;
    for j in 0..n_samples {
        let s0 = j as f64 * period;
        let s1 = s0 + period;
        while fi < log.frames.len() && frame_start + log.frames[fi].duration_ns() <= s0 {
            frame_start += log.frames[fi].duration_ns();
            fi += 1;
        }
        let mut acc = 0.0;
        let mut k = fi;
        let mut fs = frame_start;
        while k < log.frames.len() && fs < s1 {
            let fe = fs + log.frames[k].duration_ns();
            let lo = fs.max(s0);
            let hi = fe.min(s1);
            if hi > lo {
                acc += frame_power(&log.frames[k], scope) * (hi - lo);
            }
            fs = fe;
            k += 1;
        }
        let mut value = acc / period;
        if scope.noise_sigma > 0.0 {
            value += rng.gauss() * scope.noise_sigma;
        }
        samples.push(scope.quantize(value));
    }

    let trigger_edges = match (log.trigger_rise, log.trigger_fall) {
        (Some(r), Some(f)) => {
            let start = (r.time_ns / period).ceil() as u32;
            let end = (f.time_ns / period).ceil() as u32;
            Some((start, end.min(samples.len() as u32)))
        }
        _ => None,
    };

    Ok(PowerTrace {
        samples,
        sample_period_ns: period,
        trigger_edges,
        meta: TraceMeta::default(),
    })
}

/// The trigger-delimited slice of a trace.
pub fn capture_window(trace: &PowerTrace) -> Result<&[u16], SynthError> {
    let (start, end) = trace.trigger_edges.ok_or(SynthError::MissingTrigger)?;
    Ok(&trace.samples[start as usize..end as usize])
}

/// Keeps only the trigger window plus `margin` samples on each side,
/// re-indexing the edges. Models a scope capture centered on the trigger
/// instead of the full breakpoint-to-breakpoint span.
pub fn trim_to_window(trace: &PowerTrace, margin: u32) -> Result<PowerTrace, SynthError> {
    let (start, end) = trace.trigger_edges.ok_or(SynthError::MissingTrigger)?;
    let lo = start.saturating_sub(margin) as usize;
    let hi = (end + margin).min(trace.samples.len() as u32) as usize;
    Ok(PowerTrace {
        samples: trace.samples[lo..hi].to_vec(),
        sample_period_ns: trace.sample_period_ns,
        trigger_edges: Some((start - lo as u32, end - lo as u32)),
        meta: trace.meta.clone(),
    })
}

/// Noiseless leakage-time integral of a log, in leakage-unit-nanoseconds.
/// Test/verification helper: invariant to the DFS schedule.
pub fn leakage_time_integral(log: &SwitchingLog, scope: &ScopeConfig) -> f64 {
    log.frames
        .iter()
        .map(|f| frame_power(f, scope) * f.duration_ns())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leakage::{ActivityFrame, SwitchingLog, TriggerMark};

    fn flat_log(n: usize, freq: f64) -> SwitchingLog {
        SwitchingLog {
            frames: (0..n)
                .map(|i| ActivityFrame {
                    cycle: i as u64,
                    freq_mhz: freq,
                    regfile_hd: 0,
                    alu_hw: 0,
                    dbus_hw: 0,
                    pc_hd: 0,
                    trigger: false,
                })
                .collect(),
            ..Default::default()
        }
    }

    fn quiet_scope() -> ScopeConfig {
        ScopeConfig {
            noise_sigma: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_activity_yields_constant_baseline() {
        let log = flat_log(40, 100.0);
        let scope = quiet_scope();
        let trace = synthesize_trace(&log, &scope, 1).unwrap();
        let expected = scope.quantize(scope.baseline);
        assert!(!trace.samples.is_empty());
        assert!(trace.samples.iter().all(|&s| s == expected));
    }

    #[test]
    fn single_hot_cycle_raises_its_samples() {
        // 200 Msps at 100 MHz = exactly 2 samples per cycle, aligned.
        let scope = ScopeConfig {
            sample_rate_msps: 200.0,
            noise_sigma: 0.0,
            ..Default::default()
        };
        let mut log = flat_log(8, 100.0);
        log.frames[4].regfile_hd = 4;
        let trace = synthesize_trace(&log, &scope, 1).unwrap();
        let base = scope.quantize(scope.baseline);
        let hot = scope.quantize(scope.baseline + 4.0 * scope.weights.regfile);
        assert_eq!(trace.samples.len(), 16);
        for (j, &s) in trace.samples.iter().enumerate() {
            if j == 8 || j == 9 {
                assert_eq!(s, hot, "sample {j}");
            } else {
                assert_eq!(s, base, "sample {j}");
            }
        }
    }

    #[test]
    fn energy_integral_invariant_to_schedule() {
        let mut rng = crate::rng::Rng::from_seed(5);
        let freqs = [50.0, 62.5, 75.0, 87.5, 100.0];
        let mut fixed = flat_log(200, 100.0);
        for f in &mut fixed.frames {
            f.regfile_hd = rng.below(33) as u8;
            f.dbus_hw = rng.below(33) as u8;
        }
        let mut warped = fixed.clone();
        let mut rng2 = crate::rng::Rng::from_seed(9);
        for f in &mut warped.frames {
            f.freq_mhz = freqs[rng2.below(5) as usize];
        }
        let scope = quiet_scope();
        let e_fixed = leakage_time_integral(&fixed, &scope);
        let e_warped = leakage_time_integral(&warped, &scope);
        assert!(
            ((e_fixed - e_warped) / e_fixed).abs() < 1e-12,
            "{e_fixed} vs {e_warped}"
        );
        // but the sampled waveforms differ
        let t_fixed = synthesize_trace(&fixed, &scope, 1).unwrap();
        let t_warped = synthesize_trace(&warped, &scope, 1).unwrap();
        assert_ne!(t_fixed.samples, t_warped.samples);
        // and the box filter conserves the energy it saw
        let sampled_energy: f64 = t_fixed
            .samples
            .iter()
            .map(|&s| f64::from(s) / 4095.0 * scope.full_scale * t_fixed.sample_period_ns)
            .sum();
        let span = t_fixed.samples.len() as f64 * t_fixed.sample_period_ns;
        let log_energy_over_span = e_fixed * span / fixed.total_ns();
        assert!(
            ((sampled_energy - log_energy_over_span) / log_energy_over_span).abs() < 2e-3,
            "{sampled_energy} vs {log_energy_over_span}"
        );
    }

    #[test]
    fn determinism_bit_identical() {
        let mut log = flat_log(100, 100.0);
        for (i, f) in log.frames.iter_mut().enumerate() {
            f.alu_hw = (i % 33) as u8;
        }
        let scope = ScopeConfig::default();
        let a = synthesize_trace(&log, &scope, 42).unwrap();
        let b = synthesize_trace(&log, &scope, 42).unwrap();
        assert_eq!(a, b);
        let c = synthesize_trace(&log, &scope, 43).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn trigger_edges_to_sample_indices() {
        let mut log = flat_log(100, 100.0); // 10 ns per cycle, T = 4 ns
        log.trigger_rise = Some(TriggerMark {
            cycle: 10,
            time_ns: 100.0,
        });
        log.trigger_fall = Some(TriggerMark {
            cycle: 50,
            time_ns: 500.0,
        });
        let trace = synthesize_trace(&log, &quiet_scope(), 1).unwrap();
        let (s, e) = trace.trigger_edges.unwrap();
        assert_eq!((s, e), (25, 125));
        let win = capture_window(&trace).unwrap();
        assert_eq!(win.len(), 100);
    }

    #[test]
    fn missing_trigger_is_an_error() {
        let log = flat_log(10, 100.0);
        let trace = synthesize_trace(&log, &quiet_scope(), 1).unwrap();
        assert_eq!(capture_window(&trace), Err(SynthError::MissingTrigger));
    }

    #[test]
    fn sample_rate_too_low_detected() {
        let log = flat_log(10, 800.0); // 1.25 ns cycles vs 4 ns samples
        assert_eq!(
            synthesize_trace(&log, &quiet_scope(), 1),
            Err(SynthError::SampleRateTooLow)
        );
    }

    #[test]
    fn empty_log_is_an_error() {
        let log = SwitchingLog::default();
        assert_eq!(
            synthesize_trace(&log, &quiet_scope(), 1),
            Err(SynthError::EmptyLog)
        );
    }

    #[test]
    fn quantizer_monotone_and_clamped() {
        let scope = ScopeConfig::default();
        let mut prev = scope.quantize(-10.0);
        assert_eq!(prev, 0);
        for i in 0..500 {
            let v = -10.0 + f64::from(i);
            let q = scope.quantize(v);
            assert!(q >= prev);
            prev = q;
        }
        assert_eq!(scope.quantize(1e9), 4095);
    }
}
