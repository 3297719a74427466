//! Switching-activity recording, VCD export and power-trace synthesis.
//!
//! During simulation every CPU cycle inside the recording window produces an
//! [`ActivityFrame`] holding architectural toggle counts. The frame stream
//! is the single source for both measurement artifacts: the VCD waveform
//! (simulation leg) and the synthesized oscilloscope trace (execution leg),
//! which keeps the two in exact temporal correspondence by construction.
//!
//! The leakage components are architectural proxies (register-file Hamming
//! distance, data-bus and ALU Hamming weight, PC Hamming distance) rather
//! than netlist signals; they are the standard models for software-visible
//! power analysis and preserve the exploitable structure of the attacks.

mod scat;
mod synth;
mod vcd;

pub use scat::{read_scat, write_scat, ScatError, SCAT_MAGIC, SCAT_VERSION};
pub use synth::{
    capture_window, leakage_time_integral, synthesize_trace, trim_to_window, LeakageWeights,
    PowerTrace, ScopeConfig, SynthError, TraceMeta,
};
pub use vcd::{read_vcd, write_vcd};

use crate::isa::InstrActivity;

/// Per-cycle switching activity. All counts are popcounts in `0..=32`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityFrame {
    pub cycle: u64,
    /// CPU clock frequency during this cycle, MHz.
    pub freq_mhz: f64,
    pub regfile_hd: u8,
    pub alu_hw: u8,
    pub dbus_hw: u8,
    pub pc_hd: u8,
    pub trigger: bool,
}

impl ActivityFrame {
    /// Wall-clock duration of this cycle in nanoseconds.
    #[inline]
    pub fn duration_ns(&self) -> f64 {
        1000.0 / self.freq_mhz
    }
}

/// Cycle/time coordinates of a trigger edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerMark {
    pub cycle: u64,
    /// Wall time relative to the start of the recording, ns.
    pub time_ns: f64,
}

/// A contiguous per-cycle activity recording.
#[derive(Debug, Clone, Default)]
pub struct SwitchingLog {
    pub frames: Vec<ActivityFrame>,
    pub trigger_rise: Option<TriggerMark>,
    pub trigger_fall: Option<TriggerMark>,
    /// mcycle value of the first recorded frame.
    pub start_cycle: u64,
}

impl SwitchingLog {
    /// Trigger-window span in CPU cycles, when both edges were seen.
    pub fn window_cycles(&self) -> Option<u64> {
        match (self.trigger_rise, self.trigger_fall) {
            (Some(r), Some(f)) => Some(f.cycle - r.cycle),
            _ => None,
        }
    }

    /// Total recorded wall time, ns.
    pub fn total_ns(&self) -> f64 {
        self.frames.iter().map(|f| f.duration_ns()).sum()
    }
}

/// Armable per-cycle recorder, owned by the machine loop.
#[derive(Debug, Default)]
pub struct Recorder {
    pub armed: bool,
    pub log: SwitchingLog,
    /// Wall time since the recording started, ns.
    elapsed_ns: f64,
    started: bool,
}

impl Recorder {
    /// Arms recording and clears any previous log.
    pub fn arm(&mut self) {
        self.armed = true;
        self.started = false;
        self.elapsed_ns = 0.0;
        self.log = SwitchingLog::default();
    }

    pub fn disarm(&mut self) {
        self.armed = false;
    }

    /// Takes the finished log, leaving the recorder disarmed and empty.
    pub fn take(&mut self) -> SwitchingLog {
        self.armed = false;
        self.started = false;
        std::mem::take(&mut self.log)
    }

    /// Appends the per-cycle frames of one retired step. The architectural
    /// activity lands on the step's cycles as the microarchitecture would
    /// spread it: fetch transition on the first cycle, result/bus activity
    /// on the last.
    pub fn record(
        &mut self,
        activity: &InstrActivity,
        cycles: u32,
        base_cycle: u64,
        freq_mhz: f64,
        trigger_high: bool,
    ) {
        if !self.armed {
            return;
        }
        if !self.started {
            self.started = true;
            self.log.start_cycle = base_cycle;
        }
        for i in 0..cycles {
            let first = i == 0;
            let last = i == cycles - 1;
            let frame = ActivityFrame {
                cycle: base_cycle + u64::from(i),
                freq_mhz,
                pc_hd: if first { activity.pc_hd } else { 0 },
                regfile_hd: if last { activity.regfile_hd } else { 0 },
                alu_hw: if last { activity.alu_hw } else { 0 },
                dbus_hw: if last { activity.dbus_hw } else { 0 },
                trigger: trigger_high,
            };
            self.elapsed_ns += frame.duration_ns();
            self.log.frames.push(frame);
        }
    }

    /// Records a trigger edge at the current recording position.
    pub fn mark_trigger(&mut self, rising: bool, cycle: u64) {
        if !self.armed {
            return;
        }
        let mark = TriggerMark {
            cycle,
            time_ns: self.elapsed_ns,
        };
        if rising {
            self.log.trigger_rise = Some(mark);
        } else {
            self.log.trigger_fall = Some(mark);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nop_like_step_records_zero_regfile_hd() {
        let mut r = Recorder::default();
        r.arm();
        let act = InstrActivity::default();
        r.record(&act, 1, 10, 100.0, false);
        assert_eq!(r.log.frames.len(), 1);
        assert_eq!(r.log.frames[0].regfile_hd, 0);
    }

    #[test]
    fn register_rewrite_hd_is_popcount_of_xor() {
        // 0x00 -> 0xFF in a 32-bit register: HD = 8
        let act = InstrActivity {
            regfile_hd: (0x00u32 ^ 0xFF).count_ones() as u8,
            ..Default::default()
        };
        let mut r = Recorder::default();
        r.arm();
        r.record(&act, 1, 0, 100.0, false);
        assert_eq!(r.log.frames[0].regfile_hd, 8);
    }

    #[test]
    fn multicycle_step_spreads_activity() {
        let act = InstrActivity {
            pc_hd: 3,
            regfile_hd: 5,
            alu_hw: 7,
            dbus_hw: 9,
        };
        let mut r = Recorder::default();
        r.arm();
        r.record(&act, 3, 100, 50.0, true);
        let f = &r.log.frames;
        assert_eq!(f.len(), 3);
        assert_eq!((f[0].pc_hd, f[0].regfile_hd), (3, 0));
        assert_eq!((f[1].pc_hd, f[1].regfile_hd), (0, 0));
        assert_eq!((f[2].regfile_hd, f[2].alu_hw, f[2].dbus_hw), (5, 7, 9));
        assert!(f.iter().all(|fr| fr.trigger));
        assert_eq!(f[0].cycle, 100);
        assert_eq!(f[2].cycle, 102);
    }

    #[test]
    fn disarmed_recorder_ignores_everything() {
        let mut r = Recorder::default();
        r.record(&InstrActivity::default(), 1, 0, 100.0, false);
        r.mark_trigger(true, 0);
        assert!(r.log.frames.is_empty());
        assert!(r.log.trigger_rise.is_none());
    }

    #[test]
    fn window_cycles_from_marks() {
        let mut r = Recorder::default();
        r.arm();
        r.record(&InstrActivity::default(), 4, 0, 100.0, false);
        r.mark_trigger(true, 4);
        r.record(&InstrActivity::default(), 10, 4, 100.0, true);
        r.mark_trigger(false, 14);
        let log = r.take();
        assert_eq!(log.window_cycles(), Some(10));
    }
}
