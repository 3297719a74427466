//! Behavioral model of the dual-MMCM DFS actuator.
//!
//! Frequencies live on a 0.125 MHz grid between 5 and 800 MHz and are stored
//! internally in eighth-MHz units so table membership is exact. A frequency
//! switch takes `reconfig_latency_cycles` of the fixed 50 MHz reference
//! clock, during which the previous frequency keeps being generated
//! (glitch-free master/slave swap); a new request while one is in flight is
//! refused. In random mode the actuator draws uniform targets from its table
//! back to back, reconfiguring again as soon as the previous swap completed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::REF_CLOCK_MHZ;
use crate::rng::Rng;

pub const FREQ_STEP_MHZ: f64 = 0.125;
pub const FREQ_MIN_MHZ: f64 = 5.0;
pub const FREQ_MAX_MHZ: f64 = 800.0;
pub const MAX_TABLE_LEN: usize = 1024;

/// Eighth-MHz fixed point (5 MHz = 40, 800 MHz = 6400).
pub type Freq8 = u32;

pub fn mhz_to_freq8(mhz: f64) -> Option<Freq8> {
    let scaled = mhz * 8.0;
    if !scaled.is_finite() || scaled.fract() != 0.0 {
        return None;
    }
    let f8 = scaled as Freq8;
    if !(40..=6400).contains(&f8) {
        return None;
    }
    Some(f8)
}

pub fn freq8_to_mhz(f8: Freq8) -> f64 {
    f64::from(f8) / 8.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct DfsConfig {
    pub freq_table_mhz: Vec<f64>,
    /// Reconfiguration latency in reference-clock cycles (50 MHz domain).
    pub reconfig_latency_cycles: u32,
    pub default_freq_mhz: f64,
    pub seed: u64,
}

impl Default for DfsConfig {
    fn default() -> Self {
        DfsConfig {
            freq_table_mhz: vec![100.0],
            reconfig_latency_cycles: 2000,
            default_freq_mhz: 100.0,
            seed: 2,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DfsError {
    #[error(
        "frequency not in table (must be a 0.125 MHz multiple in [5, 800] present in the table)"
    )]
    FrequencyNotInTable,
    #[error("reconfiguration already in progress")]
    Busy,
    #[error("invalid frequency table: {0}")]
    BadTable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmcmMaster {
    A,
    B,
}

#[derive(Debug, Clone)]
pub struct Dfs {
    table: Vec<Freq8>,
    current: Freq8,
    pending: Option<Freq8>,
    /// Remaining reconfiguration time in nanoseconds of wall clock.
    remaining_ns: f64,
    latency_ns: f64,
    rnd: bool,
    master: MmcmMaster,
    rng: Rng,
}

impl Dfs {
    /// Validates a frequency table per the MMCM feasibility constraints.
    pub fn validate_table(table_mhz: &[f64]) -> Result<Vec<Freq8>, DfsError> {
        if table_mhz.is_empty() {
            return Err(DfsError::BadTable("table is empty".into()));
        }
        if table_mhz.len() > MAX_TABLE_LEN {
            return Err(DfsError::BadTable(format!(
                "table has {} entries, max {}",
                table_mhz.len(),
                MAX_TABLE_LEN
            )));
        }
        table_mhz
            .iter()
            .map(|&f| {
                mhz_to_freq8(f).ok_or_else(|| {
                    DfsError::BadTable(format!(
                        "{f} MHz is not a 0.125 MHz multiple within [5, 800]"
                    ))
                })
            })
            .collect()
    }

    pub fn new(cfg: &DfsConfig) -> Self {
        let table = Self::validate_table(&cfg.freq_table_mhz)
            .unwrap_or_else(|e| panic!("invalid DFS config: {e}"));
        let current = mhz_to_freq8(cfg.default_freq_mhz)
            .filter(|f| table.contains(f))
            .unwrap_or_else(|| panic!("default frequency {} not in table", cfg.default_freq_mhz));
        Dfs {
            table,
            current,
            pending: None,
            remaining_ns: 0.0,
            latency_ns: f64::from(cfg.reconfig_latency_cycles) * (1000.0 / REF_CLOCK_MHZ),
            rnd: false,
            master: MmcmMaster::A,
            rng: Rng::from_seed(cfg.seed),
        }
    }

    #[inline]
    pub fn current_mhz(&self) -> f64 {
        freq8_to_mhz(self.current)
    }

    pub fn current_khz(&self) -> u32 {
        self.current * 125
    }

    pub fn random_mode(&self) -> bool {
        self.rnd
    }

    pub fn busy(&self) -> bool {
        self.pending.is_some()
    }

    pub fn master(&self) -> MmcmMaster {
        self.master
    }

    pub fn table_freq8(&self) -> &[Freq8] {
        &self.table
    }

    /// Reseeds the random-target generator (per-trace derivation).
    pub fn reseed(&mut self, seed: u64) {
        self.rng = Rng::from_seed(seed);
    }

    /// Requests a switch to `mhz`. The swap happens `reconfig_latency`
    /// reference cycles later; until then the old frequency holds.
    pub fn set_frequency(&mut self, mhz: f64) -> Result<(), DfsError> {
        if self.pending.is_some() {
            return Err(DfsError::Busy);
        }
        let f8 = mhz_to_freq8(mhz).ok_or(DfsError::FrequencyNotInTable)?;
        if !self.table.contains(&f8) {
            return Err(DfsError::FrequencyNotInTable);
        }
        self.begin_reconfig(f8);
        Ok(())
    }

    /// Enables or disables random reconfiguration mode.
    pub fn set_random_mode(&mut self, on: bool) {
        self.rnd = on;
        if on && self.pending.is_none() {
            let f8 = self.draw_target();
            self.begin_reconfig(f8);
        }
    }

    fn draw_target(&mut self) -> Freq8 {
        let i = self.rng.below(self.table.len() as u64) as usize;
        self.table[i]
    }

    fn begin_reconfig(&mut self, target: Freq8) {
        self.pending = Some(target);
        self.remaining_ns = self.latency_ns;
    }

    /// Advances wall time. On completion the pending frequency becomes
    /// current and the MMCM master swaps; in random mode the next
    /// reconfiguration starts immediately.
    pub fn tick(&mut self, dt_ns: f64) {
        if let Some(target) = self.pending {
            self.remaining_ns -= dt_ns;
            if self.remaining_ns <= 0.0 {
                self.current = target;
                self.pending = None;
                self.master = match self.master {
                    MmcmMaster::A => MmcmMaster::B,
                    MmcmMaster::B => MmcmMaster::A,
                };
                if self.rnd {
                    let f8 = self.draw_target();
                    self.begin_reconfig(f8);
                }
            }
        }
    }
}
