//! The SoC uncore: address decoding, RAM and the memory-mapped peripherals.
//!
//! Memory map (artifact-defined):
//!
//! | region            | base          | size     |
//! |-------------------|---------------|----------|
//! | RAM               | `0x0000_0000` | 256 KiB (configurable) |
//! | user UART data    | `0x8000_0000` | 4        |
//! | user UART status  | `0x8000_0004` | 4        |
//! | TRNG random word  | `0x8001_0000` | 4        |
//! | timer             | `0x8002_0000` | 0x14     |
//!
//! Timer register layout: `+0x00` mtime lo, `+0x04` mtime hi, `+0x08`
//! mtimecmp lo, `+0x0C` mtimecmp hi, `+0x10` interrupt pending (read-only).
//!
//! Peripheral registers are word-access only. RAM accepts 1/2/4-byte
//! naturally aligned accesses.

pub(crate) mod dfs;
mod trng;

pub use dfs::{
    freq8_to_mhz, mhz_to_freq8, Dfs, DfsConfig, DfsError, FREQ_MAX_MHZ, FREQ_MIN_MHZ,
    FREQ_STEP_MHZ, MAX_TABLE_LEN,
};
pub use trng::{postprocess, Lfsr32, NoiseSource, NoiseStream, PostProcessing, Trng, TrngConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::CostTable;

pub const RAM_BASE: u32 = 0x0000_0000;
pub const DEFAULT_RAM_SIZE: u32 = 256 * 1024;
pub const UART_DATA: u32 = 0x8000_0000;
pub const UART_STATUS: u32 = 0x8000_0004;
pub const TRNG_WORD: u32 = 0x8001_0000;
pub const TIMER_BASE: u32 = 0x8002_0000;
pub const TIMER_MTIME_LO: u32 = TIMER_BASE;
pub const TIMER_MTIME_HI: u32 = TIMER_BASE + 0x4;
pub const TIMER_MTIMECMP_LO: u32 = TIMER_BASE + 0x8;
pub const TIMER_MTIMECMP_HI: u32 = TIMER_BASE + 0xC;
pub const TIMER_PENDING: u32 = TIMER_BASE + 0x10;

/// Fixed clock of everything outside the CPU clock domain, in MHz.
pub const REF_CLOCK_MHZ: f64 = 50.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BusError {
    #[error("unmapped bus address {addr:#010x}")]
    Unmapped { addr: u32 },
    #[error("misaligned {width}-byte access at {addr:#010x}")]
    Misaligned { addr: u32, width: u8 },
    #[error("peripheral at {addr:#010x} requires 32-bit access")]
    BadWidth { addr: u32 },
}

/// Result of a data-bus read: the extracted value plus the full 32-bit word
/// that moved on the bus (sub-word accesses still transfer a word).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusRead {
    pub value: u32,
    pub bus_word: u32,
}

/// Result of a data-bus write: the 32-bit word as stored (after byte-lane
/// merge for sub-word stores).
#[derive(Debug, Clone, Copy)]
pub struct BusWrite {
    pub bus_word: u32,
}

/// SoC-level configuration, the `soc` section of a campaign config file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SocConfig {
    pub ram_size: u32,
    pub uart_data_addr: u32,
    pub uart_status_addr: u32,
    pub trng: TrngConfig,
    pub dfs: DfsConfig,
    pub cpu: CostTable,
}

impl Default for SocConfig {
    fn default() -> Self {
        SocConfig {
            ram_size: DEFAULT_RAM_SIZE,
            uart_data_addr: UART_DATA,
            uart_status_addr: UART_STATUS,
            trng: TrngConfig::default(),
            dfs: DfsConfig::default(),
            cpu: CostTable::default(),
        }
    }
}

/// User UART: an I/O byte stream for the guest program.
#[derive(Debug, Default)]
pub struct Uart {
    rx: std::collections::VecDeque<u8>,
    tx: Vec<u8>,
}

impl Uart {
    /// Host side: queue a byte for the guest to read.
    pub fn feed(&mut self, byte: u8) {
        self.rx.push_back(byte);
    }

    /// Host side: drain everything the guest transmitted.
    pub fn take_tx(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.tx)
    }

    fn read_data(&mut self) -> u32 {
        u32::from(self.rx.pop_front().unwrap_or(0))
    }

    fn status(&self) -> u32 {
        let rx_avail = u32::from(!self.rx.is_empty());
        rx_avail | 0b10 // tx always ready
    }
}

/// Machine timer. `mtime` advances once per CPU cycle; the pending flag is
/// `mtime > mtimecmp`, recomputed on every tick and on register writes.
#[derive(Debug, Default)]
pub struct Timer {
    pub mtime: u64,
    pub mtimecmp: u64,
    pub pending: bool,
}

impl Timer {
    pub fn tick(&mut self) -> bool {
        self.mtime = self.mtime.wrapping_add(1);
        self.pending = self.mtime > self.mtimecmp;
        self.pending
    }

    fn recompute(&mut self) {
        self.pending = self.mtime > self.mtimecmp;
    }
}

pub struct Soc {
    pub ram: Vec<u8>,
    pub uart: Uart,
    pub trng: Trng,
    pub timer: Timer,
    pub dfs: Dfs,
    uart_data_addr: u32,
    uart_status_addr: u32,
}

impl Soc {
    pub fn new(cfg: &SocConfig) -> Self {
        Soc {
            ram: vec![0; cfg.ram_size as usize],
            uart: Uart::default(),
            trng: Trng::new(&cfg.trng),
            timer: Timer::default(),
            dfs: Dfs::new(&cfg.dfs),
            uart_data_addr: cfg.uart_data_addr,
            uart_status_addr: cfg.uart_status_addr,
        }
    }

    /// Current CPU clock frequency in MHz (DFS output).
    #[inline]
    pub fn cpu_freq_mhz(&self) -> f64 {
        self.dfs.current_mhz()
    }

    /// Advances every fixed-clock peripheral by one CPU cycle and returns
    /// the wall-clock duration of that cycle in nanoseconds.
    #[inline]
    pub fn tick_cycle(&mut self) -> f64 {
        let dt_ns = 1000.0 / self.dfs.current_mhz();
        self.timer.tick();
        self.trng.tick();
        self.dfs.tick(dt_ns);
        dt_ns
    }

    /// Instruction fetch: RAM only, word aligned.
    #[inline]
    pub fn fetch(&self, pc: u32) -> Option<u32> {
        if !pc.is_multiple_of(4) {
            return None;
        }
        let i = pc as usize;
        if i + 4 > self.ram.len() {
            return None;
        }
        Some(u32::from_le_bytes([
            self.ram[i],
            self.ram[i + 1],
            self.ram[i + 2],
            self.ram[i + 3],
        ]))
    }

    /// Direct image loading, outside the bus (no side effects, no activity).
    pub fn load_word(&mut self, addr: u32, word: u32) {
        let i = addr as usize;
        self.ram[i..i + 4].copy_from_slice(&word.to_le_bytes());
    }

    pub fn load_bytes(&mut self, addr: u32, bytes: &[u8]) {
        let i = addr as usize;
        self.ram[i..i + bytes.len()].copy_from_slice(bytes);
    }

    pub fn ram_word(&self, addr: u32) -> u32 {
        let i = (addr & !3) as usize;
        u32::from_le_bytes([
            self.ram[i],
            self.ram[i + 1],
            self.ram[i + 2],
            self.ram[i + 3],
        ])
    }

    fn check_align(addr: u32, width: u8) -> Result<(), BusError> {
        if !matches!(width, 1 | 2 | 4) || !addr.is_multiple_of(u32::from(width)) {
            return Err(BusError::Misaligned { addr, width });
        }
        Ok(())
    }

    pub fn bus_read(&mut self, addr: u32, width: u8) -> Result<BusRead, BusError> {
        Self::check_align(addr, width)?;
        if (addr as u64) + u64::from(width) <= self.ram.len() as u64 {
            let i = addr as usize;
            let value = match width {
                1 => u32::from(self.ram[i]),
                2 => u32::from(u16::from_le_bytes([self.ram[i], self.ram[i + 1]])),
                _ => self.ram_word(addr),
            };
            return Ok(BusRead {
                value,
                bus_word: self.ram_word(addr),
            });
        }
        // Peripheral space: word access only.
        if width != 4 {
            return Err(BusError::BadWidth { addr });
        }
        let value = if addr == self.uart_data_addr {
            self.uart.read_data()
        } else if addr == self.uart_status_addr {
            self.uart.status()
        } else if addr == TRNG_WORD {
            self.trng.word()
        } else {
            match addr {
                TIMER_MTIME_LO => self.timer.mtime as u32,
                TIMER_MTIME_HI => (self.timer.mtime >> 32) as u32,
                TIMER_MTIMECMP_LO => self.timer.mtimecmp as u32,
                TIMER_MTIMECMP_HI => (self.timer.mtimecmp >> 32) as u32,
                TIMER_PENDING => u32::from(self.timer.pending),
                _ => return Err(BusError::Unmapped { addr }),
            }
        };
        Ok(BusRead {
            value,
            bus_word: value,
        })
    }

    pub fn bus_write(&mut self, addr: u32, width: u8, value: u32) -> Result<BusWrite, BusError> {
        Self::check_align(addr, width)?;
        if (addr as u64) + u64::from(width) <= self.ram.len() as u64 {
            let i = addr as usize;
            match width {
                1 => self.ram[i] = value as u8,
                2 => self.ram[i..i + 2].copy_from_slice(&(value as u16).to_le_bytes()),
                _ => self.ram[i..i + 4].copy_from_slice(&value.to_le_bytes()),
            }
            return Ok(BusWrite {
                bus_word: self.ram_word(addr),
            });
        }
        if width != 4 {
            return Err(BusError::BadWidth { addr });
        }
        if addr == self.uart_data_addr {
            self.uart.tx.push(value as u8);
        } else {
            match addr {
                TIMER_MTIME_LO => {
                    self.timer.mtime = (self.timer.mtime & !0xffff_ffff) | u64::from(value);
                    self.timer.recompute();
                }
                TIMER_MTIME_HI => {
                    self.timer.mtime = (self.timer.mtime & 0xffff_ffff) | (u64::from(value) << 32);
                    self.timer.recompute();
                }
                TIMER_MTIMECMP_LO => {
                    self.timer.mtimecmp = (self.timer.mtimecmp & !0xffff_ffff) | u64::from(value);
                    self.timer.recompute();
                }
                TIMER_MTIMECMP_HI => {
                    self.timer.mtimecmp =
                        (self.timer.mtimecmp & 0xffff_ffff) | (u64::from(value) << 32);
                    self.timer.recompute();
                }
                // Status, TRNG word and the pending flag are read-only.
                TIMER_PENDING | TRNG_WORD => {}
                a if a == self.uart_status_addr => {}
                _ => return Err(BusError::Unmapped { addr }),
            }
        }
        Ok(BusWrite { bus_word: value })
    }
}
