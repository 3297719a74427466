//! RV32IM instruction-set model: decoder, CPU state and the execution step.
//!
//! The CPU is deliberately small: RV32I base plus the M extension, machine
//! timer interrupt and illegal-instruction trap, a flat cycle-cost table
//! instead of a pipeline model. Every architectural transition is reported
//! through [`StepOutcome`] so the leakage recorder can observe it.

mod decode;
mod exec;

pub use decode::decode;
pub use exec::{exec_one, take_timer_interrupt};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::soc::BusError;

/// CSR addresses implemented by the core.
pub mod csr {
    pub const MSTATUS: u16 = 0x300;
    pub const MTVEC: u16 = 0x305;
    pub const MEPC: u16 = 0x341;
    pub const MCAUSE: u16 = 0x342;
    pub const MCYCLE: u16 = 0xB00;
    pub const MINSTRET: u16 = 0xB02;
    pub const MCYCLEH: u16 = 0xB80;
    pub const MINSTRETH: u16 = 0xB82;
}

/// mcause codes used by the core.
pub const CAUSE_MACHINE_TIMER: u32 = 0x8000_0007;
pub const CAUSE_ILLEGAL_INSTRUCTION: u32 = 0x0000_0002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mnemonic {
    Lui,
    Auipc,
    Jal,
    Jalr,
    Beq,
    Bne,
    Blt,
    Bge,
    Bltu,
    Bgeu,
    Lb,
    Lh,
    Lw,
    Lbu,
    Lhu,
    Sb,
    Sh,
    Sw,
    Addi,
    Slti,
    Sltiu,
    Xori,
    Ori,
    Andi,
    Slli,
    Srli,
    Srai,
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
    Mul,
    Mulh,
    Mulhsu,
    Mulhu,
    Div,
    Divu,
    Rem,
    Remu,
    Fence,
    Ecall,
    Ebreak,
    Csrrw,
    Csrrs,
    Csrrc,
    Csrrwi,
    Csrrsi,
    Csrrci,
    Mret,
}

impl Mnemonic {
    pub fn name(self) -> &'static str {
        use Mnemonic::*;
        match self {
            Lui => "lui",
            Auipc => "auipc",
            Jal => "jal",
            Jalr => "jalr",
            Beq => "beq",
            Bne => "bne",
            Blt => "blt",
            Bge => "bge",
            Bltu => "bltu",
            Bgeu => "bgeu",
            Lb => "lb",
            Lh => "lh",
            Lw => "lw",
            Lbu => "lbu",
            Lhu => "lhu",
            Sb => "sb",
            Sh => "sh",
            Sw => "sw",
            Addi => "addi",
            Slti => "slti",
            Sltiu => "sltiu",
            Xori => "xori",
            Ori => "ori",
            Andi => "andi",
            Slli => "slli",
            Srli => "srli",
            Srai => "srai",
            Add => "add",
            Sub => "sub",
            Sll => "sll",
            Slt => "slt",
            Sltu => "sltu",
            Xor => "xor",
            Srl => "srl",
            Sra => "sra",
            Or => "or",
            And => "and",
            Mul => "mul",
            Mulh => "mulh",
            Mulhsu => "mulhsu",
            Mulhu => "mulhu",
            Div => "div",
            Divu => "divu",
            Rem => "rem",
            Remu => "remu",
            Fence => "fence",
            Ecall => "ecall",
            Ebreak => "ebreak",
            Csrrw => "csrrw",
            Csrrs => "csrrs",
            Csrrc => "csrrc",
            Csrrwi => "csrrwi",
            Csrrsi => "csrrsi",
            Csrrci => "csrrci",
            Mret => "mret",
        }
    }
}

/// A decoded instruction. Fields that do not apply to a format are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instruction {
    pub mnemonic: Mnemonic,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    /// Sign-extended immediate (shamt for shifts, zimm for CSR*I).
    pub imm: i32,
    /// CSR address for the Zicsr subset.
    pub csr: u16,
    pub raw: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IsaError {
    #[error("illegal instruction encoding {word:#010x}")]
    IllegalInstruction { word: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunState {
    Running,
    Halted,
    Stepping,
}

/// Architectural CPU state plus the few machine-mode CSRs the core carries.
#[derive(Debug, Clone, PartialEq)]
pub struct CpuState {
    pub pc: u32,
    pub regs: [u32; 32],
    pub mcycle: u64,
    pub minstret: u64,
    pub mtvec: u32,
    pub mepc: u32,
    pub mcause: u32,
    /// Machine timer interrupt enable (mstatus.MIE view).
    pub timer_ie: bool,
    /// Timer interrupt pending, driven by the SoC timer each cycle.
    pub timer_ip: bool,
    /// Set between trap entry and mret; blocks interrupt re-entry.
    pub in_trap: bool,
    pub run_state: RunState,
    /// PC of the previously fetched instruction, for fetch-bus activity.
    pub last_pc: u32,
}

impl CpuState {
    pub fn new(entry: u32) -> Self {
        CpuState {
            pc: entry,
            regs: [0; 32],
            mcycle: 0,
            minstret: 0,
            mtvec: 0,
            mepc: 0,
            mcause: 0,
            timer_ie: false,
            timer_ip: false,
            in_trap: false,
            run_state: RunState::Halted,
            last_pc: entry,
        }
    }

    /// Zeroes everything and reloads the entry point (debug RST_CPU).
    pub fn reset(&mut self, entry: u32) {
        *self = CpuState::new(entry);
    }

    /// Register write that discards stores to x0.
    #[inline]
    pub fn write_reg(&mut self, rd: u8, value: u32) {
        if rd != 0 {
            self.regs[rd as usize] = value;
        }
    }

    #[inline]
    pub fn read_reg(&self, r: u8) -> u32 {
        self.regs[r as usize]
    }

    pub fn read_csr(&self, addr: u16) -> Option<u32> {
        Some(match addr {
            csr::MSTATUS => {
                if self.timer_ie {
                    1 << 3
                } else {
                    0
                }
            }
            csr::MTVEC => self.mtvec,
            csr::MEPC => self.mepc,
            csr::MCAUSE => self.mcause,
            csr::MCYCLE => self.mcycle as u32,
            csr::MCYCLEH => (self.mcycle >> 32) as u32,
            csr::MINSTRET => self.minstret as u32,
            csr::MINSTRETH => (self.minstret >> 32) as u32,
            _ => return None,
        })
    }

    pub fn write_csr(&mut self, addr: u16, value: u32) -> bool {
        match addr {
            csr::MSTATUS => self.timer_ie = value & (1 << 3) != 0,
            csr::MTVEC => self.mtvec = value & !0b11,
            csr::MEPC => self.mepc = value & !0b1,
            csr::MCAUSE => self.mcause = value,
            // Counters are read-only through CSR space.
            csr::MCYCLE | csr::MCYCLEH | csr::MINSTRET | csr::MINSTRETH => {}
            _ => return false,
        }
        true
    }
}

/// Performance-counter selector for the debug interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pmc {
    CycleLow,
    CycleHigh,
    InstrLow,
    InstrHigh,
}

/// Reads one half of a 64-bit performance counter. No side effects.
pub fn read_pmc(state: &CpuState, which: Pmc) -> u32 {
    match which {
        Pmc::CycleLow => state.mcycle as u32,
        Pmc::CycleHigh => (state.mcycle >> 32) as u32,
        Pmc::InstrLow => state.minstret as u32,
        Pmc::InstrHigh => (state.minstret >> 32) as u32,
    }
}

/// Per-class instruction cycle costs.
///
/// The real core is five-stage pipelined; this model instead charges a fixed
/// per-instruction cost so that leakage positions are stable and replayable.
/// The table is a configuration knob for users who want to approximate a
/// specific core.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub alu: u32,
    pub load: u32,
    pub store: u32,
    pub mul: u32,
    pub div: u32,
}

impl Default for CostTable {
    fn default() -> Self {
        CostTable {
            alu: 1,
            load: 3,
            store: 3,
            mul: 5,
            div: 34,
        }
    }
}

impl CostTable {
    pub fn cost_of(&self, m: Mnemonic) -> u32 {
        use Mnemonic::*;
        match m {
            Lb | Lh | Lw | Lbu | Lhu => self.load,
            Sb | Sh | Sw => self.store,
            Mul | Mulh | Mulhsu | Mulhu => self.mul,
            Div | Divu | Rem | Remu => self.div,
            _ => self.alu,
        }
    }
}

/// Switching activity of one retired instruction, as popcounts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InstrActivity {
    /// Hamming distance between consecutive fetch PCs.
    pub pc_hd: u8,
    /// Hamming distance of the written register, old value to new.
    pub regfile_hd: u8,
    /// Hamming weight of the ALU result (effective address for memory ops).
    pub alu_hw: u8,
    /// Hamming weight of the 32-bit data-bus word (0 when no data access).
    pub dbus_hw: u8,
}

/// What one call to [`exec_one`] did.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Retired instruction; `None` when the step was consumed by trap entry.
    pub retired: Option<Instruction>,
    pub cycles: u32,
    pub activity: InstrActivity,
    pub trap: Option<Trap>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trap {
    MachineTimer,
    IllegalInstruction,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("unhandled trap at pc {pc:#010x} (cause {cause:#010x}, mtvec unset)")]
    UnhandledTrap { pc: u32, cause: u32 },
    #[error("instruction fetch from {pc:#010x} outside RAM")]
    FetchFault { pc: u32 },
    #[error("cycle budget of {budget} exhausted")]
    Timeout { budget: u64 },
}
