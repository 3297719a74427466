//! Virtual side-channel analysis workbench.
//!
//! The crate models a small RISC-V SoC (RV32IM CPU, RAM, UART, TRNG, timer,
//! DFS clock actuator) together with the measurement and analysis machinery
//! needed for power side-channel research: a debug wire protocol with
//! breakpoints and triggerpoints, per-cycle switching-activity recording,
//! VCD export, oscilloscope-style power-trace synthesis, AES workloads with
//! masking/morphing/chaff countermeasures, and CPA/template/CNN attacks with
//! the usual quality metrics.
//!
//! Everything is deterministic: a campaign is a pure function of its
//! configuration and master seed.

pub mod analysis;
pub mod asm;
pub mod debug;
pub mod flow;
pub mod isa;
pub mod leakage;
pub mod machine;
pub mod rng;
pub mod soc;
pub mod workloads;

pub use machine::Machine;
