//! Bundled guest programs and the measurement choreography that runs them.
//!
//! Three AES-128 assembly workloads ship with the workbench: plain, masked
//! (first-order boolean masking) and morphing (randomized AddRoundKey
//! variants plus periodically re-masked S-box pair). The chaff
//! countermeasure reuses the plain cipher under a random preemptive
//! scheduler, see [`chaff_encrypt`].
//!
//! Host and guest meet at a fixed I/O block in RAM; the host drives every
//! interaction through the debug link (memory-mapped writes, breakpoints,
//! triggerpoints, register access), exactly like an external debugger
//! would.

pub mod aes;
mod chaff;

pub use aes::{aes128_golden, expand_key, SBOX};
pub use chaff::{
    chaff_encrypt, generate_chaff_keys, ChaffConfig, ChaffRun, ContextKind, GuestContext,
};

use thiserror::Error;

use crate::asm::{assemble, AsmError, MemoryImage, UnknownSymbol};
use crate::debug::{dispatch, DebugRequest, TokenType};
use crate::isa::SimError;
use crate::leakage::SwitchingLog;
use crate::machine::Machine;
use crate::rng::derive_seed;
use crate::soc::SocConfig;

/// Guest I/O block addresses (shared by all workloads).
pub const IO_KEY: u32 = 0x0002_0000;
pub const IO_PTX: u32 = 0x0002_0010;
pub const IO_CT: u32 = 0x0002_0020;
pub const IO_DONE: u32 = 0x0002_0030;
pub const IO_DBG: u32 = 0x0002_0040;
pub const IO_ENC_COUNTER: u32 = 0x0002_0050;
pub const IO_MORPH_R: u32 = 0x0002_0054;
pub const IO_VARIANT_RK: u32 = 0x0002_0060;
/// Per-context scratch blocks (context 0 = main).
pub const CTX_SCRATCH_BASE: u32 = 0x0002_1000;
pub const CTX_SCRATCH_STRIDE: u32 = 0x0000_0400;
pub const CHAFF_KEYS_BASE: u32 = 0x0002_3000;
pub const CHAFF_CT_BASE: u32 = 0x0002_3100;

pub const AES_PLAIN_SRC: &str = include_str!("asm/aes_plain.s");
pub const AES_MASKED_SRC: &str = include_str!("asm/aes_masked.s");
pub const AES_MORPH_SRC: &str = include_str!("asm/aes_morph.s");

#[derive(Debug, Error)]
pub enum RunError {
    #[error("unknown workload `{0}`")]
    UnknownWorkload(String),
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error(transparent)]
    Symbol(#[from] UnknownSymbol),
    #[error("guest fault: {0}")]
    Guest(#[from] SimError),
    #[error("guest did not reach {0}")]
    UnexpectedStop(String),
    #[error("guest never set the done flag")]
    NotDone,
    #[error("debug-link request rejected during choreography")]
    LinkError,
}

/// Names of the bundled workload sources.
pub fn workload_names() -> &'static [&'static str] {
    &["aes_plain", "aes_masked", "aes_morph"]
}

pub fn workload_source(name: &str) -> Result<&'static str, RunError> {
    Ok(match name {
        "aes_plain" => AES_PLAIN_SRC,
        "aes_masked" => AES_MASKED_SRC,
        "aes_morph" => AES_MORPH_SRC,
        _ => return Err(RunError::UnknownWorkload(name.to_string())),
    })
}

pub fn assemble_workload(name: &str) -> Result<MemoryImage, RunError> {
    Ok(assemble(workload_source(name)?)?)
}

/// Builds a machine with the image loaded and the measurement points
/// (bp_pre, bp_post, trigger_start, trigger_end) programmed from symbols.
pub fn prepare_machine(cfg: &SocConfig, image: &MemoryImage) -> Result<Machine, RunError> {
    let entry = image.symbol_lookup("_start")?;
    let mut m = Machine::new(cfg, entry);
    m.load_image(image.base, &image.bytes);
    for sym in ["bp_pre", "bp_post"] {
        let addr = image.symbol_lookup(sym)?;
        send(
            &mut m,
            &DebugRequest::write(TokenType::SetBrkpntCpu, addr, 0),
        )?;
    }
    for sym in ["trigger_start", "trigger_end"] {
        let addr = image.symbol_lookup(sym)?;
        send(
            &mut m,
            &DebugRequest::write(TokenType::SetTrgpntCpu, addr, 0),
        )?;
    }
    Ok(m)
}

fn send(m: &mut Machine, req: &DebugRequest) -> Result<u32, RunError> {
    let resp = dispatch(req, m);
    if !resp.ack {
        return Err(RunError::LinkError);
    }
    Ok(resp.data.unwrap_or(0))
}

pub(crate) fn mmap_write(m: &mut Machine, addr: u32, word: u32) -> Result<(), RunError> {
    send(m, &DebugRequest::write(TokenType::MmapWrite, addr, word))?;
    Ok(())
}

pub(crate) fn mmap_read(m: &mut Machine, addr: u32) -> Result<u32, RunError> {
    send(m, &DebugRequest::read(TokenType::MmapRead, addr))
}

pub(crate) fn write_block16(m: &mut Machine, addr: u32, bytes: &[u8; 16]) -> Result<(), RunError> {
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let w = u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        mmap_write(m, addr + 4 * i as u32, w)?;
    }
    Ok(())
}

pub(crate) fn read_block16(m: &mut Machine, addr: u32) -> Result<[u8; 16], RunError> {
    let mut out = [0u8; 16];
    for i in 0..4 {
        let w = mmap_read(m, addr + 4 * i as u32)?;
        out[4 * i..4 * i + 4].copy_from_slice(&w.to_le_bytes());
    }
    Ok(out)
}

/// Result of one measured guest encryption.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub ciphertext: [u8; 16],
    pub log: SwitchingLog,
    pub window_cycles: u64,
    /// Cycles consumed over the whole run.
    pub total_cycles: u64,
    pub retired_instructions: u64,
}

/// Runs one encryption with the standard breakpoint/trigger choreography:
/// reset, write inputs, run to the pre-window breakpoint, arm recording,
/// run through the trigger window to the post-window breakpoint, then read
/// back the ciphertext through the debug link.
///
/// `seed` reseeds the TRNG and the DFS random-target generator, standing in
/// for fresh physical entropy between traces.
pub fn run_workload(
    m: &mut Machine,
    key: &[u8; 16],
    ptx: &[u8; 16],
    seed: u64,
    budget: u64,
) -> Result<RunOutput, RunError> {
    m.soc.trng.reseed(derive_seed(seed, "trng", 0));
    m.soc.dfs.reseed(derive_seed(seed, "dfs", 0));
    send(m, &DebugRequest::read(TokenType::RstCpu, 0))?;
    let start_cycle = m.cpu.mcycle;
    let start_instret = m.cpu.minstret;
    write_block16(m, IO_KEY, key)?;
    write_block16(m, IO_PTX, ptx)?;
    mmap_write(m, IO_DONE, 0)?;

    send(m, &DebugRequest::read(TokenType::RunCpu, 0))?;
    m.run_until_halt(budget)?;
    m.recorder.arm();
    send(m, &DebugRequest::read(TokenType::RunCpu, 0))?;
    m.run_until_halt(budget)?;
    m.recorder.disarm();
    let log = m.recorder.take();

    if mmap_read(m, IO_DONE)? != 1 {
        return Err(RunError::NotDone);
    }
    let ciphertext = read_block16(m, IO_CT)?;
    let window_cycles = log.window_cycles().ok_or(RunError::UnexpectedStop(
        "trigger window not observed".into(),
    ))?;
    Ok(RunOutput {
        ciphertext,
        log,
        window_cycles,
        total_cycles: m.cpu.mcycle - start_cycle,
        retired_instructions: m.cpu.minstret - start_instret,
    })
}
