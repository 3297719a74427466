//! The chaff countermeasure: decoy cipher instances with correlated keys
//! running concurrently with the real one under a random preemptive
//! scheduler.
//!
//! An RTOS is not ported; the decoy threads are simulator-level guest
//! contexts whose register file and PC are saved and restored when the
//! machine timer fires, with geometrically distributed time slices. The
//! interleaving effect on the trace, which is the whole point of the
//! countermeasure, is preserved while runs stay deterministic per seed.
//!
//! The main context executes the standard workload wrapper, so breakpoints
//! and triggerpoints (which live in the wrapper, not the shared cipher
//! code) fire only for the real encryption. Decoy contexts loop over
//! encryptions of the same plaintext with their own keys until the main
//! context completes, then they are terminated.

use serde::{Deserialize, Serialize};

use super::{mmap_read, mmap_write, read_block16, write_block16, RunError, RunOutput};
use super::{
    CHAFF_CT_BASE, CHAFF_KEYS_BASE, CTX_SCRATCH_BASE, CTX_SCRATCH_STRIDE, IO_CT, IO_DONE, IO_KEY,
    IO_PTX,
};
use crate::asm::MemoryImage;
use crate::debug::{dispatch, DebugRequest, TokenType};
use crate::machine::{Machine, StepEvent};
use crate::rng::{derive_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextKind {
    Main,
    Chaff,
}

/// A saved guest execution context.
#[derive(Debug, Clone)]
pub struct GuestContext {
    pub id: usize,
    pub regs: [u32; 32],
    pub pc: u32,
    pub kind: ContextKind,
    pub key: [u8; 16],
    pub alive: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ChaffConfig {
    pub num_chaff: usize,
    /// Mean of the geometric time-slice distribution, cycles.
    pub mean_slice_cycles: u64,
}

impl Default for ChaffConfig {
    fn default() -> Self {
        ChaffConfig {
            num_chaff: 7,
            mean_slice_cycles: 200,
        }
    }
}

/// Generates `n` decoy keys correlated with `key`: every byte differs by 1
/// or 2 flipped bits (uniformly chosen count and positions). Keys are
/// regenerated on collision so they are distinct from the real key and
/// from each other.
pub fn generate_chaff_keys(key: &[u8; 16], n: usize, rng: &mut Rng) -> Vec<[u8; 16]> {
    let mut out: Vec<[u8; 16]> = Vec::with_capacity(n);
    while out.len() < n {
        let mut k = *key;
        for b in k.iter_mut() {
            let flips = 1 + rng.below(2);
            let p1 = rng.below(8) as u8;
            *b ^= 1 << p1;
            if flips == 2 {
                let mut p2 = rng.below(8) as u8;
                while p2 == p1 {
                    p2 = rng.below(8) as u8;
                }
                *b ^= 1 << p2;
            }
        }
        if k != *key && !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

/// Result of a chaff-protected encryption.
#[derive(Debug, Clone)]
pub struct ChaffRun {
    pub output: RunOutput,
    /// Cycles executed by each context (index 0 = main).
    pub context_cycles: Vec<u64>,
    /// mcycle values at which a context switch occurred.
    pub switch_cycles: Vec<u64>,
    /// Final context table (all chaff contexts dead on return).
    pub contexts: Vec<GuestContext>,
}

/// Runs one chaff-protected encryption: the main context executes the
/// wrapper with measurement points; `num_chaff` decoys encrypt the same
/// plaintext with correlated keys under the random scheduler until the
/// main encryption completes.
pub fn chaff_encrypt(
    m: &mut Machine,
    image: &MemoryImage,
    key: &[u8; 16],
    ptx: &[u8; 16],
    cfg: &ChaffConfig,
    seed: u64,
    budget: u64,
) -> Result<ChaffRun, RunError> {
    m.soc.trng.reseed(derive_seed(seed, "trng", 0));
    m.soc.dfs.reseed(derive_seed(seed, "dfs", 0));
    let mut sched_rng = Rng::from_seed(derive_seed(seed, "sched", 0));
    let mut key_rng = Rng::from_seed(derive_seed(seed, "chaffkeys", 0));

    send_ok(m, &DebugRequest::read(TokenType::RstCpu, 0))?;
    let start_cycle = m.cpu.mcycle;
    let start_instret = m.cpu.minstret;
    write_block16(m, IO_KEY, key)?;
    write_block16(m, IO_PTX, ptx)?;
    mmap_write(m, IO_DONE, 0)?;

    // Create(cipher, key, ptx) for the main thread and each decoy.
    let chaff_entry = image.symbol_lookup("chaff_entry")?;
    let chaff_keys = generate_chaff_keys(key, cfg.num_chaff, &mut key_rng);
    let mut contexts = vec![GuestContext {
        id: 0,
        regs: [0; 32],
        pc: m.entry_pc(),
        kind: ContextKind::Main,
        key: *key,
        alive: true,
    }];
    for (i, ck) in chaff_keys.iter().enumerate() {
        let key_addr = CHAFF_KEYS_BASE + 16 * i as u32;
        write_block16(m, key_addr, ck)?;
        let mut regs = [0u32; 32];
        regs[10] = key_addr; // a0
        regs[11] = IO_PTX; // a1
        regs[12] = CHAFF_CT_BASE + 16 * i as u32; // a2
        regs[13] = CTX_SCRATCH_BASE + CTX_SCRATCH_STRIDE * (i as u32 + 1); // a3
        contexts.push(GuestContext {
            id: i + 1,
            regs,
            pc: chaff_entry,
            kind: ContextKind::Chaff,
            key: *ck,
            alive: true,
        });
    }

    let mut context_cycles = vec![0u64; contexts.len()];
    let mut switch_cycles = Vec::new();
    let mut current = 0usize;

    // Program the first slice and start the random scheduler.
    let slice = |rng: &mut Rng, mean: u64| rng.geometric(1.0 / mean as f64);
    m.soc.timer.mtimecmp = m.soc.timer.mtime + slice(&mut sched_rng, cfg.mean_slice_cycles);
    m.cpu.timer_ip = false;

    send_ok(m, &DebugRequest::read(TokenType::RunCpu, 0))?;
    let mut phase_armed = false;
    let budget_end = m.cpu.mcycle + budget;
    while m.cpu.mcycle < budget_end {
        // Preempt at instruction boundaries when the timer slice expired.
        if m.cpu.timer_ip && contexts.len() > 1 {
            let next = sched_rng.below(contexts.len() as u64) as usize;
            if next != current {
                contexts[current].regs = m.cpu.regs;
                contexts[current].pc = m.cpu.pc;
                m.cpu.regs = contexts[next].regs;
                m.cpu.pc = contexts[next].pc;
                current = next;
                switch_cycles.push(m.cpu.mcycle);
            }
            m.soc.timer.mtimecmp = m.soc.timer.mtime + slice(&mut sched_rng, cfg.mean_slice_cycles);
            m.cpu.timer_ip = false;
        }
        let before = m.cpu.mcycle;
        let ev = m.step()?;
        context_cycles[current] += m.cpu.mcycle - before;
        match ev {
            StepEvent::Breakpoint => {
                if !phase_armed {
                    // Main reached bp_pre: arm recording and resume.
                    m.recorder.arm();
                    phase_armed = true;
                    send_ok(m, &DebugRequest::read(TokenType::RunCpu, 0))?;
                } else {
                    // Main reached bp_post: encryption complete.
                    break;
                }
            }
            StepEvent::AlreadyHalted => break,
            _ => {}
        }
    }
    if m.cpu.mcycle >= budget_end {
        return Err(RunError::Guest(crate::isa::SimError::Timeout { budget }));
    }
    m.recorder.disarm();
    let log = m.recorder.take();

    // IsRunning(mainThread) returned false: kill the decoys.
    for ctx in contexts.iter_mut().skip(1) {
        ctx.alive = false;
    }

    if mmap_read(m, IO_DONE)? != 1 {
        return Err(RunError::NotDone);
    }
    let ciphertext = read_block16(m, IO_CT)?;
    let window_cycles = log.window_cycles().ok_or(RunError::UnexpectedStop(
        "trigger window not observed".into(),
    ))?;
    Ok(ChaffRun {
        output: RunOutput {
            ciphertext,
            log,
            window_cycles,
            total_cycles: m.cpu.mcycle - start_cycle,
            retired_instructions: m.cpu.minstret - start_instret,
        },
        context_cycles,
        switch_cycles,
        contexts,
    })
}

fn send_ok(m: &mut Machine, req: &DebugRequest) -> Result<(), RunError> {
    if !dispatch(req, m).ack {
        return Err(RunError::LinkError);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soc::SocConfig;
    use crate::workloads::{aes128_golden, assemble_workload, prepare_machine, run_workload};

    fn chaff_cfg(n: usize) -> ChaffConfig {
        ChaffConfig {
            num_chaff: n,
            mean_slice_cycles: 200,
        }
    }

    fn run_chaff(n: usize, seed: u64) -> ChaffRun {
        let image = assemble_workload("aes_plain").unwrap();
        let mut m = prepare_machine(&SocConfig::default(), &image).unwrap();
        let key = [0x42u8; 16];
        let ptx = [0x17u8; 16];
        chaff_encrypt(&mut m, &image, &key, &ptx, &chaff_cfg(n), seed, 50_000_000).unwrap()
    }

    #[test]
    fn chaff_keys_flip_one_or_two_bits_per_byte() {
        let mut rng = Rng::from_seed(5);
        let key = [0xA5u8; 16];
        let keys = generate_chaff_keys(&key, 50, &mut rng);
        assert_eq!(keys.len(), 50);
        for k in &keys {
            assert_ne!(k, &key);
            for (a, b) in k.iter().zip(key.iter()) {
                let hd = (a ^ b).count_ones();
                assert!(hd == 1 || hd == 2, "byte hd {hd}");
            }
        }
        // pairwise distinct
        for i in 0..keys.len() {
            for j in i + 1..keys.len() {
                assert_ne!(keys[i], keys[j]);
            }
        }
        assert!(generate_chaff_keys(&key, 0, &mut rng).is_empty());
    }

    #[test]
    fn chaff_key_bit_positions_uniform() {
        // chi-squared over flipped-bit positions, 7 dof, p = 0.01 -> 18.475
        let mut rng = Rng::from_seed(9);
        let key = [0u8; 16];
        let mut counts = [0u64; 8];
        let mut total = 0u64;
        for _ in 0..700 {
            for k in generate_chaff_keys(&key, 1, &mut rng) {
                for b in k.iter() {
                    for bit in 0..8 {
                        if b >> bit & 1 == 1 {
                            counts[bit] += 1;
                            total += 1;
                        }
                    }
                }
            }
        }
        let expect = total as f64 / 8.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expect).powi(2) / expect)
            .sum();
        assert!(chi2 < 18.475, "chi2 {chi2} counts {counts:?}");
    }

    #[test]
    fn chaff_ciphertext_correct_and_decoys_dead() {
        let run = run_chaff(7, 3);
        assert_eq!(
            run.output.ciphertext,
            aes128_golden(&[0x42; 16], &[0x17; 16])
        );
        assert!(run.contexts.iter().skip(1).all(|c| !c.alive));
        assert_eq!(run.contexts[0].kind, ContextKind::Main);
        assert!(run.switch_cycles.len() > 3, "scheduler never switched");
    }

    #[test]
    fn zero_chaff_matches_plain_run() {
        let image = assemble_workload("aes_plain").unwrap();
        let key = [0x42u8; 16];
        let ptx = [0x17u8; 16];
        let mut m = prepare_machine(&SocConfig::default(), &image).unwrap();
        let plain = run_workload(&mut m, &key, &ptx, 77, 50_000_000).unwrap();
        let mut m2 = prepare_machine(&SocConfig::default(), &image).unwrap();
        let chaff =
            chaff_encrypt(&mut m2, &image, &key, &ptx, &chaff_cfg(0), 77, 50_000_000).unwrap();
        assert_eq!(chaff.output.ciphertext, plain.ciphertext);
        assert_eq!(
            chaff.output.retired_instructions,
            plain.retired_instructions
        );
        assert_eq!(chaff.output.window_cycles, plain.window_cycles);
    }

    #[test]
    fn chaff_window_strictly_longer_than_plain() {
        let image = assemble_workload("aes_plain").unwrap();
        let key = [0x42u8; 16];
        let ptx = [0x17u8; 16];
        let mut m = prepare_machine(&SocConfig::default(), &image).unwrap();
        let plain = run_workload(&mut m, &key, &ptx, 5, 50_000_000).unwrap();
        let chaff = run_chaff(7, 5);
        assert!(
            chaff.output.window_cycles > plain.window_cycles,
            "{} vs {}",
            chaff.output.window_cycles,
            plain.window_cycles
        );
    }

    #[test]
    fn replay_determinism_switch_cycles() {
        let a = run_chaff(5, 123);
        let b = run_chaff(5, 123);
        assert_eq!(a.switch_cycles, b.switch_cycles);
        assert_eq!(a.output.window_cycles, b.output.window_cycles);
        let c = run_chaff(5, 124);
        assert_ne!(a.switch_cycles, c.switch_cycles);
    }

    #[test]
    fn scheduler_fairness_over_window() {
        // every context gets >= 1% of executed cycles, averaged over seeds
        let mut shares = vec![0.0f64; 8];
        let runs = 10;
        for seed in 0..runs {
            let run = run_chaff(7, seed);
            let total: u64 = run.context_cycles.iter().sum();
            for (i, &c) in run.context_cycles.iter().enumerate() {
                shares[i] += c as f64 / total as f64 / runs as f64;
            }
        }
        for (i, share) in shares.iter().enumerate() {
            assert!(*share >= 0.01, "context {i} got {share:.4} of cycles");
        }
    }
}
