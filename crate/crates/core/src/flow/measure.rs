//! The measure phase: one virtual machine, N encryptions, the standard
//! breakpoint/trigger choreography per trace, and the two artifacts (VCD
//! waveforms and SCAT1 power traces) emitted from the same run so their
//! temporal match holds by construction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PlaintextPolicy, ResolvedCampaign};
use crate::analysis::hw8;
use crate::leakage::{
    synthesize_trace, trim_to_window, write_scat, write_vcd, PowerTrace, SwitchingLog, SynthError,
};
use crate::machine::Machine;
use crate::rng::{derive_seed, Rng};
use crate::workloads::{
    aes128_golden, chaff_encrypt, mmap_write, prepare_machine, run_workload, RunError, IO_MORPH_R,
    SBOX,
};

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("trace {index}: {source}")]
    Run { index: usize, source: RunError },
    #[error("trace {index}: {source}")]
    Synth { index: usize, source: SynthError },
    #[error(
        "trace {index}: guest ciphertext does not match the reference AES (simulation integrity)"
    )]
    CiphertextMismatch { index: usize },
}

/// Per-trace metadata, the JSON sidecar rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub plaintext_hex: String,
    pub ciphertext_hex: String,
    pub window_cycles: u64,
    pub window_wall_ns: f64,
    pub total_cycles: u64,
    pub seed: u64,
}

/// Everything the measure phase produces, in memory.
#[derive(Debug)]
pub struct MeasureOutput {
    pub traces: Vec<PowerTrace>,
    /// VCD text for the first `vcd_traces` runs.
    pub vcds: Vec<String>,
    /// Switching logs for the first `keep_logs` runs (localization input).
    pub logs: Vec<SwitchingLog>,
    pub records: Vec<TraceRecord>,
    pub resolved: ResolvedCampaign,
}

impl MeasureOutput {
    pub fn scat_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_scat(
            &self.traces,
            self.resolved.config.scope.resolution_bits,
            &mut out,
        )
        .expect("writing to memory cannot fail");
        out
    }

    /// The metadata sidecar: resolved-config hash, seeds, per-trace records.
    pub fn metadata_json(&self) -> String {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            workload: &'a str,
            countermeasures: &'a super::Countermeasures,
            master_seed: u64,
            config_hash: String,
            key_hex: &'a str,
            n_traces: usize,
            sample_period_ns: f64,
            traces: &'a [TraceRecord],
        }
        serde_json::to_string_pretty(&Sidecar {
            workload: &self.resolved.workload,
            countermeasures: &self.resolved.config.countermeasures,
            master_seed: self.resolved.config.master_seed,
            config_hash: format!("{:016x}", self.resolved.config_hash),
            key_hex: &self.resolved.config.key_hex,
            n_traces: self.traces.len(),
            sample_period_ns: self.traces.first().map_or(0.0, |t| t.sample_period_ns),
            traces: &self.records,
        })
        .expect("sidecar serializes")
    }
}

fn hex32(b: &[u8; 16]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

fn draw_plaintext(
    policy: PlaintextPolicy,
    key: &[u8; 16],
    rng: &mut Rng,
    index: usize,
) -> [u8; 16] {
    let mut ptx = [0u8; 16];
    rng.fill_bytes(&mut ptx);
    if let PlaintextPolicy::BalancedSboxHw { byte_index } = policy {
        // Cycle through the 9 HW classes; pick a uniform S-box output of
        // the target class and map it back through the known key.
        let class = (index % 9) as u8;
        let candidates: Vec<u8> = (0..=255u8).filter(|&v| hw8(v) == class).collect();
        let v = candidates[rng.below(candidates.len() as u64) as usize];
        let x = SBOX.iter().position(|&s| s == v).unwrap() as u8;
        ptx[byte_index] = x ^ key[byte_index];
    }
    ptx
}

/// Runs the whole campaign. Byte-identical output for a given resolved
/// campaign: every random choice derives from the master seed.
pub fn measure(resolved: &ResolvedCampaign) -> Result<MeasureOutput, MeasureError> {
    let cfg = &resolved.config;
    let mut soc_cfg = cfg.soc.clone();
    soc_cfg.cpu = cfg.soc.cpu;
    let mut machine: Machine =
        prepare_machine(&soc_cfg, &resolved.image).map_err(|e| MeasureError::Run {
            index: 0,
            source: e,
        })?;
    if cfg.countermeasures.dfs_random {
        machine.soc.dfs.set_random_mode(true);
    }
    if resolved.workload == "aes_morph" && cfg.morph_refresh > 0 {
        mmap_write(&mut machine, IO_MORPH_R, cfg.morph_refresh).map_err(|e| MeasureError::Run {
            index: 0,
            source: e,
        })?;
    }

    let mut ptx_rng = Rng::from_seed(derive_seed(cfg.master_seed, "ptx", 0));
    let mut traces = Vec::with_capacity(cfg.n_traces);
    let mut vcds = Vec::new();
    let mut logs = Vec::new();
    let mut records = Vec::with_capacity(cfg.n_traces);

    for i in 0..cfg.n_traces {
        let ptx = draw_plaintext(cfg.plaintext_policy, &resolved.key, &mut ptx_rng, i);
        let run_seed = derive_seed(cfg.master_seed, "run", i as u64);
        let out = if cfg.countermeasures.num_chaff > 0 {
            let mut chaff_cfg = cfg.chaff.clone();
            chaff_cfg.num_chaff = cfg.countermeasures.num_chaff;
            chaff_encrypt(
                &mut machine,
                &resolved.image,
                &resolved.key,
                &ptx,
                &chaff_cfg,
                run_seed,
                cfg.cycle_budget,
            )
            .map(|r| r.output)
        } else {
            run_workload(
                &mut machine,
                &resolved.key,
                &ptx,
                run_seed,
                cfg.cycle_budget,
            )
        }
        .map_err(|e| MeasureError::Run {
            index: i,
            source: e,
        })?;

        if out.ciphertext != aes128_golden(&resolved.key, &ptx) {
            return Err(MeasureError::CiphertextMismatch { index: i });
        }

        let noise_seed = derive_seed(cfg.master_seed, "noise", i as u64);
        let full = synthesize_trace(&out.log, &cfg.scope, noise_seed).map_err(|e| {
            MeasureError::Synth {
                index: i,
                source: e,
            }
        })?;
        let mut trace =
            trim_to_window(&full, cfg.capture_margin_samples).map_err(|e| MeasureError::Synth {
                index: i,
                source: e,
            })?;
        trace.meta.plaintext = ptx;
        trace.meta.key = resolved.key;
        trace.meta.seed = run_seed;
        trace.meta.workload = resolved.workload.clone();
        trace.meta.window_cycles = out.window_cycles;
        let cm = &cfg.countermeasures;
        for (flag, name) in [
            (cm.masking, "masking"),
            (cm.morphing, "morphing"),
            (cm.dfs_random, "dfs_random"),
            (cm.num_chaff > 0, "chaff"),
        ] {
            if flag {
                trace.meta.countermeasures.push(name.to_string());
            }
        }

        if i < cfg.vcd_traces {
            let mut text = Vec::new();
            write_vcd(&out.log, &mut text).expect("writing to memory cannot fail");
            vcds.push(String::from_utf8(text).expect("vcd is ascii"));
        }
        let rise = out.log.trigger_rise.expect("window observed");
        let fall = out.log.trigger_fall.expect("window observed");
        records.push(TraceRecord {
            plaintext_hex: hex32(&ptx),
            ciphertext_hex: hex32(&out.ciphertext),
            window_cycles: out.window_cycles,
            window_wall_ns: fall.time_ns - rise.time_ns,
            total_cycles: out.total_cycles,
            seed: run_seed,
        });
        if i < cfg.keep_logs {
            logs.push(out.log);
        }
        traces.push(trace);
    }

    Ok(MeasureOutput {
        traces,
        vcds,
        logs,
        records,
        resolved: resolved.clone(),
    })
}
