//! The configure -> measure -> analyze automation layer.
//!
//! Everything here is pure with respect to the filesystem: `configure`
//! resolves and validates a campaign, `measure` turns it into traces, VCDs
//! and metadata, `analyze` turns traces into a metrics report. The CLI is a
//! thin wrapper that moves these artifacts to and from disk.

mod analyze;
mod measure;

pub use analyze::{analyze, AnalyzeOptions, AttackKind, AttackReport, ByteMetrics, MetricsReport};
pub use measure::{measure, MeasureError, MeasureOutput, TraceRecord};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asm::MemoryImage;
use crate::leakage::ScopeConfig;
use crate::soc::{Dfs, SocConfig};
use crate::workloads::{assemble_workload, ChaffConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Countermeasure selection for a campaign.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct Countermeasures {
    pub masking: bool,
    pub morphing: bool,
    pub dfs_random: bool,
    /// Number of decoy contexts; 0 disables chaff.
    pub num_chaff: usize,
}

/// Plaintext generation policy for the measure phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlaintextPolicy {
    /// Fresh uniform random plaintext per trace.
    #[default]
    Uniform,
    /// Chosen plaintexts balancing the SubBytes-output Hamming-weight
    /// classes of one byte (template profiling sets).
    BalancedSboxHw { byte_index: usize },
}

/// A full campaign description, the schema of the JSON config file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct CampaignConfig {
    /// Base workload source; masking/morphing flags select their variants.
    pub workload: String,
    pub countermeasures: Countermeasures,
    pub n_traces: usize,
    /// Fixed campaign key, 32 hex digits.
    pub key_hex: String,
    pub plaintext_policy: PlaintextPolicy,
    pub scope: ScopeConfig,
    pub soc: SocConfig,
    /// All per-trace randomness derives from this.
    pub master_seed: u64,
    /// Write VCD waveforms for the first K traces.
    pub vcd_traces: usize,
    /// Keep in-memory switching logs for the first K traces (localization).
    pub keep_logs: usize,
    /// Samples kept on each side of the trigger window in stored traces.
    pub capture_margin_samples: u32,
    /// Morphing mask-refresh period in encryptions (0 = guest default 256).
    pub morph_refresh: u32,
    pub chaff: ChaffConfig,
    /// Per-run simulation cycle budget.
    pub cycle_budget: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            workload: "aes_plain".into(),
            countermeasures: Countermeasures::default(),
            n_traces: 100,
            key_hex: "2b7e151628aed2a6abf7158809cf4f3c".into(),
            plaintext_policy: PlaintextPolicy::Uniform,
            scope: ScopeConfig::default(),
            soc: SocConfig::default(),
            master_seed: 1,
            vcd_traces: 2,
            keep_logs: 0,
            capture_margin_samples: 96,
            morph_refresh: 0,
            chaff: ChaffConfig::default(),
            cycle_budget: 100_000_000,
        }
    }
}

/// A validated campaign with its assembled workload image.
#[derive(Debug, Clone)]
pub struct ResolvedCampaign {
    pub config: CampaignConfig,
    pub workload: String,
    pub image: MemoryImage,
    pub key: [u8; 16],
    pub config_hash: u64,
}

fn parse_key(hex: &str) -> Result<[u8; 16], ConfigError> {
    if hex.len() != 32 || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(ConfigError::Invalid(format!(
            "key_hex must be 32 hex digits, got `{hex}`"
        )));
    }
    let mut key = [0u8; 16];
    for (i, b) in key.iter_mut().enumerate() {
        *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).unwrap();
    }
    Ok(key)
}

/// FNV-1a over the canonical JSON of the resolved config; identifies the
/// exact campaign parameters in metadata sidecars.
fn config_hash(cfg: &CampaignConfig) -> u64 {
    let canon = serde_json::to_string(cfg).expect("config serializes");
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in canon.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// The configure phase: validates the campaign and assembles its workload.
pub fn configure(config: CampaignConfig) -> Result<ResolvedCampaign, ConfigError> {
    let cm = &config.countermeasures;
    if cm.masking && cm.morphing {
        return Err(ConfigError::Invalid(
            "masking and morphing select different workload sources; enable one".into(),
        ));
    }
    let workload = if cm.masking {
        "aes_masked"
    } else if cm.morphing {
        "aes_morph"
    } else {
        match config.workload.as_str() {
            "aes" | "aes_plain" => "aes_plain",
            "aes_masked" | "aes_morph" => config.workload.as_str(),
            other => return Err(ConfigError::Invalid(format!("unknown workload `{other}`"))),
        }
    };
    if cm.num_chaff > 0 && workload != "aes_plain" {
        return Err(ConfigError::Invalid(
            "chaff decoys run the plain cipher; disable masking/morphing".into(),
        ));
    }
    if config.n_traces == 0 {
        return Err(ConfigError::Invalid("n_traces must be at least 1".into()));
    }
    let key = parse_key(&config.key_hex)?;
    if let PlaintextPolicy::BalancedSboxHw { byte_index } = config.plaintext_policy {
        if byte_index >= 16 {
            return Err(ConfigError::Invalid(format!(
                "plaintext policy byte_index {byte_index} out of range"
            )));
        }
    }
    config
        .scope
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Dfs::validate_table(&config.soc.dfs.freq_table_mhz)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let table = Dfs::validate_table(&config.soc.dfs.freq_table_mhz).unwrap();
    match crate::soc::mhz_to_freq8(config.soc.dfs.default_freq_mhz) {
        Some(f8) if table.contains(&f8) => {}
        _ => {
            return Err(ConfigError::Invalid(format!(
                "default DFS frequency {} MHz is not a valid table entry",
                config.soc.dfs.default_freq_mhz
            )))
        }
    }
    // Sample rate must cover the fastest table entry.
    let max_mhz = config
        .soc
        .dfs
        .freq_table_mhz
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    if config.scope.sample_rate_msps < max_mhz {
        return Err(ConfigError::Invalid(format!(
            "sample rate {} Msps below the fastest clock {} MHz (need >= 1 sample per cycle)",
            config.scope.sample_rate_msps, max_mhz
        )));
    }
    let image = assemble_workload(workload).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let hash = config_hash(&config);
    Ok(ResolvedCampaign {
        workload: workload.to_string(),
        image,
        key,
        config_hash: hash,
        config,
    })
}
