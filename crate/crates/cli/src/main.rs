//! Command-line driver for the workbench.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data/trace-file error,
//! 4 runtime fault (guest fault, timeout, I/O).

mod repl;
mod tcp;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use voltlab_core::flow::{
    analyze, configure, measure, AnalyzeOptions, AttackKind, CampaignConfig, MetricsReport,
    ResolvedCampaign, TraceRecord,
};
use voltlab_core::leakage::{read_scat, read_vcd, ScatError};

#[derive(Parser)]
#[command(
    name = "voltlab",
    version,
    about = "virtual side-channel analysis workbench"
)]
struct Cli {
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a campaign config; emit the resolved config, memory image
    /// and symbol table.
    Configure(ConfigureArgs),
    /// Run the campaign: N encryptions, SCAT1 traces, VCD waveforms,
    /// metadata sidecar.
    Measure(MeasureArgs),
    /// Attack a trace set and write the metrics report.
    Analyze(AnalyzeArgs),
    /// Interactive debug session speaking the wire protocol.
    Debug(DebugArgs),
}

#[derive(Args)]
struct ConfigureArgs {
    /// Campaign config (JSON). Defaults apply for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Trace count override.
    #[arg(long)]
    traces: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory produced by `measure` (or a SCAT1 file directly).
    #[arg(long)]
    traces: PathBuf,
    /// Report output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated attack list: cpa,template,cnn.
    #[arg(long, default_value = "cpa")]
    attacks: String,
    /// Comma-separated key byte indices (default all 16).
    #[arg(long)]
    bytes: Option<String>,
    /// Repetition subsets for success rate / guessing entropy.
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Prefix budget for the minimum-traces search (0 disables).
    #[arg(long, default_value_t = 1000)]
    budget: usize,
    /// Resample windows to this length before attacking.
    #[arg(long)]
    window_len: Option<usize>,
}

#[derive(Args)]
struct DebugArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Serve the wire protocol on this TCP address instead of a REPL.
    #[arg(long)]
    listen: Option<String>,
    /// Attach the REPL to a remote wire-protocol server.
    #[arg(long)]
    connect: Option<String>,
}

fn load_config(path: &Option<PathBuf>) -> Result<CampaignConfig, String> {
    match path {
        None => Ok(CampaignConfig::default()),
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| format!("reading {}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("parsing {}: {e}", p.display()))
        }
    }
}

fn resolve(
    args_config: &Option<PathBuf>,
    seed: Option<u64>,
    traces: Option<usize>,
) -> Result<ResolvedCampaign, String> {
    let mut cfg = load_config(args_config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(n) = traces {
        cfg.n_traces = n;
    }
    configure(cfg).map_err(|e| e.to_string())
}

fn write_resolved(dir: &Path, resolved: &ResolvedCampaign) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("resolved.json"),
        serde_json::to_string_pretty(&resolved.config)?,
    )?;
    fs::write(dir.join("image.vmem"), resolved.image.to_vmem())?;
    fs::write(
        dir.join("symbols.json"),
        serde_json::to_string_pretty(&resolved.image.symbols)?,
    )?;
    Ok(())
}

fn cmd_configure(args: &ConfigureArgs, quiet: bool) -> Result<ExitCode> {
    let resolved = match resolve(&args.config, args.seed, None) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return Ok(ExitCode::from(2));
        }
    };
    write_resolved(&args.out, &resolved)?;
    if !quiet {
        println!(
            "configured workload `{}` ({} bytes of image, config hash {:016x})",
            resolved.workload,
            resolved.image.bytes.len(),
            resolved.config_hash
        );
        println!("wrote {}", args.out.join("resolved.json").display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_measure(args: &MeasureArgs, quiet: bool) -> Result<ExitCode> {
    let resolved = match resolve(&args.config, args.seed, args.traces) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return Ok(ExitCode::from(2));
        }
    };
    write_resolved(&args.out, &resolved)?;
    let out = match measure(&resolved) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("measurement fault: {e}");
            return Ok(ExitCode::from(4));
        }
    };
    fs::write(args.out.join("traces.scat1"), out.scat_bytes())?;
    fs::write(args.out.join("metadata.json"), out.metadata_json())?;
    for (i, vcd) in out.vcds.iter().enumerate() {
        fs::write(args.out.join(format!("trace_{i:04}.vcd")), vcd)?;
    }
    if !quiet {
        println!(
            "measured {} traces ({} samples each) -> {}",
            out.traces.len(),
            out.traces.first().map_or(0, |t| t.samples.len()),
            args.out.join("traces.scat1").display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_attacks(s: &str) -> Result<Vec<AttackKind>, String> {
    s.split(',')
        .map(|a| match a.trim() {
            "cpa" => Ok(AttackKind::Cpa),
            "template" => Ok(AttackKind::Template),
            "cnn" => Ok(AttackKind::Cnn),
            other => Err(format!("unknown attack `{other}`")),
        })
        .collect()
}

fn print_summary(report: &MetricsReport) {
    println!(
        "{} traces, window {} samples{}",
        report.n_traces,
        report.window_len,
        report
            .mean_window_cycles
            .map(|c| format!(", mean window {c:.0} cycles"))
            .unwrap_or_default()
    );
    for a in &report.attacks {
        println!(
            "[{}] mean GE {:.2}, full-key success {:.0}%, min traces {}",
            a.attack,
            a.mean_guessing_entropy,
            a.full_key_success_rate,
            a.full_key_min_traces
                .map(|v| v.to_string())
                .unwrap_or_else(|| "undefined".into()),
        );
        for b in &a.per_byte {
            let gd = b
                .metrics
                .guessing_distance
                .map(|v| format!("{v:.3}"))
                .unwrap_or_else(|| "undefined".into());
            let mt = b
                .metrics
                .min_traces
                .map(|v| v.to_string())
                .unwrap_or_else(|| "undefined".into());
            match &b.error {
                Some(e) => println!("  byte {:2}: error: {e}", b.byte_index),
                None => println!(
                    "  byte {:2}: GE {:7.2}  GD {gd:>9}  SR {:5.1}%  min_traces {mt}",
                    b.byte_index, b.metrics.guessing_entropy, b.metrics.success_rate
                ),
            }
        }
    }
    if !report.leakage_localization.is_empty() {
        println!("leakage localization (top 5):");
        for loc in report.leakage_localization.iter().take(5) {
            println!(
                "  {} @ window+{} cycles: |PCC| {:.3}",
                loc.component, loc.cycle_offset, loc.abs_pcc
            );
        }
    }
}

fn cmd_analyze(args: &AnalyzeArgs, quiet: bool) -> Result<ExitCode> {
    let (scat_path, meta_path, vcd_dir) = if args.traces.is_dir() {
        (
            args.traces.join("traces.scat1"),
            Some(args.traces.join("metadata.json")),
            Some(args.traces.clone()),
        )
    } else {
        (args.traces.clone(), None, None)
    };
    let bytes = match fs::read(&scat_path) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("cannot read {}: {e}", scat_path.display());
            return Ok(ExitCode::from(3));
        }
    };
    let scat = match read_scat(&mut bytes.as_slice()) {
        Ok(s) => s,
        Err(e @ (ScatError::BadMagic | ScatError::BadVersion(_) | ScatError::Truncated)) => {
            eprintln!("malformed trace file {}: {e}", scat_path.display());
            return Ok(ExitCode::from(3));
        }
        Err(e) => return Err(e).context("reading trace file"),
    };
    let key = scat.traces.first().map(|t| t.meta.key).unwrap_or_default();

    // Optional sidecar: per-trace records for the performance figures.
    let records: Vec<TraceRecord> = meta_path
        .and_then(|p| fs::read_to_string(p).ok())
        .and_then(|text| {
            serde_json::from_str::<serde_json::Value>(&text)
                .ok()
                .and_then(|v| serde_json::from_value(v.get("traces")?.clone()).ok())
        })
        .unwrap_or_default();

    // Optional waveforms: switching logs for localization.
    let mut logs = Vec::new();
    if let Some(dir) = vcd_dir {
        let mut names: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "vcd"))
            .collect();
        names.sort();
        for p in names {
            if let Some(log) = fs::read_to_string(&p).ok().and_then(|t| read_vcd(&t)) {
                logs.push(log);
            }
        }
    }

    let mut opts = AnalyzeOptions {
        repetitions: args.reps,
        min_traces_budget: args.budget,
        window_len: args.window_len,
        ..Default::default()
    };
    opts.attacks = match parse_attacks(&args.attacks) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{e}");
            return Ok(ExitCode::from(2));
        }
    };
    if let Some(bytes_arg) = &args.bytes {
        match bytes_arg
            .split(',')
            .map(|b| b.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
        {
            Ok(v) if v.iter().all(|&b| b < 16) => opts.byte_indices = v,
            _ => {
                eprintln!("--bytes wants comma-separated indices 0..=15");
                return Ok(ExitCode::from(2));
            }
        }
    }

    let report = match analyze(&scat.traces, key, &logs, &records, &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("analysis error: {e}");
            return Ok(ExitCode::from(3));
        }
    };
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &args.out {
        fs::write(out, &json)?;
        if !quiet {
            println!("wrote {}", out.display());
        }
    }
    if !quiet {
        print_summary(&report);
    } else if args.out.is_none() {
        println!("{json}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_debug(args: &DebugArgs) -> Result<ExitCode> {
    if let Some(addr) = &args.connect {
        return repl::run_remote(addr);
    }
    let resolved = match resolve(&args.config, None, None) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return Ok(ExitCode::from(2));
        }
    };
    if let Some(addr) = &args.listen {
        return tcp::serve(&resolved, addr);
    }
    repl::run_local(&resolved)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Configure(a) => cmd_configure(a, cli.quiet),
        Command::Measure(a) => cmd_measure(a, cli.quiet),
        Command::Analyze(a) => cmd_analyze(a, cli.quiet),
        Command::Debug(a) => cmd_debug(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(4)
        }
    }
}
