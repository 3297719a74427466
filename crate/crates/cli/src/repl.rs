//! Interactive debug session. Every command is encoded as a wire-protocol
//! frame, dispatched (in-process or over TCP), and the decoded response is
//! printed, so the REPL exercises exactly the byte format external clients
//! use.

use std::io::{self, BufRead, Read, Write};
use std::net::TcpStream;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};

use voltlab_core::debug::{
    decode_response, encode_request, DebugRequest, DebugResponse, Endpoint, TokenType,
};
use voltlab_core::flow::ResolvedCampaign;
use voltlab_core::machine::Machine;
use voltlab_core::workloads::prepare_machine;

const HELP: &str = "\
commands:
  halt | run | reset | step          CPU control (run continues to a breakpoint)
  state | pc                         local debug unit state / program counter
  reg <n> [value]                    read or write integer register x<n>
  mem <addr> [value]                 32-bit memory-mapped read or write
  bp set|rm <addr|symbol>            breakpoints (halt the CPU)
  bp list | bp count                 breakpoint table contents / capacity
  tp set|rm <addr|symbol>            triggerpoints (toggle the trigger line)
  tp list | tp count
  pmc                                cycle and retired-instruction counters
  dfs set <mhz> | dfs get | dfs rnd <0|1>
  echo <value>                       loopback through the debug unit
  sym <name>                         symbol address from the loaded image
  quit";

/// How requests reach the machine.
enum Link<'a> {
    Local {
        endpoint: Endpoint,
        machine: &'a mut Machine,
    },
    Remote(TcpStream),
}

impl Link<'_> {
    /// Sends one request frame and returns the decoded response.
    fn transact(&mut self, req: &DebugRequest) -> Result<DebugResponse> {
        let frame = encode_request(req);
        let expect_data = !req.token.is_write() || req.token == TokenType::EchoFrontend;
        match self {
            Link::Local { endpoint, machine } => {
                endpoint.feed(&frame, machine);
                let bytes = endpoint
                    .take_response()
                    .context("no response from the debug unit")?;
                Ok(decode_response(&bytes, expect_data)?.0)
            }
            Link::Remote(stream) => {
                stream.write_all(&frame)?;
                let mut status = [0u8; 1];
                stream.read_exact(&mut status)?;
                if status[0] & 0b01 != 0 && expect_data {
                    let mut data = [0u8; 4];
                    stream.read_exact(&mut data)?;
                    let mut full = status.to_vec();
                    full.extend_from_slice(&data);
                    Ok(decode_response(&full, true)?.0)
                } else {
                    Ok(decode_response(&status, false)?.0)
                }
            }
        }
    }

    /// RUN_CPU leaves the CPU running; locally we must actually simulate.
    fn run_to_halt(&mut self) -> Result<()> {
        if let Link::Local { machine, .. } = self {
            match machine.run_until_halt(1_000_000_000) {
                Ok(stop) => println!("halted: {stop:?}"),
                Err(e) => println!("stopped: {e}"),
            }
        }
        Ok(())
    }
}

fn print_resp(resp: &DebugResponse) {
    match (resp.ack, resp.data) {
        (true, Some(d)) => println!("A=1 data={d:#010x} ({d})"),
        (true, None) => println!("A=1"),
        (false, _) => println!("E=1"),
    }
}

fn parse_num(tok: &str) -> Option<u32> {
    if let Some(h) = tok.strip_prefix("0x") {
        u32::from_str_radix(h, 16).ok()
    } else {
        tok.parse().ok()
    }
}

fn run_loop(mut link: Link, resolved: Option<&ResolvedCampaign>) -> Result<ExitCode> {
    let symbols = resolved
        .map(|r| r.image.symbols.clone())
        .unwrap_or_default();
    let addr_of =
        |tok: &str| -> Option<u32> { parse_num(tok).or_else(|| symbols.get(tok).copied()) };
    println!("voltlab debug session; `help` lists commands");
    let stdin = io::stdin();
    print!("> ");
    io::stdout().flush()?;
    for line in stdin.lock().lines() {
        let line = line?;
        let words: Vec<&str> = line.split_whitespace().collect();
        let mut transacted = true;
        match words.as_slice() {
            [] => transacted = false,
            ["help"] => {
                println!("{HELP}");
                transacted = false;
            }
            ["quit" | "exit" | "q"] => break,
            ["halt"] => print_resp(&link.transact(&DebugRequest::read(TokenType::HaltCpu, 0))?),
            ["run"] => {
                print_resp(&link.transact(&DebugRequest::read(TokenType::RunCpu, 0))?);
                link.run_to_halt()?;
            }
            ["reset"] => print_resp(&link.transact(&DebugRequest::read(TokenType::RstCpu, 0))?),
            ["step"] => {
                print_resp(&link.transact(&DebugRequest::read(TokenType::AdvanceOneStep, 0))?)
            }
            ["state"] => {
                let r = link.transact(&DebugRequest::read(TokenType::GetDulocalState, 0))?;
                if let Some(d) = r.data {
                    let name = ["running", "halted", "stepping"]
                        .get(d as usize)
                        .unwrap_or(&"?");
                    println!("A=1 data={d} ({name})");
                } else {
                    print_resp(&r);
                }
            }
            ["pc"] => print_resp(&link.transact(&DebugRequest::read(TokenType::GetCpuPc, 0))?),
            ["reg", n] => {
                let Some(idx) = parse_num(n) else {
                    println!("bad register");
                    continue;
                };
                print_resp(&link.transact(&DebugRequest::read(TokenType::GprInt32Read, idx))?);
            }
            ["reg", n, v] => {
                let (Some(idx), Some(val)) = (parse_num(n), parse_num(v)) else {
                    println!("bad operands");
                    continue;
                };
                print_resp(&link.transact(&DebugRequest::write(
                    TokenType::GprInt32Write,
                    idx,
                    val,
                ))?);
            }
            ["mem", a] => {
                let Some(addr) = addr_of(a) else {
                    println!("bad address");
                    continue;
                };
                print_resp(&link.transact(&DebugRequest::read(TokenType::MmapRead, addr))?);
            }
            ["mem", a, v] => {
                let (Some(addr), Some(val)) = (addr_of(a), parse_num(v)) else {
                    println!("bad operands");
                    continue;
                };
                print_resp(&link.transact(&DebugRequest::write(
                    TokenType::MmapWrite,
                    addr,
                    val,
                ))?);
            }
            ["bp" | "tp", "set" | "rm", a] => {
                let Some(addr) = addr_of(a) else {
                    println!("bad address");
                    continue;
                };
                let token = match (words[0], words[1]) {
                    ("bp", "set") => TokenType::SetBrkpntCpu,
                    ("bp", _) => TokenType::RmBrkpntCpu,
                    (_, "set") => TokenType::SetTrgpntCpu,
                    _ => TokenType::RmTrgpntCpu,
                };
                print_resp(&link.transact(&DebugRequest::write(token, addr, 0))?);
            }
            ["bp" | "tp", "count"] => {
                let token = if words[0] == "bp" {
                    TokenType::GetNumBrkpntCpu
                } else {
                    TokenType::GetNumTrgpntCpu
                };
                print_resp(&link.transact(&DebugRequest::read(token, 0))?);
            }
            ["bp" | "tp", "list"] => {
                let (get, num) = if words[0] == "bp" {
                    (TokenType::GetBrkpntCpu, TokenType::GetNumBrkpntCpu)
                } else {
                    (TokenType::GetTrgpntCpu, TokenType::GetNumTrgpntCpu)
                };
                let cap = link
                    .transact(&DebugRequest::read(num, 0))?
                    .data
                    .unwrap_or(0);
                for i in 0..cap {
                    let r = link.transact(&DebugRequest::read(get, i))?;
                    if let Some(addr) = r.data {
                        println!("  [{i}] {addr:#010x}");
                    }
                }
            }
            ["pmc"] => {
                let lo = link.transact(&DebugRequest::read(TokenType::GetLowCyclecnt, 0))?;
                let hi = link.transact(&DebugRequest::read(TokenType::GetHighCyclecnt, 0))?;
                let ilo = link.transact(&DebugRequest::read(TokenType::GetLowInstrcnt, 0))?;
                let ihi = link.transact(&DebugRequest::read(TokenType::GetHighInstrcnt, 0))?;
                let cycles =
                    u64::from(hi.data.unwrap_or(0)) << 32 | u64::from(lo.data.unwrap_or(0));
                let instrs =
                    u64::from(ihi.data.unwrap_or(0)) << 32 | u64::from(ilo.data.unwrap_or(0));
                println!("cycles={cycles} instret={instrs}");
            }
            ["dfs", "get"] => {
                let r = link.transact(&DebugRequest::read(TokenType::GetFreqDfs, 0))?;
                match r.data {
                    Some(khz) => println!("A=1 {} MHz", khz as f64 / 1000.0),
                    None => print_resp(&r),
                }
            }
            ["dfs", "set", mhz] => {
                let Ok(f) = mhz.parse::<f64>() else {
                    println!("bad frequency");
                    continue;
                };
                let khz = f * 1000.0;
                if khz.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&khz) {
                    println!("frequency not representable on the wire (kHz granularity)");
                    continue;
                }
                print_resp(&link.transact(&DebugRequest::write(
                    TokenType::SetFreqDfs,
                    0,
                    khz as u32,
                ))?);
            }
            ["dfs", "rnd", on] => {
                let Some(v) = parse_num(on) else {
                    println!("bad flag");
                    continue;
                };
                print_resp(&link.transact(&DebugRequest::write(TokenType::RndFreqDfs, 0, v))?);
            }
            ["echo", v] => {
                let Some(val) = parse_num(v) else {
                    println!("bad value");
                    continue;
                };
                print_resp(&link.transact(&DebugRequest::write(
                    TokenType::EchoFrontend,
                    0,
                    val,
                ))?);
            }
            ["sym", name] => {
                match symbols.get(*name) {
                    Some(addr) => println!("{name} = {addr:#010x}"),
                    None => println!("unknown symbol"),
                }
                transacted = false;
            }
            _ => {
                println!("unknown command; `help` lists commands");
                transacted = false;
            }
        }
        let _ = transacted;
        print!("> ");
        io::stdout().flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn run_local(resolved: &ResolvedCampaign) -> Result<ExitCode> {
    let machine = prepare_machine(&resolved.config.soc, &resolved.image);
    let mut machine = match machine {
        Ok(m) => m,
        Err(e) => bail!("preparing machine: {e}"),
    };
    run_loop(
        Link::Local {
            endpoint: Endpoint::new(),
            machine: &mut machine,
        },
        Some(resolved),
    )
}

pub fn run_remote(addr: &str) -> Result<ExitCode> {
    let stream = TcpStream::connect(addr).with_context(|| format!("connecting to {addr}"))?;
    println!("connected to {addr}");
    run_loop(Link::Remote(stream), None)
}
