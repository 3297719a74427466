//! TCP byte-stream transport: exposes the debug wire protocol to external
//! clients, one connection at a time, with the machine simulated between
//! socket reads whenever the CPU was left running.

use std::io::{ErrorKind, Read, Write};
use std::net::TcpListener;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};

use voltlab_core::debug::Endpoint;
use voltlab_core::flow::ResolvedCampaign;
use voltlab_core::isa::{RunState, SimError};
use voltlab_core::workloads::prepare_machine;

/// Cycles simulated between socket polls while the CPU is running.
const RUN_CHUNK: u64 = 100_000;

pub fn serve(resolved: &ResolvedCampaign, addr: &str) -> Result<ExitCode> {
    let mut machine = prepare_machine(&resolved.config.soc, &resolved.image)
        .map_err(|e| anyhow::anyhow!("preparing machine: {e}"))?;
    let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    // Announce the actual address so callers may bind port 0.
    println!("listening on {}", listener.local_addr()?);

    for stream in listener.incoming() {
        let mut stream = stream?;
        stream.set_read_timeout(Some(Duration::from_millis(2)))?;
        stream.set_nodelay(true)?;
        let mut endpoint = Endpoint::new();
        let mut buf = [0u8; 256];
        loop {
            match stream.read(&mut buf) {
                Ok(0) => break, // client gone
                Ok(n) => {
                    endpoint.feed(&buf[..n], &mut machine);
                    while let Some(resp) = endpoint.take_response() {
                        stream.write_all(&resp)?;
                    }
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::TimedOut => {}
                Err(e) => return Err(e.into()),
            }
            if machine.cpu.run_state == RunState::Running {
                // Run a slice; a breakpoint halts the machine on its own, a
                // slice timeout just means it keeps running next iteration.
                match machine.run_until_halt(RUN_CHUNK) {
                    Ok(_) | Err(SimError::Timeout { .. }) => {}
                    Err(e) => {
                        eprintln!("guest fault: {e}; CPU halted");
                        machine.halt();
                    }
                }
            }
        }
        println!("client disconnected; waiting for the next one");
    }
    Ok(ExitCode::SUCCESS)
}
