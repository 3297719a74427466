//! The global debug unit: routes decoded requests to the bus, the CPU local
//! debug unit, or the DFS local debug unit, and enforces the one-outstanding
//! request rule for byte-stream transports.

use std::collections::VecDeque;

use super::{decode_request, encode_response, DebugRequest, DebugResponse, TokenType};
use crate::isa::{read_pmc, Pmc, RunState};
use crate::machine::Machine;

const DULOCAL_RUNNING: u32 = 0;
const DULOCAL_HALTED: u32 = 1;
const DULOCAL_STEPPING: u32 = 2;

/// Executes one request against the machine and produces the response.
/// Error responses (`E=1`) leave the machine state unchanged.
pub fn dispatch(req: &DebugRequest, m: &mut Machine) -> DebugResponse {
    use TokenType::*;

    // The W bit must agree with the token's R/W class.
    if req.write != req.token.is_write() {
        return DebugResponse::err();
    }

    match req.token {
        Invalid => DebugResponse::err(),
        MmapRead => match m.soc.bus_read(req.address, 4) {
            Ok(r) => DebugResponse::ok_data(r.value),
            Err(_) => DebugResponse::err(),
        },
        MmapWrite => match m.soc.bus_write(req.address, 4, req.data.unwrap_or(0)) {
            Ok(_) => DebugResponse::ok(),
            Err(_) => DebugResponse::err(),
        },
        GprInt32Read => {
            if req.address < 32 {
                DebugResponse::ok_data(m.cpu.read_reg(req.address as u8))
            } else {
                DebugResponse::err()
            }
        }
        GprInt32Write => {
            if req.address < 32 {
                m.cpu.write_reg(req.address as u8, req.data.unwrap_or(0));
                DebugResponse::ok()
            } else {
                DebugResponse::err()
            }
        }
        // No FPU is instantiated in this SoC configuration.
        GprFpu32Read | GprFpu32Write => DebugResponse::err(),
        // Control tokens are read-class; acknowledged reads always carry a
        // data word (zero here) so stream clients can frame responses by
        // token class alone.
        HaltCpu => {
            m.halt();
            DebugResponse::ok_data(0)
        }
        RunCpu => {
            if m.cpu.run_state == RunState::Halted {
                m.resume();
            }
            DebugResponse::ok_data(0)
        }
        RstCpu => {
            m.reset_cpu();
            DebugResponse::ok_data(0)
        }
        GetDulocalState => DebugResponse::ok_data(match m.cpu.run_state {
            RunState::Running => DULOCAL_RUNNING,
            RunState::Halted => DULOCAL_HALTED,
            RunState::Stepping => DULOCAL_STEPPING,
        }),
        GetCpuPc => DebugResponse::ok_data(m.cpu.pc),
        AdvanceOneStep => {
            if m.cpu.run_state != RunState::Halted {
                return DebugResponse::err();
            }
            match m.advance_one_step() {
                Ok(()) => DebugResponse::ok_data(0),
                Err(_) => DebugResponse::err(),
            }
        }
        // Loopback; the one write token whose response carries data.
        EchoFrontend => DebugResponse::ok_data(req.data.unwrap_or(0)),
        GetLowCyclecnt => DebugResponse::ok_data(read_pmc(&m.cpu, Pmc::CycleLow)),
        GetHighCyclecnt => DebugResponse::ok_data(read_pmc(&m.cpu, Pmc::CycleHigh)),
        GetLowInstrcnt => DebugResponse::ok_data(read_pmc(&m.cpu, Pmc::InstrLow)),
        GetHighInstrcnt => DebugResponse::ok_data(read_pmc(&m.cpu, Pmc::InstrHigh)),
        SetBrkpntCpu => match m.breakpoints.set(req.address) {
            Some(_) => DebugResponse::ok(),
            None => DebugResponse::err(),
        },
        GetBrkpntCpu => match m.breakpoints.get(req.address as usize) {
            Some(addr) => DebugResponse::ok_data(addr),
            None => DebugResponse::err(),
        },
        RmBrkpntCpu => {
            if m.breakpoints.remove(req.address) {
                DebugResponse::ok()
            } else {
                DebugResponse::err()
            }
        }
        GetNumBrkpntCpu => DebugResponse::ok_data(m.breakpoints.capacity() as u32),
        SetTrgpntCpu => match m.triggerpoints.set(req.address) {
            Some(_) => DebugResponse::ok(),
            None => DebugResponse::err(),
        },
        GetTrgpntCpu => match m.triggerpoints.get(req.address as usize) {
            Some(addr) => DebugResponse::ok_data(addr),
            None => DebugResponse::err(),
        },
        RmTrgpntCpu => {
            if m.triggerpoints.remove(req.address) {
                DebugResponse::ok()
            } else {
                DebugResponse::err()
            }
        }
        GetNumTrgpntCpu => DebugResponse::ok_data(m.triggerpoints.capacity() as u32),
        // DFS local debug unit. The wire carries kHz; table entries are
        // 0.125 MHz multiples, i.e. whole multiples of 125 kHz.
        SetFreqDfs => {
            let khz = req.data.unwrap_or(0);
            let mhz = f64::from(khz) / 1000.0;
            match m.soc.dfs.set_frequency(mhz) {
                Ok(()) => DebugResponse::ok(),
                Err(_) => DebugResponse::err(),
            }
        }
        GetFreqDfs => DebugResponse::ok_data(m.soc.dfs.current_khz()),
        RndFreqDfs => {
            m.soc.dfs.set_random_mode(req.data.unwrap_or(0) != 0);
            DebugResponse::ok()
        }
    }
}

/// Byte-stream endpoint for the debug link.
///
/// Buffers incoming bytes, cuts them into frames, and enforces strict
/// alternation: a request arriving while a response is still waiting to be
/// read is answered with `E=1` and is not dispatched.
#[derive(Default)]
pub struct Endpoint {
    rx: Vec<u8>,
    responses: VecDeque<Vec<u8>>,
}

impl Endpoint {
    pub fn new() -> Self {
        Endpoint::default()
    }

    /// Feeds raw bytes from the transport; dispatches complete frames.
    pub fn feed(&mut self, bytes: &[u8], m: &mut Machine) {
        self.rx.extend_from_slice(bytes);
        loop {
            if self.rx.len() < 2 {
                break;
            }
            let cmd = u16::from_le_bytes([self.rx[0], self.rx[1]]);
            let need = if cmd & 0x8000 != 0 { 10 } else { 6 };
            if self.rx.len() < need {
                break;
            }
            let frame: Vec<u8> = self.rx.drain(..need).collect();
            let resp = match decode_request(&frame) {
                Ok((req, _)) => {
                    if self.responses.is_empty() {
                        dispatch(&req, m)
                    } else {
                        // previous response not consumed yet
                        DebugResponse::err()
                    }
                }
                Err(_) => DebugResponse::err(),
            };
            self.responses.push_back(encode_response(&resp));
        }
    }

    /// Takes the oldest pending response frame.
    pub fn take_response(&mut self) -> Option<Vec<u8>> {
        self.responses.pop_front()
    }

    pub fn has_response(&self) -> bool {
        !self.responses.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use crate::debug::encode_request;
    use crate::soc::SocConfig;

    fn machine() -> Machine {
        let img =
            assemble("start: addi x5, x0, 0x123\nloop: addi x6, x6, 1\njal x0, loop\n").unwrap();
        let mut m = Machine::new(&SocConfig::default(), 0);
        m.load_image(0, &img.bytes);
        m
    }

    #[test]
    fn halt_and_state_reporting() {
        let mut m = machine();
        m.resume();
        let r = dispatch(&DebugRequest::read(TokenType::HaltCpu, 0), &mut m);
        assert!(r.ack);
        assert_eq!(m.cpu.run_state, RunState::Halted);
        let st = dispatch(&DebugRequest::read(TokenType::GetDulocalState, 0), &mut m);
        assert_eq!(st.data, Some(DULOCAL_HALTED));
    }

    #[test]
    fn gpr_read_after_guest_write() {
        let mut m = machine();
        m.resume();
        m.step().unwrap(); // addi x5, x0, 0x123
        let r = dispatch(&DebugRequest::read(TokenType::GprInt32Read, 5), &mut m);
        assert_eq!(r.data, Some(0x123));
        let bad = dispatch(&DebugRequest::read(TokenType::GprInt32Read, 32), &mut m);
        assert!(!bad.ack);
    }

    #[test]
    fn breakpoint_table_full_is_an_error() {
        let mut m = machine();
        let cap = m.breakpoints.capacity() as u32;
        for i in 0..cap {
            let r = dispatch(
                &DebugRequest::write(TokenType::SetBrkpntCpu, 0x1000 + 4 * i, 0),
                &mut m,
            );
            assert!(r.ack);
        }
        let r = dispatch(
            &DebugRequest::write(TokenType::SetBrkpntCpu, 0x9999000, 0),
            &mut m,
        );
        assert!(!r.ack);
        let n = dispatch(&DebugRequest::read(TokenType::GetNumBrkpntCpu, 0), &mut m);
        assert_eq!(n.data, Some(cap));
    }

    #[test]
    fn write_bit_must_match_token_class() {
        let mut m = machine();
        // HALT_CPU is a read token; sending it as a write is rejected with
        // no state change.
        m.resume();
        let mut req = DebugRequest::write(TokenType::HaltCpu, 0, 0);
        req.write = true;
        let r = dispatch(&req, &mut m);
        assert!(!r.ack);
        assert_eq!(m.cpu.run_state, RunState::Running);
    }

    #[test]
    fn echo_returns_payload() {
        let mut m = machine();
        let r = dispatch(
            &DebugRequest::write(TokenType::EchoFrontend, 0, 0xA5A5_5A5A),
            &mut m,
        );
        assert_eq!(r.data, Some(0xA5A5_5A5A));
    }

    #[test]
    fn fpu_tokens_rejected() {
        let mut m = machine();
        assert!(!dispatch(&DebugRequest::read(TokenType::GprFpu32Read, 0), &mut m).ack);
        assert!(!dispatch(&DebugRequest::write(TokenType::GprFpu32Write, 0, 0), &mut m).ack);
    }

    #[test]
    fn advance_one_step_requires_halt_and_retires_one() {
        let mut m = machine();
        m.resume();
        assert!(!dispatch(&DebugRequest::read(TokenType::AdvanceOneStep, 0), &mut m).ack);
        m.halt();
        let before = m.cpu.minstret;
        assert!(dispatch(&DebugRequest::read(TokenType::AdvanceOneStep, 0), &mut m).ack);
        assert_eq!(m.cpu.minstret, before + 1);
    }

    #[test]
    fn mmap_tokens_reach_the_bus() {
        let mut m = machine();
        let w = dispatch(
            &DebugRequest::write(TokenType::MmapWrite, 0x8000, 0xFEED_BEEF),
            &mut m,
        );
        assert!(w.ack);
        let r = dispatch(&DebugRequest::read(TokenType::MmapRead, 0x8000), &mut m);
        assert_eq!(r.data, Some(0xFEED_BEEF));
        let bad = dispatch(
            &DebugRequest::read(TokenType::MmapRead, 0x9000_0000),
            &mut m,
        );
        assert!(!bad.ack);
    }

    #[test]
    fn dfs_tokens() {
        let img = assemble("nop\n").unwrap();
        let mut cfg = SocConfig::default();
        cfg.dfs.freq_table_mhz = vec![50.0, 100.0];
        cfg.dfs.default_freq_mhz = 100.0;
        cfg.dfs.reconfig_latency_cycles = 10;
        let mut m = Machine::new(&cfg, 0);
        m.load_image(0, &img.bytes);
        let g = dispatch(&DebugRequest::read(TokenType::GetFreqDfs, 0), &mut m);
        assert_eq!(g.data, Some(100_000));
        // switch to 50 MHz
        let s = dispatch(
            &DebugRequest::write(TokenType::SetFreqDfs, 0, 50_000),
            &mut m,
        );
        assert!(s.ack);
        // busy while in flight
        let b = dispatch(
            &DebugRequest::write(TokenType::SetFreqDfs, 0, 100_000),
            &mut m,
        );
        assert!(!b.ack);
        // not in table
        for _ in 0..100 {
            m.soc.tick_cycle();
        }
        let n = dispatch(
            &DebugRequest::write(TokenType::SetFreqDfs, 0, 75_000),
            &mut m,
        );
        assert!(!n.ack);
        let g = dispatch(&DebugRequest::read(TokenType::GetFreqDfs, 0), &mut m);
        assert_eq!(g.data, Some(50_000));
        // random mode on
        let r = dispatch(&DebugRequest::write(TokenType::RndFreqDfs, 0, 1), &mut m);
        assert!(r.ack);
        assert!(m.soc.dfs.random_mode());
    }

    #[test]
    fn invalid_token_is_error() {
        let mut m = machine();
        assert!(!dispatch(&DebugRequest::read(TokenType::Invalid, 0), &mut m).ack);
    }

    #[test]
    fn endpoint_enforces_alternation() {
        let mut m = machine();
        let mut ep = Endpoint::new();
        let req = encode_request(&DebugRequest::read(TokenType::GetCpuPc, 0));
        // two requests back-to-back without reading the first response
        ep.feed(&req, &mut m);
        ep.feed(&req, &mut m);
        let first = ep.take_response().unwrap();
        assert_eq!(first[0] & 0b11, 0b01, "first request acked");
        let second = ep.take_response().unwrap();
        assert_eq!(second[0] & 0b11, 0b10, "second request rejected");
        // after consuming both, a new request is served again
        ep.feed(&req, &mut m);
        let third = ep.take_response().unwrap();
        assert_eq!(third[0] & 0b11, 0b01);
    }

    #[test]
    fn endpoint_reassembles_split_frames() {
        let mut m = machine();
        let mut ep = Endpoint::new();
        let req = encode_request(&DebugRequest::write(TokenType::MmapWrite, 0x2000, 7));
        ep.feed(&req[..3], &mut m);
        assert!(!ep.has_response());
        ep.feed(&req[3..], &mut m);
        let resp = ep.take_response().unwrap();
        assert_eq!(resp[0] & 0b11, 0b01);
        assert_eq!(m.soc.ram_word(0x2000), 7);
    }
}
