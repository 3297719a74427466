//! The virtual prototype: CPU, SoC, debug unit and leakage recorder in one
//! deterministic simulation loop.

use crate::debug::{check_point_tables, PointTable, TriggerEdge, TriggerState};
use crate::isa::{
    exec_one, take_timer_interrupt, CostTable, CpuState, InstrActivity, RunState, SimError,
    StepOutcome,
};
use crate::leakage::Recorder;
use crate::soc::{Soc, SocConfig};

/// What a single machine step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    /// An instruction retired (or an illegal-instruction trap vectored).
    Executed,
    /// The timer interrupt vectored to mtvec; no instruction retired.
    Interrupt,
    /// A breakpoint matched the next PC; the CPU halted without executing.
    Breakpoint,
    /// The CPU was already halted; nothing happened.
    AlreadyHalted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Breakpoint { pc: u32 },
}

pub struct Machine {
    pub cpu: CpuState,
    pub soc: Soc,
    pub breakpoints: PointTable,
    pub triggerpoints: PointTable,
    pub trigger: TriggerState,
    pub recorder: Recorder,
    pub costs: CostTable,
    entry_pc: u32,
    /// Wall clock since machine creation, ns.
    pub time_ns: f64,
    /// Suppresses breakpoint re-match at this PC right after a resume.
    resume_guard: Option<u32>,
}

impl Machine {
    pub fn new(cfg: &SocConfig, entry_pc: u32) -> Self {
        Machine {
            cpu: CpuState::new(entry_pc),
            soc: Soc::new(cfg),
            breakpoints: PointTable::default(),
            triggerpoints: PointTable::default(),
            trigger: TriggerState::default(),
            recorder: Recorder::default(),
            costs: cfg.cpu,
            entry_pc,
            time_ns: 0.0,
            resume_guard: None,
        }
    }

    pub fn entry_pc(&self) -> u32 {
        self.entry_pc
    }

    pub fn load_image(&mut self, base: u32, bytes: &[u8]) {
        self.soc.load_bytes(base, bytes);
    }

    /// Debug RST_CPU: zeroes the CPU and reloads the entry point. Point
    /// tables, RAM and peripheral state survive; the trigger level resets.
    pub fn reset_cpu(&mut self) {
        self.cpu.reset(self.entry_pc);
        self.trigger.reset();
        self.resume_guard = None;
    }

    /// Marks the CPU running and arranges for the instruction under a
    /// matching breakpoint to execute before matching resumes.
    pub fn resume(&mut self) {
        self.cpu.run_state = RunState::Running;
        self.resume_guard = Some(self.cpu.pc);
    }

    pub fn halt(&mut self) {
        self.cpu.run_state = RunState::Halted;
    }

    /// One simulation step: point-table check, interrupt sampling, then one
    /// instruction.
    pub fn step(&mut self) -> Result<StepEvent, SimError> {
        if self.cpu.run_state == RunState::Halted {
            return Ok(StepEvent::AlreadyHalted);
        }
        let pc = self.cpu.pc;
        if self.resume_guard == Some(pc) {
            self.resume_guard = None;
        } else {
            let check = check_point_tables(
                pc,
                &self.breakpoints,
                &self.triggerpoints,
                &mut self.trigger,
            );
            if let Some(edge) = check.trigger_edge {
                self.recorder
                    .mark_trigger(edge == TriggerEdge::Rising, self.cpu.mcycle);
            }
            if check.halt {
                self.cpu.run_state = RunState::Halted;
                return Ok(StepEvent::Breakpoint);
            }
        }

        if self.cpu.run_state == RunState::Running && take_timer_interrupt(&mut self.cpu) {
            self.cpu.mcycle += 1;
            let activity = InstrActivity {
                pc_hd: (self.cpu.mepc ^ self.cpu.pc).count_ones() as u8,
                ..Default::default()
            };
            self.commit_cycles(&activity, 1);
            return Ok(StepEvent::Interrupt);
        }

        let out: StepOutcome = exec_one(&mut self.cpu, &mut self.soc, &self.costs)?;
        self.commit_cycles(&out.activity, out.cycles);
        Ok(StepEvent::Executed)
    }

    /// Advances peripherals and the recorder by the step's cycles.
    fn commit_cycles(&mut self, activity: &InstrActivity, cycles: u32) {
        let base_cycle = self.cpu.mcycle - u64::from(cycles);
        for i in 0..cycles {
            let freq = self.soc.cpu_freq_mhz();
            if self.recorder.armed {
                // one frame per cycle; activity split handled by the recorder
                let (first, last) = (i == 0, i == cycles - 1);
                let slice = InstrActivity {
                    pc_hd: if first { activity.pc_hd } else { 0 },
                    regfile_hd: if last { activity.regfile_hd } else { 0 },
                    alu_hw: if last { activity.alu_hw } else { 0 },
                    dbus_hw: if last { activity.dbus_hw } else { 0 },
                };
                self.recorder.record(
                    &slice,
                    1,
                    base_cycle + u64::from(i),
                    freq,
                    self.trigger.high,
                );
            }
            self.time_ns += self.soc.tick_cycle();
        }
        self.cpu.timer_ip = self.soc.timer.pending;
    }

    /// Runs until a breakpoint halts the CPU or the cycle budget runs out.
    pub fn run_until_halt(&mut self, max_cycles: u64) -> Result<StopReason, SimError> {
        let budget_end = self.cpu.mcycle + max_cycles;
        while self.cpu.mcycle < budget_end {
            match self.step()? {
                StepEvent::Breakpoint | StepEvent::AlreadyHalted => {
                    return Ok(StopReason::Breakpoint { pc: self.cpu.pc });
                }
                _ => {}
            }
        }
        Err(SimError::Timeout { budget: max_cycles })
    }

    /// Debug single step: retires exactly one instruction while halted,
    /// bypassing breakpoints and interrupt sampling.
    pub fn advance_one_step(&mut self) -> Result<(), SimError> {
        self.cpu.run_state = RunState::Stepping;
        let out = exec_one(&mut self.cpu, &mut self.soc, &self.costs)?;
        self.commit_cycles(&out.activity, out.cycles);
        self.cpu.run_state = RunState::Halted;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;

    fn machine_from(src: &str) -> Machine {
        let img = assemble(src).unwrap();
        let mut m = Machine::new(&SocConfig::default(), 0);
        m.load_image(img.base, &img.bytes);
        m
    }

    #[test]
    fn breakpoint_halts_before_execution() {
        let mut m = machine_from("addi x1, x0, 1\nstop: addi x1, x0, 2\njal x0, stop\n");
        m.breakpoints.set(4).unwrap();
        m.resume();
        let stop = m.run_until_halt(1000).unwrap();
        assert_eq!(stop, StopReason::Breakpoint { pc: 4 });
        assert_eq!(
            m.cpu.regs[1], 1,
            "instruction at the breakpoint must not run"
        );
    }

    #[test]
    fn resume_executes_instruction_under_breakpoint() {
        let mut m = machine_from("addi x1, x0, 1\nbp: addi x1, x0, 2\nspin: jal x0, spin\n");
        m.breakpoints.set(4).unwrap();
        m.resume();
        m.run_until_halt(1000).unwrap();
        m.resume();
        // steps past the breakpoint and keeps going
        for _ in 0..10 {
            m.step().unwrap();
        }
        assert_eq!(m.cpu.regs[1], 2);
    }

    #[test]
    fn advance_one_step_retires_exactly_one() {
        let mut m = machine_from("addi x1, x0, 1\naddi x2, x0, 2\n");
        assert_eq!(m.cpu.minstret, 0);
        m.advance_one_step().unwrap();
        assert_eq!(m.cpu.minstret, 1);
        assert_eq!(m.cpu.run_state, RunState::Halted);
        assert_eq!(m.cpu.regs[1], 1);
        assert_eq!(m.cpu.regs[2], 0);
    }

    #[test]
    fn trigger_edges_recorded_with_cycles() {
        let src = "\
nop
trigger_start: nop
nop
nop
trigger_end: nop
done: jal x0, done
";
        let mut m = machine_from(src);
        m.triggerpoints.set(4).unwrap();
        m.triggerpoints.set(16).unwrap();
        m.recorder.arm();
        m.resume();
        for _ in 0..8 {
            m.step().unwrap();
        }
        let log = m.recorder.take();
        let rise = log.trigger_rise.unwrap();
        let fall = log.trigger_fall.unwrap();
        // nop costs 1 cycle: rise after 1 insn, fall after 4 more
        assert_eq!(rise.cycle, 1);
        assert_eq!(fall.cycle, 4);
        assert_eq!(log.window_cycles(), Some(3));
    }

    #[test]
    fn mcycle_counts_cost_table_cycles() {
        let mut m = machine_from("lw x1, 0x100(x0)\naddi x2, x0, 1\n");
        m.resume();
        m.step().unwrap();
        m.step().unwrap();
        let c = CostTable::default();
        assert_eq!(m.cpu.mcycle, u64::from(c.load + c.alu));
        assert_eq!(m.cpu.minstret, 2);
    }

    #[test]
    fn guest_timer_interrupt_round_trip() {
        // Guest: set mtvec, enable MIE, program mtimecmp, spin; ISR bumps
        // x5, reprograms mtimecmp far away and returns.
        let src = "\
j_start: li t0, isr
csrrw x0, mtvec, t0
li t1, 0x80020000
li t2, 20
sw t2, 8(t1)       # mtimecmp lo = 20
sw x0, 12(t1)      # mtimecmp hi = 0
csrrsi x0, mstatus, 8
spin: jal x0, spin
isr: addi s2, s2, 1
li t3, 0x80020000
li t4, 10000
sw t4, 8(t3)
mret
";
        let mut m = machine_from(src);
        m.resume();
        for _ in 0..200 {
            m.step().unwrap();
        }
        assert_eq!(m.cpu.regs[18], 1, "ISR ran exactly once");
        assert!(!m.cpu.in_trap);
    }

    #[test]
    fn replay_determinism_same_streams() {
        let src = "\
li a0, 10
loop: addi a0, a0, -1
mul a1, a0, a0
bne a0, x0, loop
end: jal x0, end
";
        let run = || {
            let mut m = machine_from(src);
            m.breakpoints.set(16).unwrap();
            m.resume();
            m.recorder.arm();
            m.run_until_halt(10_000).unwrap();
            (m.cpu.mcycle, m.recorder.take().frames.len())
        };
        assert_eq!(run(), run());
    }
}
