//! Single-instruction execution against the SoC bus.

use super::{
    CostTable, CpuState, InstrActivity, Mnemonic, SimError, StepOutcome, Trap,
    CAUSE_ILLEGAL_INSTRUCTION, CAUSE_MACHINE_TIMER,
};
use crate::isa::decode;
use crate::soc::Soc;

#[inline]
fn hw(v: u32) -> u8 {
    v.count_ones() as u8
}

#[inline]
fn hd(a: u32, b: u32) -> u8 {
    (a ^ b).count_ones() as u8
}

/// Takes the pending machine-timer interrupt if it is enabled and the core
/// is not already inside a trap. Returns whether the interrupt was taken.
pub fn take_timer_interrupt(cpu: &mut CpuState) -> bool {
    if !(cpu.timer_ie && cpu.timer_ip && !cpu.in_trap) {
        return false;
    }
    cpu.mepc = cpu.pc;
    cpu.mcause = CAUSE_MACHINE_TIMER;
    cpu.pc = cpu.mtvec;
    cpu.in_trap = true;
    true
}

fn trap_illegal(cpu: &mut CpuState) -> Result<StepOutcome, SimError> {
    if cpu.mtvec == 0 {
        return Err(SimError::UnhandledTrap {
            pc: cpu.pc,
            cause: CAUSE_ILLEGAL_INSTRUCTION,
        });
    }
    cpu.mepc = cpu.pc;
    cpu.mcause = CAUSE_ILLEGAL_INSTRUCTION;
    let pc_hd = hd(cpu.pc, cpu.last_pc);
    cpu.last_pc = cpu.pc;
    cpu.pc = cpu.mtvec;
    cpu.in_trap = true;
    cpu.mcycle += 1;
    Ok(StepOutcome {
        retired: None,
        cycles: 1,
        activity: InstrActivity {
            pc_hd,
            ..Default::default()
        },
        trap: Some(Trap::IllegalInstruction),
    })
}

/// Fetches, decodes and executes exactly one instruction.
///
/// Advances `pc`, `mcycle` and `minstret`, performs at most one data-bus
/// access through the SoC, and reports the switching activity of the step.
/// Timer interrupts are *not* sampled here; the machine loop does that at
/// instruction boundaries via [`take_timer_interrupt`].
pub fn exec_one(
    cpu: &mut CpuState,
    soc: &mut Soc,
    costs: &CostTable,
) -> Result<StepOutcome, SimError> {
    use Mnemonic::*;

    let pc = cpu.pc;
    let word = soc.fetch(pc).ok_or(SimError::FetchFault { pc })?;
    let ins = match decode(word) {
        Ok(i) => i,
        Err(_) => return trap_illegal(cpu),
    };

    let pc_hd = hd(pc, cpu.last_pc);
    cpu.last_pc = pc;

    let a = cpu.read_reg(ins.rs1);
    let b = cpu.read_reg(ins.rs2);
    let imm = ins.imm;
    let mut next_pc = pc.wrapping_add(4);
    // Value on the ALU result path; effective address for memory ops,
    // computed next-pc for control flow.
    let mut alu: u32 = 0;
    let mut dbus_hw: u8 = 0;
    // (rd, value) to commit after the bus access succeeded.
    let mut wb: Option<(u8, u32)> = None;

    match ins.mnemonic {
        Lui => {
            alu = imm as u32;
            wb = Some((ins.rd, alu));
        }
        Auipc => {
            alu = pc.wrapping_add(imm as u32);
            wb = Some((ins.rd, alu));
        }
        Jal => {
            next_pc = pc.wrapping_add(imm as u32);
            alu = next_pc;
            wb = Some((ins.rd, pc.wrapping_add(4)));
        }
        Jalr => {
            next_pc = a.wrapping_add(imm as u32) & !1;
            alu = next_pc;
            wb = Some((ins.rd, pc.wrapping_add(4)));
        }
        Beq | Bne | Blt | Bge | Bltu | Bgeu => {
            let taken = match ins.mnemonic {
                Beq => a == b,
                Bne => a != b,
                Blt => (a as i32) < (b as i32),
                Bge => (a as i32) >= (b as i32),
                Bltu => a < b,
                _ => a >= b,
            };
            if taken {
                next_pc = pc.wrapping_add(imm as u32);
            }
            alu = next_pc;
        }
        Lb | Lh | Lw | Lbu | Lhu => {
            let addr = a.wrapping_add(imm as u32);
            let width = match ins.mnemonic {
                Lb | Lbu => 1,
                Lh | Lhu => 2,
                _ => 4,
            };
            let access = soc.bus_read(addr, width)?;
            let value = match ins.mnemonic {
                Lb => access.value as u8 as i8 as i32 as u32,
                Lbu => access.value & 0xff,
                Lh => access.value as u16 as i16 as i32 as u32,
                Lhu => access.value & 0xffff,
                _ => access.value,
            };
            alu = addr;
            dbus_hw = hw(access.bus_word);
            wb = Some((ins.rd, value));
        }
        Sb | Sh | Sw => {
            let addr = a.wrapping_add(imm as u32);
            let width = match ins.mnemonic {
                Sb => 1,
                Sh => 2,
                _ => 4,
            };
            let access = soc.bus_write(addr, width, b)?;
            alu = addr;
            dbus_hw = hw(access.bus_word);
        }
        Addi => {
            alu = a.wrapping_add(imm as u32);
            wb = Some((ins.rd, alu));
        }
        Slti => {
            alu = ((a as i32) < imm) as u32;
            wb = Some((ins.rd, alu));
        }
        Sltiu => {
            alu = (a < imm as u32) as u32;
            wb = Some((ins.rd, alu));
        }
        Xori => {
            alu = a ^ imm as u32;
            wb = Some((ins.rd, alu));
        }
        Ori => {
            alu = a | imm as u32;
            wb = Some((ins.rd, alu));
        }
        Andi => {
            alu = a & imm as u32;
            wb = Some((ins.rd, alu));
        }
        Slli => {
            alu = a << (imm as u32 & 0x1f);
            wb = Some((ins.rd, alu));
        }
        Srli => {
            alu = a >> (imm as u32 & 0x1f);
            wb = Some((ins.rd, alu));
        }
        Srai => {
            alu = ((a as i32) >> (imm as u32 & 0x1f)) as u32;
            wb = Some((ins.rd, alu));
        }
        Add => {
            alu = a.wrapping_add(b);
            wb = Some((ins.rd, alu));
        }
        Sub => {
            alu = a.wrapping_sub(b);
            wb = Some((ins.rd, alu));
        }
        Sll => {
            alu = a << (b & 0x1f);
            wb = Some((ins.rd, alu));
        }
        Slt => {
            alu = ((a as i32) < (b as i32)) as u32;
            wb = Some((ins.rd, alu));
        }
        Sltu => {
            alu = (a < b) as u32;
            wb = Some((ins.rd, alu));
        }
        Xor => {
            alu = a ^ b;
            wb = Some((ins.rd, alu));
        }
        Srl => {
            alu = a >> (b & 0x1f);
            wb = Some((ins.rd, alu));
        }
        Sra => {
            alu = ((a as i32) >> (b & 0x1f)) as u32;
            wb = Some((ins.rd, alu));
        }
        Or => {
            alu = a | b;
            wb = Some((ins.rd, alu));
        }
        And => {
            alu = a & b;
            wb = Some((ins.rd, alu));
        }
        Mul => {
            alu = a.wrapping_mul(b);
            wb = Some((ins.rd, alu));
        }
        Mulh => {
            alu = ((a as i32 as i64).wrapping_mul(b as i32 as i64) >> 32) as u32;
            wb = Some((ins.rd, alu));
        }
        Mulhsu => {
            alu = ((a as i32 as i64).wrapping_mul(b as u64 as i64) >> 32) as u32;
            wb = Some((ins.rd, alu));
        }
        Mulhu => {
            alu = ((a as u64).wrapping_mul(b as u64) >> 32) as u32;
            wb = Some((ins.rd, alu));
        }
        Div => {
            alu = if b == 0 {
                u32::MAX
            } else if a == 0x8000_0000 && b == u32::MAX {
                a
            } else {
                ((a as i32) / (b as i32)) as u32
            };
            wb = Some((ins.rd, alu));
        }
        Divu => {
            alu = a.checked_div(b).unwrap_or(u32::MAX);
            wb = Some((ins.rd, alu));
        }
        Rem => {
            alu = if b == 0 {
                a
            } else if a == 0x8000_0000 && b == u32::MAX {
                0
            } else {
                ((a as i32) % (b as i32)) as u32
            };
            wb = Some((ins.rd, alu));
        }
        Remu => {
            alu = if b == 0 { a } else { a % b };
            wb = Some((ins.rd, alu));
        }
        Fence => {}
        // No environment-call surface on this SoC; both raise the
        // illegal-instruction trap.
        Ecall | Ebreak => return trap_illegal(cpu),
        Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci => {
            let Some(old) = cpu.read_csr(ins.csr) else {
                return trap_illegal(cpu);
            };
            let operand = match ins.mnemonic {
                Csrrw | Csrrs | Csrrc => a,
                _ => imm as u32,
            };
            let write = match ins.mnemonic {
                Csrrw | Csrrwi => Some(operand),
                Csrrs | Csrrsi => (ins.rs1 != 0).then_some(old | operand),
                _ => (ins.rs1 != 0).then_some(old & !operand),
            };
            if let Some(v) = write {
                if !cpu.write_csr(ins.csr, v) {
                    return trap_illegal(cpu);
                }
            }
            alu = old;
            wb = Some((ins.rd, old));
        }
        Mret => {
            next_pc = cpu.mepc;
            alu = next_pc;
            cpu.in_trap = false;
        }
    }

    let regfile_hd = match wb {
        Some((rd, value)) if rd != 0 => {
            let old = cpu.regs[rd as usize];
            cpu.regs[rd as usize] = value;
            hd(old, value)
        }
        _ => 0,
    };

    cpu.pc = next_pc;
    cpu.minstret += 1;
    let cycles = costs.cost_of(ins.mnemonic);
    cpu.mcycle += u64::from(cycles);

    Ok(StepOutcome {
        retired: Some(ins),
        cycles,
        activity: InstrActivity {
            pc_hd,
            regfile_hd,
            alu_hw: hw(alu),
            dbus_hw,
        },
        trap: None,
    })
}
