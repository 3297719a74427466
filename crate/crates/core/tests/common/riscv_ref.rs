//! Independent RV32IM reference interpreter used as the oracle for
//! architectural-state equivalence.
//!
//! Written directly from the ISA semantics in a deliberately different
//! style from the crate's executor: the word is decoded inline with local
//! helpers, arithmetic goes through i64/u64 widening everywhere, and memory
//! is a plain byte array. No code is shared with voltlab-core's ISA module.

pub struct RefCpu {
    pub pc: u32,
    pub regs: [u32; 32],
    pub mem: Vec<u8>,
}

#[derive(Debug, PartialEq, Eq)]
pub enum RefOutcome {
    Ok,
    Illegal,
    BadAccess,
}

fn field(word: u32, lo: u32, len: u32) -> u32 {
    (word >> lo) & ((1 << len) - 1)
}

fn sext(value: u32, bits: u32) -> i64 {
    let shift = 64 - bits;
    ((i64::from(value)) << shift) >> shift
}

impl RefCpu {
    pub fn new(mem_size: usize) -> Self {
        RefCpu {
            pc: 0,
            regs: [0; 32],
            mem: vec![0; mem_size],
        }
    }

    fn rd(&mut self, word: u32, value: u32) {
        let r = field(word, 7, 5) as usize;
        if r != 0 {
            self.regs[r] = value;
        }
    }

    fn rs1(&self, word: u32) -> u32 {
        self.regs[field(word, 15, 5) as usize]
    }

    fn rs2(&self, word: u32) -> u32 {
        self.regs[field(word, 20, 5) as usize]
    }

    pub fn load(&self, addr: u32, bytes: u32) -> Option<u64> {
        if addr as u64 % u64::from(bytes) != 0 {
            return None;
        }
        let a = addr as usize;
        if a + bytes as usize > self.mem.len() {
            return None;
        }
        let mut v: u64 = 0;
        for i in (0..bytes as usize).rev() {
            v = (v << 8) | u64::from(self.mem[a + i]);
        }
        Some(v)
    }

    pub fn store(&mut self, addr: u32, bytes: u32, value: u32) -> bool {
        if addr as u64 % u64::from(bytes) != 0 {
            return false;
        }
        let a = addr as usize;
        if a + bytes as usize > self.mem.len() {
            return false;
        }
        for i in 0..bytes as usize {
            self.mem[a + i] = (value >> (8 * i)) as u8;
        }
        true
    }

    /// Executes one instruction word at the current pc.
    pub fn exec(&mut self, word: u32) -> RefOutcome {
        let opcode = field(word, 0, 7);
        let f3 = field(word, 12, 3);
        let f7 = field(word, 25, 7);
        let next = self.pc.wrapping_add(4);
        match opcode {
            0b0110111 => {
                // LUI
                self.rd(word, word & 0xFFFF_F000);
                self.pc = next;
            }
            0b0010111 => {
                // AUIPC
                self.rd(word, self.pc.wrapping_add(word & 0xFFFF_F000));
                self.pc = next;
            }
            0b1101111 => {
                // JAL: imm[20|10:1|11|19:12]
                let imm = (field(word, 31, 1) << 20)
                    | (field(word, 12, 8) << 12)
                    | (field(word, 20, 1) << 11)
                    | (field(word, 21, 10) << 1);
                let off = sext(imm, 21);
                self.rd(word, next);
                self.pc = (i64::from(self.pc) + off) as u32;
            }
            0b1100111 => {
                // JALR
                if f3 != 0 {
                    return RefOutcome::Illegal;
                }
                let off = sext(field(word, 20, 12), 12);
                let target = ((i64::from(self.rs1(word)) + off) as u32) & !1u32;
                self.rd(word, next);
                self.pc = target;
            }
            0b1100011 => {
                // branches: imm[12|10:5|4:1|11]
                let imm = (field(word, 31, 1) << 12)
                    | (field(word, 7, 1) << 11)
                    | (field(word, 25, 6) << 5)
                    | (field(word, 8, 4) << 1);
                let off = sext(imm, 13);
                let (a, b) = (self.rs1(word), self.rs2(word));
                let taken = match f3 {
                    0b000 => a == b,
                    0b001 => a != b,
                    0b100 => (a as i32) < (b as i32),
                    0b101 => (a as i32) >= (b as i32),
                    0b110 => a < b,
                    0b111 => a >= b,
                    _ => return RefOutcome::Illegal,
                };
                self.pc = if taken {
                    (i64::from(self.pc) + off) as u32
                } else {
                    next
                };
            }
            0b0000011 => {
                // loads
                let off = sext(field(word, 20, 12), 12);
                let addr = (i64::from(self.rs1(word)) + off) as u32;
                let value = match f3 {
                    0b000 => match self.load(addr, 1) {
                        Some(v) => sext(v as u32, 8) as u32,
                        None => return RefOutcome::BadAccess,
                    },
                    0b001 => match self.load(addr, 2) {
                        Some(v) => sext(v as u32, 16) as u32,
                        None => return RefOutcome::BadAccess,
                    },
                    0b010 => match self.load(addr, 4) {
                        Some(v) => v as u32,
                        None => return RefOutcome::BadAccess,
                    },
                    0b100 => match self.load(addr, 1) {
                        Some(v) => v as u32,
                        None => return RefOutcome::BadAccess,
                    },
                    0b101 => match self.load(addr, 2) {
                        Some(v) => v as u32,
                        None => return RefOutcome::BadAccess,
                    },
                    _ => return RefOutcome::Illegal,
                };
                self.rd(word, value);
                self.pc = next;
            }
            0b0100011 => {
                // stores: imm[11:5|4:0]
                let imm = (field(word, 25, 7) << 5) | field(word, 7, 5);
                let off = sext(imm, 12);
                let addr = (i64::from(self.rs1(word)) + off) as u32;
                let ok = match f3 {
                    0b000 => self.store(addr, 1, self.rs2(word)),
                    0b001 => self.store(addr, 2, self.rs2(word)),
                    0b010 => self.store(addr, 4, self.rs2(word)),
                    _ => return RefOutcome::Illegal,
                };
                if !ok {
                    return RefOutcome::BadAccess;
                }
                self.pc = next;
            }
            0b0010011 => {
                // register-immediate ALU
                let a = self.rs1(word);
                let imm = sext(field(word, 20, 12), 12);
                let shamt = field(word, 20, 5);
                let value = match f3 {
                    0b000 => (i64::from(a) + imm) as u32,
                    0b010 => u32::from(i64::from(a as i32) < imm),
                    0b011 => u32::from(u64::from(a) < (imm as u32 as u64)),
                    0b100 => a ^ (imm as u32),
                    0b110 => a | (imm as u32),
                    0b111 => a & (imm as u32),
                    0b001 => {
                        if f7 != 0 {
                            return RefOutcome::Illegal;
                        }
                        a << shamt
                    }
                    0b101 => match f7 {
                        0b0000000 => a >> shamt,
                        0b0100000 => ((a as i32) >> shamt) as u32,
                        _ => return RefOutcome::Illegal,
                    },
                    _ => unreachable!(),
                };
                self.rd(word, value);
                self.pc = next;
            }
            0b0110011 => {
                let a = self.rs1(word);
                let b = self.rs2(word);
                let value = match (f7, f3) {
                    (0b0000000, 0b000) => (i64::from(a) + i64::from(b)) as u32,
                    (0b0100000, 0b000) => (i64::from(a) - i64::from(b)) as u32,
                    (0b0000000, 0b001) => a << (b & 31),
                    (0b0000000, 0b010) => u32::from((a as i32) < (b as i32)),
                    (0b0000000, 0b011) => u32::from(a < b),
                    (0b0000000, 0b100) => a ^ b,
                    (0b0000000, 0b101) => a >> (b & 31),
                    (0b0100000, 0b101) => ((a as i32) >> (b & 31)) as u32,
                    (0b0000000, 0b110) => a | b,
                    (0b0000000, 0b111) => a & b,
                    (0b0000001, 0b000) => (i64::from(a as i32) * i64::from(b as i32)) as u32,
                    (0b0000001, 0b001) => {
                        ((i64::from(a as i32) * i64::from(b as i32)) >> 32) as u32
                    }
                    (0b0000001, 0b010) => {
                        // MULHSU: signed x unsigned
                        let wide = i128::from(a as i32) * i128::from(u64::from(b));
                        (wide >> 32) as u32
                    }
                    (0b0000001, 0b011) => ((u64::from(a) * u64::from(b)) >> 32) as u32,
                    (0b0000001, 0b100) => {
                        // DIV
                        let (sa, sb) = (a as i32, b as i32);
                        if sb == 0 {
                            0xFFFF_FFFF
                        } else if sa == i32::MIN && sb == -1 {
                            sa as u32
                        } else {
                            (sa / sb) as u32
                        }
                    }
                    (0b0000001, 0b101) => {
                        if b == 0 {
                            0xFFFF_FFFF
                        } else {
                            a / b
                        }
                    }
                    (0b0000001, 0b110) => {
                        let (sa, sb) = (a as i32, b as i32);
                        if sb == 0 {
                            a
                        } else if sa == i32::MIN && sb == -1 {
                            0
                        } else {
                            (sa % sb) as u32
                        }
                    }
                    (0b0000001, 0b111) => {
                        if b == 0 {
                            a
                        } else {
                            a % b
                        }
                    }
                    _ => return RefOutcome::Illegal,
                };
                self.rd(word, value);
                self.pc = next;
            }
            0b0001111 => {
                // FENCE: no-op
                if f3 != 0 {
                    return RefOutcome::Illegal;
                }
                self.pc = next;
            }
            _ => return RefOutcome::Illegal,
        }
        RefOutcome::Ok
    }
}
