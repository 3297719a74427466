//! RV32IM instruction decoder.

use super::{Instruction, IsaError, Mnemonic};

#[inline]
fn rd(w: u32) -> u8 {
    ((w >> 7) & 0x1f) as u8
}
#[inline]
fn rs1(w: u32) -> u8 {
    ((w >> 15) & 0x1f) as u8
}
#[inline]
fn rs2(w: u32) -> u8 {
    ((w >> 20) & 0x1f) as u8
}
#[inline]
fn funct3(w: u32) -> u32 {
    (w >> 12) & 0x7
}
#[inline]
fn funct7(w: u32) -> u32 {
    w >> 25
}

#[inline]
fn imm_i(w: u32) -> i32 {
    (w as i32) >> 20
}

#[inline]
fn imm_s(w: u32) -> i32 {
    (((w as i32) >> 25) << 5) | (((w >> 7) & 0x1f) as i32)
}

#[inline]
fn imm_b(w: u32) -> i32 {
    let imm = (((w >> 31) & 1) << 12)
        | (((w >> 7) & 1) << 11)
        | (((w >> 25) & 0x3f) << 5)
        | (((w >> 8) & 0xf) << 1);
    ((imm as i32) << 19) >> 19
}

#[inline]
fn imm_u(w: u32) -> i32 {
    (w & 0xffff_f000) as i32
}

#[inline]
fn imm_j(w: u32) -> i32 {
    let imm = (((w >> 31) & 1) << 20)
        | (((w >> 12) & 0xff) << 12)
        | (((w >> 20) & 1) << 11)
        | (((w >> 21) & 0x3ff) << 1);
    ((imm as i32) << 11) >> 11
}

fn instr(m: Mnemonic, rd: u8, rs1: u8, rs2: u8, imm: i32, csr: u16, raw: u32) -> Instruction {
    Instruction {
        mnemonic: m,
        rd,
        rs1,
        rs2,
        imm,
        csr,
        raw,
    }
}

/// Decodes a 32-bit word into the unique RV32IM instruction it encodes.
pub fn decode(word: u32) -> Result<Instruction, IsaError> {
    use Mnemonic::*;
    let illegal = || IsaError::IllegalInstruction { word };
    let opcode = word & 0x7f;
    let f3 = funct3(word);
    let f7 = funct7(word);

    let ins = match opcode {
        0x37 => instr(Lui, rd(word), 0, 0, imm_u(word), 0, word),
        0x17 => instr(Auipc, rd(word), 0, 0, imm_u(word), 0, word),
        0x6f => instr(Jal, rd(word), 0, 0, imm_j(word), 0, word),
        0x67 => {
            if f3 != 0 {
                return Err(illegal());
            }
            instr(Jalr, rd(word), rs1(word), 0, imm_i(word), 0, word)
        }
        0x63 => {
            let m = match f3 {
                0b000 => Beq,
                0b001 => Bne,
                0b100 => Blt,
                0b101 => Bge,
                0b110 => Bltu,
                0b111 => Bgeu,
                _ => return Err(illegal()),
            };
            instr(m, 0, rs1(word), rs2(word), imm_b(word), 0, word)
        }
        0x03 => {
            let m = match f3 {
                0b000 => Lb,
                0b001 => Lh,
                0b010 => Lw,
                0b100 => Lbu,
                0b101 => Lhu,
                _ => return Err(illegal()),
            };
            instr(m, rd(word), rs1(word), 0, imm_i(word), 0, word)
        }
        0x23 => {
            let m = match f3 {
                0b000 => Sb,
                0b001 => Sh,
                0b010 => Sw,
                _ => return Err(illegal()),
            };
            instr(m, 0, rs1(word), rs2(word), imm_s(word), 0, word)
        }
        0x13 => {
            let m = match f3 {
                0b000 => Addi,
                0b010 => Slti,
                0b011 => Sltiu,
                0b100 => Xori,
                0b110 => Ori,
                0b111 => Andi,
                0b001 => {
                    if f7 != 0 {
                        return Err(illegal());
                    }
                    return Ok(instr(
                        Slli,
                        rd(word),
                        rs1(word),
                        0,
                        (rs2(word)) as i32,
                        0,
                        word,
                    ));
                }
                0b101 => {
                    let m = match f7 {
                        0x00 => Srli,
                        0x20 => Srai,
                        _ => return Err(illegal()),
                    };
                    return Ok(instr(
                        m,
                        rd(word),
                        rs1(word),
                        0,
                        (rs2(word)) as i32,
                        0,
                        word,
                    ));
                }
                _ => return Err(illegal()),
            };
            instr(m, rd(word), rs1(word), 0, imm_i(word), 0, word)
        }
        0x33 => {
            let m = match (f7, f3) {
                (0x00, 0b000) => Add,
                (0x20, 0b000) => Sub,
                (0x00, 0b001) => Sll,
                (0x00, 0b010) => Slt,
                (0x00, 0b011) => Sltu,
                (0x00, 0b100) => Xor,
                (0x00, 0b101) => Srl,
                (0x20, 0b101) => Sra,
                (0x00, 0b110) => Or,
                (0x00, 0b111) => And,
                (0x01, 0b000) => Mul,
                (0x01, 0b001) => Mulh,
                (0x01, 0b010) => Mulhsu,
                (0x01, 0b011) => Mulhu,
                (0x01, 0b100) => Div,
                (0x01, 0b101) => Divu,
                (0x01, 0b110) => Rem,
                (0x01, 0b111) => Remu,
                _ => return Err(illegal()),
            };
            instr(m, rd(word), rs1(word), rs2(word), 0, 0, word)
        }
        0x0f => {
            // FENCE; treated as a no-op on this single-hart SoC.
            if f3 != 0 {
                return Err(illegal());
            }
            instr(Fence, rd(word), rs1(word), 0, imm_i(word), 0, word)
        }
        0x73 => match f3 {
            0b000 => match word {
                0x0000_0073 => instr(Ecall, 0, 0, 0, 0, 0, word),
                0x0010_0073 => instr(Ebreak, 0, 0, 0, 0, 0, word),
                0x3020_0073 => instr(Mret, 0, 0, 0, 0, 0, word),
                _ => return Err(illegal()),
            },
            0b001 | 0b010 | 0b011 | 0b101 | 0b110 | 0b111 => {
                let m = match f3 {
                    0b001 => Csrrw,
                    0b010 => Csrrs,
                    0b011 => Csrrc,
                    0b101 => Csrrwi,
                    0b110 => Csrrsi,
                    _ => Csrrci,
                };
                // For the immediate forms rs1 carries the 5-bit zimm.
                let zimm = rs1(word) as i32;
                instr(m, rd(word), rs1(word), 0, zimm, (word >> 20) as u16, word)
            }
            _ => return Err(illegal()),
        },
        _ => return Err(illegal()),
    };
    Ok(ins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Mnemonic::*;

    #[test]
    fn canonical_nop() {
        let i = decode(0x0000_0013).unwrap();
        assert_eq!(i.mnemonic, Addi);
        assert_eq!((i.rd, i.rs1, i.imm), (0, 0, 0));
    }

    #[test]
    fn addi_x1_x0_5() {
        let i = decode(0x0050_0093).unwrap();
        assert_eq!(i.mnemonic, Addi);
        assert_eq!((i.rd, i.rs1, i.imm), (1, 0, 5));
    }

    #[test]
    fn jal_self() {
        let i = decode(0x0000_006f).unwrap();
        assert_eq!(i.mnemonic, Jal);
        assert_eq!((i.rd, i.imm), (0, 0));
    }

    #[test]
    fn all_ones_is_illegal() {
        assert_eq!(
            decode(0xffff_ffff),
            Err(IsaError::IllegalInstruction { word: 0xffff_ffff })
        );
    }

    #[test]
    fn negative_immediates_sign_extend() {
        // addi x5, x6, -1
        let w = (0xfffu32 << 20) | (6 << 15) | (5 << 7) | 0x13;
        let i = decode(w).unwrap();
        assert_eq!(i.imm, -1);
        // sw x2, -8(x3): imm split across fields
        let imm = -8i32 as u32;
        let w = ((imm >> 5) & 0x7f) << 25
            | (2 << 20)
            | (3 << 15)
            | (0b010 << 12)
            | ((imm & 0x1f) << 7)
            | 0x23;
        let i = decode(w).unwrap();
        assert_eq!(i.mnemonic, Sw);
        assert_eq!(i.imm, -8);
    }

    #[test]
    fn branch_offset_roundtrip() {
        // beq x1, x2, -4
        let off = -4i32 as u32;
        let w = ((off >> 12) & 1) << 31
            | ((off >> 5) & 0x3f) << 25
            | (2 << 20)
            | (1 << 15)
            | ((off >> 1) & 0xf) << 8
            | ((off >> 11) & 1) << 7
            | 0x63;
        let i = decode(w).unwrap();
        assert_eq!(i.mnemonic, Beq);
        assert_eq!(i.imm, -4);
    }

    #[test]
    fn system_encodings() {
        assert_eq!(decode(0x3020_0073).unwrap().mnemonic, Mret);
        assert_eq!(decode(0x0000_0073).unwrap().mnemonic, Ecall);
        assert_eq!(decode(0x0010_0073).unwrap().mnemonic, Ebreak);
        // csrrw x0, mepc, x1
        let w = (0x341u32 << 20) | (1 << 15) | (0b001 << 12) | 0x73;
        let i = decode(w).unwrap();
        assert_eq!(i.mnemonic, Csrrw);
        assert_eq!(i.csr, 0x341);
    }

    #[test]
    fn reserved_shift_funct7_rejected() {
        // slli with funct7 = 0x20 is not a valid RV32I encoding
        let w = (0x20u32 << 25) | (3 << 20) | (1 << 15) | (0b001 << 12) | (2 << 7) | 0x13;
        assert!(decode(w).is_err());
    }
}
