//! Two-pass RV32IM assembler for the bundled workload sources.
//!
//! Pass 1 assigns addresses to labels, pass 2 encodes. The accepted syntax
//! is deliberately small:
//!
//! - labels: `name:` (own line or prefixing a statement)
//! - instructions: RV32IM mnemonics plus the CSR subset and `mret`
//! - pseudo-instructions: `nop`, and `li rd, imm` (expands to `addi` when
//!   the value fits 12 bits, otherwise `lui`+`addi`; a label operand always
//!   expands to the two-instruction form so pass-1 sizes are stable)
//! - directives: `.org addr`, `.word v[, ...]`, `.byte v[, ...]`, `.align n`
//! - comments: `#` to end of line
//! - registers: `x0`..`x31` or ABI names; numbers: decimal or `0x` hex
//!
//! Branch and `jal` targets are labels or numeric pc-relative byte offsets;
//! both are range-checked against the encodable field width. Symbol
//! addresses replace the ELF-derived time-window boundaries of a full
//! toolchain flow: the measurement layer programs breakpoints and
//! triggerpoints straight from the symbol table.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::soc::DEFAULT_RAM_SIZE;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AsmErrorKind {
    UnknownMnemonic(String),
    DuplicateLabel(String),
    UndefinedLabel(String),
    OffsetOutOfRange { target: i64, bits: u32 },
    BadOperand(String),
    BadDirective(String),
    ImageTooLarge { end: u64 },
}

impl fmt::Display for AsmErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AsmErrorKind::UnknownMnemonic(m) => write!(f, "unknown mnemonic `{m}`"),
            AsmErrorKind::DuplicateLabel(l) => write!(f, "label `{l}` defined twice"),
            AsmErrorKind::UndefinedLabel(l) => write!(f, "label `{l}` is not defined"),
            AsmErrorKind::OffsetOutOfRange { target, bits } => {
                write!(f, "offset {target} does not fit in {bits} bits")
            }
            AsmErrorKind::BadOperand(msg) => write!(f, "bad operand: {msg}"),
            AsmErrorKind::BadDirective(msg) => write!(f, "bad directive: {msg}"),
            AsmErrorKind::ImageTooLarge { end } => {
                write!(f, "image ends at {end:#x}, beyond RAM")
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

impl AsmError {
    fn new(line: usize, kind: AsmErrorKind) -> Self {
        AsmError { line, kind }
    }
}

/// Assembled program: a flat byte image plus its symbol table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryImage {
    pub base: u32,
    pub bytes: Vec<u8>,
    pub symbols: BTreeMap<String, u32>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown symbol `{0}`")]
pub struct UnknownSymbol(pub String);

impl MemoryImage {
    /// Address of a label; flow code uses this to program break/triggerpoints.
    pub fn symbol_lookup(&self, name: &str) -> Result<u32, UnknownSymbol> {
        self.symbols
            .get(name)
            .copied()
            .ok_or_else(|| UnknownSymbol(name.to_string()))
    }

    /// Hex text dump, one 32-bit little-endian word per line (VMEM style).
    pub fn to_vmem(&self) -> String {
        let mut out = String::new();
        let mut i = 0;
        while i < self.bytes.len() {
            let mut w = [0u8; 4];
            for (k, b) in w.iter_mut().enumerate() {
                *b = self.bytes.get(i + k).copied().unwrap_or(0);
            }
            out.push_str(&format!("{:08x}\n", u32::from_le_bytes(w)));
            i += 4;
        }
        out
    }
}

fn reg_num(tok: &str) -> Option<u8> {
    if let Some(n) = tok.strip_prefix('x') {
        if let Ok(v) = n.parse::<u8>() {
            if v < 32 {
                return Some(v);
            }
        }
    }
    let abi = [
        ("zero", 0),
        ("ra", 1),
        ("sp", 2),
        ("gp", 3),
        ("tp", 4),
        ("t0", 5),
        ("t1", 6),
        ("t2", 7),
        ("s0", 8),
        ("fp", 8),
        ("s1", 9),
        ("a0", 10),
        ("a1", 11),
        ("a2", 12),
        ("a3", 13),
        ("a4", 14),
        ("a5", 15),
        ("a6", 16),
        ("a7", 17),
        ("s2", 18),
        ("s3", 19),
        ("s4", 20),
        ("s5", 21),
        ("s6", 22),
        ("s7", 23),
        ("s8", 24),
        ("s9", 25),
        ("s10", 26),
        ("s11", 27),
        ("t3", 28),
        ("t4", 29),
        ("t5", 30),
        ("t6", 31),
    ];
    abi.iter().find(|(n, _)| *n == tok).map(|&(_, v)| v)
}

fn csr_addr(tok: &str) -> Option<u16> {
    use crate::isa::csr;
    Some(match tok {
        "mstatus" => csr::MSTATUS,
        "mtvec" => csr::MTVEC,
        "mepc" => csr::MEPC,
        "mcause" => csr::MCAUSE,
        "mcycle" => csr::MCYCLE,
        "mcycleh" => csr::MCYCLEH,
        "minstret" => csr::MINSTRET,
        "minstreth" => csr::MINSTRETH,
        _ => return None,
    })
}

fn parse_int(tok: &str) -> Option<i64> {
    let (neg, t) = match tok.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, tok),
    };
    let v = if let Some(h) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        i64::from_str_radix(h, 16).ok()?
    } else {
        t.parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

/// One parsed statement, pre-resolution.
#[derive(Debug, Clone)]
enum Stmt {
    Instr {
        mnemonic: String,
        operands: Vec<String>,
    },
    Org(u32),
    Word(Vec<String>),
    Byte(Vec<String>),
    Align(u32),
}

struct Line {
    number: usize,
    labels: Vec<String>,
    stmt: Option<Stmt>,
}

fn tokenize_operands(rest: &str) -> Vec<String> {
    rest.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_line(number: usize, raw: &str) -> Result<Line, AsmError> {
    let err = |kind| AsmError::new(number, kind);
    let code = raw.split('#').next().unwrap_or("");
    let mut rest = code.trim();
    let mut labels = Vec::new();
    while let Some(colon) = rest.find(':') {
        let head = rest[..colon].trim();
        if head.is_empty()
            || !head
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        {
            break;
        }
        labels.push(head.to_string());
        rest = rest[colon + 1..].trim();
    }
    if rest.is_empty() {
        return Ok(Line {
            number,
            labels,
            stmt: None,
        });
    }
    if let Some(dir) = rest.strip_prefix('.') {
        let (name, args) = dir.split_once(char::is_whitespace).unwrap_or((dir, ""));
        let stmt = match name {
            "org" => {
                let v = parse_int(args.trim())
                    .filter(|&v| (0..=i64::from(u32::MAX)).contains(&v))
                    .ok_or_else(|| {
                        err(AsmErrorKind::BadDirective(".org needs an address".into()))
                    })?;
                Stmt::Org(v as u32)
            }
            "word" => Stmt::Word(tokenize_operands(args)),
            "byte" => Stmt::Byte(tokenize_operands(args)),
            "align" => {
                let v = parse_int(args.trim())
                    .filter(|&v| (0..=16).contains(&v))
                    .ok_or_else(|| err(AsmErrorKind::BadDirective(".align needs 0..=16".into())))?;
                Stmt::Align(v as u32)
            }
            other => {
                return Err(err(AsmErrorKind::BadDirective(format!(
                    "unknown directive .{other}"
                ))))
            }
        };
        return Ok(Line {
            number,
            labels,
            stmt: Some(stmt),
        });
    }
    let (mnemonic, args) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
    Ok(Line {
        number,
        labels,
        stmt: Some(Stmt::Instr {
            mnemonic: mnemonic.to_ascii_lowercase(),
            operands: tokenize_operands(args),
        }),
    })
}

/// Size in bytes a statement will occupy at address `lc` (pass 1).
fn stmt_size(stmt: &Stmt, lc: u32, line: usize) -> Result<u32, AsmError> {
    Ok(match stmt {
        Stmt::Instr { mnemonic, operands } => match mnemonic.as_str() {
            "li" => {
                let imm = operands.get(1).map(String::as_str).unwrap_or("");
                match parse_int(imm) {
                    Some(v) if (-2048..=2047).contains(&v) => 4,
                    // big literal or label: fixed two-instruction expansion
                    _ => 8,
                }
            }
            _ => 4,
        },
        Stmt::Org(addr) => {
            if *addr < lc {
                return Err(AsmError::new(
                    line,
                    AsmErrorKind::BadDirective(format!(
                        ".org {addr:#x} moves backwards from {lc:#x}"
                    )),
                ));
            }
            addr - lc
        }
        Stmt::Word(vals) => 4 * vals.len() as u32,
        Stmt::Byte(vals) => vals.len() as u32,
        Stmt::Align(n) => {
            let a = 1u32 << n;
            (a - (lc % a)) % a
        }
    })
}

struct Encoder<'a> {
    symbols: &'a BTreeMap<String, u32>,
    line: usize,
}

impl Encoder<'_> {
    fn err(&self, kind: AsmErrorKind) -> AsmError {
        AsmError::new(self.line, kind)
    }

    fn reg(&self, tok: &str) -> Result<u32, AsmError> {
        reg_num(tok).map(u32::from).ok_or_else(|| {
            self.err(AsmErrorKind::BadOperand(format!(
                "`{tok}` is not a register"
            )))
        })
    }

    fn imm(&self, tok: &str, bits: u32, signed: bool) -> Result<i64, AsmError> {
        let v = self.value(tok)?;
        let ok = if signed {
            let lim = 1i64 << (bits - 1);
            (-lim..lim).contains(&v)
        } else {
            (0..(1i64 << bits)).contains(&v)
        };
        if !ok {
            return Err(self.err(AsmErrorKind::OffsetOutOfRange { target: v, bits }));
        }
        Ok(v)
    }

    /// Literal or symbol value.
    fn value(&self, tok: &str) -> Result<i64, AsmError> {
        if let Some(v) = parse_int(tok) {
            return Ok(v);
        }
        self.symbols
            .get(tok)
            .map(|&a| i64::from(a))
            .ok_or_else(|| self.err(AsmErrorKind::UndefinedLabel(tok.to_string())))
    }

    /// PC-relative displacement: label -> target-pc, literal -> as-is.
    fn pcrel(&self, tok: &str, pc: u32, bits: u32) -> Result<i64, AsmError> {
        let off = if let Some(lit) = parse_int(tok) {
            lit
        } else {
            let target = self
                .symbols
                .get(tok)
                .copied()
                .ok_or_else(|| self.err(AsmErrorKind::UndefinedLabel(tok.to_string())))?;
            i64::from(target) - i64::from(pc)
        };
        let lim = 1i64 << (bits - 1);
        if off % 2 != 0 || !(-lim..lim).contains(&off) {
            return Err(self.err(AsmErrorKind::OffsetOutOfRange { target: off, bits }));
        }
        Ok(off)
    }

    fn mem_operand(&self, tok: &str) -> Result<(i64, u32), AsmError> {
        let open = tok.find('(').ok_or_else(|| {
            self.err(AsmErrorKind::BadOperand(format!(
                "expected off(reg), got `{tok}`"
            )))
        })?;
        if !tok.ends_with(')') {
            return Err(self.err(AsmErrorKind::BadOperand(format!(
                "expected off(reg), got `{tok}`"
            ))));
        }
        let off_s = tok[..open].trim();
        let reg_s = tok[open + 1..tok.len() - 1].trim();
        let off = if off_s.is_empty() {
            0
        } else {
            self.imm(off_s, 12, true)?
        };
        Ok((off, self.reg(reg_s)?))
    }

    fn want(&self, ops: &[String], n: usize) -> Result<(), AsmError> {
        if ops.len() != n {
            return Err(self.err(AsmErrorKind::BadOperand(format!(
                "expected {n} operands, got {}",
                ops.len()
            ))));
        }
        Ok(())
    }
}

fn enc_r(f7: u32, rs2: u32, rs1: u32, f3: u32, rd: u32, op: u32) -> u32 {
    (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | op
}

fn enc_i(imm: i64, rs1: u32, f3: u32, rd: u32, op: u32) -> u32 {
    (((imm as u32) & 0xfff) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | op
}

fn enc_s(imm: i64, rs2: u32, rs1: u32, f3: u32, op: u32) -> u32 {
    let imm = imm as u32;
    (((imm >> 5) & 0x7f) << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | ((imm & 0x1f) << 7) | op
}

fn enc_b(imm: i64, rs2: u32, rs1: u32, f3: u32, op: u32) -> u32 {
    let imm = imm as u32;
    (((imm >> 12) & 1) << 31)
        | (((imm >> 5) & 0x3f) << 25)
        | (rs2 << 20)
        | (rs1 << 15)
        | (f3 << 12)
        | (((imm >> 1) & 0xf) << 8)
        | (((imm >> 11) & 1) << 7)
        | op
}

fn enc_u(imm20: i64, rd: u32, op: u32) -> u32 {
    (((imm20 as u32) & 0xfffff) << 12) | (rd << 7) | op
}

fn enc_j(imm: i64, rd: u32, op: u32) -> u32 {
    let imm = imm as u32;
    (((imm >> 20) & 1) << 31)
        | (((imm >> 1) & 0x3ff) << 21)
        | (((imm >> 11) & 1) << 20)
        | (((imm >> 12) & 0xff) << 12)
        | (rd << 7)
        | op
}

/// Encodes one instruction statement into 1..=2 words.
fn encode_instr(
    enc: &Encoder,
    mnemonic: &str,
    ops: &[String],
    pc: u32,
) -> Result<Vec<u32>, AsmError> {
    let w = match mnemonic {
        "nop" => {
            enc.want(ops, 0)?;
            vec![0x0000_0013]
        }
        "li" => {
            enc.want(ops, 2)?;
            let rd = enc.reg(&ops[0])?;
            let v = enc.value(&ops[1])?;
            if !(i64::from(i32::MIN)..=i64::from(u32::MAX)).contains(&v) {
                return Err(enc.err(AsmErrorKind::OffsetOutOfRange {
                    target: v,
                    bits: 32,
                }));
            }
            let v32 = v as i32;
            let short_literal =
                matches!(parse_int(&ops[1]), Some(x) if (-2048..=2047).contains(&x));
            if short_literal {
                vec![enc_i(i64::from(v32), 0, 0b000, rd, 0x13)]
            } else {
                let hi = (v32.wrapping_add(0x800) as u32) >> 12;
                let lo = v32.wrapping_sub((hi << 12) as i32);
                vec![
                    enc_u(i64::from(hi), rd, 0x37),
                    enc_i(i64::from(lo), rd, 0b000, rd, 0x13),
                ]
            }
        }
        "lui" | "auipc" => {
            enc.want(ops, 2)?;
            let rd = enc.reg(&ops[0])?;
            let imm = enc.imm(&ops[1], 20, false)?;
            vec![enc_u(imm, rd, if mnemonic == "lui" { 0x37 } else { 0x17 })]
        }
        "jal" => {
            enc.want(ops, 2)?;
            let rd = enc.reg(&ops[0])?;
            let off = enc.pcrel(&ops[1], pc, 21)?;
            vec![enc_j(off, rd, 0x6f)]
        }
        "jalr" => {
            enc.want(ops, 2)?;
            let rd = enc.reg(&ops[0])?;
            let (off, rs1) = enc.mem_operand(&ops[1])?;
            vec![enc_i(off, rs1, 0b000, rd, 0x67)]
        }
        "beq" | "bne" | "blt" | "bge" | "bltu" | "bgeu" => {
            enc.want(ops, 3)?;
            let rs1 = enc.reg(&ops[0])?;
            let rs2 = enc.reg(&ops[1])?;
            let off = enc.pcrel(&ops[2], pc, 13)?;
            let f3 = match mnemonic {
                "beq" => 0b000,
                "bne" => 0b001,
                "blt" => 0b100,
                "bge" => 0b101,
                "bltu" => 0b110,
                _ => 0b111,
            };
            vec![enc_b(off, rs2, rs1, f3, 0x63)]
        }
        "lb" | "lh" | "lw" | "lbu" | "lhu" => {
            enc.want(ops, 2)?;
            let rd = enc.reg(&ops[0])?;
            let (off, rs1) = enc.mem_operand(&ops[1])?;
            let f3 = match mnemonic {
                "lb" => 0b000,
                "lh" => 0b001,
                "lw" => 0b010,
                "lbu" => 0b100,
                _ => 0b101,
            };
            vec![enc_i(off, rs1, f3, rd, 0x03)]
        }
        "sb" | "sh" | "sw" => {
            enc.want(ops, 2)?;
            let rs2 = enc.reg(&ops[0])?;
            let (off, rs1) = enc.mem_operand(&ops[1])?;
            let f3 = match mnemonic {
                "sb" => 0b000,
                "sh" => 0b001,
                _ => 0b010,
            };
            vec![enc_s(off, rs2, rs1, f3, 0x23)]
        }
        "addi" | "slti" | "sltiu" | "xori" | "ori" | "andi" => {
            enc.want(ops, 3)?;
            let rd = enc.reg(&ops[0])?;
            let rs1 = enc.reg(&ops[1])?;
            let imm = enc.imm(&ops[2], 12, true)?;
            let f3 = match mnemonic {
                "addi" => 0b000,
                "slti" => 0b010,
                "sltiu" => 0b011,
                "xori" => 0b100,
                "ori" => 0b110,
                _ => 0b111,
            };
            vec![enc_i(imm, rs1, f3, rd, 0x13)]
        }
        "slli" | "srli" | "srai" => {
            enc.want(ops, 3)?;
            let rd = enc.reg(&ops[0])?;
            let rs1 = enc.reg(&ops[1])?;
            let sh = enc.imm(&ops[2], 5, false)?;
            let (f7, f3) = match mnemonic {
                "slli" => (0x00, 0b001),
                "srli" => (0x00, 0b101),
                _ => (0x20, 0b101),
            };
            vec![enc_r(f7, sh as u32, rs1, f3, rd, 0x13)]
        }
        "add" | "sub" | "sll" | "slt" | "sltu" | "xor" | "srl" | "sra" | "or" | "and" | "mul"
        | "mulh" | "mulhsu" | "mulhu" | "div" | "divu" | "rem" | "remu" => {
            enc.want(ops, 3)?;
            let rd = enc.reg(&ops[0])?;
            let rs1 = enc.reg(&ops[1])?;
            let rs2 = enc.reg(&ops[2])?;
            let (f7, f3) = match mnemonic {
                "add" => (0x00, 0b000),
                "sub" => (0x20, 0b000),
                "sll" => (0x00, 0b001),
                "slt" => (0x00, 0b010),
                "sltu" => (0x00, 0b011),
                "xor" => (0x00, 0b100),
                "srl" => (0x00, 0b101),
                "sra" => (0x20, 0b101),
                "or" => (0x00, 0b110),
                "and" => (0x00, 0b111),
                "mul" => (0x01, 0b000),
                "mulh" => (0x01, 0b001),
                "mulhsu" => (0x01, 0b010),
                "mulhu" => (0x01, 0b011),
                "div" => (0x01, 0b100),
                "divu" => (0x01, 0b101),
                "rem" => (0x01, 0b110),
                _ => (0x01, 0b111),
            };
            vec![enc_r(f7, rs2, rs1, f3, rd, 0x33)]
        }
        "csrrw" | "csrrs" | "csrrc" => {
            enc.want(ops, 3)?;
            let rd = enc.reg(&ops[0])?;
            let csr = csr_addr(&ops[1])
                .map(i64::from)
                .or_else(|| parse_int(&ops[1]))
                .ok_or_else(|| {
                    enc.err(AsmErrorKind::BadOperand(format!("bad CSR `{}`", ops[1])))
                })?;
            let rs1 = enc.reg(&ops[2])?;
            let f3 = match mnemonic {
                "csrrw" => 0b001,
                "csrrs" => 0b010,
                _ => 0b011,
            };
            vec![enc_i(csr, rs1, f3, rd, 0x73)]
        }
        "csrrwi" | "csrrsi" | "csrrci" => {
            enc.want(ops, 3)?;
            let rd = enc.reg(&ops[0])?;
            let csr = csr_addr(&ops[1])
                .map(i64::from)
                .or_else(|| parse_int(&ops[1]))
                .ok_or_else(|| {
                    enc.err(AsmErrorKind::BadOperand(format!("bad CSR `{}`", ops[1])))
                })?;
            let zimm = enc.imm(&ops[2], 5, false)?;
            let f3 = match mnemonic {
                "csrrwi" => 0b101,
                "csrrsi" => 0b110,
                _ => 0b111,
            };
            vec![enc_i(csr, zimm as u32, f3, rd, 0x73)]
        }
        "fence" => {
            enc.want(ops, 0)?;
            vec![0x0ff0_000f]
        }
        "ecall" => {
            enc.want(ops, 0)?;
            vec![0x0000_0073]
        }
        "ebreak" => {
            enc.want(ops, 0)?;
            vec![0x0010_0073]
        }
        "mret" => {
            enc.want(ops, 0)?;
            vec![0x3020_0073]
        }
        other => return Err(enc.err(AsmErrorKind::UnknownMnemonic(other.to_string()))),
    };
    Ok(w)
}

/// Assembles a source text into a memory image. Pure: the same source
/// always produces a byte-identical image.
pub fn assemble(source: &str) -> Result<MemoryImage, AsmError> {
    let mut lines = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        lines.push(parse_line(i + 1, raw)?);
    }

    // Pass 1: label addresses.
    let mut symbols: BTreeMap<String, u32> = BTreeMap::new();
    let mut lc: u32 = 0;
    for line in &lines {
        for label in &line.labels {
            if symbols.insert(label.clone(), lc).is_some() {
                return Err(AsmError::new(
                    line.number,
                    AsmErrorKind::DuplicateLabel(label.clone()),
                ));
            }
        }
        if let Some(stmt) = &line.stmt {
            lc = lc
                .checked_add(stmt_size(stmt, lc, line.number)?)
                .ok_or(AsmError::new(
                    line.number,
                    AsmErrorKind::ImageTooLarge { end: u64::MAX },
                ))?;
        }
    }
    if u64::from(lc) > u64::from(DEFAULT_RAM_SIZE) {
        return Err(AsmError::new(
            0,
            AsmErrorKind::ImageTooLarge { end: u64::from(lc) },
        ));
    }

    // Pass 2: encode.
    let mut bytes = vec![0u8; lc as usize];
    let mut pc: u32 = 0;
    for line in &lines {
        let Some(stmt) = &line.stmt else { continue };
        let enc = Encoder {
            symbols: &symbols,
            line: line.number,
        };
        match stmt {
            Stmt::Instr { mnemonic, operands } => {
                let words = encode_instr(&enc, mnemonic, operands, pc)?;
                let expect = stmt_size(stmt, pc, line.number)?;
                debug_assert_eq!(words.len() as u32 * 4, expect);
                for w in words {
                    bytes[pc as usize..pc as usize + 4].copy_from_slice(&w.to_le_bytes());
                    pc += 4;
                }
            }
            Stmt::Org(addr) => pc = *addr,
            Stmt::Word(vals) => {
                for v in vals {
                    let x = enc.value(v)?;
                    if !(i64::from(i32::MIN)..=i64::from(u32::MAX)).contains(&x) {
                        return Err(enc.err(AsmErrorKind::OffsetOutOfRange {
                            target: x,
                            bits: 32,
                        }));
                    }
                    bytes[pc as usize..pc as usize + 4].copy_from_slice(&(x as u32).to_le_bytes());
                    pc += 4;
                }
            }
            Stmt::Byte(vals) => {
                for v in vals {
                    let x = enc.value(v)?;
                    if !(-128..=255).contains(&x) {
                        return Err(enc.err(AsmErrorKind::OffsetOutOfRange { target: x, bits: 8 }));
                    }
                    bytes[pc as usize] = x as u8;
                    pc += 1;
                }
            }
            Stmt::Align(n) => {
                let a = 1u32 << n;
                pc += (a - (pc % a)) % a;
            }
        }
    }

    Ok(MemoryImage {
        base: 0,
        bytes,
        symbols,
    })
}
