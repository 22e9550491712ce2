//! The extended instruction set: pgas loads/stores, pointer incrementation,
//! initialization instructions and branch-on-locality, plus the small generic
//! base ISA (ALU, immediates, compares, raw memory access) that carries them.
//!
//! Every instruction encodes into one 32-bit word with the opcode in bits
//! 31..26. The pgas size immediates (Esize, Bsize, Increm) are 5-bit fields
//! holding the log2 of a power-of-two value, so any 32-bit value with a
//! single bit set can be represented.

use crate::error::{Error, Result};
use std::fmt;

/// Width/type selector of a pgas load or store, after the six load and six
/// store forms of the extended ISA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    /// Byte unsigned (8 bits)
    B,
    /// Word unsigned (16 bits)
    W,
    /// Long unsigned (32 bits)
    L,
    /// Quad unsigned (64 bits)
    Q,
    /// 32-bit float bit pattern, float register file
    S,
    /// 64-bit float bit pattern, float register file
    T,
}

impl AccessKind {
    pub const ALL: [AccessKind; 6] = [
        AccessKind::B,
        AccessKind::W,
        AccessKind::L,
        AccessKind::Q,
        AccessKind::S,
        AccessKind::T,
    ];

    pub fn width(&self) -> u64 {
        match self {
            AccessKind::B => 1,
            AccessKind::W => 2,
            AccessKind::L | AccessKind::S => 4,
            AccessKind::Q | AccessKind::T => 8,
        }
    }

    /// Float kinds target the float register file.
    pub fn is_float(&self) -> bool {
        matches!(self, AccessKind::S | AccessKind::T)
    }

    fn func(&self) -> u32 {
        match self {
            AccessKind::B => 0,
            AccessKind::W => 1,
            AccessKind::L => 2,
            AccessKind::Q => 3,
            AccessKind::S => 4,
            AccessKind::T => 5,
        }
    }

    fn from_func(f: u32) -> Result<AccessKind> {
        AccessKind::ALL
            .get(f as usize)
            .copied()
            .ok_or_else(|| Error::IllegalInstruction(format!("pgas access func {f}")))
    }

    fn suffix(&self) -> &'static str {
        match self {
            AccessKind::B => "bu",
            AccessKind::W => "wu",
            AccessKind::L => "l",
            AccessKind::Q => "q",
            AccessKind::S => "s",
            AccessKind::T => "t",
        }
    }

    fn store_suffix(&self) -> &'static str {
        match self {
            AccessKind::B => "b",
            AccessKind::W => "w",
            AccessKind::L => "l",
            AccessKind::Q => "q",
            AccessKind::S => "s",
            AccessKind::T => "t",
        }
    }
}

/// Three-operand ALU operations. Div and Rem use Euclidean semantics to
/// match the software pointer-increment arithmetic; shifts mask the amount
/// to 6 bits; Slt compares as signed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AluOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    And,
    Or,
    Xor,
    Sll,
    Srl,
    Slt,
}

impl AluOp {
    pub const ALL: [AluOp; 11] = [
        AluOp::Add,
        AluOp::Sub,
        AluOp::Mul,
        AluOp::Div,
        AluOp::Rem,
        AluOp::And,
        AluOp::Or,
        AluOp::Xor,
        AluOp::Sll,
        AluOp::Srl,
        AluOp::Slt,
    ];

    fn func(&self) -> u32 {
        AluOp::ALL.iter().position(|o| o == self).unwrap() as u32
    }

    fn from_func(f: u32) -> Result<AluOp> {
        AluOp::ALL
            .get(f as usize)
            .copied()
            .ok_or_else(|| Error::IllegalInstruction(format!("alu func {f}")))
    }

    pub fn mnemonic(&self) -> &'static str {
        match self {
            AluOp::Add => "add",
            AluOp::Sub => "sub",
            AluOp::Mul => "mul",
            AluOp::Div => "div",
            AluOp::Rem => "rem",
            AluOp::And => "and",
            AluOp::Or => "or",
            AluOp::Xor => "xor",
            AluOp::Sll => "sll",
            AluOp::Srl => "srl",
            AluOp::Slt => "slt",
        }
    }
}

/// ALU with a signed 13-bit immediate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AluImmOp {
    Addi,
    Slli,
    Srli,
    Andi,
}

impl AluImmOp {
    pub const ALL: [AluImmOp; 4] = [AluImmOp::Addi, AluImmOp::Slli, AluImmOp::Srli, AluImmOp::Andi];

    fn func(&self) -> u32 {
        AluImmOp::ALL.iter().position(|o| o == self).unwrap() as u32
    }

    fn from_func(f: u32) -> Result<AluImmOp> {
        AluImmOp::ALL
            .get(f as usize)
            .copied()
            .ok_or_else(|| Error::IllegalInstruction(format!("alu-imm func {f}")))
    }

    pub fn mnemonic(&self) -> &'static str {
        match self {
            AluImmOp::Addi => "addi",
            AluImmOp::Slli => "slli",
            AluImmOp::Srli => "srli",
            AluImmOp::Andi => "andi",
        }
    }
}

/// Compare-and-branch conditions (Lt is signed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
}

impl CmpOp {
    pub const ALL: [CmpOp; 3] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt];

    fn func(&self) -> u32 {
        CmpOp::ALL.iter().position(|o| o == self).unwrap() as u32
    }

    fn from_func(f: u32) -> Result<CmpOp> {
        CmpOp::ALL
            .get(f as usize)
            .copied()
            .ok_or_else(|| Error::IllegalInstruction(format!("branch func {f}")))
    }

    pub fn mnemonic(&self) -> &'static str {
        match self {
            CmpOp::Eq => "beq",
            CmpOp::Ne => "bne",
            CmpOp::Lt => "blt",
        }
    }
}

/// One decoded instruction. Register indices are below 32; r31 reads as
/// zero and ignores writes. Branch offsets are relative to the following
/// instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instruction {
    /// regs/fregs[ra] <- mem[translate(unpack(regs[rb])) + disp]
    PgasLoad { kind: AccessKind, ra: u8, rb: u8, disp: i16 },
    /// mem[translate(unpack(regs[rb])) + disp] <- regs/fregs[ra]
    PgasStore { kind: AccessKind, ra: u8, rb: u8, disp: i16 },
    /// regs[rc] <- increment(regs[ra], 1 << increm_log2); sets the locality cc
    PgasIncImm { ra: u8, rc: u8, esize_log2: u8, bsize_log2: u8, increm_log2: u8 },
    /// regs[rc] <- increment(regs[ra], regs[rb] as signed); sets the locality cc
    PgasIncReg { ra: u8, rb: u8, rc: u8, esize_log2: u8, bsize_log2: u8 },
    /// threads register <- regs[ra]
    SetThreads { ra: u8 },
    /// base table[regs[ra]] <- regs[rb]
    SetBaseAddress { ra: u8, rb: u8 },
    /// branch if the current locality cc is in the 4-bit mask
    BranchLocality { mask: u8, offset: i32 },
    /// regs[rd] <- sign-extended immediate
    Li { rd: u8, imm: i32 },
    Alu { op: AluOp, rd: u8, rs1: u8, rs2: u8 },
    AluImm { op: AluImmOp, rd: u8, rs1: u8, imm: i16 },
    BranchCmp { op: CmpOp, rs1: u8, rs2: u8, offset: i16 },
    Jump { offset: i32 },
    /// regs[rd] <- mem[regs[raddr] + disp], plain virtual address
    MemLoad { rd: u8, raddr: u8, width: u8, disp: i16 },
    MemStore { rs: u8, raddr: u8, width: u8, disp: i16 },
    /// regs[rd] <- base table[regs[rs]] (the software translation lookup)
    LoadBase { rd: u8, rs: u8 },
    Halt,
}

/// One 32-bit machine word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EncodedInstruction(pub u32);

/// Encodes a power-of-two value into its 5-bit log2 field.
///
/// Exactly one bit may be set, and it must lie in the low 32 bits.
pub fn encode_pow2(v: u64) -> Result<u8> {
    if v.count_ones() != 1 || v >> 32 != 0 {
        return Err(Error::NotPow2(v));
    }
    Ok(v.trailing_zeros() as u8)
}

const OP_HALT: u32 = 0;
const OP_PGAS_LOAD: u32 = 1;
const OP_PGAS_STORE: u32 = 2;
const OP_PGAS_INC_IMM: u32 = 3;
const OP_PGAS_INC_REG: u32 = 4;
const OP_SET_THREADS: u32 = 5;
const OP_SET_BASE_ADDRESS: u32 = 6;
const OP_BRANCH_LOCALITY: u32 = 7;
const OP_LI: u32 = 8;
const OP_ALU: u32 = 9;
const OP_ALU_IMM: u32 = 10;
const OP_BRANCH_CMP: u32 = 11;
const OP_JUMP: u32 = 12;
const OP_MEM_LOAD: u32 = 13;
const OP_MEM_STORE: u32 = 14;
const OP_LOAD_BASE: u32 = 15;

fn check_reg(r: u8, name: &str) -> Result<u32> {
    if r >= 32 {
        return Err(Error::EncodingOverflow(format!("register {name}=r{r}")));
    }
    Ok(r as u32)
}

fn check_log2(v: u8, name: &str) -> Result<u32> {
    if v >= 32 {
        return Err(Error::EncodingOverflow(format!("{name} log2 field {v}")));
    }
    Ok(v as u32)
}

fn check_signed(v: i64, bits: u32, name: &str) -> Result<u32> {
    let min = -(1i64 << (bits - 1));
    let max = (1i64 << (bits - 1)) - 1;
    if v < min || v > max {
        return Err(Error::EncodingOverflow(format!(
            "{name} {v} outside signed {bits}-bit range"
        )));
    }
    Ok((v as u32) & ((1u32 << bits) - 1))
}

fn sext(raw: u32, bits: u32) -> i64 {
    let shift = 64 - bits;
    (((raw as u64) << shift) as i64) >> shift
}

/// Encodes an instruction into its 32-bit word, checking field ranges.
pub fn encode(i: &Instruction) -> Result<EncodedInstruction> {
    let word = match *i {
        Instruction::Halt => OP_HALT << 26,
        Instruction::PgasLoad { kind, ra, rb, disp } => {
            (OP_PGAS_LOAD << 26)
                | (check_reg(ra, "ra")? << 21)
                | (check_reg(rb, "rb")? << 16)
                | (kind.func() << 11)
                | check_signed(disp as i64, 11, "disp")?
        }
        Instruction::PgasStore { kind, ra, rb, disp } => {
            (OP_PGAS_STORE << 26)
                | (check_reg(ra, "ra")? << 21)
                | (check_reg(rb, "rb")? << 16)
                | (kind.func() << 11)
                | check_signed(disp as i64, 11, "disp")?
        }
        Instruction::PgasIncImm { ra, rc, esize_log2, bsize_log2, increm_log2 } => {
            (OP_PGAS_INC_IMM << 26)
                | (check_reg(ra, "ra")? << 21)
                | (check_reg(rc, "rc")? << 16)
                | (check_log2(esize_log2, "esize")? << 11)
                | (check_log2(bsize_log2, "bsize")? << 6)
                | (check_log2(increm_log2, "increm")? << 1)
        }
        Instruction::PgasIncReg { ra, rb, rc, esize_log2, bsize_log2 } => {
            (OP_PGAS_INC_REG << 26)
                | (check_reg(ra, "ra")? << 21)
                | (check_reg(rc, "rc")? << 16)
                | (check_log2(esize_log2, "esize")? << 11)
                | (check_log2(bsize_log2, "bsize")? << 6)
                | (check_reg(rb, "rb")? << 1)
        }
        Instruction::SetThreads { ra } => (OP_SET_THREADS << 26) | (check_reg(ra, "ra")? << 21),
        Instruction::SetBaseAddress { ra, rb } => {
            (OP_SET_BASE_ADDRESS << 26)
                | (check_reg(ra, "ra")? << 21)
                | (check_reg(rb, "rb")? << 16)
        }
        Instruction::BranchLocality { mask, offset } => {
            if mask >= 16 {
                return Err(Error::EncodingOverflow(format!("locality mask {mask:#x}")));
            }
            (OP_BRANCH_LOCALITY << 26)
                | ((mask as u32) << 22)
                | check_signed(offset as i64, 22, "offset")?
        }
        Instruction::Li { rd, imm } => {
            (OP_LI << 26) | (check_reg(rd, "rd")? << 21) | check_signed(imm as i64, 21, "imm")?
        }
        Instruction::Alu { op, rd, rs1, rs2 } => {
            (OP_ALU << 26)
                | (check_reg(rd, "rd")? << 21)
                | (check_reg(rs1, "rs1")? << 16)
                | (check_reg(rs2, "rs2")? << 11)
                | op.func()
        }
        Instruction::AluImm { op, rd, rs1, imm } => {
            (OP_ALU_IMM << 26)
                | (check_reg(rd, "rd")? << 21)
                | (check_reg(rs1, "rs1")? << 16)
                | (op.func() << 13)
                | check_signed(imm as i64, 13, "imm")?
        }
        Instruction::BranchCmp { op, rs1, rs2, offset } => {
            (OP_BRANCH_CMP << 26)
                | (check_reg(rs1, "rs1")? << 21)
                | (check_reg(rs2, "rs2")? << 16)
                | (op.func() << 13)
                | check_signed(offset as i64, 13, "offset")?
        }
        Instruction::Jump { offset } => (OP_JUMP << 26) | check_signed(offset as i64, 26, "offset")?,
        Instruction::MemLoad { rd, raddr, width, disp } => {
            (OP_MEM_LOAD << 26)
                | (check_reg(rd, "rd")? << 21)
                | (check_reg(raddr, "raddr")? << 16)
                | (width_func(width)? << 11)
                | check_signed(disp as i64, 11, "disp")?
        }
        Instruction::MemStore { rs, raddr, width, disp } => {
            (OP_MEM_STORE << 26)
                | (check_reg(rs, "rs")? << 21)
                | (check_reg(raddr, "raddr")? << 16)
                | (width_func(width)? << 11)
                | check_signed(disp as i64, 11, "disp")?
        }
        Instruction::LoadBase { rd, rs } => {
            (OP_LOAD_BASE << 26) | (check_reg(rd, "rd")? << 21) | (check_reg(rs, "rs")? << 16)
        }
    };
    Ok(EncodedInstruction(word))
}

fn width_func(width: u8) -> Result<u32> {
    match width {
        1 => Ok(0),
        2 => Ok(1),
        4 => Ok(2),
        8 => Ok(3),
        _ => Err(Error::EncodingOverflow(format!("memory width {width}"))),
    }
}

fn func_width(f: u32) -> Result<u8> {
    match f {
        0 => Ok(1),
        1 => Ok(2),
        2 => Ok(4),
        3 => Ok(8),
        _ => Err(Error::IllegalInstruction(format!("memory width func {f}"))),
    }
}

/// Inverse of [`encode`].
pub fn decode(w: EncodedInstruction) -> Result<Instruction> {
    let word = w.0;
    let opcode = word >> 26;
    let r21 = ((word >> 21) & 0x1f) as u8;
    let r16 = ((word >> 16) & 0x1f) as u8;
    let f11 = (word >> 11) & 0x1f;
    Ok(match opcode {
        OP_HALT => {
            if word != 0 {
                return Err(Error::IllegalInstruction(format!(
                    "nonzero halt word {word:#010x}"
                )));
            }
            Instruction::Halt
        }
        OP_PGAS_LOAD => Instruction::PgasLoad {
            kind: AccessKind::from_func(f11)?,
            ra: r21,
            rb: r16,
            disp: sext(word & 0x7ff, 11) as i16,
        },
        OP_PGAS_STORE => Instruction::PgasStore {
            kind: AccessKind::from_func(f11)?,
            ra: r21,
            rb: r16,
            disp: sext(word & 0x7ff, 11) as i16,
        },
        OP_PGAS_INC_IMM => Instruction::PgasIncImm {
            ra: r21,
            rc: r16,
            esize_log2: f11 as u8,
            bsize_log2: ((word >> 6) & 0x1f) as u8,
            increm_log2: ((word >> 1) & 0x1f) as u8,
        },
        OP_PGAS_INC_REG => Instruction::PgasIncReg {
            ra: r21,
            rc: r16,
            esize_log2: f11 as u8,
            bsize_log2: ((word >> 6) & 0x1f) as u8,
            rb: ((word >> 1) & 0x1f) as u8,
        },
        OP_SET_THREADS => Instruction::SetThreads { ra: r21 },
        OP_SET_BASE_ADDRESS => Instruction::SetBaseAddress { ra: r21, rb: r16 },
        OP_BRANCH_LOCALITY => Instruction::BranchLocality {
            mask: ((word >> 22) & 0xf) as u8,
            offset: sext(word & 0x3f_ffff, 22) as i32,
        },
        OP_LI => Instruction::Li {
            rd: r21,
            imm: sext(word & 0x1f_ffff, 21) as i32,
        },
        OP_ALU => Instruction::Alu {
            op: AluOp::from_func(word & 0x7ff)?,
            rd: r21,
            rs1: r16,
            rs2: f11 as u8,
        },
        OP_ALU_IMM => Instruction::AluImm {
            op: AluImmOp::from_func((word >> 13) & 0x7)?,
            rd: r21,
            rs1: r16,
            imm: sext(word & 0x1fff, 13) as i16,
        },
        OP_BRANCH_CMP => Instruction::BranchCmp {
            op: CmpOp::from_func((word >> 13) & 0x7)?,
            rs1: r21,
            rs2: r16,
            offset: sext(word & 0x1fff, 13) as i16,
        },
        OP_JUMP => Instruction::Jump {
            offset: sext(word & 0x3ff_ffff, 26) as i32,
        },
        OP_MEM_LOAD => Instruction::MemLoad {
            rd: r21,
            raddr: r16,
            width: func_width(f11)?,
            disp: sext(word & 0x7ff, 11) as i16,
        },
        OP_MEM_STORE => Instruction::MemStore {
            rs: r21,
            raddr: r16,
            width: func_width(f11)?,
            disp: sext(word & 0x7ff, 11) as i16,
        },
        OP_LOAD_BASE => Instruction::LoadBase { rd: r21, rs: r16 },
        other => {
            return Err(Error::IllegalInstruction(format!("opcode {other}")));
        }
    })
}

impl fmt::Display for Instruction {
    /// Assembly text: one instruction per line, fields space separated.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Instruction::PgasLoad { kind, ra, rb, disp } => {
                write!(f, "pgas_ld{} r{ra} r{rb} {disp}", kind.suffix())
            }
            Instruction::PgasStore { kind, ra, rb, disp } => {
                write!(f, "pgas_st{} r{ra} r{rb} {disp}", kind.store_suffix())
            }
            Instruction::PgasIncImm { ra, rc, esize_log2, bsize_log2, increm_log2 } => write!(
                f,
                "pgas_inc_imm r{rc} r{ra} {} {} {}",
                1u64 << esize_log2,
                1u64 << bsize_log2,
                1u64 << increm_log2
            ),
            Instruction::PgasIncReg { ra, rb, rc, esize_log2, bsize_log2 } => write!(
                f,
                "pgas_inc_reg r{rc} r{ra} r{rb} {} {}",
                1u64 << esize_log2,
                1u64 << bsize_log2
            ),
            Instruction::SetThreads { ra } => write!(f, "set_threads r{ra}"),
            Instruction::SetBaseAddress { ra, rb } => write!(f, "set_base_address r{ra} r{rb}"),
            Instruction::BranchLocality { mask, offset } => write!(f, "br_loc {mask} {offset}"),
            Instruction::Li { rd, imm } => write!(f, "li r{rd} {imm}"),
            Instruction::Alu { op, rd, rs1, rs2 } => {
                write!(f, "{} r{rd} r{rs1} r{rs2}", op.mnemonic())
            }
            Instruction::AluImm { op, rd, rs1, imm } => {
                write!(f, "{} r{rd} r{rs1} {imm}", op.mnemonic())
            }
            Instruction::BranchCmp { op, rs1, rs2, offset } => {
                write!(f, "{} r{rs1} r{rs2} {offset}", op.mnemonic())
            }
            Instruction::Jump { offset } => write!(f, "jmp {offset}"),
            Instruction::MemLoad { rd, raddr, width, disp } => {
                write!(f, "ldr{} r{rd} r{raddr} {disp}", width_letter(width))
            }
            Instruction::MemStore { rs, raddr, width, disp } => {
                write!(f, "str{} r{rs} r{raddr} {disp}", width_letter(width))
            }
            Instruction::LoadBase { rd, rs } => write!(f, "load_base r{rd} r{rs}"),
            Instruction::Halt => write!(f, "halt"),
        }
    }
}

fn width_letter(width: u8) -> &'static str {
    match width {
        1 => "b",
        2 => "w",
        4 => "l",
        _ => "q",
    }
}

fn letter_width(s: &str) -> Option<u8> {
    match s {
        "b" => Some(1),
        "w" => Some(2),
        "l" => Some(4),
        "q" => Some(8),
        _ => None,
    }
}

fn parse_reg(s: &str, line: usize) -> Result<u8> {
    let err = || Error::Parse {
        line,
        msg: format!("expected register r0..r31, got `{s}`"),
    };
    let n: u8 = s.strip_prefix('r').ok_or_else(err)?.parse().map_err(|_| err())?;
    if n >= 32 {
        return Err(err());
    }
    Ok(n)
}

fn parse_int(s: &str, line: usize) -> Result<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let mag = if let Some(hex) = body.strip_prefix("0x") {
        i64::from_str_radix(hex, 16)
    } else {
        body.parse()
    }
    .map_err(|_| Error::Parse {
        line,
        msg: format!("expected integer, got `{s}`"),
    })?;
    Ok(if neg { -mag } else { mag })
}

fn parse_pow2(s: &str, line: usize) -> Result<u8> {
    let v = parse_int(s, line)?;
    if v <= 0 {
        return Err(Error::Parse {
            line,
            msg: format!("expected a power of two, got `{s}`"),
        });
    }
    encode_pow2(v as u64).map_err(|_| Error::Parse {
        line,
        msg: format!("expected a power of two, got `{s}`"),
    })
}

/// Parses one assembly line (comments already stripped).
fn parse_line(line: &str, lineno: usize) -> Result<Instruction> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let mnemonic = fields[0];
    let argc = fields.len() - 1;
    let expect = |n: usize| -> Result<()> {
        if argc != n {
            Err(Error::Parse {
                line: lineno,
                msg: format!("`{mnemonic}` expects {n} operands, got {argc}"),
            })
        } else {
            Ok(())
        }
    };
    let reg = |i: usize| parse_reg(fields[i], lineno);
    let int = |i: usize| parse_int(fields[i], lineno);

    if let Some(suffix) = mnemonic.strip_prefix("pgas_ld") {
        let kind = AccessKind::ALL
            .iter()
            .find(|k| k.suffix() == suffix)
            .copied()
            .ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("unknown load kind `{mnemonic}`"),
            })?;
        expect(3)?;
        return Ok(Instruction::PgasLoad {
            kind,
            ra: reg(1)?,
            rb: reg(2)?,
            disp: int(3)? as i16,
        });
    }
    if let Some(suffix) = mnemonic.strip_prefix("pgas_st") {
        let kind = AccessKind::ALL
            .iter()
            .find(|k| k.store_suffix() == suffix)
            .copied()
            .ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("unknown store kind `{mnemonic}`"),
            })?;
        expect(3)?;
        return Ok(Instruction::PgasStore {
            kind,
            ra: reg(1)?,
            rb: reg(2)?,
            disp: int(3)? as i16,
        });
    }
    if let Some(op) = AluOp::ALL.iter().find(|o| o.mnemonic() == mnemonic) {
        expect(3)?;
        return Ok(Instruction::Alu {
            op: *op,
            rd: reg(1)?,
            rs1: reg(2)?,
            rs2: reg(3)?,
        });
    }
    if let Some(op) = AluImmOp::ALL.iter().find(|o| o.mnemonic() == mnemonic) {
        expect(3)?;
        return Ok(Instruction::AluImm {
            op: *op,
            rd: reg(1)?,
            rs1: reg(2)?,
            imm: int(3)? as i16,
        });
    }
    if let Some(op) = CmpOp::ALL.iter().find(|o| o.mnemonic() == mnemonic) {
        expect(3)?;
        return Ok(Instruction::BranchCmp {
            op: *op,
            rs1: reg(1)?,
            rs2: reg(2)?,
            offset: int(3)? as i16,
        });
    }
    if let Some(w) = mnemonic.strip_prefix("ldr").and_then(letter_width) {
        expect(3)?;
        return Ok(Instruction::MemLoad {
            rd: reg(1)?,
            raddr: reg(2)?,
            width: w,
            disp: int(3)? as i16,
        });
    }
    if let Some(w) = mnemonic.strip_prefix("str").and_then(letter_width) {
        expect(3)?;
        return Ok(Instruction::MemStore {
            rs: reg(1)?,
            raddr: reg(2)?,
            width: w,
            disp: int(3)? as i16,
        });
    }
    match mnemonic {
        "pgas_inc_imm" => {
            expect(5)?;
            Ok(Instruction::PgasIncImm {
                rc: reg(1)?,
                ra: reg(2)?,
                esize_log2: parse_pow2(fields[3], lineno)?,
                bsize_log2: parse_pow2(fields[4], lineno)?,
                increm_log2: parse_pow2(fields[5], lineno)?,
            })
        }
        "pgas_inc_reg" => {
            expect(5)?;
            Ok(Instruction::PgasIncReg {
                rc: reg(1)?,
                ra: reg(2)?,
                rb: reg(3)?,
                esize_log2: parse_pow2(fields[4], lineno)?,
                bsize_log2: parse_pow2(fields[5], lineno)?,
            })
        }
        "set_threads" => {
            expect(1)?;
            Ok(Instruction::SetThreads { ra: reg(1)? })
        }
        "set_base_address" => {
            expect(2)?;
            Ok(Instruction::SetBaseAddress {
                ra: reg(1)?,
                rb: reg(2)?,
            })
        }
        "br_loc" => {
            expect(2)?;
            Ok(Instruction::BranchLocality {
                mask: int(1)? as u8,
                offset: int(2)? as i32,
            })
        }
        "li" => {
            expect(2)?;
            Ok(Instruction::Li {
                rd: reg(1)?,
                imm: int(2)? as i32,
            })
        }
        "jmp" => {
            expect(1)?;
            Ok(Instruction::Jump {
                offset: int(1)? as i32,
            })
        }
        "load_base" => {
            expect(2)?;
            Ok(Instruction::LoadBase {
                rd: reg(1)?,
                rs: reg(2)?,
            })
        }
        "halt" => {
            expect(0)?;
            Ok(Instruction::Halt)
        }
        other => Err(Error::Parse {
            line: lineno,
            msg: format!("unknown mnemonic `{other}`"),
        }),
    }
}

/// Parses a program from line-oriented assembly text; `#` starts a comment.
pub fn parse_program(text: &str) -> Result<Vec<Instruction>> {
    let mut program = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        program.push(parse_line(line, idx + 1)?);
    }
    Ok(program)
}

/// Formats a program back into assembly text.
pub fn format_program(program: &[Instruction]) -> String {
    let mut out = String::new();
    for i in program {
        out.push_str(&i.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn roundtrip(i: Instruction) {
        let w = encode(&i).unwrap();
        assert_eq!(decode(w).unwrap(), i, "word {:#010x}", w.0);
    }

    #[test]
    fn encode_pow2_fields() {
        assert_eq!(encode_pow2(1).unwrap(), 0);
        assert_eq!(encode_pow2(4).unwrap(), 2);
        assert_eq!(encode_pow2(1 << 31).unwrap(), 31);
        assert_eq!(encode_pow2(6), Err(Error::NotPow2(6)));
        assert_eq!(encode_pow2(0), Err(Error::NotPow2(0)));
        assert_eq!(encode_pow2(1 << 32), Err(Error::NotPow2(1 << 32)));
    }

    #[test]
    fn roundtrip_boundary_values() {
        for kind in AccessKind::ALL {
            roundtrip(Instruction::PgasLoad { kind, ra: 31, rb: 0, disp: -1024 });
            roundtrip(Instruction::PgasStore { kind, ra: 0, rb: 31, disp: 1023 });
        }
        roundtrip(Instruction::PgasIncImm { ra: 31, rc: 31, esize_log2: 31, bsize_log2: 31, increm_log2: 31 });
        roundtrip(Instruction::PgasIncReg { ra: 1, rb: 31, rc: 2, esize_log2: 0, bsize_log2: 31 });
        roundtrip(Instruction::SetThreads { ra: 31 });
        roundtrip(Instruction::SetBaseAddress { ra: 5, rb: 6 });
        roundtrip(Instruction::BranchLocality { mask: 15, offset: -(1 << 21) });
        roundtrip(Instruction::Li { rd: 7, imm: (1 << 20) - 1 });
        roundtrip(Instruction::Li { rd: 7, imm: -(1 << 20) });
        for op in AluOp::ALL {
            roundtrip(Instruction::Alu { op, rd: 1, rs1: 2, rs2: 3 });
        }
        for op in AluImmOp::ALL {
            roundtrip(Instruction::AluImm { op, rd: 1, rs1: 2, imm: -4096 });
        }
        for op in CmpOp::ALL {
            roundtrip(Instruction::BranchCmp { op, rs1: 1, rs2: 2, offset: 4095 });
        }
        roundtrip(Instruction::Jump { offset: (1 << 25) - 1 });
        roundtrip(Instruction::Jump { offset: -(1 << 25) });
        for width in [1u8, 2, 4, 8] {
            roundtrip(Instruction::MemLoad { rd: 1, raddr: 2, width, disp: -1 });
            roundtrip(Instruction::MemStore { rs: 1, raddr: 2, width, disp: 0 });
        }
        roundtrip(Instruction::LoadBase { rd: 30, rs: 29 });
        roundtrip(Instruction::Halt);
    }

    #[test]
    fn encode_range_checks() {
        assert!(encode(&Instruction::Li { rd: 32, imm: 0 }).is_err());
        assert!(encode(&Instruction::Li { rd: 0, imm: 1 << 20 }).is_err());
        assert!(encode(&Instruction::PgasLoad { kind: AccessKind::L, ra: 0, rb: 0, disp: 1024 }).is_err());
        assert!(encode(&Instruction::BranchLocality { mask: 16, offset: 0 }).is_err());
        assert!(encode(&Instruction::MemLoad { rd: 0, raddr: 0, width: 3, disp: 0 }).is_err());
    }

    #[test]
    fn decode_rejects_unknown_opcode() {
        assert!(decode(EncodedInstruction(63 << 26)).is_err());
        assert!(decode(EncodedInstruction(1)).is_err()); // nonzero halt
        // pgas load with func 6 (only 0..=5 valid)
        assert!(decode(EncodedInstruction((1 << 26) | (6 << 11))).is_err());
    }

    #[test]
    fn asm_roundtrip() {
        let text = "\
# traversal fragment
li r1 4
set_threads r1
pgas_inc_imm r8 r8 4 4 1
pgas_inc_reg r8 r8 r24 8 2
pgas_ldl r2 r8 0
pgas_stq r2 r9 8
br_loc 1 -3
beq r4 r31 2
ldrq r5 r6 -8
strb r5 r6 16
load_base r7 r3
set_base_address r3 r7
addi r4 r4 -1
jmp -10
halt
";
        let program = parse_program(text).unwrap();
        assert_eq!(program.len(), 15);
        let printed = format_program(&program);
        assert_eq!(parse_program(&printed).unwrap(), program);
    }

    #[test]
    fn asm_errors() {
        assert!(parse_program("bogus r1 r2").is_err());
        assert!(parse_program("li r40 1").is_err());
        assert!(parse_program("pgas_inc_imm r1 r2 3 4 1").is_err()); // 3 not pow2
        assert!(parse_program("add r1 r2").is_err());
    }

    fn arb_instruction() -> impl Strategy<Value = Instruction> {
        let reg = 0u8..32;
        let log2 = 0u8..32;
        prop_oneof![
            (prop::sample::select(&AccessKind::ALL[..]), reg.clone(), reg.clone(), -1024i16..1024)
                .prop_map(|(kind, ra, rb, disp)| Instruction::PgasLoad { kind, ra, rb, disp }),
            (prop::sample::select(&AccessKind::ALL[..]), reg.clone(), reg.clone(), -1024i16..1024)
                .prop_map(|(kind, ra, rb, disp)| Instruction::PgasStore { kind, ra, rb, disp }),
            (reg.clone(), reg.clone(), log2.clone(), log2.clone(), log2.clone()).prop_map(
                |(ra, rc, esize_log2, bsize_log2, increm_log2)| Instruction::PgasIncImm {
                    ra, rc, esize_log2, bsize_log2, increm_log2
                }
            ),
            (reg.clone(), reg.clone(), reg.clone(), log2.clone(), log2.clone()).prop_map(
                |(ra, rb, rc, esize_log2, bsize_log2)| Instruction::PgasIncReg {
                    ra, rb, rc, esize_log2, bsize_log2
                }
            ),
            reg.clone().prop_map(|ra| Instruction::SetThreads { ra }),
            (reg.clone(), reg.clone()).prop_map(|(ra, rb)| Instruction::SetBaseAddress { ra, rb }),
            (0u8..16, -(1i32 << 21)..(1 << 21)).prop_map(|(mask, offset)| {
                Instruction::BranchLocality { mask, offset }
            }),
            (reg.clone(), -(1i32 << 20)..(1 << 20)).prop_map(|(rd, imm)| Instruction::Li { rd, imm }),
            (prop::sample::select(&AluOp::ALL[..]), reg.clone(), reg.clone(), reg.clone())
                .prop_map(|(op, rd, rs1, rs2)| Instruction::Alu { op, rd, rs1, rs2 }),
            (prop::sample::select(&AluImmOp::ALL[..]), reg.clone(), reg.clone(), -4096i16..4096)
                .prop_map(|(op, rd, rs1, imm)| Instruction::AluImm { op, rd, rs1, imm }),
            (prop::sample::select(&CmpOp::ALL[..]), reg.clone(), reg.clone(), -4096i16..4096)
                .prop_map(|(op, rs1, rs2, offset)| Instruction::BranchCmp { op, rs1, rs2, offset }),
            (-(1i32 << 25)..(1 << 25)).prop_map(|offset| Instruction::Jump { offset }),
            (reg.clone(), reg.clone(), prop::sample::select(vec![1u8, 2, 4, 8]), -1024i16..1024)
                .prop_map(|(rd, raddr, width, disp)| Instruction::MemLoad { rd, raddr, width, disp }),
            (reg.clone(), reg.clone(), prop::sample::select(vec![1u8, 2, 4, 8]), -1024i16..1024)
                .prop_map(|(rs, raddr, width, disp)| Instruction::MemStore { rs, raddr, width, disp }),
            (reg.clone(), reg).prop_map(|(rd, rs)| Instruction::LoadBase { rd, rs }),
            Just(Instruction::Halt),
        ]
    }

    proptest! {
        #[test]
        fn decode_encode_identity(i in arb_instruction()) {
            let w = encode(&i).unwrap();
            prop_assert_eq!(decode(w).unwrap(), i);
        }

        #[test]
        fn asm_print_parse_identity(i in arb_instruction()) {
            let text = i.to_string();
            let parsed = parse_program(&text).unwrap();
            prop_assert_eq!(parsed, vec![i]);
        }
    }
}
