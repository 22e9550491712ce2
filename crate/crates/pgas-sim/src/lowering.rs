//! Lowering from a small traversal IR to machine programs.
//!
//! The IR is the stand-in for a source-to-source UPC compiler's output:
//! loops of pointer increments, shared loads/stores and ALU ops over a set
//! of declared shared arrays. Lowering emits either hardware-extension
//! instruction sequences or the plain software sequences the extension
//! replaces:
//!
//! * hw mode: a power-of-two increment becomes one `pgas_inc_imm`; an
//!   increment with exactly two bits set becomes two (incrementing by 3 is
//!   an increment by 1 followed by an increment by 2); anything else goes
//!   through `pgas_inc_reg`. Arrays whose shape is not power-of-two fall
//!   back to the software expansion, and the report says why.
//! * sw mode: every pointer increment expands to the full arithmetic
//!   sequence (two divisions, two modulos) and every access performs an
//!   explicit base-table lookup and addition before a plain load/store.
//!
//! Register conventions of lowered code: r1 holds the thread count (the
//! prologue also moves it into the threads register), r8..r15 hold the
//! packed shared pointers of ptr ids 0..7, r16..r19 are loop counters,
//! r20..r23 carry IR value registers, r24..r30 are scratch, r31 is zero.

use crate::error::{Error, Result};
use crate::isa::{encode_pow2, AccessKind, AluImmOp, AluOp, CmpOp, Instruction};
use crate::pointer::ArraySpec;
use std::fmt;

/// Index of a declared shared array (and its traversal pointer) in the IR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PtrId(pub usize);

/// First machine register holding a packed shared pointer.
pub const PTR_REG_BASE: u8 = 8;
/// Register holding the thread count in lowered code.
pub const NT_REG: u8 = 1;
/// First loop counter register.
pub const LOOP_REG_BASE: u8 = 16;
/// First machine register backing an IR value register.
pub const IR_REG_BASE: u8 = 20;

pub const MAX_PTRS: usize = 8;
pub const MAX_IR_REGS: u8 = 4;
pub const MAX_LOOP_DEPTH: usize = 4;

const T0: u8 = 24;
const T1: u8 = 25;
const T2: u8 = 26;
const T3: u8 = 27;
const T4: u8 = 28;
const T5: u8 = 29;
const T6: u8 = 30;
const ZERO: u8 = 31;

/// Machine register assigned to a pointer id.
pub fn pointer_reg(ptr: PtrId) -> u8 {
    PTR_REG_BASE + ptr.0 as u8
}

/// One IR operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IrOp {
    /// Advance the pointer of `ptr` by `amount` elements.
    IncPtr { ptr: PtrId, amount: i64 },
    /// IR reg `dst` <- element under `ptr`'s pointer, at byte disp.
    Load { dst: u8, ptr: PtrId, disp: i16 },
    /// Element under `ptr`'s pointer <- IR reg `src`.
    Store { src: u8, ptr: PtrId, disp: i16 },
    Alu { op: AluOp, dst: u8, lhs: u8, rhs: u8 },
    Loop { count: u64, body: Vec<IrOp> },
}

/// A traversal program over declared shared arrays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraversalIr {
    /// Name and shape per ptr id, in declaration order.
    pub arrays: Vec<(String, ArraySpec)>,
    pub ops: Vec<IrOp>,
}

/// Lowering mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Hw,
    Sw,
}

/// Accounting of how each pointer operation was lowered.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoweringReport {
    pub hw_lowered: u64,
    pub sw_fallback: u64,
    /// One entry per fallback: (array name, cause).
    pub reasons: Vec<(String, String)>,
}

/// Lowered program plus its report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoweredProgram {
    pub program: Vec<Instruction>,
    pub report: LoweringReport,
}

impl TraversalIr {
    pub fn validate(&self) -> Result<()> {
        if self.arrays.is_empty() {
            return Err(Error::Validation("IR declares no arrays".into()));
        }
        if self.arrays.len() > MAX_PTRS {
            return Err(Error::Validation(format!(
                "IR declares {} arrays, at most {MAX_PTRS} supported",
                self.arrays.len()
            )));
        }
        let nt = self.arrays[0].1.numthreads;
        for (name, spec) in &self.arrays {
            if spec.numthreads != nt {
                return Err(Error::Validation(format!(
                    "array `{name}` has numthreads {} but `{}` has {nt}",
                    spec.numthreads, self.arrays[0].0
                )));
            }
            if spec.blocksize >= 1 << 20 || spec.elemsize >= 1 << 20 {
                return Err(Error::Validation(format!(
                    "array `{name}` sizes too large for immediate loads"
                )));
            }
        }
        self.validate_ops(&self.ops, 0)
    }

    fn validate_ops(&self, ops: &[IrOp], depth: usize) -> Result<()> {
        for op in ops {
            match op {
                IrOp::IncPtr { ptr, amount } => {
                    self.check_ptr(*ptr)?;
                    if amount.unsigned_abs() >= 1 << 20 {
                        return Err(Error::Validation(format!(
                            "increment amount {amount} too large"
                        )));
                    }
                }
                IrOp::Load { dst, ptr, .. } => {
                    self.check_ptr(*ptr)?;
                    check_ir_reg(*dst)?;
                }
                IrOp::Store { src, ptr, .. } => {
                    self.check_ptr(*ptr)?;
                    check_ir_reg(*src)?;
                }
                IrOp::Alu { dst, lhs, rhs, .. } => {
                    check_ir_reg(*dst)?;
                    check_ir_reg(*lhs)?;
                    check_ir_reg(*rhs)?;
                }
                IrOp::Loop { count, body } => {
                    if depth + 1 > MAX_LOOP_DEPTH {
                        return Err(Error::Validation("loops nested too deeply".into()));
                    }
                    if *count >= 1 << 20 {
                        return Err(Error::Validation(format!("loop count {count} too large")));
                    }
                    self.validate_ops(body, depth + 1)?;
                }
            }
        }
        Ok(())
    }

    fn check_ptr(&self, ptr: PtrId) -> Result<()> {
        if ptr.0 >= self.arrays.len() {
            return Err(Error::Validation(format!("undeclared ptr id {}", ptr.0)));
        }
        Ok(())
    }

    pub fn numthreads(&self) -> u64 {
        self.arrays[0].1.numthreads
    }
}

fn check_ir_reg(r: u8) -> Result<()> {
    if r >= MAX_IR_REGS {
        return Err(Error::Validation(format!(
            "IR register r{r} out of range (max {})",
            MAX_IR_REGS - 1
        )));
    }
    Ok(())
}

fn ir_reg(r: u8) -> u8 {
    IR_REG_BASE + r
}

/// Why a pointer op could not take the hardware path.
fn hw_obstacle(spec: &ArraySpec) -> Option<&'static str> {
    if !spec.elemsize.is_power_of_two() {
        Some("non-power-of-2 element size")
    } else if !spec.blocksize.is_power_of_two() {
        Some("non-power-of-2 block size")
    } else if !spec.numthreads.is_power_of_two() {
        Some("non-power-of-2 thread count")
    } else {
        None
    }
}

fn access_kind(spec: &ArraySpec) -> AccessKind {
    match spec.elemsize {
        1 => AccessKind::B,
        2 => AccessKind::W,
        4 => AccessKind::L,
        _ => AccessKind::Q,
    }
}

fn access_width(spec: &ArraySpec) -> u8 {
    match spec.elemsize {
        w @ (1 | 2 | 4) => w as u8,
        _ => 8,
    }
}

/// The straight-line software expansion of one pointer increment: unpack,
/// the full arithmetic with two divisions and two modulos, repack.
///
/// Always the same length regardless of the spec; reads the thread count
/// from r1 and clobbers r24..r30.
pub fn lower_software_increment(ptr_reg: u8, amount: i64, spec: &ArraySpec) -> Vec<Instruction> {
    use Instruction::*;
    let p = ptr_reg;
    vec![
        Li { rd: T0, imm: spec.blocksize as i32 },
        Li { rd: T1, imm: spec.elemsize as i32 },
        Li { rd: T2, imm: amount as i32 },
        // unpack thread / phase / va
        AluImm { op: AluImmOp::Srli, rd: T3, rs1: p, imm: 48 },
        AluImm { op: AluImmOp::Slli, rd: T4, rs1: p, imm: 16 },
        AluImm { op: AluImmOp::Srli, rd: T4, rs1: T4, imm: 48 },
        AluImm { op: AluImmOp::Slli, rd: T5, rs1: p, imm: 32 },
        AluImm { op: AluImmOp::Srli, rd: T5, rs1: T5, imm: 32 },
        // phinc = phase + increment
        Alu { op: AluOp::Add, rd: T6, rs1: T4, rs2: T2 },
        // thinc = phinc / blocksize
        Alu { op: AluOp::Div, rd: T2, rs1: T6, rs2: T0 },
        // nphase = phinc % blocksize
        Alu { op: AluOp::Rem, rd: T6, rs1: T6, rs2: T0 },
        // thread + thinc
        Alu { op: AluOp::Add, rd: T3, rs1: T3, rs2: T2 },
        // blockinc = (thread + thinc) / numthreads
        Alu { op: AluOp::Div, rd: T2, rs1: T3, rs2: NT_REG },
        // nthread = (thread + thinc) % numthreads
        Alu { op: AluOp::Rem, rd: T3, rs1: T3, rs2: NT_REG },
        // eaddrinc = (nphase - phase) + blockinc * blocksize
        Alu { op: AluOp::Sub, rd: T4, rs1: T6, rs2: T4 },
        Alu { op: AluOp::Mul, rd: T2, rs1: T2, rs2: T0 },
        Alu { op: AluOp::Add, rd: T4, rs1: T4, rs2: T2 },
        // nva = va + eaddrinc * elemsize
        Alu { op: AluOp::Mul, rd: T4, rs1: T4, rs2: T1 },
        Alu { op: AluOp::Add, rd: T5, rs1: T5, rs2: T4 },
        // repack
        AluImm { op: AluImmOp::Slli, rd: T3, rs1: T3, imm: 48 },
        AluImm { op: AluImmOp::Slli, rd: T6, rs1: T6, imm: 32 },
        Alu { op: AluOp::Or, rd: p, rs1: T3, rs2: T6 },
        Alu { op: AluOp::Or, rd: p, rs1: p, rs2: T5 },
    ]
}

/// Software translation before an access: extract the thread, look up its
/// base, add the va. Leaves the system virtual address in r28.
fn lower_software_translate(ptr_reg: u8) -> Vec<Instruction> {
    use Instruction::*;
    vec![
        AluImm { op: AluImmOp::Srli, rd: T3, rs1: ptr_reg, imm: 48 },
        LoadBase { rd: T4, rs: T3 },
        AluImm { op: AluImmOp::Slli, rd: T5, rs1: ptr_reg, imm: 32 },
        AluImm { op: AluImmOp::Srli, rd: T5, rs1: T5, imm: 32 },
        Alu { op: AluOp::Add, rd: T4, rs1: T4, rs2: T5 },
    ]
}

struct Lowerer<'a> {
    ir: &'a TraversalIr,
    mode: Mode,
    out: Vec<Instruction>,
    report: LoweringReport,
    loop_depth: usize,
}

impl<'a> Lowerer<'a> {
    fn spec(&self, ptr: PtrId) -> &ArraySpec {
        &self.ir.arrays[ptr.0].1
    }

    fn name(&self, ptr: PtrId) -> &str {
        &self.ir.arrays[ptr.0].0
    }

    fn fallback(&mut self, ptr: PtrId, cause: &str) {
        self.report.sw_fallback += 1;
        self.report
            .reasons
            .push((self.name(ptr).to_string(), cause.to_string()));
    }

    fn lower_inc(&mut self, ptr: PtrId, amount: i64) {
        let spec = *self.spec(ptr);
        let p = pointer_reg(ptr);
        if amount == 0 {
            // still a pointer op for the report, but nothing to emit
            self.report.hw_lowered += 1;
            return;
        }
        let obstacle = match self.mode {
            Mode::Sw => Some("software mode"),
            Mode::Hw => hw_obstacle(&spec),
        };
        if let Some(cause) = obstacle {
            self.fallback(ptr, cause);
            self.out.extend(lower_software_increment(p, amount, &spec));
            return;
        }
        self.report.hw_lowered += 1;
        let esize_log2 = encode_pow2(spec.elemsize).unwrap();
        let bsize_log2 = encode_pow2(spec.blocksize).unwrap();
        let inc_imm = |increm_log2: u8| Instruction::PgasIncImm {
            ra: p,
            rc: p,
            esize_log2,
            bsize_log2,
            increm_log2,
        };
        if amount > 0 && (amount as u64).is_power_of_two() && amount < (1 << 32) {
            self.out.push(inc_imm(amount.trailing_zeros() as u8));
        } else if amount > 0 && amount.count_ones() == 2 && amount < (1 << 32) {
            // two immediates: low bit first, then the high bit
            let low = amount.trailing_zeros() as u8;
            let high = (63 - amount.leading_zeros()) as u8;
            self.out.push(inc_imm(low));
            self.out.push(inc_imm(high));
        } else {
            self.out.push(Instruction::Li { rd: T0, imm: amount as i32 });
            self.out.push(Instruction::PgasIncReg {
                ra: p,
                rb: T0,
                rc: p,
                esize_log2,
                bsize_log2,
            });
        }
    }

    fn lower_load(&mut self, dst: u8, ptr: PtrId, disp: i16) {
        let spec = *self.spec(ptr);
        let p = pointer_reg(ptr);
        match self.mode {
            Mode::Hw => {
                self.report.hw_lowered += 1;
                self.out.push(Instruction::PgasLoad {
                    kind: access_kind(&spec),
                    ra: ir_reg(dst),
                    rb: p,
                    disp,
                });
            }
            Mode::Sw => {
                self.fallback(ptr, "software mode");
                self.out.extend(lower_software_translate(p));
                self.out.push(Instruction::MemLoad {
                    rd: ir_reg(dst),
                    raddr: T4,
                    width: access_width(&spec),
                    disp,
                });
            }
        }
    }

    fn lower_store(&mut self, src: u8, ptr: PtrId, disp: i16) {
        let spec = *self.spec(ptr);
        let p = pointer_reg(ptr);
        match self.mode {
            Mode::Hw => {
                self.report.hw_lowered += 1;
                self.out.push(Instruction::PgasStore {
                    kind: access_kind(&spec),
                    ra: ir_reg(src),
                    rb: p,
                    disp,
                });
            }
            Mode::Sw => {
                self.fallback(ptr, "software mode");
                self.out.extend(lower_software_translate(p));
                self.out.push(Instruction::MemStore {
                    rs: ir_reg(src),
                    raddr: T4,
                    width: access_width(&spec),
                    disp,
                });
            }
        }
    }

    fn lower_ops(&mut self, ops: &[IrOp]) {
        for op in ops {
            match op {
                IrOp::IncPtr { ptr, amount } => self.lower_inc(*ptr, *amount),
                IrOp::Load { dst, ptr, disp } => self.lower_load(*dst, *ptr, *disp),
                IrOp::Store { src, ptr, disp } => self.lower_store(*src, *ptr, *disp),
                IrOp::Alu { op, dst, lhs, rhs } => self.out.push(Instruction::Alu {
                    op: *op,
                    rd: ir_reg(*dst),
                    rs1: ir_reg(*lhs),
                    rs2: ir_reg(*rhs),
                }),
                IrOp::Loop { count, body } => {
                    if *count == 0 {
                        continue;
                    }
                    let counter = LOOP_REG_BASE + self.loop_depth as u8;
                    self.out.push(Instruction::Li {
                        rd: counter,
                        imm: *count as i32,
                    });
                    let body_start = self.out.len();
                    self.loop_depth += 1;
                    self.lower_ops(body);
                    self.loop_depth -= 1;
                    let body_len = self.out.len() - body_start;
                    self.out.push(Instruction::AluImm {
                        op: AluImmOp::Addi,
                        rd: counter,
                        rs1: counter,
                        imm: -1,
                    });
                    self.out.push(Instruction::BranchCmp {
                        op: CmpOp::Ne,
                        rs1: counter,
                        rs2: ZERO,
                        offset: -(body_len as i16) - 2,
                    });
                }
            }
        }
    }
}

/// Lowers a traversal IR into a runnable program for the given mode.
///
/// The emitted prologue loads the thread count into r1 and issues
/// `set_threads`; the program ends with `halt`. Callers preset the pointer
/// registers (see [`pointer_reg`]) with packed pointers before running.
pub fn lower(ir: &TraversalIr, mode: Mode) -> Result<LoweredProgram> {
    ir.validate()?;
    let mut l = Lowerer {
        ir,
        mode,
        out: Vec::new(),
        report: LoweringReport::default(),
        loop_depth: 0,
    };
    l.out.push(Instruction::Li {
        rd: NT_REG,
        imm: ir.numthreads() as i32,
    });
    l.out.push(Instruction::SetThreads { ra: NT_REG });
    l.lower_ops(&ir.ops);
    l.out.push(Instruction::Halt);
    Ok(LoweredProgram {
        program: l.out,
        report: l.report,
    })
}

// ---------------------------------------------------------------------------
// IR text format
// ---------------------------------------------------------------------------

impl fmt::Display for TraversalIr {
    /// Line-oriented IR text; the grammar accepted by [`parse_ir`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, s) in &self.arrays {
            writeln!(
                f,
                "array {name} {} {} {} {}",
                s.blocksize, s.elemsize, s.numelems, s.numthreads
            )?;
        }
        fn write_ops(
            f: &mut fmt::Formatter<'_>,
            ir: &TraversalIr,
            ops: &[IrOp],
            indent: usize,
        ) -> fmt::Result {
            for op in ops {
                write!(f, "{}", "  ".repeat(indent))?;
                match op {
                    IrOp::IncPtr { ptr, amount } => {
                        writeln!(f, "inc {} {amount}", ir.arrays[ptr.0].0)?
                    }
                    IrOp::Load { dst, ptr, disp } => {
                        writeln!(f, "load r{dst} {} {disp}", ir.arrays[ptr.0].0)?
                    }
                    IrOp::Store { src, ptr, disp } => {
                        writeln!(f, "store r{src} {} {disp}", ir.arrays[ptr.0].0)?
                    }
                    IrOp::Alu { op, dst, lhs, rhs } => {
                        writeln!(f, "alu {} r{dst} r{lhs} r{rhs}", op.mnemonic())?
                    }
                    IrOp::Loop { count, body } => {
                        writeln!(f, "loop {count}")?;
                        write_ops(f, ir, body, indent + 1)?;
                        writeln!(f, "{}end", "  ".repeat(indent))?;
                    }
                }
            }
            Ok(())
        }
        write_ops(f, self, &self.ops, 0)
    }
}

/// Parses the line-oriented IR text format.
///
/// Grammar (one item per line, `#` comments):
///
/// ```text
/// array <name> <blocksize> <elemsize> <numelems> <numthreads>
/// inc <name> <amount>
/// load r<k> <name> <disp>
/// store r<k> <name> <disp>
/// alu <op> r<dst> r<lhs> r<rhs>
/// loop <count> ... end
/// ```
pub fn parse_ir(text: &str) -> Result<TraversalIr> {
    let mut arrays: Vec<(String, ArraySpec)> = Vec::new();
    // stack of open op lists; the bottom entry is the program body
    let mut stack: Vec<(u64, Vec<IrOp>)> = vec![(0, Vec::new())];

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: String| Error::Parse { line: lineno, msg };
        let int = |s: &str| -> Result<i64> {
            s.parse()
                .map_err(|_| err(format!("expected integer, got `{s}`")))
        };
        let reg = |s: &str| -> Result<u8> {
            s.strip_prefix('r')
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| err(format!("expected IR register r0..r{}, got `{s}`", MAX_IR_REGS - 1)))
        };
        let ptr = |s: &str| -> Result<PtrId> {
            arrays
                .iter()
                .position(|(n, _)| n == s)
                .map(PtrId)
                .ok_or_else(|| err(format!("undeclared array `{s}`")))
        };
        let expect = |n: usize| -> Result<()> {
            if fields.len() - 1 != n {
                Err(err(format!(
                    "`{}` expects {n} operands, got {}",
                    fields[0],
                    fields.len() - 1
                )))
            } else {
                Ok(())
            }
        };

        match fields[0] {
            "array" => {
                expect(5)?;
                if stack.len() > 1 || !stack[0].1.is_empty() {
                    return Err(err("array declarations must precede ops".into()));
                }
                let spec = ArraySpec::new(
                    int(fields[2])? as u64,
                    int(fields[3])? as u64,
                    int(fields[4])? as u64,
                    int(fields[5])? as u64,
                )?;
                arrays.push((fields[1].to_string(), spec));
            }
            "inc" => {
                expect(2)?;
                let op = IrOp::IncPtr {
                    ptr: ptr(fields[1])?,
                    amount: int(fields[2])?,
                };
                stack.last_mut().unwrap().1.push(op);
            }
            "load" => {
                expect(3)?;
                let op = IrOp::Load {
                    dst: reg(fields[1])?,
                    ptr: ptr(fields[2])?,
                    disp: int(fields[3])? as i16,
                };
                stack.last_mut().unwrap().1.push(op);
            }
            "store" => {
                expect(3)?;
                let op = IrOp::Store {
                    src: reg(fields[1])?,
                    ptr: ptr(fields[2])?,
                    disp: int(fields[3])? as i16,
                };
                stack.last_mut().unwrap().1.push(op);
            }
            "alu" => {
                expect(4)?;
                let op = AluOp::ALL
                    .iter()
                    .find(|o| o.mnemonic() == fields[1])
                    .copied()
                    .ok_or_else(|| err(format!("unknown alu op `{}`", fields[1])))?;
                let op = IrOp::Alu {
                    op,
                    dst: reg(fields[2])?,
                    lhs: reg(fields[3])?,
                    rhs: reg(fields[4])?,
                };
                stack.last_mut().unwrap().1.push(op);
            }
            "loop" => {
                expect(1)?;
                stack.push((int(fields[1])? as u64, Vec::new()));
            }
            "end" => {
                expect(0)?;
                if stack.len() < 2 {
                    return Err(err("`end` without an open loop".into()));
                }
                let (count, body) = stack.pop().unwrap();
                stack
                    .last_mut()
                    .unwrap()
                    .1
                    .push(IrOp::Loop { count, body });
            }
            other => return Err(err(format!("unknown IR keyword `{other}`"))),
        }
    }
    if stack.len() != 1 {
        return Err(Error::Parse {
            line: text.lines().count(),
            msg: "unterminated loop".into(),
        });
    }
    let ir = TraversalIr {
        arrays,
        ops: stack.pop().unwrap().1,
    };
    ir.validate()?;
    Ok(ir)
}
