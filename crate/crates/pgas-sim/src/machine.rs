//! Functional execution of the extended instruction set.
//!
//! One [`MachineState`] models one SPMD thread: 32 integer and 32 float
//! registers, the threads special register, a base-address table, the
//! locality condition code and per-class execution counters. Memory lives
//! outside the machine so several machines can share one partitioned space
//! under the round-robin scheduler.
//!
//! r31 is hardwired to zero: it reads as 0 and writes to it are discarded.

use crate::error::{Error, Result};
use crate::increment::{classify_locality, increment_hw, LocalityCode, Topology};
use crate::isa::{AluImmOp, AluOp, CmpOp, Instruction};
use crate::memory::PartitionedMemory;
use crate::pointer::{pack, unpack, ArraySpec, PackedSharedPointer};
use crate::translate::{translate_lut, BaseAddressTable};
use std::io::Write;

/// Register index hardwired to zero.
pub const ZERO_REG: u8 = 31;

/// Instruction classes for execution counting and the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InstrClass {
    PgasLoad,
    PgasStore,
    PgasIncImm,
    PgasIncReg,
    SetThreads,
    SetBaseAddress,
    BranchLocality,
    Li,
    Alu,
    Mul,
    Div,
    Branch,
    Jump,
    MemLoad,
    MemStore,
    LoadBase,
    Halt,
}

impl InstrClass {
    pub const ALL: [InstrClass; 17] = [
        InstrClass::PgasLoad,
        InstrClass::PgasStore,
        InstrClass::PgasIncImm,
        InstrClass::PgasIncReg,
        InstrClass::SetThreads,
        InstrClass::SetBaseAddress,
        InstrClass::BranchLocality,
        InstrClass::Li,
        InstrClass::Alu,
        InstrClass::Mul,
        InstrClass::Div,
        InstrClass::Branch,
        InstrClass::Jump,
        InstrClass::MemLoad,
        InstrClass::MemStore,
        InstrClass::LoadBase,
        InstrClass::Halt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            InstrClass::PgasLoad => "pgas_load",
            InstrClass::PgasStore => "pgas_store",
            InstrClass::PgasIncImm => "pgas_inc_imm",
            InstrClass::PgasIncReg => "pgas_inc_reg",
            InstrClass::SetThreads => "set_threads",
            InstrClass::SetBaseAddress => "set_base_address",
            InstrClass::BranchLocality => "branch_locality",
            InstrClass::Li => "li",
            InstrClass::Alu => "alu",
            InstrClass::Mul => "mul",
            InstrClass::Div => "div",
            InstrClass::Branch => "branch",
            InstrClass::Jump => "jump",
            InstrClass::MemLoad => "mem_load",
            InstrClass::MemStore => "mem_store",
            InstrClass::LoadBase => "load_base",
            InstrClass::Halt => "halt",
        }
    }

    fn index(&self) -> usize {
        InstrClass::ALL.iter().position(|c| c == self).unwrap()
    }

    /// The counting class of an instruction. Mul, Div and Rem are split out
    /// of the generic ALU class so their cost can be overridden.
    pub fn of(i: &Instruction) -> InstrClass {
        match i {
            Instruction::PgasLoad { .. } => InstrClass::PgasLoad,
            Instruction::PgasStore { .. } => InstrClass::PgasStore,
            Instruction::PgasIncImm { .. } => InstrClass::PgasIncImm,
            Instruction::PgasIncReg { .. } => InstrClass::PgasIncReg,
            Instruction::SetThreads { .. } => InstrClass::SetThreads,
            Instruction::SetBaseAddress { .. } => InstrClass::SetBaseAddress,
            Instruction::BranchLocality { .. } => InstrClass::BranchLocality,
            Instruction::Li { .. } => InstrClass::Li,
            Instruction::Alu { op: AluOp::Mul, .. } => InstrClass::Mul,
            Instruction::Alu { op: AluOp::Div | AluOp::Rem, .. } => InstrClass::Div,
            Instruction::Alu { .. } | Instruction::AluImm { .. } => InstrClass::Alu,
            Instruction::BranchCmp { .. } => InstrClass::Branch,
            Instruction::Jump { .. } => InstrClass::Jump,
            Instruction::MemLoad { .. } => InstrClass::MemLoad,
            Instruction::MemStore { .. } => InstrClass::MemStore,
            Instruction::LoadBase { .. } => InstrClass::LoadBase,
            Instruction::Halt => InstrClass::Halt,
        }
    }
}

/// Per-class execution counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    counts: [u64; InstrClass::ALL.len()],
}

impl Counters {
    pub fn bump(&mut self, class: InstrClass) {
        self.counts[class.index()] += 1;
    }

    pub fn get(&self, class: InstrClass) -> u64 {
        self.counts[class.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &Counters) {
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += b;
        }
    }
}

/// Architectural state of one simulated SPMD thread.
#[derive(Debug, Clone)]
pub struct MachineState {
    pub int_regs: [u64; 32],
    pub float_regs: [u64; 32],
    pub threads_reg: Option<u64>,
    pub base_table: BaseAddressTable,
    pub cc: Option<LocalityCode>,
    pub pc: usize,
    pub counters: Counters,
    pub topology: Topology,
    pub halted: bool,
}

impl MachineState {
    pub fn new(topology: Topology, base_table: BaseAddressTable) -> MachineState {
        MachineState {
            int_regs: [0; 32],
            float_regs: [0; 32],
            threads_reg: None,
            base_table,
            cc: None,
            pc: 0,
            counters: Counters::default(),
            topology,
            halted: false,
        }
    }

    /// The SPMD thread this machine simulates.
    pub fn self_thread(&self) -> u64 {
        self.topology.self_thread
    }

    pub fn reg(&self, r: u8) -> u64 {
        if r == ZERO_REG {
            0
        } else {
            self.int_regs[r as usize]
        }
    }

    pub fn set_reg(&mut self, r: u8, v: u64) {
        if r != ZERO_REG {
            self.int_regs[r as usize] = v;
        }
    }

    fn pgas_increment(
        &mut self,
        ra: u8,
        rc: u8,
        esize_log2: u8,
        bsize_log2: u8,
        increment: i64,
    ) -> Result<()> {
        let threads = self.threads_reg.ok_or(Error::UninitializedThreads)?;
        let spec = ArraySpec::unbounded(1u64 << bsize_log2, 1u64 << esize_log2, threads);
        let p = unpack(PackedSharedPointer(self.reg(ra)));
        let q = increment_hw(&p, increment, &spec)?;
        self.set_reg(rc, pack(&q)?.0);
        self.cc = Some(classify_locality(&q, &self.topology)?);
        Ok(())
    }

    /// Executes one instruction, updating pc, cc and the counters.
    pub fn step(&mut self, mem: &mut PartitionedMemory, instr: &Instruction) -> Result<()> {
        let mut next_pc = self.pc as i64 + 1;
        match *instr {
            Instruction::Halt => {
                self.halted = true;
            }
            Instruction::PgasLoad { kind, ra, rb, disp } => {
                let p = unpack(PackedSharedPointer(self.reg(rb)));
                let addr = translate_lut(&p, &self.base_table)?.wrapping_add_signed(disp as i64);
                let value = mem.read(addr, kind.width())?;
                if kind.is_float() {
                    self.float_regs[ra as usize] = value;
                } else {
                    self.set_reg(ra, value);
                }
            }
            Instruction::PgasStore { kind, ra, rb, disp } => {
                let p = unpack(PackedSharedPointer(self.reg(rb)));
                let addr = translate_lut(&p, &self.base_table)?.wrapping_add_signed(disp as i64);
                let value = if kind.is_float() {
                    self.float_regs[ra as usize]
                } else {
                    self.reg(ra)
                };
                mem.write(addr, kind.width(), value)?;
            }
            Instruction::PgasIncImm { ra, rc, esize_log2, bsize_log2, increm_log2 } => {
                self.pgas_increment(ra, rc, esize_log2, bsize_log2, 1i64 << increm_log2)?;
            }
            Instruction::PgasIncReg { ra, rb, rc, esize_log2, bsize_log2 } => {
                let increment = self.reg(rb) as i64;
                self.pgas_increment(ra, rc, esize_log2, bsize_log2, increment)?;
            }
            Instruction::SetThreads { ra } => {
                let n = self.reg(ra);
                if n == 0 {
                    return Err(Error::Validation("set_threads with zero".into()));
                }
                self.threads_reg = Some(n);
            }
            Instruction::SetBaseAddress { ra, rb } => {
                let thread = self.reg(ra);
                let base = self.reg(rb);
                self.base_table.set(thread, base);
            }
            Instruction::BranchLocality { mask, offset } => {
                let cc = self.cc.ok_or_else(|| {
                    Error::IllegalInstruction("br_loc before any pgas increment set the cc".into())
                })?;
                if mask & (1 << (cc as u8)) != 0 {
                    next_pc += offset as i64;
                }
            }
            Instruction::Li { rd, imm } => {
                self.set_reg(rd, imm as i64 as u64);
            }
            Instruction::Alu { op, rd, rs1, rs2 } => {
                let a = self.reg(rs1);
                let b = self.reg(rs2);
                let v = match op {
                    AluOp::Add => a.wrapping_add(b),
                    AluOp::Sub => a.wrapping_sub(b),
                    AluOp::Mul => a.wrapping_mul(b),
                    AluOp::Div => {
                        if b == 0 {
                            return Err(Error::DivisionByZero);
                        }
                        (a as i64).div_euclid(b as i64) as u64
                    }
                    AluOp::Rem => {
                        if b == 0 {
                            return Err(Error::DivisionByZero);
                        }
                        (a as i64).rem_euclid(b as i64) as u64
                    }
                    AluOp::And => a & b,
                    AluOp::Or => a | b,
                    AluOp::Xor => a ^ b,
                    AluOp::Sll => a << (b & 63),
                    AluOp::Srl => a >> (b & 63),
                    AluOp::Slt => ((a as i64) < (b as i64)) as u64,
                };
                self.set_reg(rd, v);
            }
            Instruction::AluImm { op, rd, rs1, imm } => {
                let a = self.reg(rs1);
                let v = match op {
                    AluImmOp::Addi => a.wrapping_add_signed(imm as i64),
                    AluImmOp::Slli => a << ((imm as u64) & 63),
                    AluImmOp::Srli => a >> ((imm as u64) & 63),
                    AluImmOp::Andi => a & (imm as i64 as u64),
                };
                self.set_reg(rd, v);
            }
            Instruction::BranchCmp { op, rs1, rs2, offset } => {
                let a = self.reg(rs1);
                let b = self.reg(rs2);
                let taken = match op {
                    CmpOp::Eq => a == b,
                    CmpOp::Ne => a != b,
                    CmpOp::Lt => (a as i64) < (b as i64),
                };
                if taken {
                    next_pc += offset as i64;
                }
            }
            Instruction::Jump { offset } => {
                next_pc += offset as i64;
            }
            Instruction::MemLoad { rd, raddr, width, disp } => {
                let addr = self.reg(raddr).wrapping_add_signed(disp as i64);
                let value = mem.read(addr, width as u64)?;
                self.set_reg(rd, value);
            }
            Instruction::MemStore { rs, raddr, width, disp } => {
                let addr = self.reg(raddr).wrapping_add_signed(disp as i64);
                mem.write(addr, width as u64, self.reg(rs))?;
            }
            Instruction::LoadBase { rd, rs } => {
                let thread = self.reg(rs);
                let base = self.base_table.get(thread)?;
                self.set_reg(rd, base);
            }
        }
        if next_pc < 0 {
            return Err(Error::IllegalInstruction(format!(
                "branch to negative pc from {}",
                self.pc
            )));
        }
        self.pc = next_pc as usize;
        self.counters.bump(InstrClass::of(instr));
        Ok(())
    }

    /// Runs until halt, falling off the program end, or `fuel` steps.
    pub fn run(
        &mut self,
        mem: &mut PartitionedMemory,
        program: &[Instruction],
        fuel: u64,
        mut trace: Option<&mut dyn Write>,
    ) -> Result<()> {
        if program.is_empty() {
            return Err(Error::Validation("empty program".into()));
        }
        let mut steps = 0u64;
        while !self.halted && self.pc < program.len() {
            if steps >= fuel {
                return Err(Error::FuelExhausted(steps));
            }
            let pc = self.pc;
            let instr = program[pc];
            self.step(mem, &instr)?;
            steps += 1;
            if let Some(w) = trace.as_deref_mut() {
                write_trace_line(w, self, pc, &instr)?;
            }
        }
        self.halted = true;
        Ok(())
    }
}

fn write_trace_line(
    w: &mut dyn Write,
    m: &MachineState,
    pc: usize,
    instr: &Instruction,
) -> Result<()> {
    let cc = match m.cc {
        Some(c) => (c as u8).to_string(),
        None => "-".to_string(),
    };
    writeln!(
        w,
        "t{} {} {} cc={} steps={}",
        m.self_thread(),
        pc,
        instr,
        cc,
        m.counters.total()
    )?;
    Ok(())
}

/// Runs several machines over one shared memory, strictly round robin, one
/// instruction per turn. Deterministic by construction.
pub fn run_round_robin(
    machines: &mut [MachineState],
    mem: &mut PartitionedMemory,
    program: &[Instruction],
    fuel_per_machine: u64,
    mut trace: Option<&mut dyn Write>,
) -> Result<()> {
    if program.is_empty() {
        return Err(Error::Validation("empty program".into()));
    }
    let mut steps = vec![0u64; machines.len()];
    loop {
        let mut progressed = false;
        for (i, m) in machines.iter_mut().enumerate() {
            if m.halted || m.pc >= program.len() {
                m.halted = true;
                continue;
            }
            if steps[i] >= fuel_per_machine {
                return Err(Error::FuelExhausted(steps[i]));
            }
            let pc = m.pc;
            let instr = program[pc];
            m.step(mem, &instr)?;
            steps[i] += 1;
            progressed = true;
            if let Some(w) = trace.as_deref_mut() {
                write_trace_line(w, m, pc, &instr)?;
            }
        }
        if !progressed {
            return Ok(());
        }
    }
}
