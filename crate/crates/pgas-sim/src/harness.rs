//! Benchmark harness: builds kernel IR, runs it on simulated SPMD threads
//! in sw/hw mode, checks the output against a direct oracle, and applies an
//! instruction-count cost model.
//!
//! The cost model is atomic — one instruction per clock, every class costs
//! one cycle by default. A per-class override (in practice: division) lets
//! users explore non-unit penalties; such runs are reported as what they
//! are, a different cost model. Scheduling is strict round-robin, one
//! instruction per turn, so identical configurations produce identical
//! reports and traces.
//!
//! Kernels:
//!
//! * `traverse` — every thread walks the whole array, accumulating
//!   elements. Isolates pointer incrementation: one increment and one load
//!   per element, nothing else in the steady state.
//! * `vecadd` — elementwise `C = A + B`; each thread covers its own blocks,
//!   stepping by 1 inside a block and jumping over the other threads'
//!   blocks between them.
//! * `matmul` — n×n matrix product with one row per block, rows dealt
//!   round-robin over threads.

use crate::error::{Error, Result};
use crate::increment::Topology;
use crate::lowering::{lower, pointer_reg, LoweringReport, Mode, PtrId};
use crate::lowering::{IrOp, TraversalIr, IR_REG_BASE};
use crate::machine::{run_round_robin, Counters, InstrClass, MachineState};
use crate::memory::{PartitionedMemory, SharedArrayHandle};
use crate::pointer::{pack, ArraySpec};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

/// Environment variable naming the default directory for CSV/trace output.
pub const OUT_DIR_ENV: &str = "PGAS_SIM_OUT_DIR";

const FUEL: u64 = 1 << 28;

/// Reborrows an optional trace writer for a nested call.
fn reborrow<'a>(t: &'a mut Option<&mut dyn Write>) -> Option<&'a mut dyn Write> {
    match t {
        Some(w) => Some(&mut **w),
        None => None,
    }
}
const SEGMENT_SIZE: u64 = 1 << 20;
/// Block size used by the traverse and vecadd kernels.
pub const KERNEL_BLOCKSIZE: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Vecadd,
    Matmul,
    Traverse,
}

impl Kernel {
    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Vecadd => "vecadd",
            Kernel::Matmul => "matmul",
            Kernel::Traverse => "traverse",
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Kernel> {
        match s {
            "vecadd" => Ok(Kernel::Vecadd),
            "matmul" => Ok(Kernel::Matmul),
            "traverse" => Ok(Kernel::Traverse),
            other => Err(Error::Validation(format!("unknown kernel `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Sw,
    Hw,
    Both,
}

impl FromStr for RunMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<RunMode> {
        match s {
            "sw" => Ok(RunMode::Sw),
            "hw" => Ok(RunMode::Hw),
            "both" => Ok(RunMode::Both),
            other => Err(Error::Validation(format!("unknown mode `{other}`"))),
        }
    }
}

/// Cycles per instruction class. Defaults to 1 everywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostModel {
    costs: [u64; InstrClass::ALL.len()],
}

impl Default for CostModel {
    fn default() -> CostModel {
        CostModel {
            costs: [1; InstrClass::ALL.len()],
        }
    }
}

impl CostModel {
    pub fn set_cost(&mut self, class: InstrClass, cycles: u64) -> Result<()> {
        if cycles < 1 {
            return Err(Error::Validation(format!(
                "cost for {} must be at least 1",
                class.name()
            )));
        }
        self.costs[class as usize] = cycles;
        Ok(())
    }

    pub fn cost_of(&self, class: InstrClass) -> u64 {
        self.costs[class as usize]
    }

    pub fn cycles(&self, counts: &Counters) -> u64 {
        InstrClass::ALL
            .iter()
            .map(|&c| counts.get(c) * self.cost_of(c))
            .sum()
    }
}

/// What one mode of a run cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeStats {
    pub per_thread: Vec<Counters>,
    pub totals: Counters,
    pub cycles: u64,
    pub lowering: LoweringReport,
    /// The cost model the cycles were computed under.
    pub cost: CostModel,
}

impl ModeStats {
    /// Cycles attributed to one instruction class.
    pub fn class_cycles(&self, class: InstrClass) -> u64 {
        self.totals.get(class) * self.cost.cost_of(class)
    }
}

/// Per-run instruction/cycle accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub kernel: String,
    pub threads: u64,
    pub size: u64,
    pub sw: Option<ModeStats>,
    pub hw: Option<ModeStats>,
}

impl CostReport {
    /// sw cycles over hw cycles; present only for two-mode runs.
    pub fn speedup(&self) -> Option<f64> {
        match (&self.sw, &self.hw) {
            (Some(s), Some(h)) if h.cycles > 0 => Some(s.cycles as f64 / h.cycles as f64),
            _ => None,
        }
    }

    pub fn empty(kernel: &str, threads: u64, size: u64) -> CostReport {
        CostReport {
            kernel: kernel.to_string(),
            threads,
            size,
            sw: None,
            hw: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub kernel: Kernel,
    pub threads: u64,
    pub size: u64,
    pub mode: RunMode,
    pub cost: CostModel,
    /// Topology file contents; every machine parses it with its own thread
    /// as the observer. `None` means a flat SMP.
    pub topology: Option<String>,
}

impl RunConfig {
    pub fn new(kernel: Kernel, threads: u64, size: u64, mode: RunMode) -> RunConfig {
        RunConfig {
            kernel,
            threads,
            size,
            mode,
            cost: CostModel::default(),
            topology: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.threads < 1 {
            return Err(Error::Validation("thread count must be at least 1".into()));
        }
        if self.size < 1 {
            return Err(Error::Validation("size must be at least 1".into()));
        }
        match self.kernel {
            Kernel::Vecadd => {
                let chunk = KERNEL_BLOCKSIZE * self.threads;
                if !self.size.is_multiple_of(chunk) {
                    return Err(Error::Validation(format!(
                        "vecadd size must be a multiple of blocksize*threads = {chunk}"
                    )));
                }
            }
            Kernel::Matmul => {
                if !self.size.is_multiple_of(self.threads) {
                    return Err(Error::Validation(
                        "matmul dimension must be a multiple of the thread count".into(),
                    ));
                }
            }
            Kernel::Traverse => {}
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Kernel construction
// ---------------------------------------------------------------------------

fn build_ir(cfg: &RunConfig) -> Result<TraversalIr> {
    let nt = cfg.threads;
    let n = cfg.size;
    let bs = KERNEL_BLOCKSIZE;
    match cfg.kernel {
        Kernel::Traverse => {
            let spec = ArraySpec::new(bs, 8, n, nt)?;
            Ok(TraversalIr {
                arrays: vec![("A".into(), spec)],
                ops: vec![IrOp::Loop {
                    count: n,
                    body: vec![
                        IrOp::Load { dst: 0, ptr: PtrId(0), disp: 0 },
                        IrOp::Alu { op: crate::isa::AluOp::Add, dst: 1, lhs: 1, rhs: 0 },
                        IrOp::IncPtr { ptr: PtrId(0), amount: 1 },
                    ],
                }],
            })
        }
        Kernel::Vecadd => {
            let spec = ArraySpec::new(bs, 8, n, nt)?;
            let (a, b, c) = (PtrId(0), PtrId(1), PtrId(2));
            let jump = ((nt - 1) * bs) as i64;
            let body = vec![
                IrOp::Load { dst: 0, ptr: a, disp: 0 },
                IrOp::Load { dst: 1, ptr: b, disp: 0 },
                IrOp::Alu { op: crate::isa::AluOp::Add, dst: 2, lhs: 0, rhs: 1 },
                IrOp::Store { src: 2, ptr: c, disp: 0 },
                IrOp::IncPtr { ptr: a, amount: 1 },
                IrOp::IncPtr { ptr: b, amount: 1 },
                IrOp::IncPtr { ptr: c, amount: 1 },
            ];
            Ok(TraversalIr {
                arrays: vec![
                    ("A".into(), spec),
                    ("B".into(), spec),
                    ("C".into(), spec),
                ],
                ops: vec![IrOp::Loop {
                    count: n / (bs * nt),
                    body: vec![
                        IrOp::Loop { count: bs, body },
                        IrOp::IncPtr { ptr: a, amount: jump },
                        IrOp::IncPtr { ptr: b, amount: jump },
                        IrOp::IncPtr { ptr: c, amount: jump },
                    ],
                }],
            })
        }
        Kernel::Matmul => {
            // one row per block; row i lives on thread i % nt
            let spec = ArraySpec::new(n, 8, n * n, nt)?;
            let (a, b, c) = (PtrId(0), PtrId(1), PtrId(2));
            let ni = n as i64;
            let k_body = vec![
                IrOp::Load { dst: 0, ptr: a, disp: 0 },
                IrOp::Load { dst: 1, ptr: b, disp: 0 },
                IrOp::Alu { op: crate::isa::AluOp::Mul, dst: 2, lhs: 0, rhs: 1 },
                IrOp::Alu { op: crate::isa::AluOp::Add, dst: 3, lhs: 3, rhs: 2 },
                IrOp::IncPtr { ptr: a, amount: 1 },
                IrOp::IncPtr { ptr: b, amount: ni },
            ];
            let j_body = vec![
                IrOp::Alu { op: crate::isa::AluOp::Xor, dst: 3, lhs: 3, rhs: 3 },
                IrOp::Loop { count: n, body: k_body },
                IrOp::Store { src: 3, ptr: c, disp: 0 },
                IrOp::IncPtr { ptr: c, amount: 1 },
                IrOp::IncPtr { ptr: a, amount: -ni },
                IrOp::IncPtr { ptr: b, amount: -(ni * ni - 1) },
            ];
            Ok(TraversalIr {
                arrays: vec![
                    ("A".into(), spec),
                    ("B".into(), spec),
                    ("C".into(), spec),
                ],
                ops: vec![IrOp::Loop {
                    count: n / nt,
                    body: vec![
                        IrOp::Loop { count: n, body: j_body },
                        IrOp::IncPtr { ptr: a, amount: (nt as i64) * ni },
                        IrOp::IncPtr { ptr: b, amount: -ni },
                        IrOp::IncPtr { ptr: c, amount: (nt as i64 - 1) * ni },
                    ],
                }],
            })
        }
    }
}

/// Element index where thread `t`'s copy of pointer `ptr` starts.
fn start_index(cfg: &RunConfig, ptr: usize, t: u64) -> u64 {
    match cfg.kernel {
        Kernel::Traverse => 0,
        Kernel::Vecadd => t * KERNEL_BLOCKSIZE,
        // A and C start at the thread's first row; B at the top-left corner
        Kernel::Matmul => {
            if ptr == 1 {
                0
            } else {
                t * cfg.size
            }
        }
    }
}

fn input_a(kernel: Kernel, n: u64, i: u64) -> u64 {
    match kernel {
        Kernel::Matmul => (i / n + 2 * (i % n) + 1) % 17,
        _ => 3 * i + 1,
    }
}

fn input_b(kernel: Kernel, n: u64, i: u64) -> u64 {
    match kernel {
        Kernel::Matmul => (3 * (i / n) + i % n + 2) % 13,
        _ => 7 * i + 2,
    }
}

fn init_data(
    cfg: &RunConfig,
    mem: &mut PartitionedMemory,
    handles: &[SharedArrayHandle],
) -> Result<()> {
    let table = mem.base_table();
    let write_all = |mem: &mut PartitionedMemory, h: &SharedArrayHandle, f: &dyn Fn(u64) -> u64| -> Result<()> {
        for i in 0..h.spec.numelems {
            mem.write(h.element_addr(i, &table)?, h.access_width(), f(i))?;
        }
        Ok(())
    };
    match cfg.kernel {
        Kernel::Traverse => {
            write_all(mem, &handles[0], &|i| input_a(cfg.kernel, cfg.size, i))?;
        }
        Kernel::Vecadd | Kernel::Matmul => {
            write_all(mem, &handles[0], &|i| input_a(cfg.kernel, cfg.size, i))?;
            write_all(mem, &handles[1], &|i| input_b(cfg.kernel, cfg.size, i))?;
        }
    }
    Ok(())
}

/// Checks kernel output against an independent direct computation.
fn verify(
    cfg: &RunConfig,
    machines: &[MachineState],
    mem: &PartitionedMemory,
    handles: &[SharedArrayHandle],
) -> Result<()> {
    let table = mem.base_table();
    let n = cfg.size;
    match cfg.kernel {
        Kernel::Traverse => {
            let expect: u64 = (0..n).fold(0u64, |s, i| s.wrapping_add(input_a(cfg.kernel, n, i)));
            for m in machines {
                let got = m.reg(IR_REG_BASE + 1);
                if got != expect {
                    return Err(Error::KernelMismatch(format!(
                        "traverse: thread {} accumulated {got}, expected {expect}",
                        m.self_thread()
                    )));
                }
            }
        }
        Kernel::Vecadd => {
            let h = &handles[2];
            for i in 0..n {
                let expect =
                    input_a(cfg.kernel, n, i).wrapping_add(input_b(cfg.kernel, n, i));
                let got = mem.read(h.element_addr(i, &table)?, h.access_width())?;
                if got != expect {
                    return Err(Error::KernelMismatch(format!(
                        "vecadd: C[{i}] = {got}, expected {expect}"
                    )));
                }
            }
        }
        Kernel::Matmul => {
            let h = &handles[2];
            for i in 0..n {
                for j in 0..n {
                    let expect = (0..n).fold(0u64, |s, k| {
                        s.wrapping_add(
                            input_a(cfg.kernel, n, i * n + k)
                                .wrapping_mul(input_b(cfg.kernel, n, k * n + j)),
                        )
                    });
                    let got = mem.read(h.element_addr(i * n + j, &table)?, h.access_width())?;
                    if got != expect {
                        return Err(Error::KernelMismatch(format!(
                            "matmul: C[{i}][{j}] = {got}, expected {expect}"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Runs one mode of the configured kernel end to end and accounts it.
pub fn execute_mode(
    cfg: &RunConfig,
    mode: Mode,
    mut trace: Option<&mut dyn Write>,
) -> Result<ModeStats> {
    cfg.validate()?;
    let ir = build_ir(cfg)?;
    let lowered = lower(&ir, mode)?;
    let mut mem = PartitionedMemory::new(cfg.threads, SEGMENT_SIZE)?;
    let handles: Vec<SharedArrayHandle> = ir
        .arrays
        .iter()
        .map(|(_, s)| mem.alloc_shared(*s))
        .collect::<Result<_>>()?;
    init_data(cfg, &mut mem, &handles)?;
    let table = mem.base_table();
    let mut machines: Vec<MachineState> = (0..cfg.threads)
        .map(|t| -> Result<MachineState> {
            let topo = match &cfg.topology {
                Some(text) => Topology::parse(text, t)?,
                None => Topology::single_smp(t, cfg.threads),
            };
            let mut m = MachineState::new(topo, table.clone());
            for (id, h) in handles.iter().enumerate() {
                let p = h.element_ptr(start_index(cfg, id, t))?;
                m.set_reg(pointer_reg(PtrId(id)), pack(&p)?.0);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    if let Some(w) = trace.as_mut() {
        writeln!(
            w,
            "# kernel={} mode={} threads={} size={}",
            cfg.kernel.name(),
            if mode == Mode::Hw { "hw" } else { "sw" },
            cfg.threads,
            cfg.size
        )?;
    }
    run_round_robin(&mut machines, &mut mem, &lowered.program, FUEL, reborrow(&mut trace))?;
    verify(cfg, &machines, &mem, &handles)?;

    let per_thread: Vec<Counters> = machines.iter().map(|m| m.counters).collect();
    let mut totals = Counters::default();
    for c in &per_thread {
        totals.merge(c);
    }
    let cycles = cfg.cost.cycles(&totals);
    Ok(ModeStats {
        per_thread,
        totals,
        cycles,
        lowering: lowered.report,
        cost: cfg.cost.clone(),
    })
}

/// Runs the configured kernel in the requested mode(s), verifying each run
/// against the oracle; no report is produced for a failing run.
pub fn run_kernel(cfg: &RunConfig, mut trace: Option<&mut dyn Write>) -> Result<CostReport> {
    let mut report = CostReport::empty(cfg.kernel.name(), cfg.threads, cfg.size);
    if matches!(cfg.mode, RunMode::Sw | RunMode::Both) {
        report.sw = Some(execute_mode(cfg, Mode::Sw, reborrow(&mut trace))?);
    }
    if matches!(cfg.mode, RunMode::Hw | RunMode::Both) {
        report.hw = Some(execute_mode(cfg, Mode::Hw, reborrow(&mut trace))?);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

/// Renders a report as CSV: one row per instruction class per mode plus a
/// `total` row, fixed column and row order, header first. The speedup
/// column repeats on every row of a two-mode run and is empty otherwise.
pub fn csv_string(report: &CostReport) -> String {
    let mut out = String::from("kernel,mode,threads,size,class,count,cycles,speedup\n");
    let speedup = report
        .speedup()
        .map(|s| format!("{s:.4}"))
        .unwrap_or_default();
    for (mode, stats) in [("sw", &report.sw), ("hw", &report.hw)] {
        let Some(stats) = stats else { continue };
        for &class in InstrClass::ALL.iter() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                report.kernel,
                mode,
                report.threads,
                report.size,
                class.name(),
                stats.totals.get(class),
                stats.class_cycles(class),
                speedup
            ));
        }
        out.push_str(&format!(
            "{},{},{},{},total,{},{},{}\n",
            report.kernel,
            mode,
            report.threads,
            report.size,
            stats.totals.total(),
            stats.cycles,
            speedup
        ));
    }
    out
}

/// Writes the CSV rendering of a report to `path`.
pub fn emit_csv(report: &CostReport, path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(report))?;
    Ok(())
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} threads={} size={}", self.kernel, self.threads, self.size)?;
        if let Some(s) = &self.sw {
            write!(f, " sw_cycles={}", s.cycles)?;
        }
        if let Some(h) = &self.hw {
            write!(f, " hw_cycles={}", h.cycles)?;
        }
        if let Some(sp) = self.speedup() {
            write!(f, " speedup={sp:.4}")?;
        }
        Ok(())
    }
}
