//! Acceptance gate: one test per criterion, each ending in a PASS line.
//!
//! 1. translation exactness (worked base + offset example)
//! 2. block-cyclic layout fidelity
//! 3. increment oracle equivalence, exhaustive over power-of-two shapes
//! 4. increment composition law, randomized
//! 5. ISA encode/decode roundtrip, randomized plus boundary values
//! 6. sw/hw dual-path execution equivalence on random IR programs
//! 7. traversal instruction-count reduction and speedup
//! 8. kernel correctness vs direct oracles across thread counts
//! 9. software-fallback accounting for a non-power-of-2 element size

use pgas_sim::harness::{run_kernel, Kernel, RunConfig, RunMode};
use pgas_sim::increment::{increment_hw, increment_sw, Topology};
use pgas_sim::isa::{
    decode, encode, AccessKind, AluImmOp, AluOp, CmpOp, Instruction,
};
use pgas_sim::lowering::{
    lower, lower_software_increment, pointer_reg, IrOp, Mode, PtrId, TraversalIr,
};
use pgas_sim::machine::{run_round_robin, InstrClass, MachineState};
use pgas_sim::memory::PartitionedMemory;
use pgas_sim::pointer::{canonical_map, pack, ArraySpec};
use pgas_sim::translate::{translate_lut, BaseAddressTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pass(n: u32, what: &str) {
    println!("acceptance criterion {n} ({what}): PASS");
}

#[test]
fn criterion_1_translation_exactness() {
    let mut table = BaseAddressTable::default();
    table.set(11, 0xff0b_0000_0000);
    let p = pgas_sim::pointer::SharedPointer { thread: 11, phase: 0, va: 0x3f00 };
    assert_eq!(translate_lut(&p, &table).unwrap(), 0xff0b_0000_3f00);
    pass(1, "translation exactness");
}

#[test]
fn criterion_2_layout_fidelity() {
    let spec = ArraySpec::new(4, 4, 32, 4).unwrap();
    let threads: Vec<u64> = (0..32)
        .map(|i| canonical_map(i, &spec).unwrap().thread)
        .collect();
    let expect: Vec<u64> = (0..32).map(|i| (i / 4) % 4).collect();
    assert_eq!(threads, expect);
    assert_eq!(&threads[..9], &[0, 0, 0, 0, 1, 1, 1, 1, 2]);
    pass(2, "block-cyclic layout fidelity");
}

#[test]
fn criterion_3_increment_oracle_equivalence() {
    // all power-of-two shape combinations at a mid-size element count,
    // all canonical start indices crossed with all in-range increments
    let mut checked = 0u64;
    for bs in [1u64, 2, 4, 8] {
        for nt in [1u64, 2, 4, 8] {
            for es in [1u64, 2, 4, 8] {
                let numelems = 256;
                let spec = ArraySpec::new(bs, es, numelems, nt).unwrap();
                for start in 0..numelems {
                    let p = canonical_map(start, &spec).unwrap();
                    for target in 0..numelems {
                        let inc = target as i64 - start as i64;
                        let sw = increment_sw(&p, inc, &spec).unwrap();
                        assert_eq!(sw, canonical_map(target, &spec).unwrap());
                        assert_eq!(increment_hw(&p, inc, &spec).unwrap(), sw);
                        checked += 1;
                    }
                }
            }
        }
    }
    // one shape at the full element count
    let spec = ArraySpec::new(4, 8, 1024, 4).unwrap();
    for start in 0..1024 {
        let p = canonical_map(start, &spec).unwrap();
        for target in 0..1024 {
            let inc = target as i64 - start as i64;
            let sw = increment_sw(&p, inc, &spec).unwrap();
            assert_eq!(sw, canonical_map(target, &spec).unwrap());
            assert_eq!(increment_hw(&p, inc, &spec).unwrap(), sw);
            checked += 1;
        }
    }
    assert!(checked > 4_000_000);
    pass(3, "increment oracle equivalence");
}

#[test]
fn criterion_4_composition_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0417);
    for _ in 0..100_000 {
        let bs = 1 << rng.gen_range(0..4);
        let nt = 1 << rng.gen_range(0..4);
        let es = 1 << rng.gen_range(0..4);
        let numelems = rng.gen_range(1..512);
        let spec = ArraySpec::new(bs, es, numelems, nt).unwrap();
        let start = rng.gen_range(0..numelems);
        let end = rng.gen_range(0..numelems);
        let mid = rng.gen_range(0..numelems);
        let a = mid as i64 - start as i64;
        let b = end as i64 - mid as i64;
        let p = canonical_map(start, &spec).unwrap();
        let stepwise =
            increment_sw(&increment_sw(&p, a, &spec).unwrap(), b, &spec).unwrap();
        assert_eq!(stepwise, increment_sw(&p, a + b, &spec).unwrap());
    }
    pass(4, "increment composition law");
}

fn random_instruction(rng: &mut ChaCha8Rng) -> Instruction {
    let reg = |r: &mut ChaCha8Rng| r.gen_range(0..32u8);
    let disp = |r: &mut ChaCha8Rng| r.gen_range(-1024..1024i16);
    let kind = |r: &mut ChaCha8Rng| AccessKind::ALL[r.gen_range(0..AccessKind::ALL.len())];
    let log2 = |r: &mut ChaCha8Rng| r.gen_range(0..32u8);
    let width = |r: &mut ChaCha8Rng| [1u8, 2, 4, 8][r.gen_range(0..4)];
    match rng.gen_range(0..16) {
        0 => Instruction::PgasLoad { kind: kind(rng), ra: reg(rng), rb: reg(rng), disp: disp(rng) },
        1 => Instruction::PgasStore { kind: kind(rng), ra: reg(rng), rb: reg(rng), disp: disp(rng) },
        2 => Instruction::PgasIncImm {
            ra: reg(rng), rc: reg(rng),
            esize_log2: log2(rng), bsize_log2: log2(rng), increm_log2: log2(rng),
        },
        3 => Instruction::PgasIncReg {
            ra: reg(rng), rb: reg(rng), rc: reg(rng),
            esize_log2: log2(rng), bsize_log2: log2(rng),
        },
        4 => Instruction::SetThreads { ra: reg(rng) },
        5 => Instruction::SetBaseAddress { ra: reg(rng), rb: reg(rng) },
        6 => Instruction::BranchLocality {
            mask: rng.gen_range(0..16),
            offset: rng.gen_range(-(1 << 21)..1 << 21),
        },
        7 => Instruction::Li { rd: reg(rng), imm: rng.gen_range(-(1 << 20)..1 << 20) },
        8 => Instruction::Alu {
            op: AluOp::ALL[rng.gen_range(0..AluOp::ALL.len())],
            rd: reg(rng), rs1: reg(rng), rs2: reg(rng),
        },
        9 => Instruction::AluImm {
            op: AluImmOp::ALL[rng.gen_range(0..AluImmOp::ALL.len())],
            rd: reg(rng), rs1: reg(rng),
            imm: rng.gen_range(-4096..4096),
        },
        10 => Instruction::BranchCmp {
            op: CmpOp::ALL[rng.gen_range(0..CmpOp::ALL.len())],
            rs1: reg(rng), rs2: reg(rng),
            offset: rng.gen_range(-4096..4096),
        },
        11 => Instruction::Jump { offset: rng.gen_range(-(1 << 25)..1 << 25) },
        12 => Instruction::MemLoad { rd: reg(rng), raddr: reg(rng), width: width(rng), disp: disp(rng) },
        13 => Instruction::MemStore { rs: reg(rng), raddr: reg(rng), width: width(rng), disp: disp(rng) },
        14 => Instruction::LoadBase { rd: reg(rng), rs: reg(rng) },
        _ => Instruction::Halt,
    }
}

#[test]
fn criterion_5_isa_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x15a);
    for _ in 0..20_000 {
        let i = random_instruction(&mut rng);
        assert_eq!(decode(encode(&i).unwrap()).unwrap(), i, "{i}");
    }
    // field boundary values
    let boundary = [
        Instruction::PgasLoad { kind: AccessKind::T, ra: 31, rb: 31, disp: -1024 },
        Instruction::PgasStore { kind: AccessKind::B, ra: 0, rb: 0, disp: 1023 },
        Instruction::PgasIncImm { ra: 31, rc: 0, esize_log2: 31, bsize_log2: 0, increm_log2: 31 },
        Instruction::PgasIncReg { ra: 0, rb: 31, rc: 31, esize_log2: 0, bsize_log2: 31 },
        Instruction::BranchLocality { mask: 15, offset: -(1 << 21) },
        Instruction::BranchLocality { mask: 0, offset: (1 << 21) - 1 },
        Instruction::Li { rd: 31, imm: -(1 << 20) },
        Instruction::Li { rd: 0, imm: (1 << 20) - 1 },
        Instruction::AluImm { op: AluImmOp::Andi, rd: 31, rs1: 0, imm: -4096 },
        Instruction::BranchCmp { op: CmpOp::Lt, rs1: 0, rs2: 31, offset: 4095 },
        Instruction::Jump { offset: -(1 << 25) },
        Instruction::Jump { offset: (1 << 25) - 1 },
        Instruction::MemLoad { rd: 31, raddr: 31, width: 8, disp: -1024 },
        Instruction::MemStore { rs: 0, raddr: 0, width: 1, disp: 1023 },
        Instruction::Halt,
    ];
    for i in &boundary {
        assert_eq!(decode(encode(i).unwrap()).unwrap(), *i, "{i}");
    }
    pass(5, "ISA encode/decode roundtrip");
}

// --- criterion 6 -----------------------------------------------------------

/// Dynamically simulates pointer indices to keep every access in bounds.
fn simulate_ok(ops: &[IrOp], idx: &mut Vec<i64>, arrays: &[(String, ArraySpec)]) -> bool {
    for op in ops {
        match op {
            IrOp::IncPtr { ptr, amount } => {
                idx[ptr.0] += amount;
                let n = arrays[ptr.0].1.numelems as i64;
                if idx[ptr.0] < 0 || idx[ptr.0] > n {
                    return false;
                }
            }
            IrOp::Load { ptr, .. } | IrOp::Store { ptr, .. } => {
                if idx[ptr.0] >= arrays[ptr.0].1.numelems as i64 {
                    return false;
                }
            }
            IrOp::Alu { .. } => {}
            IrOp::Loop { count, body } => {
                for _ in 0..*count {
                    if !simulate_ok(body, idx, arrays) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

fn random_ops(rng: &mut ChaCha8Rng, narr: usize, depth: usize, len: usize) -> Vec<IrOp> {
    (0..len)
        .map(|_| {
            let ptr = PtrId(rng.gen_range(0..narr));
            match rng.gen_range(0..if depth < 2 { 10 } else { 8 }) {
                0..=2 => IrOp::IncPtr {
                    ptr,
                    amount: [-3, -1, 1, 1, 2, 3, 4, 5, 8][rng.gen_range(0..9)],
                },
                3..=4 => IrOp::Load { dst: rng.gen_range(0..4), ptr, disp: 0 },
                5 => IrOp::Store { src: rng.gen_range(0..4), ptr, disp: 0 },
                6..=7 => IrOp::Alu {
                    op: [AluOp::Add, AluOp::Sub, AluOp::Xor, AluOp::Or][rng.gen_range(0..4)],
                    dst: rng.gen_range(0..4),
                    lhs: rng.gen_range(0..4),
                    rhs: rng.gen_range(0..4),
                },
                _ => {
                    let count = rng.gen_range(1..5);
                    let len = rng.gen_range(1..4);
                    IrOp::Loop {
                        count,
                        body: random_ops(rng, narr, depth + 1, len),
                    }
                }
            }
        })
        .collect()
}

fn random_ir(rng: &mut ChaCha8Rng) -> TraversalIr {
    let nt = [1u64, 2, 3, 4][rng.gen_range(0..4)];
    let narr = rng.gen_range(1..3);
    let arrays: Vec<(String, ArraySpec)> = (0..narr)
        .map(|k| {
            let bs = [1u64, 2, 3, 4, 8][rng.gen_range(0..5)];
            let es = [1u64, 2, 4, 8][rng.gen_range(0..4)];
            let numelems = rng.gen_range(32..64);
            (
                format!("A{k}"),
                ArraySpec::new(bs, es, numelems, nt).unwrap(),
            )
        })
        .collect();
    loop {
        let len = rng.gen_range(3..9);
        let ops = random_ops(rng, narr, 0, len);
        let mut idx = vec![0i64; narr];
        if simulate_ok(&ops, &mut idx, &arrays) {
            return TraversalIr { arrays, ops };
        }
    }
}

/// Runs a lowered IR on fresh memory and returns all segment dumps.
fn run_ir(ir: &TraversalIr, mode: Mode) -> Vec<String> {
    const SEG: u64 = 1 << 14;
    let nt = ir.numthreads();
    let mut mem = PartitionedMemory::new(nt, SEG).unwrap();
    let handles: Vec<_> = ir
        .arrays
        .iter()
        .map(|(_, s)| mem.alloc_shared(*s).unwrap())
        .collect();
    let table = mem.base_table();
    for h in &handles {
        for i in 0..h.spec.numelems {
            let addr = h.element_addr(i, &table).unwrap();
            mem.write(addr, h.access_width(), (i * 7 + 13) % 251).unwrap();
        }
    }
    let low = lower(ir, mode).unwrap();
    let mut machines: Vec<MachineState> = (0..nt)
        .map(|t| {
            let mut m = MachineState::new(Topology::single_smp(t, nt), table.clone());
            for (id, h) in handles.iter().enumerate() {
                let p = h.element_ptr(0).unwrap();
                m.set_reg(pointer_reg(PtrId(id)), pack(&p).unwrap().0);
            }
            m
        })
        .collect();
    run_round_robin(&mut machines, &mut mem, &low.program, 1 << 22, None).unwrap();
    (0..nt).map(|t| mem.hexdump(t, 0, SEG).unwrap()).collect()
}

#[test]
fn criterion_6_dual_path_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e6);
    for case in 0..120 {
        let ir = random_ir(&mut rng);
        let sw = run_ir(&ir, Mode::Sw);
        let hw = run_ir(&ir, Mode::Hw);
        assert_eq!(sw, hw, "case {case} diverged:\n{ir}");
    }
    pass(6, "dual-path execution equivalence");
}

#[test]
fn criterion_7_instruction_count_reduction() {
    let elems = 256u64;
    let report = run_kernel(
        &RunConfig::new(Kernel::Traverse, 1, elems, RunMode::Both),
        None,
    )
    .unwrap();
    let hw = report.hw.as_ref().unwrap();
    let sw = report.sw.as_ref().unwrap();
    // hw: exactly one increment instruction per element
    assert_eq!(
        hw.totals.get(InstrClass::PgasIncImm) + hw.totals.get(InstrClass::PgasIncReg),
        elems
    );
    // sw: the straight-line expansion is at least 10 instructions long,
    // paid once per element (witnessed by its two divisions + two modulos)
    let spec = ArraySpec::new(4, 8, elems, 1).unwrap();
    assert!(lower_software_increment(8, 1, &spec).len() >= 10);
    assert_eq!(sw.totals.get(InstrClass::Div), 4 * elems);
    let speedup = report.speedup().unwrap();
    assert!(speedup >= 5.0, "speedup {speedup}");
    pass(7, "instruction-count reduction");
}

#[test]
fn criterion_8_kernel_correctness() {
    for threads in [1u64, 2, 4] {
        for mode in [RunMode::Sw, RunMode::Hw] {
            run_kernel(&RunConfig::new(Kernel::Vecadd, threads, 1024, mode), None)
                .unwrap_or_else(|e| panic!("vecadd threads={threads}: {e}"));
            run_kernel(&RunConfig::new(Kernel::Matmul, threads, 16, mode), None)
                .unwrap_or_else(|e| panic!("matmul threads={threads}: {e}"));
        }
    }
    pass(8, "kernel correctness");
}

#[test]
fn criterion_9_fallback_accounting() {
    // one odd-shaped pointer among well-shaped ones; only its ops fall back
    let odd = ArraySpec::new(4, 56016, 16, 4).unwrap();
    let good = ArraySpec::new(4, 8, 16, 4).unwrap();
    let ir = TraversalIr {
        arrays: vec![("records".into(), odd), ("B".into(), good)],
        ops: vec![
            IrOp::IncPtr { ptr: PtrId(0), amount: 1 },
            IrOp::IncPtr { ptr: PtrId(1), amount: 1 },
            IrOp::Loop {
                count: 4,
                body: vec![
                    IrOp::IncPtr { ptr: PtrId(0), amount: 2 },
                    IrOp::IncPtr { ptr: PtrId(1), amount: 4 },
                ],
            },
        ],
    };
    let low = lower(&ir, Mode::Hw).unwrap();
    assert_eq!(low.report.sw_fallback, 2); // both static ops of `records`
    assert_eq!(low.report.hw_lowered, 2); // both static ops of `B`
    assert_eq!(low.report.reasons.len(), 2);
    for (name, cause) in &low.report.reasons {
        assert_eq!(name, "records");
        assert_eq!(cause, "non-power-of-2 element size");
    }
    pass(9, "software-fallback accounting");
}
