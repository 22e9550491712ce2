//! Shared pointer incrementation: the general software path, the shift/mask
//! hardware fast path, and locality classification of the resulting pointer.
//!
//! The software path is the reference arithmetic, spelled out with divisions
//! and modulos. The hardware path computes the same function using only adds,
//! shifts and masks, which is possible when the block size, element size and
//! thread count are all powers of two; otherwise it refuses and the caller
//! (the lowering layer) falls back to the software sequence.
//!
//! ```
//! use pgas_sim::pointer::{ArraySpec, SharedPointer};
//! use pgas_sim::increment::{increment_sw, increment_hw};
//!
//! let spec = ArraySpec::unbounded(4, 4, 4);
//! let p = SharedPointer::new(1, 3, 0x100);
//! let q = increment_sw(&p, 2, &spec).unwrap();
//! assert_eq!(q, SharedPointer::new(2, 1, 0xF8));
//! assert_eq!(increment_hw(&p, 2, &spec).unwrap(), q);
//! ```

use crate::error::{Error, Result};
use crate::pointer::{ArraySpec, SharedPointer};
use std::collections::BTreeMap;

/// Advances a shared pointer by `increment` elements through the block-cyclic
/// layout, updating all three fields.
///
/// Division and modulo use Euclidean (floor) semantics so that negative
/// increments keep the phase in `[0, blocksize)` and the operation composes:
/// incrementing by `a` then `b` equals incrementing by `a + b`.
pub fn increment_sw(p: &SharedPointer, increment: i64, spec: &ArraySpec) -> Result<SharedPointer> {
    let blocksize = spec.blocksize as i64;
    let numthreads = spec.numthreads as i64;
    let elemsize = spec.elemsize as i64;

    let phinc = p.phase as i64 + increment;
    let thinc = phinc.div_euclid(blocksize);
    let nphase = phinc.rem_euclid(blocksize);
    let blockinc = (p.thread as i64 + thinc).div_euclid(numthreads);
    let nthread = (p.thread as i64 + thinc).rem_euclid(numthreads);
    let eaddrinc = (nphase - p.phase as i64) + blockinc * blocksize;
    let nva = p.va as i64 + eaddrinc * elemsize;
    if nva < 0 {
        return Err(Error::VaUnderflow);
    }
    Ok(SharedPointer {
        thread: nthread as u64,
        phase: nphase as u64,
        va: nva as u64,
    })
}

/// The hardware fast path: bit-for-bit the same result as [`increment_sw`],
/// computed with adds, shifts and masks only.
///
/// Requires a hardware-eligible spec (blocksize, elemsize, numthreads all
/// powers of two). Any increment value is accepted; this mirrors the
/// register form of the increment instruction.
pub fn increment_hw(p: &SharedPointer, increment: i64, spec: &ArraySpec) -> Result<SharedPointer> {
    if !spec.hw_eligible() {
        return Err(Error::HwUnsupported(format!(
            "blocksize {}, elemsize {}, numthreads {} must all be powers of two",
            spec.blocksize, spec.elemsize, spec.numthreads
        )));
    }
    let bs_log2 = spec.blocksize.trailing_zeros();
    let es_log2 = spec.elemsize.trailing_zeros();
    let nt_log2 = spec.numthreads.trailing_zeros();
    let bs_mask = spec.blocksize as i64 - 1;
    let nt_mask = spec.numthreads as i64 - 1;

    // Arithmetic shift right is floor division and AND with the mask is the
    // Euclidean modulo for power-of-two divisors, so negative increments
    // behave exactly as in the software path. No division below.
    let phinc = p.phase as i64 + increment;
    let thinc = phinc >> bs_log2;
    let nphase = phinc & bs_mask;
    let tsum = p.thread as i64 + thinc;
    let blockinc = tsum >> nt_log2;
    let nthread = tsum & nt_mask;
    let eaddrinc = (nphase - p.phase as i64) + (blockinc << bs_log2);
    let nva = p.va as i64 + (eaddrinc << es_log2);
    if nva < 0 {
        return Err(Error::VaUnderflow);
    }
    Ok(SharedPointer {
        thread: nthread as u64,
        phase: nphase as u64,
        va: nva as u64,
    })
}

/// Hardware locality classification of a pointer's target, in priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LocalityCode {
    /// The pointed data is owned by the current thread.
    Local = 0,
    /// Owned by a thread on the same memory controller.
    SameController = 1,
    /// Same node, different controller; reachable by shared loads/stores.
    SameNode = 2,
    /// Located on another node.
    OtherNode = 3,
}

impl LocalityCode {
    pub fn from_code(c: u64) -> Option<LocalityCode> {
        match c {
            0 => Some(LocalityCode::Local),
            1 => Some(LocalityCode::SameController),
            2 => Some(LocalityCode::SameNode),
            3 => Some(LocalityCode::OtherNode),
            _ => None,
        }
    }
}

/// Placement of threads on memory controllers and nodes, from the point of
/// view of one thread.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub self_thread: u64,
    pub controller_of: BTreeMap<u64, u64>,
    pub node_of: BTreeMap<u64, u64>,
}

impl Topology {
    /// Everything on one controller of one node: a single SMP.
    pub fn single_smp(self_thread: u64, numthreads: u64) -> Topology {
        let controller_of = (0..numthreads).map(|t| (t, 0)).collect();
        let node_of = (0..numthreads).map(|t| (t, 0)).collect();
        Topology {
            self_thread,
            controller_of,
            node_of,
        }
    }

    /// Same placement seen from a different thread.
    pub fn as_seen_by(&self, self_thread: u64) -> Topology {
        Topology {
            self_thread,
            ..self.clone()
        }
    }

    /// Parses the plain-text topology config.
    ///
    /// One thread per line: `<thread> <controller> <node>`, whitespace
    /// separated; `#` starts a comment. The viewing thread is supplied by
    /// the caller, not the file.
    pub fn parse(text: &str, self_thread: u64) -> Result<Topology> {
        let mut controller_of = BTreeMap::new();
        let mut node_of = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected `<thread> <controller> <node>`, got `{line}`"),
                });
            }
            let parse_u64 = |s: &str| -> Result<u64> {
                s.parse().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    msg: format!("not an unsigned integer: `{s}`"),
                })
            };
            let t = parse_u64(fields[0])?;
            controller_of.insert(t, parse_u64(fields[1])?);
            node_of.insert(t, parse_u64(fields[2])?);
        }
        Ok(Topology {
            self_thread,
            controller_of,
            node_of,
        })
    }
}

/// Classifies where a pointer's target lives relative to the viewing thread.
pub fn classify_locality(p: &SharedPointer, topo: &Topology) -> Result<LocalityCode> {
    if p.thread == topo.self_thread {
        return Ok(LocalityCode::Local);
    }
    let ctrl = |t: u64| -> Result<u64> {
        topo.controller_of
            .get(&t)
            .copied()
            .ok_or(Error::UnknownThread(t))
    };
    let node = |t: u64| -> Result<u64> {
        topo.node_of.get(&t).copied().ok_or(Error::UnknownThread(t))
    };
    if ctrl(p.thread)? == ctrl(topo.self_thread)? {
        return Ok(LocalityCode::SameController);
    }
    if node(p.thread)? == node(topo.self_thread)? {
        return Ok(LocalityCode::SameNode);
    }
    Ok(LocalityCode::OtherNode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointer::{canonical_index, canonical_map, ArraySpec};
    use proptest::prelude::*;

    #[test]
    fn sw_hand_trace_mid_block() {
        let spec = ArraySpec::unbounded(4, 4, 4);
        let p = SharedPointer::new(1, 3, 0x100);
        assert_eq!(
            increment_sw(&p, 2, &spec).unwrap(),
            SharedPointer::new(2, 1, 0xF8)
        );
    }

    #[test]
    fn sw_hand_trace_wrap_to_next_local_block() {
        let spec = ArraySpec::unbounded(4, 4, 4);
        let p = SharedPointer::new(3, 3, 12);
        assert_eq!(
            increment_sw(&p, 1, &spec).unwrap(),
            SharedPointer::new(0, 0, 16)
        );
    }

    #[test]
    fn sw_zero_increment_is_identity() {
        let spec = ArraySpec::unbounded(4, 4, 4);
        let p = SharedPointer::new(2, 1, 40);
        assert_eq!(increment_sw(&p, 0, &spec).unwrap(), p);
    }

    #[test]
    fn hw_matches_sw_on_hand_trace() {
        let spec = ArraySpec::unbounded(4, 4, 4);
        let p = SharedPointer::new(1, 3, 0x100);
        assert_eq!(
            increment_hw(&p, 2, &spec).unwrap(),
            increment_sw(&p, 2, &spec).unwrap()
        );
    }

    #[test]
    fn hw_rejects_non_pow2() {
        let spec = ArraySpec::unbounded(3, 4, 4);
        let p = SharedPointer::new(0, 0, 0);
        assert!(matches!(
            increment_hw(&p, 1, &spec),
            Err(Error::HwUnsupported(_))
        ));
    }

    #[test]
    fn hw_sw_exhaustive_pow2_sweep() {
        for bs in [1u64, 2, 4, 8] {
            for nt in [1u64, 2, 4, 8] {
                for es in [1u64, 2, 4, 8] {
                    let spec = ArraySpec::unbounded(bs, es, nt);
                    for thread in 0..nt {
                        for phase in 0..bs {
                            for localblock in 0..3u64 {
                                let va = (localblock * bs + phase) * es;
                                let p = SharedPointer::new(thread, phase, va);
                                for inc in [1i64, 2, 4, 8, -1, -2, 3, 7] {
                                    let sw = increment_sw(&p, inc, &spec);
                                    let hw = increment_hw(&p, inc, &spec);
                                    assert_eq!(sw, hw, "p={p:?} inc={inc} spec={spec:?}");
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sw_agrees_with_canonical_map_oracle() {
        // traversing via increments equals re-mapping the shifted index
        for (bs, es, nt, n) in [(4u64, 4u64, 4u64, 64u64), (3, 8, 2, 30), (5, 2, 3, 45)] {
            let spec = ArraySpec::new(bs, es, n, nt).unwrap();
            for start in 0..n {
                let p = canonical_map(start, &spec).unwrap();
                for k in 0..(n - start) {
                    let q = increment_sw(&p, k as i64, &spec).unwrap();
                    assert_eq!(q, canonical_map(start + k, &spec).unwrap());
                    assert_eq!(canonical_index(&q, &spec).unwrap(), start + k);
                }
            }
        }
    }

    #[test]
    fn negative_increment_walks_backwards() {
        let spec = ArraySpec::new(4, 4, 64, 4).unwrap();
        let p = canonical_map(37, &spec).unwrap();
        assert_eq!(
            increment_sw(&p, -13, &spec).unwrap(),
            canonical_map(24, &spec).unwrap()
        );
    }

    #[test]
    fn va_underflow_detected() {
        let spec = ArraySpec::unbounded(4, 4, 4);
        let p = SharedPointer::new(0, 0, 0);
        assert_eq!(increment_sw(&p, -1, &spec), Err(Error::VaUnderflow));
    }

    #[test]
    fn locality_priority_chain() {
        let mut topo = Topology::single_smp(0, 4);
        assert_eq!(
            classify_locality(&SharedPointer::new(0, 0, 0), &topo).unwrap(),
            LocalityCode::Local
        );
        assert_eq!(
            classify_locality(&SharedPointer::new(1, 0, 0), &topo).unwrap(),
            LocalityCode::SameController
        );
        // move thread 2 to another controller, same node
        topo.controller_of.insert(2, 1);
        assert_eq!(
            classify_locality(&SharedPointer::new(2, 0, 0), &topo).unwrap(),
            LocalityCode::SameNode
        );
        // move thread 3 to another node entirely
        topo.controller_of.insert(3, 2);
        topo.node_of.insert(3, 1);
        assert_eq!(
            classify_locality(&SharedPointer::new(3, 0, 0), &topo).unwrap(),
            LocalityCode::OtherNode
        );
    }

    #[test]
    fn locality_unknown_thread() {
        let topo = Topology::single_smp(0, 2);
        assert_eq!(
            classify_locality(&SharedPointer::new(7, 0, 0), &topo),
            Err(Error::UnknownThread(7))
        );
    }

    #[test]
    fn topology_parse_roundtrip() {
        let text = "# thread controller node\n0 0 0\n1 0 0\n2 1 0 # second controller\n3 2 1\n";
        let topo = Topology::parse(text, 0).unwrap();
        assert_eq!(topo.controller_of[&2], 1);
        assert_eq!(topo.node_of[&3], 1);
        assert_eq!(topo.as_seen_by(3).self_thread, 3);
    }

    #[test]
    fn topology_parse_errors() {
        assert!(Topology::parse("0 0", 0).is_err());
        assert!(Topology::parse("a 0 0", 0).is_err());
    }

    proptest! {
        #[test]
        fn composition_law(
            bs in 1u64..12, es in prop::sample::select(vec![1u64,2,4,8]),
            nt in 1u64..12, start_block in 0u64..8, phase_seed in 0u64..12,
            a in 0i64..200, b in 0i64..200,
        ) {
            let spec = ArraySpec::unbounded(bs, es, nt);
            let phase = phase_seed % bs;
            let p = SharedPointer::new(start_block % nt, phase, (start_block * bs + phase) * es);
            let one = increment_sw(&increment_sw(&p, a, &spec).unwrap(), b, &spec).unwrap();
            let two = increment_sw(&p, a + b, &spec).unwrap();
            prop_assert_eq!(one, two);
        }
    }
}
