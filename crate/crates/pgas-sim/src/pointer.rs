//! Shared pointers and the block-cyclic array layout.
//!
//! A shared array is dealt out to threads in blocks of `blocksize` elements,
//! round robin. A shared pointer names one element of such an array with three
//! fields: the owning thread, the phase (position inside the current block)
//! and a byte offset into the owner's local segment.
//!
//! ```
//! use pgas_sim::pointer::{ArraySpec, canonical_map};
//!
//! // shared [4] int arrayA[32]; over 4 threads
//! let spec = ArraySpec::new(4, 4, 32, 4).unwrap();
//! let p = canonical_map(4, &spec).unwrap();
//! assert_eq!((p.thread, p.phase, p.va), (1, 0, 0)); // first element of block 1
//! ```

use crate::error::{Error, Result};

/// A UPC-style shared pointer: thread affinity, phase within the current
/// block, and byte offset into the owning thread's local segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SharedPointer {
    pub thread: u64,
    pub phase: u64,
    pub va: u64,
}

impl SharedPointer {
    pub fn new(thread: u64, phase: u64, va: u64) -> Self {
        SharedPointer { thread, phase, va }
    }

    /// upc_threadof
    pub fn thread_of(&self) -> u64 {
        self.thread
    }

    /// upc_phaseof
    pub fn phase_of(&self) -> u64 {
        self.phase
    }

    /// upc_addrfieldof
    pub fn addr_field_of(&self) -> u64 {
        self.va
    }

    /// upc_resetphase: same pointer with phase forced to zero.
    pub fn reset_phase(&self) -> SharedPointer {
        SharedPointer { phase: 0, ..*self }
    }
}

/// 64-bit packed form of a [`SharedPointer`].
///
/// Layout: va in bits 0..=31, phase in bits 32..=47, thread in bits 48..=63.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PackedSharedPointer(pub u64);

const VA_BITS: u32 = 32;
const PHASE_BITS: u32 = 16;
const THREAD_BITS: u32 = 16;

/// Packs a pointer into its 64-bit form.
///
/// Fields must fit their slots: thread and phase below 2^16, va below 2^32.
pub fn pack(p: &SharedPointer) -> Result<PackedSharedPointer> {
    if p.thread >> THREAD_BITS != 0 {
        return Err(Error::PackOverflow(format!("thread {} >= 2^16", p.thread)));
    }
    if p.phase >> PHASE_BITS != 0 {
        return Err(Error::PackOverflow(format!("phase {} >= 2^16", p.phase)));
    }
    if p.va >> VA_BITS != 0 {
        return Err(Error::PackOverflow(format!("va {:#x} >= 2^32", p.va)));
    }
    Ok(PackedSharedPointer(
        (p.thread << 48) | (p.phase << 32) | p.va,
    ))
}

/// Inverse of [`pack`]; total on all 64-bit words.
pub fn unpack(w: PackedSharedPointer) -> SharedPointer {
    SharedPointer {
        thread: w.0 >> 48,
        phase: (w.0 >> 32) & 0xffff,
        va: w.0 & 0xffff_ffff,
    }
}

/// Shape of a block-cyclically distributed shared array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArraySpec {
    /// Elements per block (the blocking factor).
    pub blocksize: u64,
    /// Bytes per element.
    pub elemsize: u64,
    /// Total element count.
    pub numelems: u64,
    /// Number of SPMD threads the array is dealt over.
    pub numthreads: u64,
}

impl ArraySpec {
    pub fn new(blocksize: u64, elemsize: u64, numelems: u64, numthreads: u64) -> Result<Self> {
        if blocksize == 0 || elemsize == 0 || numelems == 0 || numthreads == 0 {
            return Err(Error::Validation(
                "all ArraySpec fields must be >= 1".into(),
            ));
        }
        Ok(ArraySpec {
            blocksize,
            elemsize,
            numelems,
            numthreads,
        })
    }

    /// Layout-only spec for pointer incrementation, where the element count
    /// is irrelevant (the machine path: sizes come from the instruction and
    /// the threads register, nothing bounds the traversal).
    pub fn unbounded(blocksize: u64, elemsize: u64, numthreads: u64) -> Self {
        ArraySpec {
            blocksize,
            elemsize,
            numelems: u64::MAX,
            numthreads,
        }
    }

    /// The hardware fast path applies only when blocksize, elemsize and
    /// numthreads are all powers of two.
    pub fn hw_eligible(&self) -> bool {
        self.blocksize.is_power_of_two()
            && self.elemsize.is_power_of_two()
            && self.numthreads.is_power_of_two()
    }

    /// Number of blocks in the array, counting a ragged tail as a full block.
    pub fn num_blocks(&self) -> u64 {
        self.numelems.div_ceil(self.blocksize)
    }

    /// Blocks dealt to thread `t` under the round-robin distribution.
    pub fn blocks_of_thread(&self, t: u64) -> u64 {
        debug_assert!(t < self.numthreads);
        // count of b in [0, num_blocks) with b % numthreads == t
        (self.num_blocks() + self.numthreads - 1 - t) / self.numthreads
    }
}

/// Maps a logical element index to its canonical shared pointer.
///
/// Blocks are dealt round robin over threads; within the owning thread the
/// array's blocks are stored contiguously in deal order.
pub fn canonical_map(index: u64, spec: &ArraySpec) -> Result<SharedPointer> {
    if index >= spec.numelems {
        return Err(Error::IndexOutOfRange {
            index,
            numelems: spec.numelems,
        });
    }
    let block = index / spec.blocksize;
    let phase = index % spec.blocksize;
    let thread = block % spec.numthreads;
    let localblock = block / spec.numthreads;
    let va = (localblock * spec.blocksize + phase) * spec.elemsize;
    Ok(SharedPointer { thread, phase, va })
}

/// Inverse of [`canonical_map`]. Rejects pointers whose fields are not
/// mutually consistent with the spec.
pub fn canonical_index(p: &SharedPointer, spec: &ArraySpec) -> Result<u64> {
    if p.thread >= spec.numthreads {
        return Err(Error::NonCanonical(format!(
            "thread {} >= numthreads {}",
            p.thread, spec.numthreads
        )));
    }
    if p.phase >= spec.blocksize {
        return Err(Error::NonCanonical(format!(
            "phase {} >= blocksize {}",
            p.phase, spec.blocksize
        )));
    }
    if !p.va.is_multiple_of(spec.elemsize) {
        return Err(Error::NonCanonical(format!(
            "va {:#x} not a multiple of elemsize {}",
            p.va, spec.elemsize
        )));
    }
    let local_elem = p.va / spec.elemsize;
    if local_elem % spec.blocksize != p.phase {
        return Err(Error::NonCanonical(format!(
            "va implies phase {}, pointer says {}",
            local_elem % spec.blocksize,
            p.phase
        )));
    }
    let localblock = local_elem / spec.blocksize;
    let index = (localblock * spec.numthreads + p.thread) * spec.blocksize + p.phase;
    if index >= spec.numelems {
        return Err(Error::NonCanonical(format!(
            "pointer maps to index {} beyond numelems {}",
            index, spec.numelems
        )));
    }
    Ok(index)
}
