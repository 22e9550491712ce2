//! The simulated partitioned address space: one contiguous local segment per
//! thread, shared-array allocation over those segments, and typed byte-level
//! access by system virtual address.
//!
//! Segments are placed at interval-scheme-compatible addresses, so both
//! translation schemes can be exercised against the same memory. Storage is
//! little-endian.

use crate::error::{Error, Result};
use crate::pointer::{canonical_map, ArraySpec, SharedPointer};
use crate::translate::{translate_lut, BaseAddressTable, IntervalScheme};

pub const DEFAULT_SEGMENT_SIZE: u64 = 1 << 20;
pub const DEFAULT_ORIGIN: u64 = 0x1000_0000;

#[derive(Debug, Clone)]
struct Segment {
    base: u64,
    data: Vec<u8>,
    cursor: u64,
}

/// Per-thread local segments backing the shared space.
#[derive(Debug, Clone)]
pub struct PartitionedMemory {
    segments: Vec<Segment>,
    scheme: IntervalScheme,
}

/// A shared array living in a [`PartitionedMemory`].
///
/// Every thread holds the array at the same offset into its segment, so the
/// incrementation arithmetic on va stays valid when a pointer hops threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharedArrayHandle {
    pub spec: ArraySpec,
    /// Offset of the array within every thread's segment.
    pub base_offset: u64,
}

impl PartitionedMemory {
    /// `numthreads` segments of `segment_size` bytes each, spaced
    /// `segment_size` apart starting at [`DEFAULT_ORIGIN`].
    pub fn new(numthreads: u64, segment_size: u64) -> Result<PartitionedMemory> {
        let scheme = IntervalScheme::new(DEFAULT_ORIGIN, segment_size)?;
        let segments = (0..numthreads)
            .map(|t| Segment {
                base: scheme.origin + t * scheme.stride,
                data: vec![0; segment_size as usize],
                cursor: 0,
            })
            .collect();
        Ok(PartitionedMemory { segments, scheme })
    }

    pub fn with_default_size(numthreads: u64) -> Result<PartitionedMemory> {
        Self::new(numthreads, DEFAULT_SEGMENT_SIZE)
    }

    pub fn numthreads(&self) -> u64 {
        self.segments.len() as u64
    }

    pub fn segment_base(&self, thread: u64) -> Result<u64> {
        self.segments
            .get(thread as usize)
            .map(|s| s.base)
            .ok_or(Error::UnknownThread(thread))
    }

    pub fn segment_size(&self) -> u64 {
        self.scheme.stride
    }

    /// The interval scheme matching the segment placement.
    pub fn interval_scheme(&self) -> IntervalScheme {
        self.scheme
    }

    /// Base-address lookup table matching the segment placement.
    pub fn base_table(&self) -> BaseAddressTable {
        let mut table = BaseAddressTable::new();
        for (t, seg) in self.segments.iter().enumerate() {
            table.set(t as u64, seg.base);
        }
        table
    }

    /// Allocates a shared array, reserving whole blocks in every thread's
    /// segment at a common 8-byte-aligned offset.
    ///
    /// Whole blocks are reserved even for a ragged tail, matching the
    /// round-robin block deal.
    pub fn alloc_shared(&mut self, spec: ArraySpec) -> Result<SharedArrayHandle> {
        if spec.numthreads != self.numthreads() {
            return Err(Error::Validation(format!(
                "array wants {} threads but memory has {}",
                spec.numthreads,
                self.numthreads()
            )));
        }
        let offset = self
            .segments
            .iter()
            .map(|s| s.cursor)
            .max()
            .unwrap_or(0)
            .next_multiple_of(8);
        for t in 0..self.numthreads() {
            let end = offset + spec.blocks_of_thread(t) * spec.blocksize * spec.elemsize;
            if end > self.segment_size() {
                return Err(Error::AllocationFailure {
                    thread: t,
                    need: end,
                    avail: self.segment_size(),
                });
            }
        }
        for t in 0..self.numthreads() {
            let end = offset + spec.blocks_of_thread(t) * spec.blocksize * spec.elemsize;
            self.segments[t as usize].cursor = end;
        }
        Ok(SharedArrayHandle {
            spec,
            base_offset: offset,
        })
    }

    fn locate(&self, addr: u64, width: u64) -> Result<(usize, usize)> {
        if width > 1 && !addr.is_multiple_of(width) {
            return Err(Error::Misaligned { addr, width });
        }
        for (t, seg) in self.segments.iter().enumerate() {
            let end = seg.base + seg.data.len() as u64;
            if addr >= seg.base && addr < end {
                if addr + width > end {
                    return Err(Error::MemoryFault { addr, width });
                }
                return Ok((t, (addr - seg.base) as usize));
            }
        }
        Err(Error::MemoryFault { addr, width })
    }

    /// Little-endian read of 1, 2, 4 or 8 bytes, zero-extended.
    pub fn read(&self, addr: u64, width: u64) -> Result<u64> {
        debug_assert!(matches!(width, 1 | 2 | 4 | 8));
        let (t, off) = self.locate(addr, width)?;
        let bytes = &self.segments[t].data[off..off + width as usize];
        let mut buf = [0u8; 8];
        buf[..bytes.len()].copy_from_slice(bytes);
        Ok(u64::from_le_bytes(buf))
    }

    /// Little-endian write of the low `width` bytes of `value`.
    pub fn write(&mut self, addr: u64, width: u64, value: u64) -> Result<()> {
        debug_assert!(matches!(width, 1 | 2 | 4 | 8));
        let (t, off) = self.locate(addr, width)?;
        let bytes = value.to_le_bytes();
        self.segments[t].data[off..off + width as usize].copy_from_slice(&bytes[..width as usize]);
        Ok(())
    }

    /// Hex dump of one segment: `offset: 16 bytes` per line, for debugging.
    pub fn hexdump(&self, thread: u64, offset: u64, len: u64) -> Result<String> {
        let seg = self
            .segments
            .get(thread as usize)
            .ok_or(Error::UnknownThread(thread))?;
        let end = (offset + len).min(seg.data.len() as u64) as usize;
        let mut out = String::new();
        let mut at = offset as usize;
        while at < end {
            let row_end = (at + 16).min(end);
            out.push_str(&format!("{at:08x}:"));
            for b in &seg.data[at..row_end] {
                out.push_str(&format!(" {b:02x}"));
            }
            out.push('\n');
            at = row_end;
        }
        Ok(out)
    }
}

impl SharedArrayHandle {
    /// Canonical shared pointer to element `index`, va shifted by the
    /// array's segment offset.
    pub fn element_ptr(&self, index: u64) -> Result<SharedPointer> {
        let p = canonical_map(index, &self.spec)?;
        Ok(SharedPointer {
            va: p.va + self.base_offset,
            ..p
        })
    }

    /// System virtual address of element `index` under a base table.
    pub fn element_addr(&self, index: u64, table: &BaseAddressTable) -> Result<u64> {
        translate_lut(&self.element_ptr(index)?, table)
    }

    /// Access width used by the machine for this array's elements: the
    /// element size when it is 1, 2, 4 or 8 bytes, otherwise 8 (struct-like
    /// elements are accessed member-wise through the displacement).
    pub fn access_width(&self) -> u64 {
        match self.spec.elemsize {
            w @ (1 | 2 | 4 | 8) => w,
            _ => 8,
        }
    }
}
