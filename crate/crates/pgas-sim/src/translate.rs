//! Shared-to-virtual address translation.
//!
//! A pointer's va field is an offset into the owning thread's local segment.
//! Reaching a system virtual address means adding the segment's base, which
//! is found either in a per-thread lookup table or, when segments sit at
//! regular intervals, computed directly from the thread number.

use crate::error::{Error, Result};
use crate::pointer::SharedPointer;
use std::collections::BTreeMap;

/// Per-thread segment base addresses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BaseAddressTable {
    entries: BTreeMap<u64, u64>,
}

impl BaseAddressTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, thread: u64, base: u64) {
        self.entries.insert(thread, base);
    }

    pub fn get(&self, thread: u64) -> Result<u64> {
        self.entries
            .get(&thread)
            .copied()
            .ok_or(Error::MissingBaseAddress(thread))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Table equivalent to an interval scheme over `numthreads` threads.
    pub fn from_interval(scheme: &IntervalScheme, numthreads: u64) -> Self {
        let entries = (0..numthreads)
            .map(|t| (t, scheme.origin + t * scheme.stride))
            .collect();
        BaseAddressTable { entries }
    }
}

/// Segments starting at regular intervals: base(t) = origin + t * stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntervalScheme {
    pub origin: u64,
    /// Segment spacing; a power of two at least as large as any segment.
    pub stride: u64,
}

impl IntervalScheme {
    pub fn new(origin: u64, stride: u64) -> Result<Self> {
        if !stride.is_power_of_two() {
            return Err(Error::Validation(format!(
                "interval stride {stride:#x} must be a power of two"
            )));
        }
        Ok(IntervalScheme { origin, stride })
    }
}

/// Table lookup translation: base of the pointed thread plus the pointer's va.
pub fn translate_lut(p: &SharedPointer, table: &BaseAddressTable) -> Result<u64> {
    Ok(table.get(p.thread)? + p.va)
}

/// Computed translation for regularly spaced segments.
pub fn translate_interval(p: &SharedPointer, scheme: &IntervalScheme) -> u64 {
    scheme.origin + p.thread * scheme.stride + p.va
}
