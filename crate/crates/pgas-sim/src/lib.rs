//! Simulation of hardware-assisted PGAS shared-address handling.
//!
//! The crate models a UPC-style partitioned global address space and the
//! processor support that makes traversing it cheap: shared pointers over a
//! block-cyclic layout, pointer incrementation with a shift/mask fast path,
//! shared-to-virtual address translation, an extended instruction set with a
//! functional executor, a lowering pass from a small traversal IR, and a
//! benchmark harness with an instruction-count cost model.
//!
//! A quick tour (see the guide in `book/` for the full story):
//!
//! ```
//! use pgas_sim::pointer::{ArraySpec, canonical_map};
//! use pgas_sim::increment::{increment_sw, increment_hw};
//!
//! // shared [4] int arrayA[32]; over 4 threads
//! let spec = ArraySpec::new(4, 4, 32, 4).unwrap();
//!
//! // element 17 lives on thread 0, phase 1, 20 bytes into its segment
//! let p = canonical_map(17, &spec).unwrap();
//! assert_eq!((p.thread, p.phase, p.va), (0, 1, 20));
//!
//! // stepping 3 elements forward equals re-mapping index 20,
//! // and the shift/mask path agrees with the arithmetic one
//! let q = increment_sw(&p, 3, &spec).unwrap();
//! assert_eq!(q, canonical_map(20, &spec).unwrap());
//! assert_eq!(increment_hw(&p, 3, &spec).unwrap(), q);
//! ```

pub mod error;
pub mod guide;
pub mod harness;
pub mod increment;
pub mod isa;
pub mod lowering;
pub mod machine;
pub mod memory;
pub mod pointer;
pub mod translate;

pub use error::{Error, Result};
