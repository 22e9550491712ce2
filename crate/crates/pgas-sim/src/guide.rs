//! The user guide from `book/`, embedded chapter by chapter so that every
//! code example in it is compiled and executed as a doc-test. If a chapter
//! drifts from the library, the build breaks.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/memory-model.md")]
pub mod memory_model {}

#[doc = include_str!("../../../book/src/incrementing.md")]
pub mod incrementing {}

#[doc = include_str!("../../../book/src/translation.md")]
pub mod translation {}

#[doc = include_str!("../../../book/src/machine.md")]
pub mod machine {}

#[doc = include_str!("../../../book/src/lowering.md")]
pub mod lowering {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
