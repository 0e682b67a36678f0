//! Each module pulls a guide chapter in as rustdoc, so `cargo test` runs
//! every fenced Rust block in the book. If a chapter's snippet drifts from
//! the library, the build breaks here.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/norm-scaling.md")]
pub mod norm_scaling {}

#[doc = include_str!("../../../book/src/detectors.md")]
pub mod detectors {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/calibration.md")]
pub mod calibration {}

#[doc = include_str!("../../../book/src/synthetic-benchmark.md")]
pub mod synthetic_benchmark {}

#[doc = include_str!("../../../book/src/file-formats.md")]
pub mod file_formats {}
