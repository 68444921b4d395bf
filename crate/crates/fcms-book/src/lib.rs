//! Runs every fenced Rust block of the book as a doc-test.
//!
//! mdBook cannot execute snippets against the workspace crates, so each
//! chapter is included here as module documentation and `cargo test --doc`
//! does the work. A failing snippet points at its chapter through the
//! module name.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/tensors-and-statistics.md")]
pub mod tensors_and_statistics {}

#[doc = include_str!("../../../book/src/fusion-and-packing.md")]
pub mod fusion_and_packing {}

#[doc = include_str!("../../../book/src/quantization-and-codecs.md")]
pub mod quantization_and_codecs {}

#[doc = include_str!("../../../book/src/statistics-signaling.md")]
pub mod statistics_signaling {}

#[doc = include_str!("../../../book/src/rescaling.md")]
pub mod rescaling {}

#[doc = include_str!("../../../book/src/container-format.md")]
pub mod container_format {}

#[doc = include_str!("../../../book/src/pipeline-and-cli.md")]
pub mod pipeline_and_cli {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
