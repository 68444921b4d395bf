//! Feature-compression codec for split inference.
//!
//! When a neural network is split between an edge device and a server, the
//! intermediate feature tensors have to travel over the wire. This crate
//! implements a complete coding pipeline for that feature data: multi-scale
//! tensors are fused into a single tensor, tiled into a 2-D frame, quantized
//! to `q`-bit integers and handed to a pluggable inner codec. The decoder
//! inverts each stage and, in the proposed signaling modes, restores the
//! global mean and standard deviation of every tensor by Z-score rescaling
//! against statistics transmitted in the bitstream.
//!
//! Three signaling modes are supported:
//!
//! * **baseline** — per-frame minimum/maximum, inverse min-max at the decoder,
//!   no statistics restoration (8 bytes of overhead per frame);
//! * **full** — one `(mean, std)` pair per tensor plus one for the fused
//!   tensor, refreshed every `L` frames and coded as binary32
//!   (`8·(N+1)` bytes per refresh period);
//! * **simplified** — a single pooled `(mean, std)` pair coded as bfloat16
//!   (4 bytes per refresh period).
//!
//! The encoder entry point is [`pipeline::encode`]; decoding is
//! [`pipeline::decode`]. Synthetic input sequences come from
//! [`synth::generate_sequence`], and [`metrics`] provides fidelity reports,
//! rate/accuracy sweeps and BD-rate comparisons between sweep curves.
//!
//! ```
//! use fcms::pipeline::{encode, decode, EncodeConfig};
//! use fcms::synth::generate_sequence;
//! use fcms::tensor::{compute_stats, ShapeSpec};
//!
//! let spec = ShapeSpec::darknet();
//! let frames = generate_sequence(&spec, 2, 7, 0.0);
//! let stream = encode(&frames, &EncodeConfig::default()).unwrap();
//! let decoded = decode(&stream).unwrap();
//!
//! let orig = compute_stats(&frames[0].tensors()[0]);
//! let rec = compute_stats(&decoded[0].tensors()[0]);
//! assert!((orig.mean - rec.mean).abs() <= 1e-4 * orig.mean.abs());
//! assert!((orig.std - rec.std).abs() <= 1e-4 * orig.std);
//! ```

pub mod bitstream;
pub mod codec;
mod error;
pub mod ftns;
pub mod fusion;
pub mod metrics;
pub mod packing;
pub mod pipeline;
pub mod rescale;
pub mod stats;
pub mod synth;
pub mod temporal;
pub mod tensor;

pub use error::{Error, Result};
