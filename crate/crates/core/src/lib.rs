//! Desk-scale model of an in-sensor activation-compression pipeline:
//! encoder workload accounting, symmetric quantization, entropy
//! measurement, canonical Huffman coding and a per-frame
//! energy/bandwidth/latency model, plus a design-space sweep driver.

pub mod dse;
pub mod energy;
pub mod entropy;
pub mod huffman;
pub mod netspec;
pub mod quantizer;
pub mod scenario;
pub mod tensorio;

/// A quantized activation value.
pub type Symbol = i8;
