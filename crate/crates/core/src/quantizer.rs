//! Symmetric uniform quantization with a momentum-tracked range.
//!
//! An `n`-bit quantizer maps reals onto the `2^n - 1` signed levels
//! `-(2^(n-1) - 1) ..= 2^(n-1) - 1` with step `2 * max / (2^n - 1)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Symbol;

pub const DEFAULT_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantError {
    #[error("quantization range is zero")]
    DegenerateRange,
    #[error("symbol {symbol} outside the {bits}-bit set ±{limit}")]
    SymbolOutOfRange { symbol: i32, bits: u32, limit: i32 },
    #[error("range update needs a nonempty batch")]
    EmptyBatch,
    #[error("invalid quantizer parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value in input")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerState {
    bits: u32,
    range_max: f64,
    momentum: f64,
}

/// Largest symbol magnitude for an `bits`-wide symmetric quantizer.
pub fn symbol_limit(bits: u32) -> i32 {
    (1i32 << (bits - 1)) - 1
}

impl QuantizerState {
    pub fn new(bits: u32, range_max: f64, momentum: f64) -> Result<Self, QuantError> {
        if !(2..=8).contains(&bits) {
            return Err(QuantError::InvalidParameter(format!(
                "bits must be in 2..=8, got {bits}"
            )));
        }
        if !(range_max.is_finite() && range_max >= 0.0) {
            return Err(QuantError::InvalidParameter(format!(
                "range_max must be finite and >= 0, got {range_max}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(QuantError::InvalidParameter(format!(
                "momentum must be in [0, 1), got {momentum}"
            )));
        }
        Ok(Self {
            bits,
            range_max,
            momentum,
        })
    }

    pub fn with_default_momentum(bits: u32, range_max: f64) -> Result<Self, QuantError> {
        Self::new(bits, range_max, DEFAULT_MOMENTUM)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn range_max(&self) -> f64 {
        self.range_max
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn limit(&self) -> i32 {
        symbol_limit(self.bits)
    }

    pub fn q_scale(&self) -> Result<f64, QuantError> {
        if self.range_max == 0.0 {
            return Err(QuantError::DegenerateRange);
        }
        Ok(2.0 * self.range_max / ((1u32 << self.bits) - 1) as f64)
    }

    /// Rounds half away from zero, then clamps to the symbol set.
    pub fn quantize(&self, z: &[f64]) -> Result<Vec<Symbol>, QuantError> {
        let scale = self.q_scale()?;
        let limit = self.limit() as f64;
        z.iter()
            .map(|&v| {
                if v.is_nan() {
                    return Err(QuantError::NonFinite);
                }
                Ok((v / scale).round().clamp(-limit, limit) as Symbol)
            })
            .collect()
    }

    pub fn dequantize(&self, q: &[Symbol]) -> Result<Vec<f64>, QuantError> {
        let scale = self.q_scale()?;
        let limit = self.limit();
        q.iter()
            .map(|&s| {
                let s = s as i32;
                if s.abs() > limit {
                    Err(QuantError::SymbolOutOfRange {
                        symbol: s,
                        bits: self.bits,
                        limit,
                    })
                } else {
                    Ok(s as f64 * scale)
                }
            })
            .collect()
    }

    /// Blends the batch's max-abs into the running range. `self` is left
    /// untouched.
    pub fn update_range(&self, batch: &[f64]) -> Result<QuantizerState, QuantError> {
        if batch.is_empty() {
            return Err(QuantError::EmptyBatch);
        }
        let mut peak = 0.0f64;
        for &v in batch {
            if !v.is_finite() {
                return Err(QuantError::NonFinite);
            }
            peak = peak.max(v.abs());
        }
        Ok(QuantizerState {
            range_max: self.momentum * self.range_max + (1.0 - self.momentum) * peak,
            ..*self
        })
    }
}
