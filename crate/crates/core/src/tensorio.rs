//! Tensor files and synthetic symbol sources.
//!
//! Layout (little-endian): magic `OAST`, version u8 = 1, dtype u8
//! (0 = i8, 1 = f32), ndim u8 (1..=4), `ndim` u32 dims, then the
//! row-major payload.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalCdf};
use thiserror::Error;

use crate::entropy::SymbolHistogram;
use crate::huffman::{avg_code_length, build_codebook};
use crate::quantizer::symbol_limit;
use crate::Symbol;

pub const TENSOR_MAGIC: [u8; 4] = *b"OAST";
pub const TENSOR_VERSION: u8 = 1;
pub const MAX_DIMS: usize = 4;
const HEADER_FIXED: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("not a tensor file (bad magic)")]
    BadMagic,
    #[error("truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(u64),
    #[error("dimension product overflows")]
    DimOverflow,
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    I8,
    F32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::I8 => 1,
            DType::F32 => 4,
        }
    }

    fn code(self) -> u8 {
        match self {
            DType::I8 => 0,
            DType::F32 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    I8(Vec<i8>),
    F32(Vec<f32>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::I8(_) => DType::I8,
            TensorData::F32(_) => DType::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::I8(v) => v.len(),
            TensorData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    dims: Vec<u32>,
    data: TensorData,
}

fn element_count(dims: &[u32]) -> Result<u64, TensorError> {
    dims.iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
        .ok_or(TensorError::DimOverflow)
}

impl TensorFile {
    pub fn new(dims: Vec<u32>, data: TensorData) -> Result<Self, TensorError> {
        if dims.is_empty() || dims.len() > MAX_DIMS {
            return Err(TensorError::InvalidTensor(format!(
                "need 1..={MAX_DIMS} dims, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(TensorError::InvalidTensor("zero-sized dimension".into()));
        }
        let n = element_count(&dims)?;
        if n != data.len() as u64 {
            return Err(TensorError::InvalidTensor(format!(
                "dims hold {n} elements, payload has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn symbols(dims: Vec<u32>, symbols: Vec<i8>) -> Result<Self, TensorError> {
        Self::new(dims, TensorData::I8(symbols))
    }

    pub fn reals(dims: Vec<u32>, values: Vec<f32>) -> Result<Self, TensorError> {
        Self::new(dims, TensorData::F32(values))
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }
}

pub fn write_tensor(t: &TensorFile) -> Vec<u8> {
    let mut out =
        Vec::with_capacity(HEADER_FIXED + 4 * t.dims.len() + t.data.len() * t.data.dtype().size());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.push(TENSOR_VERSION);
    out.push(t.data.dtype().code());
    out.push(t.dims.len() as u8);
    for d in &t.dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    match &t.data {
        TensorData::I8(v) => out.extend(v.iter().map(|&x| x as u8)),
        TensorData::F32(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

pub fn read_tensor(bytes: &[u8]) -> Result<TensorFile, TensorError> {
    if bytes.len() < 4 || bytes[..4] != TENSOR_MAGIC {
        return Err(TensorError::BadMagic);
    }
    if bytes.len() < HEADER_FIXED {
        return Err(TensorError::TruncatedPayload {
            expected: HEADER_FIXED as u64,
            found: bytes.len() as u64,
        });
    }
    if bytes[4] != TENSOR_VERSION {
        return Err(TensorError::InvalidHeader(format!(
            "unsupported version {}",
            bytes[4]
        )));
    }
    let dtype = match bytes[5] {
        0 => DType::I8,
        1 => DType::F32,
        other => return Err(TensorError::InvalidHeader(format!("unknown dtype {other}"))),
    };
    let ndim = bytes[6] as usize;
    if ndim == 0 || ndim > MAX_DIMS {
        return Err(TensorError::InvalidHeader(format!(
            "ndim {ndim} not in 1..=4"
        )));
    }
    let header = HEADER_FIXED + 4 * ndim;
    if bytes.len() < header {
        return Err(TensorError::TruncatedPayload {
            expected: header as u64,
            found: bytes.len() as u64,
        });
    }
    let dims: Vec<u32> = bytes[HEADER_FIXED..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    if dims.contains(&0) {
        return Err(TensorError::InvalidHeader("zero-sized dimension".into()));
    }
    let payload_len = element_count(&dims)?
        .checked_mul(dtype.size() as u64)
        .ok_or(TensorError::DimOverflow)?;
    let expected = (header as u64)
        .checked_add(payload_len)
        .ok_or(TensorError::DimOverflow)?;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(TensorError::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(TensorError::TrailingBytes(found - expected));
    }
    let payload = &bytes[header..];
    let data = match dtype {
        DType::I8 => TensorData::I8(payload.iter().map(|&b| b as i8).collect()),
        DType::F32 => TensorData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
                .collect(),
        ),
    };
    TensorFile::new(dims, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymbolModel {
    /// N(0, sigma) in symbol units, rounded half away from zero and clamped
    /// to the symbol set.
    DiscretizedGaussian { sigma: f64 },
    /// Explicit per-symbol weights (need not be normalised).
    Custom { weights: Vec<(Symbol, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDistribution {
    pub model: SymbolModel,
    pub bits: u32,
}

impl SyntheticDistribution {
    pub fn gaussian(sigma: f64, bits: u32) -> Result<Self, TensorError> {
        let d = Self {
            model: SymbolModel::DiscretizedGaussian { sigma },
            bits,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn custom(weights: Vec<(Symbol, f64)>, bits: u32) -> Result<Self, TensorError> {
        let d = Self {
            model: SymbolModel::Custom { weights },
            bits,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        if !(2..=8).contains(&self.bits) {
            return Err(TensorError::InvalidTensor(format!(
                "bits must be in 2..=8, got {}",
                self.bits
            )));
        }
        let limit = symbol_limit(self.bits);
        match &self.model {
            SymbolModel::DiscretizedGaussian { sigma } => {
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return Err(TensorError::InvalidTensor(format!("bad sigma {sigma}")));
                }
            }
            SymbolModel::Custom { weights } => {
                if weights.is_empty() {
                    return Err(TensorError::InvalidTensor("no weights".into()));
                }
                for &(s, w) in weights {
                    if (s as i32).abs() > limit {
                        return Err(TensorError::InvalidTensor(format!(
                            "symbol {s} outside ±{limit}"
                        )));
                    }
                    if !(w.is_finite() && w >= 0.0) {
                        return Err(TensorError::InvalidTensor(format!("bad weight {w}")));
                    }
                }
                if weights.iter().all(|&(_, w)| w == 0.0) {
                    return Err(TensorError::InvalidTensor("all weights zero".into()));
                }
            }
        }
        Ok(())
    }

    /// Exact symbol probabilities, ascending by symbol, zero entries omitted.
    pub fn probabilities(&self) -> Vec<(Symbol, f64)> {
        let limit = symbol_limit(self.bits);
        match &self.model {
            SymbolModel::DiscretizedGaussian { sigma } if *sigma == 0.0 => vec![(0, 1.0)],
            SymbolModel::DiscretizedGaussian { sigma } => {
                let n = NormalCdf::new(0.0, *sigma).expect("sigma validated");
                (-limit..=limit)
                    .map(|k| {
                        let hi = if k == limit {
                            1.0
                        } else {
                            n.cdf(k as f64 + 0.5)
                        };
                        let lo = if k == -limit {
                            0.0
                        } else {
                            n.cdf(k as f64 - 0.5)
                        };
                        (k as Symbol, hi - lo)
                    })
                    .filter(|&(_, p)| p > 0.0)
                    .collect()
            }
            SymbolModel::Custom { weights } => {
                let mut merged = std::collections::BTreeMap::new();
                for &(s, w) in weights {
                    *merged.entry(s).or_insert(0.0) += w;
                }
                let total: f64 = merged.values().sum();
                merged
                    .into_iter()
                    .filter(|&(_, w)| w > 0.0)
                    .map(|(s, w)| (s, w / total))
                    .collect()
            }
        }
    }

    /// Expected histogram scaled to `scale` total counts; every symbol with
    /// nonzero probability keeps at least one count.
    pub fn expected_histogram(&self, scale: u64) -> SymbolHistogram {
        let probs = self.probabilities();
        SymbolHistogram::from_counts(
            probs
                .iter()
                .map(|&(s, p)| (s, ((p * scale as f64).round() as u64).max(1))),
        )
        .expect("at least one symbol has nonzero probability")
    }
}

/// Draws `count` symbols. The stream depends only on `(d, count, seed)`.
pub fn sample_symbols(d: &SyntheticDistribution, count: usize, seed: u64) -> Vec<Symbol> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = symbol_limit(d.bits) as f64;
    match &d.model {
        SymbolModel::DiscretizedGaussian { sigma } if *sigma == 0.0 => vec![0; count],
        SymbolModel::DiscretizedGaussian { sigma } => {
            let normal = Normal::new(0.0, *sigma).expect("sigma validated");
            (0..count)
                .map(|_| normal.sample(&mut rng).round().clamp(-limit, limit) as Symbol)
                .collect()
        }
        SymbolModel::Custom { .. } => {
            let probs = d.probabilities();
            let index = WeightedIndex::new(probs.iter().map(|p| p.1)).expect("weights validated");
            (0..count)
                .map(|_| probs[index.sample(&mut rng)].0)
                .collect()
        }
    }
}

/// Huffman bits per symbol of the expected histogram for a Gaussian of the
/// given sigma.
pub fn gaussian_code_length(sigma: f64, bits: u32) -> f64 {
    let d = SyntheticDistribution::gaussian(sigma, bits).expect("valid sigma and bits");
    let h = d.expected_histogram(1 << 40);
    let cb = build_codebook(&h).expect("nonempty histogram");
    avg_code_length(&cb, &h).expect("codebook covers histogram")
}

/// Binary search for the sigma whose Huffman code length equals
/// `target_bits`. Returns `None` if the target lies outside what the
/// symbol set can reach.
pub fn fit_sigma(target_bits: f64, bits: u32) -> Option<f64> {
    let (mut lo, mut hi) = (1e-3, 4.0 * (1u32 << (bits - 1)) as f64);
    if !(gaussian_code_length(lo, bits) <= target_bits
        && target_bits <= gaussian_code_length(hi, bits))
    {
        return None;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if gaussian_code_length(mid, bits) < target_bits {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_element_layout() {
        let t = TensorFile::symbols(vec![1], vec![-3]).unwrap();
        let bytes = write_tensor(&t);
        assert_eq!(
            bytes,
            vec![b'O', b'A', b'S', b'T', 1, 0, 1, 1, 0, 0, 0, 0xfd]
        );
        assert_eq!(read_tensor(&bytes).unwrap(), t);
    }

    #[test]
    fn four_d_payload() {
        let t = TensorFile::symbols(vec![4, 4, 4, 1], vec![0; 64]).unwrap();
        let bytes = write_tensor(&t);
        assert_eq!(bytes.len(), 7 + 16 + 64);
        let back = read_tensor(&bytes).unwrap();
        assert_eq!(back.data().len(), 64);
    }

    #[test]
    fn read_errors() {
        let t = TensorFile::reals(vec![2, 3], vec![1.5; 6]).unwrap();
        let bytes = write_tensor(&t);
        assert_eq!(read_tensor(&bytes).unwrap(), t);
        assert!(matches!(
            read_tensor(&bytes[..bytes.len() - 1]),
            Err(TensorError::TruncatedPayload { .. })
        ));
        assert!(matches!(
            read_tensor(&bytes[..9]),
            Err(TensorError::TruncatedPayload { .. })
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(read_tensor(&extra), Err(TensorError::TrailingBytes(1)));
        assert_eq!(read_tensor(b"NOPE1234"), Err(TensorError::BadMagic));

        let mut huge = vec![b'O', b'A', b'S', b'T', 1, 1, 4];
        for _ in 0..4 {
            huge.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert_eq!(read_tensor(&huge), Err(TensorError::DimOverflow));
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(TensorFile::symbols(vec![], vec![]).is_err());
        assert!(TensorFile::symbols(vec![1, 1, 1, 1, 1], vec![0]).is_err());
        assert!(TensorFile::symbols(vec![2], vec![0]).is_err());
    }

    #[test]
    fn degenerate_gaussian() {
        let d = SyntheticDistribution::gaussian(0.0, 4).unwrap();
        assert!(sample_symbols(&d, 100, 1).iter().all(|&s| s == 0));
        let d = SyntheticDistribution::gaussian(1e-6, 4).unwrap();
        assert!(sample_symbols(&d, 1000, 1).iter().all(|&s| s == 0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = SyntheticDistribution::gaussian(1.2, 4).unwrap();
        assert_eq!(sample_symbols(&d, 500, 7), sample_symbols(&d, 500, 7));
        assert_ne!(sample_symbols(&d, 500, 7), sample_symbols(&d, 500, 8));
        let c = SyntheticDistribution::custom(vec![(0, 3.0), (2, 1.0)], 4).unwrap();
        let s = sample_symbols(&c, 1000, 3);
        assert!(s.iter().all(|&x| x == 0 || x == 2));
        assert_eq!(s, sample_symbols(&c, 1000, 3));
    }

    #[test]
    fn gaussian_probabilities_sum_to_one() {
        let d = SyntheticDistribution::gaussian(2.5, 4).unwrap();
        let p = d.probabilities();
        assert_eq!(p.len(), 15);
        assert!((p.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(SyntheticDistribution::gaussian(-1.0, 4).is_err());
        assert!(SyntheticDistribution::custom(vec![(9, 1.0)], 4).is_err());
    }

    #[test]
    fn fit_hits_target() {
        let sigma = fit_sigma(1.57, 4).unwrap();
        assert!((gaussian_code_length(sigma, 4) - 1.57).abs() < 1e-6);
        assert!(sigma > 0.5 && sigma < 0.6, "{sigma}");
        assert!(fit_sigma(0.5, 4).is_none());
        assert!(fit_sigma(5.0, 4).is_none());
    }
}
