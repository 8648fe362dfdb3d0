//! Symbol histograms, empirical entropy and the training-loss terms that
//! can be evaluated without gradients.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Symbol;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntropyError {
    #[error("histogram needs at least one symbol")]
    EmptyInput,
    #[error("shape mismatch: {left} vs {right} elements")]
    ShapeMismatch { left: usize, right: usize },
    #[error("non-finite loss component `{0}`")]
    NonFiniteInput(&'static str),
    #[error("loss weight `{0}` must be finite and >= 0")]
    InvalidWeight(&'static str),
}

/// Exact symbol counts. Only symbols with a nonzero count are stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolHistogram {
    counts: BTreeMap<Symbol, u64>,
    total: u64,
}

impl SymbolHistogram {
    pub fn from_symbols(symbols: &[Symbol]) -> Result<Self, EntropyError> {
        if symbols.is_empty() {
            return Err(EntropyError::EmptyInput);
        }
        let mut counts = BTreeMap::new();
        for &s in symbols {
            *counts.entry(s).or_insert(0u64) += 1;
        }
        Ok(Self {
            counts,
            total: symbols.len() as u64,
        })
    }

    /// Builds a histogram from explicit counts; zero counts are dropped.
    pub fn from_counts(
        counts: impl IntoIterator<Item = (Symbol, u64)>,
    ) -> Result<Self, EntropyError> {
        let mut map = BTreeMap::new();
        for (s, c) in counts {
            if c > 0 {
                *map.entry(s).or_insert(0u64) += c;
            }
        }
        let total = map.values().sum();
        if total == 0 {
            return Err(EntropyError::EmptyInput);
        }
        Ok(Self { counts: map, total })
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, symbol: Symbol) -> u64 {
        self.counts.get(&symbol).copied().unwrap_or(0)
    }

    /// Distinct symbols in ascending order with their counts.
    pub fn iter(&self) -> impl Iterator<Item = (Symbol, u64)> + '_ {
        self.counts.iter().map(|(&s, &c)| (s, c))
    }

    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    pub fn probability(&self, symbol: Symbol) -> f64 {
        self.count(symbol) as f64 / self.total as f64
    }

    /// Pointwise count addition.
    pub fn merge(&self, other: &SymbolHistogram) -> SymbolHistogram {
        let mut counts = self.counts.clone();
        for (&s, &c) in &other.counts {
            *counts.entry(s).or_insert(0) += c;
        }
        SymbolHistogram {
            counts,
            total: self.total + other.total,
        }
    }
}

/// Shannon entropy in bits per symbol.
pub fn empirical_entropy(h: &SymbolHistogram) -> f64 {
    let total = h.total as f64;
    let bits: f64 = h
        .counts
        .values()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    // A single bin gives -1 * log2(1) = -0.0.
    bits.max(0.0)
}

/// Hinge on the entropy excess over `h_ref` bits.
pub fn entropy_loss(h: &SymbolHistogram, h_ref: f64) -> f64 {
    (empirical_entropy(h) - h_ref).max(0.0)
}

pub fn mse(x: &[f64], x_hat: &[f64]) -> Result<f64, EntropyError> {
    if x.len() != x_hat.len() {
        return Err(EntropyError::ShapeMismatch {
            left: x.len(),
            right: x_hat.len(),
        });
    }
    if x.is_empty() {
        return Err(EntropyError::EmptyInput);
    }
    let sum: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub beta: f64,
    pub gamma: f64,
    pub h_ref: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            beta: 2.0,
            gamma: 2.0,
            h_ref: 0.7,
        }
    }
}

impl LossWeights {
    pub fn new(beta: f64, gamma: f64, h_ref: f64) -> Result<Self, EntropyError> {
        for (name, v) in [("beta", beta), ("gamma", gamma), ("h_ref", h_ref)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EntropyError::InvalidWeight(name));
            }
        }
        Ok(Self { beta, gamma, h_ref })
    }
}

/// `mse + beta * entropy_loss + gamma * task_loss`.
pub fn joint_loss(
    mse_val: f64,
    ent_loss: f64,
    task_loss: f64,
    w: &LossWeights,
) -> Result<f64, EntropyError> {
    for (name, v) in [("mse", mse_val), ("entropy", ent_loss), ("task", task_loss)] {
        if !v.is_finite() {
            return Err(EntropyError::NonFiniteInput(name));
        }
    }
    Ok(mse_val + w.beta * ent_loss + w.gamma * task_loss)
}

/// How symbol statistics are pooled when several frames are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistogramScope {
    /// One histogram over every frame.
    #[default]
    PerDataset,
    /// One histogram per frame.
    PerImage,
}

/// Histograms of `frames` under the requested pooling.
pub fn histograms(
    frames: &[&[Symbol]],
    scope: HistogramScope,
) -> Result<Vec<SymbolHistogram>, EntropyError> {
    match scope {
        HistogramScope::PerImage => frames
            .iter()
            .map(|f| SymbolHistogram::from_symbols(f))
            .collect(),
        HistogramScope::PerDataset => {
            let all: Vec<Symbol> = frames.iter().flat_map(|f| f.iter().copied()).collect();
            Ok(vec![SymbolHistogram::from_symbols(&all)?])
        }
    }
}
