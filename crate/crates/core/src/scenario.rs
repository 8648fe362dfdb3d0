//! Scenario files: TOML bundles that tie network specs, symbol statistics
//! and energy constants into an evaluable [`Scenario`].
//!
//! Paths inside a scenario are resolved relative to the scenario file.
//!
//! ```toml
//! name = "vww-swinvit"
//! encoder = "../specs/tiny_swinvit_vww.net"
//! backend = "../specs/vww_head_4x4x4.net"   # optional
//! quant_bits = 4
//!
//! [effective_bits]
//! source = "synthetic"        # or "fixed" (value = ..) / "tensor" (path = ..)
//! sigma = 0.56
//! count = 100000
//! seed = 1
//!
//! [baseline]
//! backend = "../specs/swinvit_vww_baseline.net"
//! payload_bytes = 995000      # optional, raw image when absent
//!
//! [topology]
//! mipi_bandwidth = 1e9
//! tsv_bandwidth_multiple = 200
//!
//! [energy]                    # EnergyConfig overrides, joules
//! backend_overhead = 5e-5
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{
    EnergyConfig, EnergyError, Mode, Scenario, SystemTopology, DEFAULT_MIPI_BANDWIDTH,
    DEFAULT_TSV_MULTIPLE,
};
use crate::entropy::{empirical_entropy, SymbolHistogram};
use crate::huffman::{avg_code_length, build_codebook, HuffmanError};
use crate::netspec::{count_macs, parse_spec, SpecError, WorkloadSummary};
use crate::quantizer::symbol_limit;
use crate::tensorio::{
    read_tensor, sample_symbols, SyntheticDistribution, TensorData, TensorError,
};
use crate::Symbol;

/// Environment variable naming a default [`EnergyConfig`] override file.
pub const CONFIG_ENV: &str = "OASIS_CONFIG";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Spec { path: PathBuf, source: SpecError },
    #[error("{path}: {source}")]
    Tensor { path: PathBuf, source: TensorError },
    #[error("symbol data: {0}")]
    Data(String),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

impl From<HuffmanError> for ScenarioError {
    fn from(e: HuffmanError) -> Self {
        ScenarioError::Data(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum EffectiveBitsSource {
    /// Taken as given.
    Fixed { value: f64 },
    /// Measured on a quantized symbol tensor file.
    Tensor { path: PathBuf },
    /// Measured on a seeded discretized-Gaussian stream.
    Synthetic {
        sigma: f64,
        #[serde(default = "default_count")]
        count: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_count() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub backend: Option<PathBuf>,
    pub payload_bytes: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    #[serde(default = "default_mipi")]
    pub mipi_bandwidth: f64,
    #[serde(default = "default_tsv_multiple")]
    pub tsv_bandwidth_multiple: f64,
}

fn default_mipi() -> f64 {
    DEFAULT_MIPI_BANDWIDTH
}

fn default_tsv_multiple() -> f64 {
    DEFAULT_TSV_MULTIPLE
}

impl Default for TopologySection {
    fn default() -> Self {
        Self {
            mipi_bandwidth: DEFAULT_MIPI_BANDWIDTH,
            tsv_bandwidth_multiple: DEFAULT_TSV_MULTIPLE,
        }
    }
}

impl TopologySection {
    pub fn topology(&self, mode: Mode) -> SystemTopology {
        SystemTopology {
            mode,
            mipi_bandwidth: self.mipi_bandwidth,
            tsv_bandwidth_multiple: self.tsv_bandwidth_multiple,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub encoder: PathBuf,
    pub backend: Option<PathBuf>,
    pub quant_bits: u32,
    pub effective_bits: EffectiveBitsSource,
    pub baseline: Option<BaselineSection>,
    #[serde(default)]
    pub topology: TopologySection,
    #[serde(default)]
    pub energy: Option<toml::Table>,
}

/// Symbol statistics behind an effective bit-width.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitsMeasurement {
    pub effective_bits: f64,
    /// `None` for fixed values.
    pub entropy: Option<f64>,
    pub symbols: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub measurement: BitsMeasurement,
}

pub(crate) fn read_text(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_spec_workload(path: &Path) -> Result<WorkloadSummary, ScenarioError> {
    let text = read_text(path)?;
    workload_from_text(&text, path)
}

pub(crate) fn workload_from_text(
    text: &str,
    path: &Path,
) -> Result<WorkloadSummary, ScenarioError> {
    let spec = parse_spec(text).map_err(|source| ScenarioError::Spec {
        path: path.to_path_buf(),
        source,
    })?;
    count_macs(&spec).map_err(|source| ScenarioError::Spec {
        path: path.to_path_buf(),
        source,
    })
}

/// Huffman bits per symbol of `symbols` under their own codebook.
pub fn measure_symbols(symbols: &[Symbol]) -> Result<BitsMeasurement, ScenarioError> {
    let h =
        SymbolHistogram::from_symbols(symbols).map_err(|e| ScenarioError::Data(e.to_string()))?;
    let cb = build_codebook(&h)?;
    Ok(BitsMeasurement {
        effective_bits: avg_code_length(&cb, &h)?,
        entropy: Some(empirical_entropy(&h)),
        symbols: h.total(),
    })
}

pub fn check_symbol_range(symbols: &[Symbol], bits: u32) -> Result<(), ScenarioError> {
    let limit = symbol_limit(bits);
    match symbols.iter().find(|&&s| (s as i32).abs() > limit) {
        Some(s) => Err(ScenarioError::Data(format!(
            "symbol {s} outside the {bits}-bit set ±{limit}"
        ))),
        None => Ok(()),
    }
}

impl EffectiveBitsSource {
    pub fn measure(&self, bits: u32, base_dir: &Path) -> Result<BitsMeasurement, ScenarioError> {
        match self {
            EffectiveBitsSource::Fixed { value } => Ok(BitsMeasurement {
                effective_bits: *value,
                entropy: None,
                symbols: 0,
            }),
            EffectiveBitsSource::Tensor { path } => {
                let path = base_dir.join(path);
                let bytes = fs::read(&path).map_err(|source| ScenarioError::Io {
                    path: path.clone(),
                    source,
                })?;
                let t = read_tensor(&bytes).map_err(|source| ScenarioError::Tensor {
                    path: path.clone(),
                    source,
                })?;
                let TensorData::I8(symbols) = t.into_data() else {
                    return Err(ScenarioError::Data(format!(
                        "{}: expected an i8 symbol tensor",
                        path.display()
                    )));
                };
                check_symbol_range(&symbols, bits)?;
                measure_symbols(&symbols)
            }
            EffectiveBitsSource::Synthetic { sigma, count, seed } => {
                let d = SyntheticDistribution::gaussian(*sigma, bits)
                    .map_err(|e| ScenarioError::Data(e.to_string()))?;
                if *count == 0 {
                    return Err(ScenarioError::Data("synthetic count must be > 0".into()));
                }
                measure_symbols(&sample_symbols(&d, *count, *seed))
            }
        }
    }
}

/// Layers `overrides` on top of `base`.
pub fn apply_overrides(
    base: &EnergyConfig,
    overrides: Option<&toml::Table>,
) -> Result<EnergyConfig, String> {
    let Some(overrides) = overrides else {
        return Ok(*base);
    };
    let mut table = toml::Table::try_from(base).map_err(|e| e.to_string())?;
    for (k, v) in overrides {
        table.insert(k.clone(), v.clone());
    }
    let cfg: EnergyConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| e.to_string())?;
    Ok(cfg)
}

/// Default constants, overridden by the file named in `OASIS_CONFIG` if set.
pub fn base_config_from_env() -> Result<EnergyConfig, ScenarioError> {
    match std::env::var_os(CONFIG_ENV) {
        Some(p) => load_config_file(Path::new(&p)),
        None => Ok(EnergyConfig::default()),
    }
}

pub fn load_config_file(path: &Path) -> Result<EnergyConfig, ScenarioError> {
    let text = read_text(path)?;
    let cfg: EnergyConfig = toml::from_str(&text).map_err(|e| ScenarioError::Syntax {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Syntax {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn resolve(
        &self,
        base_dir: &Path,
        base_config: &EnergyConfig,
    ) -> Result<LoadedScenario, ScenarioError> {
        let encoder = load_spec_workload(&base_dir.join(&self.encoder))?;
        let backend = match &self.backend {
            Some(p) => load_spec_workload(&base_dir.join(p))?,
            None => WorkloadSummary::empty(encoder.output_shape),
        };
        let (baseline_backend, baseline_payload_bytes) = match &self.baseline {
            Some(b) => (
                match &b.backend {
                    Some(p) => load_spec_workload(&base_dir.join(p))?,
                    None => WorkloadSummary::empty(encoder.input),
                },
                b.payload_bytes,
            ),
            None => (WorkloadSummary::empty(encoder.input), None),
        };
        let config = apply_overrides(base_config, self.energy.as_ref())
            .map_err(|message| ScenarioError::Energy(EnergyError::InvalidConfig(message)))?;
        let measurement = self.effective_bits.measure(self.quant_bits, base_dir)?;
        let input_bits = encoder_input_bits(&base_dir.join(&self.encoder))?;

        let scenario = Scenario {
            name: self.name.clone(),
            input: encoder.input,
            input_bits,
            encoder,
            quant_bits: self.quant_bits,
            effective_bits: measurement.effective_bits,
            backend,
            baseline_backend,
            baseline_payload_bytes,
            config,
            topology: self.topology.topology(Mode::InSensor),
        };
        scenario.validate()?;
        Ok(LoadedScenario {
            scenario,
            measurement,
        })
    }
}

fn encoder_input_bits(path: &Path) -> Result<u32, ScenarioError> {
    let text = read_text(path)?;
    parse_spec(&text)
        .map(|s| s.input_bits)
        .map_err(|source| ScenarioError::Spec {
            path: path.to_path_buf(),
            source,
        })
}

pub fn load_scenario(
    path: &Path,
    base_config: &EnergyConfig,
) -> Result<LoadedScenario, ScenarioError> {
    let text = read_text(path)?;
    let file = ScenarioFile::parse(&text, path)?;
    let base_dir = path.parent().unwrap_or(Path::new("."));
    file.resolve(base_dir, base_config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_layer_on_base() {
        let base = EnergyConfig {
            e_mac: 1e-14,
            ..Default::default()
        };
        let table: toml::Table = toml::from_str("e_pix = 1e-11").unwrap();
        let cfg = apply_overrides(&base, Some(&table)).unwrap();
        assert_eq!(cfg.e_mac, 1e-14);
        assert_eq!(cfg.e_pix, 1e-11);
        let bad: toml::Table = toml::from_str("e_nope = 1").unwrap();
        assert!(apply_overrides(&base, Some(&bad)).is_err());
    }

    #[test]
    fn effective_bits_sources() {
        let f = EffectiveBitsSource::Fixed { value: 1.57 };
        assert_eq!(f.measure(4, Path::new(".")).unwrap().effective_bits, 1.57);
        let s = EffectiveBitsSource::Synthetic {
            sigma: 0.0,
            count: 10,
            seed: 0,
        };
        let m = s.measure(4, Path::new(".")).unwrap();
        assert_eq!(m.effective_bits, 1.0);
        assert_eq!(m.entropy, Some(0.0));
        let parsed: EffectiveBitsSource =
            toml::from_str("source = \"synthetic\"\nsigma = 0.5").unwrap();
        assert_eq!(
            parsed,
            EffectiveBitsSource::Synthetic {
                sigma: 0.5,
                count: 100_000,
                seed: 0
            }
        );
    }

    #[test]
    fn symbol_range_check() {
        assert!(check_symbol_range(&[-7, 7, 0], 4).is_ok());
        assert!(matches!(
            check_symbol_range(&[8], 4),
            Err(ScenarioError::Data(_))
        ));
    }
}
