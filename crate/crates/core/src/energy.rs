//! Per-frame energy, bandwidth and latency model.
//!
//! ```text
//! E_total = E_aps + E_tsv + E_inf + E_enc + E_huff + E_back
//! ```
//!
//! Every term is linear in its size argument. The baseline topology reads
//! the sensor out over the interface directly, so it has no TSV, encoder or
//! Huffman term.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netspec::{activation_bytes, TensorShape, WorkloadSummary};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error("invalid bit widths: {0}")]
    InvalidBits(String),
    #[error("inconsistent scenario: {0}")]
    TopologyError(String),
    #[error("invalid energy config: {0}")]
    InvalidConfig(String),
}

/// Per-operation energy constants, in joules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    /// Pixel read-out plus ADC, per pixel.
    pub e_pix: f64,
    /// Sensor to logic die, per byte.
    pub e_byte_tsv: f64,
    /// Off-sensor interface (MIPI), per byte.
    pub e_byte_inf: f64,
    pub e_mac: f64,
    /// SRAM read, per bit.
    pub e_sram_bit: f64,
    pub weight_bits: u32,
    pub e_huff_enc: f64,
    pub e_huff_dec: f64,
    /// Fixed per-frame back-end energy added on top of the back-end
    /// workload. Zero by default.
    pub backend_overhead: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            e_pix: 63.6e-12,
            e_byte_tsv: 6.25e-12,
            e_byte_inf: 100e-12,
            e_mac: 5e-15,
            e_sram_bit: 0.23e-12,
            weight_bits: 8,
            e_huff_enc: 0.96e-12,
            e_huff_dec: 1.15e-12,
            backend_overhead: 0.0,
        }
    }
}

impl EnergyConfig {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let positive = [
            ("e_pix", self.e_pix),
            ("e_byte_tsv", self.e_byte_tsv),
            ("e_byte_inf", self.e_byte_inf),
            ("e_mac", self.e_mac),
            ("e_sram_bit", self.e_sram_bit),
            ("e_huff_enc", self.e_huff_enc),
            ("e_huff_dec", self.e_huff_dec),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(EnergyError::InvalidConfig(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if self.weight_bits == 0 {
            return Err(EnergyError::InvalidConfig("weight_bits must be > 0".into()));
        }
        if !(self.backend_overhead.is_finite() && self.backend_overhead >= 0.0) {
            return Err(EnergyError::InvalidConfig(
                "backend_overhead must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Energy of reading one weight from SRAM.
    pub fn e_weight_read(&self) -> f64 {
        self.weight_bits as f64 * self.e_sram_bit
    }
}

pub fn aps_energy(n_pix: u64, cfg: &EnergyConfig) -> f64 {
    n_pix as f64 * cfg.e_pix
}

pub fn tsv_energy(bytes: u64, cfg: &EnergyConfig) -> f64 {
    bytes as f64 * cfg.e_byte_tsv
}

pub fn interface_energy(bytes: u64, cfg: &EnergyConfig) -> f64 {
    bytes as f64 * cfg.e_byte_inf
}

/// MAC energy plus one SRAM read per weight.
pub fn encoder_energy(w: &WorkloadSummary, cfg: &EnergyConfig) -> f64 {
    w.total_macs as f64 * cfg.e_mac + w.total_weights as f64 * cfg.e_weight_read()
}

/// Encode plus decode energy for `bytes` of fixed-width quantized symbols.
pub fn huffman_energy(bytes: u64, cfg: &EnergyConfig) -> f64 {
    bytes as f64 * (cfg.e_huff_enc + cfg.e_huff_dec)
}

/// Raw input bits over transmitted bits.
pub fn bandwidth_reduction(
    input: &TensorShape,
    input_bits: u32,
    out: &TensorShape,
    out_bits: u32,
    effective_bits: f64,
) -> Result<f64, EnergyError> {
    if input_bits == 0 || out_bits == 0 {
        return Err(EnergyError::InvalidBits("bit widths must be > 0".into()));
    }
    if !(effective_bits.is_finite() && effective_bits > 0.0) {
        return Err(EnergyError::InvalidBits(format!(
            "effective bits must be > 0, got {effective_bits}"
        )));
    }
    if effective_bits > out_bits as f64 {
        return Err(EnergyError::InvalidBits(format!(
            "effective bits {effective_bits} exceed symbol width {out_bits}"
        )));
    }
    let raw = input.element_count() as f64 * input_bits as f64;
    Ok(raw / (out.element_count() as f64 * effective_bits))
}

/// Bytes needed to carry `elements` at `effective_bits` each, rounded up.
pub fn compressed_bytes(elements: u64, effective_bits: f64) -> u64 {
    (elements as f64 * effective_bits / 8.0).ceil() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    InSensor,
    Baseline,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::InSensor => "in-sensor",
            Mode::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemTopology {
    pub mode: Mode,
    /// Off-sensor interface bandwidth, bytes per second.
    pub mipi_bandwidth: f64,
    /// TSV bandwidth as a multiple of the interface bandwidth.
    pub tsv_bandwidth_multiple: f64,
}

pub const DEFAULT_MIPI_BANDWIDTH: f64 = 1e9;
pub const DEFAULT_TSV_MULTIPLE: f64 = 200.0;

impl SystemTopology {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            mipi_bandwidth: DEFAULT_MIPI_BANDWIDTH,
            tsv_bandwidth_multiple: DEFAULT_TSV_MULTIPLE,
        }
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(self.mipi_bandwidth.is_finite() && self.mipi_bandwidth > 0.0) {
            return Err(EnergyError::TopologyError(
                "mipi_bandwidth must be > 0".into(),
            ));
        }
        if !(self.tsv_bandwidth_multiple.is_finite() && self.tsv_bandwidth_multiple > 1.0) {
            return Err(EnergyError::TopologyError(
                "tsv_bandwidth_multiple must be > 1".into(),
            ));
        }
        Ok(())
    }
}

/// Transfer time for `interface_bytes` over the interface plus `tsv_bytes`
/// over the TSV link.
pub fn latency_transfer(interface_bytes: u64, tsv_bytes: u64, topology: &SystemTopology) -> f64 {
    let inf = interface_bytes as f64 / topology.mipi_bandwidth;
    let tsv = tsv_bytes as f64 / (topology.mipi_bandwidth * topology.tsv_bandwidth_multiple);
    inf + tsv
}

/// MACs per joule in units of 10^12, i.e. TOPS/W with 1 op = 1 MAC.
pub fn tops_per_watt(macs: u64, energy: f64) -> f64 {
    macs as f64 / energy / 1e12
}

/// Which energy terms form the TOPS/W denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopsDefinition {
    /// Encoder compute and weight reads only.
    EncoderOnly,
    /// Encoder plus Huffman plus the TSV transfer feeding it.
    #[default]
    EncoderHuffmanTsv,
    /// Everything the sensor package spends after the pixel array.
    InSensorPipeline,
}

impl TopsDefinition {
    pub fn denominator(&self, r: &ScenarioResult) -> f64 {
        match self {
            TopsDefinition::EncoderOnly => r.e_enc,
            TopsDefinition::EncoderHuffmanTsv => r.e_enc + r.e_huff + r.e_tsv,
            TopsDefinition::InSensorPipeline => r.e_enc + r.e_huff + r.e_tsv + r.e_inf,
        }
    }
}

/// Everything needed to evaluate one frame under either topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub input: TensorShape,
    pub input_bits: u32,
    /// On-sensor encoder; its output is what gets quantized and coded.
    pub encoder: WorkloadSummary,
    pub quant_bits: u32,
    /// Huffman bits per symbol at the encoder output.
    pub effective_bits: f64,
    /// Off-chip task network fed by the decoded encoder output.
    pub backend: WorkloadSummary,
    /// Off-chip network of the baseline system, fed by the raw image.
    pub baseline_backend: WorkloadSummary,
    /// Bytes sent over the interface by the baseline; the raw image when
    /// unset.
    pub baseline_payload_bytes: Option<u64>,
    pub config: EnergyConfig,
    pub topology: SystemTopology,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub mode: Mode,
    pub e_aps: f64,
    pub e_tsv: f64,
    pub e_enc: f64,
    pub e_huff: f64,
    pub e_inf: f64,
    pub e_back: f64,
    pub e_total: f64,
    /// Bytes moved over the TSV link (A_TSV).
    pub tsv_bytes: u64,
    /// Bytes moved over the off-sensor interface (A_Size).
    pub bytes_over_interface: u64,
    pub bandwidth_reduction: f64,
    pub latency_transfer: f64,
    pub encoder_macs: u64,
    /// Under [`TopsDefinition::default`]; absent for the baseline.
    pub tops_per_watt: Option<f64>,
}

impl ScenarioResult {
    pub fn tops_per_watt_with(&self, def: TopsDefinition) -> Option<f64> {
        let e = def.denominator(self);
        (self.mode == Mode::InSensor && self.encoder_macs > 0 && e > 0.0)
            .then(|| tops_per_watt(self.encoder_macs, e))
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), EnergyError> {
        self.config.validate()?;
        self.topology.validate()?;
        let topo = |m: String| Err(EnergyError::TopologyError(m));
        if !(1..=32).contains(&self.input_bits) || !(1..=32).contains(&self.quant_bits) {
            return topo("input and quantizer bits must be in 1..=32".into());
        }
        if self.encoder.input != self.input {
            return topo(format!(
                "encoder expects {} but the sensor produces {}",
                self.encoder.input, self.input
            ));
        }
        if self.backend.input != self.encoder.output_shape {
            return topo(format!(
                "back-end expects {} but the encoder produces {}",
                self.backend.input, self.encoder.output_shape
            ));
        }
        if self.baseline_backend.input != self.input {
            return topo(format!(
                "baseline back-end expects {} but the sensor produces {}",
                self.baseline_backend.input, self.input
            ));
        }
        if !(self.effective_bits.is_finite()
            && self.effective_bits > 0.0
            && self.effective_bits <= self.quant_bits as f64)
        {
            return topo(format!(
                "effective bits {} not in (0, {}]",
                self.effective_bits, self.quant_bits
            ));
        }
        Ok(())
    }

    pub fn raw_image_bytes(&self) -> u64 {
        activation_bytes(&self.input, self.input_bits)
    }

    pub fn with_mode(&self, mode: Mode) -> Scenario {
        let mut s = self.clone();
        s.topology.mode = mode;
        s
    }
}

/// Evaluates the scenario under its topology's mode.
pub fn total_energy(s: &Scenario) -> Result<ScenarioResult, EnergyError> {
    s.validate()?;
    let cfg = &s.config;
    let n_pix = s.input.spatial();
    let raw_bytes = s.raw_image_bytes();
    let e_aps = aps_energy(n_pix, cfg);

    let mut r = match s.topology.mode {
        Mode::InSensor => {
            let out = s.encoder.output_shape;
            let a_enc = activation_bytes(&out, s.quant_bits);
            let a_size = compressed_bytes(out.element_count(), s.effective_bits);
            ScenarioResult {
                mode: Mode::InSensor,
                e_aps,
                e_tsv: tsv_energy(raw_bytes, cfg),
                e_enc: encoder_energy(&s.encoder, cfg),
                e_huff: huffman_energy(a_enc, cfg),
                e_inf: interface_energy(a_size, cfg),
                e_back: encoder_energy(&s.backend, cfg) + cfg.backend_overhead,
                e_total: 0.0,
                tsv_bytes: raw_bytes,
                bytes_over_interface: a_size,
                bandwidth_reduction: bandwidth_reduction(
                    &s.input,
                    s.input_bits,
                    &out,
                    s.quant_bits,
                    s.effective_bits,
                )?,
                latency_transfer: latency_transfer(a_size, raw_bytes, &s.topology),
                encoder_macs: s.encoder.total_macs,
                tops_per_watt: None,
            }
        }
        Mode::Baseline => {
            let payload = s.baseline_payload_bytes.unwrap_or(raw_bytes);
            if payload == 0 {
                return Err(EnergyError::TopologyError(
                    "baseline payload must be > 0 bytes".into(),
                ));
            }
            ScenarioResult {
                mode: Mode::Baseline,
                e_aps,
                e_tsv: 0.0,
                e_enc: 0.0,
                e_huff: 0.0,
                e_inf: interface_energy(payload, cfg),
                e_back: encoder_energy(&s.baseline_backend, cfg) + cfg.backend_overhead,
                e_total: 0.0,
                tsv_bytes: 0,
                bytes_over_interface: payload,
                bandwidth_reduction: (raw_bytes * 8) as f64 / (payload * 8) as f64,
                latency_transfer: latency_transfer(payload, 0, &s.topology),
                encoder_macs: 0,
                tops_per_watt: None,
            }
        }
    };
    r.e_total = r.e_aps + r.e_tsv + r.e_inf + r.e_enc + r.e_huff + r.e_back;
    r.tops_per_watt = r.tops_per_watt_with(TopsDefinition::default());
    Ok(r)
}

/// Formats joules as microjoules with four significant digits.
pub fn format_uj(joules: f64) -> String {
    let uj = joules * 1e6;
    if uj == 0.0 || !uj.is_finite() {
        return format!("{uj}");
    }
    let magnitude = uj.abs().log10().floor() as i32;
    let decimals = (3 - magnitude).max(0) as usize;
    format!("{uj:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(c: u32, h: u32, w: u32) -> TensorShape {
        TensorShape::new(c, h, w).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn unit_terms() {
        let cfg = EnergyConfig::default();
        assert!(close(aps_energy(1, &cfg), 63.6e-12, 1e-12));
        assert!(close(aps_energy(224 * 224, &cfg), 3.1911936e-6, 1e-12));
        assert!(close(tsv_energy(150_528, &cfg), 0.9408e-6, 1e-12));
        assert!(close(tsv_energy(1, &cfg), 6.25e-12, 1e-12));
        assert_eq!(tsv_energy(0, &cfg), 0.0);
        assert!(close(interface_energy(1, &cfg), 100e-12, 1e-12));
        assert!(close(interface_energy(13, &cfg), 1.3e-9, 1e-12));
        assert_eq!(interface_energy(0, &cfg), 0.0);
        assert!(close(huffman_energy(1, &cfg), 2.11e-12, 1e-12));
        assert!(close(huffman_energy(32, &cfg), 67.52e-12, 1e-12));
        assert_eq!(huffman_energy(0, &cfg), 0.0);
        assert!(close(cfg.e_weight_read(), 1.84e-12, 1e-12));
    }

    #[test]
    fn encoder_term() {
        let cfg = EnergyConfig::default();
        let mut w = WorkloadSummary::empty(shape(1, 1, 1));
        assert_eq!(encoder_energy(&w, &cfg), 0.0);
        w.total_macs = 1;
        w.total_weights = 1;
        assert!(close(encoder_energy(&w, &cfg), 5e-15 + 1.84e-12, 1e-12));
    }

    #[test]
    fn reductions() {
        let img = shape(3, 224, 224);
        let out = shape(4, 4, 4);
        assert_eq!(bandwidth_reduction(&img, 8, &out, 8, 8.0).unwrap(), 2352.0);
        let r = bandwidth_reduction(&img, 8, &out, 4, 1.57).unwrap();
        assert!((r - 11985.0).abs() / 11985.0 < 0.005, "{r}");
        assert_eq!(bandwidth_reduction(&img, 8, &img, 8, 8.0).unwrap(), 1.0);
        assert!(matches!(
            bandwidth_reduction(&img, 8, &out, 4, 4.5),
            Err(EnergyError::InvalidBits(_))
        ));
        assert!(bandwidth_reduction(&img, 8, &out, 4, 0.0).is_err());
        assert_eq!(compressed_bytes(64, 1.57), 13);
    }

    #[test]
    fn latency() {
        let t = SystemTopology::new(Mode::Baseline);
        assert_eq!(latency_transfer(0, 0, &t), 0.0);
        assert!(close(latency_transfer(150_528, 0, &t), 150.528e-6, 1e-12));
        let over_tsv = latency_transfer(0, 1000, &t);
        let over_inf = latency_transfer(1000, 0, &t);
        assert!(close(over_tsv * 200.0, over_inf, 1e-12));
    }

    #[test]
    fn tops() {
        assert!(close(tops_per_watt(1_000_000, 1e-6), 1.0, 1e-12));
        assert!(close(tops_per_watt(1, 5e-15), 200.0, 1e-12));
    }

    #[test]
    fn config_validation() {
        assert!(EnergyConfig::default().validate().is_ok());
        let cfg = EnergyConfig {
            e_mac: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg: EnergyConfig = toml::from_str("e_mac = 1e-14").unwrap();
        assert_eq!(cfg.e_mac, 1e-14);
        assert_eq!(cfg.e_pix, 63.6e-12);
        assert!(toml::from_str::<EnergyConfig>("e_bogus = 1").is_err());
    }

    #[test]
    fn uj_formatting() {
        assert_eq!(format_uj(3.1911936e-6), "3.191");
        assert_eq!(format_uj(0.9408e-6), "0.9408");
        assert_eq!(format_uj(169.9e-6), "169.9");
        assert_eq!(format_uj(1.3e-9), "0.001300");
        assert_eq!(format_uj(0.0), "0");
    }
}
