//! Design-space sweeps over encoder output dims, bit-widths and topologies,
//! plus the eye-tracking reduction report.
//!
//! A grid file names an encoder template whose `${d}` and `${s}` placeholders
//! are replaced per point:
//!
//! ```toml
//! name = "vww-resnet"
//! encoder_template = "../specs/tiny_resnet_vww.template.net"
//! d_values = [4, 16]
//! s_values = [1, 4]
//! bit_values = [4]
//! topologies = ["in-sensor", "baseline"]
//!
//! [effective_bits]
//! source = "synthetic"
//! sigma = 0.56
//! count = 100000
//! seed = 7
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{total_energy, EnergyConfig, Mode, Scenario, ScenarioResult};
use crate::netspec::{activation_bytes, parse_spec, TensorShape, WorkloadSummary};
use crate::scenario::{
    apply_overrides, load_spec_workload, read_text, workload_from_text, BaselineSection,
    BitsMeasurement, EffectiveBitsSource, ScenarioError, TopologySection,
};

pub const P2M_VWW_REDUCTION: f64 = 21.0;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub name: String,
    pub encoder_template: PathBuf,
    /// May also use `${d}` and `${s}`.
    pub backend_template: Option<PathBuf>,
    pub d_values: Vec<u32>,
    pub s_values: Vec<u32>,
    pub bit_values: Vec<u32>,
    #[serde(default = "both_modes")]
    pub topologies: Vec<Mode>,
    pub effective_bits: EffectiveBitsSource,
    pub baseline: Option<BaselineSection>,
    #[serde(default)]
    pub topology: TopologySection,
    #[serde(default)]
    pub energy: Option<toml::Table>,
    #[serde(default = "yes")]
    pub literature_rows: bool,
}

fn both_modes() -> Vec<Mode> {
    vec![Mode::InSensor, Mode::Baseline]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

/// One grid point or literature constant. Empty numeric fields mean "not
/// applicable" or "failed".
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub id: String,
    pub status: String,
    pub d: Option<u32>,
    pub s: Option<u32>,
    pub bits: Option<u32>,
    pub topology: Option<String>,
    pub output_shape: Option<String>,
    pub effective_bits: Option<f64>,
    pub entropy: Option<f64>,
    pub bandwidth_reduction: Option<f64>,
    pub bytes_over_interface: Option<u64>,
    pub tsv_bytes: Option<u64>,
    pub e_aps_j: Option<f64>,
    pub e_tsv_j: Option<f64>,
    pub e_enc_j: Option<f64>,
    pub e_huff_j: Option<f64>,
    pub e_inf_j: Option<f64>,
    pub e_back_j: Option<f64>,
    pub e_total_j: Option<f64>,
    pub latency_transfer_s: Option<f64>,
    pub encoder_macs: Option<u64>,
    pub tops_per_watt: Option<f64>,
    pub note: String,
}

impl ReportRow {
    fn blank(id: String, status: &str) -> Self {
        ReportRow {
            id,
            status: status.into(),
            d: None,
            s: None,
            bits: None,
            topology: None,
            output_shape: None,
            effective_bits: None,
            entropy: None,
            bandwidth_reduction: None,
            bytes_over_interface: None,
            tsv_bytes: None,
            e_aps_j: None,
            e_tsv_j: None,
            e_enc_j: None,
            e_huff_j: None,
            e_inf_j: None,
            e_back_j: None,
            e_total_j: None,
            latency_transfer_s: None,
            encoder_macs: None,
            tops_per_watt: None,
            note: String::new(),
        }
    }

    fn fill(&mut self, r: &ScenarioResult) {
        self.bandwidth_reduction = Some(r.bandwidth_reduction);
        self.bytes_over_interface = Some(r.bytes_over_interface);
        self.tsv_bytes = Some(r.tsv_bytes);
        self.e_aps_j = Some(r.e_aps);
        self.e_tsv_j = Some(r.e_tsv);
        self.e_enc_j = Some(r.e_enc);
        self.e_huff_j = Some(r.e_huff);
        self.e_inf_j = Some(r.e_inf);
        self.e_back_j = Some(r.e_back);
        self.e_total_j = Some(r.e_total);
        self.latency_transfer_s = Some(r.latency_transfer);
        self.encoder_macs = Some(r.encoder_macs);
        self.tops_per_watt = r.tops_per_watt;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub name: String,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn render(&self, format: ReportFormat) -> Result<String, String> {
        match format {
            ReportFormat::Json => serde_json::to_string_pretty(self)
                .map(|s| s + "\n")
                .map_err(|e| e.to_string()),
            ReportFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                for row in &self.rows {
                    w.serialize(row).map_err(|e| e.to_string())?;
                }
                let bytes = w.into_inner().map_err(|e| e.to_string())?;
                String::from_utf8(bytes).map_err(|e| e.to_string())
            }
        }
    }

    pub fn row(&self, id: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.id == id)
    }
}

pub fn point_id(grid: &str, d: u32, s: u32, bits: u32, mode: Mode) -> String {
    format!("{grid}/d{d:04}-s{s:04}-b{bits:02}-{}", mode.label())
}

pub fn fill_template(template: &str, d: u32, s: u32) -> String {
    template
        .replace("${d}", &d.to_string())
        .replace("${s}", &s.to_string())
}

impl SweepGrid {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ScenarioError> {
        let grid: SweepGrid = toml::from_str(text).map_err(|e| ScenarioError::Syntax {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        grid.validate().map_err(|message| ScenarioError::Syntax {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.d_values.is_empty()
            || self.s_values.is_empty()
            || self.bit_values.is_empty()
            || self.topologies.is_empty()
        {
            return Err("grid axes must be nonempty".into());
        }
        if let EffectiveBitsSource::Fixed { .. } = self.effective_bits {
            return Err("sweeps measure effective bits; use a tensor or synthetic source".into());
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        if let EffectiveBitsSource::Synthetic { seed: s, .. } = &mut self.effective_bits {
            *s = seed;
        }
        self
    }

    pub fn point_count(&self) -> usize {
        self.d_values.len() * self.s_values.len() * self.bit_values.len() * self.topologies.len()
    }
}

struct Prepared {
    encoder_template: String,
    encoder_path: PathBuf,
    backend_template: Option<(String, PathBuf)>,
    baseline_backend: Option<WorkloadSummary>,
    config: EnergyConfig,
}

fn evaluate_point(
    grid: &SweepGrid,
    prep: &Prepared,
    measured: &BTreeMap<u32, Result<BitsMeasurement, String>>,
    d: u32,
    s: u32,
    bits: u32,
    mode: Mode,
) -> ReportRow {
    let mut row = ReportRow::blank(point_id(&grid.name, d, s, bits, mode), "ok");
    row.d = Some(d);
    row.s = Some(s);
    row.bits = Some(bits);
    row.topology = Some(mode.label().into());
    if let Err(e) = run_point(grid, prep, measured, d, s, bits, mode, &mut row) {
        row.status = "error".into();
        row.note = e;
    }
    row
}

#[allow(clippy::too_many_arguments)]
fn run_point(
    grid: &SweepGrid,
    prep: &Prepared,
    measured: &BTreeMap<u32, Result<BitsMeasurement, String>>,
    d: u32,
    s: u32,
    bits: u32,
    mode: Mode,
    row: &mut ReportRow,
) -> Result<(), String> {
    let text = fill_template(&prep.encoder_template, d, s);
    let encoder = workload_from_text(&text, &prep.encoder_path).map_err(|e| e.to_string())?;
    let input_bits = parse_spec(&text).map_err(|e| e.to_string())?.input_bits;
    row.output_shape = Some(encoder.output_shape.to_string());
    let m = measured
        .get(&bits)
        .expect("every bit-width is measured")
        .clone()?;
    row.effective_bits = Some(m.effective_bits);
    row.entropy = m.entropy;

    let backend = match &prep.backend_template {
        Some((t, p)) => {
            workload_from_text(&fill_template(t, d, s), p).map_err(|e| e.to_string())?
        }
        None => WorkloadSummary::empty(encoder.output_shape),
    };
    let baseline_backend = prep
        .baseline_backend
        .clone()
        .unwrap_or_else(|| WorkloadSummary::empty(encoder.input));
    let scenario = Scenario {
        name: row.id.clone(),
        input: encoder.input,
        input_bits,
        encoder,
        quant_bits: bits,
        effective_bits: m.effective_bits,
        backend,
        baseline_backend,
        baseline_payload_bytes: grid.baseline.as_ref().and_then(|b| b.payload_bytes),
        config: prep.config,
        topology: grid.topology.topology(mode),
    };
    let r = total_energy(&scenario).map_err(|e| e.to_string())?;
    row.fill(&r);
    Ok(())
}

fn literature_rows() -> Vec<ReportRow> {
    let mut p2m = ReportRow::blank("literature/p2m-vww".into(), "literature");
    p2m.bandwidth_reduction = Some(P2M_VWW_REDUCTION);
    p2m.note = "published P2M bandwidth reduction on VWW; not modeled".into();
    let mut ours = ReportRow::blank("literature/oasis-vww-over-p2m".into(), "literature");
    ours.bandwidth_reduction = Some(570.7);
    ours.note = "published 11985x over P2M 21x; compare with modeled d4 s4 b4 rows".into();
    vec![p2m, ours]
}

/// Evaluates every grid point. Point failures land in the row; only
/// problems shared by the whole grid are returned as errors.
pub fn run_sweep(
    grid: &SweepGrid,
    base_dir: &Path,
    base_config: &EnergyConfig,
) -> Result<Report, ScenarioError> {
    grid.validate().map_err(|message| ScenarioError::Syntax {
        path: base_dir.to_path_buf(),
        message,
    })?;
    let encoder_path = base_dir.join(&grid.encoder_template);
    let backend_template = match &grid.backend_template {
        Some(p) => {
            let p = base_dir.join(p);
            Some((read_text(&p)?, p))
        }
        None => None,
    };
    let baseline_backend = match grid.baseline.as_ref().and_then(|b| b.backend.as_ref()) {
        Some(p) => Some(load_spec_workload(&base_dir.join(p))?),
        None => None,
    };
    let config = apply_overrides(base_config, grid.energy.as_ref())
        .map_err(|m| ScenarioError::Energy(crate::energy::EnergyError::InvalidConfig(m)))?;
    config.validate()?;
    let prep = Prepared {
        encoder_template: read_text(&encoder_path)?,
        encoder_path,
        backend_template,
        baseline_backend,
        config,
    };

    let measured: BTreeMap<u32, Result<BitsMeasurement, String>> = grid
        .bit_values
        .par_iter()
        .map(|&b| {
            let m = if (2..=8).contains(&b) {
                grid.effective_bits
                    .measure(b, base_dir)
                    .map_err(|e| e.to_string())
            } else {
                Err(format!("quantizer bits must be in 2..=8, got {b}"))
            };
            (b, m)
        })
        .collect();

    let mut points = Vec::with_capacity(grid.point_count());
    for &d in &grid.d_values {
        for &s in &grid.s_values {
            for &bits in &grid.bit_values {
                for &mode in &grid.topologies {
                    points.push((d, s, bits, mode));
                }
            }
        }
    }
    let mut rows: Vec<ReportRow> = points
        .par_iter()
        .map(|&(d, s, bits, mode)| evaluate_point(grid, &prep, &measured, d, s, bits, mode))
        .collect();
    if grid.literature_rows {
        rows.extend(literature_rows());
    }
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    rows.dedup_by(|a, b| a.id == b.id);
    Ok(Report {
        name: grid.name.clone(),
        rows,
    })
}

pub fn load_and_run_sweep(
    path: &Path,
    seed: Option<u64>,
    base_config: &EnergyConfig,
) -> Result<Report, ScenarioError> {
    let text = read_text(path)?;
    let mut grid = SweepGrid::parse(&text, path)?;
    if let Some(seed) = seed {
        grid = grid.with_seed(seed);
    }
    run_sweep(&grid, path.parent().unwrap_or(Path::new(".")), base_config)
}

/// Activation sizes behind the eye-tracking comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeTrackingConfig {
    pub input: TensorShape,
    pub input_bits: u32,
    /// Output of the unmodified segmentation encoder.
    pub baseline_output: TensorShape,
    pub baseline_bits: u32,
    pub output: TensorShape,
    pub quant_bits: u32,
    /// Fixed-width bits over Huffman bits.
    pub huffman_factor: f64,
    pub roi_factor: f64,
}

impl Default for EyeTrackingConfig {
    fn default() -> Self {
        let shape = |c, h, w| TensorShape::new(c, h, w).expect("nonzero dims");
        Self {
            input: shape(1, 400, 640),
            input_bits: 8,
            baseline_output: shape(32, 25, 40),
            baseline_bits: 8,
            output: shape(4, 25, 40),
            quant_bits: 4,
            huffman_factor: 1.5,
            roi_factor: 1.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EyeTrackingLine {
    pub label: String,
    pub value: f64,
    /// Published figure this line is checked against, if any.
    pub reported: Option<f64>,
}

impl EyeTrackingLine {
    pub fn deviation(&self) -> Option<f64> {
        self.reported.map(|r| (self.value - r) / r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EyeTrackingReport {
    pub config: EyeTrackingConfig,
    pub effective_bits: f64,
    pub raw_reduction: f64,
    pub raw_reduction_vs_baseline: f64,
    pub huffman_reduction: f64,
    pub huffman_reduction_vs_baseline: f64,
    pub roi_huffman_reduction: f64,
    pub lines: Vec<EyeTrackingLine>,
}

pub fn eye_tracking_report(cfg: &EyeTrackingConfig) -> Result<EyeTrackingReport, String> {
    if !(cfg.huffman_factor.is_finite() && cfg.huffman_factor >= 1.0) {
        return Err("huffman factor must be >= 1".into());
    }
    if !(cfg.roi_factor.is_finite() && cfg.roi_factor >= 1.0) {
        return Err("ROI factor must be >= 1".into());
    }
    let bits = |s: &TensorShape, b: u32| s.element_count() as f64 * b as f64;
    let input = bits(&cfg.input, cfg.input_bits);
    let base = bits(&cfg.baseline_output, cfg.baseline_bits);
    let out = bits(&cfg.output, cfg.quant_bits);
    let eff = cfg.quant_bits as f64 / cfg.huffman_factor;
    let raw = input / out;
    let raw_base = base / out;
    let huff = raw * cfg.huffman_factor;
    let huff_base = raw_base * cfg.huffman_factor;
    let roi = huff * cfg.roi_factor;
    let line = |label: &str, value, reported| EyeTrackingLine {
        label: label.into(),
        value,
        reported,
    };
    Ok(EyeTrackingReport {
        config: *cfg,
        effective_bits: eff,
        raw_reduction: raw,
        raw_reduction_vs_baseline: raw_base,
        huffman_reduction: huff,
        huffman_reduction_vs_baseline: huff_base,
        roi_huffman_reduction: roi,
        lines: vec![
            line("raw bits, vs input", raw, Some(192.0)),
            line("raw bits, vs baseline output", raw_base, Some(24.0)),
            line("huffman-adjusted, vs input", huff, Some(192.0)),
            line(
                "huffman-adjusted, vs baseline output",
                huff_base,
                Some(24.0),
            ),
            line("huffman-adjusted with ROI, vs input", roi, Some(364.0)),
        ],
    })
}

impl EyeTrackingReport {
    pub fn render_text(&self) -> String {
        let c = &self.config;
        let mut s = format!(
            "input {} @ {} bit = {} B\nbaseline encoder output {} @ {} bit = {} B\nreduced output {} @ {} bit = {} B\n",
            c.input,
            c.input_bits,
            activation_bytes(&c.input, c.input_bits),
            c.baseline_output,
            c.baseline_bits,
            activation_bytes(&c.baseline_output, c.baseline_bits),
            c.output,
            c.quant_bits,
            activation_bytes(&c.output, c.quant_bits),
        );
        s += &format!(
            "huffman factor {} (effective {:.3} bits), ROI factor {}\n\n",
            c.huffman_factor, self.effective_bits, c.roi_factor
        );
        s += &format!(
            "{:<40} {:>10} {:>10} {:>9}\n",
            "reduction", "model", "reported", "delta"
        );
        for l in &self.lines {
            let (rep, dev) = match (l.reported, l.deviation()) {
                (Some(r), Some(d)) => (format!("{r}x"), format!("{:+.1}%", d * 100.0)),
                _ => ("-".into(), "-".into()),
            };
            s += &format!(
                "{:<40} {:>10} {:>10} {:>9}\n",
                l.label,
                format!("{:.1}x", l.value),
                rep,
                dev
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eye_tracking_defaults() {
        let r = eye_tracking_report(&EyeTrackingConfig::default()).unwrap();
        assert_eq!(r.raw_reduction, 128.0);
        assert_eq!(r.raw_reduction_vs_baseline, 16.0);
        assert_eq!(r.huffman_reduction, 192.0);
        assert_eq!(r.huffman_reduction_vs_baseline, 24.0);
        assert!((r.roi_huffman_reduction - 364.8).abs() < 1e-9);
        assert!(r.render_text().contains("128.0x"));
    }

    #[test]
    fn template_substitution() {
        assert_eq!(
            fill_template("conv c${d}\npool output=${s}", 4, 2),
            "conv c4\npool output=2"
        );
        assert_eq!(
            point_id("g", 4, 4, 4, Mode::InSensor),
            "g/d0004-s0004-b04-in-sensor"
        );
    }

    #[test]
    fn grid_rejects_empty_axes_and_fixed_bits() {
        let base =
            "name='g'\nencoder_template='t.net'\nd_values=[4]\ns_values=[4]\nbit_values=[4]\n";
        let ok = format!("{base}[effective_bits]\nsource='synthetic'\nsigma=0.5\n");
        assert!(SweepGrid::parse(&ok, Path::new("g.toml")).is_ok());
        let fixed = format!("{base}[effective_bits]\nsource='fixed'\nvalue=1.5\n");
        assert!(SweepGrid::parse(&fixed, Path::new("g.toml")).is_err());
        let empty = ok.replace("d_values=[4]", "d_values=[]");
        assert!(SweepGrid::parse(&empty, Path::new("g.toml")).is_err());
    }
}
