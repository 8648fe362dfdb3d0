use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use oasis::dse::{eye_tracking_report, load_and_run_sweep, EyeTrackingConfig, ReportFormat};
use oasis::energy::{format_uj, total_energy, Mode, ScenarioResult};
use oasis::entropy::{empirical_entropy, SymbolHistogram};
use oasis::huffman::{avg_code_length, build_codebook, decode, encode, EncodedStream};
use oasis::netspec::{count_macs, parse_spec, WorkloadSummary};
use oasis::scenario::{base_config_from_env, check_symbol_range, load_scenario, ScenarioError};
use oasis::tensorio::{
    fit_sigma, read_tensor, sample_symbols, write_tensor, SyntheticDistribution, TensorData,
    TensorFile,
};

const EXIT_PARSE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_SCENARIO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "oasis",
    version,
    about = "In-sensor compression and energy model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-layer shapes, MACs and weights of a network spec.
    Analyze {
        spec: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Huffman-code an i8 symbol tensor into an OASH stream.
    Compress {
        tensor: PathBuf,
        #[arg(long)]
        bits: u32,
        /// Reuse the code table of an existing stream.
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Decode an OASH stream into a 1-D i8 tensor.
    Decompress {
        stream: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Energy breakdown of a scenario under both topologies.
    Energy {
        scenario: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a sweep grid and write a report.
    Sweep {
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Overrides the grid's synthetic symbol seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Eye-tracking bandwidth reduction report.
    Eyetrack {
        #[arg(long, default_value_t = 1.5)]
        huffman_factor: f64,
        #[arg(long, default_value_t = 1.9)]
        roi_factor: f64,
        #[arg(long)]
        json: bool,
    },
    /// Gaussian sigma whose Huffman code length hits a target.
    FitSigma {
        #[arg(long)]
        target: f64,
        #[arg(long, default_value_t = 4)]
        bits: u32,
    },
    /// Write a seeded discretized-Gaussian symbol tensor.
    Synth {
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 4)]
        bits: u32,
        #[arg(long, default_value_t = 100_000)]
        count: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match e {
            ScenarioError::Io { .. }
            | ScenarioError::Syntax { .. }
            | ScenarioError::Spec { .. } => EXIT_PARSE,
            ScenarioError::Tensor { .. } | ScenarioError::Data(_) => EXIT_DATA,
            ScenarioError::Energy(_) => EXIT_SCENARIO,
        };
        fail(code, e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn read_bytes(path: &Path, code: u8) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| fail(code, format!("{}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CmdResult {
    fs::write(path, bytes).map_err(|e| fail(EXIT_DATA, format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize")
}

fn analyze(spec: &Path, as_json: bool) -> CmdResult {
    let text = fs::read_to_string(spec)
        .map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", spec.display())))?;
    let net =
        parse_spec(&text).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", spec.display())))?;
    let w = count_macs(&net).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", spec.display())))?;
    if as_json {
        println!(
            "{}",
            to_json(&json!({ "name": net.name, "input_bits": net.input_bits, "workload": w }))
        );
        return Ok(());
    }
    print_workload(&net.name, &w);
    Ok(())
}

fn print_workload(name: &str, w: &WorkloadSummary) {
    if !name.is_empty() {
        println!("{name}");
    }
    println!("input {}", w.input);
    println!(
        "{:>3}  {:<18} {:>14} {:>16} {:>12}",
        "#", "layer", "output", "macs", "weights"
    );
    for (i, l) in w.per_layer.iter().enumerate() {
        println!(
            "{:>3}  {:<18} {:>14} {:>16} {:>12}",
            i + 1,
            l.kind.to_string(),
            l.output_shape.to_string(),
            l.macs,
            l.weights
        );
    }
    println!(
        "{:>3}  {:<18} {:>14} {:>16} {:>12}",
        "",
        "total",
        w.output_shape.to_string(),
        w.total_macs,
        w.total_weights
    );
}

fn load_symbols(path: &Path) -> Result<(Vec<u32>, Vec<i8>), Failure> {
    let bytes = read_bytes(path, EXIT_DATA)?;
    let t = read_tensor(&bytes).map_err(|e| fail(EXIT_DATA, format!("{}: {e}", path.display())))?;
    let dims = t.dims().to_vec();
    match t.into_data() {
        TensorData::I8(s) => Ok((dims, s)),
        TensorData::F32(_) => Err(fail(
            EXIT_DATA,
            format!("{}: expected i8 symbols, found f32", path.display()),
        )),
    }
}

fn compress(
    tensor: &Path,
    bits: u32,
    codebook: Option<&Path>,
    out: Option<&Path>,
    as_json: bool,
) -> CmdResult {
    if !(2..=8).contains(&bits) {
        return Err(fail(
            EXIT_DATA,
            format!("--bits must be in 2..=8, got {bits}"),
        ));
    }
    let (_, symbols) = load_symbols(tensor)?;
    check_symbol_range(&symbols, bits)?;
    let hist =
        SymbolHistogram::from_symbols(&symbols).map_err(|e| fail(EXIT_DATA, e.to_string()))?;
    let cb = match codebook {
        Some(p) => {
            let bytes = read_bytes(p, EXIT_DATA)?;
            EncodedStream::from_bytes(&bytes)
                .map_err(|e| fail(EXIT_DATA, format!("{}: {e}", p.display())))?
                .codebook
        }
        None => build_codebook(&hist).map_err(|e| fail(EXIT_DATA, e.to_string()))?,
    };
    let stream = encode(&symbols, &cb).map_err(|e| fail(EXIT_DATA, e.to_string()))?;
    let avg = avg_code_length(&cb, &hist).map_err(|e| fail(EXIT_DATA, e.to_string()))?;
    let bytes = stream.to_bytes();
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| tensor.with_extension("oash"));
    write_bytes(&out, &bytes)?;

    let entropy = empirical_entropy(&hist);
    let stats = json!({
        "symbols": symbols.len(),
        "entropy_bits": entropy,
        "avg_code_length": avg,
        "payload_bits_per_symbol": stream.bits_per_symbol(),
        "fixed_width_bits": bits,
        "compression_ratio": bits as f64 / avg,
        "stream_bytes": bytes.len(),
        "out": out.display().to_string(),
    });
    if as_json {
        println!("{}", to_json(&stats));
    } else {
        println!("symbols            {}", symbols.len());
        println!("entropy            {entropy:.4} bits");
        println!("avg code length    {avg:.4} bits");
        println!(
            "payload            {:.4} bits/symbol",
            stream.bits_per_symbol()
        );
        println!("ratio vs {bits}-bit    {:.3}x", bits as f64 / avg);
        println!("wrote {} ({} bytes)", out.display(), bytes.len());
    }
    Ok(())
}

fn decompress(stream: &Path, out: Option<&Path>) -> CmdResult {
    let bytes = read_bytes(stream, EXIT_DATA)?;
    let s = EncodedStream::from_bytes(&bytes)
        .map_err(|e| fail(EXIT_DATA, format!("{}: {e}", stream.display())))?;
    let symbols = decode(&s).map_err(|e| fail(EXIT_DATA, format!("{}: {e}", stream.display())))?;
    let n = u32::try_from(symbols.len())
        .map_err(|_| fail(EXIT_DATA, "stream too long for a tensor file"))?;
    let t = TensorFile::symbols(vec![n], symbols).map_err(|e| fail(EXIT_DATA, e.to_string()))?;
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| stream.with_extension("oast"));
    write_bytes(&out, &write_tensor(&t))?;
    println!("wrote {} ({n} symbols)", out.display());
    Ok(())
}

fn energy_rows(r: &ScenarioResult) -> [(&'static str, f64); 7] {
    [
        ("aps", r.e_aps),
        ("tsv", r.e_tsv),
        ("encoder", r.e_enc),
        ("huffman", r.e_huff),
        ("interface", r.e_inf),
        ("back-end", r.e_back),
        ("total", r.e_total),
    ]
}

fn energy(path: &Path, as_json: bool) -> CmdResult {
    let cfg = base_config_from_env()?;
    let loaded = load_scenario(path, &cfg)?;
    let s = &loaded.scenario;
    let ours = total_energy(&s.with_mode(Mode::InSensor))
        .map_err(|e| fail(EXIT_SCENARIO, e.to_string()))?;
    let base = total_energy(&s.with_mode(Mode::Baseline))
        .map_err(|e| fail(EXIT_SCENARIO, e.to_string()))?;
    let ratio = base.e_total / ours.e_total;
    if as_json {
        println!(
            "{}",
            to_json(&json!({
                "name": s.name,
                "effective_bits": loaded.measurement,
                "in_sensor": ours,
                "baseline": base,
                "baseline_over_in_sensor": ratio,
            }))
        );
        return Ok(());
    }
    println!("{}", s.name);
    println!(
        "encoder output {} @ {} bit, effective {:.4} bits/symbol",
        s.encoder.output_shape, s.quant_bits, s.effective_bits
    );
    println!(
        "\n{:<12} {:>14} {:>14}",
        "energy (uJ)", "in-sensor", "baseline"
    );
    for ((label, a), (_, b)) in energy_rows(&ours).iter().zip(energy_rows(&base)) {
        println!("{label:<12} {:>14} {:>14}", format_uj(*a), format_uj(b));
    }
    println!(
        "{:<12} {:>14} {:>14}",
        "link bytes", ours.bytes_over_interface, base.bytes_over_interface
    );
    println!(
        "{:<12} {:>14.1} {:>14.1}",
        "reduction", ours.bandwidth_reduction, base.bandwidth_reduction
    );
    println!(
        "{:<12} {:>14.3e} {:>14.3e}",
        "latency (s)", ours.latency_transfer, base.latency_transfer
    );
    if let Some(t) = ours.tops_per_watt {
        println!("{:<12} {:>14.2}", "TOPS/W", t);
    }
    println!("\nbaseline / in-sensor energy: {ratio:.3}x");
    Ok(())
}

fn sweep(grid: &Path, out: &Path, format: FormatArg, seed: Option<u64>) -> CmdResult {
    let cfg = base_config_from_env()?;
    let report = load_and_run_sweep(grid, seed, &cfg)?;
    let format = match format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Json => ReportFormat::Json,
    };
    let text = report.render(format).map_err(|e| fail(EXIT_DATA, e))?;
    write_bytes(out, text.as_bytes())?;
    let failed = report.rows.iter().filter(|r| r.status == "error").count();
    eprintln!(
        "wrote {} rows to {} ({failed} failed)",
        report.rows.len(),
        out.display()
    );
    Ok(())
}

fn eyetrack(huffman_factor: f64, roi_factor: f64, as_json: bool) -> CmdResult {
    let cfg = EyeTrackingConfig {
        huffman_factor,
        roi_factor,
        ..Default::default()
    };
    let r = eye_tracking_report(&cfg).map_err(|e| fail(EXIT_SCENARIO, e))?;
    if as_json {
        println!("{}", to_json(&r));
    } else {
        print!("{}", r.render_text());
    }
    Ok(())
}

fn synth(sigma: f64, bits: u32, count: u32, seed: u64, out: &Path) -> CmdResult {
    let d =
        SyntheticDistribution::gaussian(sigma, bits).map_err(|e| fail(EXIT_DATA, e.to_string()))?;
    let symbols = sample_symbols(&d, count as usize, seed);
    let t =
        TensorFile::symbols(vec![count], symbols).map_err(|e| fail(EXIT_DATA, e.to_string()))?;
    write_bytes(out, &write_tensor(&t))
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Analyze { spec, json } => analyze(&spec, json),
        Command::Compress {
            tensor,
            bits,
            codebook,
            out,
            json,
        } => compress(&tensor, bits, codebook.as_deref(), out.as_deref(), json),
        Command::Decompress { stream, out } => decompress(&stream, out.as_deref()),
        Command::Energy { scenario, json } => energy(&scenario, json),
        Command::Sweep {
            grid,
            out,
            format,
            seed,
        } => sweep(&grid, &out, format, seed),
        Command::Eyetrack {
            huffman_factor,
            roi_factor,
            json,
        } => eyetrack(huffman_factor, roi_factor, json),
        Command::FitSigma { target, bits } => {
            if !(2..=8).contains(&bits) {
                return Err(fail(
                    EXIT_DATA,
                    format!("--bits must be in 2..=8, got {bits}"),
                ));
            }
            let sigma = fit_sigma(target, bits).ok_or_else(|| {
                fail(
                    EXIT_DATA,
                    format!("{target} bits not reachable at {bits} bits"),
                )
            })?;
            println!("{sigma:.6}");
            Ok(())
        }
        Command::Synth {
            sigma,
            bits,
            count,
            seed,
            out,
        } => synth(sigma, bits, count, seed, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
