//! Network workload descriptions.
//!
//! A network is described by a small line-oriented text file:
//!
//! ```text
//! # comment
//! name tiny-resnet-vww
//! input 3x224x224 bits=8
//! conv2d out_channels=128 kernel=7 stride=4
//! residual out_channels=256 stride=2
//! pool output=4
//! ```
//!
//! Statements may also be separated by `,` or `;` on a single line.
//! Keys may use the long field names or the short aliases `c`, `k`, `s`
//! (`c=128` or the compact `c128`). All convolutions use "same" padding,
//! so the output side length is `ceil(in / stride)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("layer {layer} ({kind}): {message}")]
    Shape {
        layer: usize,
        kind: LayerKind,
        message: String,
    },
}

/// Channel-major activation shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub channels: u32,
    pub height: u32,
    pub width: u32,
}

impl TensorShape {
    /// Returns `None` if any dimension is zero.
    pub fn new(channels: u32, height: u32, width: u32) -> Option<Self> {
        (channels > 0 && height > 0 && width > 0).then_some(Self {
            channels,
            height,
            width,
        })
    }

    pub fn element_count(&self) -> u64 {
        self.channels as u64 * self.height as u64 * self.width as u64
    }

    pub fn spatial(&self) -> u64 {
        self.height as u64 * self.width as u64
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

impl FromStr for TensorShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let dims: Vec<&str> = s.split(['x', 'X']).collect();
        if dims.len() != 3 {
            return Err(format!("expected <C>x<H>x<W>, got `{s}`"));
        }
        let mut parsed = [0u32; 3];
        for (slot, d) in parsed.iter_mut().zip(&dims) {
            *slot = d
                .trim()
                .parse()
                .map_err(|_| format!("`{d}` is not a positive integer"))?;
        }
        TensorShape::new(parsed[0], parsed[1], parsed[2])
            .ok_or_else(|| format!("all dimensions of `{s}` must be >= 1"))
    }
}

/// Number of bytes needed to hold `shape` at `bits` per element, rounded up.
pub fn activation_bytes(shape: &TensorShape, bits: u32) -> u64 {
    debug_assert!((1..=32).contains(&bits));
    (shape.element_count() * bits as u64).div_ceil(8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Conv2d,
    ResidualBlock,
    PatchEmbed,
    WindowAttentionBlock,
    Linear,
    Pool,
    Upsample,
    Downsample,
}

impl LayerKind {
    fn from_keyword(word: &str) -> Option<Self> {
        Some(match word.to_ascii_lowercase().as_str() {
            "conv" | "conv2d" => LayerKind::Conv2d,
            "residual" | "residual_block" | "residualblock" => LayerKind::ResidualBlock,
            "patch_embed" | "patchembed" => LayerKind::PatchEmbed,
            "window_attention" | "windowattentionblock" | "swin_block" => {
                LayerKind::WindowAttentionBlock
            }
            "linear" | "dense" => LayerKind::Linear,
            "pool" => LayerKind::Pool,
            "upsample" => LayerKind::Upsample,
            "downsample" => LayerKind::Downsample,
            _ => return None,
        })
    }

    pub fn keyword(&self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::ResidualBlock => "residual",
            LayerKind::PatchEmbed => "patch_embed",
            LayerKind::WindowAttentionBlock => "window_attention",
            LayerKind::Linear => "linear",
            LayerKind::Pool => "pool",
            LayerKind::Upsample => "upsample",
            LayerKind::Downsample => "downsample",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Spatial extent of a pooling layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PoolWindow {
    /// Collapse the whole feature map to 1x1.
    Global,
    /// Fixed window with "same" padding.
    Kernel { kernel: u32, stride: u32 },
    /// Adaptive pooling to an `size`x`size` output.
    Output(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2d {
        out_channels: u32,
        kernel: u32,
        stride: u32,
    },
    /// Two 3x3 convolutions, the first carrying the stride, plus a 1x1
    /// projection on the skip path whenever channels or stride change.
    ResidualBlock {
        out_channels: u32,
        stride: u32,
    },
    PatchEmbed {
        out_channels: u32,
        kernel: u32,
        stride: u32,
    },
    /// Shifted-window self-attention followed by an MLP. Channel count is
    /// preserved.
    WindowAttentionBlock {
        out_channels: u32,
        window: u32,
        heads: u32,
        mlp_ratio: f64,
    },
    /// Dense layer over the flattened input.
    Linear {
        out_features: u32,
    },
    Pool(PoolWindow),
    Upsample {
        scale: u32,
    },
    Downsample {
        scale: u32,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv2d { .. } => LayerKind::Conv2d,
            LayerSpec::ResidualBlock { .. } => LayerKind::ResidualBlock,
            LayerSpec::PatchEmbed { .. } => LayerKind::PatchEmbed,
            LayerSpec::WindowAttentionBlock { .. } => LayerKind::WindowAttentionBlock,
            LayerSpec::Linear { .. } => LayerKind::Linear,
            LayerSpec::Pool(_) => LayerKind::Pool,
            LayerSpec::Upsample { .. } => LayerKind::Upsample,
            LayerSpec::Downsample { .. } => LayerKind::Downsample,
        }
    }

    /// Output channel count if the layer sets one explicitly.
    pub fn out_channels(&self) -> Option<u32> {
        match *self {
            LayerSpec::Conv2d { out_channels, .. }
            | LayerSpec::ResidualBlock { out_channels, .. }
            | LayerSpec::PatchEmbed { out_channels, .. }
            | LayerSpec::WindowAttentionBlock { out_channels, .. } => Some(out_channels),
            LayerSpec::Linear { out_features } => Some(out_features),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub input: TensorShape,
    pub input_bits: u32,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerWorkload {
    pub kind: LayerKind,
    pub output_shape: TensorShape,
    pub macs: u64,
    pub weights: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSummary {
    pub input: TensorShape,
    pub per_layer: Vec<LayerWorkload>,
    pub total_macs: u64,
    pub total_weights: u64,
    pub output_shape: TensorShape,
}

impl WorkloadSummary {
    /// A workload with no layers: zero MACs and weights, output equals input.
    pub fn empty(input: TensorShape) -> Self {
        Self {
            input,
            per_layer: Vec::new(),
            total_macs: 0,
            total_weights: 0,
            output_shape: input,
        }
    }
}

/// Parses a network description. The name defaults to `unnamed` when the
/// file has no `name` line.
pub fn parse_spec(text: &str) -> Result<NetworkSpec, SpecError> {
    let mut name = None;
    let mut header: Option<(TensorShape, u32)> = None;
    let mut layers = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        // `,` and `;` separate statements on one line.
        for statement in line.split([',', ';']) {
            let mut tokens = statement.split_whitespace();
            let Some(head) = tokens.next() else {
                continue;
            };

            match head.to_ascii_lowercase().as_str() {
                "name" => {
                    let rest: Vec<&str> = tokens.collect();
                    if rest.is_empty() {
                        return Err(parse_err(line_no, "name", "missing value"));
                    }
                    name = Some(rest.join(" "));
                }
                "input" => {
                    if header.is_some() {
                        return Err(SpecError::Validation {
                            line: line_no,
                            message: "duplicate `input` header".into(),
                        });
                    }
                    let dims = tokens
                        .next()
                        .ok_or_else(|| parse_err(line_no, "input", "missing <C>x<H>x<W>"))?;
                    let shape: TensorShape = dims
                        .parse()
                        .map_err(|m: String| parse_err(line_no, "input", &m))?;
                    let mut bits = 8;
                    for tok in tokens {
                        let (key, value) = split_key(tok, line_no)?;
                        match key {
                            "bits" => bits = parse_positive(value, line_no, "bits")?,
                            other => {
                                return Err(parse_err(line_no, other, "unknown key for `input`"))
                            }
                        }
                    }
                    if !(1..=32).contains(&bits) {
                        return Err(SpecError::Validation {
                            line: line_no,
                            message: format!("input bits must be in 1..=32, got {bits}"),
                        });
                    }
                    header = Some((shape, bits));
                }
                word => {
                    let kind = LayerKind::from_keyword(word).ok_or_else(|| {
                        parse_err(line_no, "kind", &format!("unknown layer `{word}`"))
                    })?;
                    if header.is_none() {
                        return Err(SpecError::Validation {
                            line: line_no,
                            message: "layer before `input` header".into(),
                        });
                    }
                    let fields = LayerFields::parse(tokens, line_no)?;
                    layers.push(fields.into_layer(kind, line_no)?);
                }
            }
        }
    }

    let (input, input_bits) = header.ok_or_else(|| parse_err(0, "input", "missing header line"))?;
    let spec = NetworkSpec {
        name: name.unwrap_or_else(|| "unnamed".to_string()),
        input,
        input_bits,
        layers,
    };
    infer_shapes(&spec).map_err(|e| match e {
        SpecError::Shape {
            layer,
            kind,
            message,
        } => SpecError::Validation {
            line: 0,
            message: format!("layer {layer} ({kind}): {message}"),
        },
        other => other,
    })?;
    Ok(spec)
}

fn parse_err(line: usize, field: &str, message: &str) -> SpecError {
    SpecError::Parse {
        line,
        field: field.to_string(),
        message: message.to_string(),
    }
}

fn split_key(tok: &str, line: usize) -> Result<(&str, &str), SpecError> {
    if let Some((k, v)) = tok.split_once('=') {
        return Ok((k, v));
    }
    // Compact form: `k7`, `s4`, `c128`.
    let split = tok.find(|c: char| c.is_ascii_digit());
    match split {
        Some(pos) if pos > 0 && matches!(&tok[..pos], "c" | "k" | "s") => {
            Ok((&tok[..pos], &tok[pos..]))
        }
        _ => Err(parse_err(line, tok, "expected key=value")),
    }
}

fn parse_positive(value: &str, line: usize, field: &str) -> Result<u32, SpecError> {
    match value.parse::<u32>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(parse_err(
            line,
            field,
            &format!("`{value}` is not a positive integer"),
        )),
    }
}

#[derive(Default)]
struct LayerFields {
    out_channels: Option<u32>,
    kernel: Option<u32>,
    global: bool,
    stride: Option<u32>,
    window: Option<u32>,
    heads: Option<u32>,
    mlp_ratio: Option<f64>,
    scale: Option<u32>,
    output: Option<u32>,
}

impl LayerFields {
    fn parse<'a>(tokens: impl Iterator<Item = &'a str>, line: usize) -> Result<Self, SpecError> {
        let mut f = LayerFields::default();
        for tok in tokens {
            let (key, value) = split_key(tok, line)?;
            match key {
                "out_channels" | "c" | "out_features" => {
                    f.out_channels = Some(parse_positive(value, line, key)?)
                }
                "kernel" | "k" | "patch" => {
                    if value.eq_ignore_ascii_case("global") {
                        f.global = true;
                    } else {
                        f.kernel = Some(parse_positive(value, line, key)?);
                    }
                }
                "stride" | "s" => f.stride = Some(parse_positive(value, line, key)?),
                "window" => f.window = Some(parse_positive(value, line, key)?),
                "heads" => f.heads = Some(parse_positive(value, line, key)?),
                "mlp_ratio" => match value.parse::<f64>() {
                    Ok(r) if r.is_finite() && r > 0.0 => f.mlp_ratio = Some(r),
                    _ => return Err(parse_err(line, key, "must be a positive number")),
                },
                "scale" => f.scale = Some(parse_positive(value, line, key)?),
                "output" => f.output = Some(parse_positive(value, line, key)?),
                other => return Err(parse_err(line, other, "unknown key")),
            }
        }
        Ok(f)
    }

    fn into_layer(self, kind: LayerKind, line: usize) -> Result<LayerSpec, SpecError> {
        let need = |v: Option<u32>, field: &str| {
            v.ok_or_else(|| parse_err(line, field, &format!("required for `{kind}`")))
        };
        let layer = match kind {
            LayerKind::Conv2d => LayerSpec::Conv2d {
                out_channels: need(self.out_channels, "out_channels")?,
                kernel: need(self.kernel, "kernel")?,
                stride: self.stride.unwrap_or(1),
            },
            LayerKind::ResidualBlock => LayerSpec::ResidualBlock {
                out_channels: need(self.out_channels, "out_channels")?,
                stride: self.stride.unwrap_or(1),
            },
            LayerKind::PatchEmbed => {
                let kernel = need(self.kernel, "kernel")?;
                LayerSpec::PatchEmbed {
                    out_channels: need(self.out_channels, "out_channels")?,
                    kernel,
                    stride: self.stride.unwrap_or(kernel),
                }
            }
            LayerKind::WindowAttentionBlock => {
                let out_channels = need(self.out_channels, "out_channels")?;
                let heads = need(self.heads, "heads")?;
                if out_channels % heads != 0 {
                    return Err(SpecError::Validation {
                        line,
                        message: format!(
                            "heads={heads} does not divide out_channels={out_channels}"
                        ),
                    });
                }
                LayerSpec::WindowAttentionBlock {
                    out_channels,
                    window: need(self.window, "window")?,
                    heads,
                    mlp_ratio: self.mlp_ratio.unwrap_or(4.0),
                }
            }
            LayerKind::Linear => LayerSpec::Linear {
                out_features: need(self.out_channels, "out_channels")?,
            },
            LayerKind::Pool => {
                let window =
                    match (self.global, self.kernel, self.output) {
                        (true, None, None) => PoolWindow::Global,
                        (false, Some(kernel), None) => PoolWindow::Kernel {
                            kernel,
                            stride: self.stride.unwrap_or(kernel),
                        },
                        (false, None, Some(size)) => PoolWindow::Output(size),
                        _ => return Err(SpecError::Validation {
                            line,
                            message:
                                "pool needs exactly one of kernel=<n>, kernel=global, output=<n>"
                                    .into(),
                        }),
                    };
                LayerSpec::Pool(window)
            }
            LayerKind::Upsample => LayerSpec::Upsample {
                scale: need(self.scale, "scale")?,
            },
            LayerKind::Downsample => LayerSpec::Downsample {
                scale: need(self.scale, "scale")?,
            },
        };
        Ok(layer)
    }
}

fn same_pad(dim: u32, stride: u32) -> u32 {
    dim.div_ceil(stride)
}

/// Output shape of every layer, in order.
pub fn infer_shapes(net: &NetworkSpec) -> Result<Vec<TensorShape>, SpecError> {
    let mut shapes = Vec::with_capacity(net.layers.len());
    let mut cur = net.input;
    for (idx, layer) in net.layers.iter().enumerate() {
        cur = layer_output(layer, cur).map_err(|message| SpecError::Shape {
            layer: idx,
            kind: layer.kind(),
            message,
        })?;
        shapes.push(cur);
    }
    Ok(shapes)
}

fn layer_output(layer: &LayerSpec, input: TensorShape) -> Result<TensorShape, String> {
    let TensorShape {
        channels,
        height,
        width,
    } = input;
    let out = match *layer {
        LayerSpec::Conv2d {
            out_channels,
            stride,
            ..
        }
        | LayerSpec::ResidualBlock {
            out_channels,
            stride,
        } => TensorShape::new(
            out_channels,
            same_pad(height, stride),
            same_pad(width, stride),
        ),
        LayerSpec::PatchEmbed {
            out_channels,
            kernel,
            stride,
        } => {
            if kernel > height || kernel > width {
                return Err(format!("patch {kernel} larger than input {input}"));
            }
            TensorShape::new(
                out_channels,
                same_pad(height, stride),
                same_pad(width, stride),
            )
        }
        LayerSpec::WindowAttentionBlock { out_channels, .. } => {
            if out_channels != channels {
                return Err(format!(
                    "attention preserves channels; input has {channels}, out_channels={out_channels}"
                ));
            }
            Some(input)
        }
        LayerSpec::Linear { out_features } => TensorShape::new(out_features, 1, 1),
        LayerSpec::Pool(PoolWindow::Global) => TensorShape::new(channels, 1, 1),
        LayerSpec::Pool(PoolWindow::Kernel { kernel, stride }) => {
            if kernel > height || kernel > width {
                return Err(format!("pool kernel {kernel} larger than input {input}"));
            }
            TensorShape::new(channels, same_pad(height, stride), same_pad(width, stride))
        }
        LayerSpec::Pool(PoolWindow::Output(size)) => {
            if size > height || size > width {
                return Err(format!("cannot pool {input} up to {size}x{size}"));
            }
            TensorShape::new(channels, size, size)
        }
        LayerSpec::Upsample { scale } => {
            let h = height.checked_mul(scale).ok_or("height overflows u32")?;
            let w = width.checked_mul(scale).ok_or("width overflows u32")?;
            TensorShape::new(channels, h, w)
        }
        LayerSpec::Downsample { scale } => {
            TensorShape::new(channels, same_pad(height, scale), same_pad(width, scale))
        }
    };
    let out = out.ok_or_else(|| format!("spatial dimension reaches 0 from {input}"))?;
    // Keeps per-layer MAC products inside u64.
    if out.element_count() >= 1 << 40 {
        return Err(format!("output {out} is too large"));
    }
    Ok(out)
}

/// (macs, weights) for one layer given its input and output shapes.
fn layer_cost(layer: &LayerSpec, input: TensorShape, output: TensorShape) -> (u128, u128) {
    let in_c = input.channels as u128;
    let out_c = output.channels as u128;
    let out_hw = output.spatial() as u128;
    match *layer {
        LayerSpec::Conv2d { kernel, .. } | LayerSpec::PatchEmbed { kernel, .. } => {
            let k2 = kernel as u128 * kernel as u128;
            let weights = out_c * in_c * k2;
            (out_hw * weights, weights)
        }
        LayerSpec::ResidualBlock { stride, .. } => {
            let mut weights = 9 * in_c * out_c + 9 * out_c * out_c;
            if in_c != out_c || stride != 1 {
                weights += in_c * out_c;
            }
            (out_hw * weights, weights)
        }
        LayerSpec::WindowAttentionBlock {
            window, mlp_ratio, ..
        } => {
            let c = out_c;
            let tokens = out_hw;
            let win_area = window.min(output.height) as u128 * window.min(output.width) as u128;
            let hidden = (mlp_ratio * c as f64).round() as u128;
            let qkv = 3 * tokens * c * c;
            let attn = 2 * tokens * win_area * c;
            let proj = tokens * c * c;
            let mlp = 2 * tokens * c * hidden;
            let weights = 3 * c * c + c * c + 2 * c * hidden;
            (qkv + attn + proj + mlp, weights)
        }
        LayerSpec::Linear { out_features } => {
            let w = input.element_count() as u128 * out_features as u128;
            (w, w)
        }
        LayerSpec::Pool(_) | LayerSpec::Upsample { .. } | LayerSpec::Downsample { .. } => (0, 0),
    }
}

/// Counts MACs and weights per layer. Biases and normalisation are free.
pub fn count_macs(net: &NetworkSpec) -> Result<WorkloadSummary, SpecError> {
    let shapes = infer_shapes(net)?;
    let mut per_layer = Vec::with_capacity(shapes.len());
    let mut total_macs = 0u64;
    let mut total_weights = 0u64;
    let mut prev = net.input;
    for (idx, (layer, &out)) in net.layers.iter().zip(&shapes).enumerate() {
        let overflow = || SpecError::Shape {
            layer: idx,
            kind: layer.kind(),
            message: "MAC or weight count overflows u64".into(),
        };
        let (macs, weights) = layer_cost(layer, prev, out);
        let macs = u64::try_from(macs).map_err(|_| overflow())?;
        let weights = u64::try_from(weights).map_err(|_| overflow())?;
        total_macs = total_macs.checked_add(macs).ok_or_else(overflow)?;
        total_weights = total_weights.checked_add(weights).ok_or_else(overflow)?;
        per_layer.push(LayerWorkload {
            kind: layer.kind(),
            output_shape: out,
            macs,
            weights,
        });
        prev = out;
    }
    Ok(WorkloadSummary {
        input: net.input,
        per_layer,
        total_macs,
        total_weights,
        output_shape: prev,
    })
}
