//! Canonical Huffman coding of quantized symbol streams.
//!
//! Codebooks are transmitted as code lengths only; codes are reassigned
//! canonically (shorter first, ties by ascending symbol). Bits are packed
//! MSB-first and the final byte is zero-padded.
//!
//! Stream layout (little-endian):
//!
//! | field          | type              |
//! |----------------|-------------------|
//! | magic          | `b"OASH"`         |
//! | version        | u8 = 1            |
//! | symbol bits    | u8                |
//! | alphabet size  | u16               |
//! | entries        | (i8 symbol, u8 length) × size, canonical order |
//! | symbol count   | u64               |
//! | payload length | u64               |
//! | payload        | bytes             |

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use thiserror::Error;

use crate::entropy::SymbolHistogram;
use crate::Symbol;

pub const STREAM_MAGIC: [u8; 4] = *b"OASH";
pub const STREAM_VERSION: u8 = 1;
pub const MAX_CODE_LEN: u8 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HuffmanError {
    #[error("cannot build a code for an empty histogram")]
    EmptyHistogram,
    #[error("symbol {0} is not in the codebook")]
    UnknownSymbol(Symbol),
    #[error("histogram symbol {0} has no code")]
    SupportMismatch(Symbol),
    #[error("corrupt stream: {0}")]
    CorruptStream(String),
    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeEntry {
    pub symbol: Symbol,
    pub len: u8,
    pub code: u64,
}

/// Immutable canonical prefix code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanCodebook {
    /// Canonical order: by length, then symbol.
    entries: Vec<CodeEntry>,
    index: BTreeMap<Symbol, usize>,
}

impl HuffmanCodebook {
    /// Assigns canonical codes to the given lengths. Rejects duplicate
    /// symbols, zero or overlong lengths, and oversubscribed length sets.
    pub fn from_lengths(
        lengths: impl IntoIterator<Item = (Symbol, u8)>,
    ) -> Result<Self, HuffmanError> {
        let mut pairs: Vec<(u8, Symbol)> = lengths.into_iter().map(|(s, l)| (l, s)).collect();
        if pairs.is_empty() {
            return Err(HuffmanError::InvalidCodebook("empty alphabet".into()));
        }
        pairs.sort_unstable();
        let mut seen = BTreeSet::new();
        if let Some(&(_, dup)) = pairs.iter().find(|p| !seen.insert(p.1)) {
            return Err(HuffmanError::InvalidCodebook(format!(
                "duplicate symbol {dup}"
            )));
        }
        if let Some(&(len, sym)) = pairs.iter().find(|(l, _)| *l == 0 || *l > MAX_CODE_LEN) {
            return Err(HuffmanError::InvalidCodebook(format!(
                "symbol {sym} has length {len}"
            )));
        }
        if kraft_numerator(pairs.iter().map(|p| p.0)) > 1u128 << MAX_CODE_LEN {
            return Err(HuffmanError::InvalidCodebook(
                "code lengths are oversubscribed".into(),
            ));
        }

        let mut entries = Vec::with_capacity(pairs.len());
        let mut code: u64 = 0;
        let mut prev_len = pairs[0].0;
        for (i, &(len, symbol)) in pairs.iter().enumerate() {
            if i > 0 {
                code = (code + 1) << (len - prev_len);
            }
            prev_len = len;
            entries.push(CodeEntry { symbol, len, code });
        }
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.symbol, i))
            .collect();
        Ok(Self { entries, index })
    }

    pub fn entries(&self) -> &[CodeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, symbol: Symbol) -> Option<&CodeEntry> {
        self.index.get(&symbol).map(|&i| &self.entries[i])
    }

    pub fn code_length(&self, symbol: Symbol) -> Option<u8> {
        self.get(symbol).map(|e| e.len)
    }

    pub fn max_len(&self) -> u8 {
        self.entries.last().map_or(0, |e| e.len)
    }

    /// Σ 2^-len, exactly 1.0 for a complete code.
    pub fn kraft_sum(&self) -> f64 {
        kraft_numerator(self.entries.iter().map(|e| e.len)) as f64 / (1u128 << MAX_CODE_LEN) as f64
    }

    pub fn is_complete(&self) -> bool {
        kraft_numerator(self.entries.iter().map(|e| e.len)) == 1u128 << MAX_CODE_LEN
    }
}

fn kraft_numerator(lengths: impl Iterator<Item = u8>) -> u128 {
    lengths
        .map(|l| 1u128 << (MAX_CODE_LEN - l.min(MAX_CODE_LEN)))
        .sum()
}

/// Huffman code lengths for `h`. Merges the two lightest nodes, breaking
/// weight ties by the smallest symbol each node contains.
pub fn build_codebook(h: &SymbolHistogram) -> Result<HuffmanCodebook, HuffmanError> {
    let leaves: Vec<(Symbol, u64)> = h.iter().collect();
    match leaves.len() {
        0 => return Err(HuffmanError::EmptyHistogram),
        1 => return HuffmanCodebook::from_lengths([(leaves[0].0, 1)]),
        _ => {}
    }

    // parent[i] for every node; leaves occupy 0..n.
    let n = leaves.len();
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u64, Symbol, usize)>> = leaves
        .iter()
        .enumerate()
        .map(|(i, &(s, c))| Reverse((c, s, i)))
        .collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((wa, sa, a)) = heap.pop().expect("heap has two nodes");
        let Reverse((wb, sb, b)) = heap.pop().expect("heap has two nodes");
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((wa.saturating_add(wb), sa.min(sb), next)));
        next += 1;
    }

    let mut lengths = Vec::with_capacity(n);
    for (i, &(symbol, _)) in leaves.iter().enumerate() {
        let mut depth = 0u32;
        let mut node = i;
        while parent[node] != usize::MAX {
            node = parent[node];
            depth += 1;
        }
        if depth > MAX_CODE_LEN as u32 {
            return Err(HuffmanError::InvalidCodebook(format!(
                "code for symbol {symbol} would need {depth} bits"
            )));
        }
        lengths.push((symbol, depth as u8));
    }
    HuffmanCodebook::from_lengths(lengths)
}

/// Expected code length in bits per symbol under `h`.
pub fn avg_code_length(cb: &HuffmanCodebook, h: &SymbolHistogram) -> Result<f64, HuffmanError> {
    let mut bits = 0u128;
    for (s, c) in h.iter() {
        let len = cb.code_length(s).ok_or(HuffmanError::SupportMismatch(s))?;
        bits += len as u128 * c as u128;
    }
    Ok(bits as f64 / h.total() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedStream {
    pub codebook: HuffmanCodebook,
    /// Width of the fixed-length symbols this stream replaces.
    pub symbol_bits: u8,
    pub symbol_count: u64,
    pub payload: Vec<u8>,
}

/// Smallest symmetric signed width (at most 8) that holds every symbol.
pub fn min_symbol_bits(cb: &HuffmanCodebook) -> u8 {
    let peak = cb
        .entries()
        .iter()
        .map(|e| (e.symbol as i32).unsigned_abs())
        .max()
        .unwrap_or(0);
    (1u8..=8).find(|&n| peak < (1u32 << (n - 1))).unwrap_or(8)
}

struct BitWriter {
    bytes: Vec<u8>,
    bit: u8,
}

impl BitWriter {
    fn new() -> Self {
        Self {
            bytes: Vec::new(),
            bit: 0,
        }
    }

    fn push(&mut self, code: u64, len: u8) {
        for i in (0..len).rev() {
            if self.bit == 0 {
                self.bytes.push(0);
            }
            if (code >> i) & 1 == 1 {
                *self.bytes.last_mut().expect("byte pushed above") |= 0x80 >> self.bit;
            }
            self.bit = (self.bit + 1) % 8;
        }
    }
}

pub fn encode(symbols: &[Symbol], cb: &HuffmanCodebook) -> Result<EncodedStream, HuffmanError> {
    let mut w = BitWriter::new();
    for &s in symbols {
        let e = cb.get(s).ok_or(HuffmanError::UnknownSymbol(s))?;
        w.push(e.code, e.len);
    }
    Ok(EncodedStream {
        codebook: cb.clone(),
        symbol_bits: min_symbol_bits(cb),
        symbol_count: symbols.len() as u64,
        payload: w.bytes,
    })
}

/// Canonical decoding tables: symbol count per length and symbols in
/// canonical order.
struct DecodeTable {
    count_per_len: Vec<u128>,
    symbols: Vec<Symbol>,
}

impl DecodeTable {
    fn new(cb: &HuffmanCodebook) -> Self {
        let mut count_per_len = vec![0u128; cb.max_len() as usize + 1];
        for e in cb.entries() {
            count_per_len[e.len as usize] += 1;
        }
        Self {
            count_per_len,
            symbols: cb.entries().iter().map(|e| e.symbol).collect(),
        }
    }
}

pub fn decode(s: &EncodedStream) -> Result<Vec<Symbol>, HuffmanError> {
    let table = DecodeTable::new(&s.codebook);
    let total_bits = s.payload.len() as u64 * 8;
    let mut pos = 0u64;
    let mut out = Vec::with_capacity(s.symbol_count.min(total_bits) as usize);

    for n in 0..s.symbol_count {
        let mut code = 0u128;
        let mut first = 0u128;
        let mut index = 0u128;
        let mut found = None;
        for &count in &table.count_per_len[1..] {
            if pos >= total_bits {
                return Err(HuffmanError::CorruptStream(format!(
                    "payload exhausted after {n} of {} symbols",
                    s.symbol_count
                )));
            }
            let byte = s.payload[(pos / 8) as usize];
            code |= ((byte >> (7 - pos % 8)) & 1) as u128;
            pos += 1;
            if code - first < count {
                found = Some(table.symbols[(index + code - first) as usize]);
                break;
            }
            index += count;
            first = (first + count) << 1;
            code <<= 1;
        }
        match found {
            Some(sym) => out.push(sym),
            None => {
                return Err(HuffmanError::CorruptStream(format!(
                    "invalid code at bit {pos}"
                )))
            }
        }
    }
    Ok(out)
}

impl EncodedStream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let entries = self.codebook.entries();
        let mut out = Vec::with_capacity(4 + 4 + 2 * entries.len() + 16 + self.payload.len());
        out.extend_from_slice(&STREAM_MAGIC);
        out.push(STREAM_VERSION);
        out.push(self.symbol_bits);
        out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
        for e in entries {
            out.push(e.symbol as u8);
            out.push(e.len);
        }
        out.extend_from_slice(&self.symbol_count.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HuffmanError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != STREAM_MAGIC {
            return Err(HuffmanError::CorruptStream("bad magic".into()));
        }
        let version = r.u8()?;
        if version != STREAM_VERSION {
            return Err(HuffmanError::CorruptStream(format!(
                "unsupported version {version}"
            )));
        }
        let symbol_bits = r.u8()?;
        let alphabet = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
        let mut lengths = Vec::with_capacity(alphabet as usize);
        for _ in 0..alphabet {
            let sym = r.u8()? as i8;
            let len = r.u8()?;
            lengths.push((sym, len));
        }
        let codebook = HuffmanCodebook::from_lengths(lengths.iter().copied())?;
        let canonical: Vec<(Symbol, u8)> = codebook
            .entries()
            .iter()
            .map(|e| (e.symbol, e.len))
            .collect();
        if canonical != lengths {
            return Err(HuffmanError::CorruptStream(
                "codebook entries not in canonical order".into(),
            ));
        }
        let symbol_count = r.u64()?;
        let payload_len = r.u64()?;
        if payload_len != (bytes.len() - r.pos) as u64 {
            return Err(HuffmanError::CorruptStream(format!(
                "payload length {payload_len} but {} bytes remain",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            codebook,
            symbol_bits,
            symbol_count,
            payload: bytes[r.pos..].to_vec(),
        })
    }

    /// Payload bits per symbol, excluding padding and header.
    pub fn bits_per_symbol(&self) -> f64 {
        if self.symbol_count == 0 {
            return 0.0;
        }
        let bits: u64 = self.payload.len() as u64 * 8;
        bits as f64 / self.symbol_count as f64
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], HuffmanError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(HuffmanError::CorruptStream(format!(
                "truncated header at byte {}",
                self.pos
            ))),
        }
    }

    fn u8(&mut self) -> Result<u8, HuffmanError> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64, HuffmanError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}
