//! Bit-exact bitstream IO, variable-length codes, scalar quantization and
//! coefficient coding. Everything is bypass-coded.

use std::fmt;

use thiserror::Error;

/// Syntax elements tracked for rate accounting and error reporting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SyntaxElement {
    Header,
    SplitFlag,
    RectFlag,
    ModeFlag,
    ClassicMode,
    Cbf,
    LastPosition,
    Level,
    LfnstIdx,
    PairIdx,
    /// Zero bits completing the last byte.
    Padding,
}

impl SyntaxElement {
    pub const ALL: [SyntaxElement; 11] = [
        SyntaxElement::Header,
        SyntaxElement::SplitFlag,
        SyntaxElement::RectFlag,
        SyntaxElement::ModeFlag,
        SyntaxElement::ClassicMode,
        SyntaxElement::Cbf,
        SyntaxElement::LastPosition,
        SyntaxElement::Level,
        SyntaxElement::LfnstIdx,
        SyntaxElement::PairIdx,
        SyntaxElement::Padding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyntaxElement::Header => "header",
            SyntaxElement::SplitFlag => "split_flag",
            SyntaxElement::RectFlag => "rect_flag",
            SyntaxElement::ModeFlag => "mode_flag",
            SyntaxElement::ClassicMode => "classic_mode",
            SyntaxElement::Cbf => "cbf",
            SyntaxElement::LastPosition => "last_position",
            SyntaxElement::Level => "level",
            SyntaxElement::LfnstIdx => "lfnst_idx",
            SyntaxElement::PairIdx => "pair_idx",
            SyntaxElement::Padding => "padding",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SyntaxElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitstreamError {
    #[error("{element}: unexpected end of stream at bit {offset}")]
    Truncated { element: SyntaxElement, offset: u64 },
    #[error("{element}: invalid value at bit {offset}: {reason}")]
    Invalid {
        element: SyntaxElement,
        offset: u64,
        reason: &'static str,
    },
}

/// Per-element bit totals.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BitAccounting {
    counts: [u64; SyntaxElement::ALL.len()],
}

impl BitAccounting {
    pub fn get(&self, e: SyntaxElement) -> u64 {
        self.counts[e.slot()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, e: SyntaxElement, n: u64) {
        self.counts[e.slot()] += n;
    }

    pub fn merge(&mut self, other: &BitAccounting) {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (SyntaxElement, u64)> + '_ {
        SyntaxElement::ALL.iter().map(|&e| (e, self.get(e)))
    }
}

/// Destination for coded bits: a real writer or a pure counter used during
/// rate-distortion search.
pub trait BitSink {
    /// Appends the `n` low bits of `value`, most significant first.
    fn put_bits(&mut self, value: u64, n: u32, element: SyntaxElement);

    fn bits_written(&self) -> u64;

    fn put_flag(&mut self, bit: bool, element: SyntaxElement) {
        self.put_bits(bit as u64, 1, element);
    }
}

/// MSB-first bit writer with per-element accounting.
#[derive(Clone, Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u8,
    fill: u32,
    accounting: BitAccounting,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accounting(&self) -> &BitAccounting {
        &self.accounting
    }

    /// Pads the final byte with zeros and returns the buffer.
    pub fn finish(self) -> Vec<u8> {
        self.finish_with_accounting().0
    }

    /// Like [`BitWriter::finish`]; the accounting includes the padding, so
    /// its total equals the buffer length in bits.
    pub fn finish_with_accounting(mut self) -> (Vec<u8>, BitAccounting) {
        if self.fill > 0 {
            let pad = 8 - self.fill;
            self.put_bits(0, pad, SyntaxElement::Padding);
        }
        (self.bytes, self.accounting)
    }
}

impl BitSink for BitWriter {
    fn put_bits(&mut self, value: u64, n: u32, element: SyntaxElement) {
        debug_assert!(n <= 64);
        debug_assert!(n == 64 || value >> n == 0, "value {value} wider than {n} bits");
        for i in (0..n).rev() {
            self.acc = (self.acc << 1) | ((value >> i) & 1) as u8;
            self.fill += 1;
            if self.fill == 8 {
                self.bytes.push(self.acc);
                self.acc = 0;
                self.fill = 0;
            }
        }
        self.accounting.add(element, n as u64);
    }

    fn bits_written(&self) -> u64 {
        self.accounting.total()
    }
}

/// Counts bits without storing them.
#[derive(Clone, Debug, Default)]
pub struct BitCounter {
    accounting: BitAccounting,
}

impl BitCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accounting(&self) -> &BitAccounting {
        &self.accounting
    }
}

impl BitSink for BitCounter {
    fn put_bits(&mut self, _value: u64, n: u32, element: SyntaxElement) {
        self.accounting.add(element, n as u64);
    }

    fn bits_written(&self) -> u64 {
        self.accounting.total()
    }
}

/// MSB-first bit reader.
#[derive(Clone, Debug)]
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    /// Starts reading at byte `offset`; positions stay absolute.
    pub fn at_byte(data: &'a [u8], offset: usize) -> Self {
        assert!(offset <= data.len());
        Self {
            data,
            pos: offset as u64 * 8,
        }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn remaining(&self) -> u64 {
        self.data.len() as u64 * 8 - self.pos
    }

    pub fn read_bits(&mut self, n: u32, element: SyntaxElement) -> Result<u64, BitstreamError> {
        if (n as u64) > self.remaining() {
            return Err(BitstreamError::Truncated {
                element,
                offset: self.pos,
            });
        }
        let mut v = 0u64;
        for _ in 0..n {
            let byte = self.data[(self.pos / 8) as usize];
            let bit = (byte >> (7 - (self.pos % 8))) & 1;
            v = (v << 1) | bit as u64;
            self.pos += 1;
        }
        Ok(v)
    }

    pub fn read_flag(&mut self, element: SyntaxElement) -> Result<bool, BitstreamError> {
        Ok(self.read_bits(1, element)? == 1)
    }

    pub fn invalid(&self, element: SyntaxElement, reason: &'static str) -> BitstreamError {
        BitstreamError::Invalid {
            element,
            offset: self.pos,
            reason,
        }
    }
}

/// Order-0 exp-Golomb.
pub fn write_ue(sink: &mut impl BitSink, v: u64, element: SyntaxElement) {
    let x = v + 1;
    let len = 64 - x.leading_zeros();
    sink.put_bits(0, len - 1, element);
    sink.put_bits(x, len, element);
}

pub fn ue_len(v: u64) -> u32 {
    2 * (64 - (v + 1).leading_zeros()) - 1
}

pub fn read_ue(r: &mut BitReader<'_>, element: SyntaxElement) -> Result<u64, BitstreamError> {
    let mut zeros = 0u32;
    while !r.read_flag(element)? {
        zeros += 1;
        if zeros > 62 {
            return Err(r.invalid(element, "exp-Golomb prefix too long"));
        }
    }
    let rest = r.read_bits(zeros, element)?;
    Ok(((1u64 << zeros) | rest) - 1)
}

/// Signed mapping 0, 1, -1, 2, -2, ... onto 0, 1, 2, 3, 4, ...
pub fn zigzag(v: i64) -> u64 {
    if v > 0 {
        (2 * v - 1) as u64
    } else {
        (-2 * v) as u64
    }
}

pub fn unzigzag(u: u64) -> i64 {
    if u & 1 == 1 {
        u.div_ceil(2) as i64
    } else {
        -((u / 2) as i64)
    }
}

pub fn write_se(sink: &mut impl BitSink, v: i64, element: SyntaxElement) {
    write_ue(sink, zigzag(v), element);
}

pub fn se_len(v: i64) -> u32 {
    ue_len(zigzag(v))
}

pub fn read_se(r: &mut BitReader<'_>, element: SyntaxElement) -> Result<i64, BitstreamError> {
    read_ue(r, element).map(unzigzag)
}

fn tb_params(n: u32) -> (u32, u32) {
    let k = 31 - n.leading_zeros();
    let u = (1u32 << (k + 1)) - n;
    (k, u)
}

/// Codeword length of `symbol` in the truncated binary code over `n` symbols.
pub fn tb_len(symbol: u32, n: u32) -> u32 {
    let (k, u) = tb_params(n);
    if symbol < u {
        k
    } else {
        k + 1
    }
}

/// Truncated binary code over `n >= 1` symbols.
pub fn write_tb(sink: &mut impl BitSink, symbol: u32, n: u32, element: SyntaxElement) {
    assert!(n >= 1 && symbol < n, "symbol {symbol} outside alphabet of {n}");
    let (k, u) = tb_params(n);
    if symbol < u {
        sink.put_bits(symbol as u64, k, element);
    } else {
        sink.put_bits((symbol + u) as u64, k + 1, element);
    }
}

pub fn read_tb(r: &mut BitReader<'_>, n: u32, element: SyntaxElement) -> Result<u32, BitstreamError> {
    assert!(n >= 1);
    let (k, u) = tb_params(n);
    let v = r.read_bits(k, element)? as u32;
    if v < u {
        return Ok(v);
    }
    let v = (v << 1) | r.read_bits(1, element)? as u32;
    Ok(v - u)
}

/// Scalar quantizer with a rounding offset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantParams {
    pub qp: u8,
    pub qstep: f64,
    pub offset: f64,
}

pub const INTRA_ROUNDING_OFFSET: f64 = 1.0 / 3.0;

impl QuantParams {
    pub fn new(qp: u8) -> Self {
        Self {
            qp,
            qstep: 2f64.powf((qp as f64 - 4.0) / 6.0),
            offset: INTRA_ROUNDING_OFFSET,
        }
    }

    pub fn quantize(&self, c: f64) -> i32 {
        let level = (c.abs() / self.qstep + self.offset).floor() as i32;
        if c < 0.0 {
            -level
        } else {
            level
        }
    }

    pub fn dequantize(&self, level: i32) -> f64 {
        level as f64 * self.qstep
    }

    pub fn quantize_all(&self, coeffs: &[f64]) -> Vec<i32> {
        coeffs.iter().map(|&c| self.quantize(c)).collect()
    }

    pub fn dequantize_all(&self, levels: &[i32]) -> Vec<f64> {
        levels.iter().map(|&l| self.dequantize(l)).collect()
    }
}

/// Up-right diagonal scan over an `h x w` block: anti-diagonals in order,
/// each walked from bottom-left to top-right. Entries are raster indices.
pub fn diagonal_scan(h: usize, w: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(h * w);
    for d in 0..h + w - 1 {
        for r in (0..h.min(d + 1)).rev() {
            let c = d - r;
            if c < w {
                order.push(r * w + c);
            }
        }
    }
    order
}

fn last_pos_bits(h: usize, w: usize) -> u32 {
    let n = h * w;
    usize::BITS - (n - 1).leading_zeros()
}

/// Coded block flag, last significant scan position, then every level up to
/// it as signed exp-Golomb. Returns the last scan position, if any.
pub fn code_coefficients(sink: &mut impl BitSink, levels: &[i32], h: usize, w: usize) -> Option<usize> {
    let scan = diagonal_scan(h, w);
    let last = scan.iter().rposition(|&i| levels[i] != 0);
    sink.put_flag(last.is_some(), SyntaxElement::Cbf);
    if let Some(last) = last {
        sink.put_bits(last as u64, last_pos_bits(h, w), SyntaxElement::LastPosition);
        for &i in &scan[..=last] {
            write_se(sink, levels[i] as i64, SyntaxElement::Level);
        }
    }
    last
}

/// Decodes what [`code_coefficients`] wrote. Returns levels in raster order
/// and the last scan position.
pub fn decode_coefficients(
    r: &mut BitReader<'_>,
    h: usize,
    w: usize,
) -> Result<(Vec<i32>, Option<usize>), BitstreamError> {
    let mut levels = vec![0i32; h * w];
    if !r.read_flag(SyntaxElement::Cbf)? {
        return Ok((levels, None));
    }
    let last = r.read_bits(last_pos_bits(h, w), SyntaxElement::LastPosition)? as usize;
    if last >= h * w {
        return Err(r.invalid(SyntaxElement::LastPosition, "beyond block"));
    }
    let scan = diagonal_scan(h, w);
    for &i in &scan[..=last] {
        let v = read_se(r, SyntaxElement::Level)?;
        levels[i] = i32::try_from(v).map_err(|_| r.invalid(SyntaxElement::Level, "level overflow"))?;
    }
    if levels[scan[last]] == 0 {
        return Err(r.invalid(SyntaxElement::Level, "last significant level is zero"));
    }
    Ok((levels, Some(last)))
}
