//! Transform-pair signaling: the implicit mode-to-pair table, selection from
//! the network logits, and the four signaling schemes for NN-mode blocks.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::entropy::{read_tb, tb_len, write_tb, BitReader, BitSink, BitstreamError, SyntaxElement};
use crate::nn::arch::LOGIT_COUNT;
use crate::transforms::PairSpec;

/// Number of (set, transposition) pairs.
pub const PAIR_COUNT: usize = 7;

/// `trPairIdx -> (set, transpose)`.
pub const PAIR_TABLE: [PairSpec; PAIR_COUNT] = [
    PairSpec::new(0, false),
    PairSpec::new(1, false),
    PairSpec::new(2, false),
    PairSpec::new(3, false),
    PairSpec::new(3, true),
    PairSpec::new(2, true),
    PairSpec::new(1, true),
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignalingError {
    #[error("effective intra mode {0} falls in no transform group")]
    UnmappedMode(i32),
    #[error("unknown signaling scheme {0:?}")]
    UnknownScheme(String),
}

/// How NN-mode blocks choose their secondary-transform pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SignalingScheme {
    /// Always set 0 without transposition; no pair syntax.
    Default,
    /// RD-chosen pair written with a 7-symbol truncated binary code.
    FullyExplicit,
    /// Pair taken from the logits; no pair syntax.
    Inference,
    /// RD-chosen pair coded as a remainder against the logits' choice.
    Prediction,
}

impl SignalingScheme {
    pub const ALL: [SignalingScheme; 4] = [
        SignalingScheme::Default,
        SignalingScheme::FullyExplicit,
        SignalingScheme::Inference,
        SignalingScheme::Prediction,
    ];

    pub fn code(self) -> u8 {
        match self {
            SignalingScheme::Default => 0,
            SignalingScheme::FullyExplicit => 1,
            SignalingScheme::Inference => 2,
            SignalingScheme::Prediction => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.code() == c)
    }

    pub fn name(self) -> &'static str {
        match self {
            SignalingScheme::Default => "default",
            SignalingScheme::FullyExplicit => "explicit",
            SignalingScheme::Inference => "inference",
            SignalingScheme::Prediction => "prediction",
        }
    }
}

impl fmt::Display for SignalingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SignalingScheme {
    type Err = SignalingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| SignalingError::UnknownScheme(s.to_owned()))
    }
}

/// Implicit pair of a classic block from its effective intra mode.
pub fn mode_to_pair(effective: i32) -> Result<(PairSpec, u8), SignalingError> {
    let idx = match effective {
        0 | 1 => 0,
        -14..=-1 | 2..=12 => 1,
        13..=23 => 2,
        24..=34 => 3,
        35..=44 => 4,
        45..=55 => 5,
        56..=83 => 6,
        _ => return Err(SignalingError::UnmappedMode(effective)),
    };
    Ok((PAIR_TABLE[idx as usize], idx))
}

pub fn pair_index_to_spec(idx: u8) -> PairSpec {
    PAIR_TABLE[idx as usize]
}

pub fn spec_to_pair_index(spec: PairSpec) -> Option<u8> {
    PAIR_TABLE.iter().position(|&p| p == spec).map(|i| i as u8)
}

/// Argmax of the head for `lfnst_idx` (1: `u[0..7]`, 2: `u[7..14]`); the
/// lowest index wins ties.
pub fn pair_from_logits(u: &[f64], lfnst_idx: u8) -> u8 {
    assert_eq!(u.len(), LOGIT_COUNT);
    assert!(lfnst_idx == 1 || lfnst_idx == 2, "lfnstIdx {lfnst_idx}");
    let head = &u[(lfnst_idx as usize - 1) * PAIR_COUNT..][..PAIR_COUNT];
    let mut best = 0;
    for (i, &v) in head.iter().enumerate() {
        if v > head[best] {
            best = i;
        }
    }
    best as u8
}

/// Maps a pair chosen in the network's orientation back to the block's.
/// Transposed geometry swaps the coefficient transposition of every pair
/// except set 0, which has a single orientation-free member.
pub fn orient_pair(pair: PairSpec, geometry_transposed: bool) -> PairSpec {
    if geometry_transposed && pair.set != 0 {
        PairSpec::new(pair.set, !pair.transpose)
    } else {
        pair
    }
}

pub fn write_lfnst_idx(sink: &mut impl BitSink, idx: u8) {
    match idx {
        0 => sink.put_bits(0, 1, SyntaxElement::LfnstIdx),
        1 => sink.put_bits(0b10, 2, SyntaxElement::LfnstIdx),
        2 => sink.put_bits(0b11, 2, SyntaxElement::LfnstIdx),
        _ => panic!("lfnstIdx {idx}"),
    }
}

pub fn lfnst_idx_len(idx: u8) -> u32 {
    if idx == 0 {
        1
    } else {
        2
    }
}

pub fn read_lfnst_idx(r: &mut BitReader<'_>) -> Result<u8, BitstreamError> {
    if !r.read_flag(SyntaxElement::LfnstIdx)? {
        return Ok(0);
    }
    Ok(1 + r.read_flag(SyntaxElement::LfnstIdx)? as u8)
}

/// `(trExpIdx - trPairIdx) mod 7`.
pub fn remainder(tr_exp_idx: u8, tr_pair_idx: u8) -> u8 {
    ((tr_exp_idx as usize + PAIR_COUNT - tr_pair_idx as usize) % PAIR_COUNT) as u8
}

pub fn encode_remainder(sink: &mut impl BitSink, tr_exp_idx: u8, tr_pair_idx: u8) {
    write_tb(
        sink,
        remainder(tr_exp_idx, tr_pair_idx) as u32,
        PAIR_COUNT as u32,
        SyntaxElement::PairIdx,
    );
}

pub fn decode_remainder(r: &mut BitReader<'_>, tr_pair_idx: u8) -> Result<u8, BitstreamError> {
    let rem = read_tb(r, PAIR_COUNT as u32, SyntaxElement::PairIdx)?;
    Ok(((tr_pair_idx as u32 + rem) % PAIR_COUNT as u32) as u8)
}

pub fn encode_explicit(sink: &mut impl BitSink, tr_exp_idx: u8) {
    write_tb(sink, tr_exp_idx as u32, PAIR_COUNT as u32, SyntaxElement::PairIdx);
}

pub fn decode_explicit(r: &mut BitReader<'_>) -> Result<u8, BitstreamError> {
    Ok(read_tb(r, PAIR_COUNT as u32, SyntaxElement::PairIdx)? as u8)
}

/// Pair-syntax length for an NN-mode block with `lfnstIdx != 0`.
pub fn pair_bits(scheme: SignalingScheme, tr_exp_idx: u8, predicted: u8) -> u32 {
    match scheme {
        SignalingScheme::Default | SignalingScheme::Inference => 0,
        SignalingScheme::FullyExplicit => tb_len(tr_exp_idx as u32, PAIR_COUNT as u32),
        SignalingScheme::Prediction => tb_len(remainder(tr_exp_idx, predicted) as u32, PAIR_COUNT as u32),
    }
}

/// Pair indices an NN-mode block may use under `scheme` for one lfnstIdx,
/// given the logits' prediction.
pub fn candidate_pairs(scheme: SignalingScheme, predicted: u8) -> Vec<u8> {
    match scheme {
        SignalingScheme::Default => vec![0],
        SignalingScheme::Inference => vec![predicted],
        SignalingScheme::FullyExplicit | SignalingScheme::Prediction => (0..PAIR_COUNT as u8).collect(),
    }
}

/// Writes the pair syntax for an NN-mode block.
pub fn write_pair(sink: &mut impl BitSink, scheme: SignalingScheme, tr_exp_idx: u8, predicted: u8) {
    match scheme {
        SignalingScheme::Default | SignalingScheme::Inference => {}
        SignalingScheme::FullyExplicit => encode_explicit(sink, tr_exp_idx),
        SignalingScheme::Prediction => encode_remainder(sink, tr_exp_idx, predicted),
    }
}

/// Reads (or infers) the pair index of an NN-mode block.
pub fn read_pair(r: &mut BitReader<'_>, scheme: SignalingScheme, predicted: u8) -> Result<u8, BitstreamError> {
    match scheme {
        SignalingScheme::Default => Ok(0),
        SignalingScheme::Inference => Ok(predicted),
        SignalingScheme::FullyExplicit => decode_explicit(r),
        SignalingScheme::Prediction => decode_remainder(r, predicted),
    }
}
