//! Per-block candidate search, syntax and reconstruction.

use crate::classic::{predict_classic, wide_angle_remap, References, MODE_COUNT};
use crate::context::resolve_geometry;
use crate::entropy::{
    code_coefficients, decode_coefficients, BitCounter, BitReader, BitSink, QuantParams, SyntaxElement,
};
use crate::nn::arch::LOGIT_COUNT;
use crate::plane::{Block, Frame};
use crate::predictor::{predict_nn, ModelSet};
use crate::scalar::Scalar;
use crate::signaling::{
    candidate_pairs, mode_to_pair, orient_pair, pair_from_logits, read_lfnst_idx, read_pair, write_lfnst_idx,
    write_pair, SignalingScheme, PAIR_COUNT, PAIR_TABLE,
};
use crate::transforms::{dct2_forward, dct2_inverse, PairSpec, TransformBank, SECONDARY_OUTPUTS};

use super::{CodecConfig, CodecError};

/// Prediction mode of a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PredMode {
    Classic(u8),
    Nn,
}

/// Pair candidates offered to NN-mode blocks during the search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairSelection {
    /// As allowed by the signaling scheme, at its signaling cost.
    Signaled,
    /// All seven pairs at zero signaling cost. For analysis only: the
    /// resulting streams are not decodable.
    Oracle,
}

/// Everything coded for one block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockDecision {
    pub x: usize,
    pub y: usize,
    pub h: usize,
    pub w: usize,
    pub mode: PredMode,
    pub lfnst: u8,
    /// Pair index in use: implicit for classic blocks, the coded or inferred
    /// index (network orientation) for NN blocks.
    pub pair: u8,
    /// The network's choice for this lfnstIdx (NN blocks with lfnst != 0).
    pub predicted_pair: u8,
    /// Quantized levels in raster order.
    pub levels: Vec<i32>,
}

impl BlockDecision {
    pub fn cbf(&self) -> bool {
        self.levels.iter().any(|&l| l != 0)
    }
}

#[derive(Clone, Debug)]
pub struct BlockResult {
    pub decision: BlockDecision,
    pub recon: Block,
    pub sse: u64,
    pub bits: u64,
    /// `sse + lambda * bits`.
    pub cost: f64,
}

/// Writes the syntax of one block. `mode_flag` tells whether the NN/classic
/// flag is present (NN mode enabled and available for the block size).
pub fn write_block_syntax(sink: &mut impl BitSink, d: &BlockDecision, scheme: SignalingScheme, mode_flag: bool) {
    if mode_flag {
        sink.put_flag(d.mode == PredMode::Nn, SyntaxElement::ModeFlag);
    }
    if let PredMode::Classic(m) = d.mode {
        sink.put_bits(m as u64, 7, SyntaxElement::ClassicMode);
    }
    if code_coefficients(sink, &d.levels, d.h, d.w).is_some() {
        write_lfnst_idx(sink, d.lfnst);
        if d.mode == PredMode::Nn && d.lfnst != 0 {
            write_pair(sink, scheme, d.pair, d.predicted_pair);
        }
    }
}

/// `clip(prediction + inverse transforms of the dequantized levels)`.
pub fn reconstruct(
    pred: &Block,
    levels: &[i32],
    lfnst: u8,
    pair: PairSpec,
    quant: &QuantParams,
    bank: &TransformBank,
    max_value: i32,
) -> Block {
    if levels.iter().all(|&l| l == 0) {
        return pred.clone();
    }
    let (h, w) = (pred.h, pred.w);
    let mut coeffs = quant.dequantize_all(levels);
    if lfnst != 0 {
        coeffs = bank.inverse(&coeffs, h, w, pair, lfnst);
    }
    let res = dct2_inverse(&coeffs, h, w);
    Block {
        h,
        w,
        data: pred
            .data
            .iter()
            .zip(&res)
            .map(|(&p, &r)| (p + r.round() as i32).clamp(0, max_value))
            .collect(),
    }
}

/// Shared encoder/decoder block logic for one picture.
pub struct BlockCoder<'a, T: Scalar> {
    pub cfg: &'a CodecConfig,
    models: Option<&'a ModelSet<T>>,
    bank: &'a TransformBank,
    quant: QuantParams,
    lambda: f64,
    max_value: i32,
}

struct Candidate<'b> {
    mode: PredMode,
    pred: &'b Block,
    /// Per lfnstIdx 1 and 2: (pair index, pair used, predicted index).
    pairs: [Vec<(u8, PairSpec)>; 2],
    predicted: [u8; 2],
}

impl<'a, T: Scalar> BlockCoder<'a, T> {
    pub fn new(
        cfg: &'a CodecConfig,
        models: Option<&'a ModelSet<T>>,
        bank: &'a TransformBank,
        bitdepth: u8,
    ) -> Result<Self, CodecError> {
        if cfg.nn_enabled && models.is_none() {
            return Err(CodecError::MissingModels);
        }
        if cfg.classic_modes.iter().any(|&m| m >= MODE_COUNT) {
            return Err(CodecError::Config("classic mode out of range"));
        }
        Ok(Self {
            cfg,
            models,
            bank,
            quant: QuantParams::new(cfg.qp),
            lambda: cfg.lambda(),
            max_value: (1i32 << bitdepth) - 1,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn quant(&self) -> &QuantParams {
        &self.quant
    }

    /// Whether the block carries a mode flag (and may use the NN mode).
    pub fn nn_available(&self, h: usize, w: usize) -> bool {
        self.cfg.nn_enabled && resolve_geometry(h, w).is_some()
    }

    fn bits_scheme(&self) -> SignalingScheme {
        match self.cfg.pair_selection {
            PairSelection::Signaled => self.cfg.scheme,
            PairSelection::Oracle => SignalingScheme::Inference,
        }
    }

    pub fn syntax_bits(&self, d: &BlockDecision) -> u64 {
        let mut c = BitCounter::new();
        write_block_syntax(&mut c, d, self.bits_scheme(), self.nn_available(d.h, d.w));
        c.bits_written()
    }

    /// RD search over every enabled mode, lfnstIdx and allowed pair, with
    /// the block's context taken from `frame`.
    pub fn encode_block(&self, frame: &Frame, orig: &Block, x: usize, y: usize) -> BlockResult {
        let (h, w) = (orig.h, orig.w);
        let mut best: Option<BlockResult> = None;
        if !self.cfg.classic_modes.is_empty() {
            let refs = References::from_frame(frame, x, y, h, w);
            for &m in &self.cfg.classic_modes {
                let pred = predict_classic(&refs, m, h, w);
                let (spec, idx) = mode_to_pair(wide_angle_remap(m, h, w)).expect("remapped modes are mapped");
                let cand = Candidate {
                    mode: PredMode::Classic(m),
                    pred: &pred,
                    pairs: [vec![(idx, spec)], vec![(idx, spec)]],
                    predicted: [idx, idx],
                };
                self.search(orig, x, y, &cand, &mut best);
            }
        }
        if self.nn_available(h, w) {
            if let Some(out) = self.nn_output(frame, x, y, h, w) {
                let (pairs, predicted) = self.nn_pairs(&out.logits, out.geometry.transpose);
                let cand = Candidate {
                    mode: PredMode::Nn,
                    pred: &out.prediction,
                    pairs,
                    predicted,
                };
                self.search(orig, x, y, &cand, &mut best);
            }
        }
        best.expect("at least one mode is searched")
    }

    fn nn_output(
        &self,
        frame: &Frame,
        x: usize,
        y: usize,
        h: usize,
        w: usize,
    ) -> Option<crate::predictor::NnModeOutput> {
        predict_nn(frame, x, y, h, w, self.models?)
    }

    fn nn_pairs(&self, logits: &[f64; LOGIT_COUNT], transposed: bool) -> ([Vec<(u8, PairSpec)>; 2], [u8; 2]) {
        let mut predicted = [0u8; 2];
        let mut pairs: [Vec<(u8, PairSpec)>; 2] = [Vec::new(), Vec::new()];
        for lfnst in 1..=2u8 {
            let p = pair_from_logits(logits, lfnst);
            predicted[lfnst as usize - 1] = p;
            let ks = match self.cfg.pair_selection {
                PairSelection::Signaled => candidate_pairs(self.cfg.scheme, p),
                PairSelection::Oracle => (0..PAIR_COUNT as u8).collect(),
            };
            pairs[lfnst as usize - 1] = ks
                .into_iter()
                .map(|k| (k, orient_pair(PAIR_TABLE[k as usize], transposed)))
                .collect();
        }
        (pairs, predicted)
    }

    fn search(&self, orig: &Block, x: usize, y: usize, cand: &Candidate<'_>, best: &mut Option<BlockResult>) {
        let (h, w) = (orig.h, orig.w);
        let residual: Vec<f64> = orig
            .data
            .iter()
            .zip(&cand.pred.data)
            .map(|(&o, &p)| (o - p) as f64)
            .collect();
        let primary = dct2_forward(&residual, h, w);
        let mut consider = |lfnst: u8, pair: u8, predicted: u8, spec: PairSpec, levels: Vec<i32>| {
            let recon = reconstruct(cand.pred, &levels, lfnst, spec, &self.quant, self.bank, self.max_value);
            let sse = orig.sse(&recon);
            if let Some(b) = best.as_ref() {
                if sse as f64 >= b.cost {
                    return;
                }
            }
            let decision = BlockDecision {
                x,
                y,
                h,
                w,
                mode: cand.mode,
                lfnst,
                pair,
                predicted_pair: predicted,
                levels,
            };
            let bits = self.syntax_bits(&decision);
            let cost = sse as f64 + self.lambda * bits as f64;
            if best.as_ref().is_none_or(|b| cost < b.cost) {
                *best = Some(BlockResult {
                    decision,
                    recon,
                    sse,
                    bits,
                    cost,
                });
            }
        };
        let default_pair = cand.pairs[0][0];
        consider(0, default_pair.0, cand.predicted[0], default_pair.1, vec![0; h * w]);
        let levels = self.quant.quantize_all(&primary);
        if levels.iter().any(|&l| l != 0) {
            consider(0, default_pair.0, cand.predicted[0], default_pair.1, levels);
        }
        for lfnst in 1..=2u8 {
            let predicted = cand.predicted[lfnst as usize - 1];
            for &(k, spec) in &cand.pairs[lfnst as usize - 1] {
                let sec = self.bank.forward(&primary, h, w, spec, lfnst);
                let levels = self.quant.quantize_all(&sec);
                if levels.iter().all(|&l| l == 0) {
                    continue;
                }
                consider(lfnst, k, predicted, spec, levels);
            }
        }
    }

    /// Reads one block and returns its reconstruction.
    pub fn decode_block(
        &self,
        r: &mut BitReader<'_>,
        frame: &Frame,
        x: usize,
        y: usize,
        h: usize,
        w: usize,
    ) -> Result<Block, CodecError> {
        let nn = self.nn_available(h, w) && r.read_flag(SyntaxElement::ModeFlag)?;
        let mode = if nn {
            PredMode::Nn
        } else {
            let m = r.read_bits(7, SyntaxElement::ClassicMode)? as u8;
            if m >= MODE_COUNT {
                return Err(r.invalid(SyntaxElement::ClassicMode, "mode index out of range").into());
            }
            PredMode::Classic(m)
        };
        let (levels, last) = decode_coefficients(r, h, w)?;
        let lfnst = if last.is_some() { read_lfnst_idx(r)? } else { 0 };
        if lfnst != 0 && last.is_some_and(|l| l >= SECONDARY_OUTPUTS) {
            return Err(r
                .invalid(
                    SyntaxElement::LfnstIdx,
                    "secondary transform with high-frequency levels",
                )
                .into());
        }
        let (pred, spec) = match mode {
            PredMode::Classic(m) => {
                let refs = References::from_frame(frame, x, y, h, w);
                let (spec, _) = mode_to_pair(wide_angle_remap(m, h, w)).expect("remapped modes are mapped");
                (predict_classic(&refs, m, h, w), spec)
            }
            PredMode::Nn => {
                let out = self.nn_output(frame, x, y, h, w).ok_or(CodecError::MissingModels)?;
                let spec = if lfnst != 0 {
                    let predicted = pair_from_logits(&out.logits, lfnst);
                    let k = read_pair(r, self.cfg.scheme, predicted)?;
                    orient_pair(PAIR_TABLE[k as usize], out.geometry.transpose)
                } else {
                    PAIR_TABLE[0]
                };
                (out.prediction, spec)
            }
        };
        Ok(reconstruct(
            &pred,
            &levels,
            lfnst,
            spec,
            &self.quant,
            self.bank,
            self.max_value,
        ))
    }

    /// RD cost of each pair index (network orientation) for `lfnst`, given
    /// an NN prediction. Pairs whose levels vanish cost as an uncoded block.
    /// Signaling bits of the pair are excluded.
    pub fn pair_costs(&self, orig: &Block, pred: &Block, lfnst: u8, transposed: bool) -> [f64; PAIR_COUNT] {
        let (h, w) = (orig.h, orig.w);
        let residual: Vec<f64> = orig
            .data
            .iter()
            .zip(&pred.data)
            .map(|(&o, &p)| (o - p) as f64)
            .collect();
        let primary = dct2_forward(&residual, h, w);
        let skip = orig.sse(pred) as f64 + self.lambda;
        let mut costs = [skip; PAIR_COUNT];
        for (k, cost) in costs.iter_mut().enumerate() {
            let spec = orient_pair(PAIR_TABLE[k], transposed);
            let levels = self.quant.quantize_all(&self.bank.forward(&primary, h, w, spec, lfnst));
            if levels.iter().all(|&l| l == 0) {
                continue;
            }
            let recon = reconstruct(pred, &levels, lfnst, spec, &self.quant, self.bank, self.max_value);
            let mut c = BitCounter::new();
            code_coefficients(&mut c, &levels, h, w);
            write_lfnst_idx(&mut c, lfnst);
            *cost = orig.sse(&recon) as f64 + self.lambda * c.bits_written() as f64;
        }
        costs
    }
}
