//! Picture encoder: RD quadtree search and stream assembly.

use crate::entropy::{BitAccounting, BitSink, BitWriter, SyntaxElement};
use crate::plane::{Frame, Plane};
use crate::predictor::ModelSet;
use crate::scalar::Scalar;
use crate::transforms::TransformBank;

use super::block::{write_block_syntax, BlockCoder, BlockDecision, PredMode};
use super::header::StreamHeader;
use super::{CodecConfig, CodecError, CTU_SIZE, MIN_BLOCK};

/// Optional halving of a quadtree leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Rect {
    None,
    /// Two `s/2 x s` blocks, top then bottom.
    Horizontal,
    /// Two `s x s/2` blocks, left then right.
    Vertical,
}

impl Rect {
    pub(crate) fn blocks(self, x: usize, y: usize, s: usize) -> Vec<(usize, usize, usize, usize)> {
        match self {
            Rect::None => vec![(x, y, s, s)],
            Rect::Horizontal => vec![(x, y, s / 2, s), (x, y + s / 2, s / 2, s)],
            Rect::Vertical => vec![(x, y, s, s / 2), (x + s / 2, y, s, s / 2)],
        }
    }

    pub(crate) fn write(self, sink: &mut impl BitSink) {
        match self {
            Rect::None => sink.put_bits(0, 1, SyntaxElement::RectFlag),
            Rect::Horizontal => sink.put_bits(0b10, 2, SyntaxElement::RectFlag),
            Rect::Vertical => sink.put_bits(0b11, 2, SyntaxElement::RectFlag),
        }
    }

    fn bits(self) -> u32 {
        if self == Rect::None {
            1
        } else {
            2
        }
    }
}

enum Node {
    Outside,
    Split(Vec<Node>),
    Leaf { rect: Rect, blocks: Vec<BlockDecision> },
}

/// Whether a square node lies fully inside the picture, partly, or not at all.
pub(crate) fn coverage(x: usize, y: usize, s: usize, width: usize, height: usize) -> Option<bool> {
    if x >= width || y >= height {
        None
    } else {
        Some(x + s <= width && y + s <= height)
    }
}

pub(crate) fn quadrants(x: usize, y: usize, s: usize) -> [(usize, usize); 4] {
    let h = s / 2;
    [(x, y), (x + h, y), (x, y + h), (x + h, y + h)]
}

/// Aggregate statistics of an encoded picture.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EncodeStats {
    pub blocks: usize,
    pub nn_blocks: usize,
    pub lfnst_blocks: usize,
    pub nn_lfnst_blocks: usize,
    /// NN blocks with lfnstIdx != 0 whose coded pair equals the network's.
    pub pair_hits: usize,
    /// Fraction of picture area predicted by the NN mode.
    pub nn_area: f64,
    /// Sum of the per-block RD costs.
    pub rd_cost: f64,
}

#[derive(Clone, Debug)]
pub struct EncodeOutput {
    pub bitstream: Vec<u8>,
    pub recon: Plane,
    pub accounting: BitAccounting,
    pub decisions: Vec<BlockDecision>,
    pub stats: EncodeStats,
}

struct Encoder<'a, T: Scalar> {
    coder: BlockCoder<'a, T>,
    original: &'a Plane,
    frame: Frame,
    rd_cost: f64,
}

impl<T: Scalar> Encoder<'_, T> {
    fn split_flag_bits(&self, s: usize) -> f64 {
        if s > MIN_BLOCK {
            1.0
        } else {
            0.0
        }
    }

    fn node(&mut self, x: usize, y: usize, s: usize) -> (Node, f64) {
        let (width, height) = (self.original.width(), self.original.height());
        let Some(inside) = coverage(x, y, s, width, height) else {
            return (Node::Outside, 0.0);
        };
        if !inside {
            let mut cost = 0.0;
            let children = quadrants(x, y, s)
                .into_iter()
                .map(|(cx, cy)| {
                    let (n, c) = self.node(cx, cy, s / 2);
                    cost += c;
                    n
                })
                .collect();
            return (Node::Split(children), cost);
        }
        let flag = self.coder.lambda() * self.split_flag_bits(s);
        let before = (s > MIN_BLOCK).then(|| self.frame.save(x, y, s, s));
        let (leaf, leaf_cost) = self.leaf(x, y, s);
        let leaf_cost = leaf_cost + flag;
        let Some(before) = before else {
            return (leaf, leaf_cost);
        };
        let leaf_state = self.frame.save(x, y, s, s);
        self.frame.restore(&before);
        let mut split_cost = flag;
        let mut children = Vec::with_capacity(4);
        for (cx, cy) in quadrants(x, y, s) {
            let (n, c) = self.node(cx, cy, s / 2);
            split_cost += c;
            children.push(n);
            if split_cost >= leaf_cost {
                break;
            }
        }
        if leaf_cost <= split_cost {
            self.frame.restore(&leaf_state);
            (leaf, leaf_cost)
        } else {
            (Node::Split(children), split_cost)
        }
    }

    fn leaf(&mut self, x: usize, y: usize, s: usize) -> (Node, f64) {
        let mut options = vec![Rect::None];
        if self.coder.cfg.rect_partitions && s >= 2 * MIN_BLOCK {
            options.extend([Rect::Horizontal, Rect::Vertical]);
        }
        let rect_coded = options.len() > 1;
        let before = (options.len() > 1).then(|| self.frame.save(x, y, s, s));
        let mut best: Option<(Rect, Vec<BlockDecision>, f64, crate::plane::FrameRegion)> = None;
        for rect in options {
            if let Some(b) = &before {
                self.frame.restore(b);
            }
            let mut cost = if rect_coded {
                self.coder.lambda() * rect.bits() as f64
            } else {
                0.0
            };
            let mut blocks = Vec::new();
            for (bx, by, bh, bw) in rect.blocks(x, y, s) {
                let orig = self.original.block(bx, by, bh, bw);
                let r = self.coder.encode_block(&self.frame, &orig, bx, by);
                self.frame.write_block(bx, by, &r.recon);
                cost += r.cost;
                blocks.push(r.decision);
            }
            if best.as_ref().is_none_or(|b| cost < b.2) {
                let state = self.frame.save(x, y, s, s);
                best = Some((rect, blocks, cost, state));
            }
        }
        let (rect, blocks, cost, state) = best.expect("at least one option");
        self.frame.restore(&state);
        (Node::Leaf { rect, blocks }, cost)
    }

    fn write_node(
        &self,
        sink: &mut impl BitSink,
        node: &Node,
        x: usize,
        y: usize,
        s: usize,
        out: &mut Vec<BlockDecision>,
    ) {
        let (width, height) = (self.original.width(), self.original.height());
        let Some(inside) = coverage(x, y, s, width, height) else {
            return;
        };
        if inside && s > MIN_BLOCK {
            sink.put_flag(matches!(node, Node::Split(_)), SyntaxElement::SplitFlag);
        }
        match node {
            Node::Outside => {}
            Node::Split(children) => {
                for (child, (cx, cy)) in children.iter().zip(quadrants(x, y, s)) {
                    self.write_node(sink, child, cx, cy, s / 2, out);
                }
            }
            Node::Leaf { rect, blocks } => {
                if self.coder.cfg.rect_partitions && s >= 2 * MIN_BLOCK {
                    rect.write(sink);
                }
                for b in blocks {
                    write_block_syntax(sink, b, self.coder.cfg.scheme, self.coder.nn_available(b.h, b.w));
                    out.push(b.clone());
                }
            }
        }
    }
}

pub(crate) fn check_dimensions(width: usize, height: usize) -> Result<(), CodecError> {
    if width == 0
        || height == 0
        || !width.is_multiple_of(4)
        || !height.is_multiple_of(4)
        || width > u16::MAX as usize
        || height > u16::MAX as usize
    {
        return Err(CodecError::Dimensions { width, height });
    }
    Ok(())
}

/// Encodes a picture. `models` is required when `cfg.nn_enabled`.
pub fn encode_image<T: Scalar>(
    plane: &Plane,
    cfg: &CodecConfig,
    models: Option<&ModelSet<T>>,
    bank: &TransformBank,
) -> Result<EncodeOutput, CodecError> {
    check_dimensions(plane.width(), plane.height())?;
    if cfg.classic_modes.is_empty() && !cfg.nn_enabled {
        return Err(CodecError::Config("no prediction mode enabled"));
    }
    let coder = BlockCoder::new(cfg, models, bank, plane.bitdepth())?;
    let header = StreamHeader {
        width: plane.width() as u16,
        height: plane.height() as u16,
        bitdepth: plane.bitdepth(),
        qp: cfg.qp,
        scheme: cfg.scheme,
        nn_enabled: cfg.nn_enabled,
        rect_partitions: cfg.rect_partitions,
        model_hash: match (cfg.nn_enabled, models) {
            (true, Some(m)) => m.hash(),
            _ => 0,
        },
        bank_hash: bank.hash(),
    };
    let mut enc = Encoder {
        coder,
        original: plane,
        frame: Frame::new(plane.width(), plane.height(), plane.bitdepth())?,
        rd_cost: 0.0,
    };
    let mut writer = BitWriter::new();
    for b in header.to_bytes() {
        writer.put_bits(b as u64, 8, SyntaxElement::Header);
    }
    let mut decisions = Vec::new();
    for y in (0..plane.height()).step_by(CTU_SIZE) {
        for x in (0..plane.width()).step_by(CTU_SIZE) {
            let (node, cost) = enc.node(x, y, CTU_SIZE);
            enc.rd_cost += cost;
            enc.write_node(&mut writer, &node, x, y, CTU_SIZE, &mut decisions);
        }
    }
    let (bitstream, accounting) = writer.finish_with_accounting();
    let area = (plane.width() * plane.height()) as f64;
    let mut stats = EncodeStats {
        blocks: decisions.len(),
        rd_cost: enc.rd_cost,
        ..Default::default()
    };
    for d in &decisions {
        let nn = d.mode == PredMode::Nn;
        stats.nn_blocks += nn as usize;
        stats.lfnst_blocks += (d.lfnst != 0) as usize;
        if nn {
            stats.nn_area += (d.h * d.w) as f64 / area;
            if d.lfnst != 0 {
                stats.nn_lfnst_blocks += 1;
                stats.pair_hits += (d.pair == d.predicted_pair) as usize;
            }
        }
    }
    Ok(EncodeOutput {
        bitstream,
        recon: enc.frame.plane,
        accounting,
        decisions,
        stats,
    })
}
