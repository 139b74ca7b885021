//! Picture decoder.

use crate::entropy::{BitReader, SyntaxElement};
use crate::plane::{Frame, Plane};
use crate::predictor::ModelSet;
use crate::scalar::Scalar;
use crate::transforms::TransformBank;

use super::block::{BlockCoder, PairSelection};
use super::encoder::{check_dimensions, coverage, quadrants, Rect};
use super::header::{StreamHeader, HEADER_BYTES};
use super::{CodecConfig, CodecError, CTU_SIZE, MIN_BLOCK};

struct Decoder<'a, 'b, T: Scalar> {
    coder: BlockCoder<'a, T>,
    reader: BitReader<'b>,
    frame: Frame,
}

impl<T: Scalar> Decoder<'_, '_, T> {
    fn node(&mut self, x: usize, y: usize, s: usize) -> Result<(), CodecError> {
        let (width, height) = (self.frame.plane.width(), self.frame.plane.height());
        let Some(inside) = coverage(x, y, s, width, height) else {
            return Ok(());
        };
        let split = !inside || (s > MIN_BLOCK && self.reader.read_flag(SyntaxElement::SplitFlag)?);
        if split {
            for (cx, cy) in quadrants(x, y, s) {
                self.node(cx, cy, s / 2)?;
            }
            return Ok(());
        }
        let rect = if self.coder.cfg.rect_partitions && s >= 2 * MIN_BLOCK {
            if !self.reader.read_flag(SyntaxElement::RectFlag)? {
                Rect::None
            } else if self.reader.read_flag(SyntaxElement::RectFlag)? {
                Rect::Vertical
            } else {
                Rect::Horizontal
            }
        } else {
            Rect::None
        };
        for (bx, by, bh, bw) in rect.blocks(x, y, s) {
            let recon = self.coder.decode_block(&mut self.reader, &self.frame, bx, by, bh, bw)?;
            self.frame.write_block(bx, by, &recon);
        }
        Ok(())
    }
}

/// Decodes a stream. `models` must match the stream's model hash when the
/// stream uses the NN mode; `bank` must always match.
pub fn decode_image<T: Scalar>(
    bytes: &[u8],
    models: Option<&ModelSet<T>>,
    bank: &TransformBank,
) -> Result<Plane, CodecError> {
    let header = StreamHeader::parse(bytes)?;
    check_dimensions(header.width as usize, header.height as usize)?;
    let bank_hash = bank.hash();
    if bank_hash != header.bank_hash {
        return Err(CodecError::HashMismatch {
            what: "transform bank",
            stream: header.bank_hash,
            provided: bank_hash,
        });
    }
    let models = if header.nn_enabled {
        let m = models.ok_or(CodecError::MissingModels)?;
        let h = m.hash();
        if h != header.model_hash {
            return Err(CodecError::HashMismatch {
                what: "model",
                stream: header.model_hash,
                provided: h,
            });
        }
        Some(m)
    } else {
        None
    };
    let cfg = CodecConfig {
        qp: header.qp,
        scheme: header.scheme,
        classic_modes: vec![],
        nn_enabled: header.nn_enabled,
        rect_partitions: header.rect_partitions,
        pair_selection: PairSelection::Signaled,
    };
    let coder = BlockCoder::new(&cfg, models, bank, header.bitdepth)?;
    let mut dec = Decoder {
        coder,
        reader: BitReader::at_byte(bytes, HEADER_BYTES),
        frame: Frame::new(header.width as usize, header.height as usize, header.bitdepth)?,
    };
    for y in (0..header.height as usize).step_by(CTU_SIZE) {
        for x in (0..header.width as usize).step_by(CTU_SIZE) {
            dec.node(x, y, CTU_SIZE)?;
        }
    }
    if dec.reader.remaining() >= 8 {
        return Err(dec.reader.invalid(SyntaxElement::Padding, "trailing bytes").into());
    }
    Ok(dec.frame.plane)
}
