//! Secondary-transform training samples from classic intra residuals.

use crate::classic::{predict_classic, wide_angle_remap, References, MODE_COUNT};
use crate::plane::{Block, Frame, Plane};
use crate::signaling::mode_to_pair;
use crate::transforms::{dct2_forward, gather_region, BankSamples, KernelFamily};

/// Block sizes sampled for bank training (both kernel families, both
/// orientations).
pub const BANK_BLOCK_SIZES: [(usize, usize); 9] = [
    (4, 4),
    (4, 8),
    (8, 4),
    (8, 8),
    (4, 16),
    (16, 4),
    (8, 16),
    (16, 8),
    (16, 16),
];

/// SSE-best classic mode of a block predicted from `frame`; ties go to the
/// lower mode.
pub fn best_classic_mode(frame: &Frame, orig: &Block, x: usize, y: usize) -> (u8, Block) {
    let refs = References::from_frame(frame, x, y, orig.h, orig.w);
    let mut best: Option<(u64, u8, Block)> = None;
    for m in 0..MODE_COUNT {
        let pred = predict_classic(&refs, m, orig.h, orig.w);
        let sse = orig.sse(&pred);
        if best.as_ref().is_none_or(|b| sse < b.0) {
            best = Some((sse, m, pred));
        }
    }
    let (_, m, pred) = best.expect("modes searched");
    (m, pred)
}

/// Tiles every picture with each size in `sizes`, predicts each tile with
/// its best classic mode from the original samples, and files the
/// low-frequency primary coefficients of the residual under the mode's
/// transform set (read transposed for transposed sets).
pub fn collect_bank_samples(images: &[Plane], sizes: &[(usize, usize)]) -> BankSamples {
    let mut samples = BankSamples::default();
    for img in images {
        let frame = Frame::fully_decoded(img.clone());
        for &(h, w) in sizes {
            let family = KernelFamily::for_block(h, w);
            for y in (0..=img.height().saturating_sub(h)).step_by(h) {
                for x in (0..=img.width().saturating_sub(w)).step_by(w) {
                    if x + w > img.width() || y + h > img.height() {
                        continue;
                    }
                    let orig = img.block(x, y, h, w);
                    let (mode, pred) = best_classic_mode(&frame, &orig, x, y);
                    let residual: Vec<f64> = orig
                        .data
                        .iter()
                        .zip(&pred.data)
                        .map(|(&o, &p)| (o - p) as f64)
                        .collect();
                    let primary = dct2_forward(&residual, h, w);
                    let (spec, _) = mode_to_pair(wide_angle_remap(mode, h, w)).expect("remapped modes are mapped");
                    let region = gather_region(&primary, h, w, spec.transpose);
                    if region.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    samples.push(family, spec.set, region);
                }
            }
        }
    }
    samples
}
