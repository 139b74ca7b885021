//! Conventional intra prediction: planar, DC and 65 angular directions with
//! wide-angle substitution for rectangular blocks.

use crate::context::Context;
use crate::plane::{Block, Frame};

pub const PLANAR: u8 = 0;
pub const DC: u8 = 1;
pub const MODE_COUNT: u8 = 67;

/// Default encoder search set.
pub const REDUCED_MODES: [u8; 11] = [0, 1, 2, 10, 18, 26, 34, 42, 50, 58, 66];

/// Angle (1/32 sample per row) for effective modes -14..=80; planar and DC
/// slots hold 0.
const ANGLES: [i32; 95] = [
    512, 341, 256, 171, 128, 102, 86, 73, 64, 57, 51, 45, 39, 35, // -14..-1
    0, 0, // planar, DC
    32, 29, 26, 23, 20, 18, 16, 14, 12, 10, 8, 6, 4, 3, 2, 1, // 2..17
    0, -1, -2, -3, -4, -6, -8, -10, -12, -14, -16, -18, -20, -23, -26, -29, // 18..33
    -32, -29, -26, -23, -20, -18, -16, -14, -12, -10, -8, -6, -4, -3, -2, -1, // 34..49
    0, 1, 2, 3, 4, 6, 8, 10, 12, 14, 16, 18, 20, 23, 26, 29, // 50..65
    32, 35, 39, 45, 51, 57, 64, 73, 86, 102, 128, 171, 256, 341, 512, // 66..80
];

/// Angle of an effective (post-substitution) angular mode.
pub fn intra_pred_angle(effective: i32) -> i32 {
    assert!(
        (-14..=80).contains(&effective) && !(0..=1).contains(&effective),
        "mode {effective} is not angular"
    );
    ANGLES[(effective + 14) as usize]
}

/// Replaces near-diagonal modes by wide angles on rectangular blocks.
pub fn wide_angle_remap(mode: u8, h: usize, w: usize) -> i32 {
    let m = mode as i32;
    if mode < 2 || h == w {
        return m;
    }
    let ratio = (w.max(h) / w.min(h)).trailing_zeros() as i32;
    if w > h {
        let limit = if ratio > 1 { 8 + 2 * ratio } else { 8 };
        if m < limit {
            return m + 65;
        }
    } else {
        let limit = if ratio > 1 { 60 - 2 * ratio } else { 60 };
        if m > limit {
            return m - 67;
        }
    }
    m
}

/// Reference lines: `top[0]` and `left[0]` are the above-left corner,
/// `top[1 + x]` is the sample above column `x`, `left[1 + y]` the sample
/// left of row `y`. Reads past the end replicate the last sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct References {
    pub top: Vec<i32>,
    pub left: Vec<i32>,
}

impl References {
    /// Reads `2 (w + h)` samples per side from the decoded frame and
    /// substitutes unavailable ones by the previous available sample along
    /// the bottom-left to top-right path.
    pub fn from_frame(frame: &Frame, x: usize, y: usize, h: usize, w: usize) -> Self {
        let n = 2 * (w + h);
        // path: left[n] .. left[1], corner, top[1] .. top[n]
        let coords: Vec<(isize, isize)> = (1..=n)
            .rev()
            .map(|i| (x as isize - 1, y as isize + i as isize - 1))
            .chain(std::iter::once((x as isize - 1, y as isize - 1)))
            .chain((1..=n).map(|i| (x as isize + i as isize - 1, y as isize - 1)))
            .collect();
        let avail: Vec<Option<i32>> = coords
            .iter()
            .map(|&(px, py)| {
                frame
                    .is_available(px, py)
                    .then(|| frame.plane.get(px as usize, py as usize) as i32)
            })
            .collect();
        let mut path = vec![1i32 << (frame.plane.bitdepth() - 1); coords.len()];
        if let Some(first) = avail.iter().flatten().next() {
            let mut prev = *first;
            for (dst, a) in path.iter_mut().zip(&avail) {
                if let Some(v) = a {
                    prev = *v;
                }
                *dst = prev;
            }
        }
        let mut left: Vec<i32> = path[..=n].to_vec();
        left.reverse();
        let top = path[n..].to_vec();
        Self { top, left }
    }

    /// Top row and left column of a network context, corner included.
    pub fn from_context(ctx: &Context) -> Self {
        let s = ctx.spec;
        let top: Vec<i32> = ctx.top_row()[s.n_l - 1..].iter().map(|v| v.round() as i32).collect();
        let mut left = vec![ctx.corner().round() as i32];
        left.extend(ctx.left_column().iter().map(|v| v.round() as i32));
        Self { top, left }
    }

    fn at(line: &[i32], i: isize) -> i32 {
        line[(i.max(0) as usize).min(line.len() - 1)]
    }

    fn transposed(&self) -> Self {
        Self {
            top: self.left.clone(),
            left: self.top.clone(),
        }
    }
}

pub fn predict_classic(refs: &References, mode: u8, h: usize, w: usize) -> Block {
    assert!(mode < MODE_COUNT, "mode {mode}");
    match mode {
        PLANAR => planar(refs, h, w),
        DC => dc(refs, h, w),
        _ => {
            let eff = wide_angle_remap(mode, h, w);
            if eff >= 34 {
                angular(refs, intra_pred_angle(eff), h, w)
            } else {
                angular(&refs.transposed(), intra_pred_angle(eff), w, h).transposed()
            }
        }
    }
}

fn planar(refs: &References, h: usize, w: usize) -> Block {
    let (lw, lh) = (w.trailing_zeros(), h.trailing_zeros());
    let top = |i: usize| References::at(&refs.top, 1 + i as isize);
    let left = |i: usize| References::at(&refs.left, 1 + i as isize);
    let (tr, bl) = (top(w), left(h));
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let v = (((h - 1 - y) as i32 * top(x) + (y + 1) as i32 * bl) << lw)
                + (((w - 1 - x) as i32 * left(y) + (x + 1) as i32 * tr) << lh);
            data.push((v + (w * h) as i32) >> (lw + lh + 1));
        }
    }
    Block { h, w, data }
}

fn dc(refs: &References, h: usize, w: usize) -> Block {
    let st: i32 = (0..w).map(|i| References::at(&refs.top, 1 + i as isize)).sum();
    let sl: i32 = (0..h).map(|i| References::at(&refs.left, 1 + i as isize)).sum();
    let n = (w + h) as i32;
    Block::filled(h, w, (st + sl + n / 2) / n)
}

/// Vertical-class prediction from `refs.top`; negative angles extend the
/// main line with side samples projected through the inverse angle.
fn angular(refs: &References, angle: i32, h: usize, w: usize) -> Block {
    let inv = if angle < 0 {
        (512.0 * 32.0 / angle as f64).round() as i32
    } else {
        0
    };
    let main = |i: isize| -> i32 {
        if i >= 0 || angle >= 0 {
            References::at(&refs.top, i)
        } else {
            References::at(&refs.left, ((i as i32 * inv + 256) >> 9) as isize)
        }
    };
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        let pos = (y as i32 + 1) * angle;
        let idx = pos >> 5;
        let frac = pos & 31;
        for x in 0..w {
            let i = x as isize + idx as isize + 1;
            let a = main(i);
            let v = if frac == 0 {
                a
            } else {
                ((32 - frac) * a + frac * main(i + 1) + 16) >> 5
            };
            data.push(v);
        }
    }
    Block { h, w, data }
}
