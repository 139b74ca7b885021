//! L-shaped decoded context around a block: extraction, geometry
//! adaptation (transpose / downsample), normalization and its inverse.

use std::collections::VecDeque;

use crate::plane::{Block, Frame};

/// Block size (rows, columns) of one trained network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NetSize {
    pub h: usize,
    pub w: usize,
}

impl NetSize {
    pub const fn new(h: usize, w: usize) -> Self {
        Self { h, w }
    }
}

impl std::fmt::Display for NetSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.h, self.w)
    }
}

/// The eight block sizes that own a network, as (h, w).
pub const SUPPORTED_NET_SIZES: [NetSize; 8] = [
    NetSize::new(4, 4),
    NetSize::new(4, 8),
    NetSize::new(4, 16),
    NetSize::new(4, 32),
    NetSize::new(8, 8),
    NetSize::new(8, 16),
    NetSize::new(16, 16),
    NetSize::new(32, 32),
];

/// Extent of the context: `n_a` rows above and `n_l` columns left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContextSpec {
    pub n_a: usize,
    pub n_l: usize,
    pub h: usize,
    pub w: usize,
}

impl ContextSpec {
    pub fn for_block(h: usize, w: usize) -> Self {
        let (n_a, n_l) = if h.min(w) <= 8 {
            (h.min(w), h.min(w))
        } else {
            (h / 2, w / 2)
        };
        Self { n_a, n_l, h, w }
    }

    pub fn above_len(&self) -> usize {
        self.n_a * (self.n_l + self.w)
    }

    pub fn left_len(&self) -> usize {
        self.h * self.n_l
    }
}

/// Context samples. `above` is `n_a x (n_l + w)`, `left` is `h x n_l`, both
/// row-major. Values are real-valued so resampled contexts stay exact.
#[derive(Clone, Debug, PartialEq)]
pub struct Context {
    pub spec: ContextSpec,
    pub above: Vec<f64>,
    pub left: Vec<f64>,
}

impl Context {
    pub fn constant(spec: ContextSpec, v: f64) -> Self {
        Self {
            spec,
            above: vec![v; spec.above_len()],
            left: vec![v; spec.left_len()],
        }
    }

    /// Sample at (row, col) of the bounding box `(n_a + h) x (n_l + w)`;
    /// `None` inside the block.
    pub fn at(&self, r: usize, c: usize) -> Option<f64> {
        let s = &self.spec;
        if r < s.n_a {
            Some(self.above[r * (s.n_l + s.w) + c])
        } else if c < s.n_l {
            Some(self.left[(r - s.n_a) * s.n_l + c])
        } else {
            None
        }
    }

    /// Row of samples directly above the block, starting at the above-left
    /// corner: `n_l + w` values, the corner is at index `n_l - 1`.
    pub fn top_row(&self) -> &[f64] {
        let s = &self.spec;
        &self.above[(s.n_a - 1) * (s.n_l + s.w)..s.n_a * (s.n_l + s.w)]
    }

    /// Column of samples directly left of the block (h values).
    pub fn left_column(&self) -> Vec<f64> {
        let s = &self.spec;
        (0..s.h).map(|r| self.left[r * s.n_l + s.n_l - 1]).collect()
    }

    pub fn corner(&self) -> f64 {
        self.top_row()[self.spec.n_l - 1]
    }

    pub fn transposed(&self) -> Context {
        let s = self.spec;
        let spec = ContextSpec {
            n_a: s.n_l,
            n_l: s.n_a,
            h: s.w,
            w: s.h,
        };
        let mut above = Vec::with_capacity(spec.above_len());
        for r in 0..spec.n_a {
            for c in 0..spec.n_l + spec.w {
                above.push(self.at(c, r).expect("above region maps into the L-shape"));
            }
        }
        let mut left = Vec::with_capacity(spec.left_len());
        for r in 0..spec.h {
            for c in 0..spec.n_l {
                left.push(self.at(c, spec.n_a + r).expect("left region maps into the L-shape"));
            }
        }
        Context { spec, above, left }
    }

    /// 2-tap averages of horizontally adjacent samples.
    pub fn downsampled_w(&self) -> Context {
        let s = self.spec;
        let spec = ContextSpec {
            n_l: s.n_l / 2,
            w: s.w / 2,
            ..s
        };
        let halve = |src: &[f64], cols: usize| -> Vec<f64> {
            src.chunks_exact(cols)
                .flat_map(|row| row.chunks_exact(2).map(|p| (p[0] + p[1]) / 2.0))
                .collect()
        };
        Context {
            spec,
            above: halve(&self.above, s.n_l + s.w),
            left: halve(&self.left, s.n_l),
        }
    }

    /// 2-tap averages of vertically adjacent samples.
    pub fn downsampled_h(&self) -> Context {
        self.transposed().downsampled_w().transposed()
    }

    /// `above` followed by `left`, the network input order.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.above.len() + self.left.len());
        v.extend_from_slice(&self.above);
        v.extend_from_slice(&self.left);
        v
    }
}

/// Copies the L-shape around the `h x w` block at (x, y) from `frame`.
///
/// Samples outside the picture or not yet decoded take the value of the
/// nearest available sample along the L-shape (breadth-first over the
/// 4-connected L-shape grid); with nothing available, mid-gray.
pub fn extract_context(frame: &Frame, x: usize, y: usize, spec: ContextSpec) -> Context {
    let rows = spec.n_a + spec.h;
    let cols = spec.n_l + spec.w;
    let inside = |r: usize, c: usize| r < spec.n_a || c < spec.n_l;
    let mut values = vec![0.0f64; rows * cols];
    let mut known = vec![false; rows * cols];
    let mut queue = VecDeque::new();
    let x0 = x as isize - spec.n_l as isize;
    let y0 = y as isize - spec.n_a as isize;
    for r in 0..rows {
        for c in 0..cols {
            if !inside(r, c) {
                continue;
            }
            let (px, py) = (x0 + c as isize, y0 + r as isize);
            if frame.is_available(px, py) {
                values[r * cols + c] = frame.plane.get(px as usize, py as usize) as f64;
                known[r * cols + c] = true;
                queue.push_back((r, c));
            }
        }
    }
    if queue.is_empty() {
        let mid = (1u32 << (frame.plane.bitdepth() - 1)) as f64;
        return Context::constant(spec, mid);
    }
    while let Some((r, c)) = queue.pop_front() {
        let v = values[r * cols + c];
        let neighbors = [(r.wrapping_sub(1), c), (r, c.wrapping_sub(1)), (r, c + 1), (r + 1, c)];
        for (nr, nc) in neighbors {
            if nr < rows && nc < cols && inside(nr, nc) && !known[nr * cols + nc] {
                known[nr * cols + nc] = true;
                values[nr * cols + nc] = v;
                queue.push_back((nr, nc));
            }
        }
    }
    let mut above = Vec::with_capacity(spec.above_len());
    for r in 0..spec.n_a {
        above.extend_from_slice(&values[r * cols..(r + 1) * cols]);
    }
    let mut left = Vec::with_capacity(spec.left_len());
    for r in spec.n_a..rows {
        left.extend_from_slice(&values[r * cols..r * cols + spec.n_l]);
    }
    Context { spec, above, left }
}

/// How a block is mapped onto one of the trained networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeometryAdaptation {
    /// Transpose the context first (tall blocks).
    pub transpose: bool,
    /// Downsampling factors applied after the optional transpose.
    pub down_h: usize,
    pub down_w: usize,
    pub net: NetSize,
}

impl GeometryAdaptation {
    pub fn is_identity(&self) -> bool {
        !self.transpose && self.down_h == 1 && self.down_w == 1
    }
}

/// Maps an `h x w` block onto a trained network, or `None` when no network
/// can serve it.
pub fn resolve_geometry(h: usize, w: usize) -> Option<GeometryAdaptation> {
    let transpose = h > w;
    let (th, tw) = if transpose { (w, h) } else { (h, w) };
    let (down_h, down_w) = match (th, tw) {
        (16, 32) => (1, 2),
        (64, 64) => (2, 2),
        _ => (1, 1),
    };
    let net = NetSize::new(th / down_h, tw / down_w);
    SUPPORTED_NET_SIZES.contains(&net).then_some(GeometryAdaptation {
        transpose,
        down_h,
        down_w,
        net,
    })
}

/// Applies the forward geometry adaptation to a context.
pub fn adapt_context(ctx: &Context, geo: &GeometryAdaptation) -> Context {
    let mut c = if geo.transpose { ctx.transposed() } else { ctx.clone() };
    if geo.down_w == 2 {
        c = c.downsampled_w();
    }
    if geo.down_h == 2 {
        c = c.downsampled_h();
    }
    c
}

/// Normalized network input and the side information needed to undo it.
#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessedContext {
    /// `(x - mu) / 2^(bitdepth - 1)`, above then left.
    pub values: Vec<f64>,
    pub mu: f64,
}

pub fn preprocess(ctx: &Context, bitdepth: u8) -> PreprocessedContext {
    let n = (ctx.above.len() + ctx.left.len()) as f64;
    let mu = ctx.above.iter().chain(&ctx.left).sum::<f64>() / n;
    let scale = (1u32 << (bitdepth - 1)) as f64;
    PreprocessedContext {
        values: ctx.above.iter().chain(&ctx.left).map(|&x| (x - mu) / scale).collect(),
        mu,
    }
}

/// Turns a normalized `net.h x net.w` prediction into an `h x w` block in
/// the original orientation: denormalize, clip, interpolate, round,
/// transpose back.
pub fn postprocess(y_c: &[f64], mu: f64, bitdepth: u8, geo: &GeometryAdaptation) -> Block {
    let scale = (1u32 << (bitdepth - 1)) as f64;
    let max = ((1u32 << bitdepth) - 1) as f64;
    let (mut h, mut w) = (geo.net.h, geo.net.w);
    debug_assert_eq!(y_c.len(), h * w);
    let mut v: Vec<f64> = y_c.iter().map(|&y| (y * scale + mu).clamp(0.0, max)).collect();
    if geo.down_w == 2 {
        v = upsample_rows(&v, h, w);
        w *= 2;
    }
    if geo.down_h == 2 {
        v = transpose_f64(&upsample_rows(&transpose_f64(&v, h, w), w, h), w, 2 * h);
        h *= 2;
    }
    let block = Block {
        h,
        w,
        data: v.iter().map(|&x| x.round().clamp(0.0, max) as i32).collect(),
    };
    if geo.transpose {
        block.transposed()
    } else {
        block
    }
}

/// Doubles the row length by linear interpolation with edge replication.
/// Input sample `i` sits at output position `2i + 0.5`.
fn upsample_rows(v: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(h * w * 2);
    for row in v.chunks_exact(w) {
        for i in 0..w {
            let prev = row[i.saturating_sub(1)];
            let next = row[(i + 1).min(w - 1)];
            out.push(0.75 * row[i] + 0.25 * prev);
            out.push(0.75 * row[i] + 0.25 * next);
        }
    }
    debug_assert_eq!(out.len(), 2 * h * w);
    out
}

fn transpose_f64(v: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for r in 0..h {
        for c in 0..w {
            out[c * h + r] = v[r * w + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plane::Plane;
    use proptest::prelude::*;

    #[test]
    fn context_extent_rule() {
        let s = ContextSpec::for_block(8, 8);
        assert_eq!((s.n_a, s.n_l), (8, 8));
        assert_eq!((s.above_len(), s.left_len()), (8 * 16, 8 * 8));
        let s = ContextSpec::for_block(16, 16);
        assert_eq!((s.n_a, s.n_l), (8, 8));
        assert_eq!((s.above_len(), s.left_len()), (8 * 24, 16 * 8));
        let s = ContextSpec::for_block(4, 16);
        assert_eq!((s.n_a, s.n_l), (4, 4));
        let s = ContextSpec::for_block(16, 32);
        assert_eq!((s.n_a, s.n_l), (8, 16));
    }

    #[test]
    fn geometry_table() {
        let g = resolve_geometry(16, 32).unwrap();
        assert_eq!(
            (g.transpose, g.down_h, g.down_w, g.net),
            (false, 1, 2, NetSize::new(16, 16))
        );
        let g = resolve_geometry(64, 64).unwrap();
        assert_eq!((g.down_h, g.down_w, g.net), (2, 2, NetSize::new(32, 32)));
        assert!(resolve_geometry(8, 8).unwrap().is_identity());
        for (h, w) in [(8, 4), (16, 4), (32, 4), (16, 8)] {
            let g = resolve_geometry(h, w).unwrap();
            assert!(g.transpose);
            assert_eq!(g.net, NetSize::new(w, h));
        }
        let g = resolve_geometry(32, 16).unwrap();
        assert_eq!((g.transpose, g.down_w, g.net), (true, 2, NetSize::new(16, 16)));
        assert!(resolve_geometry(64, 32).is_none());
        assert!(resolve_geometry(32, 64).is_none());
    }

    #[test]
    fn geometry_covers_exactly_the_adapted_sizes() {
        let dims = [4usize, 8, 16, 32, 64];
        let mut supported = Vec::new();
        for h in dims {
            for w in dims {
                if resolve_geometry(h, w).is_some() {
                    supported.push((h, w));
                }
            }
        }
        let mut expected: Vec<(usize, usize)> = SUPPORTED_NET_SIZES.iter().map(|s| (s.h, s.w)).collect();
        expected.extend([(8, 4), (16, 4), (32, 4), (16, 8), (32, 16), (16, 32), (64, 64)]);
        expected.sort();
        supported.sort();
        assert_eq!(supported, expected);
    }

    #[test]
    fn first_block_gets_mid_gray() {
        let frame = Frame::new(16, 16, 10).unwrap();
        let ctx = extract_context(&frame, 0, 0, ContextSpec::for_block(4, 4));
        assert!(ctx.above.iter().chain(&ctx.left).all(|&v| v == 512.0));
    }

    #[test]
    fn interior_block_copies_samples() {
        let data: Vec<u16> = (0..32 * 32).map(|i| (i % 251) as u16).collect();
        let frame = Frame::fully_decoded(Plane::from_samples(32, 32, 8, data).unwrap());
        let spec = ContextSpec::for_block(8, 8);
        let ctx = extract_context(&frame, 16, 16, spec);
        assert_eq!(ctx.above.len(), 8 * 16);
        assert_eq!(ctx.left.len(), 8 * 8);
        assert_eq!(ctx.above[0], frame.plane.get(8, 8) as f64);
        assert_eq!(ctx.above[8 * 16 - 1], frame.plane.get(23, 15) as f64);
        assert_eq!(ctx.left[8 * 8 - 1], frame.plane.get(15, 23) as f64);
    }

    #[test]
    fn unavailable_left_copies_nearest_along_l_shape() {
        // block at x = 0: only the above region right of the corner exists
        let mut frame = Frame::new(8, 8, 8).unwrap();
        let top = Block {
            h: 4,
            w: 8,
            data: (0..32).map(|i| 10 + i).collect(),
        };
        frame.write_block(0, 0, &top);
        let ctx = extract_context(&frame, 0, 4, ContextSpec::for_block(4, 4));
        // above-left columns replicate the first available column of each row
        assert_eq!(ctx.at(3, 0), Some(frame.plane.get(0, 3) as f64));
        // left region is filled from the bottom row of the above region
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(ctx.at(4 + r, c), Some(frame.plane.get(0, 3) as f64));
            }
        }
    }

    #[test]
    fn constant_context_normalizes_to_zero() {
        let ctx = Context::constant(ContextSpec::for_block(4, 4), 77.0);
        let p = preprocess(&ctx, 8);
        assert_eq!(p.mu, 77.0);
        assert!(p.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_sample_toy_normalization() {
        // one above sample 0, one left sample 256, 10-bit
        let spec = ContextSpec {
            n_a: 1,
            n_l: 1,
            h: 1,
            w: 0,
        };
        let ctx = Context {
            spec,
            above: vec![0.0],
            left: vec![256.0],
        };
        let p = preprocess(&ctx, 10);
        assert_eq!(p.mu, 128.0);
        assert_eq!(p.values, vec![-0.25, 0.25]);
    }

    #[test]
    fn zero_prediction_postprocesses_to_mean() {
        let geo = resolve_geometry(8, 8).unwrap();
        let b = postprocess(&[0.0; 64], 128.0, 8, &geo);
        assert_eq!(b, Block::filled(8, 8, 128));
    }

    #[test]
    fn downsampled_geometry_interpolates_back_to_full_width() {
        let geo = resolve_geometry(16, 32).unwrap();
        let b = postprocess(&[0.25; 256], 100.0, 8, &geo);
        assert_eq!((b.h, b.w), (16, 32));
        assert!(b.data.iter().all(|&v| v == 132));
        // a horizontal ramp stays monotone after interpolation
        let ramp: Vec<f64> = (0..256).map(|i| (i % 16) as f64 / 64.0).collect();
        let b = postprocess(&ramp, 0.0, 8, &geo);
        for r in 0..16 {
            for c in 1..32 {
                assert!(b.at(r, c) >= b.at(r, c - 1));
            }
        }
    }

    #[test]
    fn transposed_geometry_transposes_back() {
        let geo = resolve_geometry(8, 4).unwrap();
        let y: Vec<f64> = (0..32).map(|i| i as f64 / 128.0).collect();
        let b = postprocess(&y, 0.0, 8, &geo);
        assert_eq!((b.h, b.w), (8, 4));
        // network row r, col c lands at block row c, col r
        assert_eq!(b.at(5, 2), (y[2 * 8 + 5] * 128.0).round() as i32);
    }

    #[test]
    fn transposing_the_context_twice_is_identity() {
        let spec = ContextSpec::for_block(16, 32);
        let ctx = Context {
            spec,
            above: (0..spec.above_len()).map(|i| i as f64).collect(),
            left: (0..spec.left_len()).map(|i| -(i as f64)).collect(),
        };
        let t = ctx.transposed();
        assert_eq!((t.spec.h, t.spec.w, t.spec.n_a, t.spec.n_l), (32, 16, 16, 8));
        assert_eq!(t.transposed(), ctx);
    }

    #[test]
    fn adapted_context_matches_network_geometry() {
        for (h, w) in [(16, 32), (32, 16), (64, 64), (8, 4), (32, 4)] {
            let geo = resolve_geometry(h, w).unwrap();
            let ctx = Context::constant(ContextSpec::for_block(h, w), 3.0);
            let a = adapt_context(&ctx, &geo);
            assert_eq!(a.spec, ContextSpec::for_block(geo.net.h, geo.net.w), "{h}x{w}");
            assert!(a.flat().iter().all(|&v| v == 3.0));
        }
    }

    proptest! {
        #[test]
        fn normalization_round_trips_integers(
            samples in prop::collection::vec(0u16..1024, 48),
        ) {
            let spec = ContextSpec::for_block(4, 4);
            let vals: Vec<f64> = samples.iter().map(|&v| v as f64).collect();
            let ctx = Context { spec, above: vals[..32].to_vec(), left: vals[32..].to_vec() };
            let p = preprocess(&ctx, 10);
            let mean: f64 = p.values.iter().sum::<f64>() / 48.0;
            prop_assert!(mean.abs() < 1e-9);
            let geo = GeometryAdaptation { transpose: false, down_h: 1, down_w: 1, net: NetSize::new(6, 8) };
            let back = postprocess(&p.values, p.mu, 10, &geo);
            prop_assert_eq!(back.data, samples.iter().map(|&v| v as i32).collect::<Vec<_>>());
        }

        #[test]
        fn downsample_then_interpolate_constant_is_exact(v in 0u16..256) {
            for (h, w) in [(16usize, 32usize), (64, 64), (32, 16)] {
                let geo = resolve_geometry(h, w).unwrap();
                let ctx = Context::constant(ContextSpec::for_block(h, w), v as f64);
                let p = preprocess(&adapt_context(&ctx, &geo), 8);
                let out = postprocess(&p.values[..geo.net.h * geo.net.w], p.mu, 8, &geo);
                prop_assert_eq!(out, Block::filled(h, w, v as i32));
            }
        }
    }
}
