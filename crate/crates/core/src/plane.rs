//! Luma sample planes, reconstruction frames, and image file IO.

use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unsupported bit depth {0} (expected 8..=16)")]
    BitDepth(u8),
    #[error("image dimensions {width}x{height} invalid: {reason}")]
    Dimensions {
        width: usize,
        height: usize,
        reason: &'static str,
    },
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error("sample value {value} exceeds {bitdepth}-bit range")]
    SampleRange { value: u32, bitdepth: u8 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A single luma plane.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Plane {
    width: usize,
    height: usize,
    bitdepth: u8,
    data: Vec<u16>,
}

impl Plane {
    pub fn new(width: usize, height: usize, bitdepth: u8) -> Result<Self, ImageError> {
        Self::filled(width, height, bitdepth, 0)
    }

    pub fn filled(width: usize, height: usize, bitdepth: u8, value: u16) -> Result<Self, ImageError> {
        if !(8..=16).contains(&bitdepth) {
            return Err(ImageError::BitDepth(bitdepth));
        }
        if width == 0 || height == 0 {
            return Err(ImageError::Dimensions {
                width,
                height,
                reason: "empty",
            });
        }
        Ok(Self {
            width,
            height,
            bitdepth,
            data: vec![value; width * height],
        })
    }

    pub fn from_samples(width: usize, height: usize, bitdepth: u8, data: Vec<u16>) -> Result<Self, ImageError> {
        let mut p = Self::new(width, height, bitdepth)?;
        if data.len() != width * height {
            return Err(ImageError::Dimensions {
                width,
                height,
                reason: "sample count mismatch",
            });
        }
        if let Some(&v) = data.iter().find(|&&v| u32::from(v) > p.max_value() as u32) {
            return Err(ImageError::SampleRange {
                value: v.into(),
                bitdepth,
            });
        }
        p.data = data;
        Ok(p)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bitdepth(&self) -> u8 {
        self.bitdepth
    }

    pub fn max_value(&self) -> i32 {
        (1i32 << self.bitdepth) - 1
    }

    pub fn samples(&self) -> &[u16] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u16) {
        self.data[y * self.width + x] = v;
    }

    /// Copies the `h x w` block at (x, y).
    pub fn block(&self, x: usize, y: usize, h: usize, w: usize) -> Block {
        let mut data = Vec::with_capacity(h * w);
        for r in 0..h {
            let row = &self.data[(y + r) * self.width + x..][..w];
            data.extend(row.iter().map(|&v| v as i32));
        }
        Block { h, w, data }
    }

    pub fn put_block(&mut self, x: usize, y: usize, b: &Block) {
        for r in 0..b.h {
            for c in 0..b.w {
                self.data[(y + r) * self.width + x + c] = b.data[r * b.w + c] as u16;
            }
        }
    }

    /// Binary PGM (P5). Samples above 255 are stored as 16-bit big-endian.
    pub fn read_pgm<R: Read>(input: R) -> Result<Self, ImageError> {
        let mut r = BufReader::new(input);
        let mut header = Vec::new();
        while header.len() < 4 {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(ImageError::Pgm("truncated header".into()));
            }
            let content = line.split('#').next().unwrap_or("");
            header.extend(content.split_whitespace().map(str::to_owned));
        }
        if header[0] != "P5" {
            return Err(ImageError::Pgm(format!("magic {}", header[0])));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| ImageError::Pgm(format!("bad number {s:?}")))
        };
        let width = parse(&header[1])?;
        let height = parse(&header[2])?;
        let maxval = parse(&header[3])?;
        if maxval == 0 || maxval > 65535 {
            return Err(ImageError::Pgm(format!("maxval {maxval}")));
        }
        let bitdepth = (usize::BITS - maxval.leading_zeros()).max(8) as u8;
        let wide = maxval > 255;
        let mut raw = vec![0u8; width * height * if wide { 2 } else { 1 }];
        r.read_exact(&mut raw)?;
        let data = if wide {
            raw.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        } else {
            raw.into_iter().map(u16::from).collect()
        };
        Self::from_samples(width, height, bitdepth, data)
    }

    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<(), ImageError> {
        let maxval = self.max_value();
        write!(out, "P5\n{} {}\n{}\n", self.width, self.height, maxval)?;
        if maxval > 255 {
            let bytes: Vec<u8> = self.data.iter().flat_map(|v| v.to_be_bytes()).collect();
            out.write_all(&bytes)?;
        } else {
            let bytes: Vec<u8> = self.data.iter().map(|&v| v as u8).collect();
            out.write_all(&bytes)?;
        }
        Ok(())
    }

    /// Headerless luma: one byte per sample at 8 bits, otherwise 16-bit
    /// little-endian.
    pub fn read_raw<R: Read>(mut input: R, width: usize, height: usize, bitdepth: u8) -> Result<Self, ImageError> {
        let bytes_per = if bitdepth > 8 { 2 } else { 1 };
        let mut raw = vec![0u8; width * height * bytes_per];
        input.read_exact(&mut raw)?;
        let data = if bytes_per == 2 {
            raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect()
        } else {
            raw.into_iter().map(u16::from).collect()
        };
        Self::from_samples(width, height, bitdepth, data)
    }
}

/// A 2-D block of signed samples (predictions, residuals, reconstructions).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub h: usize,
    pub w: usize,
    pub data: Vec<i32>,
}

impl Block {
    pub fn filled(h: usize, w: usize, v: i32) -> Self {
        Self {
            h,
            w,
            data: vec![v; h * w],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> i32 {
        self.data[r * self.w + c]
    }

    pub fn transposed(&self) -> Block {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.w {
            for r in 0..self.h {
                data.push(self.at(r, c));
            }
        }
        Block {
            h: self.w,
            w: self.h,
            data,
        }
    }

    pub fn sse(&self, other: &Block) -> u64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = (a - b) as i64;
                (d * d) as u64
            })
            .sum()
    }
}

/// A reconstruction plane plus which samples have been decoded so far.
#[derive(Clone, Debug)]
pub struct Frame {
    pub plane: Plane,
    decoded: Vec<bool>,
}

impl Frame {
    pub fn new(width: usize, height: usize, bitdepth: u8) -> Result<Self, ImageError> {
        let plane = Plane::new(width, height, bitdepth)?;
        Ok(Self {
            decoded: vec![false; width * height],
            plane,
        })
    }

    /// Treats every sample of `plane` as already decoded.
    pub fn fully_decoded(plane: Plane) -> Self {
        let n = plane.width() * plane.height();
        Self {
            plane,
            decoded: vec![true; n],
        }
    }

    #[inline]
    pub fn is_available(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.plane.width()
            && (y as usize) < self.plane.height()
            && self.decoded[y as usize * self.plane.width() + x as usize]
    }

    /// Copies the samples and availability of a rectangle, clipped to the
    /// picture, for a later [`Frame::restore`].
    pub fn save(&self, x: usize, y: usize, h: usize, w: usize) -> FrameRegion {
        let w = w.min(self.plane.width().saturating_sub(x));
        let h = h.min(self.plane.height().saturating_sub(y));
        let mut samples = Vec::with_capacity(h * w);
        let mut decoded = Vec::with_capacity(h * w);
        for r in 0..h {
            let start = (y + r) * self.plane.width() + x;
            samples.extend_from_slice(&self.plane.samples()[start..start + w]);
            decoded.extend_from_slice(&self.decoded[start..start + w]);
        }
        FrameRegion {
            x,
            y,
            h,
            w,
            samples,
            decoded,
        }
    }

    pub fn restore(&mut self, region: &FrameRegion) {
        let width = self.plane.width();
        for r in 0..region.h {
            let start = (region.y + r) * width + region.x;
            for c in 0..region.w {
                self.plane.data[start + c] = region.samples[r * region.w + c];
            }
            self.decoded[start..start + region.w].copy_from_slice(&region.decoded[r * region.w..(r + 1) * region.w]);
        }
    }

    pub fn write_block(&mut self, x: usize, y: usize, b: &Block) {
        self.plane.put_block(x, y, b);
        for r in 0..b.h {
            let start = (y + r) * self.plane.width() + x;
            self.decoded[start..start + b.w].fill(true);
        }
    }
}

/// Saved rectangle of a [`Frame`].
#[derive(Clone, Debug)]
pub struct FrameRegion {
    x: usize,
    y: usize,
    h: usize,
    w: usize,
    samples: Vec<u16>,
    decoded: Vec<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_8_and_10_bit() {
        for bd in [8u8, 10] {
            let max = (1u16 << bd) - 1;
            let data: Vec<u16> = (0..12 * 5).map(|i| (i * 37) as u16 % (max + 1)).collect();
            let p = Plane::from_samples(12, 5, bd, data).unwrap();
            let mut buf = Vec::new();
            p.write_pgm(&mut buf).unwrap();
            assert_eq!(Plane::read_pgm(&buf[..]).unwrap(), p);
        }
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 9]);
        let p = Plane::read_pgm(&bytes[..]).unwrap();
        assert_eq!(p.samples(), &[7, 9]);
    }

    #[test]
    fn raw_ten_bit_is_little_endian() {
        let p = Plane::read_raw(&[0x01u8, 0x02, 0xff, 0x03][..], 2, 1, 10).unwrap();
        assert_eq!(p.samples(), &[0x0201, 0x03ff]);
    }

    #[test]
    fn out_of_range_samples_rejected() {
        assert!(Plane::from_samples(1, 1, 8, vec![256]).is_err());
    }

    #[test]
    fn save_and_restore_region() {
        let mut f = Frame::new(8, 8, 8).unwrap();
        f.write_block(0, 0, &Block::filled(4, 4, 9));
        let saved = f.save(2, 2, 8, 8);
        f.write_block(2, 2, &Block::filled(6, 6, 200));
        assert!(f.is_available(7, 7));
        f.restore(&saved);
        assert!(!f.is_available(7, 7));
        assert_eq!(f.plane.get(3, 3), 9);
        assert_eq!(f.plane.get(4, 4), 0);
    }

    #[test]
    fn transpose_twice_is_identity() {
        let b = Block {
            h: 2,
            w: 3,
            data: vec![1, 2, 3, 4, 5, 6],
        };
        assert_eq!(b.transposed().data, vec![1, 4, 2, 5, 3, 6]);
        assert_eq!(b.transposed().transposed(), b);
    }
}
