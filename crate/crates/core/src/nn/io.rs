//! `NNW1` weight files.
//!
//! ```text
//! "NNW1" | h: u16 | w: u16 | layer count: u16
//! per layer: kind tag u8 | shape dims u32... | weights f32... | biases f32...
//! ```
//! Kind tags: 0 fully-connected (inputs, outputs), 1 conv2d (kh, kw, in_c,
//! out_c, stride_h, stride_w), 2 flatten, 3 concat. All integers and floats
//! are little-endian. The graph wiring is implied by (h, w).

use std::io::{Read, Write};

use crate::context::NetSize;
use crate::scalar::Scalar;

use super::arch::{Architecture, LayerKind};
use super::network::LayerParams;
use super::{Network, NnError};

pub const MAGIC: &[u8; 4] = b"NNW1";

fn descriptor(kind: &LayerKind) -> (u8, Vec<u32>) {
    match kind {
        LayerKind::FullyConnected { inputs, outputs } => (0, vec![*inputs as u32, *outputs as u32]),
        LayerKind::Conv2d(c) => (
            1,
            [
                c.kernel_h,
                c.kernel_w,
                c.in_channels,
                c.out_channels,
                c.stride_h,
                c.stride_w,
            ]
            .iter()
            .map(|&v| v as u32)
            .collect(),
        ),
        LayerKind::Flatten => (2, vec![]),
        LayerKind::Concat => (3, vec![]),
    }
}

impl<T: Scalar> Network<T> {
    /// Serializes with 32-bit weights.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), NnError> {
        let (h, w) = self.arch().block();
        out.write_all(MAGIC)?;
        out.write_all(&(h as u16).to_le_bytes())?;
        out.write_all(&(w as u16).to_le_bytes())?;
        out.write_all(&(self.arch().layers().len() as u16).to_le_bytes())?;
        let mut buf = Vec::new();
        for (spec, p) in self.arch().layers().iter().zip(self.params()) {
            let (tag, dims) = descriptor(&spec.kind);
            buf.push(tag);
            for d in dims {
                buf.extend_from_slice(&d.to_le_bytes());
            }
            for v in p.weight.iter().chain(&p.bias) {
                buf.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
            }
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::BadFile("bad magic".into()));
        }
        let h = read_u16(&mut input)? as usize;
        let w = read_u16(&mut input)? as usize;
        let count = read_u16(&mut input)? as usize;
        let arch = Architecture::for_size(NetSize::new(h, w))?;
        if count != arch.layers().len() {
            return Err(NnError::BadFile(format!(
                "f_{{{h},{w}}} has {} layers, file declares {count}",
                arch.layers().len()
            )));
        }
        let mut params = Vec::with_capacity(count);
        for (idx, spec) in arch.layers().iter().enumerate() {
            let (tag, dims) = descriptor(&spec.kind);
            let mut t = [0u8; 1];
            input.read_exact(&mut t)?;
            let mut found = Vec::with_capacity(dims.len());
            for _ in 0..dims.len() {
                found.push(read_u32(&mut input)?);
            }
            if t[0] != tag || found != dims {
                return Err(NnError::BadFile(format!("layer {idx} descriptor mismatch")));
            }
            let weight = read_f32s(&mut input, spec.kind.weight_len())?;
            let bias = read_f32s(&mut input, spec.kind.bias_len())?;
            params.push(LayerParams { weight, bias });
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(NnError::BadFile("trailing bytes".into()));
        }
        Ok(Network::from_parts(arch, params))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        Self::read_from(bytes)
    }
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, NnError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s<R: Read, T: Scalar>(r: &mut R, n: usize) -> Result<Vec<T>, NnError> {
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)?;
    raw.chunks_exact(4)
        .map(|c| {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if v.is_finite() {
                Ok(T::from_f64_lossy(v as f64))
            } else {
                Err(NnError::NonFinite)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        for size in [NetSize::new(4, 4), NetSize::new(16, 16)] {
            let net = Network::<f32>::init(Architecture::for_size(size).unwrap(), 7);
            let bytes = net.to_bytes();
            assert_eq!(&bytes[..4], b"NNW1");
            let back = Network::<f32>::from_bytes(&bytes).unwrap();
            assert_eq!(back.params(), net.params());
            assert_eq!(back.to_bytes(), bytes);
            // f64 path reads the same values and writes the same bytes
            let wide = Network::<f64>::from_bytes(&bytes).unwrap();
            assert_eq!(wide.to_bytes(), bytes);
        }
    }

    #[test]
    fn header_layout() {
        let net = Network::<f64>::zeros(Architecture::for_size(NetSize::new(4, 8)).unwrap());
        let bytes = net.to_bytes();
        assert_eq!(&bytes[4..6], &4u16.to_le_bytes());
        assert_eq!(&bytes[6..8], &8u16.to_le_bytes());
        assert_eq!(&bytes[8..10], &4u16.to_le_bytes());
        assert_eq!(bytes[10], 0);
        assert_eq!(&bytes[11..15], &(4u32 * 12 + 16).to_le_bytes());
        let expected = 10 + 4 * 9 + 4 * net.param_count();
        assert_eq!(bytes.len(), expected);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let net = Network::<f32>::zeros(Architecture::for_size(NetSize::new(4, 4)).unwrap());
        let mut bytes = net.to_bytes();
        assert!(Network::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        bytes.push(0);
        assert!(Network::<f32>::from_bytes(&bytes).is_err());
        bytes.pop();
        bytes[0] = b'X';
        assert!(Network::<f32>::from_bytes(&bytes).is_err());
    }
}
