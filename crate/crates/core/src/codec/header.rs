use crate::signaling::SignalingScheme;

use super::CodecError;

pub const STREAM_MAGIC: &[u8; 4] = b"NTC1";
pub const STREAM_VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 4 + 1 + 2 + 2 + 1 + 1 + 1 + 8 + 8;

const FLAG_RECT: u8 = 0x80;
const FLAG_NN: u8 = 0x40;

/// Fixed-size stream header. The scheme byte carries the scheme code in its
/// low bits, the NN-mode flag in bit 6 and the rectangular-partition flag in
/// bit 7.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamHeader {
    pub width: u16,
    pub height: u16,
    pub bitdepth: u8,
    pub qp: u8,
    pub scheme: SignalingScheme,
    pub nn_enabled: bool,
    pub rect_partitions: bool,
    pub model_hash: u64,
    pub bank_hash: u64,
}

impl StreamHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_BYTES] {
        let mut b = [0u8; HEADER_BYTES];
        b[..4].copy_from_slice(STREAM_MAGIC);
        b[4] = STREAM_VERSION;
        b[5..7].copy_from_slice(&self.width.to_le_bytes());
        b[7..9].copy_from_slice(&self.height.to_le_bytes());
        b[9] = self.bitdepth;
        b[10] = self.qp;
        b[11] = self.scheme.code()
            | if self.nn_enabled { FLAG_NN } else { 0 }
            | if self.rect_partitions { FLAG_RECT } else { 0 };
        b[12..20].copy_from_slice(&self.model_hash.to_le_bytes());
        b[20..28].copy_from_slice(&self.bank_hash.to_le_bytes());
        b
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, CodecError> {
        let bad = |m: &str| CodecError::Header(m.to_owned());
        if bytes.len() < HEADER_BYTES {
            return Err(bad("truncated"));
        }
        if &bytes[..4] != STREAM_MAGIC {
            return Err(bad("bad magic"));
        }
        if bytes[4] != STREAM_VERSION {
            return Err(bad("unsupported version"));
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
        let flags = bytes[11];
        let scheme = SignalingScheme::from_code(flags & !(FLAG_NN | FLAG_RECT)).ok_or_else(|| bad("unknown scheme"))?;
        let h = Self {
            width: u16_at(5),
            height: u16_at(7),
            bitdepth: bytes[9],
            qp: bytes[10],
            scheme,
            nn_enabled: flags & FLAG_NN != 0,
            rect_partitions: flags & FLAG_RECT != 0,
            model_hash: u64_at(12),
            bank_hash: u64_at(20),
        };
        if h.width == 0 || h.height == 0 || !h.width.is_multiple_of(4) || !h.height.is_multiple_of(4) {
            return Err(CodecError::Dimensions {
                width: h.width as usize,
                height: h.height as usize,
            });
        }
        if !(8..=16).contains(&h.bitdepth) {
            return Err(bad("bit depth"));
        }
        if h.qp > 63 {
            return Err(bad("QP"));
        }
        Ok(h)
    }
}
