//! Training triples: network context, original block and oracle pair labels.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{encode_image, BlockCoder, CodecConfig};
use crate::context::{postprocess, resolve_geometry, NetSize};
use crate::nn::{Network, Tensor};
use crate::plane::{Block, Frame, Plane};
use crate::predictor::{prepare_context, ModelSet};
use crate::scalar::Scalar;
use crate::signaling::{SignalingScheme, PAIR_COUNT};
use crate::transforms::TransformBank;

use super::TrainingError;

pub const DATASET_MAGIC: &[u8; 4] = b"NTD1";

/// QPs of the training protocol.
pub const TRAINING_QPS: [u8; 4] = [22, 27, 32, 37];

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTriple {
    /// Preprocessed context, above then left, network orientation.
    pub context: Vec<f32>,
    /// Original samples of the block, raster order.
    pub original: Vec<i32>,
    /// Context mean removed by the preprocessing.
    pub mu: f64,
    pub qp: u8,
    /// Index into [`Dataset::sources`].
    pub source: u16,
    /// Oracle pair index for lfnstIdx 1 and 2.
    pub i1: u8,
    pub i2: u8,
}

impl TrainingTriple {
    /// Normalized prediction target `(original - mu) / 2^(bitdepth - 1)`.
    pub fn target(&self, bitdepth: u8) -> impl Iterator<Item = f64> + '_ {
        let scale = (1u32 << (bitdepth - 1)) as f64;
        self.original.iter().map(move |&v| (v as f64 - self.mu) / scale)
    }
}

/// Picture a triple came from, with the QP it was coded at.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataSource {
    pub name: String,
    pub qp: u8,
}

/// All triples of one network size.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub size: NetSize,
    pub bitdepth: u8,
    pub sources: Vec<DataSource>,
    pub triples: Vec<TrainingTriple>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollectConfig {
    pub sizes: Vec<NetSize>,
    /// One QP per picture is drawn from this list.
    pub qps: Vec<u8>,
    pub seed: u64,
    /// Distance between sampled block positions, both axes.
    pub step: usize,
}

impl CollectConfig {
    pub fn new(sizes: Vec<NetSize>, seed: u64) -> Self {
        Self {
            sizes,
            qps: TRAINING_QPS.to_vec(),
            seed,
            step: 4,
        }
    }
}

impl Dataset {
    pub fn new(size: NetSize, bitdepth: u8) -> Self {
        Self {
            size,
            bitdepth,
            sources: Vec::new(),
            triples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn context_len(&self) -> usize {
        self.triples.first().map_or(0, |t| t.context.len())
    }

    /// Counts of `i1` (row 0) and `i2` (row 1) labels.
    pub fn label_histogram(&self) -> [[usize; PAIR_COUNT]; 2] {
        let mut h = [[0; PAIR_COUNT]; 2];
        for t in &self.triples {
            h[0][t.i1 as usize] += 1;
            h[1][t.i2 as usize] += 1;
        }
        h
    }

    /// Splits by source picture: triples whose source satisfies `held_out`
    /// go to the second dataset.
    pub fn split_by_source(&self, held_out: impl Fn(&DataSource) -> bool) -> (Dataset, Dataset) {
        let mut a = Dataset {
            triples: Vec::new(),
            ..self.clone_header()
        };
        let mut b = Dataset {
            triples: Vec::new(),
            ..self.clone_header()
        };
        for t in &self.triples {
            if held_out(&self.sources[t.source as usize]) {
                b.triples.push(t.clone());
            } else {
                a.triples.push(t.clone());
            }
        }
        (a, b)
    }

    fn clone_header(&self) -> Dataset {
        Dataset {
            size: self.size,
            bitdepth: self.bitdepth,
            sources: self.sources.clone(),
            triples: Vec::new(),
        }
    }

    /// Appends another dataset of the same size, remapping its sources.
    pub fn extend(&mut self, other: Dataset) {
        assert_eq!(self.size, other.size);
        let base = self.sources.len() as u16;
        self.sources.extend(other.sources);
        self.triples.extend(other.triples.into_iter().map(|mut t| {
            t.source += base;
            t
        }));
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), TrainingError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(DATASET_MAGIC);
        buf.extend_from_slice(&(self.size.h as u16).to_le_bytes());
        buf.extend_from_slice(&(self.size.w as u16).to_le_bytes());
        buf.push(self.bitdepth);
        buf.extend_from_slice(&(self.sources.len() as u32).to_le_bytes());
        for s in &self.sources {
            buf.extend_from_slice(&(s.name.len() as u16).to_le_bytes());
            buf.extend_from_slice(s.name.as_bytes());
            buf.push(s.qp);
        }
        let ctx_len = self.context_len();
        buf.extend_from_slice(&(ctx_len as u32).to_le_bytes());
        buf.extend_from_slice(&(self.triples.len() as u64).to_le_bytes());
        for t in &self.triples {
            if t.context.len() != ctx_len || t.original.len() != self.size.h * self.size.w {
                return Err(TrainingError::BadFile("inconsistent triple lengths".into()));
            }
            buf.extend_from_slice(&t.source.to_le_bytes());
            buf.extend_from_slice(&[t.qp, t.i1, t.i2]);
            buf.extend_from_slice(&t.mu.to_le_bytes());
            for v in &t.context {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            for &v in &t.original {
                buf.extend_from_slice(&(v as u16).to_le_bytes());
            }
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, TrainingError> {
        let mut v = Vec::new();
        self.write_to(&mut v)?;
        Ok(v)
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, TrainingError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainingError> {
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(4)? != DATASET_MAGIC {
            return Err(TrainingError::BadFile("bad magic".into()));
        }
        let h = c.u16()? as usize;
        let w = c.u16()? as usize;
        let bitdepth = c.take(1)?[0];
        if !(8..=16).contains(&bitdepth) {
            return Err(TrainingError::BadFile(format!("bit depth {bitdepth}")));
        }
        let mut ds = Dataset::new(NetSize::new(h, w), bitdepth);
        for _ in 0..c.u32()? {
            let len = c.u16()? as usize;
            let name =
                String::from_utf8(c.take(len)?.to_vec()).map_err(|_| TrainingError::BadFile("source name".into()))?;
            let qp = c.take(1)?[0];
            ds.sources.push(DataSource { name, qp });
        }
        let ctx_len = c.u32()? as usize;
        let count = c.u64()? as usize;
        let per = 2 + 3 + 8 + 4 * ctx_len + 2 * h * w;
        if bytes.len() - c.pos != count.saturating_mul(per) {
            return Err(TrainingError::BadFile("length does not match triple count".into()));
        }
        ds.triples.reserve(count);
        for _ in 0..count {
            let source = c.u16()?;
            let meta = c.take(3)?;
            let (qp, i1, i2) = (meta[0], meta[1], meta[2]);
            if source as usize >= ds.sources.len() || i1 as usize >= PAIR_COUNT || i2 as usize >= PAIR_COUNT {
                return Err(TrainingError::BadFile("triple field out of range".into()));
            }
            let mu = f64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
            let context = c
                .take(4 * ctx_len)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            let original = c
                .take(2 * h * w)?
                .chunks_exact(2)
                .map(|b| u16::from_le_bytes([b[0], b[1]]) as i32)
                .collect();
            ds.triples.push(TrainingTriple {
                context,
                original,
                mu,
                qp,
                source,
                i1,
                i2,
            });
        }
        Ok(ds)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainingError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| TrainingError::BadFile("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, TrainingError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, TrainingError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, TrainingError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Index of the smallest cost, lowest index on ties.
pub fn argmin_lowest(costs: &[f64]) -> u8 {
    let mut best = 0;
    for (i, &c) in costs.iter().enumerate() {
        if c < costs[best] {
            best = i;
        }
    }
    best as u8
}

/// RD-oracle labels `(i1, i2)` of a block for a given NN prediction, in the
/// network's orientation.
pub fn oracle_labels(coder: &BlockCoder<'_, f32>, orig: &Block, pred: &Block, transposed: bool) -> (u8, u8) {
    let i1 = argmin_lowest(&coder.pair_costs(orig, pred, 1, transposed));
    let i2 = argmin_lowest(&coder.pair_costs(orig, pred, 2, transposed));
    (i1, i2)
}

/// Unlabeled triples: every picture is coded with the classic modes at a
/// QP drawn from `cfg.qps`; contexts are read from that reconstruction and
/// targets from the original, at every `cfg.step` position where a block of
/// a network's native size fits.
pub fn collect_contexts(
    images: &[(String, Plane)],
    cfg: &CollectConfig,
    bank: &TransformBank,
) -> Result<Vec<Dataset>, TrainingError> {
    if cfg.qps.is_empty() || cfg.step == 0 {
        return Err(TrainingError::Config("empty QP list or zero step"));
    }
    let bitdepth = images.first().map_or(8, |(_, p)| p.bitdepth());
    let mut sets: Vec<Dataset> = cfg.sizes.iter().map(|&s| Dataset::new(s, bitdepth)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for (name, img) in images {
        if img.bitdepth() != bitdepth {
            return Err(TrainingError::Config("mixed bit depths"));
        }
        let qp = cfg.qps[rng.gen_range(0..cfg.qps.len())];
        let mut codec_cfg = CodecConfig::new(qp, SignalingScheme::Default);
        codec_cfg.nn_enabled = false;
        let recon = encode_image::<f32>(img, &codec_cfg, None, bank)?.recon;
        let frame = Frame::fully_decoded(recon);
        for ds in &mut sets {
            let source = ds.sources.len() as u16;
            ds.sources.push(DataSource { name: name.clone(), qp });
            let (h, w) = (ds.size.h, ds.size.w);
            if img.height() < h || img.width() < w {
                continue;
            }
            for y in (0..=img.height() - h).step_by(cfg.step) {
                for x in (0..=img.width() - w).step_by(cfg.step) {
                    let (geo, pre) =
                        prepare_context(&frame, x, y, h, w).ok_or(TrainingError::Config("size without a network"))?;
                    debug_assert!(geo.is_identity());
                    ds.triples.push(TrainingTriple {
                        context: pre.values.iter().map(|&v| v as f32).collect(),
                        original: img.block(x, y, h, w).data,
                        mu: pre.mu,
                        qp,
                        source,
                        i1: 0,
                        i2: 0,
                    });
                }
            }
        }
    }
    Ok(sets)
}

/// Network inputs for a batch of triples.
pub fn batch_inputs<T: Scalar>(net: &Network<T>, triples: &[&TrainingTriple]) -> Vec<Tensor<T>> {
    let arch = net.arch();
    let mut offset = 0;
    (0..arch.inputs().len())
        .map(|i| {
            let width = arch.input_width(i);
            let mut data = Vec::with_capacity(triples.len() * width);
            for t in triples {
                data.extend(
                    t.context[offset..offset + width]
                        .iter()
                        .map(|&v| T::from_f64_lossy(v as f64)),
                );
            }
            offset += width;
            Tensor::from_vec(&[triples.len(), width], data).expect("finite contexts")
        })
        .collect()
}

const LABEL_BATCH: usize = 256;

/// Recomputes the oracle labels of every triple from `net`'s predictions.
pub fn label_dataset<T: Scalar>(ds: &mut Dataset, net: &Network<T>, bank: &TransformBank) -> Result<(), TrainingError> {
    let geo = resolve_geometry(ds.size.h, ds.size.w).ok_or(TrainingError::Config("size without a network"))?;
    let mut coders = Vec::new();
    let configs: Vec<CodecConfig> = (0..=63u8)
        .map(|qp| {
            let mut c = CodecConfig::new(qp, SignalingScheme::Default);
            c.nn_enabled = false;
            c
        })
        .collect();
    for c in &configs {
        coders.push(BlockCoder::<f32>::new(c, None, bank, ds.bitdepth)?);
    }
    let (h, w) = (ds.size.h, ds.size.w);
    let bitdepth = ds.bitdepth;
    for chunk in ds.triples.chunks_mut(LABEL_BATCH) {
        let refs: Vec<&TrainingTriple> = chunk.iter().collect();
        let out = net.forward(&batch_inputs(net, &refs))?;
        let preds = out.prediction.to_f64();
        for (i, t) in chunk.iter_mut().enumerate() {
            let pred = postprocess(&preds[i * h * w..(i + 1) * h * w], t.mu, bitdepth, &geo);
            let orig = Block {
                h,
                w,
                data: t.original.clone(),
            };
            let coder = coders
                .get(t.qp as usize)
                .ok_or(TrainingError::Config("QP out of range"))?;
            let (i1, i2) = oracle_labels(coder, &orig, &pred, false);
            t.i1 = i1;
            t.i2 = i2;
        }
    }
    Ok(())
}

/// Contexts and oracle labels for every size of `cfg`, labeled with the
/// matching network of `models`.
pub fn collect_dataset<T: Scalar>(
    images: &[(String, Plane)],
    cfg: &CollectConfig,
    bank: &TransformBank,
    models: &ModelSet<T>,
) -> Result<Vec<Dataset>, TrainingError> {
    let mut sets = collect_contexts(images, cfg, bank)?;
    for ds in &mut sets {
        label_dataset(ds, models.get(ds.size), bank)?;
    }
    Ok(sets)
}
