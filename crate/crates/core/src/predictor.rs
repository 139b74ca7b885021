//! The neural intra prediction mode: geometry dispatch to one of the eight
//! networks, prediction and transform-pair logits.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::context::{
    adapt_context, extract_context, postprocess, preprocess, resolve_geometry, ContextSpec, GeometryAdaptation,
    NetSize, PreprocessedContext, SUPPORTED_NET_SIZES,
};
use crate::nn::arch::LOGIT_COUNT;
use crate::nn::{Architecture, Network, NnError, Tensor};
use crate::plane::{Block, Frame};
use crate::scalar::Scalar;
use crate::transforms::hash_bytes;

/// Output of the NN mode for one block.
#[derive(Clone, Debug, PartialEq)]
pub struct NnModeOutput {
    /// `h x w` prediction in the block's own orientation.
    pub prediction: Block,
    /// Two 7-way heads, in the network's orientation.
    pub logits: [f64; LOGIT_COUNT],
    pub geometry: GeometryAdaptation,
}

/// One network per supported block size.
#[derive(Clone, Debug)]
pub struct ModelSet<T: Scalar> {
    nets: BTreeMap<NetSize, Network<T>>,
}

/// Weight file name for a network size.
pub fn model_file_name(size: NetSize) -> String {
    format!("f{}x{}.nnw", size.h, size.w)
}

impl<T: Scalar> ModelSet<T> {
    pub fn from_networks(nets: impl IntoIterator<Item = Network<T>>) -> Result<Self, NnError> {
        let mut map = BTreeMap::new();
        for n in nets {
            let (h, w) = n.arch().block();
            map.insert(NetSize::new(h, w), n);
        }
        for s in SUPPORTED_NET_SIZES {
            if !map.contains_key(&s) {
                return Err(NnError::UnsupportedSize { h: s.h, w: s.w });
            }
        }
        Ok(Self { nets: map })
    }

    /// Xavier-initialized networks; seeds differ per size.
    pub fn init(seed: u64) -> Self {
        let nets = SUPPORTED_NET_SIZES.iter().enumerate().map(|(i, &s)| {
            Network::init(
                Architecture::for_size(s).expect("supported size"),
                seed.wrapping_add(i as u64),
            )
        });
        Self::from_networks(nets).expect("all sizes present")
    }

    pub fn zeros() -> Self {
        let nets = SUPPORTED_NET_SIZES
            .iter()
            .map(|&s| Network::zeros(Architecture::for_size(s).expect("supported size")));
        Self::from_networks(nets).expect("all sizes present")
    }

    pub fn get(&self, size: NetSize) -> &Network<T> {
        &self.nets[&size]
    }

    pub fn get_mut(&mut self, size: NetSize) -> &mut Network<T> {
        self.nets.get_mut(&size).expect("every supported size is present")
    }

    pub fn set(&mut self, net: Network<T>) {
        let (h, w) = net.arch().block();
        self.nets.insert(NetSize::new(h, w), net);
    }

    pub fn iter(&self) -> impl Iterator<Item = (NetSize, &Network<T>)> {
        self.nets.iter().map(|(&k, v)| (k, v))
    }

    pub fn cast<U: Scalar>(&self) -> ModelSet<U> {
        ModelSet {
            nets: self.nets.iter().map(|(&k, v)| (k, v.cast())).collect(),
        }
    }

    /// First 8 bytes of the SHA-256 over all weight files in size order.
    pub fn hash(&self) -> u64 {
        let mut all = Vec::new();
        for net in self.nets.values() {
            all.extend(net.to_bytes());
        }
        hash_bytes(&all)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), NnError> {
        fs::create_dir_all(dir)?;
        for (size, net) in &self.nets {
            fs::write(dir.join(model_file_name(*size)), net.to_bytes())?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self, NnError> {
        let mut nets = Vec::new();
        for s in SUPPORTED_NET_SIZES {
            let path = dir.join(model_file_name(s));
            let bytes = fs::read(&path).map_err(|e| NnError::BadFile(format!("{}: {e}", path.display())))?;
            let net = Network::from_bytes(&bytes)?;
            if net.arch().block() != (s.h, s.w) {
                return Err(NnError::BadFile(format!("{} holds the wrong size", path.display())));
            }
            nets.push(net);
        }
        Self::from_networks(nets)
    }
}

/// Splits a flat network input (above then left) into the tensors expected
/// by `arch`, batching the given rows.
pub fn network_inputs<T: Scalar>(arch: &Architecture, rows: &[&[f64]]) -> Vec<Tensor<T>> {
    let mut offset = 0;
    arch.inputs()
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let width = arch.input_width(i);
            let mut data = Vec::with_capacity(rows.len() * width);
            for r in rows {
                data.extend(r[offset..offset + width].iter().map(|&v| T::from_f64_lossy(v)));
            }
            offset += width;
            Tensor::from_vec(&[rows.len(), width], data).expect("finite context values")
        })
        .collect()
}

/// Context of the block at (x, y) adapted to its network and normalized.
pub fn prepare_context(
    frame: &Frame,
    x: usize,
    y: usize,
    h: usize,
    w: usize,
) -> Option<(GeometryAdaptation, PreprocessedContext)> {
    let geo = resolve_geometry(h, w)?;
    let ctx = extract_context(frame, x, y, ContextSpec::for_block(h, w));
    let adapted = adapt_context(&ctx, &geo);
    Some((geo, preprocess(&adapted, frame.plane.bitdepth())))
}

/// Runs the NN mode for the `h x w` block at (x, y); `None` when no network
/// serves this size.
pub fn predict_nn<T: Scalar>(
    frame: &Frame,
    x: usize,
    y: usize,
    h: usize,
    w: usize,
    models: &ModelSet<T>,
) -> Option<NnModeOutput> {
    let (geo, pre) = prepare_context(frame, x, y, h, w)?;
    let net = models.get(geo.net);
    let out = net
        .forward(&network_inputs::<T>(net.arch(), &[&pre.values]))
        .expect("context geometry matches the network");
    let y_c: Vec<f64> = out.prediction.to_f64();
    let mut logits = [0.0; LOGIT_COUNT];
    for (l, v) in logits.iter_mut().zip(out.logits.to_f64()) {
        *l = v;
    }
    Some(NnModeOutput {
        prediction: postprocess(&y_c, pre.mu, frame.plane.bitdepth(), &geo),
        logits,
        geometry: geo,
    })
}
