//! Layer graphs for the block-size specific prediction networks.

use crate::context::{ContextSpec, NetSize};

use super::NnError;

/// Negative-side slope of every LeakyReLU in the engine.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Number of logits: two heads of seven transform-pair scores.
pub const LOGIT_COUNT: usize = 14;

/// Width of the hidden fully-connected layers of the small-block networks.
pub const FC_HIDDEN: usize = 1200;

/// Width of the merge layer of the 16x16 network.
pub const MERGE_HIDDEN_16: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Identity,
}

/// 2-D convolution geometry. Inputs and outputs are stored NHWC.
///
/// Zero padding of `(k - 1) / 2` on each side, so the output extent along an
/// axis is `ceil(in / stride)` for odd kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub in_h: usize,
    pub in_w: usize,
}

impl ConvShape {
    pub fn pad_h(&self) -> usize {
        (self.kernel_h - 1) / 2
    }

    pub fn pad_w(&self) -> usize {
        (self.kernel_w - 1) / 2
    }

    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad_h() - self.kernel_h) / self.stride_h + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad_w() - self.kernel_w) / self.stride_w + 1
    }

    /// Rows of the unrolled weight matrix.
    pub fn patch_len(&self) -> usize {
        self.kernel_h * self.kernel_w * self.in_channels
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w * self.in_channels
    }

    pub fn out_len(&self) -> usize {
        self.out_h() * self.out_w() * self.out_channels
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    FullyConnected { inputs: usize, outputs: usize },
    Conv2d(ConvShape),
    Flatten,
    Concat,
}

impl LayerKind {
    pub fn weight_len(&self) -> usize {
        match self {
            LayerKind::FullyConnected { inputs, outputs } => inputs * outputs,
            LayerKind::Conv2d(c) => c.patch_len() * c.out_channels,
            LayerKind::Flatten | LayerKind::Concat => 0,
        }
    }

    pub fn bias_len(&self) -> usize {
        match self {
            LayerKind::FullyConnected { outputs, .. } => *outputs,
            LayerKind::Conv2d(c) => c.out_channels,
            LayerKind::Flatten | LayerKind::Concat => 0,
        }
    }

    /// (fan_in, fan_out) used by the uniform initializer.
    pub fn fans(&self) -> (usize, usize) {
        match self {
            LayerKind::FullyConnected { inputs, outputs } => (*inputs, *outputs),
            LayerKind::Conv2d(c) => (c.patch_len(), c.kernel_h * c.kernel_w * c.out_channels),
            LayerKind::Flatten | LayerKind::Concat => (0, 0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Input(usize),
    Layer(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub sources: Vec<Source>,
    pub activation: Activation,
}

impl LayerSpec {
    fn fc(inputs: usize, outputs: usize, src: Source, activation: Activation) -> Self {
        Self {
            kind: LayerKind::FullyConnected { inputs, outputs },
            sources: vec![src],
            activation,
        }
    }
}

/// A validated layer graph with one prediction head and one logit head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    block_h: usize,
    block_w: usize,
    /// Per-sample 2-D geometry (rows, cols) of each network input.
    inputs: Vec<(usize, usize)>,
    layers: Vec<LayerSpec>,
    widths: Vec<usize>,
    prediction_layer: usize,
    logits_layer: usize,
}

impl Architecture {
    /// Validates a custom graph. Layers may only read network inputs or
    /// earlier layers.
    pub fn new(
        block_h: usize,
        block_w: usize,
        inputs: Vec<(usize, usize)>,
        layers: Vec<LayerSpec>,
        prediction_layer: usize,
        logits_layer: usize,
    ) -> Result<Self, NnError> {
        let mut widths = Vec::with_capacity(layers.len());
        for (idx, layer) in layers.iter().enumerate() {
            let mut source_widths = Vec::new();
            for src in &layer.sources {
                let w = match *src {
                    Source::Input(i) => inputs
                        .get(i)
                        .map(|&(r, c)| r * c)
                        .ok_or(NnError::BadGraph { layer: idx })?,
                    Source::Layer(j) if j < idx => widths[j],
                    Source::Layer(_) => return Err(NnError::BadGraph { layer: idx }),
                };
                source_widths.push(w);
            }
            let width = match layer.kind {
                LayerKind::FullyConnected { inputs, outputs } => {
                    if source_widths != [inputs] {
                        return Err(NnError::BadGraph { layer: idx });
                    }
                    outputs
                }
                LayerKind::Conv2d(c) => {
                    if source_widths != [c.in_len()] || c.kernel_h % 2 == 0 || c.kernel_w % 2 == 0 {
                        return Err(NnError::BadGraph { layer: idx });
                    }
                    c.out_len()
                }
                LayerKind::Flatten => {
                    if source_widths.len() != 1 {
                        return Err(NnError::BadGraph { layer: idx });
                    }
                    source_widths[0]
                }
                LayerKind::Concat => {
                    if source_widths.is_empty() {
                        return Err(NnError::BadGraph { layer: idx });
                    }
                    source_widths.iter().sum()
                }
            };
            widths.push(width);
        }
        let ok_heads = widths.get(prediction_layer) == Some(&(block_h * block_w))
            && widths.get(logits_layer) == Some(&LOGIT_COUNT)
            && prediction_layer != logits_layer;
        if !ok_heads {
            return Err(NnError::BadGraph {
                layer: prediction_layer.min(logits_layer),
            });
        }
        Ok(Self {
            block_h,
            block_w,
            inputs,
            layers,
            widths,
            prediction_layer,
            logits_layer,
        })
    }

    /// The table-defined graph of the network predicting `size` blocks.
    pub fn for_size(size: NetSize) -> Result<Self, NnError> {
        let (h, w) = (size.h, size.w);
        let ctx = ContextSpec::for_block(h, w);
        if h.min(w) <= 8 {
            let input = ctx.n_a * (ctx.n_l + w) + h * ctx.n_l;
            let layers = vec![
                LayerSpec::fc(input, FC_HIDDEN, Source::Input(0), Activation::LeakyRelu),
                LayerSpec::fc(FC_HIDDEN, FC_HIDDEN, Source::Layer(0), Activation::LeakyRelu),
                LayerSpec::fc(FC_HIDDEN, h * w, Source::Layer(1), Activation::Identity),
                LayerSpec::fc(FC_HIDDEN, LOGIT_COUNT, Source::Layer(1), Activation::Identity),
            ];
            return Self::new(h, w, vec![(1, input)], layers, 2, 3);
        }
        let wide_strides = match (h, w) {
            (16, 16) => false,
            (32, 32) => true,
            _ => return Err(NnError::UnsupportedSize { h, w }),
        };
        let above = (ctx.n_a, ctx.n_l + w);
        let left = (h, ctx.n_l);
        let mut layers = Vec::new();
        let above_strides = [(2, 2), (2, 2), if wide_strides { (2, 2) } else { (1, 2) }, (1, 2)];
        let left_strides = [(2, 2), (2, 2), if wide_strides { (2, 2) } else { (2, 1) }, (2, 1)];
        let (above_flat, above_width) = push_branch(&mut layers, 0, above, &above_strides);
        let (left_flat, left_width) = push_branch(&mut layers, 1, left, &left_strides);
        let merged_width = above_width + left_width;
        layers.push(LayerSpec {
            kind: LayerKind::Concat,
            sources: vec![Source::Layer(above_flat), Source::Layer(left_flat)],
            activation: Activation::Identity,
        });
        let concat = layers.len() - 1;
        let merge = if wide_strides { h * w } else { MERGE_HIDDEN_16 };
        layers.push(LayerSpec::fc(
            merged_width,
            merge,
            Source::Layer(concat),
            Activation::LeakyRelu,
        ));
        let hidden = layers.len() - 1;
        layers.push(LayerSpec::fc(merge, h * w, Source::Layer(hidden), Activation::Identity));
        layers.push(LayerSpec::fc(
            merge,
            LOGIT_COUNT,
            Source::Layer(hidden),
            Activation::Identity,
        ));
        let n = layers.len();
        Self::new(h, w, vec![above, left], layers, n - 2, n - 1)
    }

    pub fn block(&self) -> (usize, usize) {
        (self.block_h, self.block_w)
    }

    pub fn inputs(&self) -> &[(usize, usize)] {
        &self.inputs
    }

    pub fn input_width(&self, i: usize) -> usize {
        let (r, c) = self.inputs[i];
        r * c
    }

    /// Total per-sample input length, inputs concatenated in order.
    pub fn total_input_width(&self) -> usize {
        (0..self.inputs.len()).map(|i| self.input_width(i)).sum()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn width(&self, layer: usize) -> usize {
        self.widths[layer]
    }

    pub fn source_width(&self, src: Source) -> usize {
        match src {
            Source::Input(i) => self.input_width(i),
            Source::Layer(j) => self.widths[j],
        }
    }

    pub fn prediction_layer(&self) -> usize {
        self.prediction_layer
    }

    pub fn logits_layer(&self) -> usize {
        self.logits_layer
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.kind.weight_len() + l.kind.bias_len())
            .sum()
    }

    /// First layer that reads network input `i`.
    pub fn consumer_of_input(&self, i: usize) -> usize {
        self.layers
            .iter()
            .position(|l| l.sources.contains(&Source::Input(i)))
            .unwrap_or(0)
    }
}

fn push_branch(
    layers: &mut Vec<LayerSpec>,
    input: usize,
    geometry: (usize, usize),
    strides: &[(usize, usize)],
) -> (usize, usize) {
    let (mut in_h, mut in_w, mut in_c) = (geometry.0, geometry.1, 1);
    let channels = [32, 64, 128, 128];
    let mut src = Source::Input(input);
    for (&(stride_h, stride_w), &out_c) in strides.iter().zip(&channels) {
        let shape = ConvShape {
            kernel_h: 3,
            kernel_w: 3,
            in_channels: in_c,
            out_channels: out_c,
            stride_h,
            stride_w,
            in_h,
            in_w,
        };
        layers.push(LayerSpec {
            kind: LayerKind::Conv2d(shape),
            sources: vec![src],
            activation: Activation::LeakyRelu,
        });
        src = Source::Layer(layers.len() - 1);
        in_h = shape.out_h();
        in_w = shape.out_w();
        in_c = out_c;
    }
    layers.push(LayerSpec {
        kind: LayerKind::Flatten,
        sources: vec![src],
        activation: Activation::Identity,
    });
    (layers.len() - 1, in_h * in_w * in_c)
}
