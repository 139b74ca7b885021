use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

use super::arch::{Activation, Architecture, ConvShape, LayerKind, Source, LEAKY_SLOPE};
use super::{NnError, Tensor};

/// Weight and bias of one layer. Fully-connected weights are stored
/// `[inputs, outputs]`; convolution weights `[kh, kw, in_c, out_c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LayerParams<T> {
    fn zeros(kind: &LayerKind) -> Self {
        Self {
            weight: vec![T::zero(); kind.weight_len()],
            bias: vec![T::zero(); kind.bias_len()],
        }
    }
}

/// Per-parameter gradients, shaped like [`Network::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(arch: &Architecture) -> Self {
        Self {
            layers: arch.layers().iter().map(|l| LayerParams::zeros(&l.kind)).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn max_abs(&self) -> T {
        self.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Everything `backward` needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ActivationCache<T> {
    batch: usize,
    generation: u64,
    inputs: Vec<Vec<T>>,
    outputs: Vec<Vec<T>>,
    columns: Vec<Vec<T>>,
}

impl<T> ActivationCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Output of layer `i` for the whole batch, row-major `[batch, width]`.
    pub fn output(&self, i: usize) -> &[T] {
        &self.outputs[i]
    }
}

#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    /// `[batch, h*w]` normalized prediction.
    pub prediction: Tensor<T>,
    /// `[batch, 14]` unscaled log-probabilities.
    pub logits: Tensor<T>,
    pub cache: ActivationCache<T>,
}

/// A network instance: graph plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    arch: Architecture,
    params: Vec<LayerParams<T>>,
    generation: u64,
}

impl<T: Scalar> Network<T> {
    pub fn zeros(arch: Architecture) -> Self {
        let params = arch.layers().iter().map(|l| LayerParams::zeros(&l.kind)).collect();
        Self {
            arch,
            params,
            generation: 0,
        }
    }

    /// Uniform init in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut net = Self::zeros(arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (spec, p) in net.arch.layers().iter().zip(net.params.iter_mut()) {
            let (fan_in, fan_out) = spec.kind.fans();
            if fan_in == 0 {
                continue;
            }
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut p.weight {
                *w = T::from_f64_lossy(rng.gen_range(-limit..limit));
            }
        }
        net
    }

    pub(crate) fn from_parts(arch: Architecture, params: Vec<LayerParams<T>>) -> Self {
        Self {
            arch,
            params,
            generation: 0,
        }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[LayerParams<T>] {
        &self.params
    }

    /// Mutable parameter access. Invalidates outstanding activation caches.
    pub fn params_mut(&mut self) -> &mut [LayerParams<T>] {
        self.generation += 1;
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    /// Converts the parameters to another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let params = self
            .params
            .iter()
            .map(|p| LayerParams {
                weight: p.weight.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
                bias: p.bias.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
            })
            .collect();
        Network::from_parts(self.arch.clone(), params)
    }

    fn check_inputs(&self, inputs: &[Tensor<T>]) -> Result<usize, NnError> {
        if inputs.len() != self.arch.inputs().len() {
            return Err(NnError::ShapeMismatch {
                layer: 0,
                expected: self.arch.inputs().len(),
                found: inputs.len(),
            });
        }
        let mut batch = None;
        for (i, t) in inputs.iter().enumerate() {
            let width = self.arch.input_width(i);
            let layer = self.arch.consumer_of_input(i);
            let b = match t.shape() {
                [n] if *n == width => 1,
                [b, rest @ ..] if rest.iter().product::<usize>() == width => *b,
                _ => {
                    return Err(NnError::ShapeMismatch {
                        layer,
                        expected: width,
                        found: t.len() / t.shape().first().copied().unwrap_or(1).max(1),
                    })
                }
            };
            if *batch.get_or_insert(b) != b {
                return Err(NnError::ShapeMismatch {
                    layer,
                    expected: batch.unwrap_or(b),
                    found: b,
                });
            }
        }
        Ok(batch.unwrap_or(0))
    }

    /// Evaluates both heads on a batch.
    ///
    /// Each input tensor is `[batch, ...]` whose trailing dimensions multiply
    /// to the declared input width; a bare `[width]` tensor is a batch of one.
    pub fn forward(&self, inputs: &[Tensor<T>]) -> Result<ForwardOutput<T>, NnError> {
        let batch = self.check_inputs(inputs)?;
        let input_data: Vec<Vec<T>> = inputs.iter().map(|t| t.data().to_vec()).collect();
        let layers = self.arch.layers();
        let mut outputs: Vec<Vec<T>> = Vec::with_capacity(layers.len());
        let mut columns: Vec<Vec<T>> = Vec::with_capacity(layers.len());
        for (idx, (spec, p)) in layers.iter().zip(&self.params).enumerate() {
            let source = |s: Source| -> &[T] {
                match s {
                    Source::Input(i) => &input_data[i],
                    Source::Layer(j) => &outputs[j],
                }
            };
            let width = self.arch.width(idx);
            let mut cols = Vec::new();
            let mut out = match spec.kind {
                LayerKind::FullyConnected { inputs, outputs: n_out } => {
                    let x = source(spec.sources[0]);
                    let mut y = broadcast_bias(&p.bias, batch);
                    T::gemm(
                        batch,
                        inputs,
                        n_out,
                        T::one(),
                        x,
                        inputs,
                        1,
                        &p.weight,
                        n_out,
                        1,
                        T::one(),
                        &mut y,
                        n_out,
                        1,
                    );
                    y
                }
                LayerKind::Conv2d(c) => {
                    let x = source(spec.sources[0]);
                    cols = im2col(&c, x, batch);
                    let rows = batch * c.out_h() * c.out_w();
                    let mut y = broadcast_bias(&p.bias, rows);
                    T::gemm(
                        rows,
                        c.patch_len(),
                        c.out_channels,
                        T::one(),
                        &cols,
                        c.patch_len(),
                        1,
                        &p.weight,
                        c.out_channels,
                        1,
                        T::one(),
                        &mut y,
                        c.out_channels,
                        1,
                    );
                    y
                }
                LayerKind::Flatten => source(spec.sources[0]).to_vec(),
                LayerKind::Concat => {
                    let mut y = Vec::with_capacity(batch * width);
                    for b in 0..batch {
                        for &s in &spec.sources {
                            let w = self.arch.source_width(s);
                            y.extend_from_slice(&source(s)[b * w..(b + 1) * w]);
                        }
                    }
                    y
                }
            };
            if spec.activation == Activation::LeakyRelu {
                let slope = T::from_f64_lossy(LEAKY_SLOPE);
                for v in &mut out {
                    if *v < T::zero() {
                        *v = *v * slope;
                    }
                }
            }
            debug_assert_eq!(out.len(), batch * width);
            outputs.push(out);
            columns.push(cols);
        }
        let pred_layer = self.arch.prediction_layer();
        let logit_layer = self.arch.logits_layer();
        let prediction = Tensor::from_vec(&[batch, self.arch.width(pred_layer)], outputs[pred_layer].clone())?;
        let logits = Tensor::from_vec(&[batch, self.arch.width(logit_layer)], outputs[logit_layer].clone())?;
        Ok(ForwardOutput {
            prediction,
            logits,
            cache: ActivationCache {
                batch,
                generation: self.generation,
                inputs: input_data,
                outputs,
                columns,
            },
        })
    }

    /// Gradients of `sum(grad_prediction * prediction) + sum(grad_logits * logits)`
    /// with respect to every parameter. Both heads accumulate into the shared
    /// layer they read.
    pub fn backward(
        &self,
        cache: &ActivationCache<T>,
        grad_prediction: &Tensor<T>,
        grad_logits: &Tensor<T>,
    ) -> Result<Gradients<T>, NnError> {
        if cache.generation != self.generation || cache.outputs.len() != self.params.len() {
            return Err(NnError::StaleCache);
        }
        let batch = cache.batch;
        let pred_layer = self.arch.prediction_layer();
        let logit_layer = self.arch.logits_layer();
        for (layer, g) in [(pred_layer, grad_prediction), (logit_layer, grad_logits)] {
            if g.len() != batch * self.arch.width(layer) {
                return Err(NnError::ShapeMismatch {
                    layer,
                    expected: batch * self.arch.width(layer),
                    found: g.len(),
                });
            }
        }
        let layers = self.arch.layers();
        let mut upstream: Vec<Option<Vec<T>>> = vec![None; layers.len()];
        upstream[pred_layer] = Some(grad_prediction.data().to_vec());
        upstream[logit_layer] = Some(grad_logits.data().to_vec());
        let mut grads = Gradients::zeros_like(&self.arch);
        let slope = T::from_f64_lossy(LEAKY_SLOPE);

        for idx in (0..layers.len()).rev() {
            let Some(mut g) = upstream[idx].take() else {
                continue;
            };
            let spec = &layers[idx];
            if spec.activation == Activation::LeakyRelu {
                for (gi, &o) in g.iter_mut().zip(&cache.outputs[idx]) {
                    if o <= T::zero() {
                        *gi = *gi * slope;
                    }
                }
            }
            let p = &self.params[idx];
            match spec.kind {
                LayerKind::FullyConnected { inputs, outputs } => {
                    let src = spec.sources[0];
                    let x = source_of(cache, src);
                    let gl = &mut grads.layers[idx];
                    // dW = x^T g
                    T::gemm(
                        inputs,
                        batch,
                        outputs,
                        T::one(),
                        x,
                        1,
                        inputs,
                        &g,
                        outputs,
                        1,
                        T::zero(),
                        &mut gl.weight,
                        outputs,
                        1,
                    );
                    column_sums(&g, outputs, &mut gl.bias);
                    if let Source::Layer(j) = src {
                        // dx = g W^T
                        let dst = upstream[j].get_or_insert_with(|| vec![T::zero(); batch * inputs]);
                        T::gemm(
                            batch,
                            outputs,
                            inputs,
                            T::one(),
                            &g,
                            outputs,
                            1,
                            &p.weight,
                            1,
                            outputs,
                            T::one(),
                            dst,
                            inputs,
                            1,
                        );
                    }
                }
                LayerKind::Conv2d(c) => {
                    let src = spec.sources[0];
                    let cols = &cache.columns[idx];
                    let rows = batch * c.out_h() * c.out_w();
                    let k = c.patch_len();
                    let gl = &mut grads.layers[idx];
                    T::gemm(
                        k,
                        rows,
                        c.out_channels,
                        T::one(),
                        cols,
                        1,
                        k,
                        &g,
                        c.out_channels,
                        1,
                        T::zero(),
                        &mut gl.weight,
                        c.out_channels,
                        1,
                    );
                    column_sums(&g, c.out_channels, &mut gl.bias);
                    if let Source::Layer(j) = src {
                        let mut gcols = vec![T::zero(); rows * k];
                        T::gemm(
                            rows,
                            c.out_channels,
                            k,
                            T::one(),
                            &g,
                            c.out_channels,
                            1,
                            &p.weight,
                            1,
                            c.out_channels,
                            T::zero(),
                            &mut gcols,
                            k,
                            1,
                        );
                        let dst = upstream[j].get_or_insert_with(|| vec![T::zero(); batch * c.in_len()]);
                        col2im_add(&c, &gcols, batch, dst);
                    }
                }
                LayerKind::Flatten => {
                    if let Source::Layer(j) = spec.sources[0] {
                        add_into(&mut upstream[j], &g);
                    }
                }
                LayerKind::Concat => {
                    let width = self.arch.width(idx);
                    let mut offset = 0;
                    for &s in &spec.sources {
                        let w = self.arch.source_width(s);
                        if let Source::Layer(j) = s {
                            let mut part = Vec::with_capacity(batch * w);
                            for b in 0..batch {
                                part.extend_from_slice(&g[b * width + offset..b * width + offset + w]);
                            }
                            add_into(&mut upstream[j], &part);
                        }
                        offset += w;
                    }
                }
            }
        }
        Ok(grads)
    }
}

fn source_of<T>(cache: &ActivationCache<T>, src: Source) -> &[T] {
    match src {
        Source::Input(i) => &cache.inputs[i],
        Source::Layer(j) => &cache.outputs[j],
    }
}

fn broadcast_bias<T: Scalar>(bias: &[T], rows: usize) -> Vec<T> {
    let mut y = Vec::with_capacity(rows * bias.len());
    for _ in 0..rows {
        y.extend_from_slice(bias);
    }
    y
}

fn column_sums<T: Scalar>(g: &[T], width: usize, out: &mut [T]) {
    out.iter_mut().for_each(|v| *v = T::zero());
    for row in g.chunks_exact(width) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
}

fn add_into<T: Scalar>(slot: &mut Option<Vec<T>>, g: &[T]) {
    match slot {
        Some(existing) => {
            for (e, &v) in existing.iter_mut().zip(g) {
                *e = *e + v;
            }
        }
        None => *slot = Some(g.to_vec()),
    }
}

/// Unrolls NHWC input patches into rows of `(ky, kx, c)`.
fn im2col<T: Scalar>(c: &ConvShape, x: &[T], batch: usize) -> Vec<T> {
    let (oh, ow) = (c.out_h(), c.out_w());
    let k = c.patch_len();
    let mut cols = vec![T::zero(); batch * oh * ow * k];
    let (ph, pw) = (c.pad_h() as isize, c.pad_w() as isize);
    for b in 0..batch {
        let img = &x[b * c.in_len()..(b + 1) * c.in_len()];
        for oy in 0..oh {
            for ox in 0..ow {
                let row = &mut cols[((b * oh + oy) * ow + ox) * k..][..k];
                for ky in 0..c.kernel_h {
                    let iy = (oy * c.stride_h + ky) as isize - ph;
                    if iy < 0 || iy >= c.in_h as isize {
                        continue;
                    }
                    for kx in 0..c.kernel_w {
                        let ix = (ox * c.stride_w + kx) as isize - pw;
                        if ix < 0 || ix >= c.in_w as isize {
                            continue;
                        }
                        let src = (iy as usize * c.in_w + ix as usize) * c.in_channels;
                        let dst = (ky * c.kernel_w + kx) * c.in_channels;
                        row[dst..dst + c.in_channels].copy_from_slice(&img[src..src + c.in_channels]);
                    }
                }
            }
        }
    }
    cols
}

fn col2im_add<T: Scalar>(c: &ConvShape, gcols: &[T], batch: usize, dst: &mut [T]) {
    let (oh, ow) = (c.out_h(), c.out_w());
    let k = c.patch_len();
    let (ph, pw) = (c.pad_h() as isize, c.pad_w() as isize);
    for b in 0..batch {
        let img = &mut dst[b * c.in_len()..(b + 1) * c.in_len()];
        for oy in 0..oh {
            for ox in 0..ow {
                let row = &gcols[((b * oh + oy) * ow + ox) * k..][..k];
                for ky in 0..c.kernel_h {
                    let iy = (oy * c.stride_h + ky) as isize - ph;
                    if iy < 0 || iy >= c.in_h as isize {
                        continue;
                    }
                    for kx in 0..c.kernel_w {
                        let ix = (ox * c.stride_w + kx) as isize - pw;
                        if ix < 0 || ix >= c.in_w as isize {
                            continue;
                        }
                        let d = (iy as usize * c.in_w + ix as usize) * c.in_channels;
                        let s = (ky * c.kernel_w + kx) * c.in_channels;
                        for ch in 0..c.in_channels {
                            img[d + ch] = img[d + ch] + row[s + ch];
                        }
                    }
                }
            }
        }
    }
}
