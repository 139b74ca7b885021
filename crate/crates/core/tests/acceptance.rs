//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. The training criterion runs the full desk-scale
//! protocol and takes several minutes.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nnlfnst::codec::{decode_image, encode_image, CodecConfig};
use nnlfnst::context::{NetSize, SUPPORTED_NET_SIZES};
use nnlfnst::corpus::{load_pgm_dir, split_corpus, synthetic, synthetic_set, CorpusSplit, SyntheticKind};
use nnlfnst::entropy::{
    read_se, read_tb, read_ue, se_len, tb_len, ue_len, write_se, write_tb, write_ue, BitReader, BitSink, BitWriter,
    SyntaxElement,
};
use nnlfnst::evaluate::{bd_rate, run_experiment, selection_study, RdPoint, SelectionStudy};
use nnlfnst::nn::{Activation, Architecture, ConvShape, LayerKind, LayerSpec, Network, Source, Tensor};
use nnlfnst::plane::Plane;
use nnlfnst::signaling::{
    decode_remainder, encode_remainder, mode_to_pair, pair_bits, pair_index_to_spec, read_pair, remainder,
    spec_to_pair_index, write_pair, SignalingScheme, PAIR_COUNT,
};
use nnlfnst::training::{
    classification_loss, collect_bank_samples, collect_contexts, collect_dataset, prediction_loss, train_two_phase,
    window_means, CollectConfig, PipelineConfig, TrainConfig, BANK_BLOCK_SIZES, TRAINING_QPS,
};
use nnlfnst::transforms::klt::symmetric_eigen;
use nnlfnst::transforms::{
    dct2_forward, dct2_inverse, dct_matrix, train_bank, KernelFamily, PairSpec, TransformBank, SET_COUNT,
};
use nnlfnst::ModelSet32;

type Outcome = Result<String, String>;

/// Bank, dataset and weight bytes of one training run.
type Artifacts = (Vec<u8>, Vec<u8>, Vec<u8>);

fn data_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/natural"))
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        }
    }
}

/// Bank trained on the natural pictures; small synthetic sets leave some
/// groups without enough samples.
fn natural_bank() -> Result<TransformBank, String> {
    let pics: Vec<Plane> = load_pgm_dir(data_dir())
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    train_bank(&collect_bank_samples(&pics, &BANK_BLOCK_SIZES)).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- 2

/// Cyclic Jacobi rotations until the off-diagonal mass vanishes.
fn jacobi_eigen(m: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut a = m.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k * n + i]).collect()).collect();
    (values, vectors)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut dct_orth = 0.0f64;
    let mut dct_formula = 0.0f64;
    for n in [4, 8, 16, 32] {
        let d = dct_matrix(n);
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| d[i * n + k] * d[j * n + k]).sum();
                dct_orth = dct_orth.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
                let scale = if i == 0 {
                    (1.0 / n as f64).sqrt()
                } else {
                    (2.0 / n as f64).sqrt()
                };
                let c = scale * (std::f64::consts::PI * (2 * j + 1) as f64 * i as f64 / (2 * n) as f64).cos();
                dct_formula = dct_formula.max((c - d[i * n + j]).abs());
            }
        }
    }
    let mut dct_round = 0.0f64;
    for h in [4, 8, 16, 32] {
        for w in [4, 8, 16, 32] {
            for _ in 0..4 {
                let x: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let y = dct2_inverse(&dct2_forward(&x, h, w), h, w);
                dct_round = dct_round.max(x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            }
        }
    }

    let bank = natural_bank()?;
    let bank_orth = bank
        .matrices()
        .map(|(_, _, _, m)| m.orthonormality_error())
        .fold(0.0, f64::max);
    let mut bank_round = 0.0f64;
    for (h, w) in [(4, 4), (4, 8), (8, 4), (8, 8), (16, 16), (8, 32)] {
        for set in 0..SET_COUNT as u8 {
            for transpose in [false, true] {
                for matrix in 1..=2u8 {
                    let pair = PairSpec::new(set, transpose);
                    let sec: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let back = bank.forward(&bank.inverse(&sec, h, w, pair, matrix), h, w, pair, matrix);
                    let kept = nnlfnst::transforms::output_positions(h, w);
                    for p in kept {
                        bank_round = bank_round.max((back[p] - sec[p]).abs());
                    }
                    if KernelFamily::for_block(h, w) == KernelFamily::Small && (h, w) == (4, 4) {
                        let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
                        let y = bank.inverse(&bank.forward(&x, h, w, pair, matrix), h, w, pair, matrix);
                        bank_round = bank_round.max(x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
                    }
                }
            }
        }
    }

    let mut eig_err = 0.0f64;
    let mut cases = 0;
    for n in [2, 3, 4, 8, 16, 24, 32, 48] {
        for _ in 0..3 {
            let m = 3 * n;
            let x: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cov: Vec<f64> = (0..n * n)
                .map(|ij| {
                    let (i, j) = (ij / n, ij % n);
                    (0..m).map(|k| x[i * m + k] * x[j * m + k]).sum::<f64>() / m as f64
                })
                .collect();
            let (lv, vv) = symmetric_eigen(&cov, n);
            let (lo, vo) = jacobi_eigen(&cov, n);
            let top = lo[0].abs().max(1.0);
            for k in 0..n {
                eig_err = eig_err.max((lv[k] - lo[k]).abs() / top);
                let gap = (0..n)
                    .filter(|&j| j != k)
                    .map(|j| (lo[j] - lo[k]).abs())
                    .fold(f64::INFINITY, f64::min);
                if gap / top > 1e-3 {
                    let dot: f64 = vv[k].iter().zip(&vo[k]).map(|(a, b)| a * b).sum();
                    let s = dot.signum();
                    let d = vv[k]
                        .iter()
                        .zip(&vo[k])
                        .map(|(a, b)| (a - s * b).abs())
                        .fold(0.0, f64::max);
                    eig_err = eig_err.max(d);
                }
            }
            cases += 1;
        }
    }
    let ok = dct_orth < 1e-9
        && dct_formula < 1e-12
        && dct_round < 1e-9
        && bank_orth < 1e-9
        && bank_round < 1e-9
        && eig_err < 1e-8;
    ensure(
        ok,
        format!(
            "DCT orth {dct_orth:.1e}, DCT vs cosine formula {dct_formula:.1e}, DCT round trip {dct_round:.1e}, \
             bank orth {bank_orth:.1e}, bank round trip {bank_round:.1e}, eigen vs Jacobi {eig_err:.1e} over {cases} matrices up to 48x48"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn fc(inputs: usize, outputs: usize, src: Source, activation: Activation) -> LayerSpec {
    LayerSpec {
        kind: LayerKind::FullyConnected { inputs, outputs },
        sources: vec![src],
        activation,
    }
}

fn layer(kind: LayerKind, sources: Vec<Source>, activation: Activation) -> LayerSpec {
    LayerSpec {
        kind,
        sources,
        activation,
    }
}

fn random_conv(rng: &mut ChaCha8Rng, in_h: usize, in_w: usize, in_channels: usize) -> ConvShape {
    ConvShape {
        kernel_h: [1, 3][rng.gen_range(0..2)],
        kernel_w: [1, 3][rng.gen_range(0..2)],
        in_channels,
        out_channels: rng.gen_range(1..4),
        stride_h: rng.gen_range(1..3),
        stride_w: rng.gen_range(1..3),
        in_h,
        in_w,
    }
}

/// Random small graphs: 0 = fully connected, 1 = two stacked convolutions,
/// 2 = convolution and fully connected branches joined by concatenation.
fn random_arch(kind: usize, rng: &mut ChaCha8Rng) -> Architecture {
    let (bh, bw) = (rng.gen_range(1..4), rng.gen_range(1..4));
    let hidden = rng.gen_range(1..7);
    match kind {
        0 => {
            let a = rng.gen_range(1..9);
            Architecture::new(
                bh,
                bw,
                vec![(1, a)],
                vec![
                    fc(a, hidden, Source::Input(0), Activation::LeakyRelu),
                    fc(hidden, bh * bw, Source::Layer(0), Activation::Identity),
                    fc(hidden, 14, Source::Layer(0), Activation::Identity),
                ],
                1,
                2,
            )
        }
        1 => {
            let (ih, iw) = (rng.gen_range(2..6), rng.gen_range(2..6));
            let c1 = random_conv(rng, ih, iw, 1);
            let c2 = random_conv(rng, c1.out_h(), c1.out_w(), c1.out_channels);
            let flat = c2.out_len();
            Architecture::new(
                bh,
                bw,
                vec![(ih, iw)],
                vec![
                    layer(LayerKind::Conv2d(c1), vec![Source::Input(0)], Activation::LeakyRelu),
                    layer(LayerKind::Conv2d(c2), vec![Source::Layer(0)], Activation::LeakyRelu),
                    layer(LayerKind::Flatten, vec![Source::Layer(1)], Activation::Identity),
                    fc(flat, hidden, Source::Layer(2), Activation::LeakyRelu),
                    fc(hidden, bh * bw, Source::Layer(3), Activation::Identity),
                    fc(hidden, 14, Source::Layer(3), Activation::Identity),
                ],
                4,
                5,
            )
        }
        _ => {
            let (ih, iw) = (rng.gen_range(2..5), rng.gen_range(2..5));
            let c = random_conv(rng, ih, iw, 1);
            let b = rng.gen_range(1..6);
            let side = rng.gen_range(1..5);
            let joined = c.out_len() + side;
            Architecture::new(
                bh,
                bw,
                vec![(ih, iw), (1, b)],
                vec![
                    layer(LayerKind::Conv2d(c), vec![Source::Input(0)], Activation::LeakyRelu),
                    layer(LayerKind::Flatten, vec![Source::Layer(0)], Activation::Identity),
                    fc(b, side, Source::Input(1), Activation::LeakyRelu),
                    layer(
                        LayerKind::Concat,
                        vec![Source::Layer(1), Source::Layer(2)],
                        Activation::Identity,
                    ),
                    fc(joined, hidden, Source::Layer(3), Activation::LeakyRelu),
                    fc(hidden, bh * bw, Source::Layer(4), Activation::Identity),
                    fc(hidden, 14, Source::Layer(4), Activation::Identity),
                ],
                5,
                6,
            )
        }
    }
    .expect("valid random graph")
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("finite")
}

fn param(net: &mut Network<f64>, layer: usize, which: usize, i: usize) -> &mut f64 {
    let p = &mut net.params_mut()[layer];
    if which == 0 {
        &mut p.weight[i]
    } else {
        &mut p.bias[i]
    }
}

/// Norm-wise relative error between backprop and central differences of
/// `<g_p, prediction> + <g_l, logits>` over every parameter.
fn network_gradient_error(arch: Architecture, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f64>::init(arch, seed);
    for p in net.params_mut() {
        for b in &mut p.bias {
            *b = rng.gen_range(-0.3..0.3);
        }
    }
    let batch = 2;
    let inputs: Vec<Tensor<f64>> = net
        .arch()
        .inputs()
        .to_vec()
        .iter()
        .map(|&(r, c)| tensor(&mut rng, &[batch, r, c]))
        .collect();
    let (h, w) = net.arch().block();
    let gp = tensor(&mut rng, &[batch, h * w]);
    let gl = tensor(&mut rng, &[batch, 14]);
    let objective = |n: &Network<f64>| {
        let out = n.forward(&inputs).expect("forward");
        let a: f64 = out.prediction.data().iter().zip(gp.data()).map(|(x, y)| x * y).sum();
        let b: f64 = out.logits.data().iter().zip(gl.data()).map(|(x, y)| x * y).sum();
        a + b
    };
    let out = net.forward(&inputs).expect("forward");
    let grads = net.backward(&out.cache, &gp, &gl).expect("backward");
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    let step = 1e-6;
    for l in 0..net.params().len() {
        for which in 0..2 {
            let len = if which == 0 {
                net.params()[l].weight.len()
            } else {
                net.params()[l].bias.len()
            };
            for i in 0..len {
                let orig = *param(&mut net, l, which, i);
                *param(&mut net, l, which, i) = orig + step;
                let up = objective(&net);
                *param(&mut net, l, which, i) = orig - step;
                let down = objective(&net);
                *param(&mut net, l, which, i) = orig;
                numeric.push((up - down) / (2.0 * step));
                analytic.push(if which == 0 {
                    grads.layers[l].weight[i]
                } else {
                    grads.layers[l].bias[i]
                });
            }
        }
    }
    rel_err(&analytic, &numeric)
}

fn loss_gradient_errors(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let step = 1e-6;
    let logits: Vec<f64> = (0..14).map(|_| rng.gen_range(-4.0..4.0)).collect();
    let (i1, i2) = (rng.gen_range(0..7u8), rng.gen_range(0..7u8));
    let mut grad = vec![0.0; 14];
    classification_loss(&logits, i1, i2, &mut grad);
    let mut scratch = vec![0.0; 14];
    let num: Vec<f64> = (0..14)
        .map(|k| {
            let mut a = logits.clone();
            a[k] += step;
            let up = classification_loss(&a, i1, i2, &mut scratch);
            a[k] -= 2.0 * step;
            let down = classification_loss(&a, i1, i2, &mut scratch);
            (up - down) / (2.0 * step)
        })
        .collect();
    let ce = rel_err(&grad, &num);

    let n = rng.gen_range(1..65);
    let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let target: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut grad = vec![0.0; n];
    prediction_loss(&pred, &target, &mut grad);
    let mut scratch = vec![0.0; n];
    let num: Vec<f64> = (0..n)
        .map(|k| {
            let mut a = pred.clone();
            a[k] += step;
            let up = prediction_loss(&a, &target, &mut scratch);
            a[k] -= 2.0 * step;
            let down = prediction_loss(&a, &target, &mut scratch);
            (up - down) / (2.0 * step)
        })
        .collect();
    (ce, rel_err(&grad, &num))
}

fn criterion_3() -> Outcome {
    const INSTANCES: u64 = 100;
    let names = [
        "fully connected + LeakyReLU",
        "conv2d stack + flatten",
        "conv/fc branches + concat",
    ];
    let mut worst = [0.0f64; 5];
    for (kind, w) in worst.iter_mut().take(3).enumerate() {
        for i in 0..INSTANCES {
            let seed = 1000 * kind as u64 + i;
            let arch = random_arch(kind, &mut ChaCha8Rng::seed_from_u64(seed));
            *w = w.max(network_gradient_error(arch, seed));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..INSTANCES {
        let (ce, mae) = loss_gradient_errors(&mut rng);
        worst[3] = worst[3].max(ce);
        worst[4] = worst[4].max(mae);
    }
    let detail = names
        .iter()
        .chain(&["classification loss", "prediction loss"])
        .zip(&worst)
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(
        worst.iter().all(|&w| w < 1e-5),
        format!("worst relative error over {INSTANCES} instances each: {detail}"),
    )
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    // (first mode, last mode, transform set, transposed)
    let bands: [(i32, i32, u8, bool); 8] = [
        (0, 1, 0, false),
        (-14, -1, 1, false),
        (2, 12, 1, false),
        (13, 23, 2, false),
        (24, 34, 3, false),
        (35, 44, 3, true),
        (45, 55, 2, true),
        (56, 83, 1, true),
    ];
    let mut checked = 0;
    for m in -14..=83 {
        let &(_, _, set, transpose) = bands
            .iter()
            .find(|b| (b.0..=b.1).contains(&m))
            .expect("every mode is in a band");
        let (spec, idx) = mode_to_pair(m).map_err(|e| format!("mode {m}: {e}"))?;
        if spec != PairSpec::new(set, transpose) || pair_index_to_spec(idx) != spec {
            return Err(format!("mode {m} maps to {spec:?} (index {idx})"));
        }
        checked += 1;
    }
    for m in [-15, 84, -100, 200] {
        if mode_to_pair(m).is_ok() {
            return Err(format!("mode {m} should be rejected"));
        }
    }
    let mut seen = std::collections::HashSet::new();
    for idx in 0..PAIR_COUNT as u8 {
        let spec = pair_index_to_spec(idx);
        if spec_to_pair_index(spec) != Some(idx) || !seen.insert(spec) {
            return Err(format!("pair index {idx} is not a bijection"));
        }
    }
    if spec_to_pair_index(PairSpec::new(0, true)).is_some() || spec_to_pair_index(PairSpec::new(1, false)) != Some(1) {
        return Err("spec_to_pair_index accepts a pair outside the table".into());
    }
    let mut grid = 0;
    for exp in 0..PAIR_COUNT as u8 {
        for pred in 0..PAIR_COUNT as u8 {
            let mut w = BitWriter::new();
            encode_remainder(&mut w, exp, pred);
            let len = w.bits_written();
            let bytes = w.finish();
            let back = decode_remainder(&mut BitReader::new(&bytes), pred).map_err(|e| e.to_string())?;
            let rem = remainder(exp, pred);
            let expected_len = if rem == 0 { 2 } else { 3 };
            if back != exp
                || len != expected_len
                || pair_bits(SignalingScheme::Prediction, exp, pred) as u64 != len
                || (rem == 0) != (exp == pred)
            {
                return Err(format!("remainder coding fails at trExpIdx {exp}, prediction {pred}"));
            }
            for scheme in SignalingScheme::ALL {
                let mut w = BitWriter::new();
                write_pair(&mut w, scheme, exp, pred);
                let bits = w.bits_written();
                let bytes = w.finish();
                let got = read_pair(&mut BitReader::new(&bytes), scheme, pred).map_err(|e| e.to_string())?;
                let expect = match scheme {
                    SignalingScheme::Default => 0,
                    SignalingScheme::Inference => pred,
                    _ => exp,
                };
                if got != expect || bits != pair_bits(scheme, exp, pred) as u64 {
                    return Err(format!("{scheme} pair syntax fails at {exp}/{pred}"));
                }
            }
            grid += 1;
        }
    }
    Ok(format!(
        "{checked} effective modes match the table, 7 pair indices bijective, {grid} remainder cells round-trip"
    ))
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let mut symbols = 0;
    let mut worst_kraft = 0.0f64;
    for n in 1..=64u32 {
        let mut w = BitWriter::new();
        for s in 0..n {
            write_tb(&mut w, s, n, SyntaxElement::PairIdx);
        }
        let bytes = w.finish();
        let mut r = BitReader::new(&bytes);
        for s in 0..n {
            let got = read_tb(&mut r, n, SyntaxElement::PairIdx).map_err(|e| e.to_string())?;
            if got != s {
                return Err(format!("truncated binary n={n}: wrote {s}, read {got}"));
            }
            symbols += 1;
        }
        let kraft: f64 = (0..n).map(|s| 0.5f64.powi(tb_len(s, n) as i32)).sum();
        worst_kraft = worst_kraft.max((kraft - 1.0).abs());
    }
    let lengths7: Vec<u32> = (0..7).map(|s| tb_len(s, 7)).collect();

    let mut w = BitWriter::new();
    let mut expected_bits = 0u64;
    for v in -10_000..=10_000i64 {
        write_se(&mut w, v, SyntaxElement::Level);
        expected_bits += se_len(v) as u64;
    }
    for v in 0..=20_000u64 {
        write_ue(&mut w, v, SyntaxElement::Level);
        expected_bits += ue_len(v) as u64;
    }
    let written = w.bits_written();
    let bytes = w.finish();
    let mut r = BitReader::new(&bytes);
    for v in -10_000..=10_000i64 {
        let got = read_se(&mut r, SyntaxElement::Level).map_err(|e| e.to_string())?;
        if got != v {
            return Err(format!("signed exp-Golomb: wrote {v}, read {got}"));
        }
    }
    for v in 0..=20_000u64 {
        let got = read_ue(&mut r, SyntaxElement::Level).map_err(|e| e.to_string())?;
        if got != v {
            return Err(format!("exp-Golomb: wrote {v}, read {got}"));
        }
    }
    ensure(
        lengths7 == [2, 3, 3, 3, 3, 3, 3] && worst_kraft == 0.0 && written == expected_bits && r.position() == written,
        format!(
            "{symbols} truncated-binary symbols (n=1..64) and 40002 exp-Golomb values round-trip; \
             n=7 lengths {lengths7:?}; max |Kraft-1| {worst_kraft:e}"
        ),
    )
}

// ---------------------------------------------------------------- 8

/// Independent BD-rate: Lagrange interpolation through the four points,
/// composite trapezoid integration.
fn bd_rate_oracle(anchor: &[RdPoint], test: &[RdPoint]) -> f64 {
    let lagrange = |p: &[RdPoint], x: f64| -> f64 {
        (0..p.len())
            .map(|i| {
                let mut term = p[i].rate.ln();
                for j in 0..p.len() {
                    if j != i {
                        term *= (x - p[j].psnr) / (p[i].psnr - p[j].psnr);
                    }
                }
                term
            })
            .sum()
    };
    let lo_hi = |p: &[RdPoint]| {
        let lo = p.iter().map(|q| q.psnr).fold(f64::INFINITY, f64::min);
        let hi = p.iter().map(|q| q.psnr).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (a, b) = (lo_hi(anchor), lo_hi(test));
    let (lo, hi) = (a.0.max(b.0), a.1.min(b.1));
    let steps = 200_000;
    let dx = (hi - lo) / steps as f64;
    let f = |x: f64| lagrange(test, x) - lagrange(anchor, x);
    let mut integral = 0.5 * (f(lo) + f(hi));
    for k in 1..steps {
        integral += f(lo + k as f64 * dx);
    }
    integral *= dx;
    ((integral / (hi - lo)).exp() - 1.0) * 100.0
}

fn criterion_8() -> Outcome {
    let anchor: Vec<RdPoint> = [(1000.0, 30.1), (1800.0, 33.0), (3300.0, 36.2), (6100.0, 39.0)]
        .iter()
        .map(|&(rate, psnr)| RdPoint { rate, psnr })
        .collect();
    let same = bd_rate(&anchor, &anchor).map_err(|e| e.to_string())?;
    let shifted: Vec<RdPoint> = anchor
        .iter()
        .map(|p| RdPoint {
            rate: 0.9 * p.rate,
            psnr: p.psnr,
        })
        .collect();
    let shift = bd_rate(&anchor, &shifted).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_abs = 0.0f64;
    let mut worst_rel = 0.0f64;
    let trials = 200;
    let mut compared = 0;
    for _ in 0..trials {
        let curve = |rng: &mut ChaCha8Rng| -> Vec<RdPoint> {
            let mut rate = rng.gen_range(500.0..2000.0);
            let mut psnr = rng.gen_range(28.0..32.0);
            (0..4)
                .map(|_| {
                    rate *= rng.gen_range(1.4..2.2);
                    psnr += rng.gen_range(1.5..4.0);
                    RdPoint { rate, psnr }
                })
                .collect()
        };
        let (a, t) = (curve(&mut rng), curve(&mut rng));
        let Ok(got) = bd_rate(&a, &t) else {
            continue;
        };
        compared += 1;
        let oracle = bd_rate_oracle(&a, &t);
        worst_abs = worst_abs.max((got - oracle).abs());
        worst_rel = worst_rel.max((got - oracle).abs() / oracle.abs().max(1.0));
    }
    ensure(
        same.abs() < 1e-9 && (shift + 10.0).abs() < 0.01 && compared > trials / 2 && worst_abs < 0.01 && worst_rel < 1e-4,
        format!(
            "bd(x,x) = {same:.2e}; 0.9x shift gives {shift:.6}%; vs Lagrange/trapezoid oracle over {compared} curve pairs: \
             max abs diff {worst_abs:.2e} points, max rel diff {worst_rel:.2e}"
        ),
    )
}

// ---------------------------------------------------------------- 5 and 4

struct Trained {
    split: CorpusSplit,
    bank: TransformBank,
    models: ModelSet32,
    studies: Vec<(NetSize, SelectionStudy)>,
    detail: Vec<String>,
    pass: bool,
}

const TRAIN_SIZES: [NetSize; 2] = [NetSize::new(4, 4), NetSize::new(8, 8)];
const PRETRAIN_ITERATIONS: usize = 2_000;
const JOINT_ITERATIONS: usize = 20_000;
const MIN_TRIPLES: usize = 100_000;
const ACCURACY_FLOOR: f64 = 1.0 / 7.0 + 0.10;

fn desk_training() -> Result<Trained, String> {
    let natural = load_pgm_dir(data_dir()).map_err(|e| e.to_string())?;
    if natural.len() < 10 {
        return Err(format!(
            "only {} natural pictures in {}",
            natural.len(),
            data_dir().display()
        ));
    }
    let split = split_corpus(&natural, &["camera", "coffee"], 8, 2, 256, 100);
    let train_pics: Vec<Plane> = split.train.iter().map(|(_, p)| p.clone()).collect();
    let bank = train_bank(&collect_bank_samples(&train_pics, &BANK_BLOCK_SIZES)).map_err(|e| e.to_string())?;
    let train_sets = collect_contexts(&split.train, &CollectConfig::new(TRAIN_SIZES.to_vec(), 1), &bank)
        .map_err(|e| e.to_string())?;
    let held_sets = collect_contexts(&split.heldout, &CollectConfig::new(TRAIN_SIZES.to_vec(), 2), &bank)
        .map_err(|e| e.to_string())?;
    let mut models = ModelSet32::init(11);
    let mut detail = Vec::new();
    let mut studies = Vec::new();
    let mut pass = true;
    for (mut train, mut held) in train_sets.into_iter().zip(held_sets) {
        let size = train.size;
        let start = Instant::now();
        let mut net = Network::<f32>::init(Architecture::for_size(size).map_err(|e| e.to_string())?, 7);
        let cfg = PipelineConfig {
            pretrain_iterations: PRETRAIN_ITERATIONS,
            joint: TrainConfig {
                iterations: JOINT_ITERATIONS,
                eval_every: 5_000,
                seed: 3,
                ..Default::default()
            },
        };
        let report = train_two_phase(&mut net, &mut train, Some(&mut held), &bank, &cfg, |phase, c| {
            eprintln!(
                "  [{size}] {phase} {} loss {:.4} acc {:?}",
                c.iteration, c.train_loss, c.heldout_accuracy
            )
        })
        .map_err(|e| e.to_string())?;
        let (a1, a2) = report.heldout_accuracy.ok_or("no held-out accuracy")?;
        let hist = train.label_histogram();
        let top_share = hist
            .iter()
            .map(|h| *h.iter().max().unwrap_or(&0) as f64 / h.iter().sum::<usize>().max(1) as f64)
            .fold(0.0, f64::max);
        let windows = window_means(&report.joint.losses, JOINT_ITERATIONS / 4);
        models.set(net);
        let qps = |i: usize| TRAINING_QPS[i % TRAINING_QPS.len()];
        let study =
            selection_study(&split.heldout, &[(size.h, size.w)], qps, 8, &models, &bank).map_err(|e| e.to_string())?;
        let def = study.scheme(SignalingScheme::Default);
        let inf = study.scheme(SignalingScheme::Inference);
        let exp = study.scheme(SignalingScheme::FullyExplicit);
        let pre = study.scheme(SignalingScheme::Prediction);
        let ok_a = a1 > ACCURACY_FLOOR && a2 > ACCURACY_FLOOR;
        let ok_b = inf.mean_cost() <= def.mean_cost();
        let ok_c = exp.lfnst_blocks > 0 && pre.mean_pair_bits() < exp.mean_pair_bits();
        let ok_size = train.len() >= MIN_TRIPLES && top_share < 0.9;
        pass &= ok_a && ok_b && ok_c && ok_size;
        detail.push(format!(
            "f{size}: {} train / {} held-out triples, top label share {:.2}, quarter loss means {:?}, {:.0}s; \
             (a) acc {a1:.3}/{a2:.3} {}; (b) mean cost inference {:.2} vs default {:.2} {}; \
             (c) pair bits prediction {:.4} vs explicit {:.4} (explicit hits {:.3}) {}",
            train.len(),
            held.len(),
            top_share,
            windows
                .iter()
                .map(|w| (w * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>(),
            start.elapsed().as_secs_f64(),
            if ok_a { "ok" } else { "FAIL" },
            inf.mean_cost(),
            def.mean_cost(),
            if ok_b { "ok" } else { "FAIL" },
            pre.mean_pair_bits(),
            exp.mean_pair_bits(),
            exp.pair_hits as f64 / exp.lfnst_blocks.max(1) as f64,
            if ok_c { "ok" } else { "FAIL" },
        ));
        studies.push((size, study));
    }
    Ok(Trained {
        split,
        bank,
        models,
        studies,
        detail,
        pass,
    })
}

fn criterion_4(t: &Trained) -> Outcome {
    let mut blocks = 0;
    let mut violations = 0;
    let mut per_size = Vec::new();
    for (size, s) in &t.studies {
        blocks += s.default_lfnst_blocks;
        violations += s.oracle_violations;
        per_size.push(format!("{size}: {}", s.default_lfnst_blocks));
    }
    let others: Vec<(usize, usize)> = SUPPORTED_NET_SIZES
        .iter()
        .filter(|s| !TRAIN_SIZES.contains(s))
        .map(|s| (s.h, s.w))
        .collect();
    let few = &t.split.heldout[..2];
    let s = selection_study(few, &others, |i| [27, 37][i % 2], 16, &t.models, &t.bank).map_err(|e| e.to_string())?;
    blocks += s.default_lfnst_blocks;
    violations += s.oracle_violations;
    per_size.push(format!("other sizes: {}", s.default_lfnst_blocks));
    ensure(
        blocks > 0 && violations == 0,
        format!(
            "{violations} of {blocks} NN-LFNST blocks where oracle pairs cost more than Default ({})",
            per_size.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- 1

fn center_crop(p: &Plane, side: usize) -> Plane {
    let (x, y) = ((p.width() - side) / 2, (p.height() - side) / 2);
    let b = p.block(x, y, side, side);
    Plane::from_samples(side, side, p.bitdepth(), b.data.iter().map(|&v| v as u16).collect()).expect("crop fits")
}

fn criterion_1(t: &Trained) -> Outcome {
    let natural = load_pgm_dir(data_dir()).map_err(|e| e.to_string())?;
    let mut corpus: Vec<(String, Plane)> = natural.iter().map(|(n, p)| (n.clone(), center_crop(p, 64))).collect();
    corpus.extend(synthetic_set(20 - corpus.len().min(12), 64, 64, 500));
    corpus.truncate(20);
    let start = Instant::now();
    let mut runs = 0;
    let mut nn_blocks = 0;
    for (name, img) in &corpus {
        for scheme in SignalingScheme::ALL {
            for qp in TRAINING_QPS {
                let cfg = CodecConfig::new(qp, scheme);
                let enc = encode_image(img, &cfg, Some(&t.models), &t.bank).map_err(|e| e.to_string())?;
                let dec = decode_image(&enc.bitstream, Some(&t.models), &t.bank).map_err(|e| format!("{name}: {e}"))?;
                if dec.samples() != enc.recon.samples() {
                    return Err(format!("{name} {scheme} qp {qp}: decoder differs from encoder"));
                }
                nn_blocks += enc.stats.nn_blocks;
                runs += 1;
            }
        }
    }
    let small = start.elapsed();
    let big = synthetic(SyntheticKind::Texture, 512, 512, 77);
    let t0 = Instant::now();
    let enc = encode_image(
        &big,
        &CodecConfig::new(32, SignalingScheme::Prediction),
        Some(&t.models),
        &t.bank,
    )
    .map_err(|e| e.to_string())?;
    let enc_time = t0.elapsed();
    let t1 = Instant::now();
    let dec = decode_image(&enc.bitstream, Some(&t.models), &t.bank).map_err(|e| e.to_string())?;
    let dec_time = t1.elapsed();
    ensure(
        dec == enc.recon && nn_blocks > 0 && enc_time + dec_time < Duration::from_secs(600),
        format!(
            "{runs} encodes of {} pictures (4 schemes x 4 QPs) decode bit-exactly in {:.0}s, {nn_blocks} NN blocks; \
             512x512 encode {:.1}s, decode {:.1}s",
            corpus.len(),
            small.as_secs_f64(),
            enc_time.as_secs_f64(),
            dec_time.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 9

fn criterion_9(t: &Trained) -> Outcome {
    let pics = synthetic_set(3, 48, 48, 9);
    let run_training = || -> Result<Artifacts, String> {
        let bank = natural_bank()?;
        let init = ModelSet32::init(5);
        let mut sets = collect_dataset(&pics, &CollectConfig::new(vec![NetSize::new(4, 4)], 4), &bank, &init)
            .map_err(|e| e.to_string())?;
        let data = sets[0].to_bytes().map_err(|e| e.to_string())?;
        let mut net = init.get(NetSize::new(4, 4)).clone();
        let cfg = PipelineConfig {
            pretrain_iterations: 50,
            joint: TrainConfig {
                iterations: 100,
                batch_size: 16,
                eval_every: 0,
                seed: 6,
                ..Default::default()
            },
        };
        train_two_phase(&mut net, &mut sets[0], None, &bank, &cfg, |_, _| {}).map_err(|e| e.to_string())?;
        Ok((bank.to_bytes(), data, net.to_bytes()))
    };
    let first = run_training()?;
    let second = run_training()?;

    let run_codec = || -> Result<(Vec<Vec<u8>>, String), String> {
        let streams = SignalingScheme::ALL
            .iter()
            .map(|&s| {
                encode_image(
                    &t.split.heldout[0].1,
                    &CodecConfig::new(32, s),
                    Some(&t.models),
                    &t.bank,
                )
                .map(|e| e.bitstream)
                .map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, _>>()?;
        let small: Vec<(String, Plane)> = pics.iter().map(|(n, p)| (n.clone(), p.clone())).take(2).collect();
        let schemes = [SignalingScheme::Default, SignalingScheme::Prediction];
        let report = run_experiment(
            &small,
            &schemes,
            &TRAINING_QPS,
            &CodecConfig::new(22, schemes[0]),
            Some(&t.models),
            &t.bank,
            |_| {},
        )
        .map_err(|e| e.to_string())?;
        Ok((streams, report.to_csv_string().map_err(|e| e.to_string())?))
    };
    let (s1, c1) = run_codec()?;
    let (s2, c2) = run_codec()?;
    let same = [
        first.0 == second.0,
        first.1 == second.1,
        first.2 == second.2,
        s1 == s2,
        c1 == c2,
    ];
    ensure(
        same.iter().all(|&b| b),
        format!(
            "identical across two runs: bank {}, dataset {} ({} bytes), weights {} ({} bytes), bitstreams {}, CSV {} ({} bytes)",
            same[0],
            same[1],
            first.1.len(),
            same[2],
            first.2.len(),
            same[3],
            same[4],
            c1.len()
        ),
    )
}

fn main() {
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let timed = |n: u8, name: &'static str, f: &mut dyn FnMut() -> Outcome, out: &mut Vec<(u8, &str, Outcome)>| {
        let start = Instant::now();
        eprintln!("criterion {n}: {name} ...");
        let r = guarded(f);
        eprintln!("criterion {n}: done in {:.1}s", start.elapsed().as_secs_f64());
        out.push((n, name, r));
    };
    timed(2, "numerical transforms", &mut criterion_2, &mut results);
    timed(3, "gradient suite", &mut criterion_3, &mut results);
    timed(6, "signaling tables", &mut criterion_6, &mut results);
    timed(7, "entropy codecs", &mut criterion_7, &mut results);
    timed(8, "BD-rate routine", &mut criterion_8, &mut results);

    let start = Instant::now();
    eprintln!("criterion 5: desk-scale training ...");
    let trained = panic::catch_unwind(desk_training).unwrap_or_else(|_| Err("training panicked".into()));
    eprintln!("criterion 5: done in {:.1}s", start.elapsed().as_secs_f64());
    match &trained {
        Ok(t) => {
            let d = t.detail.join(" | ");
            results.push((5, "learned selection efficacy", if t.pass { Ok(d) } else { Err(d) }));
            timed(4, "oracle dominance", &mut || criterion_4(t), &mut results);
            timed(1, "bit-exact round trip", &mut || criterion_1(t), &mut results);
            timed(9, "determinism", &mut || criterion_9(t), &mut results);
        }
        Err(e) => {
            for (n, name) in [
                (5, "learned selection efficacy"),
                (4, "oracle dominance"),
                (1, "bit-exact round trip"),
                (9, "determinism"),
            ] {
                results.push((n, name, Err(format!("training failed: {e}"))));
            }
        }
    }

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(d) => println!("criterion {n} PASS {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n} FAIL {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
