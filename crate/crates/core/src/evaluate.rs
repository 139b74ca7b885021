//! Quality and rate metrics and the experiment driver behind `eval`.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::codec::{decode_image, encode_image, CodecConfig, CodecError};
use crate::entropy::SyntaxElement;
use crate::plane::Plane;
use crate::predictor::ModelSet;
use crate::scalar::Scalar;
use crate::signaling::SignalingScheme;
use crate::transforms::TransformBank;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("planes differ in size or bit depth")]
    PlaneMismatch,
    #[error("BD-rate needs at least 4 points with finite PSNR and positive rate per curve")]
    BadCurve,
    #[error("PSNR ranges do not overlap")]
    NonOverlapping,
    #[error("decoder output differs from the encoder reconstruction for {image} ({scheme}, QP {qp})")]
    Mismatch {
        image: String,
        scheme: SignalingScheme,
        qp: u8,
    },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` for identical planes.
pub fn psnr(a: &Plane, b: &Plane) -> Result<f64, EvalError> {
    if a.width() != b.width() || a.height() != b.height() || a.bitdepth() != b.bitdepth() {
        return Err(EvalError::PlaneMismatch);
    }
    let sse: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse / a.samples().len() as f64;
    let peak = a.max_value() as f64;
    Ok(10.0 * (peak * peak / mse).log10())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdPoint {
    /// Bits (any consistent unit).
    pub rate: f64,
    pub psnr: f64,
}

/// Cubic `c0 + c1 t + c2 t^2 + c3 t^3` in the normalized variable
/// `t = (x - center) / scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cubic {
    pub center: f64,
    pub scale: f64,
    pub coeffs: [f64; 4],
}

impl Cubic {
    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.scale;
        let c = &self.coeffs;
        c[0] + t * (c[1] + t * (c[2] + t * c[3]))
    }

    /// Integral over `[lo, hi]` in the original variable.
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        let c = &self.coeffs;
        let prim = |x: f64| {
            let t = (x - self.center) / self.scale;
            t * (c[0] + t * (c[1] / 2.0 + t * (c[2] / 3.0 + t * c[3] / 4.0)))
        };
        self.scale * (prim(hi) - prim(lo))
    }
}

/// Least-squares cubic through `(x, y)`. The abscissae are centered and
/// scaled first; raw PSNR values make the Vandermonde system too
/// ill-conditioned for double precision.
pub fn fit_cubic(x: &[f64], y: &[f64]) -> Cubic {
    let center = x.iter().sum::<f64>() / x.len().max(1) as f64;
    let half = x.iter().map(|v| (v - center).abs()).fold(0.0, f64::max);
    let scale = if half > 0.0 { half } else { 1.0 };
    let v = DMatrix::from_fn(x.len(), 4, |r, c| ((x[r] - center) / scale).powi(c as i32));
    let rhs = DVector::from_column_slice(y);
    let sol = v
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .expect("SVD was computed with U and V");
    Cubic {
        center,
        scale,
        coeffs: [sol[0], sol[1], sol[2], sol[3]],
    }
}

fn check_curve(points: &[RdPoint]) -> Result<(), EvalError> {
    if points.len() < 4
        || points
            .iter()
            .any(|p| !p.psnr.is_finite() || p.rate.is_nan() || p.rate <= 0.0)
    {
        return Err(EvalError::BadCurve);
    }
    Ok(())
}

/// Average rate difference of `test` against `anchor` at equal PSNR, in
/// percent (negative is a saving). Cubic fit of log-rate over PSNR,
/// integrated over the shared PSNR interval.
pub fn bd_rate(anchor: &[RdPoint], test: &[RdPoint]) -> Result<f64, EvalError> {
    check_curve(anchor)?;
    check_curve(test)?;
    let range = |p: &[RdPoint]| {
        p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
            (lo.min(q.psnr), hi.max(q.psnr))
        })
    };
    let (a_lo, a_hi) = range(anchor);
    let (t_lo, t_hi) = range(test);
    let (lo, hi) = (a_lo.max(t_lo), a_hi.min(t_hi));
    if hi <= lo {
        return Err(EvalError::NonOverlapping);
    }
    let fit = |p: &[RdPoint]| {
        let x: Vec<f64> = p.iter().map(|q| q.psnr).collect();
        let y: Vec<f64> = p.iter().map(|q| q.rate.ln()).collect();
        fit_cubic(&x, &y)
    };
    let avg = (fit(test).integral(lo, hi) - fit(anchor).integral(lo, hi)) / (hi - lo);
    Ok((avg.exp() - 1.0) * 100.0)
}

/// One coded picture of an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub image: String,
    pub scheme: SignalingScheme,
    pub qp: u8,
    pub width: usize,
    pub height: usize,
    pub bits: u64,
    pub psnr: f64,
    pub rd_cost: f64,
    pub blocks: usize,
    pub nn_blocks: usize,
    pub lfnst_blocks: usize,
    pub nn_lfnst_blocks: usize,
    /// NN-LFNST blocks whose coded pair equals the network's choice.
    pub pair_hits: usize,
    /// Fraction of the picture area predicted by the NN mode.
    pub nn_area: f64,
    /// Bits per syntax element, in [`SyntaxElement::ALL`] order.
    pub element_bits: Vec<u64>,
}

impl ReportRow {
    pub fn bpp(&self) -> f64 {
        self.bits as f64 / (self.width * self.height) as f64
    }

    pub fn lfnst_usage(&self) -> f64 {
        ratio(self.lfnst_blocks, self.blocks)
    }

    /// Fraction of NN-LFNST blocks with a zero remainder (Prediction scheme
    /// only).
    pub fn remainder_hit_rate(&self) -> Option<f64> {
        (self.scheme == SignalingScheme::Prediction && self.nn_lfnst_blocks > 0)
            .then(|| ratio(self.pair_hits, self.nn_lfnst_blocks))
    }

    pub fn element(&self, e: SyntaxElement) -> u64 {
        let i = SyntaxElement::ALL.iter().position(|&x| x == e).expect("listed element");
        self.element_bits[i]
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

fn fmt_f(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

impl ExperimentReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "image",
            "scheme",
            "qp",
            "width",
            "height",
            "bits",
            "bpp",
            "psnr",
            "rd_cost",
            "blocks",
            "nn_blocks",
            "nn_area",
            "lfnst_blocks",
            "lfnst_usage",
            "nn_lfnst_blocks",
            "remainder_hit_rate",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(SyntaxElement::ALL.iter().map(|e| format!("bits_{}", e.name())));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.image.clone(),
                r.scheme.name().to_string(),
                r.qp.to_string(),
                r.width.to_string(),
                r.height.to_string(),
                r.bits.to_string(),
                fmt_f(r.bpp()),
                fmt_f(r.psnr),
                format!("{:.3}", r.rd_cost),
                r.blocks.to_string(),
                r.nn_blocks.to_string(),
                fmt_f(r.nn_area),
                r.lfnst_blocks.to_string(),
                fmt_f(r.lfnst_usage()),
                r.nn_lfnst_blocks.to_string(),
                r.remainder_hit_rate().map(fmt_f).unwrap_or_default(),
            ];
            rec.extend(r.element_bits.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, EvalError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }

    /// RD points of one image under one scheme, ordered by QP.
    pub fn curve(&self, image: &str, scheme: SignalingScheme) -> Vec<RdPoint> {
        let mut rows: Vec<&ReportRow> = self
            .rows
            .iter()
            .filter(|r| r.image == image && r.scheme == scheme)
            .collect();
        rows.sort_by_key(|r| r.qp);
        rows.iter()
            .map(|r| RdPoint {
                rate: r.bits as f64,
                psnr: r.psnr,
            })
            .collect()
    }

    /// Plain-text table: per scheme totals, usage rates and the mean
    /// BD-rate against `anchor` over images with complete curves.
    pub fn summary(&self, anchor: SignalingScheme) -> String {
        let mut images: Vec<&str> = self.rows.iter().map(|r| r.image.as_str()).collect();
        images.sort_unstable();
        images.dedup();
        let mut schemes: Vec<SignalingScheme> = Vec::new();
        for r in &self.rows {
            if !schemes.contains(&r.scheme) {
                schemes.push(r.scheme);
            }
        }
        let mut s = String::new();
        let _ = writeln!(s, "BD-rate: cubic fit of log-rate over PSNR, anchor {anchor}");
        let _ = writeln!(
            s,
            "{:<11} {:>12} {:>9} {:>8} {:>8} {:>10} {:>9} {:>10}",
            "scheme", "bits", "psnr", "nn_area", "lfnst", "pair_bits", "hit_rate", "bd_rate%"
        );
        for &scheme in &schemes {
            let rows: Vec<&ReportRow> = self.rows.iter().filter(|r| r.scheme == scheme).collect();
            let n = rows.len().max(1) as f64;
            let bits: u64 = rows.iter().map(|r| r.bits).sum();
            let finite: Vec<f64> = rows.iter().map(|r| r.psnr).filter(|p| p.is_finite()).collect();
            let psnr = finite.iter().sum::<f64>() / finite.len().max(1) as f64;
            let nn_area = rows.iter().map(|r| r.nn_area).sum::<f64>() / n;
            let lfnst = rows.iter().map(|r| r.lfnst_usage()).sum::<f64>() / n;
            let pair_bits: u64 = rows.iter().map(|r| r.element(SyntaxElement::PairIdx)).sum();
            let nn_lfnst: usize = rows.iter().map(|r| r.nn_lfnst_blocks).sum();
            let hits: usize = rows.iter().map(|r| r.pair_hits).sum();
            let hit_rate = if scheme == SignalingScheme::Prediction && nn_lfnst > 0 {
                format!("{:.4}", ratio(hits, nn_lfnst))
            } else {
                "-".into()
            };
            let bds: Vec<f64> = images
                .iter()
                .filter_map(|img| bd_rate(&self.curve(img, anchor), &self.curve(img, scheme)).ok())
                .collect();
            let bd = if bds.is_empty() {
                "-".into()
            } else {
                format!("{:.3}", bds.iter().sum::<f64>() / bds.len() as f64)
            };
            let _ = writeln!(
                s,
                "{:<11} {:>12} {:>9.3} {:>8.4} {:>8.4} {:>10} {:>9} {:>10}",
                scheme.name(),
                bits,
                psnr,
                nn_area,
                lfnst,
                pair_bits,
                hit_rate,
                bd
            );
        }
        s
    }
}

/// Codes every image under every scheme and QP, checks that the decoder
/// reproduces the encoder's reconstruction, and collects the statistics.
/// `base` supplies everything except QP and scheme.
pub fn run_experiment<T: Scalar>(
    corpus: &[(String, Plane)],
    schemes: &[SignalingScheme],
    qps: &[u8],
    base: &CodecConfig,
    models: Option<&ModelSet<T>>,
    bank: &TransformBank,
    mut progress: impl FnMut(&ReportRow),
) -> Result<ExperimentReport, EvalError> {
    let mut report = ExperimentReport::default();
    for (name, img) in corpus {
        for &scheme in schemes {
            for &qp in qps {
                let cfg = CodecConfig {
                    qp,
                    scheme,
                    ..base.clone()
                };
                let out = encode_image(img, &cfg, models, bank)?;
                let decoded = decode_image(&out.bitstream, models, bank)?;
                if decoded != out.recon {
                    return Err(EvalError::Mismatch {
                        image: name.clone(),
                        scheme,
                        qp,
                    });
                }
                let row = ReportRow {
                    image: name.clone(),
                    scheme,
                    qp,
                    width: img.width(),
                    height: img.height(),
                    bits: out.bitstream.len() as u64 * 8,
                    psnr: psnr(img, &out.recon)?,
                    rd_cost: out.stats.rd_cost,
                    blocks: out.stats.blocks,
                    nn_blocks: out.stats.nn_blocks,
                    lfnst_blocks: out.stats.lfnst_blocks,
                    nn_lfnst_blocks: out.stats.nn_lfnst_blocks,
                    pair_hits: out.stats.pair_hits,
                    nn_area: out.stats.nn_area,
                    element_bits: SyntaxElement::ALL.iter().map(|&e| out.accounting.get(e)).collect(),
                };
                progress(&row);
                report.rows.push(row);
            }
        }
    }
    Ok(report)
}

/// Per-scheme totals of a [`selection_study`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SchemeTotals {
    pub blocks: usize,
    pub rd_cost: f64,
    /// Blocks coded with lfnstIdx != 0.
    pub lfnst_blocks: usize,
    pub pair_bits: u64,
    /// LFNST blocks whose pair equals the network's choice.
    pub pair_hits: usize,
}

impl SchemeTotals {
    pub fn mean_cost(&self) -> f64 {
        self.rd_cost / self.blocks.max(1) as f64
    }

    pub fn mean_pair_bits(&self) -> f64 {
        self.pair_bits as f64 / self.lfnst_blocks.max(1) as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelectionStudy {
    /// Indexed like [`SignalingScheme::ALL`].
    pub schemes: [SchemeTotals; 4],
    /// Blocks where the Default choice used lfnstIdx != 0.
    pub default_lfnst_blocks: usize,
    /// Of those, blocks where zero-cost oracle pairs did not beat or match
    /// Default.
    pub oracle_violations: usize,
}

impl SelectionStudy {
    pub fn scheme(&self, s: SignalingScheme) -> &SchemeTotals {
        &self.schemes[SignalingScheme::ALL
            .iter()
            .position(|&x| x == s)
            .expect("listed scheme")]
    }
}

/// Block-level comparison of the pair signaling schemes with the NN mode
/// alone. Each picture is coded once with the classic modes at `qp`; the
/// blocks of every size in `sizes` at every `step` position are then
/// RD-searched against that reconstruction under each scheme, and under
/// zero-cost oracle pair selection.
pub fn selection_study<T: Scalar>(
    images: &[(String, Plane)],
    sizes: &[(usize, usize)],
    qp_of: impl Fn(usize) -> u8,
    step: usize,
    models: &ModelSet<T>,
    bank: &TransformBank,
) -> Result<SelectionStudy, EvalError> {
    use crate::codec::{BlockCoder, PairSelection};
    use crate::plane::Frame;
    use crate::signaling::pair_bits;

    let mut study = SelectionStudy::default();
    for (i, (_, img)) in images.iter().enumerate() {
        let qp = qp_of(i);
        let mut classic = CodecConfig::new(qp, SignalingScheme::Default);
        classic.nn_enabled = false;
        let frame = Frame::fully_decoded(encode_image::<T>(img, &classic, None, bank)?.recon);
        let cfgs: Vec<CodecConfig> = SignalingScheme::ALL
            .iter()
            .map(|&s| {
                let mut c = CodecConfig::new(qp, s);
                c.classic_modes.clear();
                c
            })
            .collect();
        let mut oracle_cfg = CodecConfig::new(qp, SignalingScheme::Inference);
        oracle_cfg.classic_modes.clear();
        oracle_cfg.pair_selection = PairSelection::Oracle;
        let coders = cfgs
            .iter()
            .map(|c| BlockCoder::new(c, Some(models), bank, img.bitdepth()))
            .collect::<Result<Vec<_>, _>>()?;
        let oracle = BlockCoder::new(&oracle_cfg, Some(models), bank, img.bitdepth())?;
        for &(h, w) in sizes {
            if img.height() < h || img.width() < w {
                continue;
            }
            for y in (0..=img.height() - h).step_by(step.max(1)) {
                for x in (0..=img.width() - w).step_by(step.max(1)) {
                    let orig = img.block(x, y, h, w);
                    let mut default_result = None;
                    for ((coder, &scheme), totals) in coders.iter().zip(&SignalingScheme::ALL).zip(&mut study.schemes) {
                        let r = coder.encode_block(&frame, &orig, x, y);
                        totals.blocks += 1;
                        totals.rd_cost += r.cost;
                        let d = &r.decision;
                        if d.lfnst != 0 {
                            totals.lfnst_blocks += 1;
                            totals.pair_bits += pair_bits(scheme, d.pair, d.predicted_pair) as u64;
                            totals.pair_hits += (d.pair == d.predicted_pair) as usize;
                        }
                        if scheme == SignalingScheme::Default {
                            default_result = Some(r);
                        }
                    }
                    let def = default_result.expect("Default is one of the schemes");
                    if def.decision.lfnst != 0 {
                        study.default_lfnst_blocks += 1;
                        let o = oracle.encode_block(&frame, &orig, x, y);
                        if o.cost > def.cost {
                            study.oracle_violations += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(study)
}
