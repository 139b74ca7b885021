use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nnlfnst::codec::{decode_image, encode_image, CodecConfig};
use nnlfnst::context::{NetSize, SUPPORTED_NET_SIZES};
use nnlfnst::corpus::{load_pgm_dir, split_corpus, CorpusSplit};
use nnlfnst::evaluate::run_experiment;
use nnlfnst::nn::{Architecture, Network};
use nnlfnst::plane::Plane;
use nnlfnst::predictor::ModelSet;
use nnlfnst::signaling::SignalingScheme;
use nnlfnst::training::{
    collect_bank_samples, collect_contexts, label_dataset, train_two_phase, CollectConfig, Dataset, PipelineConfig,
    TrainConfig, BANK_BLOCK_SIZES,
};
use nnlfnst::transforms::{train_bank, TransformBank};
use nnlfnst::ModelSet32;

#[derive(Parser)]
#[command(
    name = "nnlfnst",
    version,
    about = "Intra codec with a learned predictor and secondary transforms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CorpusArgs {
    /// Directory of 8-bit PGM pictures.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Pictures kept out of training (file stems).
    #[arg(long, value_delimiter = ',')]
    heldout: Vec<String>,
    /// Synthetic pictures added to the training side.
    #[arg(long, default_value_t = 8)]
    synthetic: usize,
    /// Synthetic pictures added to the held-out side.
    #[arg(long, default_value_t = 2)]
    synthetic_heldout: usize,
    /// Side of the synthetic pictures.
    #[arg(long, default_value_t = 256)]
    synthetic_side: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl CorpusArgs {
    fn load(&self) -> Result<CorpusSplit> {
        let pictures = match &self.images {
            Some(dir) => load_pgm_dir(dir).with_context(|| format!("reading {}", dir.display()))?,
            None => Vec::new(),
        };
        let held: Vec<&str> = self.heldout.iter().map(String::as_str).collect();
        let split = split_corpus(
            &pictures,
            &held,
            self.synthetic,
            self.synthetic_heldout,
            self.synthetic_side,
            self.seed,
        );
        if split.train.is_empty() {
            bail!("no training pictures");
        }
        Ok(split)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Learn the secondary transform bank from the training pictures.
    TrainBank {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract contexts and oracle labels; writes one file per network size
    /// and split into the output directory.
    CollectDataset {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        bank: PathBuf,
        /// Models used for labeling; freshly initialized networks otherwise.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Network sizes as HxW, e.g. 4x4,8x8.
        #[arg(long, value_delimiter = ',', default_value = "4x4,8x8")]
        sizes: Vec<String>,
        #[arg(long, default_value_t = 4)]
        step: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one network on a dataset (prediction pretraining, relabeling,
    /// then joint training) and store the full model set.
    TrainNn {
        /// Training dataset; the network size is taken from it.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        heldout: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Start from these models instead of fresh ones.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        pretrain: usize,
        #[arg(long, default_value_t = 20000)]
        iterations: usize,
        #[arg(long, default_value_t = 100)]
        batch: usize,
        #[arg(long, default_value_t = 2e-4)]
        lr: f64,
        #[arg(long, default_value_t = 1000)]
        eval_every: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Only write freshly initialized networks for every size.
        #[arg(long)]
        init_only: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode one PGM picture.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        qp: u8,
        #[arg(long, default_value = "prediction")]
        scheme: SignalingScheme,
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Without models only the classic modes are used.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Search all 67 classic modes.
        #[arg(long)]
        full_search: bool,
        /// Also write the encoder's reconstruction.
        #[arg(long)]
        recon: Option<PathBuf>,
    },
    /// Decode a stream to PGM.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Code every picture under every scheme and QP; writes a CSV and prints
    /// a BD-rate summary.
    Eval {
        #[arg(long)]
        images: Option<PathBuf>,
        /// Synthetic pictures added to the corpus.
        #[arg(long, default_value_t = 0)]
        synthetic: usize,
        #[arg(long, default_value_t = 128)]
        synthetic_side: usize,
        /// Crop every picture to at most this side.
        #[arg(long)]
        max_side: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "22,27,32,37")]
        qp: Vec<u8>,
        #[arg(long, value_delimiter = ',', default_value = "default,explicit,inference,prediction")]
        scheme: Vec<SignalingScheme>,
        #[arg(long, default_value = "default")]
        anchor: SignalingScheme,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_size(s: &str) -> Result<NetSize> {
    let (h, w) = s.split_once('x').context("size must look like 8x16")?;
    let size = NetSize::new(h.trim().parse()?, w.trim().parse()?);
    if !SUPPORTED_NET_SIZES.contains(&size) {
        bail!("no network for {size}");
    }
    Ok(size)
}

fn load_bank(path: Option<&Path>) -> Result<TransformBank> {
    match path {
        Some(p) => {
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Ok(TransformBank::read_from(BufReader::new(f))?)
        }
        None => {
            eprintln!("warning: no --bank given, using the untrained bank");
            Ok(TransformBank::identity_like())
        }
    }
}

fn load_models(dir: Option<&Path>) -> Result<Option<ModelSet32>> {
    dir.map(|d| ModelSet::load_dir(d).with_context(|| format!("loading models from {}", d.display())))
        .transpose()
}

fn read_pgm(path: &Path) -> Result<Plane> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Plane::read_pgm(BufReader::new(f))?)
}

fn write_pgm(plane: &Plane, path: &Path) -> Result<()> {
    plane.write_pgm(BufWriter::new(fs::File::create(path)?))?;
    Ok(())
}

fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    ds.write_to(BufWriter::new(fs::File::create(path)?))?;
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Dataset::read_from(BufReader::new(f))?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::TrainBank { corpus, out } => {
            let split = corpus.load()?;
            let pics: Vec<Plane> = split.train.into_iter().map(|(_, p)| p).collect();
            let samples = collect_bank_samples(&pics, &BANK_BLOCK_SIZES);
            let bank = train_bank(&samples)?;
            bank.write_to(BufWriter::new(fs::File::create(&out)?))?;
            println!("bank {:016x} written to {}", bank.hash(), out.display());
        }
        Command::CollectDataset {
            corpus,
            bank,
            models,
            sizes,
            step,
            out,
        } => {
            let split = corpus.load()?;
            let bank = load_bank(Some(&bank))?;
            let models = load_models(models.as_deref())?.unwrap_or_else(|| ModelSet::init(corpus.seed));
            let mut cfg = CollectConfig::new(sizes.iter().map(|s| parse_size(s)).collect::<Result<_>>()?, corpus.seed);
            cfg.step = step;
            fs::create_dir_all(&out)?;
            for (tag, pics, seed) in [
                ("train", &split.train, corpus.seed),
                ("heldout", &split.heldout, corpus.seed ^ 1),
            ] {
                if pics.is_empty() {
                    continue;
                }
                cfg.seed = seed;
                for mut ds in collect_contexts(pics, &cfg, &bank)? {
                    let net = models.get(ds.size);
                    label_dataset(&mut ds, net, &bank)?;
                    let path = out.join(format!("{tag}-{}.ntd", ds.size));
                    save_dataset(&ds, &path)?;
                    println!(
                        "{}: {} triples, labels {:?}",
                        path.display(),
                        ds.len(),
                        ds.label_histogram()
                    );
                }
            }
        }
        Command::TrainNn {
            dataset,
            heldout,
            bank,
            models,
            pretrain,
            iterations,
            batch,
            lr,
            eval_every,
            seed,
            init_only,
            out,
        } => {
            let mut set = load_models(models.as_deref())?.unwrap_or_else(|| ModelSet::init(seed));
            if !init_only {
                let path = dataset.context("--dataset is required unless --init-only")?;
                let mut train_set = load_dataset(&path)?;
                let mut held = heldout.as_deref().map(load_dataset).transpose()?;
                let bank = load_bank(bank.as_deref())?;
                let mut net = Network::<f32>::init(Architecture::for_size(train_set.size)?, seed);
                let cfg = PipelineConfig {
                    pretrain_iterations: pretrain,
                    joint: TrainConfig {
                        iterations,
                        batch_size: batch,
                        lr,
                        seed,
                        eval_every,
                        ..Default::default()
                    },
                };
                let report = train_two_phase(&mut net, &mut train_set, held.as_mut(), &bank, &cfg, |phase, c| match c
                    .heldout_accuracy
                {
                    Some((a1, a2)) => {
                        println!(
                            "{phase} {:>7} loss {:.4} heldout acc {:.3} {:.3}",
                            c.iteration, c.train_loss, a1, a2
                        )
                    }
                    None => println!("{phase} {:>7} loss {:.4}", c.iteration, c.train_loss),
                })?;
                if let Some((a1, a2)) = report.heldout_accuracy {
                    println!("final heldout accuracy {a1:.4} {a2:.4}");
                }
                set.set(net);
            }
            set.save_dir(&out)?;
            println!("models {:016x} written to {}", set.hash(), out.display());
        }
        Command::Encode {
            input,
            out,
            qp,
            scheme,
            bank,
            models,
            full_search,
            recon,
        } => {
            let plane = read_pgm(&input)?;
            let bank = load_bank(bank.as_deref())?;
            let models = load_models(models.as_deref())?;
            let mut cfg = CodecConfig::new(qp, scheme);
            cfg.nn_enabled = models.is_some();
            if full_search {
                cfg = cfg.with_full_search();
            }
            let enc = encode_image(&plane, &cfg, models.as_ref(), &bank)?;
            fs::write(&out, &enc.bitstream)?;
            if let Some(r) = recon {
                write_pgm(&enc.recon, &r)?;
            }
            let bits = enc.bitstream.len() * 8;
            println!(
                "{}x{} qp {qp} {scheme}: {bits} bits ({:.4} bpp), PSNR {:.2} dB, NN area {:.1}%",
                plane.width(),
                plane.height(),
                bits as f64 / (plane.width() * plane.height()) as f64,
                nnlfnst::evaluate::psnr(&plane, &enc.recon)?,
                enc.stats.nn_area * 100.0,
            );
        }
        Command::Decode {
            input,
            out,
            bank,
            models,
        } => {
            let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let bank = load_bank(bank.as_deref())?;
            let models = load_models(models.as_deref())?;
            let plane = decode_image(&bytes, models.as_ref(), &bank)?;
            write_pgm(&plane, &out)?;
            println!("{}x{} written to {}", plane.width(), plane.height(), out.display());
        }
        Command::Eval {
            images,
            synthetic,
            synthetic_side,
            max_side,
            qp,
            scheme,
            anchor,
            bank,
            models,
            seed,
            out,
        } => {
            let mut corpus = match &images {
                Some(dir) => load_pgm_dir(dir)?,
                None => Vec::new(),
            };
            let side = synthetic_side / 4 * 4;
            corpus.extend(nnlfnst::corpus::synthetic_set(synthetic, side, side, seed));
            if let Some(m) = max_side {
                for (_, p) in &mut corpus {
                    *p = nnlfnst::corpus::crop(p, m, m);
                }
            }
            if corpus.is_empty() {
                bail!("empty corpus");
            }
            let bank = load_bank(bank.as_deref())?;
            let models = load_models(models.as_deref())?;
            let mut base = CodecConfig::new(qp[0], scheme[0]);
            base.nn_enabled = models.is_some();
            let report = run_experiment(&corpus, &scheme, &qp, &base, models.as_ref(), &bank, |r| {
                eprintln!(
                    "{} {} qp {}: {:.4} bpp {:.2} dB",
                    r.image,
                    r.scheme,
                    r.qp,
                    r.bpp(),
                    r.psnr
                )
            })?;
            report.write_csv(BufWriter::new(fs::File::create(&out)?))?;
            print!("{}", report.summary(anchor));
        }
    }
    Ok(())
}
