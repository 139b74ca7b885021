//! Test and training pictures: seeded synthetic generators plus loading of
//! a directory of PGM files.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::plane::{ImageError, Plane};

/// Kinds of synthetic content.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Sum of sinusoids with 1/f amplitudes.
    Texture,
    /// Bands with soft straight edges at random angles over a flat background.
    Edges,
    /// Oriented gratings in Voronoi cells.
    Gratings,
    /// Filled discs and rectangles over a gradient.
    Shapes,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 4] = [
        SyntheticKind::Texture,
        SyntheticKind::Edges,
        SyntheticKind::Gratings,
        SyntheticKind::Shapes,
    ];
}

fn to_plane(width: usize, height: usize, values: &[f64], noise: f64, rng: &mut ChaCha8Rng) -> Plane {
    let data = values
        .iter()
        .map(|&v| {
            let n = if noise > 0.0 { rng.gen_range(-noise..noise) } else { 0.0 };
            (v + n).round().clamp(0.0, 255.0) as u16
        })
        .collect();
    Plane::from_samples(width, height, 8, data).expect("sizes match")
}

/// 8-bit synthetic picture; identical for identical arguments.
pub fn synthetic(kind: SyntheticKind, width: usize, height: usize, seed: u64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (kind as u64) << 56);
    let mut v = vec![0.0; width * height];
    match kind {
        SyntheticKind::Texture => {
            let mut waves = Vec::new();
            for _ in 0..24 {
                let f: f64 = rng.gen_range(0.01..0.35);
                let th: f64 = rng.gen_range(0.0..PI);
                let ph: f64 = rng.gen_range(0.0..2.0 * PI);
                waves.push((f * th.cos(), f * th.sin(), ph, 18.0 / (f * 40.0)));
            }
            for y in 0..height {
                for x in 0..width {
                    let s: f64 = waves
                        .iter()
                        .map(|&(fx, fy, ph, a)| a * (2.0 * PI * (fx * x as f64 + fy * y as f64) + ph).sin())
                        .sum();
                    v[y * width + x] = 128.0 + s;
                }
            }
        }
        SyntheticKind::Edges => {
            v.fill(rng.gen_range(40.0..215.0));
            for _ in 0..rng.gen_range(6..12) {
                let th: f64 = rng.gen_range(0.0..2.0 * PI);
                let (nx, ny) = (th.cos(), th.sin());
                let px = rng.gen_range(0.0..width as f64);
                let py = rng.gen_range(0.0..height as f64);
                let level = rng.gen_range(20.0..235.0);
                let soft = rng.gen_range(0.3..2.0);
                let band = rng.gen_range(3.0..(width.max(height) as f64 / 3.0).max(4.0));
                for y in 0..height {
                    for x in 0..width {
                        let d = (x as f64 - px) * nx + (y as f64 - py) * ny;
                        let a = 1.0 / (1.0 + (-d / soft).exp()) - 1.0 / (1.0 + (-(d - band) / soft).exp());
                        let i = y * width + x;
                        v[i] = v[i] * (1.0 - a) + level * a;
                    }
                }
            }
        }
        SyntheticKind::Gratings => {
            let cells: Vec<_> = (0..rng.gen_range(5..12))
                .map(|_| {
                    (
                        rng.gen_range(0.0..width as f64),
                        rng.gen_range(0.0..height as f64),
                        rng.gen_range(0.0..PI),
                        rng.gen_range(3.0..20.0),
                        rng.gen_range(20.0..90.0),
                        rng.gen_range(60.0..200.0),
                    )
                })
                .collect();
            for y in 0..height {
                for x in 0..width {
                    let (xf, yf) = (x as f64, y as f64);
                    let c = cells
                        .iter()
                        .min_by(|a, b| {
                            let da = (a.0 - xf).powi(2) + (a.1 - yf).powi(2);
                            let db = (b.0 - xf).powi(2) + (b.1 - yf).powi(2);
                            da.total_cmp(&db)
                        })
                        .expect("at least one cell");
                    let t = xf * c.2.cos() + yf * c.2.sin();
                    v[y * width + x] = c.5 + c.4 * (2.0 * PI * t / c.3).sin();
                }
            }
        }
        SyntheticKind::Shapes => {
            let (g0, gx, gy) = (
                rng.gen_range(60.0..190.0),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            );
            for y in 0..height {
                for x in 0..width {
                    v[y * width + x] =
                        g0 + gx * (x as f64 - width as f64 / 2.0) + gy * (y as f64 - height as f64 / 2.0);
                }
            }
            for _ in 0..rng.gen_range(6..14) {
                let cx = rng.gen_range(0.0..width as f64);
                let cy = rng.gen_range(0.0..height as f64);
                let r = rng.gen_range(2.0..(width.min(height) as f64 / 3.0).max(3.0));
                let level = rng.gen_range(0.0..255.0);
                let disc = rng.gen_bool(0.5);
                for y in 0..height {
                    for x in 0..width {
                        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                        let inside = if disc {
                            dx * dx + dy * dy <= r * r
                        } else {
                            dx.abs() <= r && dy.abs() <= r * 0.6
                        };
                        if inside {
                            v[y * width + x] = level;
                        }
                    }
                }
            }
        }
    }
    let noise = rng.gen_range(0.0..4.0);
    to_plane(width, height, &v, noise, &mut rng)
}

/// `count` synthetic pictures cycling through all kinds.
pub fn synthetic_set(count: usize, width: usize, height: usize, seed: u64) -> Vec<(String, Plane)> {
    (0..count)
        .map(|i| {
            let kind = SyntheticKind::ALL[i % SyntheticKind::ALL.len()];
            let name = format!("synth-{kind:?}-{i}").to_lowercase();
            (name, synthetic(kind, width, height, seed.wrapping_add(i as u64)))
        })
        .collect()
}

/// All `*.pgm` files of a directory, sorted by file name.
pub fn load_pgm_dir(dir: &Path) -> Result<Vec<(String, Plane)>, ImageError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let plane = Plane::read_pgm(fs::File::open(&p)?)?;
            Ok((name, plane))
        })
        .collect()
}

/// Top-left crop to multiples of 4 no larger than `max` on each side.
pub fn crop(plane: &Plane, max_w: usize, max_h: usize) -> Plane {
    let w = plane.width().min(max_w) / 4 * 4;
    let h = plane.height().min(max_h) / 4 * 4;
    let b = plane.block(0, 0, h, w);
    Plane::from_samples(w, h, plane.bitdepth(), b.data.iter().map(|&v| v as u16).collect()).expect("crop fits")
}

/// The eight flips and rotations of a picture.
pub fn dihedral(plane: &Plane, k: u8) -> Plane {
    let (w, h) = (plane.width(), plane.height());
    let swap = k & 4 != 0;
    let (ow, oh) = if swap { (h, w) } else { (w, h) };
    let mut data = vec![0u16; w * h];
    for y in 0..oh {
        for x in 0..ow {
            let (mut sx, mut sy) = if swap { (y, x) } else { (x, y) };
            if k & 1 != 0 {
                sx = w - 1 - sx;
            }
            if k & 2 != 0 {
                sy = h - 1 - sy;
            }
            data[y * ow + x] = plane.get(sx, sy);
        }
    }
    Plane::from_samples(ow, oh, plane.bitdepth(), data).expect("same sample count")
}

/// Dihedral variants used to augment training pictures.
pub const AUGMENT_VARIANTS: [u8; 4] = [0, 3, 5, 6];

/// Training and held-out pictures of one experiment.
#[derive(Clone, Debug, Default)]
pub struct CorpusSplit {
    pub train: Vec<(String, Plane)>,
    pub heldout: Vec<(String, Plane)>,
}

/// Pictures named in `heldout` are kept whole; the others enter training in
/// each of the [`AUGMENT_VARIANTS`]. Synthetic pictures are appended to both
/// sides with disjoint seeds.
pub fn split_corpus(
    pictures: &[(String, Plane)],
    heldout: &[&str],
    synthetic_train: usize,
    synthetic_heldout: usize,
    synthetic_side: usize,
    seed: u64,
) -> CorpusSplit {
    let mut split = CorpusSplit::default();
    for (name, p) in pictures {
        if heldout.contains(&name.as_str()) {
            split.heldout.push((name.clone(), p.clone()));
        } else {
            for k in AUGMENT_VARIANTS {
                split.train.push((format!("{name}-d{k}"), dihedral(p, k)));
            }
        }
    }
    let side = synthetic_side / 4 * 4;
    split.train.extend(synthetic_set(synthetic_train, side, side, seed));
    let mut held = synthetic_set(synthetic_heldout, side, side, seed.wrapping_add(1 << 32));
    for (name, _) in &mut held {
        name.push_str("-h");
    }
    split.heldout.extend(held);
    split
}
