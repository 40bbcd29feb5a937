//! Random parameter sets and (grainy image, parameters) training pairs.

mod clean;
mod manifest;
mod sampler;

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use clean::{synthetic_clean_frame, CleanStyle};
pub use manifest::{CropRect, DatasetManifest, ManifestEntry};
pub use sampler::{component_violations, sample_component, sample_params, SamplerConstraints};

use crate::fgc_sei::{encode_binary, CodecError, FilmGrainParams};
use crate::media_io::{read_pnm, write_pnm, Frame, MediaError, Pnm};
use crate::seed;
use crate::synthesis::{synthesize_frame, SynthesisError};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error("{0}: no .pgm or .ppm frames found")]
    EmptyCleanDir(PathBuf),
    #[error("{path}: crop {crop}x{crop} larger than frame {width}x{height}")]
    CropTooLarge {
        path: PathBuf,
        crop: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid dataset configuration: {0}")]
    Config(String),
    #[error("{path}:{line}: {detail}")]
    Manifest { path: PathBuf, line: usize, detail: String },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `n` parameter sets drawn from one stream seeded by `seed`.
pub fn sample_param_sets(n: usize, constraints: &SamplerConstraints, seed: u64) -> Vec<FilmGrainParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[seed::tag("params")]));
    (0..n).map(|_| sample_params(&mut rng, constraints)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetConfig {
    pub n_param_sets: usize,
    pub crops_per_image: usize,
    pub crop_size: usize,
    pub seed: u64,
    pub constraints: SamplerConstraints,
}

impl DatasetConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            n_param_sets: 300,
            crops_per_image: 1,
            crop_size: 256,
            seed,
            constraints: SamplerConstraints::default(),
        }
    }
}

/// Clean frames of a directory in file-name order.
pub fn list_clean_frames(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("pgm") | Some("ppm")) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(DatasetError::EmptyCleanDir(dir.to_path_buf()));
    }
    Ok(out)
}

pub fn load_frame(path: &Path) -> Result<(Frame, bool), DatasetError> {
    Ok(match read_pnm(path)? {
        Pnm::Gray(p) => (Frame::from_luma(p), false),
        Pnm::Color(f) => (f, true),
    })
}

/// Synthesizes grain on random crops of every clean frame.
///
/// Entry `i` uses crop `i % crops_per_image` of frame `i / crops_per_image`,
/// a parameter set chosen by hashing `(seed, i)`, and synthesis seed
/// `derive(seed, "entry", i)`. Grey inputs give PGM outputs (luma grain only),
/// colour inputs give PPM outputs.
pub fn build_dataset(clean_dir: &Path, out_dir: &Path, config: &DatasetConfig) -> Result<DatasetManifest, DatasetError> {
    config.constraints.check().map_err(DatasetError::Config)?;
    if config.n_param_sets == 0 || config.crops_per_image == 0 || config.crop_size == 0 || config.crop_size % 2 != 0 {
        return Err(DatasetError::Config(
            "parameter sets, crops per image and an even crop size must be positive".into(),
        ));
    }
    let frames = list_clean_frames(clean_dir)?;
    for sub in ["grainy", "params"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let param_sets = sample_param_sets(config.n_param_sets, &config.constraints, config.seed);
    let n_entries = frames.len() * config.crops_per_image;

    let entries = (0..n_entries)
        .into_par_iter()
        .map(|i| -> Result<ManifestEntry, DatasetError> {
            let clean_path = &frames[i / config.crops_per_image];
            let (frame, colour) = load_frame(clean_path)?;
            let (w, h) = (frame.width(), frame.height());
            let c = config.crop_size;
            if c > w || c > h {
                return Err(DatasetError::CropTooLarge {
                    path: clean_path.clone(),
                    crop: c,
                    width: w,
                    height: h,
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &[seed::tag("crop"), i as u64]));
            let x = rng.gen_range(0..=(w - c) / 2) * 2;
            let y = rng.gen_range(0..=(h - c) / 2) * 2;
            let crop = frame.crop(x, y, c, c)?;
            let param_set = (seed::derive(config.seed, &[seed::tag("pair"), i as u64]) % config.n_param_sets as u64) as usize;
            let params = &param_sets[param_set];
            let entry_seed = seed::derive(config.seed, &[seed::tag("entry"), i as u64]);
            let grainy = synthesize_frame(&crop, params, entry_seed)?;

            let grainy_rel = PathBuf::from("grainy").join(format!("{i:06}.{}", if colour { "ppm" } else { "pgm" }));
            let params_rel = PathBuf::from("params").join(format!("{i:06}.fgcs"));
            let image = if colour { Pnm::Color(grainy) } else { Pnm::Gray(grainy.y) };
            write_pnm(&out_dir.join(&grainy_rel), &image)?;
            let ppath = out_dir.join(&params_rel);
            fs::write(&ppath, encode_binary(params)?).map_err(io_err(&ppath))?;
            Ok(ManifestEntry {
                id: i,
                clean: clean_path.clone(),
                grainy: grainy_rel,
                params: params_rel,
                param_set,
                seed: entry_seed,
                crop: CropRect { x, y, width: c, height: c },
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        seed: config.seed,
        constraints: config.constraints.to_string(),
        n_param_sets: config.n_param_sets,
        crops_per_image: config.crops_per_image,
        crop_size: config.crop_size,
        entries,
    };
    manifest.save(&out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}
