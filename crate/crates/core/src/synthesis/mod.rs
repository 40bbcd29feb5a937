//! Frequency-filtering film grain synthesis.
//!
//! A grain pattern is a 64×64 Gaussian field low-pass filtered in the DCT
//! domain. The plane is tiled with aligned 64×64 superblocks, each using one
//! of eight symmetries of the pattern (horizontal flip, vertical flip, sign)
//! picked by hashing the seed, component and superblock position. Flips and
//! sign changes keep the DCT support of the pattern, so the grain spectrum is
//! exactly the filtered one. Intensity and interval selection happen per
//! `block_size` block; where adjacent blocks use different grain, the two
//! boundary columns or rows are averaged 50/50 with the neighbour's grain.

mod dct;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use dct::Dct2d;

use crate::fgc_sei::{Component, ComponentModel, FilmGrainParams, IntensityInterval, CUTOFF_RANGE};
use crate::media_io::{Frame, Plane};
use crate::seed;

pub const PATTERN_SIZE: usize = 64;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SynthesisError {
    #[error("cutoff pair ({cutoff_h}, {cutoff_v}) outside {}-{}", CUTOFF_RANGE.0, CUTOFF_RANGE.1)]
    CutoffOutOfRange { cutoff_h: u8, cutoff_v: u8 },
    #[error("no grain pattern for cutoff pair ({0}, {1})")]
    MissingPattern(u8, u8),
    #[error("block size {0} does not divide {PATTERN_SIZE}")]
    BlockSize(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Zero-mean, unit-variance 64×64 grain field, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrainPattern {
    values: Vec<f64>,
}

impl GrainPattern {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * PATTERN_SIZE + x]
    }
}

/// Keeps coefficient (row, col) iff col < 4·cutoff_h, row < 4·cutoff_v and
/// it is not DC.
pub fn in_mask(row: usize, col: usize, cutoff_h: u8, cutoff_v: u8) -> bool {
    (row, col) != (0, 0) && col < 4 * cutoff_h as usize && row < 4 * cutoff_v as usize
}

fn gaussian_field(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Box-Muller, both outputs used
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = std::f64::consts::TAU * u2;
        out.push(r * t.cos());
        out.push(r * t.sin());
    }
    out.truncate(n);
    out
}

pub fn generate_pattern(cutoff_h: u8, cutoff_v: u8, seed: u64) -> Result<GrainPattern, SynthesisError> {
    let range = CUTOFF_RANGE.0..=CUTOFF_RANGE.1;
    if !range.contains(&cutoff_h) || !range.contains(&cutoff_v) {
        return Err(SynthesisError::CutoffOutOfRange { cutoff_h, cutoff_v });
    }
    let n = PATTERN_SIZE;
    let stream = seed::derive(seed, &[seed::tag("pattern"), cutoff_h as u64, cutoff_v as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let field = gaussian_field(&mut rng, n * n);
    let dct = Dct2d::<f64>::new(n);
    let mut coeffs = dct.forward(&field);
    for row in 0..n {
        for col in 0..n {
            if !in_mask(row, col, cutoff_h, cutoff_v) {
                coeffs[row * n + col] = 0.0;
            }
        }
    }
    let mut values = dct.inverse(&coeffs);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    let inv_std = 1.0 / var.sqrt();
    for v in &mut values {
        *v = (*v - mean) * inv_std;
    }
    Ok(GrainPattern { values })
}

/// Patterns keyed by (cutoff_h, cutoff_v).
#[derive(Clone, Debug, PartialEq)]
pub struct GrainPatternDatabase {
    patterns: BTreeMap<(u8, u8), GrainPattern>,
    master_seed: u64,
}

impl GrainPatternDatabase {
    pub fn build(pairs: impl IntoIterator<Item = (u8, u8)>, seed: u64) -> Result<Self, SynthesisError> {
        let mut patterns = BTreeMap::new();
        for (h, v) in pairs {
            if let std::collections::btree_map::Entry::Vacant(e) = patterns.entry((h, v)) {
                e.insert(generate_pattern(h, v, seed)?);
            }
        }
        Ok(Self {
            patterns,
            master_seed: seed,
        })
    }

    pub fn get(&self, cutoff_h: u8, cutoff_v: u8) -> Result<&GrainPattern, SynthesisError> {
        self.patterns
            .get(&(cutoff_h, cutoff_v))
            .ok_or(SynthesisError::MissingPattern(cutoff_h, cutoff_v))
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn keys(&self) -> impl Iterator<Item = (u8, u8)> + '_ {
        self.patterns.keys().copied()
    }
}

/// One pattern per distinct cutoff pair used by any present component.
pub fn build_pattern_db(params: &FilmGrainParams, seed: u64) -> Result<GrainPatternDatabase, SynthesisError> {
    let pairs = params
        .components
        .iter()
        .flatten()
        .flat_map(|m| m.intervals.iter().map(|iv| (iv.cutoff_h, iv.cutoff_v)));
    GrainPatternDatabase::build(pairs, seed)
}

pub fn select_interval(model: &ComponentModel, intensity: u8) -> Option<&IntensityInterval> {
    model.interval_for(intensity)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthesisConfig {
    pub block_size: usize,
    pub seed: u64,
    pub deblock: bool,
}

impl SynthesisConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            block_size: 8,
            seed,
            deblock: true,
        }
    }
}

/// Grain source of one block: pattern plus gain, `None` when no interval matches.
#[derive(Clone, Copy)]
struct Source<'a> {
    pattern: &'a GrainPattern,
    gain: f64,
    key: (u8, u8, u8),
}

impl PartialEq for Source<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

/// Symmetry of one superblock: bit 0 flips x, bit 1 flips y, bit 2 negates.
fn symmetry(seed: u64, component_tag: u64, sb_row: usize, sb_col: usize) -> u8 {
    (seed::derive(seed, &[component_tag, sb_row as u64, sb_col as u64]) >> 61) as u8
}

struct Grid<'a> {
    sources: Vec<Option<Source<'a>>>,
    cols: usize,
    rows: usize,
    block: usize,
    sym: Vec<u8>,
    sb_cols: usize,
}

impl Grid<'_> {
    fn source(&self, br: usize, bc: usize) -> Option<Source<'_>> {
        self.sources[br * self.cols + bc]
    }

    fn raw(&self, src: Option<Source<'_>>, x: usize, y: usize) -> f64 {
        let Some(s) = src else { return 0.0 };
        let sym = self.sym[(y / PATTERN_SIZE) * self.sb_cols + x / PATTERN_SIZE];
        let mut px = x % PATTERN_SIZE;
        let mut py = y % PATTERN_SIZE;
        if sym & 1 != 0 {
            px = PATTERN_SIZE - 1 - px;
        }
        if sym & 2 != 0 {
            py = PATTERN_SIZE - 1 - py;
        }
        let v = s.pattern.at(px, py) * s.gain;
        if sym & 4 != 0 {
            -v
        } else {
            v
        }
    }

    /// Grain of block row `br` at pixel (x, y), with horizontal-edge blending.
    fn horizontal(&self, br: usize, x: usize, y: usize, deblock: bool) -> f64 {
        let bc = x / self.block;
        let own = self.source(br, bc);
        let g = self.raw(own, x, y);
        if !deblock {
            return g;
        }
        let off = x % self.block;
        let neighbour = if off == self.block - 1 && bc + 1 < self.cols {
            Some(bc + 1)
        } else if off == 0 && bc > 0 {
            Some(bc - 1)
        } else {
            None
        };
        match neighbour {
            Some(nc) if self.source(br, nc) != own => 0.5 * g + 0.5 * self.raw(self.source(br, nc), x, y),
            _ => g,
        }
    }

    fn grain(&self, x: usize, y: usize, deblock: bool) -> f64 {
        let br = y / self.block;
        let g = self.horizontal(br, x, y, deblock);
        if !deblock {
            return g;
        }
        let bc = x / self.block;
        let off = y % self.block;
        let neighbour = if off == self.block - 1 && br + 1 < self.rows {
            Some(br + 1)
        } else if off == 0 && br > 0 {
            Some(br - 1)
        } else {
            None
        };
        match neighbour {
            Some(nr) if self.source(nr, bc) != self.source(br, bc) => {
                0.5 * g + 0.5 * self.horizontal(nr, x, y, deblock)
            }
            _ => g,
        }
    }
}

fn round_clip(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Adds grain to one plane. `component_tag` separates the symmetry streams of
/// planes sharing a seed.
pub fn synthesize_plane(
    clean: &Plane,
    model: &ComponentModel,
    log2_scale_factor: u8,
    db: &GrainPatternDatabase,
    config: &SynthesisConfig,
    component_tag: u64,
) -> Result<Plane, SynthesisError> {
    let b = config.block_size;
    if b == 0 || PATTERN_SIZE % b != 0 {
        return Err(SynthesisError::BlockSize(b));
    }
    let (w, h) = (clean.width(), clean.height());
    let cols = w.div_ceil(b);
    let rows = h.div_ceil(b);
    let scale = (-(log2_scale_factor as f64)).exp2();

    let mut sources = Vec::with_capacity(cols * rows);
    for br in 0..rows {
        for bc in 0..cols {
            let (x0, y0) = (bc * b, br * b);
            let (x1, y1) = ((x0 + b).min(w), (y0 + b).min(h));
            let mut sum = 0u64;
            for y in y0..y1 {
                sum += clean.row(y)[x0..x1].iter().map(|&v| v as u64).sum::<u64>();
            }
            let count = ((x1 - x0) * (y1 - y0)) as f64;
            let intensity = round_clip(sum as f64 / count);
            let src = match select_interval(model, intensity) {
                Some(iv) => Some(Source {
                    pattern: db.get(iv.cutoff_h, iv.cutoff_v)?,
                    gain: iv.scaling_factor as f64 * scale,
                    key: (iv.scaling_factor, iv.cutoff_h, iv.cutoff_v),
                }),
                None => None,
            };
            sources.push(src);
        }
    }
    let sb_cols = w.div_ceil(PATTERN_SIZE);
    let sb_rows = h.div_ceil(PATTERN_SIZE);
    let sym = (0..sb_rows * sb_cols)
        .map(|i| symmetry(config.seed, component_tag, i / sb_cols, i % sb_cols))
        .collect();
    let grid = Grid {
        sources,
        cols,
        rows,
        block: b,
        sym,
        sb_cols,
    };

    let mut out = vec![0u8; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let clean_row = clean.row(y);
        for (x, o) in row.iter_mut().enumerate() {
            let g = grid.grain(x, y, config.deblock).round();
            *o = round_clip(clean_row[x] as f64 + g);
        }
    });
    Ok(Plane::from_samples(w, h, out).expect("same dimensions"))
}

/// Component tag mixed into the symmetry stream of each plane.
pub fn component_tag(c: Component) -> u64 {
    seed::tag(&format!("component-{c}"))
}

/// Additive synthesis on every present component; absent ones pass through.
pub fn synthesize_frame(clean: &Frame, params: &FilmGrainParams, seed: u64) -> Result<Frame, SynthesisError> {
    let report = params.validate();
    if !report.is_ok() {
        return Err(SynthesisError::InvalidParams(report.to_string()));
    }
    let db = build_pattern_db(params, seed)?;
    synthesize_frame_with(clean, params, &db, &SynthesisConfig::new(seed))
}

pub fn synthesize_frame_with(
    clean: &Frame,
    params: &FilmGrainParams,
    db: &GrainPatternDatabase,
    config: &SynthesisConfig,
) -> Result<Frame, SynthesisError> {
    let mut out = clean.clone();
    for (c, plane) in Component::ALL.into_iter().zip(out.planes_mut()) {
        if let Some(model) = params.component(c) {
            *plane = synthesize_plane(plane, model, params.log2_scale_factor, db, config, component_tag(c))?;
        }
    }
    Ok(out)
}
