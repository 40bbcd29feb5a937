use rayon::prelude::*;

use super::labels::{argmax, repair_boundaries};
use super::network::{forward, ModelWeights, PredictionResult};
use super::{AnalyzerError, NetworkConfig};
use crate::fgc_sei::{Component, ComponentModel, FilmGrainParams, IntensityInterval, LOG2_SCALE_RANGE};
use crate::media_io::{Frame, Plane};

const TILE_BATCH: usize = 16;

/// Per-slot decisions of one prediction.
struct Decoded {
    bounds: Vec<(u8, u8)>,
    scaling: Vec<usize>,
    cutoff: Vec<usize>,
    log2: usize,
}

fn decode(pred: &PredictionResult, config: &NetworkConfig) -> Decoded {
    let ns = config.scale_values.len();
    let nc = config.cutoff_values.len();
    Decoded {
        bounds: repair_boundaries(&pred.boundaries),
        scaling: pred.scaling_logits.chunks(ns).map(argmax).collect(),
        cutoff: pred.cutoff_logits.chunks(nc).map(argmax).collect(),
        log2: argmax(&pred.log2_logits),
    }
}

fn assemble(d: &Decoded, config: &NetworkConfig) -> (ComponentModel, u8) {
    let intervals = d
        .bounds
        .iter()
        .zip(d.scaling.iter().zip(&d.cutoff))
        .map(|(&(lo, hi), (&s, &c))| {
            let cutoff = config.cutoff_values[c];
            IntensityInterval::new(lo, hi, config.scale_values[s], cutoff, cutoff)
        })
        .collect();
    (ComponentModel::new(intervals), config.log2_values[d.log2])
}

/// Argmax classes and repaired boundaries of a single prediction.
pub fn prediction_to_component(pred: &PredictionResult, config: &NetworkConfig) -> (ComponentModel, u8) {
    assemble(&decode(pred, config), config)
}

/// Most frequent value; ties go to the smallest.
fn mode(values: impl Iterator<Item = usize>) -> usize {
    let mut counts = std::collections::BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    let mut best = (0, 0);
    for (v, c) in counts {
        if c > best.1 {
            best = (v, c);
        }
    }
    best.0
}

/// Lower median.
fn median(mut values: Vec<u8>) -> u8 {
    values.sort_unstable();
    values[(values.len() - 1) / 2]
}

fn aggregate(decoded: &[Decoded], config: &NetworkConfig) -> (ComponentModel, u8) {
    let n = config.n_intervals;
    let flat: Vec<f32> = (0..2 * n)
        .map(|k| {
            let m = median(
                decoded
                    .iter()
                    .map(|d| if k % 2 == 0 { d.bounds[k / 2].0 } else { d.bounds[k / 2].1 })
                    .collect(),
            );
            m as f32 / 255.0
        })
        .collect();
    let merged = Decoded {
        bounds: repair_boundaries(&flat),
        scaling: (0..n).map(|i| mode(decoded.iter().map(|d| d.scaling[i]))).collect(),
        cutoff: (0..n).map(|i| mode(decoded.iter().map(|d| d.cutoff[i]))).collect(),
        log2: mode(decoded.iter().map(|d| d.log2)),
    };
    assemble(&merged, config)
}

/// Non-overlapping `tile x tile` crops covering as much of the plane as fits;
/// planes smaller than `tile` are shrunk to a square of their short side.
fn tiles(plane: &Plane, tile: usize) -> Vec<Plane> {
    let t = tile.min(plane.width()).min(plane.height()).max(1);
    let mut out = Vec::new();
    for y in (0..=plane.height() - t).step_by(t) {
        for x in (0..=plane.width() - t).step_by(t) {
            out.push(plane.crop(x, y, t, t).expect("tile inside plane"));
        }
    }
    out
}

/// Runs the network over tiles of every plane and merges the decisions:
/// element-wise median of the boundaries, modal class per slot.
pub fn predict_component(
    weights: &ModelWeights,
    planes: &[&Plane],
    tile: usize,
) -> Result<(ComponentModel, u8), AnalyzerError> {
    if planes.is_empty() {
        return Err(AnalyzerError::NoFrames);
    }
    // tiles of differently sized planes cannot share a batch
    let mut groups: Vec<Vec<Plane>> = Vec::new();
    for p in planes {
        let ts = tiles(p, tile);
        match groups.iter_mut().find(|g| g[0].width() == ts[0].width()) {
            Some(g) => g.extend(ts),
            None => groups.push(ts),
        }
    }
    let batches: Vec<&[Plane]> = groups.iter().flat_map(|g| g.chunks(TILE_BATCH)).collect();
    let preds: Vec<Vec<PredictionResult>> = batches
        .par_iter()
        .map(|b| forward(weights, &b.iter().collect::<Vec<_>>()))
        .collect::<Result<_, _>>()?;
    let decoded: Vec<Decoded> = preds.iter().flatten().map(|p| decode(p, &weights.config)).collect();
    Ok(aggregate(&decoded, &weights.config))
}

/// Estimates a full parameter set from grainy frames.
///
/// The luma model fills Y and the log2 scale factor; the chroma model, when
/// given, runs on Cb and Cr separately with tiles of half the luma size.
pub fn predict_params(
    luma: &ModelWeights,
    chroma: Option<&ModelWeights>,
    frames: &[Frame],
    log2_override: Option<u8>,
    tile: usize,
) -> Result<FilmGrainParams, AnalyzerError> {
    if frames.is_empty() {
        return Err(AnalyzerError::NoFrames);
    }
    if let Some(l) = log2_override {
        if !(LOG2_SCALE_RANGE.0..=LOG2_SCALE_RANGE.1).contains(&l) {
            return Err(AnalyzerError::LabelOutOfRange {
                field: "log2_scale_factor".into(),
                value: l as i64,
                allowed: format!("{}-{}", LOG2_SCALE_RANGE.0, LOG2_SCALE_RANGE.1),
            });
        }
    }
    let ys: Vec<&Plane> = frames.iter().map(|f| &f.y).collect();
    let (y_model, log2) = predict_component(luma, &ys, tile)?;
    let mut params = FilmGrainParams::new(log2_override.unwrap_or(log2)).with_component(Component::Y, y_model);
    if let Some(w) = chroma {
        for c in [Component::Cb, Component::Cr] {
            let planes: Vec<&Plane> = frames.iter().map(|f| f.planes()[c.index()]).collect();
            let (model, _) = predict_component(w, &planes, (tile / 2).max(8))?;
            params = params.with_component(c, model);
        }
    }
    Ok(params)
}

/// Comparison of estimated against true parameters at one intensity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Agreement {
    pub intensity: u8,
    pub cutoff_true: u8,
    pub cutoff_pred: u8,
    pub scale_true: u8,
    pub scale_pred: u8,
    pub log2_true: u8,
    pub log2_pred: u8,
}

impl Agreement {
    /// Luma fields at the median sample of `clean`, the intensity most of
    /// the patch's grain was drawn for.
    pub fn measure(truth: &FilmGrainParams, pred: &FilmGrainParams, clean: &Plane) -> Option<Self> {
        let mut s = clean.samples().to_vec();
        if s.is_empty() {
            return None;
        }
        s.sort_unstable();
        let intensity = s[(s.len() - 1) / 2];
        let t = truth.component(Component::Y)?.interval_for(intensity)?;
        let p = pred.component(Component::Y)?.interval_for(intensity)?;
        Some(Self {
            intensity,
            cutoff_true: t.cutoff_h,
            cutoff_pred: p.cutoff_h,
            scale_true: t.scaling_factor,
            scale_pred: p.scaling_factor,
            log2_true: truth.log2_scale_factor,
            log2_pred: pred.log2_scale_factor,
        })
    }

    pub fn cutoff_within(&self, tolerance: u8) -> bool {
        self.cutoff_true.abs_diff(self.cutoff_pred) <= tolerance
    }

    pub fn log2_exact(&self) -> bool {
        self.log2_true == self.log2_pred
    }

    /// Effective grain gains `scale * 2^-log2` of truth and estimate.
    pub fn gains(&self) -> (f64, f64) {
        (
            self.scale_true as f64 / f64::from(1u32 << self.log2_true),
            self.scale_pred as f64 / f64::from(1u32 << self.log2_pred),
        )
    }
}
