use super::{AnalyzerError, NetworkConfig};
use crate::fgc_sei::{ComponentModel, IntensityInterval};

/// Training targets of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    pub log2: usize,
    /// one class per interval
    pub scaling: Vec<usize>,
    /// one class per interval
    pub cutoff: Vec<usize>,
    /// flattened `[l1, u1, ..]` divided by 255
    pub boundaries: Vec<f32>,
}

fn class_of(values: &[u8], v: u8, field: &str) -> Result<usize, AnalyzerError> {
    values
        .iter()
        .position(|&c| c == v)
        .ok_or_else(|| AnalyzerError::LabelOutOfRange {
            field: field.to_string(),
            value: v as i64,
            allowed: format!("{values:?}"),
        })
}

pub fn encode_labels(model: &ComponentModel, log2: u8, config: &NetworkConfig) -> Result<Labels, AnalyzerError> {
    if model.intervals.len() != config.n_intervals {
        return Err(AnalyzerError::IntervalCount {
            expected: config.n_intervals,
            actual: model.intervals.len(),
        });
    }
    let mut labels = Labels {
        log2: class_of(&config.log2_values, log2, "log2_scale_factor")?,
        scaling: Vec::with_capacity(config.n_intervals),
        cutoff: Vec::with_capacity(config.n_intervals),
        boundaries: Vec::with_capacity(2 * config.n_intervals),
    };
    for iv in &model.intervals {
        labels.scaling.push(class_of(&config.scale_values, iv.scaling_factor, "scaling_factor")?);
        labels.cutoff.push(class_of(&config.cutoff_values, iv.cutoff_h, "cutoff")?);
        labels.boundaries.push(iv.lower as f32 / 255.0);
        labels.boundaries.push(iv.upper as f32 / 255.0);
    }
    Ok(labels)
}

/// Inverse of [`encode_labels`]; both cutoffs take the predicted class.
pub fn decode_labels(labels: &Labels, config: &NetworkConfig) -> (ComponentModel, u8) {
    let intervals = labels
        .boundaries
        .chunks(2)
        .zip(labels.scaling.iter().zip(&labels.cutoff))
        .map(|(b, (&s, &c))| {
            let cutoff = config.cutoff_values[c];
            IntensityInterval::new(to_u8(b[0]), to_u8(b[1]), config.scale_values[s], cutoff, cutoff)
        })
        .collect();
    (ComponentModel::new(intervals), config.log2_values[labels.log2])
}

fn to_u8(v: f32) -> u8 {
    (v as f64 * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Turns a regressed `[l1, u1, ..]` sequence in [0, 1] into a contiguous
/// partition of [0, 255]: values are scaled, rounded, clamped and made
/// non-decreasing; the cut between intervals `i` and `i + 1` sits midway
/// between `u_i + 1` and `l_(i+1)`, then cuts are forced strictly increasing
/// and the ends pinned to 0 and 255. A valid partition comes back unchanged.
pub fn repair_boundaries(raw: &[f32]) -> Vec<(u8, u8)> {
    let n = (raw.len() / 2).clamp(1, 256);
    let mut seq: Vec<i32> = raw
        .iter()
        .map(|&v| {
            let v = if v.is_finite() { v as f64 } else { 0.0 };
            (v * 255.0).round().clamp(0.0, 255.0) as i32
        })
        .collect();
    seq.resize(2 * n, 255);
    for i in 1..seq.len() {
        seq[i] = seq[i].max(seq[i - 1]);
    }
    // cuts[i] is the lower bound of interval i + 1
    let mut cuts: Vec<i32> = (0..n - 1)
        .map(|i| (seq[2 * i + 1] + 1 + seq[2 * i + 2] + 1) / 2)
        .collect();
    let last = cuts.len();
    for i in 0..last {
        let floor = if i == 0 { 1 } else { cuts[i - 1] + 1 };
        cuts[i] = cuts[i].max(floor);
    }
    for i in (0..last).rev() {
        let ceiling = 255 - (last - 1 - i) as i32;
        cuts[i] = cuts[i].min(ceiling);
        if i + 1 < last {
            cuts[i] = cuts[i].min(cuts[i + 1] - 1);
        }
    }
    let mut out = Vec::with_capacity(n);
    let mut lower = 0;
    for &c in &cuts {
        out.push((lower as u8, (c - 1) as u8));
        lower = c;
    }
    out.push((lower as u8, 255));
    out
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
