use std::collections::BTreeSet;
use std::fmt;

use rand::seq::index;
use rand::Rng;

use crate::fgc_sei::{Component, ComponentModel, FilmGrainParams, IntensityInterval, CUTOFF_RANGE, LOG2_SCALE_RANGE};

/// Limits on randomly generated parameter sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplerConstraints {
    pub log2_choices: BTreeSet<u8>,
    pub luma_intervals: usize,
    pub chroma_intervals: usize,
    pub scale_step: u8,
    pub scale_range: (u8, u8),
    pub luma_cutoff_range: (u8, u8),
    pub chroma_cutoff_range: (u8, u8),
    /// largest |scale difference| between consecutive intervals
    pub max_scale_delta: u8,
    /// largest |cutoff difference| between consecutive intervals
    pub max_cutoff_delta: u8,
}

impl Default for SamplerConstraints {
    fn default() -> Self {
        Self {
            log2_choices: [3, 4, 5].into_iter().collect(),
            luma_intervals: 16,
            chroma_intervals: 6,
            scale_step: 10,
            scale_range: (0, 250),
            luma_cutoff_range: (3, 14),
            chroma_cutoff_range: (4, 8),
            max_scale_delta: 40,
            max_cutoff_delta: 2,
        }
    }
}

impl fmt::Display for SamplerConstraints {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let log2: Vec<String> = self.log2_choices.iter().map(|v| v.to_string()).collect();
        write!(
            f,
            "log2={{{}}} luma_intervals={} chroma_intervals={} scale_step={} scale_range={}-{} \
             luma_cutoff={}-{} chroma_cutoff={}-{} max_scale_delta={} max_cutoff_delta={}",
            log2.join(","),
            self.luma_intervals,
            self.chroma_intervals,
            self.scale_step,
            self.scale_range.0,
            self.scale_range.1,
            self.luma_cutoff_range.0,
            self.luma_cutoff_range.1,
            self.chroma_cutoff_range.0,
            self.chroma_cutoff_range.1,
            self.max_scale_delta,
            self.max_cutoff_delta
        )
    }
}

impl SamplerConstraints {
    /// Problems that would make sampling impossible or produce invalid parameters.
    pub fn check(&self) -> Result<(), String> {
        let (llo, lhi) = LOG2_SCALE_RANGE;
        if self.log2_choices.is_empty() || self.log2_choices.iter().any(|v| !(llo..=lhi).contains(v)) {
            return Err(format!("log2 choices must be non-empty and within {llo}-{lhi}"));
        }
        for (name, n) in [("luma", self.luma_intervals), ("chroma", self.chroma_intervals)] {
            if !(1..=256).contains(&n) {
                return Err(format!("{name} interval count {n} outside 1-256"));
            }
        }
        if self.scale_step == 0 || self.scale_range.0 > self.scale_range.1 {
            return Err("scale step must be positive and range ordered".into());
        }
        if self.scale_range.0 % self.scale_step != 0 {
            return Err("scale range must start on a multiple of the step".into());
        }
        let (clo, chi) = CUTOFF_RANGE;
        for (name, (lo, hi)) in [("luma", self.luma_cutoff_range), ("chroma", self.chroma_cutoff_range)] {
            if lo > hi || lo < clo || hi > chi {
                return Err(format!("{name} cutoff range {lo}-{hi} not within {clo}-{chi}"));
            }
        }
        if self.max_scale_delta < self.scale_step || self.max_cutoff_delta == 0 {
            return Err("deltas must be positive and at least one scale step".into());
        }
        Ok(())
    }

    /// Allowed scaling factors in increasing order.
    pub fn scale_values(&self) -> Vec<u8> {
        (self.scale_range.0..=self.scale_range.1)
            .step_by(self.scale_step as usize)
            .collect()
    }

    pub fn cutoff_range(&self, luma: bool) -> (u8, u8) {
        if luma {
            self.luma_cutoff_range
        } else {
            self.chroma_cutoff_range
        }
    }
}

const MAX_RETRIES: usize = 64;

/// Bounded random walk over `0..count` with steps of at most `max_step`.
/// Out-of-range steps are redrawn up to `MAX_RETRIES` times, then clamped.
fn walk<R: Rng + ?Sized>(rng: &mut R, len: usize, count: usize, max_step: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    out.push(rng.gen_range(0..count));
    for _ in 1..len {
        let prev = *out.last().expect("non-empty") as i64;
        let mut next = None;
        for _ in 0..MAX_RETRIES {
            let cand = prev + rng.gen_range(-(max_step as i64)..=max_step as i64);
            if (0..count as i64).contains(&cand) {
                next = Some(cand);
                break;
            }
        }
        out.push(next.unwrap_or(prev).clamp(0, count as i64 - 1) as usize);
    }
    out
}

/// A contiguous partition of [0, 255] into `n_intervals` with smoothly
/// varying scale and a single cutoff shared by both directions.
pub fn sample_component<R: Rng + ?Sized>(
    rng: &mut R,
    n_intervals: usize,
    constraints: &SamplerConstraints,
    is_luma: bool,
) -> ComponentModel {
    let n = n_intervals.clamp(1, 256);
    let mut cuts: Vec<usize> = index::sample(rng, 255, n - 1).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();

    let scales = constraints.scale_values();
    let scale_steps = (constraints.max_scale_delta / constraints.scale_step) as usize;
    let scale_idx = walk(rng, n, scales.len(), scale_steps);

    let (clo, chi) = constraints.cutoff_range(is_luma);
    let cut_idx = walk(rng, n, (chi - clo + 1) as usize, constraints.max_cutoff_delta as usize);

    let intervals = (0..n)
        .map(|i| {
            let lower = if i == 0 { 0 } else { cuts[i - 1] };
            let upper = if i + 1 == n { 255 } else { cuts[i] - 1 };
            let cutoff = clo + cut_idx[i] as u8;
            IntensityInterval::new(lower as u8, upper as u8, scales[scale_idx[i]], cutoff, cutoff)
        })
        .collect();
    ComponentModel::new(intervals)
}

/// A complete parameter set with all three components present.
pub fn sample_params<R: Rng + ?Sized>(rng: &mut R, constraints: &SamplerConstraints) -> FilmGrainParams {
    let choices: Vec<u8> = constraints.log2_choices.iter().copied().collect();
    let log2 = choices[rng.gen_range(0..choices.len())];
    let mut params = FilmGrainParams::new(log2);
    for c in Component::ALL {
        let n = if c.is_luma() {
            constraints.luma_intervals
        } else {
            constraints.chroma_intervals
        };
        params = params.with_component(c, sample_component(rng, n, constraints, c.is_luma()));
    }
    params
}

/// Checks a component against the sampler limits; used by tests and the CLI.
pub fn component_violations(model: &ComponentModel, constraints: &SamplerConstraints, is_luma: bool) -> Vec<String> {
    let mut out = Vec::new();
    let iv = &model.intervals;
    let want = if is_luma {
        constraints.luma_intervals
    } else {
        constraints.chroma_intervals
    };
    if iv.len() != want {
        out.push(format!("{} intervals, expected {want}", iv.len()));
    }
    if iv.first().map(|i| i.lower) != Some(0) || iv.last().map(|i| i.upper) != Some(255) {
        out.push("intervals do not span 0-255".into());
    }
    let (clo, chi) = constraints.cutoff_range(is_luma);
    for (i, x) in iv.iter().enumerate() {
        if x.scaling_factor % constraints.scale_step != 0
            || x.scaling_factor < constraints.scale_range.0
            || x.scaling_factor > constraints.scale_range.1
        {
            out.push(format!("interval {i}: scale {} not allowed", x.scaling_factor));
        }
        if x.cutoff_h != x.cutoff_v || x.cutoff_h < clo || x.cutoff_h > chi {
            out.push(format!("interval {i}: cutoffs ({}, {}) not allowed", x.cutoff_h, x.cutoff_v));
        }
        if i > 0 {
            let p = &iv[i - 1];
            if p.upper as u16 + 1 != x.lower as u16 {
                out.push(format!("interval {i}: not contiguous with previous"));
            }
            if p.scaling_factor.abs_diff(x.scaling_factor) > constraints.max_scale_delta {
                out.push(format!("interval {i}: scale jump {} -> {}", p.scaling_factor, x.scaling_factor));
            }
            if p.cutoff_h.abs_diff(x.cutoff_h) > constraints.max_cutoff_delta {
                out.push(format!("interval {i}: cutoff jump {} -> {}", p.cutoff_h, x.cutoff_h));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_constraints_are_consistent() {
        let c = SamplerConstraints::default();
        c.check().unwrap();
        assert_eq!(c.scale_values().len(), 26);
    }

    #[test]
    fn single_interval_covers_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = sample_component(&mut rng, 1, &SamplerConstraints::default(), true);
        assert_eq!((m.intervals[0].lower, m.intervals[0].upper), (0, 255));
    }

    #[test]
    fn walk_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(walk(&mut rng, 5, 1, 2), vec![0; 5]);
        let w = walk(&mut rng, 1000, 4, 3);
        assert!(w.iter().all(|&v| v < 4));
    }
}
