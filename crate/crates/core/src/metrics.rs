//! Grain similarity between a reference and a test grainy image sharing one
//! clean source: divergences of residual histograms and of the MSCN
//! coefficients of the residuals.
//!
//! The NSS measure here (`jsd_nss`) is a fixed, simple variant: MSCN
//! marginals only, one scale, no distribution fitting.

use crate::media_io::Plane;

/// Per-bin additive smoothing applied before renormalizing.
pub const SMOOTHING: f64 = 1e-6;
pub const BINS: usize = 256;
/// Range of MSCN values binned by [`jsd_nss`].
pub const MSCN_RANGE: (f64, f64) = (-3.0, 3.0);
/// Name printed next to [`jsd_nss`] values.
pub const JSD_NSS_VARIANT: &str = "jsd-nss/mscn7x7-marginal";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimMismatch(usize, usize, usize, usize),
    #[error("plane {0}x{1} smaller than the 7x7 window")]
    TooSmall(usize, usize),
}

fn same_dims(a: &Plane, b: &Plane) -> Result<(), MetricsError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(MetricsError::DimMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    Ok(())
}

/// Signed `grainy − clean`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Residual {
    pub width: usize,
    pub height: usize,
    pub values: Vec<i16>,
}

impl Residual {
    pub fn std(&self) -> f64 {
        let n = self.values.len().max(1) as f64;
        let mean = self.values.iter().map(|&v| v as f64).sum::<f64>() / n;
        (self.values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len().max(1) as f64
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

pub fn residual(grainy: &Plane, clean: &Plane) -> Result<Residual, MetricsError> {
    same_dims(grainy, clean)?;
    Ok(Residual {
        width: grainy.width(),
        height: grainy.height(),
        values: grainy
            .samples()
            .iter()
            .zip(clean.samples())
            .map(|(&g, &c)| g as i16 - c as i16)
            .collect(),
    })
}

/// 256-bin histogram with smoothed probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualHistogram {
    counts: Vec<u64>,
    total: u64,
    probs: Vec<f64>,
}

impl ResidualHistogram {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let k = counts.len() as f64;
        let probs = counts
            .iter()
            .map(|&c| {
                let p = if total == 0 { 1.0 / k } else { c as f64 / total as f64 };
                (p + SMOOTHING) / (1.0 + k * SMOOTHING)
            })
            .collect();
        Self { counts, total, probs }
    }

    /// Residual values shifted by 128 into bins 0..=255, clamped at the ends.
    pub fn from_residual(r: &Residual) -> Self {
        let mut counts = vec![0u64; BINS];
        for &v in &r.values {
            counts[(v.clamp(-128, 127) + 128) as usize] += 1;
        }
        Self::from_counts(counts)
    }

    /// `bins` equal-width bins over `[lo, hi]`, values outside clamped.
    pub fn from_values(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let b = ((v - lo) / width).floor().clamp(0.0, bins as f64 - 1.0) as usize;
            counts[b] += 1;
        }
        Self::from_counts(counts)
    }

    /// Histogram with the given probabilities, scaled to a nominal count.
    pub fn from_probabilities(p: &[f64]) -> Self {
        let counts = p.iter().map(|&v| (v * 1e9).round() as u64).collect();
        Self::from_counts(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }
}

/// Kullback-Leibler divergence `Σ p ln(p/q)`, reference `p` to test `q`.
pub fn kld(h_ref: &ResidualHistogram, h_test: &ResidualHistogram) -> f64 {
    kl(&h_ref.probs, &h_test.probs)
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "histograms must have the same bin count");
    p.iter().zip(q).map(|(&a, &b)| a * (a / b).ln()).sum()
}

/// Jensen-Shannon divergence, natural log, in [0, ln 2].
pub fn jsd(h_ref: &ResidualHistogram, h_test: &ResidualHistogram) -> f64 {
    assert_eq!(h_ref.probs.len(), h_test.probs.len(), "histograms must have the same bin count");
    // per-bin terms keep the result exactly symmetric
    h_ref
        .probs
        .iter()
        .zip(&h_test.probs)
        .map(|(&a, &b)| {
            let m = 0.5 * (a + b);
            0.5 * (a * (a / m).ln() + b * (b / m).ln())
        })
        .sum()
}

fn gaussian_window() -> [f64; 49] {
    let sigma = 7.0 / 6.0;
    let mut w = [0.0; 49];
    for (i, v) in w.iter_mut().enumerate() {
        let (dy, dx) = ((i / 7) as f64 - 3.0, (i % 7) as f64 - 3.0);
        *v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Mean-subtracted contrast-normalized coefficients `(I − μ) / (σ + 1)`
/// with a 7×7 Gaussian window (σ = 7/6) and edge replication.
pub fn mscn(values: &[f64], width: usize, height: usize) -> Result<Vec<f64>, MetricsError> {
    if width < 7 || height < 7 {
        return Err(MetricsError::TooSmall(width, height));
    }
    assert_eq!(values.len(), width * height, "values must fill the plane");
    let w = gaussian_window();
    let mut out = Vec::with_capacity(values.len());
    for y in 0..height {
        for x in 0..width {
            let (mut mu, mut sq) = (0.0, 0.0);
            for dy in 0..7 {
                let yy = (y as isize + dy as isize - 3).clamp(0, height as isize - 1) as usize;
                for dx in 0..7 {
                    let xx = (x as isize + dx as isize - 3).clamp(0, width as isize - 1) as usize;
                    let v = values[yy * width + xx];
                    let k = w[dy * 7 + dx];
                    mu += k * v;
                    sq += k * v * v;
                }
            }
            let sigma = (sq - mu * mu).abs().sqrt();
            out.push((values[y * width + x] - mu) / (sigma + 1.0));
        }
    }
    Ok(out)
}

pub fn mscn_plane(plane: &Plane) -> Result<Vec<f64>, MetricsError> {
    let v: Vec<f64> = plane.samples().iter().map(|&s| s as f64).collect();
    mscn(&v, plane.width(), plane.height())
}

/// JSD between MSCN histograms of the two residuals against `clean`.
pub fn jsd_nss(grainy_ref: &Plane, grainy_test: &Plane, clean: &Plane) -> Result<f64, MetricsError> {
    let hist = |g: &Plane| -> Result<ResidualHistogram, MetricsError> {
        let r = residual(g, clean)?;
        let m = mscn(&r.to_f64(), r.width, r.height)?;
        Ok(ResidualHistogram::from_values(&m, MSCN_RANGE.0, MSCN_RANGE.1, BINS))
    };
    Ok(jsd(&hist(grainy_ref)?, &hist(grainy_test)?))
}

/// KLD between residual histograms of the two grainy planes against `clean`.
pub fn residual_kld(grainy_ref: &Plane, grainy_test: &Plane, clean: &Plane) -> Result<f64, MetricsError> {
    let a = ResidualHistogram::from_residual(&residual(grainy_ref, clean)?);
    let b = ResidualHistogram::from_residual(&residual(grainy_test, clean)?);
    Ok(kld(&a, &b))
}
