use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::media_io::{chroma_dims, Frame, Plane};
use crate::seed;

/// Content of generated grain-free frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CleanStyle {
    /// one random level per frame
    Flat,
    /// sum of a few long-wavelength plane waves around a random level
    Smooth,
    /// triangle-wave gradient sweeping most of the code range every 64 to 128 samples
    Ramp,
}

impl FromStr for CleanStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(CleanStyle::Flat),
            "smooth" => Ok(CleanStyle::Smooth),
            "ramp" => Ok(CleanStyle::Ramp),
            other => Err(format!("unknown clean style '{other}' (expected flat, smooth or ramp)")),
        }
    }
}

struct Wave {
    amplitude: f64,
    kx: f64,
    ky: f64,
    phase: f64,
    triangle: bool,
}

impl Wave {
    fn at(&self, x: f64, y: f64) -> f64 {
        let t = self.kx * x + self.ky * y + self.phase;
        let shape = if self.triangle {
            // unit-amplitude triangle with the cosine's period and phase
            let u = (t / std::f64::consts::TAU).rem_euclid(1.0);
            4.0 * (u - 0.5).abs() - 1.0
        } else {
            t.cos()
        };
        self.amplitude * shape
    }
}

fn waves(rng: &mut ChaCha8Rng, count: usize, max_amplitude: f64, min_wavelength: f64) -> Vec<Wave> {
    (0..count)
        .map(|_| {
            let wavelength = rng.gen_range(min_wavelength..4.0 * min_wavelength);
            let angle = rng.gen_range(0.0..std::f64::consts::PI);
            let k = std::f64::consts::TAU / wavelength;
            Wave {
                amplitude: rng.gen_range(0.2..1.0) * max_amplitude,
                kx: k * angle.cos(),
                ky: k * angle.sin(),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
                triangle: false,
            }
        })
        .collect()
}

fn render(width: usize, height: usize, level: f64, waves: &[Wave], lo: f64, hi: f64) -> Plane {
    let mut samples = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let v = waves.iter().map(|w| w.at(x as f64, y as f64)).sum::<f64>();
            samples.push((level + v).round().clamp(lo, hi) as u8);
        }
    }
    Plane::from_samples(width, height, samples).expect("sized")
}

/// Deterministic grain-free frame. With `colour` unset the chroma planes are neutral.
pub fn synthetic_clean_frame(width: usize, height: usize, style: CleanStyle, colour: bool, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[seed::tag("clean")]));
    let mut level = rng.gen_range(16.0..240.0);
    let luma_waves = match style {
        CleanStyle::Flat => Vec::new(),
        CleanStyle::Smooth => waves(&mut rng, 3, 40.0, 128.0),
        CleanStyle::Ramp => {
            level = 128.0;
            let k = std::f64::consts::TAU / rng.gen_range(64.0..128.0);
            let angle = rng.gen_range(0.0..std::f64::consts::PI);
            let mut w = vec![Wave {
                amplitude: 112.0,
                kx: k * angle.cos(),
                ky: k * angle.sin(),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
                triangle: true,
            }];
            w.extend(waves(&mut rng, 1, 8.0, 128.0));
            w
        }
    };
    let y = render(width, height, level, &luma_waves, 4.0, 251.0);
    let (cw, ch) = chroma_dims(width, height);
    if !colour {
        return Frame::from_luma(y);
    }
    let mut chroma = || {
        let level = rng.gen_range(96.0..160.0);
        let w = match style {
            CleanStyle::Flat => Vec::new(),
            CleanStyle::Smooth | CleanStyle::Ramp => waves(&mut rng, 2, 16.0, 64.0),
        };
        render(cw, ch, level, &w, 16.0, 240.0)
    };
    let cb = chroma();
    let cr = chroma();
    Frame::new(y, cb, cr).expect("chroma sized from luma")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_are_deterministic_and_seeded() {
        let a = synthetic_clean_frame(64, 48, CleanStyle::Smooth, true, 1);
        assert_eq!(a, synthetic_clean_frame(64, 48, CleanStyle::Smooth, true, 1));
        assert_ne!(a, synthetic_clean_frame(64, 48, CleanStyle::Smooth, true, 2));
        assert_eq!(a.cb.width(), 32);
    }

    #[test]
    fn flat_frames_are_flat() {
        let f = synthetic_clean_frame(32, 32, CleanStyle::Flat, false, 5);
        let v = f.y.get(0, 0);
        assert!(f.y.samples().iter().all(|&s| s == v));
        assert!(f.cb.samples().iter().all(|&s| s == 128));
    }

    #[test]
    fn ramp_crops_span_most_of_the_range() {
        for seed in 0..8 {
            let f = synthetic_clean_frame(256, 256, CleanStyle::Ramp, false, seed);
            for (x, y) in [(0, 0), (96, 32), (192, 192)] {
                let crop = f.y.crop(x, y, 64, 64).unwrap();
                let (lo, hi) = crop.samples().iter().fold((255, 0), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                assert!(hi - lo > 100, "seed {seed} crop ({x},{y}) spans {lo}-{hi}");
            }
        }
        assert!("ramp".parse::<CleanStyle>().is_ok());
    }
}
