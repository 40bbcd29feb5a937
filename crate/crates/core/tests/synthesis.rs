use grainkit::fgc_sei::{Component, ComponentModel, FilmGrainParams, IntensityInterval};
use grainkit::media_io::{Frame, Plane};
use grainkit::synthesis::{
    build_pattern_db, generate_pattern, synthesize_frame, synthesize_plane, GrainPatternDatabase, SynthesisConfig,
    SynthesisError,
};

/// Direct-summation orthonormal DCT-II of a 64×64 block.
fn dct64(block: &[f64]) -> Vec<f64> {
    let n = 64;
    let basis: Vec<f64> = (0..n * n)
        .map(|i| {
            let (k, x) = (i / n, i % n);
            let c = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            c * (std::f64::consts::PI * (2 * x + 1) as f64 * k as f64 / (2 * n) as f64).cos()
        })
        .collect();
    let mut rows = vec![0.0; n * n];
    for y in 0..n {
        for k in 0..n {
            rows[y * n + k] = (0..n).map(|x| block[y * n + x] * basis[k * n + x]).sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for u in 0..n {
        for k in 0..n {
            out[u * n + k] = (0..n).map(|y| rows[y * n + k] * basis[u * n + y]).sum();
        }
    }
    out
}

fn single(scale: u8, cutoff: u8, log2: u8) -> FilmGrainParams {
    FilmGrainParams::new(log2).with_component(
        Component::Y,
        ComponentModel::new(vec![IntensityInterval::new(0, 255, scale, cutoff, cutoff)]),
    )
}

fn residual_stats(scale: u8, cutoff: u8, log2: u8, seed: u64) -> (f64, f64) {
    let clean = Frame::from_luma(Plane::filled(512, 512, 128));
    let out = synthesize_frame(&clean, &single(scale, cutoff, log2), seed).unwrap();
    let r: Vec<f64> = out
        .y
        .samples()
        .iter()
        .map(|&v| v as f64 - 128.0)
        .collect();
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

#[test]
fn amplitude_follows_gain_law() {
    let (mean, var) = residual_stats(100, 8, 4, 1);
    let std = var.sqrt();
    assert!(mean.abs() < 0.5, "mean {mean}");
    assert!((std - 6.25).abs() <= 0.625, "std {std}");

    let (_, var2) = residual_stats(200, 8, 4, 1);
    assert!((var2 / var / 4.0 - 1.0).abs() < 0.05, "variance ratio {}", var2 / var);

    let (_, var_l5) = residual_stats(100, 8, 5, 1);
    assert!((var_l5.sqrt() / std / 0.5 - 1.0).abs() < 0.05, "std ratio {}", var_l5.sqrt() / std);
}

#[test]
fn different_seeds_differ_but_keep_strength() {
    let clean = Frame::from_luma(Plane::filled(256, 256, 128));
    let a = synthesize_frame(&clean, &single(100, 6, 4), 1).unwrap();
    let b = synthesize_frame(&clean, &single(100, 6, 4), 2).unwrap();
    assert_ne!(a.y, b.y);
    let (_, va) = residual_stats(100, 6, 4, 1);
    let (_, vb) = residual_stats(100, 6, 4, 2);
    assert!((va.sqrt() / vb.sqrt() - 1.0).abs() < 0.05);
}

fn out_of_mask_fraction(cutoff: u8) -> f64 {
    let clean = Frame::from_luma(Plane::filled(512, 512, 128));
    let out = synthesize_frame(&clean, &single(100, cutoff, 4), 3).unwrap();
    let mut energy = vec![0.0; 64 * 64];
    for by in 0..8 {
        for bx in 0..8 {
            let block: Vec<f64> = (0..64 * 64)
                .map(|i| out.y.get(bx * 64 + i % 64, by * 64 + i / 64) as f64 - 128.0)
                .collect();
            for (e, c) in energy.iter_mut().zip(dct64(&block)) {
                *e += c * c;
            }
        }
    }
    let limit = 4 * cutoff as usize;
    let total: f64 = energy.iter().sum();
    let outside: f64 = energy
        .iter()
        .enumerate()
        .filter(|(i, _)| i / 64 >= limit || i % 64 >= limit)
        .map(|(_, e)| e)
        .sum();
    outside / total
}

#[test]
fn residual_spectrum_stays_inside_mask() {
    for cutoff in [3, 8, 14] {
        let frac = out_of_mask_fraction(cutoff);
        assert!(frac < 0.02, "cutoff {cutoff}: {:.3}% outside", frac * 100.0);
    }
}

#[test]
fn pattern_spectrum_is_masked() {
    for (h, v) in [(2, 2), (5, 11), (14, 3)] {
        let p = generate_pattern(h, v, 42).unwrap();
        let coeffs = dct64(p.values());
        for (i, c) in coeffs.iter().enumerate() {
            let (row, col) = (i / 64, i % 64);
            if row >= 4 * v as usize || col >= 4 * h as usize || i == 0 {
                assert!(c.abs() < 1e-9, "({h},{v}) coefficient ({row},{col}) = {c}");
            }
        }
        let n = 4096.0;
        let mean = p.values().iter().sum::<f64>() / n;
        let var = p.values().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-6);
    }
}

#[test]
fn zero_scale_is_identity() {
    let samples: Vec<u8> = (0..96 * 80).map(|i| (i * 7 % 256) as u8).collect();
    let clean = Frame::from_luma(Plane::from_samples(96, 80, samples).unwrap());
    let mut params = FilmGrainParams::new(3);
    for c in Component::ALL {
        params = params.with_component(
            c,
            ComponentModel::new(vec![
                IntensityInterval::new(0, 127, 0, 4, 4),
                IntensityInterval::new(128, 255, 0, 12, 6),
            ]),
        );
    }
    assert_eq!(synthesize_frame(&clean, &params, 5).unwrap(), clean);
    assert_eq!(synthesize_frame(&clean, &FilmGrainParams::new(4), 5).unwrap(), clean);
}

#[test]
fn luma_only_params_leave_chroma_untouched() {
    let mut clean = Frame::from_luma(Plane::filled(64, 48, 90));
    clean.cb = Plane::filled(32, 24, 100);
    let out = synthesize_frame(&clean, &single(120, 6, 4), 9).unwrap();
    assert_ne!(out.y, clean.y);
    assert_eq!(out.cb, clean.cb);
    assert_eq!(out.cr, clean.cr);
}

#[test]
fn output_is_independent_of_thread_count() {
    let samples: Vec<u8> = (0..200 * 136).map(|i| ((i / 200) + (i % 200)) as u8).collect();
    let clean = Frame::from_luma(Plane::from_samples(200, 136, samples).unwrap());
    let params = FilmGrainParams::new(4).with_component(
        Component::Y,
        ComponentModel::new(vec![
            IntensityInterval::new(0, 99, 80, 4, 4),
            IntensityInterval::new(100, 199, 150, 10, 10),
            IntensityInterval::new(200, 255, 40, 6, 12),
        ]),
    );
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| synthesize_frame(&clean, &params, 77).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, synthesize_frame(&clean, &params, 77).unwrap());
}

#[test]
fn deblocking_only_touches_interval_edges() {
    // left half dark, right half bright: one interval change at x = 32
    let mut clean = Plane::filled(64, 64, 50);
    for y in 0..64 {
        for x in 32..64 {
            clean.set(x, y, 200);
        }
    }
    let model = ComponentModel::new(vec![
        IntensityInterval::new(0, 127, 100, 8, 8),
        IntensityInterval::new(128, 255, 100, 4, 4),
    ]);
    let db = GrainPatternDatabase::build([(8, 8), (4, 4)], 1).unwrap();
    let on = SynthesisConfig::new(1);
    let off = SynthesisConfig { deblock: false, ..on };
    let a = synthesize_plane(&clean, &model, 4, &db, &on, 0).unwrap();
    let b = synthesize_plane(&clean, &model, 4, &db, &off, 0).unwrap();
    for y in 0..64 {
        for x in 0..64 {
            if x != 31 && x != 32 {
                assert_eq!(a.get(x, y), b.get(x, y), "({x},{y})");
            }
        }
    }
    assert_ne!(a, b);
}

#[test]
fn pattern_database_contents() {
    let db = build_pattern_db(&single(100, 8, 4), 0).unwrap();
    assert_eq!(db.len(), 1);
    assert_eq!(db.get(3, 3).unwrap_err(), SynthesisError::MissingPattern(3, 3));

    let intervals = (0..16u16)
        .map(|i| IntensityInterval::new((i * 16) as u8, (i * 16 + 15) as u8, 50, (3 + i % 12) as u8, (3 + i % 12) as u8))
        .collect();
    let p = FilmGrainParams::new(4).with_component(Component::Y, ComponentModel::new(intervals));
    assert_eq!(build_pattern_db(&p, 0).unwrap().len(), 12);
}
