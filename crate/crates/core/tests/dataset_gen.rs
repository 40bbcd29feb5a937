use std::collections::HashSet;
use std::fs;
use std::path::Path;

use grainkit::dataset_gen::{
    build_dataset, component_violations, sample_component, sample_param_sets, sample_params,
    synthetic_clean_frame, CleanStyle, DatasetConfig, DatasetError, DatasetManifest, SamplerConstraints,
};
use grainkit::fgc_sei::Component;
use grainkit::media_io::{write_pnm, Pnm};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn ten_thousand_sets_satisfy_every_constraint() {
    let c = SamplerConstraints::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..10_000 {
        let p = sample_params(&mut rng, &c);
        assert!(p.validate().is_ok(), "set {i}: {}", p.validate());
        assert!([3, 4, 5].contains(&p.log2_scale_factor));
        for comp in Component::ALL {
            let m = p.component(comp).expect("all components present");
            let v = component_violations(m, &c, comp.is_luma());
            assert!(v.is_empty(), "set {i} {comp}: {v:?}");
            let (lo, hi) = if comp.is_luma() { (3, 14) } else { (4, 8) };
            assert!(m.intervals.iter().all(|iv| iv.cutoff_h >= lo && iv.cutoff_h <= hi));
            assert!(m.intervals.iter().all(|iv| iv.scaling_factor % 10 == 0 && iv.scaling_factor <= 250));
        }
        assert_eq!(p.component(Component::Y).unwrap().intervals.len(), 16);
        assert_eq!(p.component(Component::Cr).unwrap().intervals.len(), 6);
    }
}

#[test]
fn sixteen_luma_intervals_partition_the_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = sample_component(&mut rng, 16, &SamplerConstraints::default(), true);
    let mut covered = [0u8; 256];
    for iv in &m.intervals {
        for v in iv.lower..=iv.upper {
            covered[v as usize] += 1;
        }
    }
    assert!(covered.iter().all(|&c| c == 1));
}

#[test]
fn three_hundred_distinct_valid_sets() {
    let sets = sample_param_sets(300, &SamplerConstraints::default(), 11);
    assert!(sets.iter().all(|p| p.validate().is_ok()));
    let distinct: HashSet<_> = sets.iter().collect();
    assert_eq!(distinct.len(), 300);
    assert_eq!(sets, sample_param_sets(300, &SamplerConstraints::default(), 11));
}

fn write_clean_dir(dir: &Path, n: usize, colour: bool) {
    fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        let f = synthetic_clean_frame(96, 80, CleanStyle::Smooth, colour, i as u64);
        let (name, img) = if colour {
            (format!("c{i:02}.ppm"), Pnm::Color(f))
        } else {
            (format!("c{i:02}.pgm"), Pnm::Gray(f.y))
        };
        write_pnm(&dir.join(name), &img).unwrap();
    }
}

fn config(seed: u64) -> DatasetConfig {
    DatasetConfig {
        n_param_sets: 5,
        crops_per_image: 3,
        crop_size: 64,
        ..DatasetConfig::new(seed)
    }
}

#[test]
fn dataset_counts_and_rebuilds_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let clean = tmp.path().join("clean");
    write_clean_dir(&clean, 10, false);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let ma = build_dataset(&clean, &a, &config(7)).unwrap();
    let mb = build_dataset(&clean, &b, &config(7)).unwrap();
    assert_eq!(ma.entries.len(), 30);
    assert_eq!(ma.entries, mb.entries);
    assert_eq!(fs::read(a.join("manifest.tsv")).unwrap(), fs::read(b.join("manifest.tsv")).unwrap());
    for e in &ma.entries {
        assert_eq!(fs::read(e.grainy_path(&a)).unwrap(), fs::read(e.grainy_path(&b)).unwrap());
        assert_eq!(fs::read(e.params_path(&a)).unwrap(), fs::read(e.params_path(&b)).unwrap());
    }
    let loaded = DatasetManifest::load(&a.join("manifest.tsv")).unwrap();
    assert_eq!(loaded.entries, ma.entries);
    let other = build_dataset(&clean, &tmp.path().join("c"), &config(8)).unwrap();
    assert_ne!(other.entries, ma.entries);
}

#[test]
fn residual_is_nonzero_exactly_when_grain_is_scaled() {
    let tmp = tempfile::tempdir().unwrap();
    let clean = tmp.path().join("clean");
    write_clean_dir(&clean, 4, false);
    for (scale_range, expect_grain) in [((0, 0), false), ((10, 250), true)] {
        let cfg = DatasetConfig {
            constraints: SamplerConstraints {
                scale_range,
                ..SamplerConstraints::default()
            },
            ..config(3)
        };
        let out = tmp.path().join(format!("out{}", scale_range.0));
        let m = build_dataset(&clean, &out, &cfg).unwrap();
        for e in &m.entries {
            let params = e.load_params(&out).unwrap();
            let any_scale = params
                .component(Component::Y)
                .unwrap()
                .intervals
                .iter()
                .any(|iv| iv.scaling_factor > 0);
            assert_eq!(any_scale, expect_grain);
            let differs = e.load_grainy(&out).unwrap().y != e.load_clean_crop().unwrap().y;
            assert_eq!(differs, expect_grain, "entry {}", e.id);
        }
    }
}

#[test]
fn oversized_crop_and_empty_dir_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let clean = tmp.path().join("clean");
    fs::create_dir_all(&clean).unwrap();
    assert!(matches!(
        build_dataset(&clean, &tmp.path().join("o"), &config(1)),
        Err(DatasetError::EmptyCleanDir(_))
    ));
    write_clean_dir(&clean, 1, false);
    let big = DatasetConfig {
        crop_size: 128,
        ..config(1)
    };
    let err = build_dataset(&clean, &tmp.path().join("o"), &big).unwrap_err();
    assert!(matches!(err, DatasetError::CropTooLarge { crop: 128, .. }));
    assert!(err.to_string().contains("c00.pgm"));
}
