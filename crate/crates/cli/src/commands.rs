use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use grainkit::analyzer::{
    load_training_samples, predict_params, read_weights, save_weights, train, Agreement, NetworkConfig, Preset,
    TrainConfig, Variant, LOSS_CSV_HEADER,
};
use grainkit::dataset_gen::{
    build_dataset, list_clean_frames, load_frame, sample_param_sets, synthetic_clean_frame, CleanStyle, DatasetConfig,
    DatasetManifest, SamplerConstraints,
};
use grainkit::fgc_sei::plot_params;
use grainkit::media_io::{write_pnm, Frame, Plane, Pnm};
use grainkit::metrics::{jsd_nss, residual, residual_kld, JSD_NSS_VARIANT};
use grainkit::seed::{derive, tag};
use grainkit::synthesis::synthesize_frame;

use crate::frames::{self, create_dir};
use crate::{Cli, Command, RawDims};

fn patch_size(preset: Preset) -> usize {
    TrainConfig::new(preset, 0).patch_size
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::GenParams { out, count } => gen_params(seed, &out, count),
        Command::GenClean {
            out,
            count,
            width,
            height,
            style,
            colour,
        } => gen_clean(seed, &out, count, width, height, style, colour),
        Command::GenDataset {
            clean,
            out,
            preset,
            param_sets,
            crops_per_image,
            crop_size,
        } => {
            let config = DatasetConfig {
                n_param_sets: param_sets,
                crops_per_image,
                crop_size: crop_size.unwrap_or_else(|| patch_size(preset)),
                seed,
                constraints: SamplerConstraints::default(),
            };
            let m = build_dataset(&clean, &out, &config)?;
            println!("{} entries -> {}", m.entries.len(), out.join("manifest.tsv").display());
            Ok(())
        }
        Command::Synthesize {
            input,
            params,
            out,
            dims,
        } => synthesize(seed, &input, &params, &out, &dims),
        Command::Train {
            manifest,
            variant,
            preset,
            out,
            loss_csv,
            iterations,
            batch_size,
        } => {
            let network = NetworkConfig::new(variant, preset);
            let mut config = TrainConfig::new(preset, seed);
            config.iterations = iterations.unwrap_or(config.iterations);
            config.batch_size = batch_size.unwrap_or(config.batch_size);
            run_train(&manifest, &network, &config, &out, loss_csv.as_deref())
        }
        Command::Analyze {
            input,
            weights,
            chroma_weights,
            preset,
            log2,
            out,
            dims,
        } => analyze(&input, &weights, chroma_weights.as_deref(), preset, log2, &out, &dims),
        Command::Eval {
            manifest,
            test_dir,
            clean,
            reference,
            test,
            out,
        } => eval(manifest, test_dir, clean, reference, test, out.as_deref()),
        Command::Plot { params, component, out } => {
            let p = frames::read_params(&params)?;
            let doc = plot_params(&p, component.0).with_context(|| format!("plotting {}", params.display()))?;
            write_text(&out, &doc.svg)?;
            write_text(&out.with_extension("tsv"), &doc.table)
        }
        Command::Roundtrip {
            weights,
            preset,
            count,
            clean,
            out,
        } => roundtrip(seed, &weights, preset, count, clean.as_deref(), out.as_deref()),
    }
}

fn gen_params(seed: u64, out: &Path, count: usize) -> Result<()> {
    if count == 0 {
        bail!("--count must be positive");
    }
    let sets = sample_param_sets(count, &SamplerConstraints::default(), seed);
    if count == 1 {
        return frames::write_params(out, &sets[0]);
    }
    create_dir(out)?;
    for (i, p) in sets.iter().enumerate() {
        frames::write_params(&out.join(format!("{i:06}.fgcs")), p)?;
    }
    Ok(())
}

fn gen_clean(seed: u64, out: &Path, count: usize, width: usize, height: usize, style: CleanStyle, colour: bool) -> Result<()> {
    if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
        bail!("--width and --height must be positive and even, got {width}x{height}");
    }
    create_dir(out)?;
    (0..count).into_par_iter().try_for_each(|i| -> Result<()> {
        let f = synthetic_clean_frame(width, height, style, colour, derive(seed, &[tag("gen-clean"), i as u64]));
        let (name, img) = if colour {
            (format!("{i:06}.ppm"), Pnm::Color(f))
        } else {
            (format!("{i:06}.pgm"), Pnm::Gray(f.y))
        };
        write_pnm(&out.join(name), &img)?;
        Ok(())
    })
}

fn synthesize(seed: u64, input: &Path, params: &Path, out: &Path, dims: &RawDims) -> Result<()> {
    let p = frames::read_params(params)?;
    let (_, clean) = frames::load(input, dims)?;
    let grainy = clean
        .par_iter()
        .enumerate()
        .map(|(i, f)| synthesize_frame(f, &p, derive(seed, &[tag("synthesize"), i as u64])))
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("synthesizing {}", input.display()))?;
    frames::save(out, &grainy)
}

fn run_train(
    manifest_path: &Path,
    network: &NetworkConfig,
    config: &TrainConfig,
    out: &Path,
    loss_csv: Option<&Path>,
) -> Result<()> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let samples = load_training_samples(&manifest, network)?;
    eprintln!(
        "training {} model on {} samples for {} iterations",
        network.variant,
        samples.len(),
        config.iterations
    );
    let mut csv = String::from(LOSS_CSV_HEADER);
    csv.push('\n');
    let (weights, _) = train(&samples, network, config, |i, l| {
        csv.push_str(&l.csv_row(i));
        csv.push('\n');
        if (i + 1) % 100 == 0 {
            eprintln!("iteration {:6}  loss {:.4}", i + 1, l.total);
        }
    })?;
    save_weights(&weights, out)?;
    if let Some(p) = loss_csv {
        write_text(p, &csv)?;
    }
    Ok(())
}

fn analyze(
    inputs: &[PathBuf],
    weights: &Path,
    chroma: Option<&Path>,
    preset: Preset,
    log2: Option<u8>,
    out: &Path,
    dims: &RawDims,
) -> Result<()> {
    let luma = read_weights(weights)?;
    if luma.config.variant != Variant::Luma {
        bail!("{}: expected luma weights, found {}", weights.display(), luma.config.variant);
    }
    let chroma = match chroma {
        Some(p) => {
            let w = read_weights(p)?;
            if w.config.variant != Variant::Chroma {
                bail!("{}: expected chroma weights, found {}", p.display(), w.config.variant);
            }
            Some(w)
        }
        None => None,
    };
    let mut all = Vec::new();
    for path in inputs {
        all.extend(frames::load(path, dims)?.1);
    }
    let params = predict_params(&luma, chroma.as_ref(), &all, log2, patch_size(preset))?;
    frames::write_params(out, &params)
}

struct EvalRow {
    id: String,
    kld: f64,
    jsd_nss: f64,
    std_ref: f64,
    std_test: f64,
}

fn eval_row(id: String, clean: &Plane, reference: &Plane, test: &Plane) -> Result<EvalRow> {
    Ok(EvalRow {
        kld: residual_kld(reference, test, clean).with_context(|| format!("entry {id}"))?,
        jsd_nss: jsd_nss(reference, test, clean).with_context(|| format!("entry {id}"))?,
        std_ref: residual(reference, clean)?.std(),
        std_test: residual(test, clean)?.std(),
        id,
    })
}

fn luma_of(path: &Path) -> Result<Plane> {
    Ok(load_frame(path)?.0.y)
}

fn eval(
    manifest: Option<PathBuf>,
    test_dir: Option<PathBuf>,
    clean: Option<PathBuf>,
    reference: Option<PathBuf>,
    test: Option<PathBuf>,
    out: Option<&Path>,
) -> Result<()> {
    let rows = match (manifest, test_dir, clean, reference, test) {
        (Some(m), Some(dir), None, None, None) => {
            let manifest = DatasetManifest::load(&m)?;
            manifest
                .entries
                .par_iter()
                .map(|e| -> Result<EvalRow> {
                    let name = e.grainy.file_name().context("manifest entry without file name")?;
                    eval_row(
                        e.id.to_string(),
                        &e.load_clean_crop()?.y,
                        &e.load_grainy(&manifest.root)?.y,
                        &luma_of(&dir.join(name))?,
                    )
                })
                .collect::<Result<Vec<_>>>()?
        }
        (None, None, Some(c), Some(r), Some(t)) => {
            let id = t.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            vec![eval_row(id, &luma_of(&c)?, &luma_of(&r)?, &luma_of(&t)?)?]
        }
        _ => bail!("eval needs either --manifest with --test-dir, or --clean, --reference and --test"),
    };
    let mut tsv = format!("# kld direction: reference->test; nss measure: {JSD_NSS_VARIANT}\n");
    tsv.push_str("id\tkld\tjsd_nss\tstd_ref\tstd_test\n");
    for r in &rows {
        let _ = writeln!(tsv, "{}\t{:.6}\t{:.6}\t{:.4}\t{:.4}", r.id, r.kld, r.jsd_nss, r.std_ref, r.std_test);
    }
    match out {
        Some(p) => write_text(p, &tsv),
        None => {
            print!("{tsv}");
            Ok(())
        }
    }
}

fn roundtrip(
    seed: u64,
    weights: &Path,
    preset: Preset,
    count: usize,
    clean_dir: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    if count == 0 {
        bail!("--count must be positive");
    }
    let luma = read_weights(weights)?;
    let tile = patch_size(preset);
    let cleans: Vec<PathBuf> = match clean_dir {
        Some(d) => list_clean_frames(d)?,
        None => Vec::new(),
    };
    let sets = sample_param_sets(count, &SamplerConstraints::default(), derive(seed, &[tag("roundtrip")]));
    let results = (0..count)
        .into_par_iter()
        .map(|i| -> Result<Agreement> {
            let clean = match cleans.get(i % cleans.len().max(1)) {
                Some(p) => {
                    let f = load_frame(p)?.0;
                    let (w, h) = (f.width().min(tile) & !1, f.height().min(tile) & !1);
                    f.crop(0, 0, w, h)?
                }
                None => Frame::from_luma(
                    synthetic_clean_frame(tile, tile, CleanStyle::Smooth, false, derive(seed, &[tag("roundtrip-clean"), i as u64])).y,
                ),
            };
            let truth = &sets[i];
            let grainy = synthesize_frame(&clean, truth, derive(seed, &[tag("roundtrip-grain"), i as u64]))?;
            let pred = predict_params(&luma, None, std::slice::from_ref(&grainy), None, tile)?;
            Agreement::measure(truth, &pred, &clean.y).context("luma component missing from estimate")
        })
        .collect::<Result<Vec<_>>>()?;

    let mut tsv = String::from("entry\tintensity\tcutoff_true\tcutoff_pred\tscale_true\tscale_pred\tlog2_true\tlog2_pred\n");
    for (i, a) in results.iter().enumerate() {
        let _ = writeln!(
            tsv,
            "{i}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            a.intensity, a.cutoff_true, a.cutoff_pred, a.scale_true, a.scale_pred, a.log2_true, a.log2_pred
        );
    }
    let n = results.len() as f64;
    let rate = |f: &dyn Fn(&Agreement) -> bool| results.iter().filter(|a| f(a)).count() as f64 / n;
    let summary = format!(
        "cutoff_within_1\t{:.3}\nlog2_exact\t{:.3}\nscale_within_10\t{:.3}\n",
        rate(&|a| a.cutoff_within(1)),
        rate(&|a| a.log2_exact()),
        rate(&|a| a.scale_true.abs_diff(a.scale_pred) <= 10),
    );
    print!("{summary}");
    if let Some(p) = out {
        write_text(p, &format!("{tsv}# summary\n{summary}"))?;
    }
    Ok(())
}
