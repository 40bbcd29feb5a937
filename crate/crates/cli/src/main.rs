mod commands;
mod frames;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use grainkit::analyzer::{Preset, Variant};
use grainkit::dataset_gen::CleanStyle;
use grainkit::fgc_sei::Component;

/// Film grain synthesis, dataset generation and parameter estimation.
#[derive(Parser, Debug)]
#[command(name = "grainkit", version)]
struct Cli {
    /// master seed; every random choice derives from it
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// worker threads for parallel stages
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RawDims {
    /// frame width of raw .yuv input
    #[arg(long)]
    width: Option<usize>,
    /// frame height of raw .yuv input
    #[arg(long)]
    height: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample random parameter sets (.fgcs binary or .txt text)
    GenParams {
        #[arg(long)]
        out: PathBuf,
        /// number of sets; above 1, `--out` is a directory
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Write synthetic grain-free frames as PGM (or PPM with --colour)
    GenClean {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long, default_value = "smooth")]
        style: CleanStyle,
        #[arg(long)]
        colour: bool,
    },
    /// Build a paired clean/grainy dataset with a manifest
    GenDataset {
        /// directory of clean PGM/PPM frames
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "paper")]
        preset: Preset,
        #[arg(long, default_value_t = 300)]
        param_sets: usize,
        #[arg(long, default_value_t = 1)]
        crops_per_image: usize,
        /// defaults to the preset's patch size
        #[arg(long)]
        crop_size: Option<usize>,
    },
    /// Add grain to clean frames
    Synthesize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        dims: RawDims,
    },
    /// Train the luma or chroma estimator on a dataset manifest
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "luma")]
        variant: Variant,
        #[arg(long, default_value = "paper")]
        preset: Preset,
        /// weights output
        #[arg(long)]
        out: PathBuf,
        /// per-iteration loss CSV
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Estimate parameters from grainy frames
    Analyze {
        /// grainy PGM/PPM/YUV inputs
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// luma weights
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        chroma_weights: Option<PathBuf>,
        #[arg(long, default_value = "paper")]
        preset: Preset,
        /// fixed log2 scale factor instead of the predicted one
        #[arg(long)]
        log2: Option<u8>,
        /// .fgcs or .txt
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        dims: RawDims,
    },
    /// Grain similarity metrics as TSV
    Eval {
        /// dataset manifest holding clean crops and reference grain
        #[arg(long, conflicts_with_all = ["clean", "reference"])]
        manifest: Option<PathBuf>,
        /// directory of test images named like the manifest's grainy files
        #[arg(long, requires = "manifest")]
        test_dir: Option<PathBuf>,
        #[arg(long, requires_all = ["reference", "test"])]
        clean: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scaling factor and cutoff curves of one component (SVG + TSV)
    Plot {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value = "y")]
        component: ComponentArg,
        /// SVG output; the table goes next to it with a .tsv extension
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample parameters, synthesize, analyze and report agreement
    Roundtrip {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value = "desk")]
        preset: Preset,
        #[arg(long, default_value_t = 50)]
        count: usize,
        /// clean frames to draw from; synthetic frames when absent
        #[arg(long)]
        clean: Option<PathBuf>,
        /// agreement report (TSV)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug)]
struct ComponentArg(Component);

impl std::str::FromStr for ComponentArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "y" | "luma" => Ok(Self(Component::Y)),
            "cb" | "u" => Ok(Self(Component::Cb)),
            "cr" | "v" => Ok(Self(Component::Cr)),
            other => Err(format!("unknown component '{other}' (expected y, cb or cr)")),
        }
    }
}

/// Long flags of the subcommand named in `args`, or of the top level.
fn valid_flags(args: impl Iterator<Item = String>) -> Vec<String> {
    let root = Cli::command();
    let names: Vec<String> = args.collect();
    let cmd = root
        .get_subcommands()
        .find(|s| names.iter().any(|a| a == s.get_name()))
        .unwrap_or(&root);
    let mut flags: Vec<String> = cmd
        .get_arguments()
        .chain(root.get_arguments())
        .filter_map(|a| a.get_long().map(|l| format!("--{l}")))
        .collect();
    flags.sort();
    flags.dedup();
    flags
}

/// Parses `args` (program name first), runs the command and maps the outcome
/// to an exit status: 0 success, 1 usage error, 2 data error.
fn exit_code<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if e.kind() == ErrorKind::UnknownArgument {
                let words = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned());
                eprintln!("valid flags: {}", valid_flags(words).join(" "));
            }
            return usage_status(&e);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 2;
        }
    };
    match pool.install(|| commands::run(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

/// Help and version requests are not errors.
fn usage_status(e: &clap::Error) -> u8 {
    if e.use_stderr() {
        1
    } else {
        0
    }
}

fn main() -> ExitCode {
    ExitCode::from(exit_code(std::env::args_os()))
}
