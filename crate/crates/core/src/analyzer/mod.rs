//! Grain parameter estimator: a small residual CNN with four heads
//! (log2 scale factor, per-interval scaling factor, per-interval cutoff and
//! interval boundaries), its training loop and the conversion of head outputs
//! into valid [`FilmGrainParams`](crate::fgc_sei::FilmGrainParams).

mod labels;
mod network;
mod predict;
mod train;
mod weights_io;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

pub use labels::{decode_labels, encode_labels, repair_boundaries, Labels};
pub use network::{build_network, forward, forward_tensor, patches_to_tensor, ModelWeights, PredictionResult};
pub use predict::{predict_component, predict_params, prediction_to_component, Agreement};
pub use train::{
    compute_loss, load_training_samples, train, train_from_manifest, LossBreakdown, TrainConfig, TrainSample, Trainer,
    LOSS_CSV_HEADER,
};
pub use weights_io::{encode_weights, load_weights, read_weights, save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

use crate::dataset_gen::DatasetError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum AnalyzerError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("label {field} = {value} outside the classes {allowed}")]
    LabelOutOfRange {
        field: String,
        value: i64,
        allowed: String,
    },
    #[error("expected {expected} intervals, got {actual}")]
    IntervalCount { expected: usize, actual: usize },
    #[error("network input must have 1 channel, got {0}")]
    WrongChannels(usize),
    #[error("patches must share one size: {0}")]
    PatchSize(String),
    #[error("no training samples")]
    EmptyDataset,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    BadWeights { path: PathBuf, detail: String },
    #[error("{path}: weights were trained for {found}, expected {expected}")]
    ConfigMismatch {
        path: PathBuf,
        found: String,
        expected: String,
    },
    #[error("no frames to analyze")]
    NoFrames,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Luma,
    Chroma,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Luma => "luma",
            Variant::Chroma => "chroma",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "luma" | "y" => Ok(Variant::Luma),
            "chroma" | "c" => Ok(Variant::Chroma),
            other => Err(format!("unknown variant '{other}' (expected luma or chroma)")),
        }
    }
}

/// Named size presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    /// full-size network and training schedule
    Paper,
    /// reduced backbone, patches and schedule for CPU-only runs
    Desk,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(format!("unknown preset '{other}' (expected paper or desk)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        })
    }
}

/// Hidden widths of the four heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HeadDims {
    pub log2: usize,
    pub scaling: usize,
    pub cutoff: usize,
    pub intervals: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NetworkConfig {
    pub variant: Variant,
    pub n_intervals: usize,
    pub backbone_channels: usize,
    pub residual_blocks: usize,
    /// log2 scale factor of each class
    pub log2_values: Vec<u8>,
    /// scaling factor of each class
    pub scale_values: Vec<u8>,
    /// cutoff of each class
    pub cutoff_values: Vec<u8>,
    pub hidden: HeadDims,
}

impl NetworkConfig {
    pub fn new(variant: Variant, preset: Preset) -> Self {
        let (n_intervals, cutoff_values) = match variant {
            Variant::Luma => (16, (3..=14).collect()),
            Variant::Chroma => (6, (4..=8).collect()),
        };
        Self {
            variant,
            n_intervals,
            backbone_channels: match preset {
                Preset::Paper => 64,
                Preset::Desk => 32,
            },
            residual_blocks: 3,
            log2_values: vec![3, 4, 5],
            scale_values: (0..=250).step_by(10).collect(),
            cutoff_values,
            hidden: HeadDims {
                log2: 64,
                scaling: 1024,
                cutoff: 512,
                intervals: 512,
            },
        }
    }

    pub fn paper(variant: Variant) -> Self {
        Self::new(variant, Preset::Paper)
    }

    pub fn desk(variant: Variant) -> Self {
        Self::new(variant, Preset::Desk)
    }

    /// Output widths of the log2, scaling, cutoff and boundary heads.
    pub fn head_outputs(&self) -> [usize; 4] {
        let n = self.n_intervals;
        [
            self.log2_values.len(),
            n * self.scale_values.len(),
            n * self.cutoff_values.len(),
            2 * n,
        ]
    }

    pub(crate) fn describe(&self) -> String {
        format!(
            "{} network: {} intervals, {} channels, {} blocks, classes {}/{}/{}, hidden {}/{}/{}/{}",
            self.variant,
            self.n_intervals,
            self.backbone_channels,
            self.residual_blocks,
            self.log2_values.len(),
            self.scale_values.len(),
            self.cutoff_values.len(),
            self.hidden.log2,
            self.hidden.scaling,
            self.hidden.cutoff,
            self.hidden.intervals
        )
    }
}
