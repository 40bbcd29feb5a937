use rand::Rng;

use super::{AnalyzerError, NetworkConfig};
use crate::media_io::Plane;
use crate::tensor::{he_init, ResidualWeights, Tape, Tensor, Var};

/// Named parameter tensors plus the configuration they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub config: NetworkConfig,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

/// Raw head outputs for one input patch.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionResult {
    /// flattened `[l1, u1, l2, u2, ..]`, each in [0, 1]
    pub boundaries: Vec<f32>,
    /// `n_intervals` rows of scaling class logits
    pub scaling_logits: Vec<f32>,
    /// `n_intervals` rows of cutoff class logits
    pub cutoff_logits: Vec<f32>,
    pub log2_logits: Vec<f32>,
}

pub(crate) const HEADS: [&str; 4] = ["log2", "scaling", "cutoff", "intervals"];

/// `(name, shape, fan_in)` of every parameter in storage order.
pub(crate) fn layout(config: &NetworkConfig) -> Vec<(String, Vec<usize>, usize)> {
    let c = config.backbone_channels;
    let mut out = vec![
        ("stem.w".to_string(), vec![c, 1, 3, 3], 9),
        ("stem.b".to_string(), vec![c], 9),
    ];
    for i in 0..config.residual_blocks {
        for conv in ["conv1", "conv2"] {
            out.push((format!("block{i}.{conv}.w"), vec![c, c, 3, 3], 9 * c));
            out.push((format!("block{i}.{conv}.b"), vec![c], 9 * c));
        }
    }
    let hidden = [
        config.hidden.log2,
        config.hidden.scaling,
        config.hidden.cutoff,
        config.hidden.intervals,
    ];
    for ((head, h), o) in HEADS.iter().zip(hidden).zip(config.head_outputs()) {
        out.push((format!("head.{head}.fc1.w"), vec![h, c], c));
        out.push((format!("head.{head}.fc1.b"), vec![h], c));
        out.push((format!("head.{head}.fc2.w"), vec![o, h], h));
        out.push((format!("head.{head}.fc2.b"), vec![o], h));
    }
    out
}

/// He-initialized weights; biases start at zero.
pub fn build_network<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> ModelWeights {
    let tensors = layout(config)
        .into_iter()
        .map(|(name, shape, fan_in)| {
            let t = if name.ends_with(".b") {
                Tensor::zeros(&shape)
            } else {
                he_init(&shape, fan_in, rng).expect("layout shapes are non-empty")
            };
            (name, t)
        })
        .collect();
    ModelWeights {
        config: config.clone(),
        tensors,
    }
}

impl ModelWeights {
    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.len()).sum()
    }
}

/// Tape handles of the four head outputs.
#[derive(Clone, Copy, Debug)]
pub(crate) struct HeadVars {
    pub log2: Var,
    pub scaling: Var,
    pub cutoff: Var,
    /// after the sigmoid
    pub boundaries: Var,
}

/// Records the network on `tape`; `params` are the weight handles in
/// [`layout`] order.
pub(crate) fn record(
    tape: &mut Tape<f32>,
    config: &NetworkConfig,
    params: &[Var],
    input: Var,
) -> Result<HeadVars, AnalyzerError> {
    let shape = tape.value(input).shape().to_vec();
    if shape.len() != 4 || shape[1] != 1 {
        return Err(AnalyzerError::WrongChannels(shape.get(1).copied().unwrap_or(0)));
    }
    let n = shape[0];
    let mut p = params.iter().copied();
    let mut next = || p.next().expect("params follow the layout");

    let (w, b) = (next(), next());
    let h = tape.conv2d(input, w, b, 1, 1)?;
    let mut h = tape.relu(h);
    for _ in 0..config.residual_blocks {
        let rw = ResidualWeights {
            conv1_w: next(),
            conv1_b: next(),
            conv2_w: next(),
            conv2_b: next(),
        };
        h = tape.residual_block(h, &rw)?;
    }
    let pooled = tape.adaptive_avg_pool(h)?;
    let feature = tape.reshape(pooled, &[n, config.backbone_channels])?;

    let mut outs = [feature; 4];
    for out in &mut outs {
        let (w1, b1, w2, b2) = (next(), next(), next(), next());
        let z = tape.linear(feature, w1, b1)?;
        let z = tape.relu(z);
        *out = tape.linear(z, w2, b2)?;
    }
    let boundaries = tape.sigmoid(outs[3]);
    Ok(HeadVars {
        log2: outs[0],
        scaling: outs[1],
        cutoff: outs[2],
        boundaries,
    })
}

/// Stacks equally sized planes into an `N x 1 x H x W` tensor scaled to [0, 1].
pub fn patches_to_tensor(patches: &[&Plane]) -> Result<Tensor<f32>, AnalyzerError> {
    let first = patches.first().ok_or(AnalyzerError::EmptyDataset)?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(patches.len() * w * h);
    for p in patches {
        if (p.width(), p.height()) != (w, h) {
            return Err(AnalyzerError::PatchSize(format!(
                "{}x{} next to {}x{}",
                p.width(),
                p.height(),
                w,
                h
            )));
        }
        data.extend(p.samples().iter().map(|&s| s as f32 / 255.0));
    }
    Ok(Tensor::from_vec(&[patches.len(), 1, h, w], data)?)
}

/// Forward pass over an `N x 1 x H x W` tensor, one result per sample.
pub fn forward_tensor(weights: &ModelWeights, input: &Tensor<f32>) -> Result<Vec<PredictionResult>, AnalyzerError> {
    let mut tape = Tape::new();
    let params: Vec<Var> = weights
        .tensors
        .iter()
        .map(|(_, t)| tape.constant(t.clone()))
        .collect();
    let x = tape.constant(input.clone());
    let heads = record(&mut tape, &weights.config, &params, x)?;
    let n = input.shape()[0];
    let rows = |v: Var| -> Vec<Vec<f32>> {
        let data = tape.value(v).data();
        data.chunks(data.len() / n).map(<[f32]>::to_vec).collect()
    };
    let (log2, scaling, cutoff, bounds) = (
        rows(heads.log2),
        rows(heads.scaling),
        rows(heads.cutoff),
        rows(heads.boundaries),
    );
    Ok((0..n)
        .map(|i| PredictionResult {
            boundaries: bounds[i].clone(),
            scaling_logits: scaling[i].clone(),
            cutoff_logits: cutoff[i].clone(),
            log2_logits: log2[i].clone(),
        })
        .collect())
}

/// Forward pass over equally sized patches.
pub fn forward(weights: &ModelWeights, patches: &[&Plane]) -> Result<Vec<PredictionResult>, AnalyzerError> {
    forward_tensor(weights, &patches_to_tensor(patches)?)
}
