use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::labels::{encode_labels, Labels};
use super::network::{build_network, patches_to_tensor, record, HeadVars, ModelWeights, PredictionResult};
use super::{AnalyzerError, NetworkConfig, Preset, Variant};
use crate::dataset_gen::DatasetManifest;
use crate::fgc_sei::Component;
use crate::media_io::Plane;
use crate::seed::{derive, tag};
use crate::tensor::{AdamConfig, AdamState, Tape, Tensor, Var};

pub const LOSS_CSV_HEADER: &str = "iteration,total,cutoff,intervals,log2,scaling";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    /// weights of the cutoff, intervals, log2 and scaling terms
    pub lambdas: [f32; 4],
    /// sharpness of the exponential L1 boundary loss
    pub beta: f32,
    /// side of the square crops fed to the network
    pub patch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(preset: Preset, seed: u64) -> Self {
        let (batch_size, iterations, patch_size) = match preset {
            Preset::Paper => (64, 10_000, 256),
            Preset::Desk => (16, 2000, 64),
        };
        Self {
            batch_size,
            learning_rate: 5e-4,
            iterations,
            lambdas: [100.0, 1.0, 0.1, 100.0],
            beta: 5.0,
            patch_size,
            seed,
        }
    }

    pub fn check(&self) -> Result<(), AnalyzerError> {
        let ok = self.batch_size > 0
            && self.patch_size > 0
            && self.learning_rate > 0.0
            && self.beta > 0.0
            && self.lambdas.iter().all(|&l| l >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(AnalyzerError::Tensor(crate::tensor::TensorError::InvalidArgument(format!(
                "invalid training configuration {self:?}"
            ))))
        }
    }
}

/// Unweighted loss terms and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub cutoff: f64,
    /// exponential L1 plus monotonicity on the boundaries
    pub intervals: f64,
    pub log2: f64,
    pub scaling: f64,
}

impl LossBreakdown {
    pub fn csv_row(&self, iteration: usize) -> String {
        format!(
            "{iteration},{},{},{},{},{}",
            self.total, self.cutoff, self.intervals, self.log2, self.scaling
        )
    }
}

fn loss_on_tape(
    tape: &mut Tape<f32>,
    config: &NetworkConfig,
    heads: &HeadVars,
    labels: &[&Labels],
    lambdas: [f32; 4],
    beta: f32,
) -> Result<(Var, LossBreakdown), AnalyzerError> {
    let n = labels.len();
    let k = config.n_intervals;
    let cutoff_targets: Vec<usize> = labels.iter().flat_map(|l| l.cutoff.iter().copied()).collect();
    let scaling_targets: Vec<usize> = labels.iter().flat_map(|l| l.scaling.iter().copied()).collect();
    let log2_targets: Vec<usize> = labels.iter().map(|l| l.log2).collect();
    let bounds: Vec<f32> = labels.iter().flat_map(|l| l.boundaries.iter().copied()).collect();
    for l in labels {
        if l.cutoff.len() != k || l.scaling.len() != k || l.boundaries.len() != 2 * k {
            return Err(AnalyzerError::IntervalCount {
                expected: k,
                actual: l.cutoff.len(),
            });
        }
    }

    let cut = tape.reshape(heads.cutoff, &[n * k, config.cutoff_values.len()])?;
    let l_cut = tape.softmax_cross_entropy(cut, &cutoff_targets)?;
    let exp_l1 = tape.exp_l1_loss(heads.boundaries, &Tensor::from_vec(&[n, 2 * k], bounds)?, beta)?;
    let mono = tape.monotonicity_loss(heads.boundaries)?;
    let l_int = tape.weighted_sum(&[(exp_l1, 1.0), (mono, 1.0)])?;
    let l_log2 = tape.softmax_cross_entropy(heads.log2, &log2_targets)?;
    let scale = tape.reshape(heads.scaling, &[n * k, config.scale_values.len()])?;
    let l_scale = tape.softmax_cross_entropy(scale, &scaling_targets)?;
    let total = tape.weighted_sum(&[
        (l_cut, lambdas[0]),
        (l_int, lambdas[1]),
        (l_log2, lambdas[2]),
        (l_scale, lambdas[3]),
    ])?;
    let v = |t: &Tape<f32>, x: Var| t.value(x).data()[0] as f64;
    let breakdown = LossBreakdown {
        total: v(tape, total),
        cutoff: v(tape, l_cut),
        intervals: v(tape, l_int),
        log2: v(tape, l_log2),
        scaling: v(tape, l_scale),
    };
    Ok((total, breakdown))
}

/// Loss of precomputed head outputs against their targets.
pub fn compute_loss(
    preds: &[PredictionResult],
    labels: &[Labels],
    config: &NetworkConfig,
    train: &TrainConfig,
) -> Result<LossBreakdown, AnalyzerError> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(AnalyzerError::EmptyDataset);
    }
    let n = preds.len();
    let stack = |f: fn(&PredictionResult) -> &[f32]| -> Vec<f32> { preds.iter().flat_map(|p| f(p).iter().copied()).collect() };
    let [o_log2, o_scale, o_cut, o_bounds] = config.head_outputs();
    let mut tape = Tape::new();
    let mut constant = |data: Vec<f32>, width: usize| -> Result<Var, AnalyzerError> {
        Ok(tape.constant(Tensor::from_vec(&[n, width], data)?))
    };
    let heads = HeadVars {
        log2: constant(stack(|p| p.log2_logits.as_slice()), o_log2)?,
        scaling: constant(stack(|p| p.scaling_logits.as_slice()), o_scale)?,
        cutoff: constant(stack(|p| p.cutoff_logits.as_slice()), o_cut)?,
        boundaries: constant(stack(|p| p.boundaries.as_slice()), o_bounds)?,
    };
    let refs: Vec<&Labels> = labels.iter().collect();
    Ok(loss_on_tape(&mut tape, config, &heads, &refs, train.lambdas, train.beta)?.1)
}

/// One single-channel training patch and its targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub patch: Plane,
    pub labels: Labels,
}

/// Luma planes for the luma model; every Cb and Cr plane as its own sample
/// for the chroma model.
pub fn load_training_samples(
    manifest: &DatasetManifest,
    config: &NetworkConfig,
) -> Result<Vec<TrainSample>, AnalyzerError> {
    let components: &[Component] = match config.variant {
        Variant::Luma => &[Component::Y],
        Variant::Chroma => &[Component::Cb, Component::Cr],
    };
    let mut out = Vec::new();
    for e in &manifest.entries {
        let params = e.load_params(&manifest.root)?;
        let frame = e.load_grainy(&manifest.root)?;
        for &c in components {
            let Some(model) = params.component(c) else { continue };
            out.push(TrainSample {
                patch: frame.planes()[c.index()].clone(),
                labels: encode_labels(model, params.log2_scale_factor, config)?,
            });
        }
    }
    Ok(out)
}

/// Stateful optimizer loop over an in-memory sample set.
pub struct Trainer<'a> {
    samples: &'a [TrainSample],
    pub weights: ModelWeights,
    pub config: TrainConfig,
    adam: AdamState<f32>,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    crop: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(samples: &'a [TrainSample], network: &NetworkConfig, config: &TrainConfig) -> Result<Self, AnalyzerError> {
        config.check()?;
        if samples.is_empty() {
            return Err(AnalyzerError::EmptyDataset);
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive(config.seed, &[tag("init")]));
        let weights = build_network(network, &mut init_rng);
        let crop = samples
            .iter()
            .map(|s| s.patch.width().min(s.patch.height()))
            .min()
            .unwrap_or(0)
            .min(config.patch_size);
        let adam = AdamState::new(
            AdamConfig {
                learning_rate: config.learning_rate,
                ..AdamConfig::default()
            },
            &weights.tensors.iter().map(|(_, t)| t).collect::<Vec<_>>(),
        );
        Ok(Self {
            samples,
            weights,
            config: config.clone(),
            adam,
            rng: ChaCha8Rng::seed_from_u64(derive(config.seed, &[tag("batches")])),
            order: Vec::new(),
            cursor: 0,
            crop,
        })
    }

    fn next_index(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.order = (0..self.samples.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    /// One forward/backward pass and Adam update on a fresh batch.
    pub fn step(&mut self) -> Result<LossBreakdown, AnalyzerError> {
        let mut patches = Vec::with_capacity(self.config.batch_size);
        let mut labels = Vec::with_capacity(self.config.batch_size);
        for _ in 0..self.config.batch_size {
            let s = &self.samples[self.next_index()];
            let (w, h) = (s.patch.width(), s.patch.height());
            let x = self.rng.gen_range(0..=w - self.crop);
            let y = self.rng.gen_range(0..=h - self.crop);
            patches.push(s.patch.crop(x, y, self.crop, self.crop).expect("crop fits"));
            labels.push(&s.labels);
        }
        let input = patches_to_tensor(&patches.iter().collect::<Vec<_>>())?;

        let mut tape = Tape::new();
        let params: Vec<Var> = self.weights.tensors.iter().map(|(_, t)| tape.param(t)).collect();
        let x = tape.constant(input);
        let heads = record(&mut tape, &self.weights.config, &params, x)?;
        let (loss, breakdown) = loss_on_tape(
            &mut tape,
            &self.weights.config,
            &heads,
            &labels,
            self.config.lambdas,
            self.config.beta,
        )?;
        tape.backward(loss)?;
        for ((_, t), &v) in self.weights.tensors.iter_mut().zip(&params) {
            t.zero_grad();
            match tape.grad(v) {
                Some(g) => t.accumulate_grad(g)?,
                None => t.accumulate_grad(&vec![0.0; t.len()])?,
            }
        }
        let mut refs: Vec<&mut Tensor<f32>> = self.weights.tensors.iter_mut().map(|(_, t)| t).collect();
        self.adam.step(&mut refs)?;
        Ok(breakdown)
    }

    /// Gradient of the last step per parameter tensor.
    pub fn gradients(&self) -> impl Iterator<Item = (&str, Option<&[f32]>)> {
        self.weights.tensors.iter().map(|(n, t)| (n.as_str(), t.grad()))
    }
}

/// Runs `config.iterations` steps; `progress` sees every iteration's loss.
pub fn train(
    samples: &[TrainSample],
    network: &NetworkConfig,
    config: &TrainConfig,
    mut progress: impl FnMut(usize, &LossBreakdown),
) -> Result<(ModelWeights, Vec<LossBreakdown>), AnalyzerError> {
    let mut trainer = Trainer::new(samples, network, config)?;
    let mut history = Vec::with_capacity(config.iterations);
    for i in 0..config.iterations {
        let l = trainer.step()?;
        progress(i, &l);
        history.push(l);
    }
    let mut weights = trainer.weights;
    for (_, t) in &mut weights.tensors {
        // drop the last gradient so saved and returned weights compare equal
        *t = Tensor::from_vec(t.shape(), t.data().to_vec())?;
    }
    Ok((weights, history))
}

/// Reads a manifest and trains on its samples.
pub fn train_from_manifest(
    manifest_path: &Path,
    network: &NetworkConfig,
    config: &TrainConfig,
    progress: impl FnMut(usize, &LossBreakdown),
) -> Result<(ModelWeights, Vec<LossBreakdown>), AnalyzerError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let samples = load_training_samples(&manifest, network)?;
    train(&samples, network, config, progress)
}
