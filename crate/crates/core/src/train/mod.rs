//! Fixture trainer. Produces the pretrained networks that the pruners work
//! on; pruning itself never touches gradients.

mod backward;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample, Target};
use crate::error::{Error, Result};
use crate::graph::{argmax, run, ModelGraph, ParamSource};
use crate::rng::{substream, Stream};
use crate::tensor::Tensor;

pub use backward::loss_and_grads;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CrossEntropy,
    PixelwiseCrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.05, epochs: 50, batch_size: 16, seed: 0, loss: Loss::CrossEntropy }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    /// Percent; pixel accuracy for segmentation.
    pub accuracy: f64,
}

/// Per-node `f64` copies of the parameters, aligned with `model.nodes()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params64 {
    pub(crate) weights: Vec<Vec<f64>>,
    pub(crate) bias: Vec<Option<Vec<f64>>>,
}

impl Params64 {
    pub fn from_model(model: &ModelGraph) -> Self {
        let widen = |t: &Tensor| t.data().iter().map(|&v| f64::from(v)).collect::<Vec<_>>();
        Params64 {
            weights: model.nodes().iter().map(|n| n.weights.as_ref().map(widen).unwrap_or_default()).collect(),
            bias: model.nodes().iter().map(|n| n.bias.as_ref().map(widen)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Params64 {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            bias: self.bias.iter().map(|b| b.as_ref().map(|b| vec![0.0; b.len()])).collect(),
        }
    }

    /// Flat view: every weight then bias value, node by node.
    pub(crate) fn slots(&self) -> Vec<(usize, bool, usize)> {
        let mut out = Vec::new();
        for (i, w) in self.weights.iter().enumerate() {
            out.extend((0..w.len()).map(|j| (i, false, j)));
            if let Some(b) = &self.bias[i] {
                out.extend((0..b.len()).map(|j| (i, true, j)));
            }
        }
        out
    }

    pub(crate) fn get_mut(&mut self, (node, is_bias, j): (usize, bool, usize)) -> &mut f64 {
        if is_bias {
            &mut self.bias[node].as_mut().expect("bias slot")[j]
        } else {
            &mut self.weights[node][j]
        }
    }

    pub(crate) fn get(&self, (node, is_bias, j): (usize, bool, usize)) -> f64 {
        if is_bias {
            self.bias[node].as_ref().expect("bias slot")[j]
        } else {
            self.weights[node][j]
        }
    }
}

impl ParamSource<f64> for Params64 {
    fn weights(&self, node: usize) -> &[f64] {
        &self.weights[node]
    }

    fn bias(&self, node: usize) -> Option<&[f64]> {
        self.bias[node].as_deref()
    }
}

/// Re-initializes every parametric layer: weights uniform in
/// `±sqrt(6 / (fan_in + fan_out))`, biases zero.
pub fn init_weights(model: &mut ModelGraph, seed: u64) {
    let mut rng = substream(seed, Stream::Init);
    for n in model.nodes_mut() {
        let Some(w) = n.weights.as_mut() else { continue };
        let shape = w.shape().to_vec();
        let receptive: usize = shape[2..].iter().product();
        let fan_in = shape[1] * receptive;
        let fan_out = shape[0] * receptive;
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        for v in w.data_mut() {
            *v = dist.sample(&mut rng) as f32;
        }
        if let Some(b) = n.bias.as_mut() {
            b.data_mut().fill(0.0);
        }
    }
}

fn check_compat(model: &ModelGraph, dataset: &Dataset, loss: Loss) -> Result<()> {
    if model.num_classes() != dataset.num_classes {
        return Err(Error::InvalidArgument(format!(
            "model predicts {} classes, dataset has {}",
            model.num_classes(),
            dataset.num_classes
        )));
    }
    let out = model.output_shape();
    for s in &dataset.samples {
        match (&s.target, loss) {
            (Target::Label(_), Loss::CrossEntropy) if out.is_vector() => {}
            (Target::Mask(m), Loss::PixelwiseCrossEntropy) if m.len() == out.spatial() => {}
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "loss {loss:?} does not fit a {:?} output with this dataset's targets",
                    out
                )))
            }
        }
        if s.input.shape() != model.input_shape() {
            return Err(Error::Dimension { expected: model.input_shape().to_vec(), actual: s.input.shape().to_vec() });
        }
    }
    Ok(())
}

/// Mini-batch SGD without momentum. Bit-reproducible for a given model and
/// `config.seed`.
pub fn train(model: &ModelGraph, dataset: &Dataset, config: &TrainConfig) -> Result<(ModelGraph, Vec<EpochLog>)> {
    config.validate()?;
    check_compat(model, dataset, config.loss)?;
    let mut params = Params64::from_model(model);
    let mut rng = substream(config.seed, Stream::Train);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut grads = params.zeros_like();
            for &i in batch {
                let s = &dataset.samples[i];
                let (loss, hits, units) = backward::accumulate(model, &params, s, &mut grads);
                total += loss;
                correct += hits;
                seen += units;
            }
            let scale = config.learning_rate / batch.len() as f64;
            for slot in params.slots() {
                let g = grads.get(slot);
                *params.get_mut(slot) -= scale * g;
            }
        }
        let mean_loss = total / dataset.len().max(1) as f64;
        if !mean_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        let accuracy = 100.0 * correct as f64 / seen.max(1) as f64;
        log::debug!("epoch {epoch}: loss {mean_loss:.5} acc {accuracy:.2}");
        log.push(EpochLog { epoch, loss: mean_loss, accuracy });
    }
    Ok((write_back(model, &params), log))
}

fn write_back(model: &ModelGraph, params: &Params64) -> ModelGraph {
    let mut out = model.clone();
    for (i, n) in out.nodes_mut().iter_mut().enumerate() {
        if let Some(w) = n.weights.as_mut() {
            for (d, &s) in w.data_mut().iter_mut().zip(&params.weights[i]) {
                *d = s as f32;
            }
        }
        if let (Some(b), Some(src)) = (n.bias.as_mut(), &params.bias[i]) {
            for (d, &s) in b.data_mut().iter_mut().zip(src) {
                *d = s as f32;
            }
        }
    }
    out
}

/// Training log as CSV with header `epoch,loss,accuracy`.
pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,loss,accuracy\n");
    for e in log {
        s.push_str(&format!("{},{:.9},{:.6}\n", e.epoch, e.loss, e.accuracy));
    }
    s
}

/// Largest relative error between backprop gradients and central finite
/// differences (step `1e-6`, all in `f64`) over up to `max_params`
/// parameters spread evenly across the model.
pub fn gradient_check(model: &ModelGraph, sample: &Sample, max_params: usize) -> f64 {
    const STEP: f64 = 1e-6;
    let params = Params64::from_model(model);
    let (_, analytic) = loss_and_grads(model, &params, sample);
    let slots = params.slots();
    let stride = (slots.len() / max_params.max(1)).max(1);
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for &slot in slots.iter().step_by(stride) {
        let orig = params.get(slot);
        *probe.get_mut(slot) = orig + STEP;
        let (up, _) = loss_only(model, &probe, sample);
        *probe.get_mut(slot) = orig - STEP;
        let (down, _) = loss_only(model, &probe, sample);
        *probe.get_mut(slot) = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic.get(slot);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

fn loss_only(model: &ModelGraph, params: &Params64, sample: &Sample) -> (f64, usize) {
    let input: Vec<f64> = sample.input.data().iter().map(|&v| f64::from(v)).collect();
    let acts = run(model, params, &input);
    let out = &acts[model.output_index()];
    let (loss, _, hits) = backward::loss_grad(out, model.output_shape(), &sample.target);
    (loss, hits)
}

/// Builds a Glorot-initialized copy of `model`.
pub fn initialized(mut model: ModelGraph, seed: u64) -> ModelGraph {
    init_weights(&mut model, seed);
    model
}

/// Plain accuracy helper used by training tests and fixtures.
pub fn dataset_accuracy(model: &ModelGraph, dataset: &Dataset) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for s in &dataset.samples {
        let acts = run(model, model, s.input.data());
        let out = &acts[model.output_index()];
        match &s.target {
            Target::Label(y) => {
                total += 1;
                correct += usize::from(argmax(out) == *y);
            }
            Target::Mask(m) => {
                let shape = model.output_shape();
                let area = shape.spatial();
                for (p, &k) in m.iter().enumerate() {
                    let col: Vec<f32> = (0..shape.c).map(|c| out[c * area + p]).collect();
                    total += 1;
                    correct += usize::from(argmax(&col) == k as usize);
                }
            }
        }
    }
    100.0 * correct as f64 / total.max(1) as f64
}
