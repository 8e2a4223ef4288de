//! Scoring functions, the global causal effect, per-class significance and
//! neuron categories.

mod csv;
pub mod stats;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Manifold, Sample, Target, TaskKind};
use crate::error::{Error, Result};
use crate::graph::{argmax, output_probabilities, run, ModelGraph, NeuronId};

pub use self::csv::{parse_results_csv, results_csv};
pub use stats::{paired_t_test, student_t_two_sided, TTest};

/// Lower clamp on `σ(x)` in the relative change of [`causal_effect`].
pub const SCORE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    TrueClassProbability,
    MeanIou,
}

/// Per-sample scores, aligned with a manifold's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub kind: ScoreKind,
    pub values: Vec<f64>,
}

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn select(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.values[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Neutral,
    Critical,
    Detrimental,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Neutral, Category::Critical, Category::Detrimental];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Neutral => "neutral",
            Category::Critical => "critical",
            Category::Detrimental => "detrimental",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Category::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignificanceMode {
    /// One paired test per class subset; any significant class counts.
    PerClassVote,
    /// A single paired test over the pooled manifold.
    GeneralInference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceConfig {
    pub alpha: f64,
    pub mode: SignificanceMode,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig { alpha: 0.05, mode: SignificanceMode::PerClassVote }
    }
}

impl SignificanceConfig {
    /// `alpha = 0` is accepted as the degenerate "nothing is significant" setting.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalResult {
    pub neuron: NeuronId,
    pub xi: f64,
    pub per_class_p: Vec<f64>,
    pub predicates: Vec<bool>,
    pub category: Category,
}

fn check_classes(model: &ModelGraph, manifold: &Manifold) -> Result<()> {
    if model.num_classes() != manifold.num_classes {
        return Err(Error::InvalidArgument(format!(
            "model predicts {} classes but the manifold has {}",
            model.num_classes(),
            manifold.num_classes
        )));
    }
    Ok(())
}

pub(crate) fn output_of(model: &ModelGraph, sample: &Sample) -> Result<Vec<f32>> {
    if sample.input.shape() != model.input_shape() {
        return Err(Error::Dimension { expected: model.input_shape().to_vec(), actual: sample.input.shape().to_vec() });
    }
    let mut acts = run(model, model, sample.input.data());
    Ok(std::mem::take(&mut acts[model.output_index()]))
}

/// Softmax probability of the true class for every manifold sample.
pub fn score_classification(model: &ModelGraph, manifold: &Manifold) -> Result<ScoreVector> {
    check_classes(model, manifold)?;
    let values = manifold
        .samples
        .par_iter()
        .map(|s| {
            let Target::Label(y) = s.target else {
                return Err(Error::InvalidArgument("classification scoring needs labels".into()));
            };
            Ok(output_probabilities(model, &output_of(model, s)?)[y])
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ScoreVector { kind: ScoreKind::TrueClassProbability, values })
}

/// Mean IoU over the classes present in the prediction or the mask.
pub fn mean_iou(pred: &[usize], truth: &[u8], num_classes: usize) -> f64 {
    let mut inter = vec![0usize; num_classes];
    let mut union = vec![0usize; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        let t = t as usize;
        if p == t {
            inter[p] += 1;
            union[p] += 1;
        } else {
            union[p] += 1;
            union[t] += 1;
        }
    }
    let present: Vec<f64> =
        (0..num_classes).filter(|&k| union[k] > 0).map(|k| inter[k] as f64 / union[k] as f64).collect();
    if present.is_empty() {
        1.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

/// Per-pixel argmax over the channel axis.
pub fn pixel_predictions(output: &[f32], channels: usize) -> Vec<usize> {
    let area = output.len() / channels;
    let mut col = vec![0f32; channels];
    (0..area)
        .map(|p| {
            for (c, v) in col.iter_mut().enumerate() {
                *v = output[c * area + p];
            }
            argmax(&col)
        })
        .collect()
}

pub fn score_segmentation(model: &ModelGraph, manifold: &Manifold) -> Result<ScoreVector> {
    check_classes(model, manifold)?;
    let shape = model.output_shape();
    let values = manifold
        .samples
        .par_iter()
        .map(|s| {
            let Target::Mask(mask) = &s.target else {
                return Err(Error::InvalidArgument("segmentation scoring needs masks".into()));
            };
            if mask.len() != shape.spatial() {
                return Err(Error::LengthMismatch { left: mask.len(), right: shape.spatial() });
            }
            let pred = pixel_predictions(&output_of(model, s)?, shape.c);
            Ok(mean_iou(&pred, mask, shape.c))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ScoreVector { kind: ScoreKind::MeanIou, values })
}

/// Scores with the function matching the manifold's task.
pub fn score(model: &ModelGraph, manifold: &Manifold) -> Result<ScoreVector> {
    match manifold.task {
        TaskKind::Classification => score_classification(model, manifold),
        TaskKind::Segmentation => score_segmentation(model, manifold),
    }
}

/// Mean relative score change `(σ* − σ) / max(σ, ε)`.
pub fn causal_effect(base: &ScoreVector, perturbed: &ScoreVector) -> Result<f64> {
    if base.len() != perturbed.len() {
        return Err(Error::LengthMismatch { left: base.len(), right: perturbed.len() });
    }
    if base.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = base.values.iter().zip(&perturbed.values).map(|(&s, &p)| (p - s) / s.max(SCORE_FLOOR)).sum();
    Ok(total / base.len() as f64)
}

/// Neutral when nothing is significant; otherwise the sign of `xi` decides,
/// with `xi = 0` counted as Critical.
pub fn classify_neuron(predicates: &[bool], xi: f64) -> Category {
    if !predicates.iter().any(|&p| p) {
        Category::Neutral
    } else if xi <= 0.0 {
        Category::Critical
    } else {
        Category::Detrimental
    }
}

/// Full causal verdict for one intervention.
pub fn analyze(
    neuron: NeuronId,
    base: &ScoreVector,
    perturbed: &ScoreVector,
    manifold: &Manifold,
    config: &SignificanceConfig,
) -> Result<CausalResult> {
    let xi = causal_effect(base, perturbed)?;
    let c = manifold.num_classes;
    let per_class_p = match config.mode {
        SignificanceMode::PerClassVote => manifold
            .class_members
            .iter()
            .map(|idx| Ok(paired_t_test(&base.select(idx), &perturbed.select(idx))?.p))
            .collect::<Result<Vec<f64>>>()?,
        SignificanceMode::GeneralInference => vec![paired_t_test(&base.values, &perturbed.values)?.p; c],
    };
    let predicates: Vec<bool> = per_class_p.iter().map(|&p| p < config.alpha).collect();
    let category = classify_neuron(&predicates, xi);
    Ok(CausalResult { neuron, xi, per_class_p, predicates, category })
}
