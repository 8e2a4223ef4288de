//! Pruning curves, SAUCE, seed aggregation and summary statistics.

mod svg;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal::{mean_iou, output_of, pixel_predictions, Category, CausalResult};
use crate::coupling::PruneReplay;
use crate::data::{Dataset, Target, TaskKind};
use crate::error::{Error, Result};
use crate::graph::{argmax, ModelGraph};
use crate::pruners::PruneSchedule;

pub use svg::curves_svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    MeanIou,
}

impl MetricKind {
    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::Classification => MetricKind::Accuracy,
            TaskKind::Segmentation => MetricKind::MeanIou,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Grid value: the pruned-parameter budget.
    pub fraction: f64,
    /// Pruned-parameter fraction actually reached within the budget.
    pub achieved: f64,
    /// Schedule prefix length applied.
    pub removed: usize,
    /// Metric in percent.
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningCurve {
    pub metric: MetricKind,
    pub points: Vec<CurvePoint>,
}

impl PruningCurve {
    /// Builds a curve from `(fraction, metric)` pairs.
    pub fn from_points(metric: MetricKind, points: &[(f64, f64)]) -> Result<Self> {
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invalid("curve fractions must be strictly increasing"));
            }
        }
        if points.iter().any(|&(f, m)| !(0.0..=1.0).contains(&f) || !(0.0..=100.0).contains(&m)) {
            return Err(Error::invalid("curve points must lie in [0, 1] × [0, 100]"));
        }
        let points =
            points.iter().map(|&(f, m)| CurvePoint { fraction: f, achieved: f, removed: 0, metric: m }).collect();
        Ok(PruningCurve { metric, points })
    }

    pub fn baseline(&self) -> Option<f64> {
        self.points.first().map(|p| p.metric)
    }
}

/// Evenly spaced fractions `0, 1/steps, …, 1`.
pub fn uniform_grid(steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}

/// The 21-point grid `0.00, 0.05, …, 1.00`.
pub fn default_grid() -> Vec<f64> {
    uniform_grid(20)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.first() != Some(&0.0) {
        return Err(Error::invalid("the fraction grid must start at 0"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
        return Err(Error::invalid("the fraction grid must be strictly increasing within [0, 1]"));
    }
    Ok(())
}

/// Top-1 accuracy in percent.
pub fn accuracy(model: &ModelGraph, data: &Dataset) -> Result<f64> {
    metric(model, data, MetricKind::Accuracy)
}

/// Mean over images of the per-image mean IoU, in percent.
pub fn mean_iou_percent(model: &ModelGraph, data: &Dataset) -> Result<f64> {
    metric(model, data, MetricKind::MeanIou)
}

pub fn metric(model: &ModelGraph, data: &Dataset, kind: MetricKind) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let shape = model.output_shape();
    let per: Vec<f64> = data
        .samples
        .par_iter()
        .map(|s| {
            let out = output_of(model, s)?;
            match (kind, &s.target) {
                (MetricKind::Accuracy, Target::Label(y)) => Ok(if argmax(&out) == *y { 1.0 } else { 0.0 }),
                (MetricKind::MeanIou, Target::Mask(mask)) => {
                    if mask.len() != shape.spatial() {
                        return Err(Error::LengthMismatch { left: mask.len(), right: shape.spatial() });
                    }
                    Ok(mean_iou(&pixel_predictions(&out, shape.c), mask, shape.c))
                }
                _ => Err(Error::invalid("metric does not match the dataset's targets")),
            }
        })
        .collect::<Result<_>>()?;
    Ok(100.0 * per.iter().sum::<f64>() / per.len() as f64)
}

/// Evaluates the schedule at every grid budget.
///
/// At budget `f` the longest schedule prefix whose pruned-parameter fraction
/// stays within `f` is applied. Prefixes are extended incrementally, so each
/// group is physically removed once.
pub fn evaluate_schedule(
    model: &ModelGraph,
    schedule: &PruneSchedule,
    eval_set: &Dataset,
    grid: &[f64],
) -> Result<PruningCurve> {
    check_grid(grid)?;
    if eval_set.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let kind = MetricKind::for_task(eval_set.task());
    let total = model.param_count() as f64;
    let fraction = |m: &ModelGraph| 1.0 - m.param_count() as f64 / total;
    let mut replay = PruneReplay::new(model)?;
    let mut pending: Option<PruneReplay> = None;
    let mut next = 0;
    let mut cached: Option<(usize, f64)> = None;
    let mut points = Vec::with_capacity(grid.len());
    for &budget in grid {
        while next < schedule.entries.len() {
            let candidate = match pending.take() {
                Some(c) => c,
                None => {
                    let mut c = replay.clone();
                    c.remove(&schedule.entries[next].group)?;
                    c
                }
            };
            if fraction(candidate.model()) <= budget + 1e-12 {
                replay = candidate;
                next += 1;
            } else {
                pending = Some(candidate);
                break;
            }
        }
        let value = match cached {
            Some((n, v)) if n == next => v,
            _ => metric(replay.model(), eval_set, kind)?,
        };
        cached = Some((next, value));
        points.push(CurvePoint { fraction: budget, achieved: fraction(replay.model()), removed: next, metric: value });
    }
    Ok(PruningCurve { metric: kind, points })
}

/// Trapezoidal area under the curve divided by its fraction span: the mean
/// metric height in percent.
pub fn sauce(curve: &PruningCurve) -> Result<f64> {
    let p = &curve.points;
    if p.len() < 2 {
        return Err(Error::invalid(format!("SAUCE needs at least 2 curve points, got {}", p.len())));
    }
    let span = p[p.len() - 1].fraction - p[0].fraction;
    if span <= 0.0 {
        return Err(Error::invalid("SAUCE needs a positive fraction span"));
    }
    let area: f64 = p.windows(2).map(|w| (w[1].fraction - w[0].fraction) * (w[0].metric + w[1].metric) / 2.0).sum();
    Ok(area / span)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub seeds: Vec<u64>,
    pub sauce: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub std_kind: String,
}

impl SeedAggregate {
    pub fn from_values(seeds: Vec<u64>, sauce: Vec<f64>) -> Result<Self> {
        if sauce.is_empty() || seeds.len() != sauce.len() {
            return Err(Error::invalid("aggregation needs one SAUCE value per seed"));
        }
        let n = sauce.len() as f64;
        let mean = sauce.iter().sum::<f64>() / n;
        let std = (sauce.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        Ok(SeedAggregate { seeds, sauce, mean, std, std_kind: "population".into() })
    }
}

/// SAUCE per seed, with mean and population standard deviation.
pub fn aggregate(curves: &[(u64, PruningCurve)]) -> Result<SeedAggregate> {
    let sauces = curves.iter().map(|(_, c)| sauce(c)).collect::<Result<Vec<_>>>()?;
    SeedAggregate::from_values(curves.iter().map(|(s, _)| *s).collect(), sauces)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryDistribution {
    pub neutral: f64,
    pub critical: f64,
    pub detrimental: f64,
    pub total: usize,
}

impl CategoryDistribution {
    pub fn get(&self, c: Category) -> f64 {
        match c {
            Category::Neutral => self.neutral,
            Category::Critical => self.critical,
            Category::Detrimental => self.detrimental,
        }
    }
}

/// Percentage of results in each category.
pub fn category_distribution(results: &[CausalResult]) -> Result<CategoryDistribution> {
    if results.is_empty() {
        return Err(Error::invalid("no causal results"));
    }
    let pct = |c: Category| 100.0 * results.iter().filter(|r| r.category == c).count() as f64 / results.len() as f64;
    Ok(CategoryDistribution {
        neutral: pct(Category::Neutral),
        critical: pct(Category::Critical),
        detrimental: pct(Category::Detrimental),
        total: results.len(),
    })
}

/// Pruned-parameter and FLOPs-reduction fractions after every prefix,
/// starting with the empty one.
pub fn compression_trace(schedule: &PruneSchedule, model: &ModelGraph) -> Result<Vec<(f64, f64)>> {
    let (p0, f0) = (model.param_count() as f64, model.flops() as f64);
    let point = |m: &ModelGraph| (1.0 - m.param_count() as f64 / p0, 1.0 - m.flops() as f64 / f0);
    let mut replay = PruneReplay::new(model)?;
    let mut out = vec![point(model)];
    for e in &schedule.entries {
        replay.remove(&e.group)?;
        out.push(point(replay.model()));
    }
    Ok(out)
}

/// Pearson correlation of a paired sample; `None` when either side is constant.
pub fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let (mx, my) = (pairs.iter().map(|p| p.0).sum::<f64>() / n, pairs.iter().map(|p| p.1).sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson `r` between pruned-parameter and FLOPs-reduction fractions
/// across schedule prefixes; `None` when undefined.
///
/// Computed on integer removal counts, which is affine-equivalent to the
/// fractions, so an exactly linear trace gives exactly 1.
pub fn compression_correlation(schedule: &PruneSchedule, model: &ModelGraph) -> Result<Option<f64>> {
    let (p0, f0) = (model.param_count() as i128, model.flops() as i128);
    let mut replay = PruneReplay::new(model)?;
    let mut counts = vec![(0i128, 0i128)];
    for e in &schedule.entries {
        replay.remove(&e.group)?;
        counts.push((p0 - replay.model().param_count() as i128, f0 - replay.model().flops() as i128));
    }
    Ok(pearson_counts(&counts))
}

fn pearson_counts(pairs: &[(i128, i128)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as i128;
    let (sx, sy) = pairs.iter().fold((0, 0), |(a, b), p| (a + p.0, b + p.1));
    let (sxx, syy, sxy) = pairs.iter().fold((0, 0, 0), |(a, b, c), p| (a + p.0 * p.0, b + p.1 * p.1, c + p.0 * p.1));
    // n^2 times the centred sums, still exact
    let (vx, vy, cxy) = (n * sxx - sx * sx, n * syy - sy * sy, n * sxy - sx * sy);
    if vx == 0 || vy == 0 {
        return None;
    }
    if cxy.checked_mul(cxy).zip(vx.checked_mul(vy)).is_some_and(|(a, b)| a == b) {
        return Some(cxy.signum() as f64);
    }
    Some((cxy as f64 / ((vx as f64) * (vy as f64)).sqrt()).clamp(-1.0, 1.0))
}

/// `fraction,metric,seed,achieved,removed` rows.
pub fn curve_csv(curve: &PruningCurve, seed: u64) -> String {
    let mut out = String::from("fraction,metric,seed,achieved,removed\n");
    for p in &curve.points {
        out.push_str(&format!("{},{},{},{},{}\n", p.fraction, p.metric, seed, p.achieved, p.removed));
    }
    out
}
