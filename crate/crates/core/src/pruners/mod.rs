//! Pruning methods. Each produces a [`PruneSchedule`]: an ordered list of
//! prune groups whose prefixes define progressively smaller networks.

mod schedule;

use std::collections::HashMap;

use log::warn;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::causal::output_of;
use crate::causal::{self, analyze, Category, CausalResult};
use crate::coupling::{Coupling, Cut, InterventionMask, MaskedModel, PruneGroup, PruneReplay};
use crate::data::Manifold;
use crate::error::{Error, Result};
use crate::graph::{output_probabilities, ModelGraph, NeuronId, NodeId};
use crate::rng::{substream, Stream};

pub use schedule::{Method, NeuronOrder, PruneSchedule, PrunerConfig, ScheduleEntry, Withheld};

/// Result of a data-driven pruner.
#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub schedule: PruneSchedule,
    /// One result per analyzed group, keyed by the group anchor, in analysis
    /// order. Empty for AMP.
    pub results: Vec<CausalResult>,
    /// Number of intervention evaluations performed.
    pub evaluations: usize,
    /// The network after the method's own removals (non-critical groups for
    /// the causal methods, below-threshold groups for AMP), physically pruned.
    pub network: ModelGraph,
    /// Length of the schedule prefix that `network` corresponds to.
    pub removed: usize,
}

/// Tracks live channels per layer so no layer is emptied.
struct Builder {
    alive: HashMap<NodeId, usize>,
    entries: Vec<ScheduleEntry>,
    withheld: Vec<Withheld>,
}

impl Builder {
    fn new(model: &ModelGraph) -> Self {
        let alive = model.nodes().iter().filter(|n| n.kind.is_parametric()).map(|n| (n.id, n.out_channels)).collect();
        Builder { alive, entries: Vec::new(), withheld: Vec::new() }
    }

    fn would_exhaust(&self, group: &PruneGroup) -> bool {
        group.layers().any(|l| self.alive[&l] <= 1)
    }

    /// Appends `group` unless it would empty a layer; returns whether it was taken.
    fn push(&mut self, group: &PruneGroup, category: Option<Category>, score: f64) -> bool {
        if self.would_exhaust(group) {
            warn!("withholding group {} at position {}: its layer would be emptied", group.anchor, self.entries.len());
            self.withheld.push(Withheld { group: group.clone(), position: self.entries.len() });
            return false;
        }
        for l in group.layers() {
            *self.alive.get_mut(&l).expect("parametric") -= 1;
        }
        self.entries.push(ScheduleEntry { group: group.clone(), category, score });
        true
    }

    fn finish(self, method: Method, seed: u64, config: Option<PrunerConfig>) -> PruneSchedule {
        PruneSchedule { method, seed, config, entries: self.entries, withheld: self.withheld }
    }
}

/// Sum of the member channels' weight norms.
pub fn group_magnitude(model: &ModelGraph, group: &PruneGroup) -> f64 {
    group.members.iter().map(|m| model.node(m.layer).expect("member layer").channel_norm(m.channel)).sum()
}

/// Groups in analysis order: layers nearest the output first, then the
/// configured within-layer order.
fn analysis_order<'c>(model: &ModelGraph, coupling: &'c Coupling, order: NeuronOrder) -> Vec<&'c PruneGroup> {
    let mut rng: Option<ChaCha8Rng> = match order {
        NeuronOrder::AscendingMagnitude => None,
        NeuronOrder::RandomPermutation { seed } => Some(substream(seed, Stream::Order)),
    };
    let mut out = Vec::with_capacity(coupling.groups().len());
    for layer in coupling.anchor_layers_output_first() {
        let mut groups: Vec<&PruneGroup> = coupling.groups_anchored_at(layer).collect();
        match rng.as_mut() {
            None => {
                let mags: Vec<f64> = groups.iter().map(|g| group_magnitude(model, g)).collect();
                let mut idx: Vec<usize> = (0..groups.len()).collect();
                idx.sort_by(|&a, &b| mags[a].total_cmp(&mags[b]));
                groups = idx.into_iter().map(|i| groups[i]).collect();
            }
            Some(rng) => groups.shuffle(rng),
        }
        out.extend(groups);
    }
    out
}

fn check_inputs(model: &ModelGraph, manifold: &Manifold, config: &PrunerConfig) -> Result<()> {
    config.validate()?;
    if manifold.num_classes != model.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "manifold has {} classes, model predicts {}",
            manifold.num_classes,
            model.num_classes()
        )));
    }
    if manifold.is_empty() {
        return Err(Error::InvalidArgument("empty manifold".into()));
    }
    Ok(())
}

fn replay(model: &ModelGraph, groups: &[ScheduleEntry]) -> Result<ModelGraph> {
    let mut r = PruneReplay::new(model)?;
    for e in groups {
        r.remove(&e.group)?;
    }
    Ok(r.into_model())
}

/// Progressive causal pruning.
///
/// Layers are analyzed from the output back to the input, each group once,
/// on the network with every earlier non-critical group already masked out.
/// Critical groups follow the non-critical ones, least beneficial
/// (largest `ξ`) first.
pub fn cswap(model: &ModelGraph, manifold: &Manifold, config: &PrunerConfig) -> Result<PruneOutcome> {
    check_inputs(model, manifold, config)?;
    let coupling = Coupling::build(model)?;
    let mut g = MaskedModel::new(model);
    let mut base = causal::score(g.graph(), manifold)?;
    let mut builder = Builder::new(model);
    let mut results = Vec::new();
    let mut critical: Vec<(&PruneGroup, f64)> = Vec::new();
    let mut evaluations = 0;

    for group in analysis_order(model, &coupling, config.neuron_order) {
        let trial = g.with_mask(&coupling, &coupling.group_mask(model, group)?)?;
        let perturbed = causal::score(trial.graph(), manifold)?;
        evaluations += 1;
        let r = analyze(group.anchor, &base, &perturbed, manifold, &config.significance)?;
        if r.category == Category::Critical {
            critical.push((group, r.xi));
        } else if builder.push(group, Some(r.category), r.xi) {
            g = trial;
            base = perturbed;
        }
        results.push(r);
    }
    let removed = builder.entries.len();
    critical.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (group, xi) in critical {
        builder.push(group, Some(Category::Critical), xi);
    }
    let schedule = builder.finish(Method::Cswap, config.seed, Some(*config));
    let network = replay(model, &schedule.entries[..removed])?;
    Ok(PruneOutcome { schedule, results, evaluations, network, removed })
}

/// Rank-then-prune causal baseline on the original network.
///
/// A group's intervention cuts only its edges into next-layer channels that
/// are Critical. Channels that are not prunable or not yet classified count
/// as Critical.
pub fn cbp(model: &ModelGraph, manifold: &Manifold, config: &PrunerConfig) -> Result<PruneOutcome> {
    check_inputs(model, manifold, config)?;
    let coupling = Coupling::build(model)?;
    let plain = MaskedModel::new(model);
    let base = causal::score(model, manifold)?;
    let mut category: HashMap<NeuronId, Category> = HashMap::new();
    let mut results = Vec::new();
    let mut evaluations = 0;

    for group in analysis_order(model, &coupling, config.neuron_order) {
        let mut mask = InterventionMask::default();
        for &m in &group.members {
            for cons in coupling.consumers(m.layer) {
                let rows = model.node(cons.node).expect("consumer").out_channels;
                let keep: std::collections::BTreeSet<usize> = (0..rows)
                    .filter(|&r| category.get(&NeuronId::new(cons.node, r)).is_none_or(|&c| c == Category::Critical))
                    .collect();
                if keep.len() == rows {
                    mask.cut(m, cons.node, Cut::All);
                } else if !keep.is_empty() {
                    mask.cut(m, cons.node, Cut::Rows(keep));
                }
            }
        }
        let perturbed = if mask.is_empty() {
            base.clone()
        } else {
            causal::score(plain.with_mask(&coupling, &mask)?.graph(), manifold)?
        };
        evaluations += 1;
        let r = analyze(group.anchor, &base, &perturbed, manifold, &config.significance)?;
        for &m in &group.members {
            category.insert(m, r.category);
        }
        results.push((group, r));
    }

    let order = removal_rank(&results.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>());
    let ranked: Vec<(&PruneGroup, &CausalResult)> = order.into_iter().map(|i| (results[i].0, &results[i].1)).collect();
    let mut builder = Builder::new(model);
    let mut removed = 0;
    for (group, r) in ranked {
        if builder.push(group, Some(r.category), r.xi) && r.category != Category::Critical {
            removed = builder.entries.len();
        }
    }
    let schedule = builder.finish(Method::Cbp, config.seed, Some(*config));
    let network = replay(model, &schedule.entries[..removed])?;
    let results = results.into_iter().map(|(_, r)| r).collect();
    Ok(PruneOutcome { schedule, results, evaluations, network, removed })
}

/// Rank-then-prune order: Detrimental by descending `ξ`, Neutral by
/// ascending `|ξ|`, then Critical by descending `ξ`. Returns indices into
/// `results`; ties keep analysis order.
pub fn removal_rank(results: &[CausalResult]) -> Vec<usize> {
    let rank = |c: Category| match c {
        Category::Detrimental => 0,
        Category::Neutral => 1,
        Category::Critical => 2,
    };
    let mut idx: Vec<usize> = (0..results.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (&results[i], &results[j]);
        rank(a.category).cmp(&rank(b.category)).then_with(|| match a.category {
            Category::Neutral => a.xi.abs().total_cmp(&b.xi.abs()),
            _ => b.xi.total_cmp(&a.xi),
        })
    });
    idx
}

/// Output distributions for every manifold sample, flattened channel-major.
fn distributions(model: &ModelGraph, manifold: &Manifold) -> Result<Vec<Vec<f64>>> {
    manifold.samples.par_iter().map(|s| Ok(output_probabilities(model, &output_of(model, s)?))).collect()
}

/// Lower clamp on `p_G` inside the KL divergence.
pub const KL_FLOOR: f64 = 1e-12;

/// `D_KL(F ‖ G)` averaged over samples and output positions.
pub fn mean_kl(reference: &[Vec<f64>], model: &ModelGraph, manifold: &Manifold) -> Result<f64> {
    let positions = model.output_shape().spatial() as f64;
    let q = distributions(model, manifold)?;
    let total: f64 = reference
        .iter()
        .zip(&q)
        .map(|(p, q)| {
            p.iter().zip(q).filter(|(&p, _)| p > 0.0).map(|(&p, &q)| p * (p / q.max(KL_FLOOR)).ln()).sum::<f64>()
                / positions
        })
        .sum();
    Ok(total / reference.len() as f64)
}

/// Progressive KL-gated pruning.
///
/// A group is removed when masking it raises `D_KL(F ‖ G)` by less than
/// `τ`. Groups that were kept follow, smallest increase first.
pub fn amp(model: &ModelGraph, manifold: &Manifold, config: &PrunerConfig) -> Result<PruneOutcome> {
    check_inputs(model, manifold, config)?;
    let coupling = Coupling::build(model)?;
    let reference = distributions(model, manifold)?;
    let mut g = MaskedModel::new(model);
    let mut current = mean_kl(&reference, g.graph(), manifold)?;
    let mut builder = Builder::new(model);
    let mut kept: Vec<(&PruneGroup, f64)> = Vec::new();
    let mut evaluations = 0;

    for group in analysis_order(model, &coupling, config.neuron_order) {
        let trial = g.with_mask(&coupling, &coupling.group_mask(model, group)?)?;
        let kl = mean_kl(&reference, trial.graph(), manifold)?;
        evaluations += 1;
        let diff = kl - current;
        if diff < config.amp_tau {
            if builder.push(group, None, diff) {
                g = trial;
                current = kl;
            }
        } else {
            kept.push((group, diff));
        }
    }
    let removed = builder.entries.len();
    kept.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (group, diff) in kept {
        builder.push(group, None, diff);
    }
    let schedule = builder.finish(Method::Amp, config.seed, Some(*config));
    let network = replay(model, &schedule.entries[..removed])?;
    Ok(PruneOutcome { schedule, results: Vec::new(), evaluations, network, removed })
}

/// One-shot magnitude pruning: ascending group weight norm.
pub fn omp(model: &ModelGraph) -> Result<PruneSchedule> {
    let coupling = Coupling::build(model)?;
    let mut scored: Vec<(&PruneGroup, f64)> =
        coupling.groups().iter().map(|g| (g, group_magnitude(model, g))).collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut builder = Builder::new(model);
    for (g, s) in scored {
        builder.push(g, None, s);
    }
    Ok(builder.finish(Method::Omp, 0, None))
}

/// Uniformly shuffled group order.
pub fn random_pruner(model: &ModelGraph, seed: u64) -> Result<PruneSchedule> {
    let coupling = Coupling::build(model)?;
    let mut groups: Vec<&PruneGroup> = coupling.groups().iter().collect();
    groups.shuffle(&mut substream(seed, Stream::Shuffle));
    let mut builder = Builder::new(model);
    for (i, g) in groups.into_iter().enumerate() {
        builder.push(g, None, i as f64);
    }
    Ok(builder.finish(Method::Random, seed, None))
}

/// Runs `method`; data-free methods ignore the manifold.
pub fn run_method(
    method: Method,
    model: &ModelGraph,
    manifold: &Manifold,
    config: &PrunerConfig,
) -> Result<PruneOutcome> {
    let data_free = |schedule: PruneSchedule| PruneOutcome {
        schedule,
        results: Vec::new(),
        evaluations: 0,
        network: model.clone(),
        removed: 0,
    };
    match method {
        Method::Cswap => cswap(model, manifold, config),
        Method::Cbp => cbp(model, manifold, config),
        Method::Amp => amp(model, manifold, config),
        Method::Omp => omp(model).map(data_free),
        Method::Random => random_pruner(model, config.seed).map(data_free),
    }
}
