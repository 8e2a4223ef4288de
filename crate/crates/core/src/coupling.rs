//! Structural coupling between channels, edge-cutting interventions, and
//! physical channel removal.
//!
//! Channels of layers whose outputs meet in a `ResidualAdd` must be removed
//! together: channel `i` of every producer in a residual component forms one
//! [`PruneGroup`]. Components that reach the model output without passing
//! through another parametric layer, or that are joined with the model
//! input, are not prunable.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{forward, LayerKind, ModelGraph, NeuronId, NodeId};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PruneGroup {
    /// Sorted member neurons.
    pub members: Vec<NeuronId>,
    /// The member closest to the output; the group is analyzed with its layer.
    pub anchor: NeuronId,
}

impl PruneGroup {
    pub fn channel(&self) -> usize {
        self.anchor.channel
    }

    pub fn layers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.members.iter().map(|m| m.layer)
    }
}

/// A parametric layer reading a producer's channels. Channel `c` of the
/// producer occupies input features `[c·block, (c+1)·block)` of the
/// consumer (`block > 1` only behind a `Flatten`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Consumer {
    pub node: NodeId,
    pub block: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Source {
    Input,
    Producer(NodeId),
}

#[derive(Debug, Clone)]
pub struct Coupling {
    groups: Vec<PruneGroup>,
    group_of: HashMap<NeuronId, usize>,
    consumers: HashMap<NodeId, Vec<Consumer>>,
    /// Prunable components, each a list of producer layers in topological order.
    components: Vec<Vec<NodeId>>,
    component_of: HashMap<NodeId, usize>,
    topo_pos: HashMap<NodeId, usize>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

impl Coupling {
    pub fn build(model: &ModelGraph) -> Result<Self> {
        let nodes = model.nodes();
        let shapes = model.shapes();
        let order = model.order();
        let topo_pos: HashMap<NodeId, usize> = order.iter().enumerate().map(|(p, &i)| (nodes[i].id, p)).collect();

        // union-find slots: one per parametric node, plus one for the input
        let params: Vec<NodeId> =
            order.iter().map(|&i| &nodes[i]).filter(|n| n.kind.is_parametric()).map(|n| n.id).collect();
        let slot: HashMap<Source, usize> = params
            .iter()
            .enumerate()
            .map(|(k, &id)| (Source::Producer(id), k))
            .chain(std::iter::once((Source::Input, params.len())))
            .collect();
        let mut uf = UnionFind((0..=params.len()).collect());

        let mut flow: Vec<(BTreeSet<Source>, usize)> = vec![(BTreeSet::new(), 1); nodes.len()];
        let mut consumers: HashMap<NodeId, Vec<Consumer>> = params.iter().map(|&p| (p, Vec::new())).collect();
        for &i in order {
            let n = &nodes[i];
            let input_flow = |k: usize| -> (BTreeSet<Source>, usize) {
                match n.inputs.get(k) {
                    Some(id) => flow[model.node_index(*id).expect("validated")].clone(),
                    None => (BTreeSet::from([Source::Input]), 1),
                }
            };
            flow[i] = match n.kind {
                LayerKind::Dense | LayerKind::Conv2D { .. } => {
                    let (srcs, block) = input_flow(0);
                    for s in srcs {
                        if let Source::Producer(p) = s {
                            consumers.get_mut(&p).expect("producer").push(Consumer { node: n.id, block });
                        }
                    }
                    (BTreeSet::from([Source::Producer(n.id)]), 1)
                }
                LayerKind::ResidualAdd => {
                    let (a, ba) = input_flow(0);
                    let (b, bb) = input_flow(1);
                    if ba != bb {
                        return Err(Error::invalid(format!(
                            "ResidualAdd node {} joins operands with different channel layouts",
                            n.id
                        )));
                    }
                    let all: BTreeSet<Source> = a.union(&b).copied().collect();
                    let mut it = all.iter();
                    if let Some(first) = it.next() {
                        for other in it {
                            uf.union(slot[first], slot[other]);
                        }
                    }
                    (all, ba)
                }
                LayerKind::Flatten => {
                    let (srcs, block) = input_flow(0);
                    let src_shape = match n.inputs.first() {
                        Some(id) => shapes[model.node_index(*id).expect("validated")],
                        None => model.input_shape3(),
                    };
                    (srcs, block * src_shape.spatial())
                }
                _ => input_flow(0),
            };
        }

        let mut frozen: BTreeSet<usize> = BTreeSet::new();
        frozen.insert(uf.find(slot[&Source::Input]));
        let out = model.output_node();
        if out.kind.is_parametric() {
            frozen.insert(uf.find(slot[&Source::Producer(out.id)]));
        }
        for s in &flow[model.output_index()].0 {
            frozen.insert(uf.find(slot[s]));
        }

        let mut by_root: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
        for &p in &params {
            let r = uf.find(slot[&Source::Producer(p)]);
            if !frozen.contains(&r) {
                by_root.entry(r).or_default().push(p);
            }
        }
        let mut components: Vec<Vec<NodeId>> = by_root.into_values().collect();
        components.sort_by_key(|c| c.iter().map(|id| topo_pos[id]).max());

        let mut groups = Vec::new();
        let mut component_of = HashMap::new();
        for (ci, comp) in components.iter().enumerate() {
            let widths: BTreeSet<usize> = comp.iter().map(|id| model.node(*id).expect("node").out_channels).collect();
            if widths.len() != 1 {
                return Err(Error::invalid(format!(
                    "residual operands {comp:?} have mismatched channel counts {widths:?}"
                )));
            }
            for id in comp {
                component_of.insert(*id, ci);
            }
            let anchor_layer = *comp.iter().max_by_key(|id| topo_pos[id]).expect("non-empty");
            let width = *widths.iter().next().expect("one width");
            for c in 0..width {
                let mut members: Vec<NeuronId> = comp.iter().map(|&l| NeuronId::new(l, c)).collect();
                members.sort();
                groups.push(PruneGroup { members, anchor: NeuronId::new(anchor_layer, c) });
            }
        }
        let group_of =
            groups.iter().enumerate().flat_map(|(g, grp)| grp.members.iter().map(move |m| (*m, g))).collect();
        Ok(Coupling { groups, group_of, consumers, components, component_of, topo_pos })
    }

    /// All prunable groups, ordered by anchor position then channel.
    pub fn groups(&self) -> &[PruneGroup] {
        &self.groups
    }

    pub fn group_of(&self, neuron: NeuronId) -> Option<&PruneGroup> {
        self.group_of.get(&neuron).map(|&g| &self.groups[g])
    }

    pub fn consumers(&self, layer: NodeId) -> &[Consumer] {
        self.consumers.get(&layer).map_or(&[], Vec::as_slice)
    }

    pub fn is_prunable_layer(&self, layer: NodeId) -> bool {
        self.component_of.contains_key(&layer)
    }

    /// Layers that anchor groups, nearest the output first.
    pub fn anchor_layers_output_first(&self) -> Vec<NodeId> {
        let mut layers: Vec<NodeId> =
            self.groups.iter().map(|g| g.anchor.layer).collect::<BTreeSet<_>>().into_iter().collect();
        layers.sort_by_key(|l| std::cmp::Reverse(self.topo_pos[l]));
        layers
    }

    pub fn groups_anchored_at(&self, layer: NodeId) -> impl Iterator<Item = &PruneGroup> {
        self.groups.iter().filter(move |g| g.anchor.layer == layer)
    }

    /// Number of prunable channels (sum of group sizes).
    pub fn prunable_channels(&self) -> usize {
        self.groups.iter().map(|g| g.members.len()).sum()
    }

    /// Mask cutting every edge from `neuron` to its consumers.
    pub fn neuron_mask(&self, model: &ModelGraph, neuron: NeuronId) -> Result<InterventionMask> {
        model.check_neuron(neuron)?;
        let mut mask = InterventionMask::default();
        for c in self.consumers(neuron.layer) {
            mask.cut(neuron, c.node, Cut::All);
        }
        Ok(mask)
    }

    /// Mask cutting every edge out of every member of `group`.
    pub fn group_mask(&self, model: &ModelGraph, group: &PruneGroup) -> Result<InterventionMask> {
        let mut mask = InterventionMask::default();
        for &m in &group.members {
            mask.merge(&self.neuron_mask(model, m)?);
        }
        Ok(mask)
    }

    fn block(&self, producer: NodeId, consumer: NodeId) -> Option<usize> {
        self.consumers(producer).iter().find(|c| c.node == consumer).map(|c| c.block)
    }

    fn check_group(&self, model: &ModelGraph, group: &PruneGroup) -> Result<()> {
        let bad = || Error::InvalidArgument(format!("{group:?} is not a prune group of this model"));
        let first = group.members.first().ok_or_else(bad)?;
        let comp = *self.component_of.get(&first.layer).ok_or_else(bad)?;
        let mut layers: Vec<NodeId> = group.layers().collect();
        layers.sort();
        let mut want = self.components[comp].clone();
        want.sort();
        if layers != want || group.members.iter().any(|m| m.channel != first.channel) {
            return Err(bad());
        }
        for &m in &group.members {
            model.check_neuron(m)?;
        }
        Ok(())
    }

    /// Deletes the group's producer channels and every consumer slice that
    /// reads them.
    pub fn physical_prune(&self, model: &ModelGraph, group: &PruneGroup) -> Result<ModelGraph> {
        self.check_group(model, group)?;
        for m in &group.members {
            if model.node(m.layer).expect("checked").out_channels <= 1 {
                return Err(Error::LayerExhausted(m.layer));
            }
        }
        let c = group.channel();
        let mut reads: BTreeMap<NodeId, usize> = BTreeMap::new();
        for m in &group.members {
            for cons in self.consumers(m.layer) {
                reads.insert(cons.node, cons.block);
            }
        }
        let mut out = model.clone();
        for m in &group.members {
            let node = out.node_mut(m.layer).expect("checked");
            let w = node.weights.as_mut().expect("parametric");
            let mut shape = w.shape().to_vec();
            let per = w.len() / shape[0];
            let data: Vec<f32> = w
                .data()
                .chunks(per)
                .enumerate()
                .filter(|(r, _)| *r != c)
                .flat_map(|(_, row)| row.iter().copied())
                .collect();
            shape[0] -= 1;
            w.reshape_with(shape, data);
            if let Some(b) = node.bias.as_mut() {
                let data: Vec<f32> = b.data().iter().enumerate().filter(|(r, _)| *r != c).map(|(_, &v)| v).collect();
                b.reshape_with(vec![data.len()], data);
            }
            node.out_channels -= 1;
        }
        for (&q, &block) in &reads {
            let node = out.node_mut(q).expect("consumer");
            let w = node.weights.as_mut().expect("parametric");
            let mut shape = w.shape().to_vec();
            let (rows, cols) = (shape[0], shape[1]);
            let inner: usize = shape[2..].iter().product();
            let drop = c * block..(c + 1) * block;
            let mut data = Vec::with_capacity(w.len() - rows * block * inner);
            for r in 0..rows {
                for k in (0..cols).filter(|k| !drop.contains(k)) {
                    let start = (r * cols + k) * inner;
                    data.extend_from_slice(&w.data()[start..start + inner]);
                }
            }
            shape[1] -= block;
            w.reshape_with(shape, data);
        }
        out.rebuild()
    }
}

/// Which output rows of the consumer lose their connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cut {
    All,
    Rows(BTreeSet<usize>),
}

/// A set of cut edges `(source neuron → consumer layer)`. Cutting zeroes
/// the consumer weights that read the source channel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InterventionMask {
    cuts: BTreeMap<(NeuronId, NodeId), Cut>,
}

impl InterventionMask {
    pub fn cut(&mut self, source: NeuronId, consumer: NodeId, cut: Cut) {
        use std::collections::btree_map::Entry;
        match self.cuts.entry((source, consumer)) {
            Entry::Vacant(v) => {
                v.insert(cut);
            }
            Entry::Occupied(mut o) => match (o.get_mut(), cut) {
                (Cut::All, _) => {}
                (slot, Cut::All) => *slot = Cut::All,
                (Cut::Rows(have), Cut::Rows(more)) => have.extend(more),
            },
        }
    }

    pub fn merge(&mut self, other: &InterventionMask) {
        for (&(s, c), cut) in &other.cuts {
            self.cut(s, c, cut.clone());
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NeuronId, NodeId, &Cut)> {
        self.cuts.iter().map(|(&(s, c), cut)| (s, c, cut))
    }

    /// Cuts in `self` that `base` does not already fully contain.
    fn difference(&self, base: &InterventionMask) -> InterventionMask {
        let mut out = InterventionMask::default();
        for (&key, cut) in &self.cuts {
            match (base.cuts.get(&key), cut) {
                (Some(Cut::All), _) => {}
                (Some(Cut::Rows(have)), Cut::Rows(want)) => {
                    let extra: BTreeSet<usize> = want.difference(have).copied().collect();
                    if !extra.is_empty() {
                        out.cuts.insert(key, Cut::Rows(extra));
                    }
                }
                _ => {
                    out.cuts.insert(key, cut.clone());
                }
            }
        }
        out
    }
}

/// A read-only overlay: the base model with masked consumer weights zeroed.
///
/// The effective graph is materialized once, so forward passes cost the same
/// as on the unmasked model.
#[derive(Debug, Clone)]
pub struct MaskedModel {
    mask: InterventionMask,
    graph: ModelGraph,
}

impl MaskedModel {
    pub fn new(base: &ModelGraph) -> Self {
        MaskedModel { mask: InterventionMask::default(), graph: base.clone() }
    }

    pub fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    pub fn mask(&self) -> &InterventionMask {
        &self.mask
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        forward(&self.graph, input)
    }

    /// A new view with `extra` cuts added on top of this one.
    pub fn with_mask(&self, coupling: &Coupling, extra: &InterventionMask) -> Result<MaskedModel> {
        let fresh = extra.difference(&self.mask);
        let mut graph = self.graph.clone();
        for (src, consumer, cut) in fresh.edges() {
            let block = coupling
                .block(src.layer, consumer)
                .ok_or_else(|| Error::InvalidArgument(format!("layer {consumer} does not read {src}")))?;
            zero_slice(&mut graph, consumer, src.channel, block, cut)?;
        }
        let mut mask = self.mask.clone();
        mask.merge(extra);
        Ok(MaskedModel { mask, graph })
    }
}

fn zero_slice(model: &mut ModelGraph, consumer: NodeId, channel: usize, block: usize, cut: &Cut) -> Result<()> {
    let node = model.node_mut(consumer).ok_or_else(|| Error::invalid(format!("no node {consumer}")))?;
    let w = node.weights.as_mut().ok_or_else(|| Error::invalid(format!("node {consumer} has no weights")))?;
    let shape = w.shape().to_vec();
    let (rows, cols) = (shape[0], shape[1]);
    let inner: usize = shape[2..].iter().product();
    let data = w.data_mut();
    let mut zero_row = |r: usize| {
        for k in channel * block..(channel + 1) * block {
            let start = (r * cols + k) * inner;
            data[start..start + inner].fill(0.0);
        }
    };
    match cut {
        Cut::All => (0..rows).for_each(&mut zero_row),
        Cut::Rows(rs) => rs.iter().filter(|&&r| r < rows).for_each(|&r| zero_row(r)),
    }
    Ok(())
}

/// Builds prune groups for `model`.
pub fn build_groups(model: &ModelGraph) -> Result<Vec<PruneGroup>> {
    Ok(Coupling::build(model)?.groups)
}

/// Intervenes on one neuron: every consumer weight reading its channel is
/// zeroed in the returned view; `model` is untouched.
pub fn apply_intervention(model: &ModelGraph, neuron: NeuronId) -> Result<MaskedModel> {
    let coupling = Coupling::build(model)?;
    let mask = coupling.neuron_mask(model, neuron)?;
    MaskedModel::new(model).with_mask(&coupling, &mask)
}

pub fn physical_prune(model: &ModelGraph, group: &PruneGroup) -> Result<ModelGraph> {
    Coupling::build(model)?.physical_prune(model, group)
}

/// Largest elementwise gap between the fully masked group and the
/// physically pruned network over `inputs`; `0` for no inputs.
pub fn verify_mask_prune_equivalence(model: &ModelGraph, group: &PruneGroup, inputs: &[Tensor]) -> Result<f64> {
    let coupling = Coupling::build(model)?;
    let masked = MaskedModel::new(model).with_mask(&coupling, &coupling.group_mask(model, group)?)?;
    let pruned = coupling.physical_prune(model, group)?;
    let mut worst = 0.0f64;
    for x in inputs {
        let a = masked.forward(x)?;
        let b = forward(&pruned, x)?;
        for (u, v) in a.data().iter().zip(b.data()) {
            worst = worst.max((f64::from(*u) - f64::from(*v)).abs());
        }
    }
    Ok(worst)
}

/// Replays removals given in the original model's channel numbering.
#[derive(Debug, Clone)]
pub struct PruneReplay {
    model: ModelGraph,
    coupling: Coupling,
    alive: HashMap<NodeId, Vec<usize>>,
}

impl PruneReplay {
    pub fn new(model: &ModelGraph) -> Result<Self> {
        let coupling = Coupling::build(model)?;
        let alive = model
            .nodes()
            .iter()
            .filter(|n| n.kind.is_parametric())
            .map(|n| (n.id, (0..n.out_channels).collect()))
            .collect();
        Ok(PruneReplay { model: model.clone(), coupling, alive })
    }

    pub fn model(&self) -> &ModelGraph {
        &self.model
    }

    pub fn into_model(self) -> ModelGraph {
        self.model
    }

    /// Whether removing `group` would leave some layer with no channels.
    pub fn would_exhaust(&self, group: &PruneGroup) -> bool {
        group.members.iter().any(|m| self.alive.get(&m.layer).is_some_and(|a| a.len() <= 1))
    }

    pub fn remove(&mut self, group: &PruneGroup) -> Result<()> {
        let mut current = group.clone();
        for m in current.members.iter_mut().chain(std::iter::once(&mut current.anchor)) {
            let alive = self.alive.get(&m.layer).ok_or(Error::NeuronOutOfRange(*m))?;
            m.channel = alive.binary_search(&m.channel).map_err(|_| Error::NeuronOutOfRange(*m))?;
        }
        self.model = self.coupling.physical_prune(&self.model, &current)?;
        for m in &group.members {
            let alive = self.alive.get_mut(&m.layer).expect("checked");
            let pos = alive.binary_search(&m.channel).expect("checked");
            alive.remove(pos);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::{flops_count, LayerNode};
    use rand::{Rng, SeedableRng};

    fn random_inputs(model: &ModelGraph, n: usize, seed: u64) -> Vec<Tensor> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let len: usize = model.input_shape().iter().product();
        (0..n)
            .map(|_| {
                Tensor::new(model.input_shape().to_vec(), (0..len).map(|_| rng.random_range(-2.0..2.0)).collect())
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn mlp_groups_are_singletons() {
        let m = fixtures::blob_mlp_untrained(1);
        let groups = build_groups(&m).unwrap();
        assert_eq!(groups.len(), 64);
        assert!(groups.iter().all(|g| g.members.len() == 1));
        // the output layer (node 5) never appears
        assert!(groups.iter().all(|g| g.anchor.layer != 5));
    }

    #[test]
    fn residual_layers_are_coupled_channelwise() {
        let m = fixtures::residual_mlp(2);
        let c = Coupling::build(&m).unwrap();
        for i in 0..8 {
            let g = c.group_of(NeuronId::new(3, i)).unwrap();
            assert_eq!(g.members, vec![NeuronId::new(3, i), NeuronId::new(7, i)]);
            assert_eq!(g.anchor, NeuronId::new(7, i));
        }
        assert_eq!(c.group_of(NeuronId::new(1, 0)).unwrap().members.len(), 1);
        assert_eq!(c.group_of(NeuronId::new(5, 0)).unwrap().members.len(), 1);
        assert!(c.group_of(NeuronId::new(10, 0)).is_none());
    }

    /// Transitive closure by brute force: repeatedly merge any two sets that
    /// meet at a ResidualAdd until nothing changes.
    #[test]
    fn stacked_blocks_form_one_trunk_group() {
        let m = fixtures::stacked_residual_mlp(3);
        let adds: Vec<(NodeId, NodeId)> = vec![(5, 1), (10, 6)];
        let producer_of = |id: NodeId| -> Vec<NodeId> {
            // node 6 is the first add; its channels come from 5 and 1
            if id == 6 {
                vec![5, 1]
            } else {
                vec![id]
            }
        };
        let mut sets: Vec<BTreeSet<NodeId>> = Vec::new();
        for (a, b) in adds {
            let mut s: BTreeSet<NodeId> = producer_of(a).into_iter().collect();
            s.extend(producer_of(b));
            sets.push(s);
        }
        let mut changed = true;
        while changed {
            changed = false;
            'outer: for i in 0..sets.len() {
                for j in i + 1..sets.len() {
                    if !sets[i].is_disjoint(&sets[j]) {
                        let other = sets.remove(j);
                        sets[i].extend(other);
                        changed = true;
                        break 'outer;
                    }
                }
            }
        }
        assert_eq!(sets, vec![BTreeSet::from([1, 5, 10])]);

        let c = Coupling::build(&m).unwrap();
        let g = c.group_of(NeuronId::new(1, 2)).unwrap();
        let layers: BTreeSet<NodeId> = g.layers().collect();
        assert_eq!(layers, sets[0]);
        assert_eq!(g.anchor, NeuronId::new(10, 2));
    }

    #[test]
    fn groups_partition_prunable_channels() {
        for m in [
            fixtures::residual_mlp(1),
            fixtures::stacked_residual_mlp(1),
            fixtures::residual_convnet(1),
            fixtures::small_convnet(1),
        ] {
            let c = Coupling::build(&m).unwrap();
            let mut seen = BTreeSet::new();
            for g in c.groups() {
                for n in &g.members {
                    assert!(seen.insert(*n), "{n} twice");
                }
            }
            let expected: usize = m.nodes().iter().filter(|n| c.is_prunable_layer(n.id)).map(|n| n.out_channels).sum();
            assert_eq!(seen.len(), expected);
            assert_eq!(c.prunable_channels(), expected);
            let out = m.output_node().id;
            assert!(seen.iter().all(|n| n.layer != out));
        }
    }

    #[test]
    fn input_coupled_and_output_coupled_layers_are_frozen() {
        // dense(1) is added to the raw input → frozen
        let nodes = vec![
            LayerNode::dense(1, Tensor::zeros(vec![2, 2]), None, vec![]),
            LayerNode::op(2, LayerKind::ReLU, vec![]),
            LayerNode::op(3, LayerKind::ResidualAdd, vec![1, 2]),
            LayerNode::dense(4, Tensor::zeros(vec![2, 2]), None, vec![3]),
        ];
        let m = ModelGraph::new("in", vec![2], 2, nodes).unwrap();
        assert!(build_groups(&m).unwrap().is_empty());

        // the last conv reaches the output through a global pool → frozen
        let nodes = vec![
            LayerNode::conv2d(1, Tensor::zeros(vec![3, 1, 3, 3]), None, 1, 1, vec![]),
            LayerNode::op(2, LayerKind::ReLU, vec![1]),
            LayerNode::conv2d(3, Tensor::zeros(vec![2, 3, 3, 3]), None, 1, 1, vec![2]),
            LayerNode::op(4, LayerKind::GlobalAvgPool, vec![3]),
        ];
        let m = ModelGraph::new("gap", vec![1, 4, 4], 2, nodes).unwrap();
        let groups = build_groups(&m).unwrap();
        assert_eq!(groups.len(), 3);
        assert!(groups.iter().all(|g| g.anchor.layer == 1));
    }

    #[test]
    fn intervention_on_dead_channel_is_identity() {
        let mut m = fixtures::blob_mlp_untrained(4);
        // make hidden channel 5 of layer 1 always zero: zero its row and bias
        {
            let n = m.node_mut(1).unwrap();
            let w = n.weights.as_mut().unwrap();
            w.data_mut()[10..12].fill(0.0);
            n.bias.as_mut().unwrap().data_mut()[5] = 0.0;
        }
        let view = apply_intervention(&m, NeuronId::new(1, 5)).unwrap();
        for x in random_inputs(&m, 20, 1) {
            assert_eq!(view.forward(&x).unwrap(), forward(&m, &x).unwrap());
        }
    }

    #[test]
    fn cutting_every_hidden_channel_leaves_bias_only_network() {
        // 2 → 3 → 2 with nonzero biases
        let w1 = Tensor::new(vec![3, 2], vec![1.0, -1.0, 0.5, 2.0, -0.3, 0.7]).unwrap();
        let b1 = Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap();
        let w2 = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, -2.0, -3.0]).unwrap();
        let b2 = Tensor::new(vec![2], vec![0.25, -0.75]).unwrap();
        let m = ModelGraph::new(
            "h",
            vec![2],
            2,
            vec![
                LayerNode::dense(1, w1, Some(b1), vec![]),
                LayerNode::op(2, LayerKind::ReLU, vec![1]),
                LayerNode::dense(3, w2, Some(b2), vec![2]),
            ],
        )
        .unwrap();
        let c = Coupling::build(&m).unwrap();
        let mut mask = InterventionMask::default();
        for ch in 0..3 {
            mask.merge(&c.neuron_mask(&m, NeuronId::new(1, ch)).unwrap());
        }
        let view = MaskedModel::new(&m).with_mask(&c, &mask).unwrap();
        for x in random_inputs(&m, 10, 2) {
            assert_eq!(view.forward(&x).unwrap().data(), &[0.25, -0.75]);
        }
    }

    #[test]
    fn intervention_is_idempotent_and_leaves_base_untouched() {
        let m = fixtures::residual_mlp(5);
        let c = Coupling::build(&m).unwrap();
        let mask = c.neuron_mask(&m, NeuronId::new(3, 2)).unwrap();
        let once = MaskedModel::new(&m).with_mask(&c, &mask).unwrap();
        let twice = once.with_mask(&c, &mask).unwrap();
        assert_eq!(once.graph(), twice.graph());
        assert_eq!(once.mask(), twice.mask());
        assert_ne!(once.graph(), &m);
        assert_eq!(m, fixtures::residual_mlp(5));
    }

    #[test]
    fn out_of_range_neuron_is_rejected() {
        let m = fixtures::blob_mlp_untrained(1);
        assert!(matches!(apply_intervention(&m, NeuronId::new(1, 32)), Err(Error::NeuronOutOfRange(_))));
        assert!(matches!(apply_intervention(&m, NeuronId::new(2, 0)), Err(Error::NeuronOutOfRange(_))));
    }

    #[test]
    fn pruning_hidden_channel_of_tiny_mlp() {
        let w1 = Tensor::new(vec![3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b1 = Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap();
        let w2 = Tensor::new(vec![2, 3], vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let m = ModelGraph::new(
            "t",
            vec![2],
            2,
            vec![
                LayerNode::dense(1, w1, Some(b1), vec![]),
                LayerNode::op(2, LayerKind::ReLU, vec![1]),
                LayerNode::dense(3, w2, None, vec![2]),
            ],
        )
        .unwrap();
        let c = Coupling::build(&m).unwrap();
        let g = c.group_of(NeuronId::new(1, 1)).unwrap().clone();
        let p = c.physical_prune(&m, &g).unwrap();
        let l1 = p.node(1).unwrap();
        assert_eq!(l1.weights.as_ref().unwrap().data(), &[1., 2., 5., 6.]);
        assert_eq!(l1.bias.as_ref().unwrap().data(), &[0.1, 0.3]);
        let l2 = p.node(3).unwrap();
        assert_eq!(l2.weights.as_ref().unwrap().shape(), &[2, 2]);
        assert_eq!(l2.weights.as_ref().unwrap().data(), &[7., 9., 10., 12.]);
        assert!(p.param_count() < m.param_count());
    }

    #[test]
    fn pruning_channel_with_zero_outgoing_weights_keeps_outputs() {
        let mut m = fixtures::blob_mlp_untrained(8);
        {
            let w = m.node_mut(3).unwrap().weights.as_mut().unwrap();
            for r in 0..32 {
                w.data_mut()[r * 32 + 7] = 0.0;
            }
        }
        let p = physical_prune(&m, &build_groups(&m).unwrap()[7]).unwrap();
        for x in random_inputs(&m, 50, 3) {
            let a = forward(&m, &x).unwrap();
            let b = forward(&p, &x).unwrap();
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!((u - v).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn residual_group_prune_shrinks_both_producers() {
        let m = fixtures::residual_mlp(6);
        let c = Coupling::build(&m).unwrap();
        let g = c.group_of(NeuronId::new(7, 4)).unwrap().clone();
        let p = c.physical_prune(&m, &g).unwrap();
        assert_eq!(p.node(3).unwrap().out_channels, 7);
        assert_eq!(p.node(7).unwrap().out_channels, 7);
        assert_eq!(p.shape_of(8).unwrap().c, 7);
        assert_eq!(p.node(5).unwrap().in_channels(), Some(7));
        assert_eq!(p.node(10).unwrap().in_channels(), Some(7));
    }

    #[test]
    fn flatten_consumers_lose_whole_blocks() {
        let m = fixtures::conv_flatten_net(2);
        let c = Coupling::build(&m).unwrap();
        assert_eq!(c.consumers(1), &[Consumer { node: 4, block: 16 }]);
        let g = c.group_of(NeuronId::new(1, 1)).unwrap().clone();
        let p = c.physical_prune(&m, &g).unwrap();
        assert_eq!(p.node(4).unwrap().in_channels(), Some(32));
        let dev = verify_mask_prune_equivalence(&m, &g, &random_inputs(&m, 30, 4)).unwrap();
        assert!(dev <= 1e-5, "{dev}");
    }

    #[test]
    fn equivalence_on_every_fixture_group() {
        for m in [
            fixtures::blob_mlp_untrained(3),
            fixtures::residual_mlp(3),
            fixtures::stacked_residual_mlp(3),
            fixtures::small_convnet(3),
            fixtures::residual_convnet(3),
        ] {
            let inputs = random_inputs(&m, 25, 9);
            for g in build_groups(&m).unwrap() {
                let dev = verify_mask_prune_equivalence(&m, &g, &inputs).unwrap();
                assert!(dev <= 1e-5, "{} {:?}: {dev}", m.name(), g.anchor);
            }
            let g = &build_groups(&m).unwrap()[0];
            assert_eq!(verify_mask_prune_equivalence(&m, g, &[]).unwrap(), 0.0);
        }
    }

    #[test]
    fn pruning_is_monotone_in_params_and_flops() {
        for m in [fixtures::residual_convnet(2), fixtures::stacked_residual_mlp(2)] {
            for g in build_groups(&m).unwrap() {
                let p = physical_prune(&m, &g).unwrap();
                assert!(p.param_count() < m.param_count());
                assert!(flops_count(&p, p.input_shape()).unwrap() < m.flops());
            }
        }
    }

    #[test]
    fn exhausting_a_layer_is_refused() {
        let m = fixtures::mlp("narrow", &[2, 1, 2], 1).unwrap();
        let g = build_groups(&m).unwrap().remove(0);
        assert!(matches!(physical_prune(&m, &g), Err(Error::LayerExhausted(1))));
    }

    #[test]
    fn replay_tracks_original_indices() {
        let m = fixtures::residual_mlp(7);
        let c = Coupling::build(&m).unwrap();
        let groups = c.groups().to_vec();
        let mut replay = PruneReplay::new(&m).unwrap();
        // remove in a scrambled order, then compare with masking them all at once
        let picks = [5usize, 0, 9, 3];
        let mut mask = InterventionMask::default();
        for &i in &picks {
            replay.remove(&groups[i]).unwrap();
            mask.merge(&c.group_mask(&m, &groups[i]).unwrap());
        }
        let masked = MaskedModel::new(&m).with_mask(&c, &mask).unwrap();
        for x in random_inputs(&m, 40, 5) {
            let a = masked.forward(&x).unwrap();
            let b = forward(replay.model(), &x).unwrap();
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!((u - v).abs() <= 1e-5);
            }
        }
        assert!(replay.remove(&groups[5]).is_err());
    }
}
