//! Computation-graph representation of the networks being pruned.
//!
//! A [`ModelGraph`] is a small DAG of [`LayerNode`]s. Nodes with an empty
//! `inputs` list read the model input. Activations are always viewed as
//! `channels × height × width`; vectors are `n × 1 × 1`.

mod engine;
mod io;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) use engine::run;
pub use engine::{argmax, channel_softmax, forward, output_probabilities, predict, softmax_probs, ParamSource, Real};
pub use io::{load_model, save_model};

pub type NodeId = u32;

/// A prunable unit: one output channel of a Dense or Conv2D layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: NodeId,
    pub channel: usize,
}

impl NeuronId {
    pub fn new(layer: NodeId, channel: usize) -> Self {
        NeuronId { layer, channel }
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.layer, self.channel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum LayerKind {
    Dense,
    Conv2D { stride: usize, padding: usize },
    ReLU,
    ResidualAdd,
    MaxPool2D { size: usize, stride: usize },
    GlobalAvgPool,
    Flatten,
    Softmax,
}

impl LayerKind {
    pub fn is_parametric(self) -> bool {
        matches!(self, LayerKind::Dense | LayerKind::Conv2D { .. })
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Dense => "Dense",
            LayerKind::Conv2D { .. } => "Conv2D",
            LayerKind::ReLU => "ReLU",
            LayerKind::ResidualAdd => "ResidualAdd",
            LayerKind::MaxPool2D { .. } => "MaxPool2D",
            LayerKind::GlobalAvgPool => "GlobalAvgPool",
            LayerKind::Flatten => "Flatten",
            LayerKind::Softmax => "Softmax",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNode {
    pub id: NodeId,
    pub kind: LayerKind,
    /// Dense: `out × in`; Conv2D: `out × in × kh × kw`.
    pub weights: Option<Tensor>,
    pub bias: Option<Tensor>,
    pub out_channels: usize,
    pub inputs: Vec<NodeId>,
}

impl LayerNode {
    pub fn dense(id: NodeId, weights: Tensor, bias: Option<Tensor>, inputs: Vec<NodeId>) -> Self {
        let out = weights.shape().first().copied().unwrap_or(0);
        LayerNode { id, kind: LayerKind::Dense, weights: Some(weights), bias, out_channels: out, inputs }
    }

    pub fn conv2d(
        id: NodeId,
        weights: Tensor,
        bias: Option<Tensor>,
        stride: usize,
        padding: usize,
        inputs: Vec<NodeId>,
    ) -> Self {
        let out = weights.shape().first().copied().unwrap_or(0);
        LayerNode {
            id,
            kind: LayerKind::Conv2D { stride, padding },
            weights: Some(weights),
            bias,
            out_channels: out,
            inputs,
        }
    }

    /// A non-parametric node; `out_channels` is filled in by [`ModelGraph::new`].
    pub fn op(id: NodeId, kind: LayerKind, inputs: Vec<NodeId>) -> Self {
        LayerNode { id, kind, weights: None, bias: None, out_channels: 0, inputs }
    }

    /// Input channel count of a parametric layer.
    pub fn in_channels(&self) -> Option<usize> {
        self.weights.as_ref().and_then(|w| w.shape().get(1).copied())
    }

    pub fn param_count(&self) -> usize {
        self.weights.as_ref().map_or(0, Tensor::len) + self.bias.as_ref().map_or(0, Tensor::len)
    }

    /// L2 norm of the weights producing output channel `channel` (bias excluded).
    pub fn channel_norm(&self, channel: usize) -> f64 {
        let Some(w) = &self.weights else { return 0.0 };
        let per = w.len() / w.shape()[0];
        w.data()[channel * per..(channel + 1) * per].iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }
}

/// Activation shape `channels × height × width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape3 {
    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        match *dims {
            [c] if c > 0 => Ok(Shape3 { c, h: 1, w: 1 }),
            [c, h, w] if c > 0 && h > 0 && w > 0 => Ok(Shape3 { c, h, w }),
            _ => Err(Error::invalid(format!("unsupported input shape {dims:?}"))),
        }
    }

    pub fn volume(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_vector(&self) -> bool {
        self.h == 1 && self.w == 1
    }

    pub fn spatial(&self) -> usize {
        self.h * self.w
    }

    pub fn to_dims(self) -> Vec<usize> {
        if self.is_vector() {
            vec![self.c]
        } else {
            vec![self.c, self.h, self.w]
        }
    }
}

/// An immutable, validated computation graph.
///
/// Construction checks every structural invariant, so all later passes can
/// index freely.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    name: String,
    input_shape: Vec<usize>,
    num_classes: usize,
    nodes: Vec<LayerNode>,
    index: HashMap<NodeId, usize>,
    order: Vec<usize>,
    shapes: Vec<Shape3>,
    output: usize,
}

impl PartialEq for ModelGraph {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.input_shape == other.input_shape
            && self.num_classes == other.num_classes
            && self.nodes == other.nodes
    }
}

impl ModelGraph {
    pub fn new(
        name: impl Into<String>,
        input_shape: Vec<usize>,
        num_classes: usize,
        mut nodes: Vec<LayerNode>,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid("num_classes must be positive"));
        }
        if nodes.is_empty() {
            return Err(Error::invalid("graph has no nodes"));
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(Error::invalid(format!("duplicate node id {}", n.id)));
            }
        }
        let order = topo_order(&nodes, &index)?;

        let mut successors = vec![0usize; nodes.len()];
        for n in &nodes {
            for inp in &n.inputs {
                successors[index[inp]] += 1;
            }
        }
        let sinks: Vec<usize> = (0..nodes.len()).filter(|&i| successors[i] == 0).collect();
        let output = match sinks.as_slice() {
            [one] => *one,
            _ => return Err(Error::invalid(format!("graph must have exactly one output node, found {}", sinks.len()))),
        };

        let input = Shape3::from_dims(&input_shape)?;
        let shapes = infer_shapes(&nodes, &index, &order, input)?;
        for (i, n) in nodes.iter_mut().enumerate() {
            if n.kind.is_parametric() {
                if n.out_channels != shapes[i].c {
                    return Err(Error::invalid(format!(
                        "node {} declares {} output channels but its weights produce {}",
                        n.id, n.out_channels, shapes[i].c
                    )));
                }
            } else {
                n.out_channels = shapes[i].c;
            }
            if n.kind == LayerKind::Softmax && i != output {
                return Err(Error::invalid(format!("Softmax node {} must be the output node", n.id)));
            }
        }
        if shapes[output].c != num_classes {
            return Err(Error::invalid(format!(
                "output node produces {} channels but the model has {} classes",
                shapes[output].c, num_classes
            )));
        }

        Ok(ModelGraph { name: name.into(), input_shape, num_classes, nodes, index, order, shapes, output })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn nodes(&self) -> &[LayerNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&LayerNode> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub(crate) fn node_index(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Option<&mut LayerNode> {
        self.index.get(&id).map(|&i| &mut self.nodes[i])
    }

    pub(crate) fn nodes_mut(&mut self) -> &mut [LayerNode] {
        &mut self.nodes
    }

    /// Node indices in topological order.
    pub(crate) fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn output_node(&self) -> &LayerNode {
        &self.nodes[self.output]
    }

    pub(crate) fn output_index(&self) -> usize {
        self.output
    }

    pub fn output_shape(&self) -> Shape3 {
        self.shapes[self.output]
    }

    pub fn shape_of(&self, id: NodeId) -> Option<Shape3> {
        self.node_index(id).map(|i| self.shapes[i])
    }

    pub(crate) fn shapes(&self) -> &[Shape3] {
        &self.shapes
    }

    pub fn input_shape3(&self) -> Shape3 {
        // validated at construction
        Shape3::from_dims(&self.input_shape).expect("validated input shape")
    }

    /// Node ids in topological order, ties broken by ascending id.
    pub fn topological_order(&self) -> Vec<NodeId> {
        self.order.iter().map(|&i| self.nodes[i].id).collect()
    }

    pub fn param_count(&self) -> usize {
        self.nodes.iter().map(LayerNode::param_count).sum()
    }

    /// FLOPs for one forward pass at the model's own input shape.
    pub fn flops(&self) -> u64 {
        flops_for(&self.nodes, &self.shapes, &self.index)
    }

    /// Checks `0 ≤ channel < out_channels` on a parametric layer.
    pub fn check_neuron(&self, neuron: NeuronId) -> Result<&LayerNode> {
        match self.node(neuron.layer) {
            Some(n) if n.kind.is_parametric() && neuron.channel < n.out_channels => Ok(n),
            _ => Err(Error::NeuronOutOfRange(neuron)),
        }
    }

    /// Re-runs validation after a structural edit.
    pub(crate) fn rebuild(self) -> Result<Self> {
        ModelGraph::new(self.name, self.input_shape, self.num_classes, self.nodes)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Topological order of `model`'s nodes as ids.
pub fn topological_order(model: &ModelGraph) -> Vec<NodeId> {
    model.topological_order()
}

pub fn param_count(model: &ModelGraph) -> usize {
    model.param_count()
}

/// FLOPs of one forward pass when the model is fed inputs of `input_shape`.
///
/// A multiply-accumulate counts as 2 FLOPs; non-parametric layers count 0.
pub fn flops_count(model: &ModelGraph, input_shape: &[usize]) -> Result<u64> {
    if input_shape == model.input_shape() {
        return Ok(model.flops());
    }
    let input = Shape3::from_dims(input_shape)?;
    let shapes = infer_shapes(&model.nodes, &model.index, &model.order, input)?;
    Ok(flops_for(&model.nodes, &shapes, &model.index))
}

fn flops_for(nodes: &[LayerNode], shapes: &[Shape3], index: &HashMap<NodeId, usize>) -> u64 {
    let _ = index;
    nodes
        .iter()
        .zip(shapes)
        .map(|(n, out)| match (n.kind, &n.weights) {
            (LayerKind::Dense, Some(w)) => 2 * w.len() as u64,
            (LayerKind::Conv2D { .. }, Some(w)) => 2 * w.len() as u64 * out.spatial() as u64,
            _ => 0,
        })
        .sum()
}

fn topo_order(nodes: &[LayerNode], index: &HashMap<NodeId, usize>) -> Result<Vec<usize>> {
    let mut indegree = vec![0usize; nodes.len()];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        for inp in &n.inputs {
            let &j =
                index.get(inp).ok_or_else(|| Error::invalid(format!("node {} reads unknown node {}", n.id, inp)))?;
            indegree[i] += 1;
            succ[j].push(i);
        }
    }
    let mut ready: BinaryHeap<Reverse<(NodeId, usize)>> =
        nodes.iter().enumerate().filter(|(i, _)| indegree[*i] == 0).map(|(i, n)| Reverse((n.id, i))).collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(Reverse((_, i))) = ready.pop() {
        order.push(i);
        for &s in &succ[i] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.push(Reverse((nodes[s].id, s)));
            }
        }
    }
    if order.len() != nodes.len() {
        return Err(Error::invalid("cycle detected"));
    }
    Ok(order)
}

fn infer_shapes(
    nodes: &[LayerNode],
    index: &HashMap<NodeId, usize>,
    order: &[usize],
    input: Shape3,
) -> Result<Vec<Shape3>> {
    let mut shapes = vec![Shape3 { c: 0, h: 0, w: 0 }; nodes.len()];
    for &i in order {
        let n = &nodes[i];
        let arity_err = |want: &str| {
            Error::invalid(format!("{} node {} takes {want}, got {} inputs", n.kind.name(), n.id, n.inputs.len()))
        };
        let src = match (n.kind, n.inputs.as_slice()) {
            (LayerKind::ResidualAdd, [a, b]) => {
                let (sa, sb) = (shapes[index[a]], shapes[index[b]]);
                if sa != sb {
                    return Err(Error::invalid(format!(
                        "ResidualAdd node {} joins mismatched shapes {:?} and {:?}",
                        n.id, sa, sb
                    )));
                }
                sa
            }
            (LayerKind::ResidualAdd, _) => return Err(arity_err("exactly two inputs")),
            (_, []) => input,
            (_, [a]) => shapes[index[a]],
            _ => return Err(arity_err("at most one input")),
        };
        shapes[i] = match n.kind {
            LayerKind::Dense => {
                let w =
                    n.weights.as_ref().ok_or_else(|| Error::invalid(format!("Dense node {} has no weights", n.id)))?;
                let [out, inp] = *w.shape() else {
                    return Err(Error::invalid(format!("Dense node {} weights must be 2-D", n.id)));
                };
                if !src.is_vector() || src.c != inp {
                    return Err(Error::invalid(format!(
                        "Dense node {} expects a vector of {} features, input is {:?}",
                        n.id, inp, src
                    )));
                }
                check_bias(n, out)?;
                Shape3 { c: out, h: 1, w: 1 }
            }
            LayerKind::Conv2D { stride, padding } => {
                let w =
                    n.weights.as_ref().ok_or_else(|| Error::invalid(format!("Conv2D node {} has no weights", n.id)))?;
                let [out, inp, kh, kw] = *w.shape() else {
                    return Err(Error::invalid(format!("Conv2D node {} weights must be 4-D", n.id)));
                };
                if stride == 0 {
                    return Err(Error::invalid(format!("Conv2D node {} has zero stride", n.id)));
                }
                if src.c != inp || src.h + 2 * padding < kh || src.w + 2 * padding < kw {
                    return Err(Error::invalid(format!(
                        "Conv2D node {} ({}→{}, {}×{}) cannot consume input {:?}",
                        n.id, inp, out, kh, kw, src
                    )));
                }
                check_bias(n, out)?;
                Shape3 {
                    c: out,
                    h: (src.h + 2 * padding - kh) / stride + 1,
                    w: (src.w + 2 * padding - kw) / stride + 1,
                }
            }
            LayerKind::MaxPool2D { size, stride } => {
                if size == 0 || stride == 0 || src.h < size || src.w < size {
                    return Err(Error::invalid(format!("MaxPool2D node {} cannot pool {:?}", n.id, src)));
                }
                Shape3 { c: src.c, h: (src.h - size) / stride + 1, w: (src.w - size) / stride + 1 }
            }
            LayerKind::GlobalAvgPool => Shape3 { c: src.c, h: 1, w: 1 },
            LayerKind::Flatten => Shape3 { c: src.volume(), h: 1, w: 1 },
            LayerKind::ReLU | LayerKind::ResidualAdd | LayerKind::Softmax => src,
        };
        if !n.kind.is_parametric() && (n.weights.is_some() || n.bias.is_some()) {
            return Err(Error::invalid(format!("{} node {} must not carry weights", n.kind.name(), n.id)));
        }
    }
    Ok(shapes)
}

fn check_bias(n: &LayerNode, out: usize) -> Result<()> {
    match &n.bias {
        Some(b) if b.shape() != [out] => {
            Err(Error::invalid(format!("node {} bias has shape {:?}, expected [{}]", n.id, b.shape(), out)))
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(id: NodeId, out: usize, inp: usize, inputs: Vec<NodeId>) -> LayerNode {
        LayerNode::dense(
            id,
            Tensor::new(vec![out, inp], vec![0.5; out * inp]).unwrap(),
            Some(Tensor::zeros(vec![out])),
            inputs,
        )
    }

    #[test]
    fn singleton_and_chain_orders() {
        let m = ModelGraph::new("one", vec![3], 3, vec![dense(7, 3, 3, vec![])]).unwrap();
        assert_eq!(m.topological_order(), vec![7]);

        let m = ModelGraph::new(
            "chain",
            vec![2],
            2,
            vec![dense(3, 2, 2, vec![2]), dense(1, 2, 2, vec![]), dense(2, 2, 2, vec![1])],
        )
        .unwrap();
        assert_eq!(m.topological_order(), vec![1, 2, 3]);
    }

    /// Enumerates every linear extension of the diamond and checks the engine
    /// picks the lexicographically smallest one.
    #[test]
    fn diamond_order_is_id_ascending_extension() {
        let nodes = vec![
            dense(1, 2, 2, vec![]),
            dense(3, 2, 2, vec![1]),
            dense(2, 2, 2, vec![1]),
            LayerNode::op(4, LayerKind::ResidualAdd, vec![2, 3]),
        ];
        let edges = [(1u32, 2u32), (1, 3), (2, 4), (3, 4)];
        let ids = [1u32, 2, 3, 4];
        let mut valid = Vec::new();
        let mut perm = ids.to_vec();
        permute(&mut perm, 0, &mut |p| {
            let pos = |x: u32| p.iter().position(|&y| y == x).unwrap();
            if edges.iter().all(|&(a, b)| pos(a) < pos(b)) {
                valid.push(p.to_vec());
            }
        });
        valid.sort();
        let m = ModelGraph::new("diamond", vec![2], 2, nodes).unwrap();
        assert_eq!(m.topological_order(), valid[0]);
        assert_eq!(valid[0], vec![1, 2, 3, 4]);
    }

    fn permute(v: &mut Vec<u32>, k: usize, f: &mut dyn FnMut(&[u32])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    #[test]
    fn cycle_is_rejected() {
        let nodes = vec![dense(1, 2, 2, vec![2]), dense(2, 2, 2, vec![1])];
        let err = ModelGraph::new("cyc", vec![2], 2, nodes).unwrap_err();
        assert!(matches!(err, Error::GraphInvalid(ref m) if m.contains("cycle")), "{err}");
    }

    #[test]
    fn output_dimension_must_match_classes() {
        assert!(ModelGraph::new("bad", vec![2], 3, vec![dense(1, 2, 2, vec![])]).is_err());
    }

    #[test]
    fn two_sinks_rejected() {
        let nodes = vec![dense(1, 2, 2, vec![]), dense(2, 2, 2, vec![1]), dense(3, 2, 2, vec![1])];
        assert!(ModelGraph::new("fork", vec![2], 2, nodes).is_err());
    }

    #[test]
    fn param_counts() {
        let m = ModelGraph::new("d", vec![3], 4, vec![dense(1, 4, 3, vec![])]).unwrap();
        assert_eq!(m.param_count(), 16);
        assert_eq!(m.flops(), 24);

        let conv = LayerNode::conv2d(
            1,
            Tensor::new(vec![3, 2, 3, 3], vec![0.1; 54]).unwrap(),
            Some(Tensor::zeros(vec![3])),
            1,
            0,
            vec![],
        );
        let gap = LayerNode::op(2, LayerKind::GlobalAvgPool, vec![1]);
        let m = ModelGraph::new("c", vec![2, 5, 5], 3, vec![conv, gap]).unwrap();
        assert_eq!(m.param_count(), 57);

        let relu_only = ModelGraph::new("r", vec![2], 2, vec![LayerNode::op(1, LayerKind::ReLU, vec![])]).unwrap();
        assert_eq!(relu_only.param_count(), 0);
        assert_eq!(relu_only.flops(), 0);
    }

    #[test]
    fn conv_flops_use_output_area() {
        let conv = LayerNode::conv2d(1, Tensor::new(vec![1, 1, 3, 3], vec![1.0; 9]).unwrap(), None, 1, 0, vec![]);
        let m = ModelGraph::new("c", vec![1, 6, 6], 1, vec![conv]).unwrap();
        assert_eq!(m.output_shape(), Shape3 { c: 1, h: 4, w: 4 });
        assert_eq!(m.flops(), 288);
        assert_eq!(flops_count(&m, &[1, 10, 10]).unwrap(), 2 * 9 * 64);
    }

    #[test]
    fn chain_flops_are_additive() {
        let m = ModelGraph::new(
            "c",
            vec![3],
            2,
            vec![dense(1, 4, 3, vec![]), LayerNode::op(2, LayerKind::ReLU, vec![1]), dense(3, 2, 4, vec![2])],
        )
        .unwrap();
        assert_eq!(m.flops(), 24 + 16);
    }

    #[test]
    fn residual_shapes_must_agree() {
        let nodes =
            vec![dense(1, 3, 2, vec![]), dense(2, 2, 3, vec![1]), LayerNode::op(3, LayerKind::ResidualAdd, vec![1, 2])];
        assert!(ModelGraph::new("r", vec![2], 2, nodes).is_err());
    }
}
