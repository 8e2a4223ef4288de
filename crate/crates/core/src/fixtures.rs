//! Desk-scale architectures and pretrained fixtures.
//!
//! Builders return Glorot-initialized graphs; `trained_*` helpers also run
//! the fixture trainer so experiments are reproducible offline.

use crate::data::{synth_blobs, synth_segmentation, Dataset};
use crate::error::Result;
use crate::graph::{LayerKind, LayerNode, ModelGraph, NodeId};
use crate::tensor::Tensor;
use crate::train::{initialized, train, Loss, TrainConfig};

fn dense(id: NodeId, out: usize, inp: usize, inputs: Vec<NodeId>) -> LayerNode {
    LayerNode::dense(id, Tensor::zeros(vec![out, inp]), Some(Tensor::zeros(vec![out])), inputs)
}

fn conv(id: NodeId, out: usize, inp: usize, k: usize, padding: usize, inputs: Vec<NodeId>) -> LayerNode {
    LayerNode::conv2d(id, Tensor::zeros(vec![out, inp, k, k]), Some(Tensor::zeros(vec![out])), 1, padding, inputs)
}

fn relu(id: NodeId, input: NodeId) -> LayerNode {
    LayerNode::op(id, LayerKind::ReLU, vec![input])
}

/// Fully connected ReLU network with layer widths `dims` (input first).
pub fn mlp(name: &str, dims: &[usize], seed: u64) -> Result<ModelGraph> {
    assert!(dims.len() >= 2, "an MLP needs input and output widths");
    let mut nodes = Vec::new();
    let mut prev: Option<NodeId> = None;
    let mut id = 1;
    for (l, pair) in dims.windows(2).enumerate() {
        nodes.push(dense(id, pair[1], pair[0], prev.into_iter().collect()));
        prev = Some(id);
        id += 1;
        if l + 2 < dims.len() {
            nodes.push(relu(id, id - 1));
            prev = Some(id);
            id += 1;
        }
    }
    let model = ModelGraph::new(name, vec![dims[0]], dims[dims.len() - 1], nodes)?;
    Ok(initialized(model, seed))
}

/// The 2→32→32→3 blob classifier, untrained.
pub fn blob_mlp_untrained(seed: u64) -> ModelGraph {
    mlp("blob-mlp", &[2, 32, 32, 3], seed).expect("valid architecture")
}

/// Four hidden Dense layers where the outputs of layers 2 and 4 meet in a
/// residual add, so their channels are coupled.
///
/// `in → D1 → relu → D2 → relu → D3 → relu → D4 → (+D2) → relu → D5 → C`
pub fn residual_mlp(seed: u64) -> ModelGraph {
    let (i, h, c) = (2, 8, 3);
    let nodes = vec![
        dense(1, h, i, vec![]),
        relu(2, 1),
        dense(3, h, h, vec![2]),
        relu(4, 3),
        dense(5, h, h, vec![4]),
        relu(6, 5),
        dense(7, h, h, vec![6]),
        LayerNode::op(8, LayerKind::ResidualAdd, vec![7, 3]),
        relu(9, 8),
        dense(10, c, h, vec![9]),
    ];
    initialized(ModelGraph::new("residual-mlp", vec![i], c, nodes).expect("valid"), seed)
}

/// A trunk followed by two residual blocks; trunk channels are coupled with
/// both block outputs.
pub fn stacked_residual_mlp(seed: u64) -> ModelGraph {
    let (i, h, c) = (2, 6, 3);
    let nodes = vec![
        dense(1, h, i, vec![]), // trunk
        relu(2, 1),
        dense(3, h, h, vec![2]),
        relu(4, 3),
        dense(5, h, h, vec![4]), // block 1 output
        LayerNode::op(6, LayerKind::ResidualAdd, vec![5, 1]),
        relu(7, 6),
        dense(8, h, h, vec![7]),
        relu(9, 8),
        dense(10, h, h, vec![9]), // block 2 output
        LayerNode::op(11, LayerKind::ResidualAdd, vec![10, 6]),
        relu(12, 11),
        dense(13, c, h, vec![12]),
    ];
    initialized(ModelGraph::new("stacked-residual-mlp", vec![i], c, nodes).expect("valid"), seed)
}

/// conv → relu → maxpool → conv → relu → global pool → dense, on 1×6×6 inputs.
pub fn small_convnet(seed: u64) -> ModelGraph {
    let nodes = vec![
        conv(1, 4, 1, 3, 1, vec![]),
        relu(2, 1),
        LayerNode::op(3, LayerKind::MaxPool2D { size: 2, stride: 2 }, vec![2]),
        conv(4, 6, 4, 3, 1, vec![3]),
        relu(5, 4),
        LayerNode::op(6, LayerKind::GlobalAvgPool, vec![5]),
        dense(7, 3, 6, vec![6]),
    ];
    initialized(ModelGraph::new("small-convnet", vec![1, 6, 6], 3, nodes).expect("valid"), seed)
}

/// A conv layer flattened into a dense head, so each conv channel feeds a
/// block of 16 dense inputs.
pub fn conv_flatten_net(seed: u64) -> ModelGraph {
    let nodes = vec![
        conv(1, 3, 1, 3, 1, vec![]),
        relu(2, 1),
        LayerNode::op(3, LayerKind::Flatten, vec![2]),
        dense(4, 5, 48, vec![3]),
        relu(5, 4),
        dense(6, 2, 5, vec![5]),
    ];
    initialized(ModelGraph::new("conv-flatten-net", vec![1, 4, 4], 2, nodes).expect("valid"), seed)
}

/// A convolutional residual block on a conv stem.
pub fn residual_convnet(seed: u64) -> ModelGraph {
    let nodes = vec![
        conv(1, 4, 2, 3, 1, vec![]),
        relu(2, 1),
        conv(3, 4, 4, 3, 1, vec![2]),
        relu(4, 3),
        conv(5, 4, 4, 3, 1, vec![4]),
        LayerNode::op(6, LayerKind::ResidualAdd, vec![5, 1]),
        relu(7, 6),
        LayerNode::op(8, LayerKind::GlobalAvgPool, vec![7]),
        dense(9, 3, 4, vec![8]),
    ];
    initialized(ModelGraph::new("residual-convnet", vec![2, 5, 5], 3, nodes).expect("valid"), seed)
}

/// Fully convolutional segmenter producing per-pixel logits for
/// `num_classes` classes on `3 × size × size` images.
pub fn segmenter(num_classes: usize, size: usize, width: usize, seed: u64) -> ModelGraph {
    let nodes = vec![
        conv(1, width, 3, 3, 1, vec![]),
        relu(2, 1),
        conv(3, width, width, 3, 1, vec![2]),
        relu(4, 3),
        conv(5, num_classes, width, 1, 0, vec![4]),
    ];
    initialized(ModelGraph::new("segmenter", vec![3, size, size], num_classes, nodes).expect("valid"), seed)
}

/// The trained blob classifier with its train and held-out test splits.
#[derive(Debug, Clone)]
pub struct BlobFixture {
    pub model: ModelGraph,
    pub train: Dataset,
    pub test: Dataset,
}

pub const BLOB_SPREAD: f64 = 1.5;

/// Trains the 2→32→32→3 MLP on three Gaussian blobs.
pub fn trained_blob_mlp(seed: u64) -> Result<BlobFixture> {
    let train_set = synth_blobs(3, 300, BLOB_SPREAD, seed)?;
    let test = synth_blobs(3, 200, BLOB_SPREAD, seed.wrapping_add(1_000_003))?;
    let config = TrainConfig { learning_rate: 0.05, epochs: 50, batch_size: 16, seed, loss: Loss::CrossEntropy };
    let (model, _) = train(&blob_mlp_untrained(seed), &train_set, &config)?;
    Ok(BlobFixture { model, train: train_set, test })
}

/// Trained segmenter with train/test image sets.
#[derive(Debug, Clone)]
pub struct SegFixture {
    pub model: ModelGraph,
    pub train: Dataset,
    pub test: Dataset,
}

pub const SEG_CLASSES: usize = 4;
pub const SEG_SIZE: usize = 8;

pub fn trained_segmenter(seed: u64) -> Result<SegFixture> {
    let train_set = synth_segmentation(SEG_CLASSES, 240, SEG_SIZE, seed)?;
    let test = synth_segmentation(SEG_CLASSES, 80, SEG_SIZE, seed.wrapping_add(7_919))?;
    let config = TrainConfig { learning_rate: 0.1, epochs: 25, batch_size: 8, seed, loss: Loss::PixelwiseCrossEntropy };
    let (model, _) = train(&segmenter(SEG_CLASSES, SEG_SIZE, 8, seed), &train_set, &config)?;
    Ok(SegFixture { model, train: train_set, test })
}
