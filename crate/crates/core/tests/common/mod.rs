#![allow(dead_code)]

use std::sync::OnceLock;

use cswap::data::{build_manifold, Manifold};
use cswap::fixtures::{trained_blob_mlp, BlobFixture};
use cswap::{ModelGraph, NeuronId, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn blob() -> &'static BlobFixture {
    static FIXTURE: OnceLock<BlobFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| trained_blob_mlp(1).expect("fixture trains"))
}

pub fn blob_manifold(per_class: usize) -> Manifold {
    build_manifold(&blob().train, per_class, 1).expect("enough samples")
}

pub fn random_inputs(model: &ModelGraph, n: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len: usize = model.input_shape().iter().product();
    (0..n)
        .map(|_| {
            Tensor::new(model.input_shape().to_vec(), (0..len).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
        })
        .collect()
}

/// Copy of `model` with every weight that reads `neuron` set to zero.
pub fn with_zeroed_outgoing(model: &ModelGraph, neuron: NeuronId) -> ModelGraph {
    let masked = cswap::coupling::apply_intervention(model, neuron).unwrap();
    masked.graph().clone()
}

/// Copy of `model` with `f` applied to every weight and bias value.
pub fn map_params(model: &ModelGraph, f: impl Fn(f32) -> f32) -> ModelGraph {
    let nodes = model
        .nodes()
        .iter()
        .cloned()
        .map(|mut n| {
            for t in [n.weights.as_mut(), n.bias.as_mut()].into_iter().flatten() {
                t.data_mut().iter_mut().for_each(|v| *v = f(*v));
            }
            n
        })
        .collect();
    ModelGraph::new(model.name(), model.input_shape().to_vec(), model.num_classes(), nodes).unwrap()
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (f64::from(*x) - f64::from(*y)).abs()).fold(0.0, f64::max)
}
