//! Forward inference kernels.
//!
//! Kernels are generic over the activation type so the trainer can run the
//! same code in `f64`. Dot products always accumulate in `f64`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{LayerKind, LayerNode, ModelGraph, Shape3};

pub trait Real: Copy + Send + Sync + PartialOrd + std::fmt::Debug + 'static {
    const ZERO: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Supplies layer parameters to the kernels, indexed by node position.
pub trait ParamSource<T> {
    fn weights(&self, node: usize) -> &[T];
    fn bias(&self, node: usize) -> Option<&[T]>;
}

impl ParamSource<f32> for ModelGraph {
    fn weights(&self, node: usize) -> &[f32] {
        self.nodes()[node].weights.as_ref().map_or(&[], Tensor::data)
    }

    fn bias(&self, node: usize) -> Option<&[f32]> {
        self.nodes()[node].bias.as_ref().map(Tensor::data)
    }
}

/// Runs the graph and returns every node's activation, indexed by node position.
pub(crate) fn run<T: Real, P: ParamSource<T> + ?Sized>(model: &ModelGraph, params: &P, input: &[T]) -> Vec<Vec<T>> {
    let nodes = model.nodes();
    let shapes = model.shapes();
    let input_shape = model.input_shape3();
    let mut acts: Vec<Vec<T>> = vec![Vec::new(); nodes.len()];
    for &i in model.order() {
        let node = &nodes[i];
        let src_idx = |k: usize| model.node_index(node.inputs[k]).expect("validated input");
        let (x, xs): (&[T], Shape3) = if node.inputs.is_empty() {
            (input, input_shape)
        } else {
            let j = src_idx(0);
            (&acts[j], shapes[j])
        };
        let out = match node.kind {
            LayerKind::Dense => dense(params.weights(i), params.bias(i), x, node.out_channels),
            LayerKind::Conv2D { stride, padding } => {
                conv2d(params.weights(i), params.bias(i), x, xs, node, shapes[i], stride, padding)
            }
            LayerKind::ReLU => x.iter().map(|&v| if v > T::ZERO { v } else { T::ZERO }).collect(),
            LayerKind::ResidualAdd => {
                let y = &acts[src_idx(1)];
                x.iter().zip(y).map(|(&a, &b)| T::from_f64(a.to_f64() + b.to_f64())).collect()
            }
            LayerKind::MaxPool2D { size, stride } => maxpool(x, xs, shapes[i], size, stride),
            LayerKind::GlobalAvgPool => {
                let area = xs.spatial();
                x.chunks(area).map(|ch| T::from_f64(ch.iter().map(|v| v.to_f64()).sum::<f64>() / area as f64)).collect()
            }
            LayerKind::Flatten => x.to_vec(),
            LayerKind::Softmax => channel_softmax_generic(x, xs),
        };
        acts[i] = out;
    }
    acts
}

fn dense<T: Real>(w: &[T], b: Option<&[T]>, x: &[T], out: usize) -> Vec<T> {
    let inp = x.len();
    (0..out)
        .map(|o| {
            let row = &w[o * inp..(o + 1) * inp];
            let mut acc = b.map_or(0.0, |b| b[o].to_f64());
            for (wv, xv) in row.iter().zip(x) {
                acc += wv.to_f64() * xv.to_f64();
            }
            T::from_f64(acc)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn conv2d<T: Real>(
    w: &[T],
    b: Option<&[T]>,
    x: &[T],
    xs: Shape3,
    node: &LayerNode,
    ys: Shape3,
    stride: usize,
    padding: usize,
) -> Vec<T> {
    let wshape = node.weights.as_ref().expect("conv weights").shape();
    let (kh, kw) = (wshape[2], wshape[3]);
    let mut y = Vec::with_capacity(ys.volume());
    for o in 0..ys.c {
        let bias = b.map_or(0.0, |b| b[o].to_f64());
        for oy in 0..ys.h {
            for ox in 0..ys.w {
                let mut acc = bias;
                for c in 0..xs.c {
                    let kbase = ((o * xs.c) + c) * kh * kw;
                    let xbase = c * xs.spatial();
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= xs.h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= xs.w as isize {
                                continue;
                            }
                            acc +=
                                w[kbase + ky * kw + kx].to_f64() * x[xbase + iy as usize * xs.w + ix as usize].to_f64();
                        }
                    }
                }
                y.push(T::from_f64(acc));
            }
        }
    }
    y
}

fn maxpool<T: Real>(x: &[T], xs: Shape3, ys: Shape3, size: usize, stride: usize) -> Vec<T> {
    let mut y = Vec::with_capacity(ys.volume());
    for c in 0..ys.c {
        for oy in 0..ys.h {
            for ox in 0..ys.w {
                let mut best = x[c * xs.spatial() + oy * stride * xs.w + ox * stride];
                for ky in 0..size {
                    for kx in 0..size {
                        let v = x[c * xs.spatial() + (oy * stride + ky) * xs.w + ox * stride + kx];
                        if v > best {
                            best = v;
                        }
                    }
                }
                y.push(best);
            }
        }
    }
    y
}

fn channel_softmax_generic<T: Real>(x: &[T], xs: Shape3) -> Vec<T> {
    let area = xs.spatial();
    let mut y = vec![T::ZERO; x.len()];
    for p in 0..area {
        let max = (0..xs.c).map(|c| x[c * area + p].to_f64()).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = (0..xs.c).map(|c| (x[c * area + p].to_f64() - max).exp()).sum();
        for c in 0..xs.c {
            y[c * area + p] = T::from_f64((x[c * area + p].to_f64() - max).exp() / total);
        }
    }
    y
}

/// Runs the model on one input and returns the output node's activation.
pub fn forward(model: &ModelGraph, input: &Tensor) -> Result<Tensor> {
    if input.shape() != model.input_shape() {
        return Err(Error::Dimension { expected: model.input_shape().to_vec(), actual: input.shape().to_vec() });
    }
    let mut acts = run(model, model, input.data());
    let out = std::mem::take(&mut acts[model.output_index()]);
    Ok(Tensor::new(model.output_shape().to_dims(), out).expect("output shape"))
}

/// Numerically stable softmax of a logit vector, in `f64`.
pub fn softmax_probs(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().map(|&v| f64::from(v)).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (f64::from(v) - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax over the channel axis at every pixel of a `c × h × w` output.
pub fn channel_softmax(output: &[f32], shape: Shape3) -> Vec<f64> {
    let as64: Vec<f64> = output.iter().map(|&v| f64::from(v)).collect();
    channel_softmax_generic(&as64, shape)
}

/// Class probabilities per output position (`c × h × w`, channel-major),
/// applying the softmax unless the model already ends in one.
pub fn output_probabilities(model: &ModelGraph, output: &[f32]) -> Vec<f64> {
    if model.output_node().kind == LayerKind::Softmax {
        output.iter().map(|&v| f64::from(v)).collect()
    } else {
        channel_softmax(output, model.output_shape())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &ModelGraph, input: &Tensor) -> Result<usize> {
    Ok(argmax(forward(model, input)?.data()))
}
