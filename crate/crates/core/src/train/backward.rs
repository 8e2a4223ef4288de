use crate::data::{Sample, Target};
use crate::graph::{run, LayerKind, ModelGraph, Shape3};

use super::Params64;

/// Loss, gradient with respect to the output activation, and the number of
/// correct predictions (1 per sample, or 1 per pixel for masks).
pub(crate) fn loss_grad(out: &[f64], shape: Shape3, target: &Target) -> (f64, Vec<f64>, usize) {
    match target {
        Target::Label(y) => {
            let (loss, grad, pred) = softmax_xent(out, *y);
            (loss, grad, usize::from(pred == *y))
        }
        Target::Mask(mask) => {
            let area = shape.spatial();
            let mut grad = vec![0.0; out.len()];
            let mut loss = 0.0;
            let mut hits = 0;
            let mut col = vec![0.0; shape.c];
            for (p, &k) in mask.iter().enumerate() {
                for c in 0..shape.c {
                    col[c] = out[c * area + p];
                }
                let (l, g, pred) = softmax_xent(&col, k as usize);
                loss += l;
                hits += usize::from(pred == k as usize);
                for c in 0..shape.c {
                    grad[c * area + p] = g[c] / area as f64;
                }
            }
            (loss / area as f64, grad, hits)
        }
    }
}

fn softmax_xent(z: &[f64], y: usize) -> (f64, Vec<f64>, usize) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut pred = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[pred] {
            pred = i;
        }
    }
    let loss = total.ln() - (z[y] - max);
    let grad = exps.iter().enumerate().map(|(i, e)| e / total - if i == y { 1.0 } else { 0.0 }).collect();
    (loss, grad, pred)
}

pub fn loss_and_grads(model: &ModelGraph, params: &Params64, sample: &Sample) -> (f64, Params64) {
    let mut grads = params.zeros_like();
    let (loss, _, _) = accumulate(model, params, sample, &mut grads);
    (loss, grads)
}

/// Adds this sample's parameter gradients into `grads`; returns
/// `(loss, correct, prediction units)`.
pub(crate) fn accumulate(
    model: &ModelGraph,
    params: &Params64,
    sample: &Sample,
    grads: &mut Params64,
) -> (f64, usize, usize) {
    let input: Vec<f64> = sample.input.data().iter().map(|&v| f64::from(v)).collect();
    let acts = run(model, params, &input);
    let out_idx = model.output_index();
    let (loss, dout, hits) = loss_grad(&acts[out_idx], model.output_shape(), &sample.target);
    let units = match &sample.target {
        Target::Label(_) => 1,
        Target::Mask(m) => m.len(),
    };

    let nodes = model.nodes();
    let shapes = model.shapes();
    let input_shape = model.input_shape3();
    let mut g: Vec<Vec<f64>> = acts.iter().map(|a| vec![0.0; a.len()]).collect();
    g[out_idx] = dout;
    let mut scratch = Vec::new();

    for &i in model.order().iter().rev() {
        let node = &nodes[i];
        let gy = std::mem::take(&mut g[i]);
        let src = node.inputs.first().map(|id| model.node_index(*id).expect("validated"));
        let (x, xs): (&[f64], Shape3) = match src {
            Some(j) => (&acts[j], shapes[j]),
            None => (&input, input_shape),
        };
        scratch.clear();
        scratch.resize(x.len(), 0.0);
        let gx = &mut scratch;
        match node.kind {
            LayerKind::Dense => {
                let w = &params.weights[i];
                let inp = x.len();
                let (gw, gb) = (&mut grads.weights[i], &mut grads.bias[i]);
                for (o, &go) in gy.iter().enumerate() {
                    if let Some(gb) = gb.as_mut() {
                        gb[o] += go;
                    }
                    for k in 0..inp {
                        gw[o * inp + k] += go * x[k];
                        gx[k] += w[o * inp + k] * go;
                    }
                }
            }
            LayerKind::Conv2D { stride, padding } => {
                let wshape = node.weights.as_ref().expect("conv").shape();
                let (kh, kw) = (wshape[2], wshape[3]);
                let ys = shapes[i];
                let w = &params.weights[i];
                let (gw, gb) = (&mut grads.weights[i], &mut grads.bias[i]);
                for o in 0..ys.c {
                    for oy in 0..ys.h {
                        for ox in 0..ys.w {
                            let go = gy[o * ys.spatial() + oy * ys.w + ox];
                            if let Some(gb) = gb.as_mut() {
                                gb[o] += go;
                            }
                            if go == 0.0 {
                                continue;
                            }
                            for c in 0..xs.c {
                                let kbase = (o * xs.c + c) * kh * kw;
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
                                        let xi = c * xs.spatial() + iy as usize * xs.w + ix as usize;
                                        gw[kbase + ky * kw + kx] += go * x[xi];
                                        gx[xi] += w[kbase + ky * kw + kx] * go;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            LayerKind::ReLU => {
                for k in 0..x.len() {
                    // subgradient at 0 is 0
                    gx[k] = if x[k] > 0.0 { gy[k] } else { 0.0 };
                }
            }
            LayerKind::ResidualAdd => {
                gx.copy_from_slice(&gy);
                let j = model.node_index(node.inputs[1]).expect("validated");
                for (a, b) in g[j].iter_mut().zip(&gy) {
                    *a += b;
                }
            }
            LayerKind::MaxPool2D { size, stride } => {
                let ys = shapes[i];
                for c in 0..ys.c {
                    for oy in 0..ys.h {
                        for ox in 0..ys.w {
                            let mut best = c * xs.spatial() + oy * stride * xs.w + ox * stride;
                            for ky in 0..size {
                                for kx in 0..size {
                                    let xi = c * xs.spatial() + (oy * stride + ky) * xs.w + ox * stride + kx;
                                    if x[xi] > x[best] {
                                        best = xi;
                                    }
                                }
                            }
                            gx[best] += gy[c * ys.spatial() + oy * ys.w + ox];
                        }
                    }
                }
            }
            LayerKind::GlobalAvgPool => {
                let area = xs.spatial();
                for (k, v) in gx.iter_mut().enumerate() {
                    *v = gy[k / area] / area as f64;
                }
            }
            LayerKind::Flatten => gx.copy_from_slice(&gy),
            LayerKind::Softmax => {
                let y = &acts[i];
                let area = xs.spatial();
                for p in 0..area {
                    let dot: f64 = (0..xs.c).map(|c| gy[c * area + p] * y[c * area + p]).sum();
                    for c in 0..xs.c {
                        gx[c * area + p] = y[c * area + p] * (gy[c * area + p] - dot);
                    }
                }
            }
        }
        if let Some(j) = src {
            for (a, b) in g[j].iter_mut().zip(gx.iter()) {
                *a += b;
            }
        }
    }
    (loss, hits, units)
}
