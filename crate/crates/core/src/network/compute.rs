//! Forward and backward passes. Convolutions are lowered to matrix products
//! via im2col; the products themselves go through `matrixmultiply`.

use rayon::prelude::*;

use super::arch::{LayerSpec, Shape};
use super::params::{NetworkParams, ParamSet};
use crate::error::{Error, Result};

/// Probabilities are kept strictly inside (0, 1).
pub const OUTPUT_EPS: f64 = 1e-15;
/// Clamp applied to p before taking logarithms in the loss.
pub const LOSS_CLAMP: f64 = 1e-7;

/// Samples per work unit in batched passes; gradients are reduced over work
/// units in index order so results do not depend on thread count.
const CHUNK: usize = 8;

/// `c = a · b (+ c if accumulate)` for row-major slices with explicit strides.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(c.len() >= m * n);
    unsafe {
        // SAFETY: callers pass slices whose extents cover the strided views
        // described by (m, k, n) and the strides; `c` is a dense m×n block.
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            if accumulate { 1.0 } else { 0.0 },
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

struct ConvGeom {
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    inp: Shape,
    out: Shape,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.out.h * self.out.w
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let (rows, cols) = (self.rows(), self.cols());
        let mut out = vec![0.0; rows * cols];
        let (h, w) = (self.inp.h as isize, self.inp.w as isize);
        for ci in 0..self.cin {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let r = (ci * self.k + ky) * self.k + kx;
                    let row = &mut out[r * cols..(r + 1) * cols];
                    for oy in 0..self.out.h {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        let src = &x[(ci * self.inp.h + iy as usize) * self.inp.w..];
                        for ox in 0..self.out.w {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w {
                                row[oy * self.out.w + ox] = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn col2im(&self, dcols: &[f64]) -> Vec<f64> {
        let cols = self.cols();
        let mut dx = vec![0.0; self.inp.len()];
        let (h, w) = (self.inp.h as isize, self.inp.w as isize);
        for ci in 0..self.cin {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let r = (ci * self.k + ky) * self.k + kx;
                    let row = &dcols[r * cols..(r + 1) * cols];
                    for oy in 0..self.out.h {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        let base = (ci * self.inp.h + iy as usize) * self.inp.w;
                        for ox in 0..self.out.w {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w {
                                dx[base + ix as usize] += row[oy * self.out.w + ox];
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

enum Cache {
    None,
    Cols(Vec<f64>),
    Argmax(Vec<usize>),
}

struct Trace {
    /// `acts[i]` is the input of layer `i`; the last entry is the output.
    acts: Vec<Vec<f64>>,
    caches: Vec<Cache>,
}

fn conv_geom(spec: &LayerSpec, inp: Shape, out: Shape) -> ConvGeom {
    match *spec {
        LayerSpec::Convolution {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => ConvGeom {
            cin: in_channels,
            cout: out_channels,
            k: kernel,
            stride,
            pad: padding,
            inp,
            out,
        },
        _ => unreachable!("not a convolution"),
    }
}

fn run_forward(params: &NetworkParams, input: &[f32], keep: bool) -> Result<Trace> {
    let arch = &params.architecture;
    if input.len() != arch.input_len() {
        return Err(Error::InputShape {
            expected: arch.input_len(),
            found: input.len(),
        });
    }
    let shapes = arch.shapes()?;
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(arch.layers.len() + 1);
    let mut caches = Vec::with_capacity(arch.layers.len());
    let mut cur: Vec<f64> = input.iter().map(|&v| v as f64).collect();
    let mut in_shape = arch.input;

    for (i, spec) in arch.layers.iter().enumerate() {
        let out_shape = shapes[i];
        let lp = &params.tensors.layers[i];
        let (next, cache) = match *spec {
            LayerSpec::Convolution { .. } => {
                let g = conv_geom(spec, in_shape, out_shape);
                let cols = g.im2col(&cur);
                let n = g.cols();
                let mut out = vec![0.0; g.cout * n];
                for (co, chunk) in out.chunks_mut(n).enumerate() {
                    chunk.fill(lp.bias[co]);
                }
                gemm(
                    g.cout,
                    g.rows(),
                    n,
                    &lp.weights,
                    g.rows() as isize,
                    1,
                    &cols,
                    n as isize,
                    1,
                    &mut out,
                    true,
                );
                (out, if keep { Cache::Cols(cols) } else { Cache::None })
            }
            LayerSpec::Relu => (cur.iter().map(|&v| v.max(0.0)).collect(), Cache::None),
            LayerSpec::MaxPool { size } => {
                let mut out = vec![0.0; out_shape.len()];
                let mut arg = vec![0usize; out_shape.len()];
                for c in 0..out_shape.c {
                    for oy in 0..out_shape.h {
                        for ox in 0..out_shape.w {
                            let mut best = f64::NEG_INFINITY;
                            let mut best_i = 0;
                            for dy in 0..size {
                                for dx in 0..size {
                                    let idx = (c * in_shape.h + oy * size + dy) * in_shape.w
                                        + ox * size
                                        + dx;
                                    if cur[idx] > best {
                                        best = cur[idx];
                                        best_i = idx;
                                    }
                                }
                            }
                            let o = (c * out_shape.h + oy) * out_shape.w + ox;
                            out[o] = best;
                            arg[o] = best_i;
                        }
                    }
                }
                (out, if keep { Cache::Argmax(arg) } else { Cache::None })
            }
            LayerSpec::Flatten => (cur.clone(), Cache::None),
            LayerSpec::FullyConnected { inputs, units } => {
                let mut out = lp.bias.clone();
                for (u, o) in out.iter_mut().enumerate() {
                    let row = &lp.weights[u * inputs..(u + 1) * inputs];
                    *o += row.iter().zip(&cur).map(|(w, x)| w * x).sum::<f64>();
                }
                debug_assert_eq!(out.len(), units);
                (out, Cache::None)
            }
            LayerSpec::Sigmoid => (
                cur.iter()
                    .map(|&z| (1.0 / (1.0 + (-z).exp())).clamp(OUTPUT_EPS, 1.0 - OUTPUT_EPS))
                    .collect(),
                Cache::None,
            ),
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: i,
                kind: spec.name(),
            });
        }
        if keep {
            acts.push(std::mem::replace(&mut cur, next));
        } else {
            cur = next;
        }
        caches.push(cache);
        in_shape = out_shape;
    }
    acts.push(cur);
    Ok(Trace { acts, caches })
}

/// Success probability for one flattened input.
pub fn forward_one(params: &NetworkParams, input: &[f32]) -> Result<f64> {
    let trace = run_forward(params, input, false)?;
    Ok(trace.acts.last().expect("output")[0])
}

/// Success probabilities for a batch of flattened inputs.
pub fn forward_inputs(params: &NetworkParams, inputs: &[&[f32]]) -> Result<Vec<f64>> {
    inputs
        .par_iter()
        .map(|x| forward_one(params, x))
        .collect()
}

/// Per-sample loss with the clamp applied before the logarithm.
pub fn nll(p: f64, label: bool) -> f64 {
    let p = p.clamp(LOSS_CLAMP, 1.0 - LOSS_CLAMP);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Loss and gradient contribution of a single sample (unnormalized).
fn sample_gradient(
    params: &NetworkParams,
    input: &[f32],
    label: bool,
    grads: &mut ParamSet,
) -> Result<(f64, f64)> {
    let arch = &params.architecture;
    let shapes = arch.shapes()?;
    let trace = run_forward(params, input, true)?;
    let p = trace.acts.last().expect("output")[0];
    let loss = nll(p, label);
    let y = if label { 1.0 } else { 0.0 };

    let last = arch.layers.len() - 1;
    // dL/dz for the pre-sigmoid logit; zero inside the clamped region
    let dz = if p > LOSS_CLAMP && p < 1.0 - LOSS_CLAMP {
        p - y
    } else {
        0.0
    };
    let mut delta = vec![dz];

    for i in (0..last).rev() {
        let spec = &arch.layers[i];
        let x = &trace.acts[i];
        let in_shape = if i == 0 { arch.input } else { shapes[i - 1] };
        let g = &mut grads.layers[i];
        let lp = &params.tensors.layers[i];
        delta = match *spec {
            LayerSpec::Convolution { .. } => {
                let geom = conv_geom(spec, in_shape, shapes[i]);
                let Cache::Cols(cols) = &trace.caches[i] else {
                    unreachable!("convolution cache")
                };
                let n = geom.cols();
                let rows = geom.rows();
                for (co, d) in delta.chunks(n).enumerate() {
                    g.bias[co] += d.iter().sum::<f64>();
                }
                // dW (cout×rows) += delta (cout×n) · colsᵀ (n×rows)
                gemm(
                    geom.cout, n, rows, &delta, n as isize, 1, cols, 1, n as isize,
                    &mut g.weights, true,
                );
                if i == 0 {
                    Vec::new()
                } else {
                    // dcols (rows×n) = Wᵀ (rows×cout) · delta (cout×n)
                    let mut dcols = vec![0.0; rows * n];
                    gemm(
                        rows, geom.cout, n, &lp.weights, 1, rows as isize, &delta,
                        n as isize, 1, &mut dcols, false,
                    );
                    geom.col2im(&dcols)
                }
            }
            LayerSpec::Relu => delta
                .iter()
                .zip(x)
                .map(|(d, &v)| if v > 0.0 { *d } else { 0.0 })
                .collect(),
            LayerSpec::MaxPool { .. } => {
                let Cache::Argmax(arg) = &trace.caches[i] else {
                    unreachable!("pool cache")
                };
                let mut dx = vec![0.0; x.len()];
                for (d, &a) in delta.iter().zip(arg) {
                    dx[a] += d;
                }
                dx
            }
            LayerSpec::Flatten => delta,
            LayerSpec::FullyConnected { inputs, .. } => {
                let mut dx = vec![0.0; inputs];
                for (u, &d) in delta.iter().enumerate() {
                    g.bias[u] += d;
                    let grow = &mut g.weights[u * inputs..(u + 1) * inputs];
                    for (gw, &xv) in grow.iter_mut().zip(x) {
                        *gw += d * xv;
                    }
                    if i > 0 {
                        let wrow = &lp.weights[u * inputs..(u + 1) * inputs];
                        for (dxv, &w) in dx.iter_mut().zip(wrow) {
                            *dxv += d * w;
                        }
                    }
                }
                dx
            }
            LayerSpec::Sigmoid => {
                let out = &trace.acts[i + 1];
                delta
                    .iter()
                    .zip(out)
                    .map(|(d, &s)| d * s * (1.0 - s))
                    .collect()
            }
        };
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: i,
                kind: spec.name(),
            });
        }
    }
    Ok((loss, p))
}

/// Mean loss and its gradient over a batch of `(input, label)` pairs.
pub fn loss_and_gradients_inputs(
    params: &NetworkParams,
    batch: &[(&[f32], bool)],
) -> Result<(f64, ParamSet)> {
    batch_pass(params, batch).map(|(loss, grads, _)| (loss, grads))
}

/// Like [`loss_and_gradients_inputs`], also returning each sample's
/// probability.
pub(crate) fn batch_pass(
    params: &NetworkParams,
    batch: &[(&[f32], bool)],
) -> Result<(f64, ParamSet, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let partials: Vec<(f64, ParamSet, Vec<f64>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = ParamSet::zeros_like(&params.tensors);
            let mut loss = 0.0;
            let mut probs = Vec::with_capacity(chunk.len());
            for (x, y) in chunk {
                let (l, p) = sample_gradient(params, x, *y, &mut g)?;
                loss += l;
                probs.push(p);
            }
            Ok((loss, g, probs))
        })
        .collect::<Result<_>>()?;
    let mut iter = partials.into_iter();
    let (mut loss, mut grads, mut probs) = iter.next().expect("non-empty");
    for (l, g, p) in iter {
        loss += l;
        grads.add_assign(&g);
        probs.extend(p);
    }
    let scale = 1.0 / batch.len() as f64;
    grads.scale(scale);
    if !grads.all_finite() {
        let layer = grads
            .layers
            .iter()
            .position(|l| l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()))
            .unwrap_or(0);
        return Err(Error::NonFinite {
            layer,
            kind: params.architecture.layers[layer].name(),
        });
    }
    Ok((loss * scale, grads, probs))
}
