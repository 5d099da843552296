//! Small feed-forward networks over a flat parameter vector.
//!
//! Tensors are `channels x height x width`, row-major. Convolutions and
//! pooling are "valid" with stride 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn flat(n: usize) -> Self {
        Self { c: n, h: 1, w: 1 }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Dense { out: usize, bias: bool },
    Conv { out: usize, k: usize },
    AvgPool { k: usize },
    Relu,
}

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    kind: LayerKind,
    input: Shape,
    output: Shape,
    offset: usize,
    params: usize,
}

/// Layer stack plus its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<R> {
    layers: Vec<Layer>,
    params: Vec<R>,
}

/// Activations kept from a forward pass for backpropagation.
pub struct Trace<R> {
    acts: Vec<Vec<R>>,
}

impl<R> Trace<R> {
    pub fn output(&self) -> &[R] {
        self.acts.last().expect("non-empty trace")
    }
}

impl<R: Real> Network<R> {
    /// Builds the stack with He-uniform weights, zero biases and, when
    /// `zero_last` is set, an all-zero final weighted layer.
    pub fn new(input: Shape, kinds: &[LayerKind], seed: u64, zero_last: bool) -> Result<Self> {
        let mut layers = Vec::with_capacity(kinds.len());
        let mut shape = input;
        let mut offset = 0;
        for &kind in kinds {
            let (output, params) = match kind {
                LayerKind::Dense { out, bias } => (Shape::flat(out), shape.len() * out + if bias { out } else { 0 }),
                LayerKind::Conv { out, k } => {
                    if k > shape.h || k > shape.w {
                        return Err(Error::Config(format!(
                            "{k}x{k} kernel does not fit a {}x{} input",
                            shape.h, shape.w
                        )));
                    }
                    (Shape::new(out, shape.h - k + 1, shape.w - k + 1), out * shape.c * k * k + out)
                }
                LayerKind::AvgPool { k } => {
                    if k > shape.h || k > shape.w {
                        return Err(Error::Config(format!(
                            "{k}x{k} pool does not fit a {}x{} input",
                            shape.h, shape.w
                        )));
                    }
                    (Shape::new(shape.c, shape.h - k + 1, shape.w - k + 1), 0)
                }
                LayerKind::Relu => (shape, 0),
            };
            layers.push(Layer { kind, input: shape, output, offset, params });
            offset += params;
            shape = output;
        }
        let mut params = vec![R::zero(); offset];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last_weighted = layers.iter().rposition(|l| l.params > 0);
        for (i, l) in layers.iter().enumerate() {
            let fan_in = match l.kind {
                LayerKind::Dense { .. } => l.input.len(),
                LayerKind::Conv { k, .. } => l.input.c * k * k,
                _ => continue,
            };
            if zero_last && Some(i) == last_weighted {
                continue;
            }
            let weights = match l.kind {
                LayerKind::Dense { out, .. } => out * l.input.len(),
                LayerKind::Conv { out, k } => out * l.input.c * k * k,
                _ => 0,
            };
            let bound = (6.0 / fan_in as f64).sqrt();
            for p in &mut params[l.offset..l.offset + weights] {
                *p = R::of(rng.random_range(-bound..bound));
            }
        }
        Ok(Self { layers, params })
    }

    pub fn input_len(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input.len())
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output.len())
    }

    pub fn params(&self) -> &[R] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [R] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn param_norm(&self) -> f64 {
        self.params.iter().map(|p| p.as_f64().powi(2)).sum::<f64>().sqrt()
    }

    pub fn kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(|l| l.kind).collect()
    }

    pub fn forward(&self, input: &[R]) -> Vec<R> {
        let mut x = input.to_vec();
        for l in &self.layers {
            x = self.apply(l, &x);
        }
        x
    }

    pub fn forward_trace(&self, input: &[R]) -> Trace<R> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for l in &self.layers {
            let next = self.apply(l, acts.last().expect("input"));
            acts.push(next);
        }
        Trace { acts }
    }

    fn apply(&self, l: &Layer, x: &[R]) -> Vec<R> {
        debug_assert_eq!(x.len(), l.input.len());
        let p = &self.params[l.offset..l.offset + l.params];
        match l.kind {
            LayerKind::Dense { out, bias } => {
                let n = l.input.len();
                (0..out)
                    .map(|j| {
                        let row = &p[j * n..(j + 1) * n];
                        let mut acc = if bias { p[out * n + j] } else { R::zero() };
                        for (w, v) in row.iter().zip(x) {
                            acc += *w * *v;
                        }
                        acc
                    })
                    .collect()
            }
            LayerKind::Conv { out, k } => {
                let (ci, h, w) = (l.input.c, l.input.h, l.input.w);
                let (oh, ow) = (l.output.h, l.output.w);
                let kk = ci * k * k;
                let mut y = vec![R::zero(); out * oh * ow];
                for o in 0..out {
                    let b = p[out * kk + o];
                    let wk = &p[o * kk..(o + 1) * kk];
                    for r in 0..oh {
                        for c in 0..ow {
                            let mut acc = b;
                            for ch in 0..ci {
                                for dr in 0..k {
                                    let xrow = &x[(ch * h + r + dr) * w + c..][..k];
                                    let wrow = &wk[(ch * k + dr) * k..][..k];
                                    for (a, bb) in xrow.iter().zip(wrow) {
                                        acc += *a * *bb;
                                    }
                                }
                            }
                            y[(o * oh + r) * ow + c] = acc;
                        }
                    }
                }
                y
            }
            LayerKind::AvgPool { k } => {
                let (ch, h, w) = (l.input.c, l.input.h, l.input.w);
                let (oh, ow) = (l.output.h, l.output.w);
                let scale = R::one() / R::of_count(k * k);
                let mut y = vec![R::zero(); ch * oh * ow];
                // Summed-area table keeps the large pooling window cheap.
                let mut sat = vec![R::zero(); (h + 1) * (w + 1)];
                for c in 0..ch {
                    for r in 0..h {
                        let mut run = R::zero();
                        for q in 0..w {
                            run += x[(c * h + r) * w + q];
                            sat[(r + 1) * (w + 1) + q + 1] = sat[r * (w + 1) + q + 1] + run;
                        }
                    }
                    for r in 0..oh {
                        for q in 0..ow {
                            let s =
                                sat[(r + k) * (w + 1) + q + k] - sat[r * (w + 1) + q + k] - sat[(r + k) * (w + 1) + q]
                                    + sat[r * (w + 1) + q];
                            y[(c * oh + r) * ow + q] = s * scale;
                        }
                    }
                }
                y
            }
            LayerKind::Relu => x.iter().map(|v| v.max(R::zero())).collect(),
        }
    }

    /// Accumulates parameter gradients into `grads` given the gradient of
    /// the loss with respect to the output of the traced pass.
    pub fn backward(&self, trace: &Trace<R>, grad_out: &[R], grads: &mut [R]) {
        let mut g = grad_out.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let x = &trace.acts[i];
            let p = &self.params[l.offset..l.offset + l.params];
            let gp = &mut grads[l.offset..l.offset + l.params];
            let need_input_grad = i > 0;
            g = match l.kind {
                LayerKind::Dense { out, bias } => {
                    let n = l.input.len();
                    let mut gx = if need_input_grad { vec![R::zero(); n] } else { Vec::new() };
                    for j in 0..out {
                        let gj = g[j];
                        if gj == R::zero() {
                            continue;
                        }
                        let row = &mut gp[j * n..(j + 1) * n];
                        for (acc, v) in row.iter_mut().zip(x) {
                            *acc += gj * *v;
                        }
                        if bias {
                            gp[out * n + j] += gj;
                        }
                        if need_input_grad {
                            for (acc, w) in gx.iter_mut().zip(&p[j * n..(j + 1) * n]) {
                                *acc += gj * *w;
                            }
                        }
                    }
                    gx
                }
                LayerKind::Conv { out, k } => {
                    let (ci, h, w) = (l.input.c, l.input.h, l.input.w);
                    let (oh, ow) = (l.output.h, l.output.w);
                    let kk = ci * k * k;
                    let mut gx = if need_input_grad { vec![R::zero(); ci * h * w] } else { Vec::new() };
                    for o in 0..out {
                        for r in 0..oh {
                            for c in 0..ow {
                                let go = g[(o * oh + r) * ow + c];
                                if go == R::zero() {
                                    continue;
                                }
                                gp[out * kk + o] += go;
                                for ch in 0..ci {
                                    for dr in 0..k {
                                        for dc in 0..k {
                                            let xi = (ch * h + r + dr) * w + c + dc;
                                            let wi = o * kk + (ch * k + dr) * k + dc;
                                            gp[wi] += go * x[xi];
                                            if need_input_grad {
                                                gx[xi] += go * p[wi];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    gx
                }
                LayerKind::AvgPool { k } => {
                    if !need_input_grad {
                        Vec::new()
                    } else {
                        let (ch, h, w) = (l.input.c, l.input.h, l.input.w);
                        let (oh, ow) = (l.output.h, l.output.w);
                        let scale = R::one() / R::of_count(k * k);
                        let mut gx = vec![R::zero(); ch * h * w];
                        for c in 0..ch {
                            for r in 0..oh {
                                for q in 0..ow {
                                    let go = g[(c * oh + r) * ow + q] * scale;
                                    for dr in 0..k {
                                        for dq in 0..k {
                                            gx[(c * h + r + dr) * w + q + dq] += go;
                                        }
                                    }
                                }
                            }
                        }
                        gx
                    }
                }
                LayerKind::Relu => {
                    let y = &trace.acts[i + 1];
                    g.iter().zip(y).map(|(gv, yv)| if *yv > R::zero() { *gv } else { R::zero() }).collect()
                }
            };
        }
    }
}
