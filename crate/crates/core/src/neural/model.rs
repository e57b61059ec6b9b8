use rayon::prelude::*;

use super::layers::{BlockStack, Layer, Shape};
use crate::fxp::Precision;
use crate::{Error, Result};

/// Samples per parallel work unit when averaging batch gradients. Fixed so
/// that the summation order, and hence the result, never depends on the
/// thread count.
const GRAD_CHUNK: usize = 8;

/// Sequential network with validated shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct NetModel {
    pub input_shape: Shape,
    pub layers: Vec<Layer>,
    /// Inference arithmetic; anything other than `Double` rounds the input and
    /// every layer output.
    pub precision: Precision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Complexity {
    pub params: u64,
    pub macs: u64,
}

impl std::ops::Add for Complexity {
    type Output = Complexity;

    fn add(self, rhs: Complexity) -> Complexity {
        Complexity {
            params: self.params + rhs.params,
            macs: self.macs + rhs.macs,
        }
    }
}

/// Per-layer state kept for the backward pass beyond the layer output.
enum Saved {
    Nothing,
    Stack { ys: Vec<Vec<f64>>, hidden: Vec<Vec<f64>> },
}

struct Trace {
    acts: Vec<Vec<f64>>,
    saved: Vec<Saved>,
}

/// `L = mean((y - t)^2)` and `dL/dy = 2 (y - t) / n`.
pub fn mse_loss(y: &[f64], t: &[f64]) -> Result<(f64, Vec<f64>)> {
    if y.len() != t.len() {
        return Err(Error::shape(t.len(), y.len()));
    }
    if y.is_empty() {
        return Err(Error::EmptyInput("loss vectors"));
    }
    let n = y.len() as f64;
    let mut loss = 0.0;
    let grad = y
        .iter()
        .zip(t)
        .map(|(a, b)| {
            let d = a - b;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

fn relu_mask(g: &mut [f64], out: &[f64]) {
    for (gi, &o) in g.iter_mut().zip(out) {
        if o <= 0.0 {
            *gi = 0.0;
        }
    }
}

fn pair(grads: &mut [Vec<f64>], at: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = grads[at..at + 2].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

impl NetModel {
    pub fn new(input_shape: Shape, layers: Vec<Layer>) -> Result<Self> {
        let model = Self {
            input_shape,
            layers,
            precision: Precision::Double,
        };
        model.try_shapes()?;
        Ok(model)
    }

    fn try_shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        shapes.push(self.input_shape);
        for layer in &self.layers {
            let next = layer.output_shape(*shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// Input shape followed by every layer's output shape.
    pub fn shapes(&self) -> Vec<Shape> {
        self.try_shapes().expect("model shapes validated at construction")
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes().last().unwrap()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Zeroed buffers matching `params()`.
    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }

    fn round(&self, v: &mut [f64]) {
        if !self.precision.is_exact() {
            for x in v.iter_mut() {
                *x = self.precision.apply(*x);
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(x)?.acts.pop().unwrap())
    }

    fn trace(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.input_shape.len() {
            return Err(Error::shape(self.input_shape.len(), x.len()));
        }
        let shapes = self.shapes();
        let mut input = x.to_vec();
        self.round(&mut input);
        let mut acts = vec![input];
        let mut saved = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let (sin, sout) = (shapes[li], shapes[li + 1]);
            let x = acts.last().unwrap();
            let mut y = vec![0.0; sout.len()];
            let mut keep = Saved::Nothing;
            match layer {
                Layer::Dense(d) => d.forward_into(x, &mut y),
                Layer::Conv(c) => c.forward_into(x, sin, sout, &mut y),
                Layer::Upsample(u) => u.forward_into(x, sin, &mut y),
                Layer::Stack(s) => keep = self.stack_forward(s, x, sin, &mut y),
            }
            self.round(&mut y);
            acts.push(y);
            saved.push(keep);
        }
        Ok(Trace { acts, saved })
    }

    fn stack_forward(&self, s: &BlockStack, x: &[f64], shape: Shape, out: &mut [f64]) -> Saved {
        let mut ys = vec![x.to_vec()];
        let mut hidden = Vec::with_capacity(s.blocks.len());
        out.copy_from_slice(x);
        for b in &s.blocks {
            let mid = b.first.output_shape(shape).expect("validated");
            let mut h = vec![0.0; mid.len()];
            b.first.forward_into(ys.last().unwrap(), shape, mid, &mut h);
            self.round(&mut h);
            let mut o = vec![0.0; shape.len()];
            b.second.forward_into(&h, mid, shape, &mut o);
            self.round(&mut o);
            for (acc, v) in out.iter_mut().zip(&o) {
                *acc += v;
            }
            hidden.push(h);
            ys.push(o);
        }
        Saved::Stack { ys, hidden }
    }

    /// Loss and exact parameter gradients for one sample, in `params()` order.
    pub fn backward(&self, x: &[f64], t: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut grads = self.zero_grads();
        let loss = self.accumulate_gradients(x, t, &mut grads)?;
        Ok((loss, grads))
    }

    /// Adds this sample's gradients into `grads` and returns its loss.
    pub fn accumulate_gradients(&self, x: &[f64], t: &[f64], grads: &mut [Vec<f64>]) -> Result<f64> {
        let out_len = self.output_shape().len();
        if t.len() != out_len {
            return Err(Error::shape(out_len, t.len()));
        }
        let trace = self.trace(x)?;
        let (loss, mut g) = mse_loss(trace.acts.last().unwrap(), t)?;
        let shapes = self.shapes();
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let at = *acc;
                *acc += l.params().len();
                Some(at)
            })
            .collect();
        for li in (0..self.layers.len()).rev() {
            let (sin, sout) = (shapes[li], shapes[li + 1]);
            let (input, output) = (&trace.acts[li], &trace.acts[li + 1]);
            let need_input_grad = li > 0;
            let mut gx = vec![0.0; sin.len()];
            let p = offsets[li];
            match &self.layers[li] {
                Layer::Dense(d) => {
                    if d.relu {
                        relu_mask(&mut g, output);
                    }
                    let (gw, gb) = pair(grads, p);
                    d.backward(input, &g, gw, gb, need_input_grad.then_some(&mut gx[..]));
                }
                Layer::Conv(c) => {
                    if c.relu {
                        relu_mask(&mut g, output);
                    }
                    let (gk, gb) = pair(grads, p);
                    c.backward(input, sin, sout, &g, gk, gb, need_input_grad.then_some(&mut gx[..]));
                }
                Layer::Upsample(u) => u.backward(sin, &g, &mut gx),
                Layer::Stack(s) => {
                    let Saved::Stack { ys, hidden } = &trace.saved[li] else {
                        unreachable!("stack layers always save their state")
                    };
                    // dL/dy_i = g + (block i+1)^T dL/dy_{i+1}
                    let mut gy = g.clone();
                    for bi in (0..s.blocks.len()).rev() {
                        let b = &s.blocks[bi];
                        let mid = b.first.output_shape(sin)?;
                        let h = &hidden[bi];
                        let mut gh = vec![0.0; mid.len()];
                        let (gk, gb) = pair(grads, p + 4 * bi + 2);
                        b.second.backward(h, mid, sin, &gy, gk, gb, Some(&mut gh));
                        relu_mask(&mut gh, h);
                        let (gk, gb) = pair(grads, p + 4 * bi);
                        b.first.backward(&ys[bi], sin, mid, &gh, gk, gb, Some(&mut gx));
                        for ((dst, a), b) in gy.iter_mut().zip(&g).zip(&gx) {
                            *dst = a + b;
                        }
                    }
                    gx.copy_from_slice(&gy);
                }
            }
            g = gx;
        }
        Ok(loss)
    }

    /// Mean loss and mean gradients over a batch.
    pub fn batch_gradients(&self, inputs: &[&[f64]], targets: &[&[f64]]) -> Result<(f64, Vec<Vec<f64>>)> {
        if inputs.len() != targets.len() {
            return Err(Error::shape(inputs.len(), targets.len()));
        }
        if inputs.is_empty() {
            return Err(Error::EmptyInput("batch"));
        }
        let partials: Vec<Result<(f64, Vec<Vec<f64>>)>> = inputs
            .par_chunks(GRAD_CHUNK)
            .zip(targets.par_chunks(GRAD_CHUNK))
            .map(|(xs, ts)| {
                let mut grads = self.zero_grads();
                let mut loss = 0.0;
                for (x, t) in xs.iter().zip(ts) {
                    loss += self.accumulate_gradients(x, t, &mut grads)?;
                }
                Ok((loss, grads))
            })
            .collect();
        let mut total = 0.0;
        let mut grads = self.zero_grads();
        for part in partials {
            let (loss, g) = part?;
            total += loss;
            for (dst, src) in grads.iter_mut().zip(&g) {
                for (a, b) in dst.iter_mut().zip(src) {
                    *a += b;
                }
            }
        }
        let n = inputs.len() as f64;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v /= n;
            }
        }
        Ok((total / n, grads))
    }

    /// Mean loss over a set of samples, evaluated in parallel.
    pub fn mean_loss(&self, inputs: &[&[f64]], targets: &[&[f64]]) -> Result<f64> {
        if inputs.len() != targets.len() {
            return Err(Error::shape(inputs.len(), targets.len()));
        }
        if inputs.is_empty() {
            return Err(Error::EmptyInput("evaluation set"));
        }
        let losses: Vec<Result<f64>> = inputs
            .par_iter()
            .zip(targets.par_iter())
            .map(|(x, t)| Ok(mse_loss(&self.forward(x)?, t)?.0))
            .collect();
        let mut total = 0.0;
        for l in losses {
            total += l?;
        }
        Ok(total / inputs.len() as f64)
    }
}

/// Complexity of one layer given its input shape.
pub fn layer_complexity(layer: &Layer, input: Shape) -> Result<Complexity> {
    Ok(match layer {
        Layer::Dense(d) => Complexity {
            params: (d.out_dim * d.in_dim + d.out_dim) as u64,
            macs: (d.out_dim * d.in_dim) as u64,
        },
        Layer::Conv(c) => {
            let out = c.output_shape(input)?;
            let per_filter = (c.in_channels * c.kernel_h * c.kernel_w) as u64;
            Complexity {
                params: c.n_filters as u64 * per_filter + c.n_filters as u64,
                macs: c.n_filters as u64 * per_filter * (out.h * out.w) as u64,
            }
        }
        Layer::Upsample(_) => Complexity::default(),
        Layer::Stack(s) => {
            let mut total = Complexity::default();
            for b in &s.blocks {
                let mid = b.first.output_shape(input)?;
                total = total
                    + layer_complexity(&Layer::Conv(b.first.clone()), input)?
                    + layer_complexity(&Layer::Conv(b.second.clone()), mid)?;
            }
            total
        }
    })
}

/// Learnable parameters and multiply-accumulates of a forward pass. Bias
/// additions, residual sums and the fixed upsampling are not counted as MACs.
pub fn count_complexity(model: &NetModel) -> Complexity {
    let shapes = model.shapes();
    model
        .layers
        .iter()
        .zip(&shapes)
        .map(|(l, s)| layer_complexity(l, *s).expect("validated"))
        .fold(Complexity::default(), |a, b| a + b)
}
