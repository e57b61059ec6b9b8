use rand::Rng;

use crate::classical::linear_weights;
use crate::{Error, Result};

/// Activation tensor shape `[channels x height x width]`, stored row-major.
/// Dense layers use `Shape::flat(n)` = `[n x 1 x 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.c, self.h, self.w)
    }
}

fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-limit..=limit)).collect()
}

/// Fully connected layer `y = W x + b`, optionally followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out_dim x in_dim`, row-major
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub relu: bool,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, relu: bool) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            relu,
        }
    }

    pub fn glorot(in_dim: usize, out_dim: usize, relu: bool, rng: &mut impl Rng) -> Self {
        Self {
            weights: glorot(rng, in_dim, out_dim, in_dim * out_dim),
            ..Self::zeros(in_dim, out_dim, relu)
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::shape(self.in_dim, x.len()));
        }
        let mut y = vec![0.0; self.out_dim];
        self.forward_into(x, &mut y);
        Ok(y)
    }

    pub(crate) fn forward_into(&self, x: &[f64], y: &mut [f64]) {
        for ((o, row), b) in y.iter_mut().zip(self.weights.chunks_exact(self.in_dim)).zip(&self.bias) {
            let acc: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            *o = acc + b;
            if self.relu && *o < 0.0 {
                *o = 0.0;
            }
        }
    }

    /// `g` is the gradient w.r.t. the pre-activation output.
    pub(crate) fn backward(&self, x: &[f64], g: &[f64], gw: &mut [f64], gb: &mut [f64], gx: Option<&mut [f64]>) {
        for ((gw_row, &go), gb) in gw.chunks_exact_mut(self.in_dim).zip(g).zip(gb.iter_mut()) {
            if go == 0.0 {
                continue;
            }
            *gb += go;
            for (w, v) in gw_row.iter_mut().zip(x) {
                *w += go * v;
            }
        }
        if let Some(gx) = gx {
            gx.fill(0.0);
            for (row, &go) in self.weights.chunks_exact(self.in_dim).zip(g) {
                if go == 0.0 {
                    continue;
                }
                for (acc, w) in gx.iter_mut().zip(row) {
                    *acc += go * w;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// No padding; output shrinks by `kernel - 1`.
    Valid,
    /// Zero padding of `(kernel - 1) / 2` on each side.
    Same,
}

/// 2-D convolution over a `[C x H x W]` input:
/// `O[n][x][y] = B[n] + sum_{k,i,j} I[k][U x + i][U y + j] W[n][k][i][j]`
/// where `I` is the zero-padded input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub n_filters: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: Padding,
    /// `[n_filters x in_channels x kernel_h x kernel_w]`
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub relu: bool,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, n_filters: usize, kernel: usize, padding: Padding, relu: bool) -> Self {
        Self {
            in_channels,
            n_filters,
            kernel_h: kernel,
            kernel_w: kernel,
            stride: 1,
            padding,
            kernel: vec![0.0; n_filters * in_channels * kernel * kernel],
            bias: vec![0.0; n_filters],
            relu,
        }
    }

    pub fn glorot(
        in_channels: usize,
        n_filters: usize,
        kernel: usize,
        padding: Padding,
        relu: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let area = kernel * kernel;
        Self {
            kernel: glorot(rng, in_channels * area, n_filters * area, n_filters * in_channels * area),
            ..Self::zeros(in_channels, n_filters, kernel, padding, relu)
        }
    }

    fn pads(&self) -> (usize, usize) {
        match self.padding {
            Padding::Valid => (0, 0),
            Padding::Same => ((self.kernel_h - 1) / 2, (self.kernel_w - 1) / 2),
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.c != self.in_channels {
            return Err(Error::shape(
                format!("{} input channels", self.in_channels),
                format!("{} channels", input.c),
            ));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("convolution stride must be positive".into()));
        }
        if self.padding == Padding::Same && (self.kernel_h.is_multiple_of(2) || self.kernel_w.is_multiple_of(2)) {
            return Err(Error::InvalidConfig("same padding needs odd kernel sizes".into()));
        }
        let (ph, pw) = self.pads();
        let (h, w) = (input.h + 2 * ph, input.w + 2 * pw);
        if h < self.kernel_h || w < self.kernel_w {
            return Err(Error::shape(
                format!("input at least {}x{}", self.kernel_h, self.kernel_w),
                format!("{}x{}", input.h, input.w),
            ));
        }
        Ok(Shape::new(
            self.n_filters,
            (h - self.kernel_h) / self.stride + 1,
            (w - self.kernel_w) / self.stride + 1,
        ))
    }

    pub fn forward(&self, x: &[f64], input: Shape) -> Result<Vec<f64>> {
        if x.len() != input.len() {
            return Err(Error::shape(input.len(), x.len()));
        }
        let out_shape = self.output_shape(input)?;
        let mut y = vec![0.0; out_shape.len()];
        self.forward_into(x, input, out_shape, &mut y);
        Ok(y)
    }

    pub(crate) fn forward_into(&self, x: &[f64], input: Shape, out: Shape, y: &mut [f64]) {
        let (ph, pw) = self.pads();
        let (kh, kw) = (self.kernel_h, self.kernel_w);
        for n in 0..self.n_filters {
            for ox in 0..out.h {
                for oy in 0..out.w {
                    let mut acc = self.bias[n];
                    for k in 0..self.in_channels {
                        for i in 0..kh {
                            let r = (self.stride * ox + i) as isize - ph as isize;
                            if r < 0 || r >= input.h as isize {
                                continue;
                            }
                            let in_row = (k * input.h + r as usize) * input.w;
                            let w_row = ((n * self.in_channels + k) * kh + i) * kw;
                            for j in 0..kw {
                                let c = (self.stride * oy + j) as isize - pw as isize;
                                if c < 0 || c >= input.w as isize {
                                    continue;
                                }
                                acc += x[in_row + c as usize] * self.kernel[w_row + j];
                            }
                        }
                    }
                    if self.relu && acc < 0.0 {
                        acc = 0.0;
                    }
                    y[(n * out.h + ox) * out.w + oy] = acc;
                }
            }
        }
    }

    pub(crate) fn backward(
        &self,
        x: &[f64],
        input: Shape,
        out: Shape,
        g: &[f64],
        gk: &mut [f64],
        gb: &mut [f64],
        mut gx: Option<&mut [f64]>,
    ) {
        let (ph, pw) = self.pads();
        let (kh, kw) = (self.kernel_h, self.kernel_w);
        if let Some(gx) = gx.as_deref_mut() {
            gx.fill(0.0);
        }
        for n in 0..self.n_filters {
            for ox in 0..out.h {
                for oy in 0..out.w {
                    let go = g[(n * out.h + ox) * out.w + oy];
                    if go == 0.0 {
                        continue;
                    }
                    gb[n] += go;
                    for k in 0..self.in_channels {
                        for i in 0..kh {
                            let r = (self.stride * ox + i) as isize - ph as isize;
                            if r < 0 || r >= input.h as isize {
                                continue;
                            }
                            let in_row = (k * input.h + r as usize) * input.w;
                            let w_row = ((n * self.in_channels + k) * kh + i) * kw;
                            for j in 0..kw {
                                let c = (self.stride * oy + j) as isize - pw as isize;
                                if c < 0 || c >= input.w as isize {
                                    continue;
                                }
                                gk[w_row + j] += go * x[in_row + c as usize];
                                if let Some(gx) = gx.as_deref_mut() {
                                    gx[in_row + c as usize] += go * self.kernel[w_row + j];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Fixed bilinear upsampling, channel by channel, from samples at
/// `row_src x col_src` positions to a dense `out_h x out_w` map. Uses the
/// same two-point weights as the classical pilot interpolator.
#[derive(Debug, Clone, PartialEq)]
pub struct Upsample {
    pub out_h: usize,
    pub out_w: usize,
    pub row_src: Vec<usize>,
    pub col_src: Vec<usize>,
    row_weights: Vec<(usize, usize, f64, f64)>,
    col_weights: Vec<(usize, usize, f64, f64)>,
}

impl Upsample {
    pub fn new(row_src: Vec<usize>, col_src: Vec<usize>, out_h: usize, out_w: usize) -> Result<Self> {
        if row_src.is_empty() || col_src.is_empty() {
            return Err(Error::InvalidConfig("upsample needs source positions".into()));
        }
        if row_src.windows(2).any(|w| w[0] >= w[1]) || col_src.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("upsample positions must increase".into()));
        }
        Ok(Self {
            row_weights: linear_weights(&row_src, out_h),
            col_weights: linear_weights(&col_src, out_w),
            out_h,
            out_w,
            row_src,
            col_src,
        })
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.h != self.row_src.len() || input.w != self.col_src.len() {
            return Err(Error::shape(
                format!("{}x{} map", self.row_src.len(), self.col_src.len()),
                format!("{}x{}", input.h, input.w),
            ));
        }
        Ok(Shape::new(input.c, self.out_h, self.out_w))
    }

    pub(crate) fn forward_into(&self, x: &[f64], input: Shape, y: &mut [f64]) {
        for c in 0..input.c {
            let base = c * input.h * input.w;
            for (oy, &(ra, rb, wra, wrb)) in self.row_weights.iter().enumerate() {
                for (ox, &(ca, cb, wca, wcb)) in self.col_weights.iter().enumerate() {
                    let at = |r: usize, cc: usize| x[base + r * input.w + cc];
                    // time (columns) first, then frequency (rows)
                    let top = wca * at(ra, ca) + wcb * at(ra, cb);
                    let bottom = wca * at(rb, ca) + wcb * at(rb, cb);
                    y[(c * self.out_h + oy) * self.out_w + ox] = wra * top + wrb * bottom;
                }
            }
        }
    }

    pub(crate) fn backward(&self, input: Shape, g: &[f64], gx: &mut [f64]) {
        gx.fill(0.0);
        for c in 0..input.c {
            let base = c * input.h * input.w;
            for (oy, &(ra, rb, wra, wrb)) in self.row_weights.iter().enumerate() {
                for (ox, &(ca, cb, wca, wcb)) in self.col_weights.iter().enumerate() {
                    let go = g[(c * self.out_h + oy) * self.out_w + ox];
                    gx[base + ra * input.w + ca] += go * wra * wca;
                    gx[base + ra * input.w + cb] += go * wra * wcb;
                    gx[base + rb * input.w + ca] += go * wrb * wca;
                    gx[base + rb * input.w + cb] += go * wrb * wcb;
                }
            }
        }
    }
}

/// Two convolutions with a ReLU in between and no skip connection:
/// `second(relu(first(x)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralBlock {
    pub first: ConvLayer,
    pub second: ConvLayer,
}

impl NeuralBlock {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let mid = self.first.output_shape(input)?;
        let out = self.second.output_shape(mid)?;
        if out != input {
            return Err(Error::shape(input, out));
        }
        Ok(out)
    }
}

/// Blocks applied in sequence; the stack input and every block output are
/// summed to form the stack output.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStack {
    pub blocks: Vec<NeuralBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Conv(ConvLayer),
    Upsample(Upsample),
    Stack(BlockStack),
}

impl Layer {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match self {
            Layer::Dense(d) => {
                if input.len() != d.in_dim {
                    return Err(Error::shape(d.in_dim, input.len()));
                }
                Ok(Shape::flat(d.out_dim))
            }
            Layer::Conv(c) => c.output_shape(input),
            Layer::Upsample(u) => u.output_shape(input),
            Layer::Stack(s) => {
                for b in &s.blocks {
                    b.output_shape(input)?;
                }
                Ok(input)
            }
        }
    }

    /// Learnable tensors in serialization order.
    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Dense(d) => vec![&d.weights, &d.bias],
            Layer::Conv(c) => vec![&c.kernel, &c.bias],
            Layer::Upsample(_) => vec![],
            Layer::Stack(s) => s
                .blocks
                .iter()
                .flat_map(|b| [&b.first.kernel[..], &b.first.bias, &b.second.kernel, &b.second.bias])
                .collect(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Dense(d) => vec![&mut d.weights, &mut d.bias],
            Layer::Conv(c) => vec![&mut c.kernel, &mut c.bias],
            Layer::Upsample(_) => vec![],
            Layer::Stack(s) => s
                .blocks
                .iter_mut()
                .flat_map(|b| {
                    [
                        &mut b.first.kernel[..],
                        &mut b.first.bias[..],
                        &mut b.second.kernel[..],
                        &mut b.second.bias[..],
                    ]
                })
                .collect(),
        }
    }
}
