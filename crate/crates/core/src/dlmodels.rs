//! LSiDNN and iResNet estimators: builders, training and inference.
//!
//! Both map the 24x2 LS pilot estimates to the full 72x14 channel grid.
//! LSiDNN sees a flat 96-vector (real parts then imaginary parts, column
//! major); iResNet sees a `2 x 24 x 2` tensor (real plane, imaginary plane).

use rand::seq::SliceRandom;

use crate::bench::dataset::Dataset;
use crate::classical::PilotEstimate;
use crate::grid::{ComplexGrid, PhyConfig};
use crate::neural::{
    AdamState, BlockStack, ConvLayer, DenseLayer, Layer, NetModel, NeuralBlock, Padding, Shape, Upsample,
};
use crate::{seeds, Complex64, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LsidnnConfig {
    pub hidden_sizes: Vec<usize>,
    pub input_size: usize,
    pub output_size: usize,
}

impl Default for LsidnnConfig {
    fn default() -> Self {
        Self::for_phy(&PhyConfig::default())
    }
}

impl LsidnnConfig {
    /// One hidden layer of half the input width.
    pub fn for_phy(phy: &PhyConfig) -> Self {
        let input_size = 2 * phy.n_pilot_subcarriers * phy.n_pilot_symbols();
        Self {
            hidden_sizes: vec![input_size / 2],
            input_size,
            output_size: 2 * phy.n_subcarriers * phy.n_symbols,
        }
    }

    pub fn with_hidden(mut self, hidden: &[usize]) -> Self {
        self.hidden_sizes = hidden.to_vec();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IresnetConfig {
    pub n_neural_blocks: usize,
    pub channels: usize,
    pub kernel: usize,
}

impl Default for IresnetConfig {
    fn default() -> Self {
        Self {
            n_neural_blocks: 4,
            channels: 11,
            kernel: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            epochs: 250,
            batch_size: 256,
            learning_rate: 0.01,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction {} must lie in (0, 1]",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Per-epoch losses of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Validation loss of the model as passed in.
    pub initial_val_loss: f64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub n_train: usize,
    pub n_val: usize,
}

/// Column-major real parts followed by column-major imaginary parts.
pub fn flatten_grid(g: &ComplexGrid) -> Vec<f64> {
    let mut out: Vec<f64> = g.as_slice().iter().map(|v| v.re).collect();
    out.extend(g.as_slice().iter().map(|v| v.im));
    out
}

pub fn unflatten_grid(y: &[f64], rows: usize, cols: usize) -> Result<ComplexGrid> {
    let n = rows * cols;
    if y.len() != 2 * n {
        return Err(Error::shape(2 * n, y.len()));
    }
    ComplexGrid::from_vec(
        rows,
        cols,
        y[..n].iter().zip(&y[n..]).map(|(&re, &im)| Complex64::new(re, im)).collect(),
    )
}

pub fn flatten_input(p: &PilotEstimate) -> Vec<f64> {
    flatten_grid(p)
}

pub fn unflatten_output(y: &[f64], phy: &PhyConfig) -> Result<ComplexGrid> {
    unflatten_grid(y, phy.n_subcarriers, phy.n_symbols)
}

/// `[re plane, im plane]`, each plane `rows x cols` row-major.
pub fn grid_to_tensor(g: &ComplexGrid) -> Vec<f64> {
    let (rows, cols) = g.dims();
    let mut out = vec![0.0; 2 * rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = g[(r, c)].re;
            out[(rows + r) * cols + c] = g[(r, c)].im;
        }
    }
    out
}

pub fn tensor_to_grid(y: &[f64], rows: usize, cols: usize) -> Result<ComplexGrid> {
    if y.len() != 2 * rows * cols {
        return Err(Error::shape(2 * rows * cols, y.len()));
    }
    Ok(ComplexGrid::from_fn(rows, cols, |r, c| {
        Complex64::new(y[r * cols + c], y[(rows + r) * cols + c])
    }))
}

fn is_tensor_model(model: &NetModel) -> bool {
    model.input_shape.h > 1 || model.input_shape.w > 1
}

/// Network input for a pilot estimate, following the model's layout.
pub fn encode_pilots(model: &NetModel, p: &PilotEstimate) -> Vec<f64> {
    if is_tensor_model(model) {
        grid_to_tensor(p)
    } else {
        flatten_input(p)
    }
}

/// Training target for a channel grid, following the model's layout.
pub fn encode_channel(model: &NetModel, h: &ComplexGrid) -> Vec<f64> {
    if is_tensor_model(model) {
        grid_to_tensor(h)
    } else {
        flatten_grid(h)
    }
}

pub fn decode_output(model: &NetModel, y: &[f64], phy: &PhyConfig) -> Result<ComplexGrid> {
    if is_tensor_model(model) {
        tensor_to_grid(y, phy.n_subcarriers, phy.n_symbols)
    } else {
        unflatten_output(y, phy)
    }
}

/// Dense stack `input -> hidden.. (ReLU) -> output (linear)`.
pub fn build_lsidnn(cfg: &LsidnnConfig, seed: u64) -> Result<NetModel> {
    if cfg.hidden_sizes.contains(&0) || cfg.input_size == 0 || cfg.output_size == 0 {
        return Err(Error::InvalidConfig("layer sizes must be positive".into()));
    }
    let mut rng = seeds::rng(seed);
    let mut dims = vec![cfg.input_size];
    dims.extend(&cfg.hidden_sizes);
    dims.push(cfg.output_size);
    let last = dims.len() - 2;
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| Layer::Dense(DenseLayer::glorot(w[0], w[1], i < last, &mut rng)))
        .collect();
    NetModel::new(Shape::flat(cfg.input_size), layers)
}

/// Input conv (2 -> C, ReLU), neural blocks whose input and outputs are
/// summed, fixed bilinear upsampling to the full grid, output conv (C -> 2).
pub fn build_iresnet(cfg: &IresnetConfig, phy: &PhyConfig, seed: u64) -> Result<NetModel> {
    phy.validate()?;
    if cfg.channels == 0 || cfg.kernel.is_multiple_of(2) {
        return Err(Error::InvalidConfig("iResNet needs C >= 1 and an odd kernel".into()));
    }
    let (c, k) = (cfg.channels, cfg.kernel);
    let mut rng = seeds::rng(seed);
    let input = ConvLayer::glorot(2, c, k, Padding::Same, true, &mut rng);
    let blocks = (0..cfg.n_neural_blocks)
        .map(|_| NeuralBlock {
            first: ConvLayer::glorot(c, c, k, Padding::Same, true, &mut rng),
            second: ConvLayer::glorot(c, c, k, Padding::Same, false, &mut rng),
        })
        .collect();
    let upsample = Upsample::new(
        phy.pilot_subcarriers(),
        phy.pilot_symbol_indices.clone(),
        phy.n_subcarriers,
        phy.n_symbols,
    )?;
    let output = ConvLayer::glorot(c, 2, k, Padding::Same, false, &mut rng);
    NetModel::new(
        Shape::new(2, phy.n_pilot_subcarriers, phy.n_pilot_symbols()),
        vec![
            Layer::Conv(input),
            Layer::Stack(BlockStack { blocks }),
            Layer::Upsample(upsample),
            Layer::Conv(output),
        ],
    )
}

/// Mini-batch ADAM on a shuffled split of `dataset`. The final partial batch
/// of each epoch is kept. With a single record, that record is used for both
/// training and validation.
pub fn train(model: &NetModel, dataset: &Dataset, spec: &TrainSpec) -> Result<(NetModel, TrainReport)> {
    spec.validate()?;
    if dataset.records.is_empty() {
        return Err(Error::EmptyInput("training dataset"));
    }
    let inputs: Vec<Vec<f64>> = dataset.records.iter().map(|r| encode_pilots(model, &r.pilot_ls)).collect();
    let targets: Vec<Vec<f64>> = dataset.records.iter().map(|r| encode_channel(model, &r.true_h)).collect();

    let mut rng = seeds::rng(spec.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(&mut rng);
    let n = order.len();
    let n_train = ((n as f64 * spec.train_fraction).round() as usize).clamp(1, n);
    let mut train_idx = order[..n_train].to_vec();
    let val_idx = if n_train < n { order[n_train..].to_vec() } else { train_idx.clone() };

    let val_x: Vec<&[f64]> = val_idx.iter().map(|&i| &inputs[i][..]).collect();
    let val_t: Vec<&[f64]> = val_idx.iter().map(|&i| &targets[i][..]).collect();

    let mut model = model.clone();
    let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let mut adam = AdamState::new(&sizes, spec.learning_rate);
    let initial_val_loss = model.mean_loss(&val_x, &val_t)?;
    let mut report = TrainReport {
        initial_val_loss,
        train_loss: Vec::with_capacity(spec.epochs),
        val_loss: Vec::with_capacity(spec.epochs),
        n_train,
        n_val: val_idx.len(),
    };
    for epoch in 0..spec.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(spec.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| &inputs[i][..]).collect();
            let ts: Vec<&[f64]> = batch.iter().map(|&i| &targets[i][..]).collect();
            let (loss, grads) = model.batch_gradients(&xs, &ts)?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("training diverged in epoch {epoch}")));
            }
            epoch_loss += loss * batch.len() as f64;
            adam.step(model.param_slices_mut(), &grads)?;
        }
        let val = model.mean_loss(&val_x, &val_t)?;
        if !val.is_finite() {
            return Err(Error::NonFinite(format!("validation loss in epoch {epoch}")));
        }
        report.train_loss.push(epoch_loss / n_train as f64);
        report.val_loss.push(val);
    }
    Ok((model, report))
}

fn dl_estimate(model: &NetModel, p: &PilotEstimate, phy: &PhyConfig) -> Result<ComplexGrid> {
    p.ensure_dims(phy.n_pilot_subcarriers, phy.n_pilot_symbols())?;
    let y = model.forward(&encode_pilots(model, p))?;
    decode_output(model, &y, phy)
}

pub fn lsidnn_estimate(model: &NetModel, p: &PilotEstimate, phy: &PhyConfig) -> Result<ComplexGrid> {
    dl_estimate(model, p, phy)
}

pub fn iresnet_estimate(model: &NetModel, p: &PilotEstimate, phy: &PhyConfig) -> Result<ComplexGrid> {
    dl_estimate(model, p, phy)
}
