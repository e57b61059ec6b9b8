//! Binary model files.
//!
//! Layout, all integers `u32` and all reals `f64`, little-endian:
//! magic `CEMODEL1`, layer count, input shape `(c, h, w)`, precision
//! `(tag, W, I)` with tag 0 = double, 1 = single, 2 = fixed, then for each
//! layer a descriptor followed by its parameters in row-major order.
//!
//! | kind | descriptor                                                      |
//! |------|-----------------------------------------------------------------|
//! | 1    | dense: in, out, relu                                            |
//! | 2    | conv: in_ch, filters, kh, kw, stride, padding (0 valid), relu   |
//! | 3    | upsample: out_h, out_w, n_rows, rows.., n_cols, cols..          |
//! | 4    | block stack: n_blocks, then two conv descriptors per block      |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::layers::{BlockStack, ConvLayer, DenseLayer, Layer, NeuralBlock, Padding, Shape, Upsample};
use super::model::NetModel;
use crate::fxp::{FixedFormat, Precision};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"CEMODEL1";
/// Guards allocations against corrupt headers.
const MAX_DIM: u32 = 1 << 24;

fn put(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_conv(w: &mut impl Write, c: &ConvLayer) -> Result<()> {
    for v in [c.in_channels, c.n_filters, c.kernel_h, c.kernel_w, c.stride] {
        put(w, v)?;
    }
    put(w, (c.padding == Padding::Same) as usize)?;
    put(w, c.relu as usize)
}

pub fn write_model(w: &mut impl Write, model: &NetModel) -> Result<()> {
    w.write_all(MAGIC)?;
    put(w, model.layers.len())?;
    let s = model.input_shape;
    for v in [s.c, s.h, s.w] {
        put(w, v)?;
    }
    let (tag, fw, fi) = match model.precision {
        Precision::Double => (0, 0, 0),
        Precision::Single => (1, 0, 0),
        Precision::Fixed(f) => (2, f.total_bits() as usize, f.integer_bits() as usize),
    };
    for v in [tag, fw, fi] {
        put(w, v)?;
    }
    for layer in &model.layers {
        match layer {
            Layer::Dense(d) => {
                put(w, 1)?;
                for v in [d.in_dim, d.out_dim, d.relu as usize] {
                    put(w, v)?;
                }
            }
            Layer::Conv(c) => {
                put(w, 2)?;
                put_conv(w, c)?;
            }
            Layer::Upsample(u) => {
                put(w, 3)?;
                put(w, u.out_h)?;
                put(w, u.out_w)?;
                for src in [&u.row_src, &u.col_src] {
                    put(w, src.len())?;
                    for &v in src.iter() {
                        put(w, v)?;
                    }
                }
            }
            Layer::Stack(s) => {
                put(w, 4)?;
                put(w, s.blocks.len())?;
                for b in &s.blocks {
                    put_conv(w, &b.first)?;
                    put_conv(w, &b.second)?;
                }
            }
        }
        for p in layer.params() {
            for v in p {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn get(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_dim(r: &mut impl Read) -> Result<usize> {
    let v = get(r)?;
    if v > MAX_DIM {
        return Err(Error::Format(format!("implausible dimension {v}")));
    }
    Ok(v as usize)
}

fn get_flag(r: &mut impl Read) -> Result<bool> {
    match get(r)? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(Error::Format(format!("flag value {v} is not 0 or 1"))),
    }
}

fn get_conv(r: &mut impl Read) -> Result<ConvLayer> {
    let (in_channels, n_filters) = (get_dim(r)?, get_dim(r)?);
    let (kernel_h, kernel_w, stride) = (get_dim(r)?, get_dim(r)?, get_dim(r)?);
    let padding = if get_flag(r)? { Padding::Same } else { Padding::Valid };
    let relu = get_flag(r)?;
    let n = n_filters
        .checked_mul(in_channels)
        .and_then(|v| v.checked_mul(kernel_h))
        .and_then(|v| v.checked_mul(kernel_w))
        .filter(|&v| v <= MAX_DIM as usize)
        .ok_or_else(|| Error::Format("convolution kernel too large".into()))?;
    Ok(ConvLayer {
        in_channels,
        n_filters,
        kernel_h,
        kernel_w,
        stride,
        padding,
        kernel: vec![0.0; n],
        bias: vec![0.0; n_filters],
        relu,
    })
}

fn get_positions(r: &mut impl Read) -> Result<Vec<usize>> {
    let n = get_dim(r)?;
    (0..n).map(|_| get_dim(r)).collect()
}

pub fn read_model(r: &mut impl Read) -> Result<NetModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a CEMODEL1 model file".into()));
    }
    let n_layers = get_dim(r)?;
    let input_shape = Shape::new(get_dim(r)?, get_dim(r)?, get_dim(r)?);
    let (tag, fw, fi) = (get(r)?, get(r)?, get(r)?);
    let precision = match tag {
        0 => Precision::Double,
        1 => Precision::Single,
        2 => Precision::Fixed(FixedFormat::new(fw, fi)?),
        t => return Err(Error::Format(format!("unknown precision tag {t}"))),
    };
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let mut layer = match get(r)? {
            1 => {
                let (i, o) = (get_dim(r)?, get_dim(r)?);
                if i.saturating_mul(o) > MAX_DIM as usize {
                    return Err(Error::Format("dense layer too large".into()));
                }
                Layer::Dense(DenseLayer::zeros(i, o, get_flag(r)?))
            }
            2 => Layer::Conv(get_conv(r)?),
            3 => {
                let (out_h, out_w) = (get_dim(r)?, get_dim(r)?);
                let rows = get_positions(r)?;
                let cols = get_positions(r)?;
                Layer::Upsample(Upsample::new(rows, cols, out_h, out_w)?)
            }
            4 => {
                let n = get_dim(r)?;
                let blocks = (0..n)
                    .map(|_| {
                        Ok(NeuralBlock {
                            first: get_conv(r)?,
                            second: get_conv(r)?,
                        })
                    })
                    .collect::<Result<_>>()?;
                Layer::Stack(BlockStack { blocks })
            }
            k => return Err(Error::Format(format!("unknown layer kind {k}"))),
        };
        for p in layer.params_mut() {
            for v in p.iter_mut() {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                *v = f64::from_le_bytes(b);
                if !v.is_finite() {
                    return Err(Error::NonFinite("model parameter".into()));
                }
            }
        }
        layers.push(layer);
    }
    let mut model = NetModel::new(input_shape, layers)?;
    model.precision = precision;
    Ok(model)
}

pub fn write_model_file(path: impl AsRef<Path>, model: &NetModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn read_model_file(path: impl AsRef<Path>) -> Result<NetModel> {
    read_model(&mut BufReader::new(File::open(path)?))
}
