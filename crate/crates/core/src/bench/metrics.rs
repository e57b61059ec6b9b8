use crate::grid::{qpsk_demap, ComplexGrid, PhyConfig};
use crate::{Complex64, Error, Result};

/// Magnitude substituted for zero channel estimates before division.
pub const ZF_FLOOR: f64 = 1e-12;

/// `||est - truth||^2 / ||truth||^2`.
pub fn nmse(est: &ComplexGrid, truth: &ComplexGrid) -> Result<f64> {
    est.ensure_dims(truth.rows(), truth.cols())?;
    let energy = truth.norm_sqr();
    if energy == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(squared_error(est, truth) / energy)
}

/// Mean squared error per grid cell.
pub fn mse(est: &ComplexGrid, truth: &ComplexGrid) -> Result<f64> {
    est.ensure_dims(truth.rows(), truth.cols())?;
    if truth.as_slice().is_empty() {
        return Err(Error::EmptyInput("grid"));
    }
    Ok(squared_error(est, truth) / truth.as_slice().len() as f64)
}

fn squared_error(a: &ComplexGrid, b: &ComplexGrid) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm_sqr()).sum()
}

pub fn bit_errors(tx: &[u8], rx: &[u8]) -> Result<usize> {
    if tx.len() != rx.len() {
        return Err(Error::BitCount {
            expected: tx.len(),
            found: rx.len(),
        });
    }
    Ok(tx.iter().zip(rx).filter(|(a, b)| a != b).count())
}

pub fn ber(tx: &[u8], rx: &[u8]) -> Result<f64> {
    if tx.is_empty() {
        return Err(Error::EmptyInput("bit vectors"));
    }
    Ok(bit_errors(tx, rx)? as f64 / tx.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Equalized {
    /// Demapped data bits in frame order.
    pub bits: Vec<u8>,
    /// Data cells whose estimate was zero and got [`ZF_FLOOR`] instead.
    pub floored: usize,
}

/// Zero-forcing `Y / H_est` on the data cells, then QPSK decisions.
pub fn equalize_and_demap(y: &ComplexGrid, h_est: &ComplexGrid, cfg: &PhyConfig) -> Result<Equalized> {
    y.ensure_dims(cfg.n_subcarriers, cfg.n_symbols)?;
    h_est.ensure_dims(cfg.n_subcarriers, cfg.n_symbols)?;
    let mut bits = Vec::with_capacity(cfg.n_data_bits());
    let mut floored = 0;
    for (k, s) in cfg.data_cells() {
        let mut h = h_est[(k, s)];
        if !h.is_finite() {
            return Err(Error::NonFinite(format!("channel estimate at ({k}, {s})")));
        }
        if h.norm() == 0.0 {
            h = Complex64::new(ZF_FLOOR, 0.0);
            floored += 1;
        }
        let (b0, b1) = qpsk_demap(y[(k, s)] / h);
        bits.push(b0);
        bits.push(b1);
    }
    Ok(Equalized { bits, floored })
}
