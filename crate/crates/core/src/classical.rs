//! Least-squares and LMMSE channel estimation.
//!
//! Both estimators start from the LS estimate `Y_p / X_p` at the pilot
//! cells. LS fills the rest of the frame by bilinear interpolation (time
//! axis first, then frequency). LMMSE instead maps each pilot symbol's 24
//! LS values to all 72 subcarriers through the Wiener matrix
//! `R_HHp (R_HpHp + I/SNR)^-1` and only interpolates along time.

use num_complex::Complex64;

use crate::channel::TrueChannel;
use crate::fxp::Precision;
use crate::grid::{ComplexGrid, PhyConfig};
use crate::linalg::{lu_invert, CMatrix};
use crate::{Error, Result};

/// LS channel estimate at the pilot cells, `n_pilot_subcarriers x n_pilot_symbols`.
pub type PilotEstimate = ComplexGrid;

/// Element-wise `Y_p / X_p`.
pub fn ls_estimate(y_p: &ComplexGrid, x_p: &ComplexGrid) -> Result<PilotEstimate> {
    ls_estimate_with(y_p, x_p, Precision::Double)
}

/// LS with every input and intermediate rounded by `prec`.
///
/// `(a + jb) / (c + jd)` is evaluated as six real multiplies, two divides and
/// three adds: `((ac + bd) + j(bc - ad)) / (c^2 + d^2)`.
pub fn ls_estimate_with(y_p: &ComplexGrid, x_p: &ComplexGrid, prec: Precision) -> Result<PilotEstimate> {
    x_p.ensure_dims(y_p.rows(), y_p.cols())?;
    let q = |v: f64| prec.apply(v);
    let mut out = ComplexGrid::zeros(y_p.rows(), y_p.cols());
    for col in 0..y_p.cols() {
        for row in 0..y_p.rows() {
            let (y, x) = (y_p[(row, col)], x_p[(row, col)]);
            let (a, b, c, d) = (q(y.re), q(y.im), q(x.re), q(x.im));
            let den = q(q(c * c) + q(d * d));
            if den == 0.0 {
                return Err(Error::ZeroPilot { row, col });
            }
            let re = q(q(q(a * c) + q(b * d)) / den);
            let im = q(q(q(b * c) - q(a * d)) / den);
            out[(row, col)] = Complex64::new(re, im);
        }
    }
    Ok(out)
}

/// Two-point linear interpolation weights from sample positions `src` to
/// every position in `0..n_out`. Positions outside `src` are extrapolated
/// from the nearest pair. Each entry is `(index_a, index_b, w_a, w_b)`.
pub fn linear_weights(src: &[usize], n_out: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..n_out)
        .map(|x| {
            if src.len() == 1 {
                return (0, 0, 1.0, 0.0);
            }
            let seg = match src.iter().position(|&p| p > x) {
                Some(0) => 0,
                Some(j) => j - 1,
                None => src.len() - 2,
            }
            .min(src.len() - 2);
            let (pa, pb) = (src[seg] as f64, src[seg + 1] as f64);
            let x = x as f64;
            (seg, seg + 1, (pb - x) / (pb - pa), (x - pa) / (pb - pa))
        })
        .collect()
}

fn lerp(a: Complex64, b: Complex64, wa: f64, wb: f64, prec: Precision) -> Complex64 {
    let q = |v: f64| prec.apply(v);
    let (wa, wb) = (q(wa), q(wb));
    Complex64::new(
        q(q(wa * a.re) + q(wb * b.re)),
        q(q(wa * a.im) + q(wb * b.im)),
    )
}

/// Interpolate each row of `grid` along columns from `src` positions to
/// `0..n_out`.
fn interpolate_columns(grid: &ComplexGrid, src: &[usize], n_out: usize, prec: Precision) -> ComplexGrid {
    let w = linear_weights(src, n_out);
    ComplexGrid::from_fn(grid.rows(), n_out, |r, c| {
        let (a, b, wa, wb) = w[c];
        lerp(grid[(r, a)], grid[(r, b)], wa, wb, prec)
    })
}

fn interpolate_rows(grid: &ComplexGrid, src: &[usize], n_out: usize, prec: Precision) -> ComplexGrid {
    let w = linear_weights(src, n_out);
    ComplexGrid::from_fn(n_out, grid.cols(), |r, c| {
        let (a, b, wa, wb) = w[r];
        lerp(grid[(a, c)], grid[(b, c)], wa, wb, prec)
    })
}

/// Bilinear interpolation of pilot estimates to the full frame.
pub fn bilinear_interpolate(p: &PilotEstimate, cfg: &PhyConfig) -> Result<ComplexGrid> {
    bilinear_interpolate_with(p, cfg, Precision::Double)
}

pub fn bilinear_interpolate_with(p: &PilotEstimate, cfg: &PhyConfig, prec: Precision) -> Result<ComplexGrid> {
    p.ensure_dims(cfg.n_pilot_subcarriers, cfg.n_pilot_symbols())?;
    let in_time = interpolate_columns(p, &cfg.pilot_symbol_indices, cfg.n_symbols, prec);
    Ok(interpolate_rows(
        &in_time,
        &cfg.pilot_subcarriers(),
        cfg.n_subcarriers,
        prec,
    ))
}

/// Second-order channel statistics at the pilot symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmseStatistics {
    /// `n_subcarriers x n_pilot_subcarriers`
    pub r_hhp: CMatrix,
    /// `n_pilot_subcarriers x n_pilot_subcarriers`
    pub r_hphp: CMatrix,
    pub n_samples: u64,
}

/// Running sums for [`LmmseStatistics`].
#[derive(Debug, Clone)]
pub struct StatisticsAccumulator {
    cfg: PhyConfig,
    sum_hhp: CMatrix,
    n: u64,
}

impl StatisticsAccumulator {
    pub fn new(cfg: &PhyConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            sum_hhp: CMatrix::zeros(cfg.n_subcarriers, cfg.n_pilot_subcarriers),
            n: 0,
        }
    }

    /// Add every pilot symbol of one frame's channel.
    pub fn add(&mut self, channel: &TrueChannel) -> Result<()> {
        let cfg = &self.cfg;
        channel.h.ensure_dims(cfg.n_subcarriers, cfg.n_symbols)?;
        let pilots = cfg.pilot_subcarriers();
        for &s in &cfg.pilot_symbol_indices {
            let h = channel.h.column(s);
            for (i, hi) in h.iter().enumerate() {
                for (j, &k) in pilots.iter().enumerate() {
                    self.sum_hhp[(i, j)] += hi * h[k].conj();
                }
            }
            self.n += 1;
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<LmmseStatistics> {
        if self.n == 0 {
            return Err(Error::EmptyInput("no channel realizations for LMMSE statistics"));
        }
        let scale = 1.0 / self.n as f64;
        let r_hhp = CMatrix::from_fn(self.sum_hhp.rows(), self.sum_hhp.cols(), |i, j| {
            self.sum_hhp[(i, j)] * scale
        });
        // R_HpHp is R_HHp restricted to the pilot rows
        let pilots = self.cfg.pilot_subcarriers();
        let r_hphp = CMatrix::from_fn(pilots.len(), pilots.len(), |i, j| r_hhp[(pilots[i], j)]);
        Ok(LmmseStatistics {
            r_hhp,
            r_hphp,
            n_samples: self.n,
        })
    }
}

/// `R_HHp = mean(h h_p^H)` and `R_HpHp = mean(h_p h_p^H)` over all pilot
/// symbols of all given channels.
pub fn learn_statistics<'a>(
    channels: impl IntoIterator<Item = &'a TrueChannel>,
    cfg: &PhyConfig,
) -> Result<LmmseStatistics> {
    let mut acc = StatisticsAccumulator::new(cfg);
    for ch in channels {
        acc.add(ch)?;
    }
    acc.finish()
}

/// Wiener matrix `R_HHp (R_HpHp + I/snr)^-1`; the regularizer is added to
/// the real part of the diagonal only.
pub fn lmmse_weights(stats: &LmmseStatistics, snr_db: f64) -> Result<CMatrix> {
    let n = stats.r_hphp.rows();
    if stats.r_hphp.cols() != n || stats.r_hhp.cols() != n {
        return Err(Error::shape(
            format!("{n} pilot columns"),
            format!("{} / {}", stats.r_hphp.cols(), stats.r_hhp.cols()),
        ));
    }
    let inv_snr = 10f64.powf(-snr_db / 10.0);
    let mut a = stats.r_hphp.clone();
    for i in 0..n {
        a[(i, i)].re += inv_snr;
    }
    stats.r_hhp.matmul(&lu_invert(&a)?)
}

/// LMMSE estimate of the whole frame from pilot LS estimates.
pub fn lmmse_estimate(
    p: &PilotEstimate,
    stats: &LmmseStatistics,
    snr_db: f64,
    cfg: &PhyConfig,
) -> Result<ComplexGrid> {
    lmmse_apply(p, &lmmse_weights(stats, snr_db)?, cfg)
}

/// Apply a precomputed Wiener matrix to every pilot symbol, then
/// interpolate along time.
pub fn lmmse_apply(p: &PilotEstimate, w: &CMatrix, cfg: &PhyConfig) -> Result<ComplexGrid> {
    p.ensure_dims(cfg.n_pilot_subcarriers, cfg.n_pilot_symbols())?;
    if w.rows() != cfg.n_subcarriers || w.cols() != cfg.n_pilot_subcarriers {
        return Err(Error::shape(
            format!("{}x{}", cfg.n_subcarriers, cfg.n_pilot_subcarriers),
            format!("{}x{}", w.rows(), w.cols()),
        ));
    }
    let mut at_pilots = ComplexGrid::zeros(cfg.n_subcarriers, cfg.n_pilot_symbols());
    for j in 0..cfg.n_pilot_symbols() {
        let col = w.mul_vec(p.column(j))?;
        at_pilots.column_mut(j).copy_from_slice(&col);
    }
    Ok(interpolate_columns(
        &at_pilots,
        &cfg.pilot_symbol_indices,
        cfg.n_symbols,
        Precision::Double,
    ))
}
