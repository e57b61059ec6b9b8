//! OFDM frame layout, QPSK mapping and CP-OFDM (de)modulation.
//!
//! A frame is a subcarrier x symbol grid. Pilots sit on every
//! `pilot_spacing`-th subcarrier of the pilot symbols, the remaining cells of
//! pilot symbols are nulls, and every other cell carries one QPSK symbol.
//! Used subcarriers map to FFT bins `-N/2..=-1` and `1..=N/2` with DC unused.

use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::dft::dft_in_place;
use crate::{Error, Result};

/// Dense complex matrix stored column-major: the row (subcarrier) index runs
/// fastest, then the column (symbol) index.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: Complex64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Wrap column-major data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn column(&self, c: usize) -> &[Complex64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn column_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Squared Frobenius norm.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn ensure_dims(&self, rows: usize, cols: usize) -> Result<()> {
        if self.dims() != (rows, cols) {
            return Err(Error::shape(
                format!("{rows}x{cols}"),
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for ComplexGrid {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[c * self.rows + r]
    }
}

impl IndexMut<(usize, usize)> for ComplexGrid {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[c * self.rows + r]
    }
}

/// Physical-layer numerology of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PhyConfig {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub pilot_symbol_indices: Vec<usize>,
    pub n_pilot_subcarriers: usize,
    pub pilot_spacing: usize,
    pub fft_size: usize,
    pub cp_length: usize,
    pub subcarrier_spacing: f64,
    pub carrier_frequency: f64,
    pub pilot_seed: u64,
}

impl Default for PhyConfig {
    fn default() -> Self {
        Self {
            n_subcarriers: 72,
            n_symbols: 14,
            pilot_symbol_indices: vec![0, 6],
            n_pilot_subcarriers: 24,
            pilot_spacing: 3,
            fft_size: 128,
            cp_length: 16,
            subcarrier_spacing: 15_000.0,
            carrier_frequency: 2.1e9,
            pilot_seed: 0x5D,
        }
    }
}

impl PhyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_subcarriers == 0 || self.n_symbols == 0 {
            return bad("empty frame".into());
        }
        if self.n_pilot_subcarriers * self.pilot_spacing != self.n_subcarriers {
            return bad(format!(
                "{} pilot subcarriers x spacing {} != {} subcarriers",
                self.n_pilot_subcarriers, self.pilot_spacing, self.n_subcarriers
            ));
        }
        if self.pilot_symbol_indices.is_empty() {
            return bad("no pilot symbols".into());
        }
        if self.pilot_symbol_indices.windows(2).any(|w| w[0] >= w[1]) {
            return bad("pilot symbol indices must be strictly increasing".into());
        }
        if self.pilot_symbol_indices.iter().any(|&s| s >= self.n_symbols) {
            return bad("pilot symbol index out of range".into());
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < self.n_subcarriers + 1 {
            return bad(format!(
                "fft size {} must be a power of two >= {}",
                self.fft_size,
                self.n_subcarriers + 1
            ));
        }
        if self.cp_length > self.fft_size {
            return bad("cyclic prefix longer than the FFT".into());
        }
        if self.subcarrier_spacing <= 0.0 || !self.subcarrier_spacing.is_finite() {
            return bad("subcarrier spacing must be positive".into());
        }
        Ok(())
    }

    pub fn n_pilot_symbols(&self) -> usize {
        self.pilot_symbol_indices.len()
    }

    /// Subcarrier indices carrying pilots.
    pub fn pilot_subcarriers(&self) -> Vec<usize> {
        (0..self.n_pilot_subcarriers).map(|p| p * self.pilot_spacing).collect()
    }

    pub fn is_pilot_symbol(&self, s: usize) -> bool {
        self.pilot_symbol_indices.contains(&s)
    }

    pub fn n_data_cells(&self) -> usize {
        self.n_subcarriers * (self.n_symbols - self.n_pilot_symbols())
    }

    pub fn n_data_bits(&self) -> usize {
        2 * self.n_data_cells()
    }

    pub fn sample_rate(&self) -> f64 {
        self.fft_size as f64 * self.subcarrier_spacing
    }

    pub fn samples_per_symbol(&self) -> usize {
        self.fft_size + self.cp_length
    }

    /// Duration of one OFDM symbol including its cyclic prefix.
    pub fn symbol_period(&self) -> f64 {
        self.samples_per_symbol() as f64 / self.sample_rate()
    }

    /// Signed FFT bin of subcarrier `k`: the lower half maps to negative
    /// bins, the upper half to positive bins, skipping DC.
    pub fn bin(&self, k: usize) -> i64 {
        let half = (self.n_subcarriers / 2) as i64;
        let k = k as i64;
        if k < half {
            k - half
        } else {
            k - half + 1
        }
    }

    /// Position of subcarrier `k` in the FFT buffer.
    pub fn fft_index(&self, k: usize) -> usize {
        self.bin(k).rem_euclid(self.fft_size as i64) as usize
    }

    /// Data cells in bit-mapping order: subcarriers first, then non-pilot
    /// symbols in time order.
    pub fn data_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_symbols)
            .filter(|s| !self.is_pilot_symbol(*s))
            .flat_map(move |s| (0..self.n_subcarriers).map(move |k| (k, s)))
    }
}

/// Gray-mapped unit-energy QPSK: the first bit picks the sign of the real
/// part, the second bit the sign of the imaginary part.
pub fn qpsk_map(b0: u8, b1: u8) -> Complex64 {
    let re = if b0 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    let im = if b1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Complex64::new(re, im)
}

/// Hard-decision inverse of [`qpsk_map`]. A zero component decides bit 0.
pub fn qpsk_demap(symbol: Complex64) -> (u8, u8) {
    ((symbol.re < 0.0) as u8, (symbol.im < 0.0) as u8)
}

const LCG_MUL: u64 = 6364136223846793005;
const LCG_INC: u64 = 1442695040888963407;

/// Known pilot values as an `n_pilot_subcarriers x n_pilot_symbols` grid.
///
/// A 64-bit LCG seeded with `pilot_seed` is stepped once per pilot cell
/// (column-major order); its top two bits are the QPSK label.
pub fn pilot_values(cfg: &PhyConfig) -> ComplexGrid {
    let mut state = cfg.pilot_seed;
    ComplexGrid::from_fn(cfg.n_pilot_subcarriers, cfg.n_pilot_symbols(), |_, _| {
        state = state.wrapping_mul(LCG_MUL).wrapping_add(LCG_INC);
        let label = (state >> 62) as u8;
        qpsk_map(label >> 1, label & 1)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Data,
    Pilot,
    Null,
}

/// One frame in the frequency domain together with the role of each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    pub cells: ComplexGrid,
    kinds: Vec<CellKind>,
}

impl ResourceGrid {
    pub fn kind(&self, k: usize, s: usize) -> CellKind {
        self.kinds[s * self.cells.rows() + k]
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.kinds.iter().filter(|&&c| c == kind).count()
    }
}

pub fn cell_kinds(cfg: &PhyConfig) -> Vec<CellKind> {
    let mut kinds = vec![CellKind::Data; cfg.n_subcarriers * cfg.n_symbols];
    for &s in &cfg.pilot_symbol_indices {
        for k in 0..cfg.n_subcarriers {
            kinds[s * cfg.n_subcarriers + k] = if k % cfg.pilot_spacing == 0 {
                CellKind::Pilot
            } else {
                CellKind::Null
            };
        }
    }
    kinds
}

/// Assemble a frame from `2 * n_data_cells` bits (each 0 or 1).
pub fn build_frame(data_bits: &[u8], cfg: &PhyConfig) -> Result<ResourceGrid> {
    cfg.validate()?;
    if data_bits.len() != cfg.n_data_bits() {
        return Err(Error::BitCount {
            expected: cfg.n_data_bits(),
            found: data_bits.len(),
        });
    }
    let mut cells = ComplexGrid::zeros(cfg.n_subcarriers, cfg.n_symbols);
    for ((k, s), pair) in cfg.data_cells().zip(data_bits.chunks_exact(2)) {
        cells[(k, s)] = qpsk_map(pair[0], pair[1]);
    }
    let pilots = pilot_values(cfg);
    for (j, &s) in cfg.pilot_symbol_indices.iter().enumerate() {
        for (p, k) in cfg.pilot_subcarriers().into_iter().enumerate() {
            cells[(k, s)] = pilots[(p, j)];
        }
    }
    Ok(ResourceGrid {
        cells,
        kinds: cell_kinds(cfg),
    })
}

/// Time-domain baseband samples of one frame, cyclic prefixes included.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
}

pub fn ofdm_modulate(grid: &ComplexGrid, cfg: &PhyConfig) -> Result<TimeSignal> {
    cfg.validate()?;
    grid.ensure_dims(cfg.n_subcarriers, cfg.n_symbols)?;
    let n = cfg.fft_size;
    let mut samples = Vec::with_capacity(cfg.n_symbols * cfg.samples_per_symbol());
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for s in 0..cfg.n_symbols {
        buf.fill(Complex64::new(0.0, 0.0));
        for k in 0..cfg.n_subcarriers {
            buf[cfg.fft_index(k)] = grid[(k, s)];
        }
        dft_in_place(&mut buf, true)?;
        samples.extend_from_slice(&buf[n - cfg.cp_length..]);
        samples.extend_from_slice(&buf);
    }
    Ok(TimeSignal {
        samples,
        sample_rate: cfg.sample_rate(),
    })
}

pub fn ofdm_demodulate(sig: &TimeSignal, cfg: &PhyConfig) -> Result<ComplexGrid> {
    cfg.validate()?;
    let sym_len = cfg.samples_per_symbol();
    if sig.samples.len() != cfg.n_symbols * sym_len {
        return Err(Error::shape(cfg.n_symbols * sym_len, sig.samples.len()));
    }
    let mut grid = ComplexGrid::zeros(cfg.n_subcarriers, cfg.n_symbols);
    for (s, chunk) in sig.samples.chunks_exact(sym_len).enumerate() {
        let mut body = chunk[cfg.cp_length..].to_vec();
        dft_in_place(&mut body, false)?;
        for k in 0..cfg.n_subcarriers {
            grid[(k, s)] = body[cfg.fft_index(k)];
        }
    }
    Ok(grid)
}
