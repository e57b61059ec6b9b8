//! Fixed-point word-length emulation and selection.
//!
//! A format `(W, I)` has `W` total bits of which `I` are integer bits
//! (sign included), leaving `F = W - I` fractional bits. Values are rounded
//! to the nearest multiple of `2^-F` (ties away from zero) and saturated to
//! `[-2^(I-1), 2^(I-1) - 2^-F]`.
//!
//! Word lengths are chosen in two passes: first the smallest `I` whose error
//! matches the single-precision reference at a generous probe width, then the
//! smallest `W` for that `I`.

use std::fmt;
use std::str::FromStr;

use crate::neural::NetModel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedFormat {
    w: u32,
    i: u32,
}

impl FixedFormat {
    pub fn new(w: u32, i: u32) -> Result<Self> {
        if !(1 <= i && i <= w && w <= 64) {
            return Err(Error::InvalidConfig(format!(
                "fixed-point format ({w},{i}) needs 1 <= I <= W <= 64"
            )));
        }
        Ok(Self { w, i })
    }

    pub fn total_bits(&self) -> u32 {
        self.w
    }

    pub fn integer_bits(&self) -> u32 {
        self.i
    }

    pub fn frac_bits(&self) -> u32 {
        self.w - self.i
    }

    pub fn step(&self) -> f64 {
        (-(self.frac_bits() as f64)).exp2()
    }

    pub fn min_value(&self) -> f64 {
        -((self.i as f64 - 1.0).exp2())
    }

    pub fn max_value(&self) -> f64 {
        (self.i as f64 - 1.0).exp2() - self.step()
    }

    /// Round and saturate; NaN passes through.
    pub fn apply(&self, x: f64) -> f64 {
        let scale = (self.frac_bits() as f64).exp2();
        let q = (x * scale).round() / scale;
        q.clamp(self.min_value(), self.max_value())
    }
}

impl fmt::Display for FixedFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.w, self.i)
    }
}

impl FromStr for FixedFormat {
    type Err = Error;

    /// Accepts `W,I` with optional parentheses.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let (w, i) = t
            .split_once(',')
            .ok_or_else(|| Error::InvalidConfig(format!("format `{s}` is not W,I")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| Error::InvalidConfig(format!("format `{s}` is not W,I")))
        };
        FixedFormat::new(parse(w)?, parse(i)?)
    }
}

/// Quantize one real value.
pub fn quantize(x: f64, f: FixedFormat) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("cannot quantize {x}")));
    }
    Ok(f.apply(x))
}

/// Arithmetic precision of an estimator datapath.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Precision {
    /// 64-bit floating point, no rounding.
    #[default]
    Double,
    /// Every quantization point rounds to IEEE single precision.
    Single,
    Fixed(FixedFormat),
}

impl Precision {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Precision::Double => x,
            Precision::Single => x as f32 as f64,
            Precision::Fixed(f) => f.apply(x),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Precision::Double)
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precision::Double => write!(f, "DPFL"),
            Precision::Single => write!(f, "SPFL"),
            Precision::Fixed(x) => write!(f, "{x}"),
        }
    }
}

/// Copy of `model` with every parameter quantized to `f` and fixed-point
/// execution enabled: layer inputs and post-activation outputs are rounded,
/// accumulation stays in full precision.
pub fn quantize_model(model: &NetModel, f: FixedFormat) -> NetModel {
    let mut out = model.clone();
    for p in out.param_slices_mut() {
        for v in p.iter_mut() {
            *v = f.apply(*v);
        }
    }
    out.precision = Precision::Fixed(f);
    out
}

fn within(mse: f64, reference: f64, tol: f64) -> bool {
    mse.is_finite() && mse <= reference * (1.0 + tol)
}

/// Smallest `I` in `1..w_probe` whose error is within `tol` of `spfl_mse`.
#[allow(non_snake_case)]
pub fn select_I(
    mut evaluate_mse: impl FnMut(FixedFormat) -> Result<f64>,
    w_probe: u32,
    spfl_mse: f64,
    tol: f64,
) -> Result<u32> {
    for i in 1..w_probe {
        let f = FixedFormat::new(w_probe, i)?;
        if within(evaluate_mse(f)?, spfl_mse, tol) {
            return Ok(i);
        }
    }
    Err(Error::NoFormat(format!(
        "no integer width below {w_probe} reaches {spfl_mse:.6e} (tol {tol})"
    )))
}

/// Smallest `W` in `I+1..=64` whose error is within `tol` of `spfl_mse`.
#[allow(non_snake_case)]
pub fn select_W(
    mut evaluate_mse: impl FnMut(FixedFormat) -> Result<f64>,
    i: u32,
    spfl_mse: f64,
    tol: f64,
) -> Result<u32> {
    for w in i + 1..=64 {
        let f = FixedFormat::new(w, i)?;
        if within(evaluate_mse(f)?, spfl_mse, tol) {
            return Ok(w);
        }
    }
    Err(Error::NoFormat(format!(
        "no word length up to 64 with I={i} reaches {spfl_mse:.6e} (tol {tol})"
    )))
}
