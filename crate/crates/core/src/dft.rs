//! Unitary discrete Fourier transform.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unitary DFT of a power-of-two length sequence, scaled by `1/sqrt(N)` in
/// both directions so that `dft(dft(x, false), true) == x`.
pub fn dft(x: &[Complex64], inverse: bool) -> Result<Vec<Complex64>> {
    let mut buf = x.to_vec();
    dft_in_place(&mut buf, inverse)?;
    Ok(buf)
}

pub fn dft_in_place(buf: &mut [Complex64], inverse: bool) -> Result<()> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let fft = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    });
    fft.process(buf);
    let scale = 1.0 / (n as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= scale;
    }
    Ok(())
}
