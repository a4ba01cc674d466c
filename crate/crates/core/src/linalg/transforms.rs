use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Unnormalized in-place Walsh-Hadamard butterfly (Sylvester ordering).
pub fn fwht_in_place(v: &mut [f64]) -> Result<()> {
    let n = v.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { len: n });
    }
    let mut h = 1;
    while h < n {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    Ok(())
}

/// Orthonormal Walsh-Hadamard transform, `H_ij = n^{-1/2} (-1)^{popcount(i & j)}`.
///
/// ```
/// use sketchreg::linalg::fwht_normalized;
/// assert_eq!(fwht_normalized(&[1.0, 1.0, 1.0, 1.0]).unwrap(), vec![2.0, 0.0, 0.0, 0.0]);
/// ```
pub fn fwht_normalized(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    fwht_in_place(&mut out)?;
    let s = 1.0 / (v.len() as f64).sqrt();
    out.iter_mut().for_each(|x| *x *= s);
    Ok(out)
}

/// Real part of the unitary DFT with a cached FFT plan.
#[derive(Clone)]
pub struct RealDft {
    fft: Arc<dyn Fft<f64>>,
    len: usize,
    scale: f64,
}

impl RealDft {
    pub fn new(len: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(len);
        RealDft { fft, len, scale: 1.0 / (len as f64).sqrt() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Writes `Re(F v)` into `out`, using `buf` as complex workspace.
    pub fn apply_into(&self, v: &[f64], buf: &mut Vec<Complex<f64>>, out: &mut [f64]) {
        assert_eq!(v.len(), self.len, "dft length mismatch");
        buf.clear();
        buf.extend(v.iter().map(|&x| Complex::new(x, 0.0)));
        self.fft.process(buf);
        for (o, c) in out.iter_mut().zip(buf.iter()) {
            *o = c.re * self.scale;
        }
    }
}

/// Real part of the unitary DFT, `Re(F v)` with `F_kj = n^{-1/2} exp(-2πi kj/n)`.
///
/// ```
/// use sketchreg::linalg::real_dft;
/// let out = real_dft(&[2.0, 2.0, 2.0, 2.0]).unwrap();
/// assert!((out[0] - 4.0).abs() < 1e-12 && out[1].abs() < 1e-12);
/// ```
pub fn real_dft(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let dft = RealDft::new(v.len());
    let mut out = vec![0.0; v.len()];
    dft.apply_into(v, &mut Vec::with_capacity(v.len()), &mut out);
    Ok(out)
}
