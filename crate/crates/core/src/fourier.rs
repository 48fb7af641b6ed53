//! FFT plumbing: cached plans, spectral taps, resampling between grids and
//! reflection padding.

use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Thread-safe cache of FFT plans. Transforms are unnormalized in both
/// directions.
pub struct FftCache {
    planner: Mutex<FftPlanner<f64>>,
}

impl Default for FftCache {
    fn default() -> Self {
        Self::new()
    }
}

impl FftCache {
    pub fn new() -> Self {
        Self { planner: Mutex::new(FftPlanner::new()) }
    }

    pub fn plan(&self, len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
        let mut planner = self.planner.lock().expect("fft planner poisoned");
        if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        if buf.len() > 1 {
            self.plan(buf.len(), false).process(buf);
        }
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        if buf.len() > 1 {
            self.plan(buf.len(), true).process(buf);
        }
    }

    /// Forward transform of a real sequence.
    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }
}

/// Nonzero bins of a filter spectrum on a grid of `grid` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Taps {
    pub grid: usize,
    pub entries: Vec<(usize, Complex64)>,
}

impl Taps {
    pub fn from_dense(dense: &[Complex64]) -> Self {
        let entries = dense
            .iter()
            .enumerate()
            .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
            .map(|(k, &c)| (k, c))
            .collect();
        Taps { grid: dense.len(), entries }
    }

    pub fn from_real(dense: &[f64]) -> Self {
        let entries = dense
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(k, &v)| (k, Complex64::new(v, 0.0)))
            .collect();
        Taps { grid: dense.len(), entries }
    }

    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid];
        for &(k, c) in &self.entries {
            out[k] = c;
        }
        out
    }

    /// Restricts the spectrum to a coarser grid of `len` bins (`len` divides
    /// `grid`), keeping the bins whose signed frequency lies in
    /// `(-len/2, len/2]`. Coarse bin `j` and fine bin `j` share a frequency.
    pub fn restrict(&self, len: usize) -> Taps {
        assert!(len > 0 && self.grid.is_multiple_of(len), "restrict: {len} does not divide {}", self.grid);
        if len == self.grid {
            return self.clone();
        }
        let half = (len / 2) as i64;
        let grid = self.grid as i64;
        let mut entries: Vec<(usize, Complex64)> = self
            .entries
            .iter()
            .filter_map(|&(k, c)| {
                let k = k as i64;
                let signed = if k <= grid / 2 { k } else { k - grid };
                let keep = if len == 1 { signed == 0 } else { signed > -half && signed <= half };
                keep.then(|| (signed.rem_euclid(len as i64) as usize, c))
            })
            .collect();
        entries.sort_by_key(|e| e.0);
        Taps { grid: len, entries }
    }
}

/// Where bin `k` of a `from`-point spectrum lands on a `to`-point grid:
/// folding (aliasing) when decimating, zero-padding when interpolating.
#[inline]
pub fn map_bin(k: usize, from: usize, to: usize) -> usize {
    if to <= from {
        k % to
    } else if k <= from / 2 {
        k
    } else {
        to - (from - k)
    }
}

/// `out = R(diag(taps) * input)` where `R` resamples from `taps.grid` bins to
/// `out.len()` bins. `out` is overwritten.
pub fn filter_resample(input: &[Complex64], taps: &Taps, out: &mut [Complex64]) {
    debug_assert_eq!(input.len(), taps.grid);
    out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    let (from, to) = (taps.grid, out.len());
    for &(k, t) in &taps.entries {
        out[map_bin(k, from, to)] += input[k] * t;
    }
}

/// Adjoint of [`filter_resample`]: `acc += diag(conj(taps)) * R^T(grad)`,
/// scaled by `scale`.
pub fn filter_resample_adjoint(grad: &[Complex64], taps: &Taps, scale: f64, acc: &mut [Complex64]) {
    debug_assert_eq!(acc.len(), taps.grid);
    let (from, to) = (taps.grid, grad.len());
    for &(k, t) in &taps.entries {
        acc[k] += t.conj() * grad[map_bin(k, from, to)] * scale;
    }
}

/// Circular convolution of `x` with the filter whose DFT is `spectrum`,
/// keeping every `decimate`-th output sample. `x` shorter than the grid is
/// zero-extended.
pub fn fft_convolve(x: &[Complex64], spectrum: &[Complex64], decimate: usize) -> Result<Vec<Complex64>> {
    let n = spectrum.len();
    if n == 0 || x.len() > n {
        return Err(Error::SizeMismatch(format!("signal of {} samples on a {}-bin grid", x.len(), n)));
    }
    if decimate == 0 || !n.is_multiple_of(decimate) {
        return Err(Error::SizeMismatch(format!("decimation {decimate} does not divide {n}")));
    }
    let fft = FftCache::new();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..x.len()].copy_from_slice(x);
    fft.forward(&mut buf);
    for (b, s) in buf.iter_mut().zip(spectrum) {
        *b *= s;
    }
    fft.inverse(&mut buf);
    let scale = 1.0 / n as f64;
    Ok(buf.iter().step_by(decimate).map(|v| v * scale).collect())
}

pub fn next_power_of_two(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Index map of the symmetric (half-sample) extension of `n` samples onto
/// `padded` positions: the signal, then its mirror image from the end, then
/// the mirror image of its start wrapping around.
pub fn reflect_pad_map(n: usize, padded: usize) -> Vec<usize> {
    assert!(n >= 1 && padded >= n);
    let period = 2 * n as i64;
    let fold = |i: i64| {
        let m = i.rem_euclid(period);
        if m < n as i64 {
            m as usize
        } else {
            (period - 1 - m) as usize
        }
    };
    let tail = padded - n;
    let first_half = tail.div_ceil(2);
    (0..padded)
        .map(|j| {
            if j < n {
                j
            } else if j - n < first_half {
                fold(j as i64)
            } else {
                fold(j as i64 - padded as i64)
            }
        })
        .collect()
}
