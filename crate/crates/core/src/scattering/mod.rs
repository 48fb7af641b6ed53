//! Forward joint time-frequency scattering and its reverse-mode gradient.

mod engine;

use std::collections::BTreeMap;

pub use engine::{Cotangent, ForwardOptions, Scattering, Tape};

use crate::error::{Error, Result};
use crate::filterbank::BankConfig;
use crate::pathgrammar::Path;

pub use crate::fourier::fft_convolve;

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Signal> {
        if samples.is_empty() {
            return Err(Error::Config("signal is empty".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("sample {i} is not finite")));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::Config(format!("sample rate {sample_rate} must be positive")));
        }
        Ok(Signal { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn rms(&self) -> f64 {
        (self.energy() / self.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformConfig {
    pub banks: BankConfig,
    /// Width of the averaging window, in samples.
    pub averaging_scale: usize,
    /// Sampling rate kept after each modulus, in multiples of the filter's
    /// half-maximum bandwidth.
    pub oversampling: f64,
    /// Decimate after each modulus; off computes everything at full rate.
    pub pyramid: bool,
    pub workers: usize,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig { banks: BankConfig::default(), averaging_scale: 8192, oversampling: 4.0, pyramid: true, workers: 1 }
    }
}

/// Samples of one path at `hop`-sample spacing, covering the signal.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSeries {
    pub hop: usize,
    pub values: Vec<f64>,
}

impl PathSeries {
    /// Time-integrated squared values, compensated for decimation.
    pub fn energy(&self) -> f64 {
        self.hop as f64 * self.values.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Output of the forward transform. `layers[0]` holds the input itself
/// under the empty path; `layers[1]` and `layers[2]` hold moduli.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringTensors {
    pub sample_rate: f64,
    pub signal_len: usize,
    pub layers: Vec<BTreeMap<Path, PathSeries>>,
    pub averaged: BTreeMap<Path, PathSeries>,
    pub input_energy: f64,
    /// Energy of the input through the first-layer scaling function.
    pub lowpass_residual: f64,
}

impl ScatteringTensors {
    pub fn series(&self, p: &Path) -> Option<&PathSeries> {
        self.layers.get(p.depth()).and_then(|l| l.get(p))
    }

    pub fn path_energy(&self, p: &Path) -> Option<f64> {
        self.series(p).map(PathSeries::energy)
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.layers.iter().flat_map(|l| l.keys())
    }
}

/// Per-layer energy `sum over paths of hop * sum U^2`.
pub fn energy_by_layer(t: &ScatteringTensors) -> Vec<f64> {
    t.layers.iter().map(|layer| layer.values().map(PathSeries::energy).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_rejects_non_finite() {
        assert!(Signal::new(vec![0.0, f64::NAN], 8.0).is_err());
        assert!(Signal::new(vec![], 8.0).is_err());
        assert!(Signal::new(vec![1.0], 0.0).is_err());
    }

    #[test]
    fn series_energy_compensates_hop() {
        let s = PathSeries { hop: 4, values: vec![1.0, 2.0] };
        assert_eq!(s.energy(), 20.0);
    }
}
