//! Morlet filterbanks over time and over log-frequency, built directly in
//! the Fourier domain, plus the Littlewood-Paley frame check.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::fourier::{next_power_of_two, Taps};

/// Ratio between a filter's Gaussian width and the spacing of its ladder,
/// `sigma = BANDWIDTH_FACTOR * xi * (1 - 2^(-1/Q))`.
pub const BANDWIDTH_FACTOR: f64 = 0.85;

/// Minimum number of bins under the half-maximum of the lowest filter.
pub const MIN_BINS_UNDER_FWHM: f64 = 4.0;

/// Spectral values below this fraction of the peak are not stored.
const TRUNCATION: f64 = 1e-13;

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    Time,
    LogFrequency,
}

/// Orientation of a frequential wavelet. `Up` occupies positive
/// frequencies along the log-frequency axis and responds to rising chirps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn sign(self) -> i8 {
        match self {
            Spin::Up => 1,
            Spin::Down => -1,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Spin> {
        match sign {
            1 => Some(Spin::Up),
            -1 => Some(Spin::Down),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveletParams {
    /// log2 of the center frequency in axis units.
    pub gamma: f64,
    pub spin: Option<Spin>,
    pub quality: f64,
    /// Gaussian width divided by the axis sample rate.
    pub bandwidth_sigma: f64,
}

impl WaveletParams {
    pub fn center(&self) -> f64 {
        self.gamma.exp2()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    pub params: WaveletParams,
    pub spectrum: Taps,
}

impl Filter {
    pub fn center(&self) -> f64 {
        self.params.center()
    }

    /// Gaussian width in axis units.
    pub fn sigma(&self, sample_rate: f64) -> f64 {
        self.params.bandwidth_sigma * sample_rate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub variable: Variable,
    /// Ordered by decreasing center frequency; frequential banks list the
    /// `Up` filter of each scale before its `Down` mirror.
    pub filters: Vec<Filter>,
    /// Real scaling-function spectrum on all `grid_size` bins.
    pub lowpass: Vec<f64>,
    pub grid_size: usize,
    /// Hz for time; filters per octave for log-frequency.
    pub sample_rate: f64,
    /// Interval over which the frame condition is enforced and reported.
    pub covered_band: (f64, f64),
}

/// Knobs of the filter construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Design {
    pub bandwidth_factor: f64,
    /// Rescale all filters so the frame sum is exactly one up to the top
    /// of the covered band.
    pub calibrate: bool,
}

impl Default for Design {
    fn default() -> Self {
        Design { bandwidth_factor: BANDWIDTH_FACTOR, calibrate: true }
    }
}

impl FilterBank {
    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Signed frequency of bin `k`, in axis units.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        signed_bin(k, self.grid_size) as f64 * self.sample_rate / self.grid_size as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        self.filters.iter().map(Filter::center).collect()
    }

    pub fn lowpass_taps(&self) -> Taps {
        Taps::from_real(&self.lowpass)
    }

    /// Largest power-of-two decimation after which a signal band-limited to
    /// filter `index` is still sampled at `oversampling` times its FWHM.
    pub fn max_decimation(&self, index: usize, oversampling: f64) -> usize {
        let fwhm = FWHM_PER_SIGMA * self.filters[index].sigma(self.sample_rate);
        let mut hop = 1usize;
        while hop * 2 <= self.grid_size && self.sample_rate / (hop * 2) as f64 >= oversampling * fwhm {
            hop *= 2;
        }
        hop
    }
}

fn signed_bin(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

fn gaussian(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma) * (x / sigma)).exp()
}

/// Number of filters in the ladder `f_max * 2^(-k/Q)` that stay above
/// `f_min`, i.e. `ceil(Q log2(f_max / f_min))`.
pub fn ladder_len(quality: f64, f_min: f64, f_max: f64) -> usize {
    if f_max <= f_min {
        return 0;
    }
    (quality * (f_max / f_min).log2() - 1e-9).ceil().max(0.0) as usize
}

/// Zero-mean Morlet spectrum on the nonnegative bins `0..=n/2`, unit peak.
fn morlet_positive(xi: f64, sigma: f64, n: usize, rate: f64) -> Vec<(usize, f64)> {
    let kappa = gaussian(xi, sigma);
    let df = rate / n as f64;
    let values: Vec<f64> = (0..=n / 2)
        .map(|k| {
            let f = k as f64 * df;
            gaussian(f - xi, sigma) - kappa * gaussian(f, sigma)
        })
        .collect();
    let peak = values.iter().cloned().fold(0.0, f64::max);
    values
        .into_iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > TRUNCATION * peak)
        .map(|(k, v)| (k, v / peak))
        .collect()
}

fn to_taps(entries: Vec<(usize, f64)>, n: usize) -> Taps {
    Taps {
        grid: n,
        entries: entries.into_iter().map(|(k, v)| (k, num_complex::Complex64::new(v, 0.0))).collect(),
    }
}

fn gaussian_lowpass(half_power: f64, n: usize, rate: f64) -> Vec<f64> {
    // phi^2 = 1/2 at `half_power`
    let sigma = half_power / LN_2.sqrt();
    (0..n).map(|k| gaussian(signed_bin(k, n) as f64 * rate / n as f64, sigma)).collect()
}

fn check_resolution(lowest_sigma: f64, n: usize, rate: f64) -> Result<()> {
    let bins = FWHM_PER_SIGMA * lowest_sigma * n as f64 / rate;
    if bins < MIN_BINS_UNDER_FWHM {
        return Err(Error::Resolution(format!(
            "lowest filter spans {bins:.2} bins under its half maximum on a {n}-point grid (need {MIN_BINS_UNDER_FWHM})"
        )));
    }
    Ok(())
}

fn check_grid(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Config(format!("grid size {n} is not a power of two >= 2")));
    }
    Ok(())
}

pub fn build_temporal_filterbank(
    quality: f64,
    freq_min: f64,
    freq_max: f64,
    grid_size: usize,
    sample_rate: f64,
) -> Result<FilterBank> {
    build_temporal_filterbank_with(quality, freq_min, freq_max, grid_size, sample_rate, Design::default())
}

pub fn build_temporal_filterbank_with(
    quality: f64,
    freq_min: f64,
    freq_max: f64,
    grid_size: usize,
    sample_rate: f64,
    design: Design,
) -> Result<FilterBank> {
    if !(quality >= 1.0 && quality.is_finite()) {
        return Err(Error::Config(format!("quality {quality} must be >= 1")));
    }
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::Config(format!("sample rate {sample_rate} must be positive")));
    }
    if !(freq_min > 0.0 && freq_min < freq_max) {
        return Err(Error::Config(format!("invalid band: freq_min {freq_min} Hz, freq_max {freq_max} Hz")));
    }
    if freq_max > sample_rate / 2.0 {
        return Err(Error::Config(format!("freq_max {freq_max} Hz exceeds Nyquist ({} Hz)", sample_rate / 2.0)));
    }
    check_grid(grid_size)?;

    let count = ladder_len(quality, freq_min, freq_max);
    let spacing = 1.0 - (-1.0 / quality).exp2();
    let mut filters = Vec::with_capacity(count);
    for k in 0..count {
        let xi = freq_max * (-(k as f64) / quality).exp2();
        let sigma = design.bandwidth_factor * xi * spacing;
        if k + 1 == count {
            check_resolution(sigma, grid_size, sample_rate)?;
        }
        filters.push(Filter {
            params: WaveletParams { gamma: xi.log2(), spin: None, quality, bandwidth_sigma: sigma / sample_rate },
            spectrum: to_taps(morlet_positive(xi, sigma, grid_size, sample_rate), grid_size),
        });
    }

    let mut fb = FilterBank {
        variable: Variable::Time,
        filters,
        lowpass: gaussian_lowpass(freq_min, grid_size, sample_rate),
        grid_size,
        sample_rate,
        covered_band: (freq_min, freq_max),
    };
    if design.calibrate {
        calibrate(&mut fb, freq_max);
    }
    Ok(fb)
}

/// Filterbank along the log-frequency axis of a first-layer scalogram
/// sampled at `axis_rate` rows per octave. Each scale appears twice, once
/// per spin; scales run from `scale_max` down to `scale_min` cycles/octave.
pub fn build_frequential_filterbank(
    quality: f64,
    scale_max: f64,
    scale_min: f64,
    grid_size: usize,
    axis_rate: f64,
) -> Result<FilterBank> {
    build_frequential_filterbank_with(quality, scale_max, scale_min, grid_size, axis_rate, Design::default())
}

pub fn build_frequential_filterbank_with(
    quality: f64,
    scale_max: f64,
    scale_min: f64,
    grid_size: usize,
    axis_rate: f64,
    design: Design,
) -> Result<FilterBank> {
    if !(quality >= 1.0 && quality.is_finite()) {
        return Err(Error::Config(format!("frequential quality {quality} must be >= 1")));
    }
    if !(axis_rate > 0.0) {
        return Err(Error::Config(format!("log-frequency sampling rate {axis_rate} must be positive")));
    }
    if !(scale_max > 0.0) || scale_max > axis_rate / 2.0 {
        return Err(Error::Config(format!(
            "scale_max {scale_max} c/o must lie in (0, {}] (Nyquist of the log-frequency axis)",
            axis_rate / 2.0
        )));
    }
    if !(scale_min > 0.0) {
        return Err(Error::Config(format!("scale_min {scale_min} c/o must be positive")));
    }
    check_grid(grid_size)?;

    if scale_max < scale_min {
        return Ok(FilterBank {
            variable: Variable::LogFrequency,
            filters: Vec::new(),
            lowpass: gaussian_lowpass(scale_max, grid_size, axis_rate),
            grid_size,
            sample_rate: axis_rate,
            covered_band: (0.0, scale_max),
        });
    }

    let count = ladder_len(quality, scale_min, scale_max).max(1);
    let spacing = 1.0 - (-1.0 / quality).exp2();
    let mut filters = Vec::with_capacity(2 * count);
    for k in 0..count {
        let xi = scale_max * (-(k as f64) / quality).exp2();
        let sigma = design.bandwidth_factor * xi * spacing;
        if k + 1 == count {
            check_resolution(sigma, grid_size, axis_rate)?;
        }
        let up = to_taps(morlet_positive(xi, sigma, grid_size, axis_rate), grid_size);
        let down = mirror(&up);
        let params = WaveletParams { gamma: xi.log2(), spin: None, quality, bandwidth_sigma: sigma / axis_rate };
        filters.push(Filter { params: WaveletParams { spin: Some(Spin::Up), ..params }, spectrum: up });
        filters.push(Filter { params: WaveletParams { spin: Some(Spin::Down), ..params }, spectrum: down });
    }

    let mut fb = FilterBank {
        variable: Variable::LogFrequency,
        filters,
        lowpass: gaussian_lowpass(scale_min, grid_size, axis_rate),
        grid_size,
        sample_rate: axis_rate,
        covered_band: (scale_min, scale_max),
    };
    if design.calibrate {
        calibrate(&mut fb, scale_max);
    }
    Ok(fb)
}

/// Spectrum reflected about bin 0.
pub fn mirror(taps: &Taps) -> Taps {
    let n = taps.grid;
    let mut entries: Vec<_> = taps.entries.iter().map(|&(k, c)| ((n - k) % n, c)).collect();
    entries.sort_by_key(|e| e.0);
    Taps { grid: n, entries }
}

/// Frame sum `phi^2 + 1/2 sum (|psi(w)|^2 + |psi(-w)|^2)` on every bin.
fn frame_sum(fb: &FilterBank) -> Vec<f64> {
    let n = fb.grid_size;
    let mut sum: Vec<f64> = fb.lowpass.iter().map(|p| p * p).collect();
    for f in &fb.filters {
        for &(k, c) in &f.spectrum.entries {
            let e = 0.5 * c.norm_sqr();
            sum[k] += e;
            sum[(n - k) % n] += e;
        }
    }
    sum
}

/// Divides every spectrum by the square root of the frame sum, so the sum
/// becomes one for |w| <= `top`. Above `top` the scaling freezes at its
/// value at the edge bin.
fn calibrate(fb: &mut FilterBank, top: f64) {
    let n = fb.grid_size;
    let sum = frame_sum(fb);
    let edge = ((top * n as f64 / fb.sample_rate).floor() as usize).min(n / 2);
    let scale: Vec<f64> = (0..n)
        .map(|k| {
            let s = signed_bin(k, n).unsigned_abs() as usize;
            let b = if s <= edge { sum[k] } else { sum[edge] };
            if b > 1e-300 {
                1.0 / b.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    for f in &mut fb.filters {
        for (k, c) in f.spectrum.entries.iter_mut() {
            *c *= scale[*k];
        }
    }
    for (k, p) in fb.lowpass.iter_mut().enumerate() {
        *p *= scale[k];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub epsilon: f64,
    pub covered_band: (f64, f64),
    /// Frame sum on every grid bin, in bin order.
    pub sum_curve: Vec<f64>,
    /// Signed frequency of every bin, in axis units.
    pub frequencies: Vec<f64>,
}

impl FrameReport {
    /// `omega_hz,sum` over the nonnegative bins.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega_hz,sum\n");
        for (f, s) in self.frequencies.iter().zip(&self.sum_curve) {
            if *f >= 0.0 {
                out.push_str(&format!("{f},{s}\n"));
            }
        }
        out
    }
}

pub fn littlewood_paley_report(fb: &FilterBank) -> FrameReport {
    let sum_curve = frame_sum(fb);
    let frequencies: Vec<f64> = (0..fb.grid_size).map(|k| fb.bin_frequency(k)).collect();
    let (lo, hi) = fb.covered_band;
    let epsilon = frequencies
        .iter()
        .zip(&sum_curve)
        .filter(|(f, _)| (lo..=hi).contains(&f.abs()))
        .map(|(_, s)| (1.0 - s).abs())
        .fold(0.0, f64::max);
    FrameReport { epsilon, covered_band: fb.covered_band, sum_curve, frequencies }
}

/// Settings for the three banks of a depth-2 joint network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankConfig {
    pub quality1: f64,
    pub freq_min1: f64,
    pub freq_max1: f64,
    pub quality2: f64,
    pub freq_min2: f64,
    pub freq_max2: f64,
    pub quality_fr: f64,
    pub scale_max: f64,
    pub scale_min: f64,
    pub design: Design,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            quality1: 8.0,
            freq_min1: 20.0,
            freq_max1: 20000.0,
            quality2: 1.0,
            freq_min2: 1.0,
            freq_max2: 1000.0,
            quality_fr: 1.0,
            scale_max: 4.0,
            scale_min: 0.25,
            design: Design::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Banks {
    pub layer1: FilterBank,
    pub layer2: FilterBank,
    pub frequential: FilterBank,
}

impl Banks {
    /// Builds all banks on a temporal grid of `grid_size` bins. The
    /// frequential grid covers twice the number of first-layer filters.
    pub fn build(config: &BankConfig, grid_size: usize, sample_rate: f64) -> Result<Banks> {
        let layer1 = build_temporal_filterbank_with(
            config.quality1,
            config.freq_min1,
            config.freq_max1,
            grid_size,
            sample_rate,
            config.design,
        )?;
        let layer2 = build_temporal_filterbank_with(
            config.quality2,
            config.freq_min2,
            config.freq_max2,
            grid_size,
            sample_rate,
            config.design,
        )?;
        let fr_grid = next_power_of_two(2 * layer1.len()).max(2);
        let frequential = build_frequential_filterbank_with(
            config.quality_fr,
            config.scale_max,
            config.scale_min,
            fr_grid,
            config.quality1,
            config.design,
        )?;
        Ok(Banks { layer1, layer2, frequential })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layer1_has_eighty_filters() {
        let fb = build_temporal_filterbank(8.0, 20.0, 20000.0, 1 << 16, 44100.0).unwrap();
        assert_eq!(fb.len(), (8.0 * 1000f64.log2()).ceil() as usize);
        assert_eq!(fb.len(), 80);
        assert!((fb.filters[0].center() - 20000.0).abs() < 1e-9);
    }

    #[test]
    fn dyadic_ladder_at_quality_one() {
        let sr = 1024.0;
        let fb = build_temporal_filterbank(1.0, 8.0, 0.25 * sr, 4096, sr).unwrap();
        for (k, f) in fb.filters.iter().enumerate() {
            assert!((f.params.gamma - (8.0 - k as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mean_and_analytic() {
        let fb = build_temporal_filterbank(8.0, 20.0, 20000.0, 1 << 16, 44100.0).unwrap();
        for f in &fb.filters {
            let dense = f.spectrum.to_dense();
            let peak = dense.iter().map(|c| c.norm()).fold(0.0, f64::max);
            assert!(dense[0].norm() <= 1e-10 * peak);
            let neg: f64 = dense[fb.grid_size / 2 + 1..].iter().map(|c| c.norm_sqr()).sum();
            let total: f64 = dense.iter().map(|c| c.norm_sqr()).sum();
            assert!(neg <= 1e-6 * total);
        }
    }

    #[test]
    fn ladder_ratio() {
        let fb = build_temporal_filterbank(8.0, 20.0, 20000.0, 1 << 16, 44100.0).unwrap();
        for w in fb.filters.windows(2) {
            let ratio = w[1].center() / w[0].center();
            assert!((ratio - (-1.0f64 / 8.0).exp2()).abs() < 1e-12);
        }
    }

    #[test]
    fn lowpass_is_real_nonnegative_peaked_at_dc() {
        let fb = build_temporal_filterbank(1.0, 1.0, 1000.0, 1 << 17, 44100.0).unwrap();
        assert!(fb.lowpass.iter().all(|&p| p >= 0.0));
        assert!(fb.lowpass.iter().all(|&p| p <= fb.lowpass[0]));
    }

    #[test]
    fn frequential_ladder_and_spin_mirror() {
        let fb = build_frequential_filterbank(1.0, 4.0, 0.25, 256, 8.0).unwrap();
        let centers: Vec<f64> = fb.filters.iter().step_by(2).map(Filter::center).collect();
        assert_eq!(centers, vec![4.0, 2.0, 1.0, 0.5]);
        for pair in fb.filters.chunks(2) {
            assert_eq!(pair[0].params.spin, Some(Spin::Up));
            assert_eq!(pair[1].params.spin, Some(Spin::Down));
            let up = pair[0].spectrum.to_dense();
            let down = pair[1].spectrum.to_dense();
            for k in 0..256 {
                assert_eq!(down[k], up[(256 - k) % 256]);
            }
        }
    }

    #[test]
    fn frequential_empty_ladder() {
        let fb = build_frequential_filterbank(1.0, 0.1, 0.25, 64, 8.0).unwrap();
        assert!(fb.is_empty());
        let report = littlewood_paley_report(&fb);
        let expected = fb
            .lowpass
            .iter()
            .enumerate()
            .filter(|(k, _)| fb.bin_frequency(*k).abs() <= 0.1)
            .map(|(_, p)| (1.0 - p * p).abs())
            .fold(0.0, f64::max);
        assert_eq!(report.epsilon, expected);
    }

    #[test]
    fn frequential_above_nyquist_is_rejected() {
        assert!(matches!(build_frequential_filterbank(1.0, 4.5, 0.25, 256, 8.0), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_band_and_resolution() {
        assert!(matches!(build_temporal_filterbank(8.0, 100.0, 50.0, 1024, 1000.0), Err(Error::Config(_))));
        assert!(matches!(build_temporal_filterbank(8.0, 20.0, 600.0, 1024, 1000.0), Err(Error::Config(_))));
        assert!(matches!(build_temporal_filterbank(8.0, 1.0, 400.0, 1024, 1000.0), Err(Error::Resolution(_))));
        assert!(matches!(build_temporal_filterbank(8.0, 1.0, 400.0, 1000, 1000.0), Err(Error::Config(_))));
    }

    #[test]
    fn calibrated_default_banks_meet_frame_bound() {
        let banks = Banks::build(&BankConfig::default(), 1 << 17, 44100.0).unwrap();
        for fb in [&banks.layer1, &banks.layer2, &banks.frequential] {
            let r = littlewood_paley_report(fb);
            assert!(r.epsilon <= 0.05, "epsilon {}", r.epsilon);
        }
    }
}
