use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_complex::Complex64;
use rayon::prelude::*;

use super::{PathSeries, ScatteringTensors, Signal, TransformConfig};
use crate::error::{Error, Result};
use crate::filterbank::{Banks, FilterBank, Spin};
use crate::fourier::{filter_resample, map_bin, next_power_of_two, reflect_pad_map, FftCache, Taps};
use crate::pathgrammar::{validate_path, ComputationGraph, Path, PathSpace};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_4;
const COLUMN_CHUNK: usize = 64;
const AVERAGING_TRUNCATION: f64 = 1e-16;

/// Forward-pass variants. A nonzero `modulus_eps[m]` replaces the modulus
/// of layer `m` by `sqrt(|z|^2 + eps^2) - eps`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ForwardOptions {
    pub modulus_eps: [f64; 3],
    /// Leave `averaged` empty.
    pub skip_averaging: bool,
}

/// Intermediate values kept by the forward pass for the reverse pass.
pub struct Tape {
    y1: Vec<Vec<Complex64>>,
    v1: Vec<Vec<Complex64>>,
    y2: Vec<Vec<Complex64>>,
}

/// Gradients of a scalar loss with respect to the forward outputs. Series
/// gradients cover the stored (cropped) samples; missing paths count as
/// zero. `input` is added to the gradient as is when nonempty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cotangent {
    pub input: Vec<f64>,
    pub series: BTreeMap<Path, Vec<f64>>,
    pub averaged: BTreeMap<Path, Vec<f64>>,
}

fn modulus(z: Complex64, eps: f64) -> f64 {
    if eps == 0.0 {
        z.norm_sqr().sqrt()
    } else {
        (z.norm_sqr() + eps * eps).sqrt() - eps
    }
}

fn modulus_grad(z: Complex64, eps: f64) -> Complex64 {
    let d = (z.norm_sqr() + eps * eps).sqrt();
    if d == 0.0 {
        ZERO
    } else {
        z / d
    }
}

fn crop_len(len: usize, hop: usize) -> usize {
    len.div_ceil(hop)
}

struct TemporalPath {
    path: Path,
    k: usize,
    j: usize,
    hop: usize,
}

struct JointRow {
    k: usize,
    stride: usize,
    len: usize,
    /// (frequential filter index, path)
    outputs: Vec<(usize, Path)>,
}

struct JointGroup {
    j: usize,
    hop: usize,
    grid: usize,
    cols: usize,
    rows: Vec<JointRow>,
    filters: Vec<usize>,
}

/// A transform planned for one signal length, sample rate and path set.
pub struct Scattering {
    config: TransformConfig,
    banks: Banks,
    space: PathSpace,
    paths: Vec<Path>,
    hops: BTreeMap<Path, usize>,
    sample_rate: f64,
    len: usize,
    padded: usize,
    pad_map: Vec<usize>,
    hop1: Vec<usize>,
    taps1: Vec<Taps>,
    lowpass1: Taps,
    taps2: HashMap<(usize, usize), Taps>,
    temporal2: Vec<TemporalPath>,
    joint: Vec<JointGroup>,
    fr_taps: Vec<Taps>,
    gamma_map: Vec<usize>,
    avg_hop: usize,
    avg_filters: HashMap<(usize, usize), Taps>,
    fft: FftCache,
    pool: rayon::ThreadPool,
}

fn largest_hop(rate: f64, bandwidth: f64, oversampling: f64, limit: usize) -> usize {
    let mut hop = 1;
    while hop * 2 <= limit && rate / (hop * 2) as f64 >= oversampling * bandwidth {
        hop *= 2;
    }
    hop
}

impl Scattering {
    pub fn new(config: TransformConfig, graph: &ComputationGraph, len: usize, sample_rate: f64) -> Result<Scattering> {
        if len == 0 {
            return Err(Error::Config("signal is empty".into()));
        }
        if config.workers == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        if config.averaging_scale == 0 {
            return Err(Error::Config("averaging scale must be positive".into()));
        }
        if !(config.oversampling >= 1.0) {
            return Err(Error::Config(format!("oversampling {} must be >= 1", config.oversampling)));
        }
        let padded = next_power_of_two(2 * len).max(2);
        let banks = Banks::build(&config.banks, padded, sample_rate)?;
        let space = PathSpace::of(&banks);
        let paths: Vec<Path> = graph.paths().cloned().collect();
        for p in &paths {
            if !validate_path(p, &space, 2, p.is_joint()) {
                return Err(Error::MalformedPaths(format!("path `{p}` is not admissible for these filterbanks")));
            }
        }

        let avg_fwhm = FWHM_PER_SIGMA * sample_rate / config.averaging_scale as f64;
        let avg_hop = largest_hop(sample_rate, avg_fwhm, config.oversampling, padded);
        let own_hop = |bank: &FilterBank, idx: usize| {
            if config.pyramid {
                bank.max_decimation(idx, config.oversampling).min(avg_hop)
            } else {
                1
            }
        };
        let n1 = banks.layer1.len();
        let hop1: Vec<usize> = (0..n1).map(|k| own_hop(&banks.layer1, k)).collect();
        let hop2: Vec<usize> = (0..banks.layer2.len()).map(|j| own_hop(&banks.layer2, j)).collect();

        let mut hops = BTreeMap::new();
        let mut temporal2 = Vec::new();
        let mut groups: BTreeMap<usize, BTreeMap<usize, Vec<(usize, Path)>>> = BTreeMap::new();
        for p in &paths {
            match (p.gamma1(), p.gamma2(), p.fscale()) {
                (None, _, _) => {
                    hops.insert(p.clone(), 1);
                }
                (Some(k), None, _) => {
                    hops.insert(p.clone(), hop1[k]);
                }
                (Some(k), Some(j), None) => {
                    let hop = hop1[k].max(hop2[j]);
                    hops.insert(p.clone(), hop);
                    temporal2.push(TemporalPath { path: p.clone(), k, j, hop });
                }
                (Some(k), Some(j), Some((f, spin))) => {
                    hops.insert(p.clone(), hop1[k].max(hop2[j]));
                    let q = 2 * f + usize::from(spin == Spin::Down);
                    groups.entry(j).or_default().entry(k).or_default().push((q, p.clone()));
                }
            }
        }

        let mut taps2 = HashMap::new();
        let mut need_taps2 = |j: usize, grid: usize| {
            taps2.entry((j, grid)).or_insert_with(|| banks.layer2.filters[j].spectrum.restrict(grid));
        };
        for tp in &temporal2 {
            need_taps2(tp.j, padded / hop1[tp.k]);
        }
        let mut joint = Vec::new();
        for (j, rows) in groups {
            let hop = hop2[j];
            for &h in &hop1 {
                need_taps2(j, padded / h);
            }
            let mut filters = BTreeSet::new();
            let rows = rows
                .into_iter()
                .map(|(k, outputs)| {
                    let out_hop = hop1[k].max(hop);
                    filters.extend(outputs.iter().map(|o| o.0));
                    JointRow { k, stride: out_hop / hop, len: crop_len(len, out_hop), outputs }
                })
                .collect();
            joint.push(JointGroup {
                j,
                hop,
                grid: padded / hop,
                cols: crop_len(len, hop),
                rows,
                filters: filters.into_iter().collect(),
            });
        }

        let fr = &banks.frequential;
        let fr_taps: Vec<Taps> = fr.filters.iter().map(|f| f.spectrum.clone()).collect();
        let gamma_map = if n1 > 0 && fr.grid_size >= n1 { reflect_pad_map(n1, fr.grid_size) } else { Vec::new() };
        if !joint.is_empty() && gamma_map.is_empty() {
            return Err(Error::Config("frequential grid is smaller than the first-layer bank".into()));
        }

        let mut avg_filters = HashMap::new();
        let sigma = sample_rate / config.averaging_scale as f64;
        for hop in hops.values().copied().chain([1]) {
            let n = crop_len(len, hop);
            let pa = next_power_of_two(2 * n).max(2);
            avg_filters.entry((hop, pa)).or_insert_with(|| {
                let rate = sample_rate / hop as f64;
                let dense: Vec<f64> = (0..pa)
                    .map(|b| {
                        let s = if b <= pa / 2 { b as f64 } else { b as f64 - pa as f64 };
                        let f = s * rate / pa as f64;
                        let v = (-0.5 * (f / sigma).powi(2)).exp();
                        if v > AVERAGING_TRUNCATION {
                            v
                        } else {
                            0.0
                        }
                    })
                    .collect();
                Taps::from_real(&dense)
            });
        }

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

        Ok(Scattering {
            config,
            taps1: banks.layer1.filters.iter().map(|f| f.spectrum.clone()).collect(),
            lowpass1: banks.layer1.lowpass_taps(),
            banks,
            space,
            paths,
            hops,
            sample_rate,
            len,
            padded,
            pad_map: reflect_pad_map(len, padded),
            hop1,
            taps2,
            temporal2,
            joint,
            fr_taps,
            gamma_map,
            avg_hop,
            avg_filters,
            fft: FftCache::new(),
            pool,
        })
    }

    /// Plan for all admissible paths up to `max_depth`.
    pub fn standard(config: TransformConfig, len: usize, sample_rate: f64, max_depth: usize, joint: bool) -> Result<Scattering> {
        let padded = next_power_of_two(2 * len.max(1)).max(2);
        let banks = Banks::build(&config.banks, padded, sample_rate)?;
        let paths = crate::pathgrammar::enumerate_paths(max_depth, &PathSpace::of(&banks), joint)?;
        let graph = crate::pathgrammar::compile_graph(&paths)?;
        Scattering::new(config, &graph, len, sample_rate)
    }

    pub fn banks(&self) -> &Banks {
        &self.banks
    }

    pub fn space(&self) -> &PathSpace {
        &self.space
    }

    pub fn config(&self) -> &TransformConfig {
        &self.config
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn signal_len(&self) -> usize {
        self.len
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn padded_len(&self) -> usize {
        self.padded
    }

    /// Decimation factor of a path's series.
    pub fn hop(&self, p: &Path) -> Option<usize> {
        self.hops.get(p).copied()
    }

    pub fn averaging_hop(&self) -> usize {
        self.avg_hop
    }

    /// `scale * ifft(R(taps * input))` on `out_len` bins.
    fn apply(&self, input: &[Complex64], taps: &Taps, out_len: usize, scale: f64) -> Vec<Complex64> {
        let mut out = vec![ZERO; out_len];
        filter_resample(input, taps, &mut out);
        self.fft.inverse(&mut out);
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }

    /// Per-tap contributions of the adjoint of [`Self::apply`] applied to
    /// `grad` (time domain, `out_len` samples).
    fn apply_adjoint(&self, mut grad: Vec<Complex64>, taps: &Taps, scale: f64) -> Vec<Complex64> {
        self.fft.forward(&mut grad);
        let (from, to) = (taps.grid, grad.len());
        taps.entries.iter().map(|&(k, t)| t.conj() * grad[map_bin(k, from, to)] * scale).collect()
    }

    fn check_signal(&self, signal: &Signal) -> Result<()> {
        if signal.len() != self.len {
            return Err(Error::SizeMismatch(format!("signal has {} samples, plan expects {}", signal.len(), self.len)));
        }
        if signal.sample_rate != self.sample_rate {
            return Err(Error::Config(format!(
                "signal sampled at {} Hz, plan expects {} Hz",
                signal.sample_rate, self.sample_rate
            )));
        }
        Ok(())
    }

    pub fn forward(&self, signal: &Signal) -> Result<ScatteringTensors> {
        Ok(self.forward_with(signal, &ForwardOptions::default())?.0)
    }

    pub fn forward_with(&self, signal: &Signal, opts: &ForwardOptions) -> Result<(ScatteringTensors, Tape)> {
        self.check_signal(signal)?;
        self.pool.install(|| self.forward_inner(signal, opts))
    }

    fn forward_inner(&self, signal: &Signal, opts: &ForwardOptions) -> Result<(ScatteringTensors, Tape)> {
        let x = &signal.samples;
        let n = self.len;
        let p = self.padded;
        let xpad: Vec<f64> = self.pad_map.iter().map(|&i| x[i]).collect();
        let spec = self.fft.forward_real(&xpad);
        let need_v1 = !self.temporal2.is_empty() || !self.joint.is_empty();
        let eps = opts.modulus_eps;

        let layer1: Vec<(Vec<Complex64>, Vec<Complex64>)> = (0..self.taps1.len())
            .into_par_iter()
            .map(|k| {
                let y = self.apply(&spec, &self.taps1[k], p / self.hop1[k], 1.0 / p as f64);
                let v = if need_v1 {
                    let u: Vec<f64> = y.iter().map(|&z| modulus(z, eps[1])).collect();
                    self.fft.forward_real(&u)
                } else {
                    Vec::new()
                };
                (y, v)
            })
            .collect();
        let (y1, v1): (Vec<_>, Vec<_>) = layer1.into_iter().unzip();

        let mut layers = vec![BTreeMap::new(), BTreeMap::new(), BTreeMap::new()];
        for path in &self.paths {
            match path.depth() {
                0 => {
                    layers[0].insert(path.clone(), PathSeries { hop: 1, values: x.clone() });
                }
                1 => {
                    let k = path.gamma1().expect("depth-1 path");
                    let hop = self.hop1[k];
                    let values = y1[k][..crop_len(n, hop)].iter().map(|&z| modulus(z, eps[1])).collect();
                    layers[1].insert(path.clone(), PathSeries { hop, values });
                }
                _ => {}
            }
        }

        let y2: Vec<Vec<Complex64>> = self
            .temporal2
            .par_iter()
            .map(|tp| {
                let grid = p / self.hop1[tp.k];
                self.apply(&v1[tp.k], &self.taps2[&(tp.j, grid)], p / tp.hop, 1.0 / grid as f64)
            })
            .collect();
        for (tp, y) in self.temporal2.iter().zip(&y2) {
            let values = y[..crop_len(n, tp.hop)].iter().map(|&z| modulus(z, eps[2])).collect();
            layers[2].insert(tp.path.clone(), PathSeries { hop: tp.hop, values });
        }

        for group in &self.joint {
            let plane = self.joint_plane(group, &v1);
            let chunks: Vec<Vec<Vec<Vec<f64>>>> = (0..group.cols)
                .step_by(COLUMN_CHUNK)
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|t0| self.joint_chunk_forward(group, &plane, t0, (t0 + COLUMN_CHUNK).min(group.cols), eps[2]))
                .collect();
            for (r, row) in group.rows.iter().enumerate() {
                for (q, path) in &row.outputs {
                    let qi = group.filters.binary_search(q).expect("filter index");
                    let values: Vec<f64> = (0..row.len)
                        .map(|i| {
                            let t = i * row.stride;
                            chunks[t / COLUMN_CHUNK][qi][r][t % COLUMN_CHUNK]
                        })
                        .collect();
                    let hop = row.stride * group.hop;
                    layers[2].insert(path.clone(), PathSeries { hop, values });
                }
            }
        }

        let averaged: BTreeMap<Path, PathSeries> = if opts.skip_averaging {
            BTreeMap::new()
        } else {
            let all: Vec<(&Path, &PathSeries)> = layers.iter().flat_map(|l| l.iter()).collect();
            all.par_iter().map(|(path, s)| ((*path).clone(), self.average(&s.values, s.hop))).collect()
        };

        let low = self.apply(&spec, &self.lowpass1, p, 1.0 / p as f64);
        let lowpass_residual = low[..n].iter().map(|z| z.norm_sqr()).sum();

        let tensors = ScatteringTensors {
            sample_rate: self.sample_rate,
            signal_len: n,
            layers,
            averaged,
            input_energy: signal.energy(),
            lowpass_residual,
        };
        Ok((tensors, Tape { y1, v1, y2 }))
    }

    /// Second-layer temporal responses of every first-layer row for
    /// group `j`, over the stored columns.
    fn joint_plane(&self, group: &JointGroup, v1: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        let p = self.padded;
        (0..self.hop1.len())
            .into_par_iter()
            .map(|k| {
                let grid = p / self.hop1[k];
                let mut row = self.apply(&v1[k], &self.taps2[&(group.j, grid)], group.grid, 1.0 / grid as f64);
                row.truncate(group.cols);
                row
            })
            .collect()
    }

    /// Spectra along the log-frequency axis of columns `t0..t1`, one
    /// frequential grid per column.
    fn column_spectra(&self, plane: &[Vec<Complex64>], t0: usize, t1: usize) -> Vec<Complex64> {
        let pg = self.gamma_map.len();
        let w = t1 - t0;
        let mut g = vec![ZERO; w * pg];
        for (i, &r) in self.gamma_map.iter().enumerate() {
            for (c, &v) in plane[r][t0..t1].iter().enumerate() {
                g[c * pg + i] = v;
            }
        }
        self.fft.plan(pg, false).process(&mut g);
        g
    }

    /// Frequential filter `q` applied to every column of `spectra`;
    /// overwrites `out` with the (unscaled) result on the full grid.
    fn frequential(&self, spectra: &[Complex64], q: usize, out: &mut [Complex64]) {
        let pg = self.gamma_map.len();
        out.fill(ZERO);
        for (col, dst) in spectra.chunks_exact(pg).zip(out.chunks_exact_mut(pg)) {
            for &(b, h) in &self.fr_taps[q].entries {
                dst[b] = col[b] * h;
            }
        }
        self.fft.plan(pg, true).process(out);
    }

    /// Moduli `[filter][row][column - t0]` for columns `t0..t1`.
    fn joint_chunk_forward(&self, group: &JointGroup, plane: &[Vec<Complex64>], t0: usize, t1: usize, eps: f64) -> Vec<Vec<Vec<f64>>> {
        let pg = self.gamma_map.len();
        let scale = 1.0 / pg as f64;
        let w = t1 - t0;
        let spectra = self.column_spectra(plane, t0, t1);
        let mut z = vec![ZERO; w * pg];
        let mut out = Vec::with_capacity(group.filters.len());
        for &q in &group.filters {
            self.frequential(&spectra, q, &mut z);
            let rows = group
                .rows
                .iter()
                .map(|row| {
                    (0..w)
                        .map(|c| {
                            if (t0 + c).is_multiple_of(row.stride) {
                                modulus(z[c * pg + row.k] * scale, eps)
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            out.push(rows);
        }
        out
    }

    /// Gradient with respect to the plane for columns `t0..t1`, as
    /// `[row k][column - t0]`.
    fn joint_chunk_backward(
        &self,
        group: &JointGroup,
        plane: &[Vec<Complex64>],
        grads: &[Vec<Option<&Vec<f64>>>],
        t0: usize,
        t1: usize,
        eps: f64,
    ) -> Vec<Vec<Complex64>> {
        let n1 = self.hop1.len();
        let pg = self.gamma_map.len();
        let scale = 1.0 / pg as f64;
        let w = t1 - t0;
        let spectra = self.column_spectra(plane, t0, t1);
        let mut z = vec![ZERO; w * pg];
        let mut gz = vec![ZERO; w * pg];
        let mut acc = vec![ZERO; w * pg];
        for (qi, &q) in group.filters.iter().enumerate() {
            if grads[qi].iter().all(Option::is_none) {
                continue;
            }
            self.frequential(&spectra, q, &mut z);
            gz.fill(ZERO);
            for (r, row) in group.rows.iter().enumerate() {
                let Some(gu) = grads[qi][r] else { continue };
                for t in t0..t1 {
                    if t % row.stride != 0 || t / row.stride >= row.len {
                        continue;
                    }
                    let i = (t - t0) * pg + row.k;
                    gz[i] = modulus_grad(z[i] * scale, eps) * gu[t / row.stride];
                }
            }
            self.fft.plan(pg, false).process(&mut gz);
            for (a_col, g_col) in acc.chunks_exact_mut(pg).zip(gz.chunks_exact(pg)) {
                for &(b, h) in &self.fr_taps[q].entries {
                    a_col[b] += h.conj() * g_col[b] * scale;
                }
            }
        }
        self.fft.plan(pg, true).process(&mut acc);
        let mut out = vec![vec![ZERO; w]; n1];
        for (i, &r) in self.gamma_map.iter().enumerate() {
            for (c, o) in out[r].iter_mut().enumerate() {
                *o += acc[c * pg + i];
            }
        }
        out
    }

    /// Lowpass average of a cropped series, reflection-padded.
    fn average(&self, values: &[f64], hop: usize) -> PathSeries {
        let n = values.len();
        let pa = next_power_of_two(2 * n).max(2);
        let stride = (self.avg_hop.max(hop) / hop).min(pa);
        let out_hop = hop * stride;
        let map = reflect_pad_map(n, pa);
        let padded: Vec<f64> = map.iter().map(|&i| values[i]).collect();
        let spec = self.fft.forward_real(&padded);
        let phi = &self.avg_filters[&(hop, pa)];
        let y = self.apply(&spec, phi, pa / stride, 1.0 / pa as f64);
        let count = crop_len(self.len, out_hop).min(y.len());
        PathSeries { hop: out_hop, values: y[..count].iter().map(|z| z.re).collect() }
    }

    fn average_adjoint(&self, grad: &[f64], n: usize, hop: usize) -> Vec<f64> {
        let pa = next_power_of_two(2 * n).max(2);
        let stride = (self.avg_hop.max(hop) / hop).min(pa);
        let mut g = vec![ZERO; pa / stride];
        for (a, &b) in g.iter_mut().zip(grad) {
            *a = Complex64::new(b, 0.0);
        }
        let phi = &self.avg_filters[&(hop, pa)];
        let contrib = self.apply_adjoint(g, phi, 1.0 / pa as f64);
        let mut acc = vec![ZERO; pa];
        for (&(k, _), c) in phi.entries.iter().zip(contrib) {
            acc[k] += c;
        }
        self.fft.inverse(&mut acc);
        let mut out = vec![0.0; n];
        for (i, &src) in reflect_pad_map(n, pa).iter().enumerate() {
            out[src] += acc[i].re;
        }
        out
    }

    /// Reverse pass: gradient of a scalar loss with respect to the input
    /// samples, given its gradient with respect to the forward outputs.
    /// Moduli of layer `m` are differentiated as `sqrt(|z|^2 + eps[m]^2)`.
    pub fn backward(&self, tape: &Tape, cot: &Cotangent, eps: [f64; 3]) -> Vec<f64> {
        self.pool.install(|| self.backward_inner(tape, cot, eps))
    }

    fn backward_inner(&self, tape: &Tape, cot: &Cotangent, eps: [f64; 3]) -> Vec<f64> {
        let n = self.len;
        let p = self.padded;
        let mut series: BTreeMap<Path, Vec<f64>> = cot.series.clone();
        for (path, g) in &cot.averaged {
            let Some(&hop) = self.hops.get(path) else { continue };
            let gv = self.average_adjoint(g, crop_len(n, hop), hop);
            let entry = series.entry(path.clone()).or_insert_with(|| vec![0.0; gv.len()]);
            for (a, b) in entry.iter_mut().zip(gv) {
                *a += b;
            }
        }

        let mut grad_x = vec![0.0; n];
        for (a, b) in grad_x.iter_mut().zip(&cot.input) {
            *a += b;
        }
        if let Some(g) = series.get(&Path::empty()) {
            for (a, b) in grad_x.iter_mut().zip(g) {
                *a += b;
            }
        }

        let n1 = self.hop1.len();
        let mut acc_v: Vec<Option<Vec<Complex64>>> = vec![None; n1];
        let mut add_v = |k: usize, taps: &Taps, contrib: Vec<Complex64>| {
            let acc = acc_v[k].get_or_insert_with(|| vec![ZERO; p / self.hop1[k]]);
            for (&(b, _), c) in taps.entries.iter().zip(contrib) {
                acc[b] += c;
            }
        };

        let temporal: Vec<(usize, Vec<Complex64>)> = self
            .temporal2
            .par_iter()
            .enumerate()
            .filter_map(|(i, tp)| {
                let g = series.get(&tp.path)?;
                let y = &tape.y2[i];
                let mut gy = vec![ZERO; y.len()];
                for (t, &gv) in g.iter().enumerate() {
                    gy[t] = modulus_grad(y[t], eps[2]) * gv;
                }
                let grid = p / self.hop1[tp.k];
                Some((i, self.apply_adjoint(gy, &self.taps2[&(tp.j, grid)], 1.0 / grid as f64)))
            })
            .collect();
        for (i, contrib) in temporal {
            let tp = &self.temporal2[i];
            add_v(tp.k, &self.taps2[&(tp.j, p / self.hop1[tp.k])], contrib);
        }

        for group in &self.joint {
            let grads: Vec<Vec<Option<&Vec<f64>>>> = group
                .filters
                .iter()
                .map(|&q| {
                    group
                        .rows
                        .iter()
                        .map(|row| row.outputs.iter().find(|o| o.0 == q).and_then(|o| series.get(&o.1)))
                        .collect()
                })
                .collect();
            if grads.iter().flatten().all(Option::is_none) {
                continue;
            }
            let plane = self.joint_plane(group, &tape.v1);
            let chunks: Vec<Vec<Vec<Complex64>>> = (0..group.cols)
                .step_by(COLUMN_CHUNK)
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|t0| self.joint_chunk_backward(group, &plane, &grads, t0, (t0 + COLUMN_CHUNK).min(group.cols), eps[2]))
                .collect();
            let contribs: Vec<Vec<Complex64>> = (0..n1)
                .into_par_iter()
                .map(|k| {
                    let mut gy = vec![ZERO; group.grid];
                    for (c, chunk) in chunks.iter().enumerate() {
                        let t0 = c * COLUMN_CHUNK;
                        gy[t0..t0 + chunk[k].len()].copy_from_slice(&chunk[k]);
                    }
                    let grid = p / self.hop1[k];
                    self.apply_adjoint(gy, &self.taps2[&(group.j, grid)], 1.0 / grid as f64)
                })
                .collect();
            for (k, contrib) in contribs.into_iter().enumerate() {
                add_v(k, &self.taps2[&(group.j, p / self.hop1[k])], contrib);
            }
        }

        let layer1: Vec<Option<Vec<Complex64>>> = (0..n1)
            .into_par_iter()
            .map(|k| {
                let direct = series.get(&Path::first(k));
                if direct.is_none() && acc_v[k].is_none() {
                    return None;
                }
                let y = &tape.y1[k];
                let mut gu = vec![0.0; y.len()];
                if let Some(acc) = &acc_v[k] {
                    let mut a = acc.clone();
                    self.fft.inverse(&mut a);
                    for (g, v) in gu.iter_mut().zip(&a) {
                        *g = v.re;
                    }
                }
                if let Some(d) = direct {
                    for (g, v) in gu.iter_mut().zip(d) {
                        *g += v;
                    }
                }
                let gy: Vec<Complex64> = y.iter().zip(&gu).map(|(&z, &g)| modulus_grad(z, eps[1]) * g).collect();
                Some(self.apply_adjoint(gy, &self.taps1[k], 1.0 / p as f64))
            })
            .collect();
        let mut acc_x = vec![ZERO; p];
        for (k, contrib) in layer1.into_iter().enumerate() {
            let Some(contrib) = contrib else { continue };
            for (&(b, _), c) in self.taps1[k].entries.iter().zip(contrib) {
                acc_x[b] += c;
            }
        }
        self.fft.inverse(&mut acc_x);
        for (i, &src) in self.pad_map.iter().enumerate() {
            grad_x[src] += acc_x[i].re;
        }
        grad_x
    }
}
