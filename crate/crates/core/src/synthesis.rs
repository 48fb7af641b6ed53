//! Texture resynthesis: gradient descent on the squared distance between
//! per-path scattering energies, from a Brownian-noise start.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::pathgrammar::Path;
use crate::scattering::{Cotangent, ForwardOptions, Scattering, ScatteringTensors, Signal, Tape};

/// Layers entering the error functional.
pub const LOSS_LAYERS: [usize; 2] = [1, 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisConfig {
    pub iterations: usize,
    /// First step length, relative to `|x0| / |grad E^2(x0)|`.
    pub step_size: f64,
    /// Step multiplier after a rejected (or, without rejection, an
    /// uphill) step.
    pub step_decay: f64,
    /// Step multiplier after an accepted step.
    pub step_growth: f64,
    pub seed: u64,
    /// Modulus smoothing in the reverse pass, relative to each layer's RMS.
    pub smoothing_eps_rel: f64,
    /// Snapshot period in iterations; 0 disables snapshots.
    pub snapshot_every: usize,
    /// Stop once `20 log10(E / E0)` falls to this level.
    pub target_match_db: f64,
    /// Retry uphill steps with a shorter step instead of taking them.
    pub step_rejection: bool,
    /// Consecutive rejections tolerated before giving up.
    pub max_rejections: usize,
    /// Weight of an additional squared distance between averaged outputs;
    /// 0 disables it.
    pub time_resolved_weight: f64,
    /// Weight each layer's term by the inverse of the target's squared
    /// layer energy norm, so both layers steer the descent. Off gives every
    /// path weight one.
    pub balance_layers: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            iterations: 200,
            step_size: 0.1,
            step_decay: 0.5,
            step_growth: 1.2,
            seed: 0,
            smoothing_eps_rel: 1e-4,
            snapshot_every: 0,
            target_match_db: -40.0,
            step_rejection: true,
            max_rejections: 30,
            time_resolved_weight: 0.0,
            balance_layers: true,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::Config(format!("step size {} must be positive", self.step_size)));
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return Err(Error::Config(format!("step decay {} must lie in (0, 1]", self.step_decay)));
        }
        if !(self.step_growth >= 1.0) {
            return Err(Error::Config(format!("step growth {} must be >= 1", self.step_growth)));
        }
        if !(self.smoothing_eps_rel > 0.0) {
            return Err(Error::Config(format!("smoothing {} must be positive", self.smoothing_eps_rel)));
        }
        if !(self.time_resolved_weight >= 0.0) {
            return Err(Error::Config("time-resolved weight must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One line of the descent trace. `per_layer` holds `E1, E2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub error: f64,
    pub per_layer: [f64; 2],
    pub step: f64,
}

pub fn trace_to_csv(trace: &[TraceEntry]) -> String {
    let mut out = String::from("iter,E,E1,E2\n");
    for e in trace {
        out.push_str(&format!("{},{:e},{:e},{:e}\n", e.iteration, e.error, e.per_layer[0], e.per_layer[1]));
    }
    out
}

/// Cumulative sum of seeded unit Gaussian noise.
pub fn brownian_path(length: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    (0..length)
        .map(|_| {
            let step: f64 = StandardNormal.sample(&mut rng);
            acc += step;
            acc
        })
        .collect()
}

/// De-meaned Brownian path rescaled to `target_rms`. A single sample
/// de-means to zero and stays zero.
pub fn init_brownian(length: usize, seed: u64, target_rms: f64, sample_rate: f64) -> Result<Signal> {
    if length == 0 {
        return Err(Error::Config("length must be at least 1".into()));
    }
    let mut x = brownian_path(length, seed);
    let mean = x.iter().sum::<f64>() / length as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / length as f64).sqrt();
    if rms > 0.0 {
        let scale = target_rms / rms;
        x.iter_mut().for_each(|v| *v *= scale);
    }
    Signal::new(x, sample_rate)
}

fn layer_energies(t: &ScatteringTensors, m: usize) -> Option<&BTreeMap<Path, crate::scattering::PathSeries>> {
    t.layers.get(m)
}

/// `(E, [E1, E2])` with `E_m^2 = sum over layer-m paths of
/// (energy - target energy)^2`.
pub fn error_functional(current: &ScatteringTensors, target: &ScatteringTensors) -> Result<(f64, [f64; 2])> {
    let mut per_layer = [0.0; 2];
    for (slot, &m) in LOSS_LAYERS.iter().enumerate() {
        let (Some(a), Some(b)) = (layer_energies(current, m), layer_energies(target, m)) else {
            if layer_energies(current, m).map_or(0, |l| l.len()) != layer_energies(target, m).map_or(0, |l| l.len()) {
                return Err(Error::IncompatibleTensors(format!("layer {m} present on one side only")));
            }
            continue;
        };
        if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
            return Err(Error::IncompatibleTensors(format!("layer {m} path sets differ")));
        }
        let sq: f64 = a.values().zip(b.values()).map(|(x, y)| (x.energy() - y.energy()).powi(2)).sum();
        per_layer[slot] = sq.sqrt();
    }
    let e = (per_layer[0].powi(2) + per_layer[1].powi(2)).sqrt();
    Ok((e, per_layer))
}

fn averaged_distance(current: &ScatteringTensors, target: &ScatteringTensors) -> Result<f64> {
    let mut total = 0.0;
    for (p, s) in &current.averaged {
        let t = target
            .averaged
            .get(p)
            .ok_or_else(|| Error::IncompatibleTensors(format!("averaged path `{p}` missing from target")))?;
        total += s.values.iter().zip(&t.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(total)
}

/// Forward evaluation of a candidate.
pub struct Evaluation {
    pub tensors: ScatteringTensors,
    pub tape: Tape,
    /// `E` under the problem's layer weights, `sqrt(sum_m w_m E_m^2)`.
    pub error: f64,
    /// `sqrt(w_m) E_m`.
    pub per_layer: [f64; 2],
    /// `E^2`, plus the weighted time-resolved term when enabled.
    pub objective: f64,
}

/// Evaluates candidates against a fixed target on one plan.
pub struct SynthesisProblem<'a> {
    pub plan: &'a Scattering,
    pub target: ScatteringTensors,
    pub time_resolved_weight: f64,
    /// Per-layer weights `w_m` of the descent objective.
    pub layer_weights: [f64; 2],
}

impl<'a> SynthesisProblem<'a> {
    pub fn new(plan: &'a Scattering, target: &Signal) -> Result<SynthesisProblem<'a>> {
        Ok(SynthesisProblem::from_tensors(plan, plan.forward(target)?))
    }

    pub fn from_tensors(plan: &'a Scattering, target: ScatteringTensors) -> SynthesisProblem<'a> {
        SynthesisProblem { plan, target, time_resolved_weight: 0.0, layer_weights: [1.0; 2] }
    }

    /// Sets `w_m = 1 / sum of squared target energies in layer m`.
    pub fn balance_layers(&mut self) {
        for (slot, &m) in LOSS_LAYERS.iter().enumerate() {
            let norm_sq: f64 = self.target.layers.get(m).map_or(0.0, |l| l.values().map(|s| s.energy().powi(2)).sum());
            self.layer_weights[slot] = if norm_sq > 0.0 { 1.0 / norm_sq } else { 1.0 };
        }
    }

    pub fn evaluate(&self, candidate: &Signal) -> Result<Evaluation> {
        let opts = ForwardOptions { skip_averaging: self.time_resolved_weight == 0.0, ..ForwardOptions::default() };
        self.evaluate_with(candidate, &opts)
    }

    pub fn evaluate_with(&self, candidate: &Signal, opts: &ForwardOptions) -> Result<Evaluation> {
        let (tensors, tape) = self.plan.forward_with(candidate, opts)?;
        let (_, raw) = error_functional(&tensors, &self.target)?;
        let per_layer = [self.layer_weights[0].sqrt() * raw[0], self.layer_weights[1].sqrt() * raw[1]];
        let error = per_layer[0].hypot(per_layer[1]);
        let mut objective = error * error;
        if self.time_resolved_weight > 0.0 {
            objective += self.time_resolved_weight * averaged_distance(&tensors, &self.target)?;
        }
        Ok(Evaluation { tensors, tape, error, per_layer, objective })
    }

    /// Gradient of the objective at an evaluated candidate.
    pub fn gradient_at(&self, eval: &Evaluation, smoothing_eps_rel: f64) -> Vec<f64> {
        let mut cot = Cotangent::default();
        let mut eps = [0.0; 3];
        for (slot, &m) in LOSS_LAYERS.iter().enumerate() {
            let layer = &eval.tensors.layers[m];
            let target = &self.target.layers[m];
            let (sum, count) =
                layer.values().fold((0.0, 0usize), |(s, c), series| (s + series.values.iter().map(|v| v * v).sum::<f64>(), c + series.values.len()));
            eps[m] = if count > 0 { smoothing_eps_rel * (sum / count as f64).sqrt() } else { 0.0 };
            for (path, series) in layer {
                let w = 2.0 * self.layer_weights[slot] * (series.energy() - target[path].energy());
                let scale = w * 2.0 * series.hop as f64;
                cot.series.insert(path.clone(), series.values.iter().map(|v| scale * v).collect());
            }
        }
        if self.time_resolved_weight > 0.0 {
            for (path, s) in &eval.tensors.averaged {
                let t = &self.target.averaged[path];
                let g = s.values.iter().zip(&t.values).map(|(a, b)| 2.0 * self.time_resolved_weight * (a - b)).collect();
                cot.averaged.insert(path.clone(), g);
            }
        }
        self.plan.backward(&eval.tape, &cot, eps)
    }

    pub fn gradient(&self, candidate: &Signal, smoothing_eps_rel: f64) -> Result<Vec<f64>> {
        let eval = self.evaluate(candidate)?;
        Ok(self.gradient_at(&eval, smoothing_eps_rel))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Weighted norm of the target's per-path energies.
fn scale_of(target: &ScatteringTensors, weights: [f64; 2]) -> f64 {
    LOSS_LAYERS
        .iter()
        .zip(weights)
        .filter_map(|(&m, w)| target.layers.get(m).map(|l| w * l.values().map(|s| s.energy().powi(2)).sum::<f64>()))
        .sum::<f64>()
        .sqrt()
}

/// Gradient descent from Brownian noise towards the target's per-path
/// energies. Trace entry 0 is the initialization; entry `i` follows the
/// `i`-th accepted update. `on_snapshot` receives the candidate every
/// `snapshot_every` iterations.
pub fn synthesize(
    target: &Signal,
    config: &SynthesisConfig,
    plan: &Scattering,
    mut on_snapshot: impl FnMut(usize, &Signal),
) -> Result<(Signal, Vec<TraceEntry>)> {
    config.validate()?;
    if target.samples.iter().all(|&v| v == 0.0) {
        return Err(Error::Config("target signal is silent".into()));
    }
    let mut problem = SynthesisProblem::new(plan, target)?;
    problem.time_resolved_weight = config.time_resolved_weight;
    if config.balance_layers {
        problem.balance_layers();
    }
    let scale = scale_of(&problem.target, problem.layer_weights);

    let mut x = init_brownian(target.len(), config.seed, target.rms(), target.sample_rate)?;
    let mut eval = problem.evaluate(&x)?;
    let e0 = eval.error;
    let mut trace = vec![TraceEntry { iteration: 0, error: e0, per_layer: eval.per_layer, step: 0.0 }];
    if e0 <= 1e-12 * scale {
        return Ok((x, trace));
    }
    let mut grad = problem.gradient_at(&eval, config.smoothing_eps_rel);
    let gnorm = norm(&grad);
    if gnorm == 0.0 {
        return Ok((x, trace));
    }
    let mut step = config.step_size * norm(&x.samples) / gnorm;

    for iteration in 1..=config.iterations {
        let mut rejections = 0;
        let accepted = loop {
            let samples: Vec<f64> = x.samples.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
            let candidate = Signal { samples, sample_rate: x.sample_rate };
            let next = problem.evaluate(&candidate)?;
            let finite = next.objective.is_finite();
            if finite && next.objective <= eval.objective {
                break Some((candidate, next));
            }
            if config.step_rejection {
                rejections += 1;
                step *= config.step_decay;
                if rejections > config.max_rejections {
                    break None;
                }
                continue;
            }
            if !finite || next.error > 1e3 * e0 {
                trace.push(TraceEntry { iteration, error: next.error, per_layer: next.per_layer, step });
                return Err(Error::Divergence { iteration, error: next.error, initial: e0, trace });
            }
            step *= config.step_decay;
            break Some((candidate, next));
        };
        let Some((candidate, next)) = accepted else { break };
        let uphill = next.objective > eval.objective;
        x = candidate;
        eval = next;
        trace.push(TraceEntry { iteration, error: eval.error, per_layer: eval.per_layer, step });
        if !uphill {
            step *= config.step_growth;
        }
        if config.snapshot_every > 0 && iteration % config.snapshot_every == 0 {
            on_snapshot(iteration, &x);
        }
        if eval.error == 0.0 || 20.0 * (eval.error / e0).log10() <= config.target_match_db {
            break;
        }
        if iteration < config.iterations {
            grad = problem.gradient_at(&eval, config.smoothing_eps_rel);
        }
    }
    Ok((x, trace))
}
