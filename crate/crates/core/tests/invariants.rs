mod common;

use std::f64::consts::PI;

use common::*;
use proptest::prelude::*;
use tfscatter_core::filterbank::littlewood_paley_report;
use tfscatter_core::scattering::{energy_by_layer, Scattering, ScatteringTensors, Signal, TransformConfig};

fn layer_distance(a: &ScatteringTensors, b: &ScatteringTensors, m: usize) -> f64 {
    a.layers[m]
        .iter()
        .map(|(p, s)| {
            let t = &b.layers[m][p];
            s.hop as f64 * s.values.iter().zip(&t.values).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

fn frame_epsilon(plan: &Scattering) -> f64 {
    let b = plan.banks();
    [&b.layer1, &b.layer2, &b.frequential].iter().map(|fb| littlewood_paley_report(fb).epsilon).fold(0.0, f64::max)
}

#[test]
fn zero_signal_gives_zero_tensors() {
    let plan = small_plan(512, 2, true);
    let t = plan.forward(&Signal::new(vec![0.0; 512], SMALL_RATE).unwrap()).unwrap();
    for layer in &t.layers {
        assert!(layer.values().all(|s| s.values.iter().all(|&v| v == 0.0)));
    }
    assert!(t.averaged.values().all(|s| s.values.iter().all(|&v| v == 0.0)));
    assert_eq!(energy_by_layer(&t), vec![0.0; 3]);
}

#[test]
fn tone_concentrates_in_its_filter() {
    let rate = 44100.0;
    let n = 1 << 16;
    let plan = Scattering::standard(TransformConfig::default(), n, rate, 1, false).unwrap();
    let banks = plan.banks();
    for k in [8, 30, 55] {
        let xi = banks.layer1.filters[k].center();
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * xi * i as f64 / rate).sin()).collect();
        let t = plan.forward(&Signal::new(x, rate).unwrap()).unwrap();
        let total: f64 = t.layers[1].values().map(|s| s.energy()).sum();
        let own = t.layers[1].iter().find(|(p, _)| p.gamma1() == Some(k)).unwrap().1.energy();
        assert!(own / total > 0.5, "filter {k} at {xi:.1} Hz holds {:.3}", own / total);
    }
}

#[test]
fn stored_values_are_nonnegative_and_hops_grow() {
    let plan = small_plan(1024, 2, true);
    let t = plan.forward(&noise(1024, 4, SMALL_RATE)).unwrap();
    for m in 1..=2 {
        for (p, s) in &t.layers[m] {
            assert!(s.values.iter().all(|&v| v >= 0.0));
            let parent = p.parent().unwrap();
            if let Some(ps) = t.layers[m - 1].get(&parent) {
                assert!(s.hop >= ps.hop, "{p}: hop {} below parent {}", s.hop, ps.hop);
            }
        }
    }
}

/// White noise in the middle half, silence around it, so boundary
/// extension plays no part.
fn burst(n: usize, seed: u64, rate: f64) -> Signal {
    let mut x = noise(n, seed, rate);
    for (i, v) in x.samples.iter_mut().enumerate() {
        if i < n / 4 || i >= 3 * n / 4 {
            *v = 0.0;
        }
    }
    x
}

#[test]
fn pyramid_matches_full_rate() {
    let rate = 44100.0;
    let n = 1 << 16;
    let x = burst(n, 9, rate);
    let config = TransformConfig::default();
    let on = Scattering::standard(config, n, rate, 2, true).unwrap().forward(&x).unwrap();
    let off_config = TransformConfig { pyramid: false, ..config };
    let off = Scattering::standard(off_config, n, rate, 2, true).unwrap().forward(&x).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for (p, s) in &on.averaged {
        let r = &off.averaged[p];
        assert_eq!(s.values.len(), r.values.len());
        num += s.values.iter().zip(&r.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        den += r.values.iter().map(|b| b * b).sum::<f64>();
    }
    let rel = (num / den).sqrt();
    assert!(rel <= 1e-3, "pyramid deviation {rel:e}");
}

#[test]
fn averaged_outputs_are_shift_stable() {
    let rate = 44100.0;
    let n = 1 << 16;
    let shift = 8;
    let plan = Scattering::standard(TransformConfig::default(), n, rate, 2, true).unwrap();
    let x = burst(n, 12, rate);
    let mut y = Signal::new(vec![0.0; n], rate).unwrap();
    y.samples[shift..].copy_from_slice(&x.samples[..n - shift]);
    let (tx, ty) = (plan.forward(&x).unwrap(), plan.forward(&y).unwrap());
    let mut worst: f64 = 0.0;
    for (p, s) in &tx.averaged {
        if p.is_empty() {
            continue;
        }
        worst = worst.max(rel_l2(&s.values, &ty.averaged[p].values));
    }
    assert!(worst <= 0.05, "worst averaged change {worst}");
}

#[test]
fn worker_count_does_not_change_outputs() {
    let n = 2048;
    let x = noise(n, 21, SMALL_RATE);
    let one = small_plan(n, 2, true).forward(&x).unwrap();
    let config = TransformConfig { workers: 3, ..small_config() };
    let three = Scattering::standard(config, n, SMALL_RATE, 2, true).unwrap().forward(&x).unwrap();
    for m in 0..3 {
        for (p, s) in &one.layers[m] {
            let r = &three.layers[m][p];
            let scale = s.values.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let diff = s.values.iter().zip(&r.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(diff <= 1e-12 * scale, "{p}: {diff:e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn layers_are_non_expansive(seed_a in 0u64..1000, seed_b in 0u64..1000, gain in 0.01f64..10.0) {
        let n = 512;
        let plan = small_plan(n, 2, true);
        let eps = frame_epsilon(&plan);
        let x = noise(n, seed_a, SMALL_RATE);
        let mut y = noise(n, seed_b + 1000, SMALL_RATE);
        for (v, u) in y.samples.iter_mut().zip(&x.samples) {
            *v = u + gain * 0.1 * *v;
        }
        let d: f64 = x.samples.iter().zip(&y.samples).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let (tx, ty) = (plan.forward(&x).unwrap(), plan.forward(&y).unwrap());
        let d1 = layer_distance(&tx, &ty, 1);
        let d2 = layer_distance(&tx, &ty, 2);
        prop_assert!(d1 <= (1.0 + eps) * d, "layer 1: {} vs {}", d1, d);
        prop_assert!(d2 <= (1.0 + eps) * d1.max(1e-300) * (1.0 + eps), "layer 2: {} vs {}", d2, d1);
    }

    #[test]
    fn energy_never_increases_with_depth(seed in 0u64..10_000) {
        let plan = small_plan(1024, 2, true);
        let eps = frame_epsilon(&plan);
        let e = energy_by_layer(&plan.forward(&noise(1024, seed, SMALL_RATE)).unwrap());
        prop_assert!(e[1] <= e[0] * (1.0 + eps));
        prop_assert!(e[2] <= e[1] * (1.0 + eps));
    }
}
