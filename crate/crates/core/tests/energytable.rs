mod common;

use std::f64::consts::PI;

use common::*;
use tfscatter_core::energytable::{build_table, lowpass_residual_ppm, path_energy_fraction, row_order, to_ppm};
use tfscatter_core::filterbank::littlewood_paley_report;
use tfscatter_core::scattering::{Scattering, Signal, TransformConfig};

const RATE: f64 = 44100.0;

fn am_tone(seconds: f64) -> Signal {
    let n = (seconds * RATE) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / RATE;
            0.5 * (1.0 + 0.8 * (2.0 * PI * 4.0 * t).sin()) * (2.0 * PI * 1000.0 * t).sin()
        })
        .collect();
    Signal::new(samples, RATE).unwrap()
}

#[test]
fn am_tone_tops_the_table_at_its_carrier_and_rate() {
    let x = am_tone(2.0);
    let config = TransformConfig::default();
    let plan = Scattering::standard(config, x.len(), RATE, 2, true).unwrap();
    let t = plan.forward(&x).unwrap();
    let rows = build_table(&t, plan.banks(), false).unwrap();
    let top = &rows[0];
    let steps = |a: f64, b: f64, q: f64| (a / b).log2().abs() * q;
    assert!(steps(top.acoustic_freq, 1000.0, config.banks.quality1) <= 1.0, "{top:?}");
    assert!(steps(top.rate.unwrap(), 4.0, config.banks.quality2) <= 1.0, "{top:?}");
    for r in &rows {
        let rate = r.rate.unwrap();
        assert!(rate < r.acoustic_freq);
        assert!((1.0..=1000.0).contains(&rate));
        assert!((20.0..=20000.0).contains(&r.acoustic_freq));
    }
}

#[test]
fn table_is_a_sorted_permutation_of_all_paths() {
    let n = 1 << 16;
    let plan = Scattering::standard(TransformConfig::default(), n, RATE, 2, true).unwrap();
    let t = plan.forward(&noise(n, 77, RATE)).unwrap();
    let rows = build_table(&t, plan.banks(), true).unwrap();
    assert!(rows.windows(2).all(|w| row_order(&w[0], &w[1]).is_le()));
    let mut expected: Vec<(String, f64)> = t.layers[1..]
        .iter()
        .flat_map(|l| l.keys())
        .map(|p| (p.serialize(), to_ppm(path_energy_fraction(&t, p).unwrap())))
        .filter(|(_, ppm)| *ppm > 0.0)
        .collect();
    let mut got: Vec<(String, f64)> = rows.iter().map(|r| (r.path.serialize(), r.ppm)).collect();
    expected.sort_by(|a, b| a.0.cmp(&b.0));
    got.sort_by(|a, b| a.0.cmp(&b.0));
    assert_eq!(got, expected);
    assert!((plan.banks().layer1.filters[0].center() - 20000.0).abs() < 1e-9);

    let eps = littlewood_paley_report(&plan.banks().layer1).epsilon;
    let first: f64 = rows.iter().filter(|r| r.rate.is_none()).map(|r| r.ppm).sum();
    let total = first + lowpass_residual_ppm(&t).unwrap();
    assert!((0.8e6..=1.05e6).contains(&total), "{total}");
    assert!(rows.iter().all(|r| r.ppm >= 0.0 && r.ppm <= 1e6 * (1.0 + eps)));
}

#[test]
fn silent_input_gives_an_empty_table() {
    let plan = small_plan(512, 2, true);
    let t = plan.forward(&Signal::new(vec![0.0; 512], SMALL_RATE).unwrap()).unwrap();
    assert!(build_table(&t, plan.banks(), true).unwrap().is_empty());
    assert!(lowpass_residual_ppm(&t).is_err());
}
