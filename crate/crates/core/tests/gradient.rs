mod common;

use common::*;
use tfscatter_core::scattering::Signal;
use tfscatter_core::synthesis::SynthesisProblem;

fn finite_difference(problem: &SynthesisProblem, x: &Signal, h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut plus = x.clone();
            plus.samples[i] += h;
            let mut minus = x.clone();
            minus.samples[i] -= h;
            let ep = problem.evaluate(&plus).unwrap().objective;
            let em = problem.evaluate(&minus).unwrap().objective;
            (ep - em) / (2.0 * h)
        })
        .collect()
}

fn check(depth: usize, joint: bool, seed: u64) -> f64 {
    let n = 512;
    let plan = small_plan(n, depth, joint);
    let target = noise(n, 1000 + seed, SMALL_RATE);
    let problem = SynthesisProblem::new(&plan, &target).unwrap();
    let x = noise(n, seed, SMALL_RATE);
    let g = problem.gradient(&x, 1e-8).unwrap();
    let fd = finite_difference(&problem, &x, 1e-4 * x.rms());
    rel_l2(&g, &fd)
}

#[test]
fn depth_one_matches_finite_differences() {
    let err = check(1, false, 1);
    assert!(err <= 1e-3, "relative error {err}");
}

#[test]
fn depth_two_joint_matches_finite_differences() {
    let err = check(2, true, 2);
    assert!(err <= 1e-3, "relative error {err}");
}

#[test]
fn depth_two_temporal_matches_finite_differences() {
    let err = check(2, false, 3);
    assert!(err <= 1e-3, "relative error {err}");
}
