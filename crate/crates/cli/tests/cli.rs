use std::f64::consts::PI;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use tfscatter_cli::wav::{write_wav, BitDepth};
use tfscatter_core::container::read_tensors;
use tfscatter_core::energytable::parse_csv;

fn tfscatter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfscatter")).args(args).env_remove("TFSCATTER_WORKERS").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tone(path: &Path, freq: f64, seconds: f64, rate: f64) {
    let n = (seconds * rate) as usize;
    let x: Vec<f64> = (0..n).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / rate).sin()).collect();
    write_wav(path, &x, rate, BitDepth::Pcm16).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn frame_check_passes_on_default_banks() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("lp.csv");
    let o = tfscatter(&["frame-check", "--csv", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let eps: Vec<f64> = text
        .lines()
        .filter_map(|l| l.split_whitespace().find_map(|w| w.strip_prefix("epsilon=")))
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(eps.len(), 3);
    assert!(eps.iter().all(|&e| e <= 0.05));
    for bank in ["layer1", "layer2", "frequential"] {
        let body = std::fs::read_to_string(dir.path().join(format!("lp.{bank}.csv"))).unwrap();
        assert!(body.starts_with("omega_hz,sum\n"));
        assert!(body.lines().count() > 100);
    }
}

#[test]
fn frame_check_fails_above_tolerance() {
    let o = tfscatter(&["frame-check", "--set", "quality1=1", "--tolerance", "0"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error[filterbank]:"));
}

#[test]
fn analyze_tone_tops_at_its_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("a440.wav");
    let csv = dir.path().join("table.csv");
    let tensors = dir.path().join("t.tfsc");
    tone(&wav, 440.0, 1.0, 44100.0);
    let o = tfscatter(&["analyze", "--input", s(&wav), "--csv", s(&csv), "--tensors", s(&tensors), "--top", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = parse_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    let top = &rows[0];
    assert!((top.acoustic_freq / 440.0).log2().abs() * 8.0 <= 1.0, "{top:?}");

    let (t, grid) = read_tensors(&mut BufReader::new(File::open(&tensors).unwrap())).unwrap();
    assert_eq!(t.signal_len, 44100);
    assert_eq!(grid.padded_len, 1 << 17);
    assert_eq!(grid.averaging_scale, 8192);
    assert_eq!(t.layers[1].len(), 80);
}

#[test]
fn analyze_clamps_band_to_nyquist() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("low.wav");
    tone(&wav, 300.0, 2.0, 22050.0);
    let o = tfscatter(&["analyze", "--input", s(&wav), "--first-layer", "--set", "max_depth=1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning: freq_max1"));
}

#[test]
fn synthesize_writes_output_trace_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.wav");
    let out = dir.path().join("out.wav");
    let snaps = dir.path().join("snaps");
    tone(&target, 1000.0, 65536.0 / 44100.0, 44100.0);
    let o = tfscatter(&[
        "synthesize",
        "--target",
        s(&target),
        "--out",
        s(&out),
        "--iterations",
        "2",
        "--seed",
        "3",
        "--snapshot-dir",
        s(&snaps),
        "--match-db",
        "-60",
        "--bit-depth",
        "16",
        "--set",
        "snapshot_every=1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reader = hound::WavReader::open(&out).unwrap();
    assert_eq!(reader.spec().bits_per_sample, 16);
    assert_eq!(reader.len(), 65536);
    let trace = std::fs::read_to_string(dir.path().join("out.wav.trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "iter,E,E1,E2");
    assert_eq!(lines.len(), 4);
    assert!(snaps.join("snapshot_00001.wav").exists());
    assert!(snaps.join("snapshot_00002.wav").exists());
}

#[test]
fn paths_lists_canonical_serializations() {
    let o = tfscatter(&["paths", "--temporal-only"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "");
    assert_eq!(lines[1], "g1=0");
    assert!(lines.iter().any(|l| l.starts_with("g1=") && l.contains(";g2=") && !l.contains("fscale")));
    let joint = String::from_utf8(tfscatter(&["paths"]).stdout).unwrap();
    assert!(joint.lines().filter(|l| l.contains(";g2=")).all(|l| l.contains(";fscale=") && l.contains(";spin=")));
}

#[test]
fn errors_carry_a_stage_prefix() {
    let cases: [(&[&str], &str); 5] = [
        (&["paths", "--max-depth", "3"], "error[pathgrammar]:"),
        (&["paths", "--set", "qualty1=8"], "error[config]:"),
        (&["analyze", "--input", "/nonexistent/x.wav"], "error[io]:"),
        (&["paths", "--set", "workers=0"], "error[config]:"),
        (&["analyze"], "error[args]:"),
    ];
    for (args, prefix) in cases {
        let o = tfscatter(args);
        assert!(!o.status.success(), "{args:?}");
        let err = stderr(&o);
        assert!(err.starts_with(prefix), "{args:?}: {err}");
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# depth from file\nmax_depth = 1\n").unwrap();
    let o = tfscatter(&["--config", s(&conf), "paths"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 81);
    let o = tfscatter(&["--config", s(&conf), "paths", "--max-depth", "2", "--temporal-only"]);
    assert!(String::from_utf8(o.stdout).unwrap().lines().count() > 81);
}

#[test]
fn unsupported_wav_is_a_wav_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u8.wav");
    let spec = hound::WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 8, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(&path, spec).unwrap();
    w.write_sample(1i8).unwrap();
    w.finalize().unwrap();
    let o = tfscatter(&["analyze", "--input", s(&path)]);
    assert!(stderr(&o).starts_with("error[wav]:"));
}

#[test]
fn silent_target_is_a_synthesis_error() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("silent.wav");
    write_wav(&target, &vec![0.0; 1 << 16], 44100.0, BitDepth::Pcm16).unwrap();
    let out = dir.path().join("out.wav");
    let o = tfscatter(&["synthesize", "--target", s(&target), "--out", s(&out), "--iterations", "1"]);
    assert!(stderr(&o).starts_with("error[synthesis]:"), "{}", stderr(&o));
    assert!(!out.exists());
}
