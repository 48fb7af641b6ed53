use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand};
use tfscatter_core::container::{write_tensors, GridInfo};
use tfscatter_core::energytable::{build_table, lowpass_residual_ppm, render_text, to_csv};
use tfscatter_core::filterbank::{littlewood_paley_report, Banks, Design};
use tfscatter_core::fourier::next_power_of_two;
use tfscatter_core::pathgrammar::{enumerate_paths, PathSpace};
use tfscatter_core::scattering::{Scattering, Signal};
use tfscatter_core::synthesis::{synthesize, trace_to_csv};
use tfscatter_core::Error;

use crate::config::{load_file, split_pair, RunConfig};
use crate::wav::{read_wav, write_wav, BitDepth};
use crate::StageError;

#[derive(Debug, Parser)]
#[command(name = "tfscatter", version, about = "Joint time-frequency scattering, texture resynthesis and energy tables")]
pub struct Cli {
    /// key=value settings file
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one setting; repeatable, applied after --config
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_set)]
    pub set: Vec<(String, String)>,
    /// Worker threads for the transform
    #[arg(long, global = true, env = "TFSCATTER_WORKERS")]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_set(s: &str) -> Result<(String, String), String> {
    split_pair(s)
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scatter a WAV file; write tensors and/or the ppm energy table
    Analyze(AnalyzeArgs),
    /// Resynthesize a texture matching a target's scattering energies
    Synthesize(SynthesizeArgs),
    /// Report the Littlewood-Paley sum of every filterbank
    FrameCheck(FrameCheckArgs),
    /// List the scattering paths, one canonical serialization per line
    Paths(PathsArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// TFSC1 tensor container output
    #[arg(long)]
    pub tensors: Option<PathBuf>,
    /// Energy table CSV output
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Rows of the table printed to stdout
    #[arg(long, default_value_t = 20)]
    pub top: usize,
    /// Include first-layer paths in the table
    #[arg(long)]
    pub first_layer: bool,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for numbered snapshot WAVs (every `snapshot_every` iterations)
    #[arg(long)]
    pub snapshot_dir: Option<PathBuf>,
    /// Stop once E falls this many dB relative to the start (negative)
    #[arg(long, allow_hyphen_values = true)]
    pub match_db: Option<f64>,
    /// Trace CSV; defaults to `<out>.trace.csv`
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "float32")]
    pub bit_depth: BitDepth,
}

#[derive(Debug, Args)]
pub struct FrameCheckArgs {
    /// Sum curves as CSV; one file per bank, named `<stem>.<bank>.csv`
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value_t = 44100.0)]
    pub sample_rate: f64,
    /// Temporal FFT grid size (power of two)
    #[arg(long, default_value_t = 1 << 17)]
    pub grid: usize,
    /// Fail when any calibrated epsilon exceeds this
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct PathsArgs {
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Plain temporal second layer instead of joint paths
    #[arg(long)]
    pub temporal_only: bool,
    #[arg(long, default_value_t = 44100.0)]
    pub sample_rate: f64,
    #[arg(long, default_value_t = 1 << 17)]
    pub grid: usize,
}

/// Layers defaults, the config file, `--set` pairs and `--workers`.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, StageError> {
    let mut config = RunConfig::default();
    if let Some(path) = &cli.config {
        let pairs = load_file(path)?;
        config.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    }
    config.apply(cli.set.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    if let Some(w) = cli.workers {
        config.transform.workers = w;
    }
    Ok(config)
}

fn stage_of(e: &Error, fallback: &'static str) -> &'static str {
    match e {
        Error::Config(_) if fallback == "synthesis" => fallback,
        Error::Config(_) | Error::Resolution(_) => "filterbank",
        Error::UnsupportedDepth(_) | Error::MalformedPaths(_) => "pathgrammar",
        Error::Io(_) => "io",
        _ => fallback,
    }
}

fn tag(stage: &'static str) -> impl Fn(Error) -> StageError {
    move |e| StageError::new(stage_of(&e, stage), e.to_string())
}

fn io_err(path: &FsPath) -> impl Fn(std::io::Error) -> StageError + '_ {
    move |e| StageError::new("io", format!("{}: {e}", path.display()))
}

fn write_file(path: &FsPath, bytes: &[u8]) -> Result<(), StageError> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), StageError> {
    let mut config = resolve_config(cli)?;
    match &cli.command {
        Command::Synthesize(a) => {
            if let Some(n) = a.iterations {
                config.synthesis.iterations = n;
            }
            if let Some(s) = a.seed {
                config.synthesis.seed = s;
            }
            if let Some(d) = a.match_db {
                config.synthesis.target_match_db = d;
            }
        }
        Command::Paths(a) => {
            if let Some(d) = a.max_depth {
                config.max_depth = d;
            }
            if a.temporal_only {
                config.joint = false;
            }
        }
        _ => {}
    }
    config.validate()?;
    let result = match &cli.command {
        Command::Analyze(a) => analyze(&config, a, out, err),
        Command::Synthesize(a) => synthesize_cmd(&config, a, out, err),
        Command::FrameCheck(a) => frame_check(&config, a, out),
        Command::Paths(a) => paths(&config, a, out),
    };
    out.flush().map_err(|e| StageError::new("io", e.to_string()))?;
    result
}

fn console(e: std::io::Error) -> StageError {
    StageError::new("io", format!("stdout: {e}"))
}

/// Clamps the first-layer top edge to the file's Nyquist frequency.
fn fit_to_rate(config: &mut RunConfig, sample_rate: f64, err: &mut dyn Write) {
    let nyquist = sample_rate / 2.0;
    let banks = &mut config.transform.banks;
    if banks.freq_max1 > nyquist {
        let _ = writeln!(
            err,
            "warning: freq_max1 {} Hz exceeds Nyquist at {} Hz; using {} Hz",
            banks.freq_max1, sample_rate, nyquist
        );
        banks.freq_max1 = nyquist;
    }
}

fn plan_for(config: &RunConfig, signal: &Signal) -> Result<Scattering, StageError> {
    Scattering::standard(config.transform, signal.len(), signal.sample_rate, config.max_depth, config.joint)
        .map_err(tag("scattering"))
}

fn analyze(config: &RunConfig, a: &AnalyzeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), StageError> {
    let signal = read_wav(&a.input)?;
    let mut config = config.clone();
    fit_to_rate(&mut config, signal.sample_rate, err);
    let plan = plan_for(&config, &signal)?;
    let tensors = plan.forward(&signal).map_err(tag("scattering"))?;

    if let Some(path) = &a.tensors {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        let grid = GridInfo { padded_len: plan.padded_len() as u64, averaging_scale: config.transform.averaging_scale as u64 };
        write_tensors(&mut w, &tensors, grid).map_err(tag("io"))?;
        w.flush().map_err(io_err(path))?;
    }

    let first_layer = a.first_layer || config.max_depth < 2;
    let rows = build_table(&tensors, plan.banks(), first_layer).map_err(tag("energytable"))?;
    if let Some(path) = &a.csv {
        write_file(path, to_csv(&rows).as_bytes())?;
    }
    let residual = lowpass_residual_ppm(&tensors).map_err(tag("energytable"))?;
    writeln!(out, "{} paths, {} samples at {} Hz", plan.paths().len(), signal.len(), signal.sample_rate).map_err(console)?;
    writeln!(out, "lowpass residual: {residual:.1} ppm").map_err(console)?;
    write!(out, "{}", render_text(&rows[..a.top.min(rows.len())])).map_err(console)?;
    Ok(())
}

fn default_trace_path(out: &FsPath) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".trace.csv");
    PathBuf::from(s)
}

fn synthesize_cmd(
    config: &RunConfig,
    a: &SynthesizeArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), StageError> {
    let target = read_wav(&a.target)?;
    let mut config = config.clone();
    fit_to_rate(&mut config, target.sample_rate, err);
    let plan = plan_for(&config, &target)?;
    let trace_path = a.trace.clone().unwrap_or_else(|| default_trace_path(&a.out));

    if let Some(dir) = &a.snapshot_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut snapshot_error = None;
    let on_snapshot = |iteration: usize, x: &Signal| {
        let Some(dir) = &a.snapshot_dir else { return };
        if snapshot_error.is_some() {
            return;
        }
        let path = dir.join(format!("snapshot_{iteration:05}.wav"));
        if let Err(e) = write_wav(&path, &x.samples, x.sample_rate, a.bit_depth) {
            snapshot_error = Some(e);
        }
    };

    let (signal, trace) = match synthesize(&target, &config.synthesis, &plan, on_snapshot) {
        Ok(r) => r,
        Err(Error::Divergence { iteration, error, initial, trace }) => {
            write_file(&trace_path, trace_to_csv(&trace).as_bytes())?;
            return Err(StageError::new(
                "synthesis",
                format!("diverged at iteration {iteration}: E = {error:.6e} vs E0 = {initial:.6e}"),
            ));
        }
        Err(e) => return Err(tag("synthesis")(e)),
    };
    if let Some(e) = snapshot_error {
        return Err(e);
    }
    write_wav(&a.out, &signal.samples, signal.sample_rate, a.bit_depth)?;
    write_file(&trace_path, trace_to_csv(&trace).as_bytes())?;

    let first = trace[0].error;
    let last = trace.last().map(|t| (t.iteration, t.error)).unwrap_or((0, first));
    let db = if first > 0.0 && last.1 > 0.0 { 20.0 * (last.1 / first).log10() } else { f64::NEG_INFINITY };
    writeln!(out, "iterations: {}", last.0).map_err(console)?;
    writeln!(out, "E: {first:.6e} -> {:.6e} ({db:.2} dB)", last.1).map_err(console)?;
    Ok(())
}

fn bank_stem(path: &FsPath, bank: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{stem}.{bank}.{ext}"))
}

fn frame_check(config: &RunConfig, a: &FrameCheckArgs, out: &mut dyn Write) -> Result<(), StageError> {
    let grid = a.grid;
    let banks = Banks::build(&config.transform.banks, grid, a.sample_rate).map_err(tag("filterbank"))?;
    let raw_config = {
        let mut b = config.transform.banks;
        b.design = Design { calibrate: false, ..b.design };
        b
    };
    let raw = Banks::build(&raw_config, grid, a.sample_rate).map_err(tag("filterbank"))?;
    let named = [
        ("layer1", &banks.layer1, &raw.layer1, "Hz"),
        ("layer2", &banks.layer2, &raw.layer2, "Hz"),
        ("frequential", &banks.frequential, &raw.frequential, "c/o"),
    ];
    let mut worst: f64 = 0.0;
    for (name, fb, raw_fb, unit) in named {
        let report = littlewood_paley_report(fb);
        let raw_report = littlewood_paley_report(raw_fb);
        worst = worst.max(report.epsilon);
        writeln!(
            out,
            "{name}: filters={} grid={} band=[{}, {}] {unit} epsilon={:.3e} uncalibrated_epsilon={:.3e}",
            fb.len(),
            fb.grid_size,
            report.covered_band.0,
            report.covered_band.1,
            report.epsilon,
            raw_report.epsilon
        )
        .map_err(console)?;
        if let Some(path) = &a.csv {
            write_file(&bank_stem(path, name), report.to_csv().as_bytes())?;
        }
    }
    if worst > a.tolerance {
        return Err(StageError::new("filterbank", format!("epsilon {worst:.3e} exceeds tolerance {}", a.tolerance)));
    }
    Ok(())
}

fn paths(config: &RunConfig, a: &PathsArgs, out: &mut dyn Write) -> Result<(), StageError> {
    let banks = Banks::build(&config.transform.banks, next_power_of_two(a.grid), a.sample_rate).map_err(tag("filterbank"))?;
    let list = enumerate_paths(config.max_depth, &PathSpace::of(&banks), config.joint).map_err(tag("pathgrammar"))?;
    let mut w = BufWriter::new(out);
    for p in &list {
        writeln!(w, "{}", p.serialize()).map_err(console)?;
    }
    w.flush().map_err(console)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("tfscatter").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.conf");
        std::fs::write(&file, "seed = 5\niterations = 7\nworkers = 3\n").unwrap();
        let f = file.to_str().unwrap();
        let cli = parse(&["--config", f, "--set", "seed=6", "paths"]);
        let c = resolve_config(&cli).unwrap();
        assert_eq!((c.synthesis.seed, c.synthesis.iterations), (6, 7));
        let cli = parse(&["--config", f, "--workers", "2", "--set", "workers=4", "paths"]);
        assert_eq!(resolve_config(&cli).unwrap().transform.workers, 2);
    }

    #[test]
    fn default_trace_next_to_output() {
        assert_eq!(default_trace_path(FsPath::new("/a/b.wav")), PathBuf::from("/a/b.wav.trace.csv"));
        assert_eq!(bank_stem(FsPath::new("/a/lp.csv"), "layer2"), PathBuf::from("/a/lp.layer2.csv"));
    }

    #[test]
    fn paths_depth_one() {
        let cli = parse(&["paths", "--max-depth", "1"]);
        let mut out = Vec::new();
        run(&cli, &mut out, &mut Vec::new()).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "");
        assert_eq!(lines[1], "g1=0");
        assert!(lines[1..].iter().all(|l| l.starts_with("g1=") && !l.contains(';')));
    }

    #[test]
    fn unsupported_depth_is_pathgrammar_error() {
        let cli = parse(&["paths", "--max-depth", "3"]);
        let e = run(&cli, &mut Vec::new(), &mut Vec::new()).unwrap_err();
        assert_eq!(e.stage, "pathgrammar");
    }
}
