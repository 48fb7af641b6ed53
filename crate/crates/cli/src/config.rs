//! Run settings layered as defaults < key=value file < `--set` pairs <
//! dedicated flags.

use std::path::Path;

use tfscatter_core::scattering::TransformConfig;
use tfscatter_core::synthesis::SynthesisConfig;

use crate::StageError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub transform: TransformConfig,
    pub synthesis: SynthesisConfig,
    pub max_depth: usize,
    pub joint: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { transform: TransformConfig::default(), synthesis: SynthesisConfig::default(), max_depth: 2, joint: true }
    }
}

pub const KEYS: &[&str] = &[
    "quality1",
    "freq_min1",
    "freq_max1",
    "quality2",
    "freq_min2",
    "freq_max2",
    "quality_fr",
    "scale_max",
    "scale_min",
    "bandwidth_factor",
    "averaging_scale",
    "oversampling",
    "pyramid",
    "workers",
    "max_depth",
    "joint",
    "iterations",
    "step_size",
    "step_decay",
    "step_growth",
    "seed",
    "smoothing_eps_rel",
    "snapshot_every",
    "match_db",
    "step_rejection",
    "time_resolved_weight",
    "balance_layers",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, StageError> {
    value.parse().map_err(|_| StageError::new("config", format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, StageError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(StageError::new("config", format!("{key}: expected a boolean, got {value:?}"))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), StageError> {
        let banks = &mut self.transform.banks;
        let synth = &mut self.synthesis;
        match key {
            "quality1" => banks.quality1 = parse(key, value)?,
            "freq_min1" => banks.freq_min1 = parse(key, value)?,
            "freq_max1" => banks.freq_max1 = parse(key, value)?,
            "quality2" => banks.quality2 = parse(key, value)?,
            "freq_min2" => banks.freq_min2 = parse(key, value)?,
            "freq_max2" => banks.freq_max2 = parse(key, value)?,
            "quality_fr" => banks.quality_fr = parse(key, value)?,
            "scale_max" => banks.scale_max = parse(key, value)?,
            "scale_min" => banks.scale_min = parse(key, value)?,
            "bandwidth_factor" => banks.design.bandwidth_factor = parse(key, value)?,
            "averaging_scale" => self.transform.averaging_scale = parse(key, value)?,
            "oversampling" => self.transform.oversampling = parse(key, value)?,
            "pyramid" => self.transform.pyramid = parse_bool(key, value)?,
            "workers" => self.transform.workers = parse(key, value)?,
            "max_depth" => self.max_depth = parse(key, value)?,
            "joint" => self.joint = parse_bool(key, value)?,
            "iterations" => synth.iterations = parse(key, value)?,
            "step_size" => synth.step_size = parse(key, value)?,
            "step_decay" => synth.step_decay = parse(key, value)?,
            "step_growth" => synth.step_growth = parse(key, value)?,
            "seed" => synth.seed = parse(key, value)?,
            "smoothing_eps_rel" => synth.smoothing_eps_rel = parse(key, value)?,
            "snapshot_every" => synth.snapshot_every = parse(key, value)?,
            "match_db" => synth.target_match_db = parse(key, value)?,
            "step_rejection" => synth.step_rejection = parse_bool(key, value)?,
            "time_resolved_weight" => synth.time_resolved_weight = parse(key, value)?,
            "balance_layers" => synth.balance_layers = parse_bool(key, value)?,
            _ => return Err(StageError::new("config", format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<(), StageError> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), StageError> {
        if self.transform.workers == 0 {
            return Err(StageError::new("config", "workers must be >= 1"));
        }
        if self.transform.averaging_scale == 0 {
            return Err(StageError::new("config", "averaging_scale must be >= 1"));
        }
        if !(self.transform.oversampling >= 1.0) {
            return Err(StageError::new("config", "oversampling must be >= 1"));
        }
        let b = &self.transform.banks;
        if !(b.freq_min1 > 0.0 && b.freq_min1 < b.freq_max1) || !(b.freq_min2 > 0.0 && b.freq_min2 < b.freq_max2) {
            return Err(StageError::new("config", "band edges must satisfy 0 < freq_min < freq_max"));
        }
        self.synthesis.validate().map_err(|e| StageError::new("config", e.to_string()))
    }
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, StageError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = split_pair(line).map_err(|m| StageError::new("config", format!("line {}: {m}", n + 1)))?;
        out.push((k, v));
    }
    Ok(out)
}

pub fn split_pair(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(format!("missing key in {s:?}"));
    }
    Ok((k.to_string(), v.to_string()))
}

pub fn load_file(path: &Path) -> Result<Vec<(String, String)>, StageError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| StageError::new("config", format!("{}: {e}", path.display())))?;
    parse_pairs(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_is_settable() {
        let mut c = RunConfig::default();
        for k in KEYS {
            let v = match *k {
                "pyramid" | "joint" | "step_rejection" | "balance_layers" => "false",
                "match_db" => "-30",
                _ => "3",
            };
            c.set(k, v).unwrap();
        }
        assert_eq!(c.transform.banks.quality1, 3.0);
        assert_eq!(c.synthesis.target_match_db, -30.0);
        assert!(!c.joint);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RunConfig::default().set("qualty1", "8").unwrap_err();
        assert_eq!(err.stage, "config");
        assert!(err.message.contains("qualty1"));
    }

    #[test]
    fn file_syntax() {
        let pairs = parse_pairs("# header\nquality1 = 4  # trailing\n\n seed=9\n").unwrap();
        assert_eq!(pairs, vec![("quality1".into(), "4".into()), ("seed".into(), "9".into())]);
        assert!(parse_pairs("quality1 4").is_err());
    }

    #[test]
    fn later_pairs_win() {
        let mut c = RunConfig::default();
        c.apply([("seed", "1"), ("seed", "2")]).unwrap();
        assert_eq!(c.synthesis.seed, 2);
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        c.set("workers", "0").unwrap();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.set("freq_min1", "30000").unwrap();
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }
}
