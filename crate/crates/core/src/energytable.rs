//! Per-path energies as parts per million of the input energy, with
//! physical-unit columns.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::filterbank::{Banks, Spin};
use crate::pathgrammar::Path;
use crate::scattering::ScatteringTensors;

pub const CSV_HEADER: &str = "ppm,acoustic_freq_hz,rate_hz,scale_cpo,path";

/// One table line. `rate` and `scale` are absent for first-layer paths;
/// the sign of `scale` is the spin.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub ppm: f64,
    pub acoustic_freq: f64,
    pub rate: Option<f64>,
    pub scale: Option<f64>,
    pub path: Path,
}

pub fn to_ppm(fraction: f64) -> f64 {
    fraction * 1e6
}

/// Path energy over input energy.
pub fn path_energy_fraction(tensors: &ScatteringTensors, p: &Path) -> Result<f64> {
    if tensors.input_energy <= 0.0 {
        return Err(Error::UndefinedRatio);
    }
    let energy = tensors
        .path_energy(p)
        .ok_or_else(|| Error::IncompatibleTensors(format!("path `{p}` is not in the tensors")))?;
    Ok(energy / tensors.input_energy)
}

/// Lowpass residual over input energy, in ppm.
pub fn lowpass_residual_ppm(tensors: &ScatteringTensors) -> Result<f64> {
    if tensors.input_energy <= 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(to_ppm(tensors.lowpass_residual / tensors.input_energy))
}

/// `(acoustic frequency Hz, rate Hz, scale c/o)` of a path.
pub fn path_to_physical(p: &Path, banks: &Banks) -> Result<(f64, Option<f64>, Option<f64>)> {
    let missing = || Error::MalformedPaths(format!("path `{p}` does not index these filterbanks"));
    let k = p.gamma1().ok_or_else(missing)?;
    let acoustic = banks.layer1.filters.get(k).ok_or_else(missing)?.center();
    let rate = match p.gamma2() {
        Some(j) => Some(banks.layer2.filters.get(j).ok_or_else(missing)?.center()),
        None => None,
    };
    let scale = match p.fscale() {
        Some((f, spin)) => {
            let magnitude = banks.frequential.filters.get(2 * f).ok_or_else(missing)?.center();
            Some(if spin == Spin::Up { magnitude } else { -magnitude })
        }
        None => None,
    };
    Ok((acoustic, rate, scale))
}

fn cmp_option(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x.total_cmp(&y),
    }
}

/// Descending ppm; ties by ascending acoustic frequency, rate and scale
/// (absent before present), then by serialized path.
pub fn row_order(a: &EnergyRow, b: &EnergyRow) -> Ordering {
    b.ppm
        .total_cmp(&a.ppm)
        .then_with(|| a.acoustic_freq.total_cmp(&b.acoustic_freq))
        .then_with(|| cmp_option(a.rate, b.rate))
        .then_with(|| cmp_option(a.scale, b.scale))
        .then_with(|| a.path.serialize().cmp(&b.path.serialize()))
}

pub fn sort_rows(rows: &mut [EnergyRow]) {
    rows.sort_by(row_order);
}

/// Rows for every second-layer path (and first-layer paths when
/// `include_first_layer`), zero rows dropped, sorted.
pub fn build_table(tensors: &ScatteringTensors, banks: &Banks, include_first_layer: bool) -> Result<Vec<EnergyRow>> {
    let mut rows = Vec::new();
    if tensors.input_energy <= 0.0 {
        return Ok(rows);
    }
    for (depth, layer) in tensors.layers.iter().enumerate() {
        if depth == 0 || (depth == 1 && !include_first_layer) {
            continue;
        }
        for p in layer.keys() {
            let ppm = to_ppm(path_energy_fraction(tensors, p)?);
            if ppm <= 0.0 {
                continue;
            }
            let (acoustic_freq, rate, scale) = path_to_physical(p, banks)?;
            rows.push(EnergyRow { ppm, acoustic_freq, rate, scale, path: p.clone() });
        }
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Decimal rendering with `digits` significant digits.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding may carry into a new leading digit, e.g. 9.9996 -> 10.000
    let reparsed: f64 = s.parse().unwrap_or(x);
    let new_magnitude = if reparsed == 0.0 { magnitude } else { reparsed.abs().log10().floor() as i64 };
    if new_magnitude != magnitude {
        let decimals = (digits as i64 - 1 - new_magnitude).max(0) as usize;
        return format!("{reparsed:.decimals$}");
    }
    s
}

fn quantize(x: f64, digits: usize) -> f64 {
    format_significant(x, digits).parse().expect("formatted number parses")
}

impl EnergyRow {
    /// The row as it reads back from CSV.
    pub fn quantized(&self) -> EnergyRow {
        EnergyRow {
            ppm: quantize(self.ppm, 6),
            acoustic_freq: quantize(self.acoustic_freq, 4),
            rate: self.rate.map(|r| quantize(r, 4)),
            scale: self.scale.map(|s| quantize(s, 4)),
            path: self.path.clone(),
        }
    }
}

pub fn to_csv(rows: &[EnergyRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| format_significant(x, 4)).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            format_significant(r.ppm, 6),
            format_significant(r.acoustic_freq, 4),
            opt(r.rate),
            opt(r.scale),
            r.path.serialize()
        );
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<EnergyRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        other => return Err(Error::Parse(format!("expected header `{CSV_HEADER}`, found {other:?}"))),
    }
    let number = |s: &str, what: &str| -> Result<f64> {
        s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad {what} `{s}`")))
    };
    let optional = |s: &str, what: &str| -> Result<Option<f64>> {
        if s.trim().is_empty() {
            Ok(None)
        } else {
            number(s, what).map(Some)
        }
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse(format!("line {}: expected 5 fields, found {}", i + 2, fields.len())));
        }
        rows.push(EnergyRow {
            ppm: number(fields[0], "ppm")?,
            acoustic_freq: number(fields[1], "acoustic frequency")?,
            rate: optional(fields[2], "rate")?,
            scale: optional(fields[3], "scale")?,
            path: fields[4].parse()?,
        });
    }
    Ok(rows)
}

/// Fixed-width four-column layout.
pub fn render_text(rows: &[EnergyRow]) -> String {
    let mut out = format!("{:>12}  {:>10}  {:>10}  {:>10}\n", "ppm", "freq (Hz)", "rate (Hz)", "scale (c/o)");
    let opt = |v: Option<f64>| v.map(|x| format_significant(x, 4)).unwrap_or_else(|| "-".into());
    for r in rows {
        let scale = r.scale.map(|s| format!("{}{}", if s > 0.0 { "+" } else { "" }, format_significant(s, 4)));
        let _ = writeln!(
            out,
            "{:>12}  {:>10}  {:>10}  {:>10}",
            format_significant(r.ppm, 6),
            format_significant(r.acoustic_freq, 4),
            opt(r.rate),
            scale.unwrap_or_else(|| "-".into())
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_arithmetic() {
        assert_eq!(to_ppm(0.0), 0.0);
        assert_eq!(to_ppm(1.0), 1e6);
        assert!((to_ppm(3.2e-4) - 320.0).abs() < 1e-9);
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(320.0, 6), "320.000");
        assert_eq!(format_significant(20000.0, 4), "20000");
        assert_eq!(format_significant(1.953125, 4), "1.953");
        assert_eq!(format_significant(-0.5, 4), "-0.5000");
        assert_eq!(format_significant(9.99996, 4), "10.00");
        assert_eq!(format_significant(0.0, 6), "0");
    }

    #[test]
    fn sort_breaks_ties_by_columns() {
        let row = |ppm, f, rate: Option<f64>, scale: Option<f64>, k| EnergyRow { ppm, acoustic_freq: f, rate, scale, path: Path::first(k) };
        let mut rows = vec![
            row(10.0, 200.0, Some(4.0), Some(1.0), 0),
            row(10.0, 100.0, Some(4.0), Some(1.0), 1),
            row(20.0, 500.0, None, None, 2),
            row(10.0, 100.0, Some(4.0), Some(-1.0), 3),
            row(10.0, 100.0, None, None, 4),
        ];
        sort_rows(&mut rows);
        let order: Vec<usize> = rows.iter().map(|r| r.path.gamma1().unwrap()).collect();
        assert_eq!(order, vec![2, 4, 3, 1, 0]);
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(parse_csv("ppm,freq\n").is_err());
    }
}
