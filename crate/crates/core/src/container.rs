//! `TFSC1` flat binary container for scattering tensors. All integers and
//! floats are little-endian.
//!
//! ```text
//! magic          5 bytes  "TFSC1"
//! sample_rate    f64
//! signal_len     u64
//! padded_len     u64
//! averaging      u64      averaging scale in samples
//! input_energy   f64
//! lowpass        f64      lowpass residual energy
//! records        u64
//! per record:
//!   path_len     u16, then path_len bytes of UTF-8 canonical path
//!   layer        u8
//!   hop          u64
//!   count        u64, then count x f64
//!   avg_hop      u64      0 when no averaged series is stored
//!   avg_count    u64, then avg_count x f64
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::pathgrammar::Path;
use crate::scattering::{PathSeries, ScatteringTensors};

pub const MAGIC: &[u8; 5] = b"TFSC1";

/// Grid parameters stored next to the tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridInfo {
    pub padded_len: u64,
    pub averaging_scale: u64,
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_series(w: &mut impl Write, s: Option<&PathSeries>) -> Result<()> {
    match s {
        Some(s) => {
            put_u64(w, s.hop as u64)?;
            put_u64(w, s.values.len() as u64)?;
            let mut buf = Vec::with_capacity(8 * s.values.len());
            for v in &s.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            Ok(w.write_all(&buf)?)
        }
        None => {
            put_u64(w, 0)?;
            put_u64(w, 0)
        }
    }
}

pub fn write_tensors(w: &mut impl Write, t: &ScatteringTensors, grid: GridInfo) -> Result<()> {
    w.write_all(MAGIC)?;
    put_f64(w, t.sample_rate)?;
    put_u64(w, t.signal_len as u64)?;
    put_u64(w, grid.padded_len)?;
    put_u64(w, grid.averaging_scale)?;
    put_f64(w, t.input_energy)?;
    put_f64(w, t.lowpass_residual)?;
    let count: usize = t.layers.iter().map(|l| l.len()).sum();
    put_u64(w, count as u64)?;
    for (layer, series) in t.layers.iter().enumerate() {
        for (path, s) in series {
            let key = path.serialize();
            let len = u16::try_from(key.len()).map_err(|_| Error::Config(format!("path key `{key}` too long")))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(key.as_bytes())?;
            w.write_all(&[layer as u8])?;
            put_series(w, Some(s))?;
            put_series(w, t.averaged.get(path))?;
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| Error::Parse(format!("truncated container: {e}")))?;
        Ok(buf)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes::<8>()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes::<8>()?))
    }

    fn series(&mut self) -> Result<Option<PathSeries>> {
        let hop = self.u64()? as usize;
        let count = self.u64()? as usize;
        let mut raw = vec![0u8; count.checked_mul(8).ok_or_else(|| Error::Parse("series too long".into()))?];
        self.inner.read_exact(&mut raw).map_err(|e| Error::Parse(format!("truncated series: {e}")))?;
        if hop == 0 {
            return Ok(None);
        }
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Some(PathSeries { hop, values }))
    }
}

pub fn read_tensors(r: &mut impl Read) -> Result<(ScatteringTensors, GridInfo)> {
    let mut rd = Reader { inner: r };
    if &rd.bytes::<5>()? != MAGIC {
        return Err(Error::Parse("not a TFSC1 container".into()));
    }
    let sample_rate = rd.f64()?;
    let signal_len = rd.u64()? as usize;
    let grid = GridInfo { padded_len: rd.u64()?, averaging_scale: rd.u64()? };
    let input_energy = rd.f64()?;
    let lowpass_residual = rd.f64()?;
    let count = rd.u64()?;
    let mut layers = vec![BTreeMap::new(), BTreeMap::new(), BTreeMap::new()];
    let mut averaged = BTreeMap::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(rd.bytes::<2>()?) as usize;
        let mut key = vec![0u8; len];
        rd.inner.read_exact(&mut key).map_err(|e| Error::Parse(format!("truncated path key: {e}")))?;
        let key = String::from_utf8(key).map_err(|_| Error::Parse("path key is not UTF-8".into()))?;
        let path: Path = key.parse()?;
        let layer = rd.bytes::<1>()?[0] as usize;
        if layer >= layers.len() || layer != path.depth() {
            return Err(Error::Parse(format!("record `{key}` claims layer {layer}")));
        }
        let series = rd.series()?.ok_or_else(|| Error::Parse(format!("record `{key}` has no series")))?;
        if let Some(avg) = rd.series()? {
            averaged.insert(path.clone(), avg);
        }
        layers[layer].insert(path, series);
    }
    Ok((ScatteringTensors { sample_rate, signal_len, layers, averaged, input_energy, lowpass_residual }, grid))
}
