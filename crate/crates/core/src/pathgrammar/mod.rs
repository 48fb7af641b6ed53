//! Admissible scattering paths: enumeration, membership, serialization and
//! compilation into a computation graph.

pub mod derivation;
mod graph;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

pub use graph::{compile_graph, is_topological, ComputationGraph, Node, NodeOp};

use crate::error::{Error, Result};
use crate::filterbank::{Banks, FilterBank};
pub use crate::filterbank::Spin;

/// Deepest supported number of temporal layers.
pub const MAX_DEPTH: usize = 2;

/// One variable of a path. `Frequential` and `Spin` carry the cons pair
/// `(source :: anchor)`: the log-frequency variable of layer `source`
/// filtered along the axis of temporal layer `anchor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathVar {
    Temporal { layer: u8, index: usize },
    Frequential { source: u8, anchor: u8, index: usize },
    Spin { source: u8, anchor: u8, spin: Spin },
}

impl PathVar {
    pub fn is_temporal(&self) -> bool {
        matches!(self, PathVar::Temporal { .. })
    }
}

/// Ordered multi-index of filter choices. Variables are stored as
/// `(g1, g2, g1::g1, theta1::g1)`; decorations follow the temporal
/// variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Path {
    pub vars: Vec<PathVar>,
}

impl Path {
    pub fn empty() -> Path {
        Path { vars: Vec::new() }
    }

    pub fn first(g1: usize) -> Path {
        Path { vars: vec![PathVar::Temporal { layer: 1, index: g1 }] }
    }

    pub fn temporal(g1: usize, g2: usize) -> Path {
        Path { vars: vec![PathVar::Temporal { layer: 1, index: g1 }, PathVar::Temporal { layer: 2, index: g2 }] }
    }

    pub fn joint(g1: usize, g2: usize, fscale: usize, spin: Spin) -> Path {
        Path {
            vars: vec![
                PathVar::Temporal { layer: 1, index: g1 },
                PathVar::Temporal { layer: 2, index: g2 },
                PathVar::Frequential { source: 1, anchor: 1, index: fscale },
                PathVar::Spin { source: 1, anchor: 1, spin },
            ],
        }
    }

    /// Number of temporal variables.
    pub fn depth(&self) -> usize {
        self.vars.iter().filter(|v| v.is_temporal()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    fn temporal_index(&self, layer: u8) -> Option<usize> {
        self.vars.iter().find_map(|v| match *v {
            PathVar::Temporal { layer: l, index } if l == layer => Some(index),
            _ => None,
        })
    }

    pub fn gamma1(&self) -> Option<usize> {
        self.temporal_index(1)
    }

    pub fn gamma2(&self) -> Option<usize> {
        self.temporal_index(2)
    }

    /// Frequential scale index and spin, when the path is joint.
    pub fn fscale(&self) -> Option<(usize, Spin)> {
        let index = self.vars.iter().find_map(|v| match *v {
            PathVar::Frequential { index, .. } => Some(index),
            _ => None,
        })?;
        let spin = self.vars.iter().find_map(|v| match *v {
            PathVar::Spin { spin, .. } => Some(spin),
            _ => None,
        })?;
        Some((index, spin))
    }

    pub fn is_joint(&self) -> bool {
        self.fscale().is_some()
    }

    /// The path with its deepest temporal variable and the decorations
    /// introduced alongside it removed. `None` for the empty path.
    pub fn parent(&self) -> Option<Path> {
        let depth = self.depth();
        if depth == 0 {
            return None;
        }
        let keep = |v: &PathVar| match *v {
            PathVar::Temporal { layer, .. } => (layer as usize) < depth,
            PathVar::Frequential { anchor, .. } | PathVar::Spin { anchor, .. } => (anchor as usize) + 1 < depth,
        };
        Some(Path { vars: self.vars.iter().copied().filter(keep).collect() })
    }

    /// `g1=<i>;g2=<i>;fscale=<i>;spin=<+1|-1>`, absent fields omitted.
    pub fn serialize(&self) -> String {
        let mut parts = Vec::new();
        if let Some(g1) = self.gamma1() {
            parts.push(format!("g1={g1}"));
        }
        if let Some(g2) = self.gamma2() {
            parts.push(format!("g2={g2}"));
        }
        if let Some((f, spin)) = self.fscale() {
            parts.push(format!("fscale={f}"));
            parts.push(format!("spin={:+}", spin.sign()));
        }
        parts.join(";")
    }
}

impl Ord for Path {
    /// Shallower paths first, then lexicographic over the variables, which
    /// places lower filter indices (higher frequencies) first.
    fn cmp(&self, other: &Self) -> Ordering {
        self.depth().cmp(&other.depth()).then_with(|| self.vars.cmp(&other.vars))
    }
}

impl PartialOrd for Path {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

impl FromStr for Path {
    type Err = Error;

    fn from_str(s: &str) -> Result<Path> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Path::empty());
        }
        let mut fields = Vec::new();
        for part in s.split(';') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("path field `{part}` is not key=value")))?;
            fields.push((key.trim(), value.trim()));
        }
        let keys: Vec<&str> = fields.iter().map(|f| f.0).collect();
        let index = |v: &str| v.parse::<usize>().map_err(|_| Error::Parse(format!("bad path index `{v}`")));
        match keys.as_slice() {
            ["g1"] => Ok(Path::first(index(fields[0].1)?)),
            ["g1", "g2"] => Ok(Path::temporal(index(fields[0].1)?, index(fields[1].1)?)),
            ["g1", "g2", "fscale", "spin"] => {
                let spin = match fields[3].1 {
                    "+1" | "1" => Spin::Up,
                    "-1" => Spin::Down,
                    other => return Err(Error::Parse(format!("bad spin `{other}`"))),
                };
                Ok(Path::joint(index(fields[0].1)?, index(fields[1].1)?, index(fields[2].1)?, spin))
            }
            _ => Err(Error::Parse(format!("unrecognized path `{s}`"))),
        }
    }
}

/// The discrete grids the grammar is instantiated over: center frequencies
/// of the two temporal banks and the number of frequential scales.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpace {
    pub layer1: Vec<f64>,
    pub layer2: Vec<f64>,
    pub frequential: usize,
}

impl PathSpace {
    pub fn new(layer1: Vec<f64>, layer2: Vec<f64>, frequential: usize) -> PathSpace {
        PathSpace { layer1, layer2, frequential }
    }

    pub fn from_banks(layer1: &FilterBank, layer2: &FilterBank, frequential: &FilterBank) -> PathSpace {
        // frequential banks list every scale twice, once per spin
        let scales = frequential.filters.iter().filter(|f| f.params.spin != Some(Spin::Down)).count();
        PathSpace::new(layer1.centers(), layer2.centers(), scales)
    }

    pub fn of(banks: &Banks) -> PathSpace {
        PathSpace::from_banks(&banks.layer1, &banks.layer2, &banks.frequential)
    }

    /// Rate bound: the second-layer filter sits strictly below the first.
    pub fn admissible(&self, g1: usize, g2: usize) -> bool {
        matches!((self.layer1.get(g1), self.layer2.get(g2)), (Some(a), Some(b)) if b < a)
    }
}

fn check_depth(max_depth: usize) -> Result<()> {
    if max_depth == 0 || max_depth > MAX_DEPTH {
        return Err(Error::UnsupportedDepth(max_depth));
    }
    Ok(())
}

/// All admissible paths up to `max_depth`, in canonical order, starting
/// with the empty path. With `joint`, every second-layer path carries a
/// frequential scale and a spin; otherwise second-layer paths are purely
/// temporal.
pub fn enumerate_paths(max_depth: usize, space: &PathSpace, joint: bool) -> Result<Vec<Path>> {
    check_depth(max_depth)?;
    let mut paths = vec![Path::empty()];
    paths.extend((0..space.layer1.len()).map(Path::first));
    if max_depth >= 2 {
        for g1 in 0..space.layer1.len() {
            for g2 in (0..space.layer2.len()).filter(|&g2| space.admissible(g1, g2)) {
                if joint {
                    for f in 0..space.frequential {
                        paths.push(Path::joint(g1, g2, f, Spin::Up));
                        paths.push(Path::joint(g1, g2, f, Spin::Down));
                    }
                } else {
                    paths.push(Path::temporal(g1, g2));
                }
            }
        }
    }
    paths.sort();
    Ok(paths)
}

/// Membership in `enumerate_paths(max_depth, space, joint)` without
/// enumerating.
pub fn validate_path(p: &Path, space: &PathSpace, max_depth: usize, joint: bool) -> bool {
    if check_depth(max_depth).is_err() {
        return false;
    }
    use PathVar::*;
    match p.vars.as_slice() {
        [] => true,
        [Temporal { layer: 1, index }] => *index < space.layer1.len(),
        [Temporal { layer: 1, index: g1 }, Temporal { layer: 2, index: g2 }] => {
            !joint && max_depth >= 2 && space.admissible(*g1, *g2)
        }
        [Temporal { layer: 1, index: g1 }, Temporal { layer: 2, index: g2 }, Frequential { source: 1, anchor: 1, index: f }, Spin { source: 1, anchor: 1, .. }] => {
            joint && max_depth >= 2 && space.admissible(*g1, *g2) && *f < space.frequential
        }
        _ => false,
    }
}
