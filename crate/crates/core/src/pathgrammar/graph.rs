use std::collections::{BTreeMap, HashSet};

use super::Path;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeOp {
    WaveletModulus,
    LowpassAverage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub path: Path,
    pub op: NodeOp,
}

/// Static computation graph: a wavelet-modulus node and a lowpass node per
/// path. Edges run from a parent's modulus node to its children's modulus
/// nodes and from each modulus node to its own lowpass node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputationGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<(usize, usize)>,
    /// Node indices in execution order.
    pub schedule: Vec<usize>,
}

impl ComputationGraph {
    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.nodes.iter().filter(|n| n.op == NodeOp::WaveletModulus).map(|n| &n.path)
    }

    /// Paths with `depth` temporal variables.
    pub fn paths_at(&self, depth: usize) -> Vec<&Path> {
        self.paths().filter(|p| p.depth() == depth).collect()
    }

    pub fn max_depth(&self) -> usize {
        self.paths().map(Path::depth).max().unwrap_or(0)
    }

    pub fn is_joint(&self) -> bool {
        self.paths().any(Path::is_joint)
    }

    pub fn modulus_count(&self) -> usize {
        self.paths().count()
    }
}

/// Compiles a prefix-closed path set. The empty path may be left out, in
/// which case first-layer paths hang off the input directly.
pub fn compile_graph(paths: &[Path]) -> Result<ComputationGraph> {
    let mut sorted: Vec<&Path> = paths.iter().collect();
    sorted.sort();
    let mut seen = HashSet::new();
    for p in &sorted {
        if !seen.insert(*p) {
            return Err(Error::MalformedPaths(format!("duplicate path `{p}`")));
        }
    }
    let mut modulus_of: BTreeMap<&Path, usize> = BTreeMap::new();
    let mut nodes = Vec::with_capacity(2 * sorted.len());
    let mut edges = Vec::new();
    for p in &sorted {
        let m = nodes.len();
        nodes.push(Node { path: (*p).clone(), op: NodeOp::WaveletModulus });
        nodes.push(Node { path: (*p).clone(), op: NodeOp::LowpassAverage });
        edges.push((m, m + 1));
        match p.parent() {
            None => {}
            Some(parent) => match modulus_of.get(&parent) {
                Some(&pm) => edges.push((pm, m)),
                None if parent.is_empty() => {}
                None => return Err(Error::MalformedPaths(format!("path `{p}` has no parent `{parent}` in the set"))),
            },
        }
        modulus_of.insert(p, m);
    }
    let schedule = (0..nodes.len()).collect();
    Ok(ComputationGraph { nodes, edges, schedule })
}

/// Whether `schedule` visits the source of every edge before its target.
pub fn is_topological(schedule: &[usize], edges: &[(usize, usize)]) -> bool {
    let mut position = vec![usize::MAX; schedule.iter().max().map_or(0, |m| m + 1)];
    for (i, &n) in schedule.iter().enumerate() {
        if position[n] != usize::MAX {
            return false;
        }
        position[n] = i;
    }
    edges.iter().all(|&(a, b)| {
        let (pa, pb) = (position.get(a).copied(), position.get(b).copied());
        matches!((pa, pb), (Some(x), Some(y)) if x != usize::MAX && y != usize::MAX && x < y)
    })
}
