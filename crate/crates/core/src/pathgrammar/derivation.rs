//! Brute-force derivation engine for the path grammar. Sentential forms are
//! rewritten nondeterministically, breadth first, under a bound on their
//! length; terminal forms are collected as paths. Terminals carry concrete
//! filter indices, chosen when a production introduces them.
//!
//! Productions, with `m`, `k` layer numbers:
//!
//! ```text
//! 1  S                 -> t
//! 2  S                 -> t, (g1, X*)?
//! 3  gm, X             -> gm, g(m+1), X*
//! 4  gm, X             -> gm, Y^n, g1::gm, th1::gm, g(m+1), X^n, X?
//! 5  gm, Y, gk::gm     -> gm, g(k+1)::gm, th(k+1)::gm, gk::gm
//! 6  Y, Y, gk::gm      -> Y, g(k+1)::gm, th(k+1)::gm, gk::gm
//! ```

use std::collections::{BTreeSet, HashSet, VecDeque};

use super::{Path, PathSpace, PathVar, Spin};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Halt,
    Open,
    Deepen,
    Decorate,
    ResolveAfterTemporal,
    ResolveAfterY,
}

/// Productions 1-3.
pub const TEMPORAL_RULES: [Rule; 3] = [Rule::Halt, Rule::Open, Rule::Deepen];

/// Productions 1, 2 and 4-6.
pub const JOINT_RULES: [Rule; 5] =
    [Rule::Halt, Rule::Open, Rule::Decorate, Rule::ResolveAfterTemporal, Rule::ResolveAfterY];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Sym {
    S,
    X,
    Y,
    Time,
    Gamma { layer: u8, index: usize },
    Cons { source: u8, anchor: u8, index: usize },
    Theta { source: u8, anchor: u8, spin: Spin },
}

impl Sym {
    fn is_terminal(self) -> bool {
        !matches!(self, Sym::S | Sym::X | Sym::Y)
    }
}

struct Grids<'a> {
    space: &'a PathSpace,
}

impl Grids<'_> {
    fn temporal(&self, layer: u8) -> &[f64] {
        match layer {
            1 => &self.space.layer1,
            2 => &self.space.layer2,
            _ => &[],
        }
    }

    fn frequential(&self, source: u8, anchor: u8) -> usize {
        if (source, anchor) == (1, 1) {
            self.space.frequential
        } else {
            0
        }
    }

    /// Indices of layer `m + 1` filters strictly below filter `a` of layer `m`.
    fn next_layer(&self, m: u8, a: usize) -> Vec<usize> {
        let here = self.temporal(m)[a];
        let next = self.temporal(m + 1);
        (0..next.len()).filter(|&b| next[b] < here).collect()
    }
}

/// Language of the grammar under `rules`, restricted to paths with at most
/// `max_depth` temporal variables, over the grids of `space`.
pub fn derive_language(max_depth: usize, space: &PathSpace, rules: &[Rule]) -> Result<BTreeSet<Path>> {
    if max_depth == 0 || max_depth > super::MAX_DEPTH {
        return Err(Error::UnsupportedDepth(max_depth));
    }
    let tape = 4 * max_depth + 2;
    let grids = Grids { space };
    let has = |r: Rule| rules.contains(&r);

    let mut seen: HashSet<Vec<Sym>> = HashSet::new();
    let mut queue: VecDeque<Vec<Sym>> = VecDeque::new();
    let mut language = BTreeSet::new();
    let start = vec![Sym::S];
    seen.insert(start.clone());
    queue.push_back(start);

    while let Some(form) = queue.pop_front() {
        if form.iter().all(|s| s.is_terminal()) {
            language.insert(to_path(&form));
            continue;
        }
        let mut next: Vec<Vec<Sym>> = Vec::new();
        for i in 0..form.len() {
            let splice = |at: usize, width: usize, with: &[Sym]| {
                let mut out = Vec::with_capacity(form.len() + with.len());
                out.extend_from_slice(&form[..at]);
                out.extend_from_slice(with);
                out.extend_from_slice(&form[at + width..]);
                out
            };
            let room = (tape + 1).saturating_sub(form.len());
            match form[i] {
                Sym::S => {
                    if has(Rule::Halt) || has(Rule::Open) {
                        next.push(splice(i, 1, &[Sym::Time]));
                    }
                    if has(Rule::Open) {
                        for a in 0..grids.temporal(1).len() {
                            for j in 0..=room.saturating_sub(2) {
                                let mut with = vec![Sym::Time, Sym::Gamma { layer: 1, index: a }];
                                with.extend(std::iter::repeat_n(Sym::X, j));
                                next.push(splice(i, 1, &with));
                            }
                        }
                    }
                }
                Sym::Gamma { layer: m, index: a } if form.get(i + 1) == Some(&Sym::X) => {
                    let successors = grids.next_layer(m, a);
                    if has(Rule::Deepen) {
                        for &b in &successors {
                            for j in 0..=room.saturating_sub(1) {
                                let mut with = vec![Sym::Gamma { layer: m + 1, index: b }];
                                with.extend(std::iter::repeat_n(Sym::X, j));
                                next.push(splice(i + 1, 1, &with));
                            }
                        }
                    }
                    if has(Rule::Decorate) {
                        for &b in &successors {
                            for f in 0..grids.frequential(1, m) {
                                for spin in [Spin::Up, Spin::Down] {
                                    for n in 0..=room / 2 {
                                        for extra in 0..=1 {
                                            let mut with = vec![Sym::Y; n];
                                            with.push(Sym::Cons { source: 1, anchor: m, index: f });
                                            with.push(Sym::Theta { source: 1, anchor: m, spin });
                                            with.push(Sym::Gamma { layer: m + 1, index: b });
                                            with.extend(std::iter::repeat_n(Sym::X, n + extra));
                                            next.push(splice(i + 1, 1, &with));
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Sym::Y => {
                    let left = i.checked_sub(1).map(|l| form[l]);
                    let after_temporal = matches!(left, Some(Sym::Gamma { .. }));
                    let after_y = left == Some(Sym::Y);
                    let right = form.get(i + 1).copied();
                    let Some(Sym::Cons { source: k, anchor: m, .. }) = right else { continue };
                    if let Some(Sym::Gamma { layer, .. }) = left {
                        if layer != m {
                            continue;
                        }
                    }
                    let allowed = (after_temporal && has(Rule::ResolveAfterTemporal)) || (after_y && has(Rule::ResolveAfterY));
                    if !allowed {
                        continue;
                    }
                    for f in 0..grids.frequential(k + 1, m) {
                        for spin in [Spin::Up, Spin::Down] {
                            next.push(splice(
                                i,
                                1,
                                &[Sym::Cons { source: k + 1, anchor: m, index: f }, Sym::Theta { source: k + 1, anchor: m, spin }],
                            ));
                        }
                    }
                }
                _ => {}
            }
        }
        for f in next {
            let depth = f.iter().filter(|s| matches!(s, Sym::Gamma { .. })).count();
            if f.len() <= tape && depth <= max_depth && seen.insert(f.clone()) {
                queue.push_back(f);
            }
        }
    }
    Ok(language)
}

/// Language selected the same way as `enumerate_paths(max_depth, space, joint)`.
pub fn language(max_depth: usize, space: &PathSpace, joint: bool) -> Result<BTreeSet<Path>> {
    if joint {
        derive_language(max_depth, space, &JOINT_RULES)
    } else {
        derive_language(max_depth, space, &TEMPORAL_RULES)
    }
}

fn to_path(form: &[Sym]) -> Path {
    let mut temporal = Vec::new();
    let mut decorations = Vec::new();
    for s in form {
        match *s {
            Sym::Gamma { layer, index } => temporal.push(PathVar::Temporal { layer, index }),
            Sym::Cons { source, anchor, index } => decorations.push(PathVar::Frequential { source, anchor, index }),
            Sym::Theta { source, anchor, spin } => decorations.push(PathVar::Spin { source, anchor, spin }),
            _ => {}
        }
    }
    temporal.extend(decorations);
    Path { vars: temporal }
}
