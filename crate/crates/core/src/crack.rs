//! Crack sets, their irreversible accumulation over time, and the
//! decomposition of the cell graph into pieces separated by the crack.
//!
//! The bad set is the union of all pieces that the crack has cut off from the
//! Dirichlet frame; the good set is its complement. Connectivity is measured
//! at cell resolution through intact interfaces, so near the frame the bad set
//! depends on the grid: a piece touching the frame only at a corner counts as
//! cut off.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::mesh::{crackable_interfaces, Mesh};
use crate::{Error, Result};

/// Broken interfaces at one time step.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrackState {
    pub broken: BTreeSet<usize>,
}

impl CrackState {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_broken(&self, interface: usize) -> bool {
        self.broken.contains(&interface)
    }

    pub fn len(&self) -> usize {
        self.broken.len()
    }

    pub fn is_empty(&self) -> bool {
        self.broken.is_empty()
    }

    pub fn union(&self, other: &CrackState) -> CrackState {
        CrackState {
            broken: self.broken.union(&other.broken).copied().collect(),
        }
    }

    pub fn with<I: IntoIterator<Item = usize>>(&self, extra: I) -> CrackState {
        let mut broken = self.broken.clone();
        broken.extend(extra);
        CrackState { broken }
    }

    pub fn is_subset(&self, other: &CrackState) -> bool {
        self.broken.is_subset(&other.broken)
    }

    /// Interfaces in `self` but not in `other`.
    pub fn difference(&self, other: &CrackState) -> CrackState {
        CrackState {
            broken: self.broken.difference(&other.broken).copied().collect(),
        }
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        let crackable: BTreeSet<usize> = crackable_interfaces(mesh).into_iter().collect();
        if let Some(bad) = self.broken.iter().find(|f| !crackable.contains(f)) {
            return Err(Error::InvalidSpec(format!(
                "interface {bad} is not crackable (frame-frame or out of range)"
            )));
        }
        Ok(())
    }
}

impl FromIterator<usize> for CrackState {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        CrackState {
            broken: iter.into_iter().collect(),
        }
    }
}

/// Total length of the broken interfaces.
pub fn crack_measure(mesh: &Mesh, crack: &CrackState) -> f64 {
    crack.broken.iter().map(|&f| mesh.interfaces[f].length).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub time: f64,
    pub step: CrackState,
    pub cumulative: CrackState,
}

/// Time-ordered crack states and their running union.
///
/// `base` holds a crack present before the first recorded time (a notch).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CrackHistory {
    pub base: CrackState,
    pub entries: Vec<HistoryEntry>,
}

impl CrackHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_base(base: CrackState) -> Self {
        CrackHistory {
            base,
            entries: Vec::new(),
        }
    }

    pub fn last_time(&self) -> Option<f64> {
        self.entries.last().map(|e| e.time)
    }

    /// Union of everything recorded so far, including the base crack.
    pub fn cumulative(&self) -> &CrackState {
        self.entries.last().map(|e| &e.cumulative).unwrap_or(&self.base)
    }

    pub fn accumulate(&mut self, time: f64, step: CrackState) -> Result<()> {
        if let Some(last) = self.last_time() {
            if !(time > last) {
                return Err(Error::TimeOrder { last, got: time });
            }
        }
        let cumulative = self.cumulative().union(&step);
        self.entries.push(HistoryEntry { time, step, cumulative });
        Ok(())
    }

    /// Cumulative crack at time `t` (the latest entry with `time <= t`).
    pub fn cumulative_at(&self, t: f64) -> &CrackState {
        self.entries
            .iter()
            .rev()
            .find(|e| e.time <= t)
            .map(|e| &e.cumulative)
            .unwrap_or(&self.base)
    }

    /// True when every cumulative set contains its predecessor.
    pub fn is_monotone(&self) -> bool {
        let mut prev = &self.base;
        for e in &self.entries {
            if !prev.is_subset(&e.cumulative) {
                return false;
            }
            prev = &e.cumulative;
        }
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub cells: Vec<usize>,
    pub touches_frame: bool,
    /// Broken interfaces separating this component from its neighbours.
    pub boundary: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainPartition {
    pub component_of: Vec<usize>,
    pub components: Vec<Component>,
}

impl DomainPartition {
    pub fn interior_components(&self) -> impl Iterator<Item = (usize, &Component)> {
        self.components.iter().enumerate().filter(|(_, c)| !c.touches_frame)
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Breadth-first labelling of cells connected through intact interfaces.
pub fn components(mesh: &Mesh, crack: &CrackState) -> DomainPartition {
    let n = mesh.n_cells();
    let mut component_of = vec![usize::MAX; n];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if component_of[seed] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut cells = Vec::new();
        let mut touches_frame = false;
        component_of[seed] = id;
        queue.push_back(seed);
        while let Some(c) = queue.pop_front() {
            cells.push(c);
            touches_frame |= mesh.cells[c].in_frame;
            for &f in &mesh.cell_interfaces[c] {
                if crack.is_broken(f) {
                    continue;
                }
                let [a, b] = mesh.interfaces[f].cells;
                let other = if a == c { b } else { a };
                if component_of[other] == usize::MAX {
                    component_of[other] = id;
                    queue.push_back(other);
                }
            }
        }
        cells.sort_unstable();
        components.push(Component {
            cells,
            touches_frame,
            boundary: Vec::new(),
        });
    }
    // a broken interface inside one component is not part of its boundary
    for &f in &crack.broken {
        let [a, b] = mesh.interfaces[f].cells;
        let (ca, cb) = (component_of[a], component_of[b]);
        if ca != cb {
            components[ca].boundary.push(f);
            components[cb].boundary.push(f);
        }
    }
    DomainPartition {
        component_of,
        components,
    }
}

/// Bad set (cells cut off from the frame) and good set, both sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadSet {
    pub bad: Vec<usize>,
    pub good: Vec<usize>,
}

pub fn bad_set(mesh: &Mesh, crack: &CrackState) -> BadSet {
    bad_set_from_partition(mesh, &components(mesh, crack))
}

pub fn bad_set_from_partition(mesh: &Mesh, partition: &DomainPartition) -> BadSet {
    let (bad, good): (Vec<usize>, Vec<usize>) = (0..mesh.n_cells())
        .partition(|&c| !partition.components[partition.component_of[c]].touches_frame);
    BadSet { bad, good }
}

/// Interfaces separating the cell block `[x0, x1) x [y0, y1)` (grid indices)
/// from the rest of the mesh.
pub fn ring_around(mesh: &Mesh, x0: usize, x1: usize, y0: usize, y1: usize) -> CrackState {
    let inside = |c: usize| {
        let cell = &mesh.cells[c];
        cell.ix >= x0 && cell.ix < x1 && cell.iy >= y0 && cell.iy < y1
    };
    mesh.interfaces
        .iter()
        .enumerate()
        .filter(|(_, f)| inside(f.cells[0]) != inside(f.cells[1]))
        .map(|(i, _)| i)
        .collect()
}
