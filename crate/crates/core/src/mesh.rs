//! Hierarchical 1D meshes.
//!
//! Every mesh is a set of binary trees, one per cell of a uniform macro
//! mesh. Leaves are the elements. Two meshes over the same macro mesh are
//! always compatible, so common coarsenings and refinements are plain tree
//! intersections and unions.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deepest tree level an element may reach.
pub const MAX_LEVEL: u8 = 60;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroMesh {
    pub a: f64,
    pub b: f64,
    pub cells: usize,
}

impl MacroMesh {
    pub fn new(a: f64, b: f64, cells: usize) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidMacroMesh(format!("need a < b, got [{a}, {b}]")));
        }
        if cells == 0 {
            return Err(Error::InvalidMacroMesh("need at least one cell".into()));
        }
        Ok(Self { a, b, cells })
    }

    pub fn cell_width(&self) -> f64 {
        (self.b - self.a) / self.cells as f64
    }
}

/// Stable element identifier: macro cell plus the path from the cell root.
///
/// `index` holds the path bits (most significant bit first, `1` = right
/// child) and is always below `2^level`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElementId {
    pub cell: u32,
    pub level: u8,
    pub index: u64,
}

impl ElementId {
    pub fn root(cell: usize) -> Self {
        Self {
            cell: cell as u32,
            level: 0,
            index: 0,
        }
    }

    pub fn children(self) -> [ElementId; 2] {
        let level = self.level + 1;
        [
            ElementId {
                cell: self.cell,
                level,
                index: self.index << 1,
            },
            ElementId {
                cell: self.cell,
                level,
                index: (self.index << 1) | 1,
            },
        ]
    }

    pub fn parent(self) -> Option<ElementId> {
        (self.level > 0).then(|| ElementId {
            cell: self.cell,
            level: self.level - 1,
            index: self.index >> 1,
        })
    }

    pub fn sibling(self) -> Option<ElementId> {
        (self.level > 0).then(|| ElementId {
            index: self.index ^ 1,
            ..self
        })
    }

    /// Start and end of the element in units of `2^-MAX_LEVEL` cell widths.
    fn span(self) -> (u32, u64, u64) {
        let shift = MAX_LEVEL - self.level;
        (self.cell, self.index << shift, (self.index + 1) << shift)
    }

    fn sort_key(self) -> (u32, u64) {
        let (c, s, _) = self.span();
        (c, s)
    }

    /// Path as a string of `0`/`1` characters, empty for the root.
    pub fn path(self) -> String {
        (0..self.level)
            .rev()
            .map(|bit| if (self.index >> bit) & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    pub fn from_path(cell: usize, path: &str) -> Result<Self> {
        if path.len() > MAX_LEVEL as usize {
            return Err(Error::DepthLimit(MAX_LEVEL));
        }
        let mut index = 0u64;
        for ch in path.chars() {
            index <<= 1;
            match ch {
                '0' => {}
                '1' => index |= 1,
                other => {
                    return Err(Error::InvalidMacroMesh(format!(
                        "bad path character {other:?}"
                    )))
                }
            }
        }
        Ok(Self {
            cell: cell as u32,
            level: path.len() as u8,
            index,
        })
    }

    /// Whether `self` contains `other` (or equals it).
    pub fn contains(self, other: ElementId) -> bool {
        self.cell == other.cell
            && self.level <= other.level
            && (other.index >> (other.level - self.level)) == self.index
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.cell, self.path())
    }
}

#[derive(Clone, Debug)]
pub struct Mesh1D {
    macro_mesh: MacroMesh,
    leaves: Vec<ElementId>,
    breakpoints: Vec<f64>,
}

impl PartialEq for Mesh1D {
    fn eq(&self, other: &Self) -> bool {
        self.macro_mesh == other.macro_mesh && self.leaves == other.leaves
    }
}

impl Mesh1D {
    /// The macro mesh itself (every tree is a single root).
    pub fn from_macro(macro_mesh: MacroMesh) -> Self {
        let leaves = (0..macro_mesh.cells).map(ElementId::root).collect();
        Self::from_sorted_leaves(macro_mesh, leaves)
    }

    /// Uniform mesh with `n` elements on `[a, b]` (each element a macro cell).
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        Ok(Self::from_macro(MacroMesh::new(a, b, n)?))
    }

    /// Builds a mesh from an arbitrary leaf set; the leaves must tile every
    /// macro cell exactly once.
    pub fn from_leaves(macro_mesh: MacroMesh, mut leaves: Vec<ElementId>) -> Result<Self> {
        leaves.sort_by_key(|id| id.sort_key());
        let mut expect: (u32, u64) = (0, 0);
        let full = 1u64 << MAX_LEVEL;
        for id in &leaves {
            if id.level > MAX_LEVEL || id.index >= (1u64 << id.level) {
                return Err(Error::UnknownElement(*id));
            }
            let (c, s, e) = id.span();
            if (c, s) != expect {
                return Err(Error::InvalidMacroMesh(format!(
                    "leaves do not tile the macro mesh near {id}"
                )));
            }
            expect = if e == full { (c + 1, 0) } else { (c, e) };
        }
        if expect != (macro_mesh.cells as u32, 0) {
            return Err(Error::InvalidMacroMesh("leaves do not cover every cell".into()));
        }
        Ok(Self::from_sorted_leaves(macro_mesh, leaves))
    }

    fn from_sorted_leaves(macro_mesh: MacroMesh, leaves: Vec<ElementId>) -> Self {
        let hc = macro_mesh.cell_width();
        let mut breakpoints = Vec::with_capacity(leaves.len() + 1);
        breakpoints.push(macro_mesh.a);
        for id in &leaves {
            let right = (id.index + 1) as f64 / (1u64 << id.level) as f64;
            let x = if id.cell as usize + 1 == macro_mesh.cells && right == 1.0 {
                macro_mesh.b
            } else {
                macro_mesh.a + hc * (id.cell as f64 + right)
            };
            breakpoints.push(x);
        }
        Self {
            macro_mesh,
            leaves,
            breakpoints,
        }
    }

    pub fn macro_mesh(&self) -> &MacroMesh {
        &self.macro_mesh
    }

    pub fn a(&self) -> f64 {
        self.macro_mesh.a
    }

    pub fn b(&self) -> f64 {
        self.macro_mesh.b
    }

    pub fn num_elements(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaves(&self) -> &[ElementId] {
        &self.leaves
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        (self.breakpoints[e], self.breakpoints[e + 1])
    }

    pub fn width(&self, e: usize) -> f64 {
        self.breakpoints[e + 1] - self.breakpoints[e]
    }

    pub fn max_width(&self) -> f64 {
        (0..self.num_elements()).map(|e| self.width(e)).fold(0.0, f64::max)
    }

    pub fn min_width(&self) -> f64 {
        (0..self.num_elements())
            .map(|e| self.width(e))
            .fold(f64::INFINITY, f64::min)
    }

    /// Position of a leaf in left-to-right order.
    pub fn position(&self, id: ElementId) -> Option<usize> {
        let key = id.sort_key();
        self.leaves
            .binary_search_by_key(&key, |l| l.sort_key())
            .ok()
            .filter(|&i| self.leaves[i] == id)
    }

    /// Element containing `x` (the right element at interior breakpoints).
    pub fn locate(&self, x: f64) -> Result<usize> {
        let (a, b) = (self.a(), self.b());
        if !(x >= a && x <= b) {
            return Err(Error::OutsideDomain { x, a, b });
        }
        let n = self.num_elements();
        let i = self.breakpoints[1..n].partition_point(|&bp| bp <= x);
        Ok(i.min(n - 1))
    }

    pub fn same_macro(&self, other: &Mesh1D) -> bool {
        self.macro_mesh == other.macro_mesh
    }

    /// Bisects every marked leaf.
    pub fn refine(&self, marked: &HashSet<ElementId>) -> Result<Mesh1D> {
        for id in marked {
            if self.position(*id).is_none() {
                return Err(Error::UnknownElement(*id));
            }
            if id.level >= MAX_LEVEL {
                return Err(Error::DepthLimit(MAX_LEVEL));
            }
        }
        if marked.is_empty() {
            return Ok(self.clone());
        }
        let mut leaves = Vec::with_capacity(self.leaves.len() + marked.len());
        for id in &self.leaves {
            if marked.contains(id) {
                leaves.extend(id.children());
            } else {
                leaves.push(*id);
            }
        }
        Ok(Self::from_sorted_leaves(self.macro_mesh, leaves))
    }

    /// Merges sibling leaf pairs whose members are both marked. One tree
    /// level per call; unmatched marks are ignored.
    pub fn coarsen(&self, marked: &HashSet<ElementId>) -> Mesh1D {
        let mut leaves = Vec::with_capacity(self.leaves.len());
        let mut i = 0;
        while i < self.leaves.len() {
            let id = self.leaves[i];
            if id.level > 0 && id.index & 1 == 0 && i + 1 < self.leaves.len() {
                let next = self.leaves[i + 1];
                if Some(next) == id.sibling() && marked.contains(&id) && marked.contains(&next) {
                    leaves.push(id.parent().expect("level > 0"));
                    i += 2;
                    continue;
                }
            }
            leaves.push(id);
            i += 1;
        }
        Self::from_sorted_leaves(self.macro_mesh, leaves)
    }

    /// Tree intersection: the finest mesh coarser than both inputs.
    pub fn common_coarsening(&self, other: &Mesh1D) -> Result<Mesh1D> {
        self.merge(other, |a, b| if a.level <= b.level { a } else { b })
    }

    /// Tree union: the coarsest mesh finer than both inputs.
    pub fn common_refinement(&self, other: &Mesh1D) -> Result<Mesh1D> {
        self.merge(other, |a, b| if a.level >= b.level { a } else { b })
    }

    /// Walks both leaf sequences; on each overlapping (nested) pair the
    /// chooser picks the coarser or the finer element.
    fn merge(&self, other: &Mesh1D, choose: impl Fn(ElementId, ElementId) -> ElementId) -> Result<Mesh1D> {
        if !self.same_macro(other) {
            return Err(Error::MacroMismatch);
        }
        if self.leaves == other.leaves {
            return Ok(self.clone());
        }
        let (la, lb) = (&self.leaves, &other.leaves);
        let (mut i, mut j) = (0, 0);
        let mut out: Vec<ElementId> = Vec::with_capacity(la.len().max(lb.len()));
        while i < la.len() && j < lb.len() {
            let (a, b) = (la[i], lb[j]);
            let pick = choose(a, b);
            if out.last() != Some(&pick) {
                out.push(pick);
            }
            let (_, _, ea) = a.span();
            let (_, _, eb) = b.span();
            match ea.cmp(&eb) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(Self::from_sorted_leaves(self.macro_mesh, out))
    }

    /// Whether every element of `self` lies inside one element of `coarse`.
    pub fn is_refinement_of(&self, coarse: &Mesh1D) -> bool {
        if !self.same_macro(coarse) {
            return false;
        }
        let mut j = 0;
        for id in &self.leaves {
            while j < coarse.leaves.len() && coarse.leaves[j].sort_key() <= id.sort_key() {
                if coarse.leaves[j].contains(*id) {
                    break;
                }
                j += 1;
            }
            if j >= coarse.leaves.len() || !coarse.leaves[j].contains(*id) {
                return false;
            }
        }
        true
    }

    pub fn to_json(&self) -> MeshJson {
        let mut cells: BTreeMap<u32, Vec<String>> = BTreeMap::new();
        for id in &self.leaves {
            cells.entry(id.cell).or_default().push(id.path());
        }
        MeshJson {
            a: self.macro_mesh.a,
            b: self.macro_mesh.b,
            cells: self.macro_mesh.cells,
            leaves: cells.into_values().collect(),
        }
    }

    pub fn from_json(json: &MeshJson) -> Result<Self> {
        let macro_mesh = MacroMesh::new(json.a, json.b, json.cells)?;
        if json.leaves.len() != json.cells {
            return Err(Error::InvalidMacroMesh("one path list per cell required".into()));
        }
        let mut leaves = Vec::new();
        for (cell, paths) in json.leaves.iter().enumerate() {
            for p in paths {
                leaves.push(ElementId::from_path(cell, p)?);
            }
        }
        Self::from_leaves(macro_mesh, leaves)
    }
}

/// Serialized mesh: macro parameters plus per-cell leaf path lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshJson {
    pub a: f64,
    pub b: f64,
    pub cells: usize,
    pub leaves: Vec<Vec<String>>,
}
