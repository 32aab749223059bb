//! Perturbed periodic graphs.
//!
//! A perturbed graph `G'` shares a common subgraph `G_0` with the periodic
//! base `G`. Here `G_0` is always "the base minus whatever the perturbation
//! removes" and the identification `φ` is the identity on shared vertex
//! names. Perturbations are described by local rules, so infinite patches
//! (a half-plane, a cone, a random field of pendants) stay queryable.
//!
//! The set `Λ ⊂ V(G_0)` collects the vertices whose degree and full edge
//! neighborhood survive untouched; the defect operator
//! `K_Λ = P⊥_Λ (L_{G'} U_0 − U_0 L_G)` vanishes on it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use dashmap::DashMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{apply_laplacian, Cell, Field, GraphOracle, PeriodicGraph, Vertex};
use crate::par::{self, Exec};

/// Local description of how `G'` differs from the base graph.
///
/// All methods must be pure. Removing a vertex implicitly removes its edges.
pub trait Perturbation: Send + Sync {
    fn name(&self) -> String;

    /// Whether the base vertex `v` survives into `G_0` (and `G'`).
    fn keeps_vertex(&self, v: &Vertex) -> bool;

    /// How many oriented base edges `o → t` are removed. Only asked when both
    /// endpoints are kept; must be symmetric in `o`, `t`.
    fn removed_edges(&self, _o: &Vertex, _t: &Vertex) -> usize {
        0
    }

    /// Whether `v` is a vertex added by the perturbation.
    fn has_added_vertex(&self, v: &Vertex) -> bool;

    /// Labels of added vertices at `cell`.
    fn added_labels_at(&self, cell: &[i64]) -> Vec<usize>;

    /// Neighbors of `v` through added edges, with multiplicity.
    fn added_edges(&self, v: &Vertex) -> Vec<Vertex>;

    /// Cell radius beyond which the rule cannot change a vertex's
    /// neighborhood, when such a bound exists.
    fn influence_radius(&self) -> Option<usize> {
        None
    }
}

/// The trivial perturbation `G' = G`.
#[derive(Clone, Debug, Default)]
pub struct Identity;

impl Perturbation for Identity {
    fn name(&self) -> String {
        "identity".into()
    }
    fn keeps_vertex(&self, _v: &Vertex) -> bool {
        true
    }
    fn has_added_vertex(&self, _v: &Vertex) -> bool {
        false
    }
    fn added_labels_at(&self, _cell: &[i64]) -> Vec<usize> {
        Vec::new()
    }
    fn added_edges(&self, _v: &Vertex) -> Vec<Vertex> {
        Vec::new()
    }
    fn influence_radius(&self) -> Option<usize> {
        Some(0)
    }
}

/// An explicit finite patch.
#[derive(Clone, Debug, Default)]
pub struct Patch {
    pub removed_vertices: BTreeSet<Vertex>,
    /// Unordered pairs; repeat a pair to remove several parallel edges.
    pub removed_edges: Vec<(Vertex, Vertex)>,
    pub added_vertices: BTreeSet<Vertex>,
    /// Unordered pairs; repeat a pair for parallel edges.
    pub added_edges: Vec<(Vertex, Vertex)>,
}

/// A [`Patch`] indexed for local queries.
#[derive(Clone, Debug)]
pub struct FinitePatch {
    patch: Patch,
    removed: HashMap<(Vertex, Vertex), usize>,
    added: BTreeMap<Vertex, Vec<Vertex>>,
    radius: usize,
}

impl FinitePatch {
    /// Indexes and validates `patch` against `base`.
    pub fn new(base: &PeriodicGraph, patch: Patch) -> Result<Self> {
        let d = base.dim();
        let s = base.cell_size();
        let all = patch
            .removed_vertices
            .iter()
            .chain(&patch.added_vertices)
            .chain(patch.removed_edges.iter().flat_map(|(a, b)| [a, b]))
            .chain(patch.added_edges.iter().flat_map(|(a, b)| [a, b]));
        for v in all {
            if v.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.dim() });
            }
        }
        for v in &patch.added_vertices {
            if v.label < s {
                return Err(Error::InvalidPerturbation(format!(
                    "added vertex {v} collides with base labels; added labels must be ≥ {}",
                    s + 1
                )));
            }
        }
        let mut removed = HashMap::new();
        for (a, b) in &patch.removed_edges {
            if a.label >= s || b.label >= s {
                return Err(Error::InvalidPerturbation(format!("removed edge {a}–{b} is not a base edge")));
            }
            if a == b {
                *removed.entry((a.clone(), a.clone())).or_insert(0) += 2;
            } else {
                *removed.entry((a.clone(), b.clone())).or_insert(0) += 1;
                *removed.entry((b.clone(), a.clone())).or_insert(0) += 1;
            }
        }
        for ((o, t), &count) in &removed {
            let have = base.out_edges(o).iter().filter(|x| *x == t).count();
            if count > have {
                return Err(Error::InvalidPerturbation(format!(
                    "removing {count} oriented edges {o}→{t} but the base has {have}"
                )));
            }
        }
        let present = |v: &Vertex| {
            if v.label < s {
                !patch.removed_vertices.contains(v)
            } else {
                patch.added_vertices.contains(v)
            }
        };
        let mut added: BTreeMap<Vertex, Vec<Vertex>> = BTreeMap::new();
        for (a, b) in &patch.added_edges {
            for v in [a, b] {
                if !present(v) {
                    return Err(Error::InvalidPerturbation(format!("added edge endpoint {v} is not in the graph")));
                }
            }
            added.entry(a.clone()).or_default().push(b.clone());
            added.entry(b.clone()).or_default().push(a.clone());
        }
        let radius = patch
            .removed_vertices
            .iter()
            .chain(&patch.added_vertices)
            .chain(added.keys())
            .chain(removed.keys().map(|(a, _)| a))
            .flat_map(|v| v.cell.iter().map(|c| c.unsigned_abs() as usize))
            .max()
            .unwrap_or(0)
            + base.propagation_length();
        let fp = FinitePatch { patch, removed, added, radius };

        // Every vertex whose neighborhood can change must keep degree ≥ 1.
        let pg = PerturbedGraph::new(base.clone(), Arc::new(fp.clone()));
        let mut touched: BTreeSet<Vertex> = BTreeSet::new();
        for v in fp.patch.removed_vertices.iter().chain(&fp.patch.added_vertices).chain(fp.added.keys()) {
            touched.insert(v.clone());
            touched.extend(base.out_edges(v));
        }
        touched.extend(fp.removed.keys().map(|(a, _)| a.clone()));
        for v in touched.iter().filter(|v| pg.contains(v)) {
            if pg.degree(v) == 0 {
                return Err(Error::InvalidPerturbation(format!("vertex {v} becomes isolated")));
            }
        }
        Ok(fp)
    }

    pub fn patch(&self) -> &Patch {
        &self.patch
    }
}

impl Perturbation for FinitePatch {
    fn name(&self) -> String {
        "patch".into()
    }
    fn keeps_vertex(&self, v: &Vertex) -> bool {
        !self.patch.removed_vertices.contains(v)
    }
    fn removed_edges(&self, o: &Vertex, t: &Vertex) -> usize {
        self.removed.get(&(o.clone(), t.clone())).copied().unwrap_or(0)
    }
    fn has_added_vertex(&self, v: &Vertex) -> bool {
        self.patch.added_vertices.contains(v)
    }
    fn added_labels_at(&self, cell: &[i64]) -> Vec<usize> {
        self.patch.added_vertices.iter().filter(|v| v.cell.as_slice() == cell).map(|v| v.label).collect()
    }
    fn added_edges(&self, v: &Vertex) -> Vec<Vertex> {
        self.added.get(v).cloned().unwrap_or_default()
    }
    fn influence_radius(&self) -> Option<usize> {
        Some(self.radius)
    }
}

/// A periodic base graph together with a perturbation.
///
/// Implements [`GraphOracle`] for `G'`; base-graph queries go through
/// [`PerturbedGraph::base`].
pub struct PerturbedGraph {
    base: PeriodicGraph,
    rule: Arc<dyn Perturbation>,
    lambda_cache: DashMap<Vertex, bool>,
}

impl std::fmt::Debug for PerturbedGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PerturbedGraph").field("base", &self.base).field("rule", &self.rule.name()).finish()
    }
}

impl PerturbedGraph {
    pub fn new(base: PeriodicGraph, rule: Arc<dyn Perturbation>) -> Self {
        PerturbedGraph { base, rule, lambda_cache: DashMap::new() }
    }

    /// The unperturbed graph viewed as its own perturbation.
    pub fn unperturbed(base: PeriodicGraph) -> Self {
        Self::new(base, Arc::new(Identity))
    }

    pub fn base(&self) -> &PeriodicGraph {
        &self.base
    }

    pub fn rule(&self) -> &dyn Perturbation {
        self.rule.as_ref()
    }

    /// `x ∈ V(G_0)`.
    pub fn in_common(&self, x: &Vertex) -> bool {
        self.base.contains(x) && self.rule.keeps_vertex(x)
    }

    /// `φ^{-1}`: identity on shared names.
    pub fn phi_inv(&self, x: &Vertex) -> Vertex {
        x.clone()
    }

    /// Oriented base edges at `x` that lie in `G_0`.
    fn common_out_edges(&self, x: &Vertex) -> Vec<Vertex> {
        let mut nbrs = self.base.out_edges(x);
        nbrs.sort();
        let mut out = Vec::with_capacity(nbrs.len());
        let mut i = 0;
        while i < nbrs.len() {
            let t = &nbrs[i];
            let mut j = i;
            while j < nbrs.len() && nbrs[j] == *t {
                j += 1;
            }
            if self.rule.keeps_vertex(t) {
                let removed = self.rule.removed_edges(x, t);
                let keep = (j - i).saturating_sub(removed);
                out.extend(std::iter::repeat_n(t.clone(), keep));
            }
            i = j;
        }
        out
    }

    /// Membership in `Λ`, without touching the cache.
    pub fn lambda_contains_uncached(&self, x: &Vertex) -> Result<bool> {
        if !self.in_common(x) {
            return Err(Error::VertexNotInCommonSubgraph(x.clone()));
        }
        let base_deg = self.base.degree(x);
        if self.common_out_edges(x).len() != base_deg {
            return Ok(false);
        }
        Ok(self.degree(&self.phi_inv(x)) == base_deg)
    }

    /// `x ∈ Λ`: unchanged degree and every base edge at `x` in `G_0`.
    pub fn lambda_contains(&self, x: &Vertex) -> Result<bool> {
        if let Some(hit) = self.lambda_cache.get(x) {
            return Ok(*hit);
        }
        let value = self.lambda_contains_uncached(x)?;
        self.lambda_cache.insert(x.clone(), value);
        Ok(value)
    }

    /// Base vertices outside `G_0` are reported as not in `Λ`.
    fn lambda_or_false(&self, x: &Vertex) -> bool {
        self.lambda_contains(x).unwrap_or(false)
    }

    /// Whether every base vertex with cell in `center + [-r, r]^d` is in `Λ`.
    fn box_in_lambda(&self, center: &[i64], radius: i64) -> bool {
        let d = center.len();
        let s = self.base.cell_size();
        let mut offset = vec![-radius; d];
        loop {
            let cell: Cell = center.iter().zip(&offset).map(|(c, o)| c + o).collect();
            for label in 0..s {
                if !self.lambda_or_false(&Vertex { cell: cell.clone(), label }) {
                    return false;
                }
            }
            if !advance(&mut offset, -radius, radius) {
                return true;
            }
        }
    }

    /// Maps a function on `V(G)` into `V(G')`; values off `G_0` are dropped.
    pub fn embed_u0(&self, psi: &Field) -> Field {
        psi.iter()
            .filter(|(x, _)| self.in_common(x))
            .map(|(x, z)| (self.phi_inv(x), *z))
            .collect()
    }

    /// `K_Λ ψ = P⊥_Λ (L_{G'} U_0 ψ − U_0 L_G ψ)`.
    pub fn apply_k_lambda(&self, psi: &Field) -> Result<Field> {
        let lifted = apply_laplacian(&self.embed_u0(psi), self)?;
        let pushed = self.embed_u0(&apply_laplacian(psi, &self.base)?);
        let mut out = lifted.sub(&pushed);
        let zero = num_complex::Complex64::new(0.0, 0.0);
        let in_lambda: Vec<Vertex> =
            out.vertices().filter(|v| self.in_common(v) && self.lambda_or_false(v)).cloned().collect();
        for v in in_lambda {
            out.insert(v, zero);
        }
        Ok(out)
    }

    /// Norm-comparison constants of `U_0` over `support`.
    pub fn u0_constants(&self, support: &[Vertex]) -> Result<U0Constants> {
        if support.is_empty() {
            return Err(Error::EmptySupport);
        }
        let (mut min_p, mut max_p) = (usize::MAX, 0usize);
        let (mut min_b, mut max_b) = (usize::MAX, 0usize);
        for x in support {
            if !self.in_common(x) {
                return Err(Error::VertexNotInCommonSubgraph(x.clone()));
            }
            let dp = self.degree(&self.phi_inv(x));
            let db = self.base.degree(x);
            min_p = min_p.min(dp);
            max_p = max_p.max(dp);
            min_b = min_b.min(db);
            max_b = max_b.max(db);
        }
        let lower = min_p as f64 / max_b as f64;
        let upper = max_p as f64 / min_b as f64;
        Ok(U0Constants { c0: lower.sqrt(), big_c0: upper.sqrt(), c0_ratio: lower, big_c0_ratio: upper })
    }

    /// Scans `window` (inclusive per-axis bounds) lexicographically for the
    /// first center whose padded box lies in `Λ`.
    pub fn check_condition_p(&self, n: usize, window: &[(i64, i64)]) -> Result<WindowReport> {
        self.check_condition_p_with(n, window, Exec::default())
    }

    pub fn check_condition_p_with(&self, n: usize, window: &[(i64, i64)], exec: Exec) -> Result<WindowReport> {
        let d = self.base.dim();
        if n == 0 {
            return Err(Error::InvalidParameter("condition (P) needs n ≥ 1".into()));
        }
        if window.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: window.len() });
        }
        if window.iter().any(|(lo, hi)| lo > hi) {
            return Err(Error::InvalidParameter("empty search window".into()));
        }
        let l = self.base.propagation_length() as i64;
        let radius = n as i64 + l - 1;
        let extents: Vec<usize> = window.iter().map(|(lo, hi)| (hi - lo + 1) as usize).collect();
        let total: usize = extents.iter().product();
        let cell_at = |flat: usize| -> Cell {
            let mut cell = Cell::from_elem(0, d);
            let mut rest = flat;
            for j in (0..d).rev() {
                cell[j] = window[j].0 + (rest % extents[j]) as i64;
                rest /= extents[j];
            }
            cell
        };
        // Candidate centers are (cell, label) pairs of G_0; the box test only
        // depends on the cell, and a passing box contains all of its labels.
        let hit = par::position_first(exec, total, |flat| self.box_in_lambda(&cell_at(flat), radius));
        let (x_n, searched) = match hit {
            Some(flat) => {
                let cell = cell_at(flat);
                let label = (0..self.base.cell_size())
                    .find(|&i| self.in_common(&Vertex { cell: cell.clone(), label: i }))
                    .expect("a box inside Λ contains its center cell");
                let earlier: usize = (0..flat)
                    .map(|f| {
                        let c = cell_at(f);
                        (0..self.base.cell_size())
                            .filter(|&i| self.in_common(&Vertex { cell: c.clone(), label: i }))
                            .count()
                    })
                    .sum();
                (Some(Vertex { cell, label }), earlier + 1)
            }
            None => {
                let all: usize = (0..total)
                    .map(|f| {
                        let c = cell_at(f);
                        (0..self.base.cell_size())
                            .filter(|&i| self.in_common(&Vertex { cell: c.clone(), label: i }))
                            .count()
                    })
                    .sum();
                (None, all)
            }
        };
        Ok(WindowReport { n, x_n, searched, box_bounds: (-radius, radius) })
    }

    /// Row-major bitmap of `Λ` over a 1-D or 2-D window for one label.
    /// Vertices outside `G_0` read as `false`.
    pub fn lambda_bitmap(&self, window: &[(i64, i64)], label: usize) -> Result<Vec<Vec<bool>>> {
        match window {
            [(lo, hi)] => Ok(vec![(*lo..=*hi).map(|a| self.lambda_or_false(&Vertex::new(&[a], label))).collect()]),
            [(lo1, hi1), (lo2, hi2)] => Ok((*lo1..=*hi1)
                .map(|a| (*lo2..=*hi2).map(|b| self.lambda_or_false(&Vertex::new(&[a, b], label))).collect())
                .collect()),
            _ => Err(Error::InvalidParameter("lambda bitmap supports 1-D and 2-D windows".into())),
        }
    }
}

/// Odometer increment of `offset` within `[lo, hi]^d`; false on wrap-around.
pub(crate) fn advance(offset: &mut [i64], lo: i64, hi: i64) -> bool {
    for j in (0..offset.len()).rev() {
        if offset[j] < hi {
            offset[j] += 1;
            return true;
        }
        offset[j] = lo;
    }
    false
}

impl GraphOracle for PerturbedGraph {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn contains(&self, v: &Vertex) -> bool {
        if v.dim() != self.base.dim() {
            return false;
        }
        (self.base.contains(v) && self.rule.keeps_vertex(v)) || self.rule.has_added_vertex(v)
    }

    fn out_edges(&self, v: &Vertex) -> Vec<Vertex> {
        if !self.contains(v) {
            return Vec::new();
        }
        let mut out = if self.in_common(v) { self.common_out_edges(v) } else { Vec::new() };
        out.extend(self.rule.added_edges(v));
        out
    }

    fn labels_at(&self, cell: &[i64]) -> Vec<usize> {
        if cell.len() != self.base.dim() {
            return Vec::new();
        }
        let mut labels: Vec<usize> = (0..self.base.cell_size())
            .filter(|&i| self.rule.keeps_vertex(&Vertex::new(cell, i)))
            .chain(self.rule.added_labels_at(cell))
            .collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }
}

/// Constants bounding `‖U_0 ψ‖ / ‖ψ‖` on a support.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct U0Constants {
    /// `sqrt(min deg' / max deg)`.
    pub c0: f64,
    /// `sqrt(max deg' / min deg)`.
    pub big_c0: f64,
    /// The same ratios without the square root.
    pub c0_ratio: f64,
    pub big_c0_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowReport {
    pub n: usize,
    pub x_n: Option<Vertex>,
    /// Candidate centers examined, the hit included.
    pub searched: usize,
    /// Offsets `[lo, hi]` (same on every axis) of the padded box around `x_n`.
    pub box_bounds: (i64, i64),
}
