//! Periodic graphs given by fundamental-domain data, and the local oracle
//! interface every other module queries.
//!
//! A vertex of a `Z^d`-periodic graph is a pair `(m, i)` of a lattice cell
//! `m ∈ Z^d` and a label `i ∈ [0, s)`. The graph is fixed by the edges of one
//! fundamental cell: an edge `(i, j, χ)` joins `(m, i)` to `(m + χ, j)` for
//! every `m`. Labels are 0-based here; file formats and CLI output use the
//! 1-based `v_1 … v_s` convention.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Lattice coordinate of a cell.
pub type Cell = SmallVec<[i64; 3]>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex {
    pub cell: Cell,
    pub label: usize,
}

impl Vertex {
    pub fn new(cell: &[i64], label: usize) -> Self {
        Vertex { cell: Cell::from_slice(cell), label }
    }

    pub fn dim(&self) -> usize {
        self.cell.len()
    }

    /// Same label, cell shifted by `offset`.
    pub fn shifted(&self, offset: &[i64]) -> Self {
        let cell = self.cell.iter().zip(offset).map(|(a, b)| a + b).collect();
        Vertex { cell, label: self.label }
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "((")?;
        for (j, c) in self.cell.iter().enumerate() {
            if j > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "),{})", self.label)
    }
}

/// One unoriented edge of the fundamental cell, stored in canonical
/// orientation. The reverse orientation `(target, origin, -index)` is implied.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FundEdge {
    pub origin: usize,
    pub target: usize,
    pub index: Cell,
}

impl FundEdge {
    pub fn new(origin: usize, target: usize, index: &[i64]) -> Self {
        FundEdge { origin, target, index: Cell::from_slice(index) }
    }

    pub fn reversed(&self) -> Self {
        FundEdge {
            origin: self.target,
            target: self.origin,
            index: self.index.iter().map(|c| -c).collect(),
        }
    }

    /// The lexicographically smaller of the two orientations.
    pub fn canonical(self) -> Self {
        let rev = self.reversed();
        if rev < self {
            rev
        } else {
            self
        }
    }

    pub fn is_bridge(&self) -> bool {
        self.index.iter().any(|&c| c != 0)
    }
}

/// An oriented edge leaving a base-cell vertex: `(m, i) -> (m + index, target)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrientedEdge {
    pub target: usize,
    pub index: Cell,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PeriodicGraph {
    dim: usize,
    cell_size: usize,
    edges: Vec<FundEdge>,
    degrees: Vec<usize>,
    #[serde(skip)]
    out: Vec<Vec<OrientedEdge>>,
}

impl PeriodicGraph {
    /// Validates the fundamental-domain description and derives degrees.
    ///
    /// Each input edge is one unoriented edge; it is stored in canonical
    /// orientation, so passing both orientations of an edge creates a double
    /// edge.
    pub fn new(dim: usize, cell_size: usize, edges: Vec<FundEdge>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGraph("dimension must be at least 1".into()));
        }
        if cell_size == 0 {
            return Err(Error::InvalidGraph("cell size must be at least 1".into()));
        }
        let mut canon = Vec::with_capacity(edges.len());
        for e in edges {
            if e.index.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: e.index.len() });
            }
            for label in [e.origin, e.target] {
                if label >= cell_size {
                    return Err(Error::LabelOutOfRange { label, cell_size });
                }
            }
            canon.push(e.canonical());
        }
        canon.sort();

        let mut out = vec![Vec::new(); cell_size];
        for e in &canon {
            out[e.origin].push(OrientedEdge { target: e.target, index: e.index.clone() });
            let rev = e.reversed();
            out[rev.origin].push(OrientedEdge { target: rev.target, index: rev.index });
        }
        let degrees: Vec<usize> = out.iter().map(Vec::len).collect();
        if let Some(label) = degrees.iter().position(|&d| d == 0) {
            return Err(Error::IsolatedVertex { label });
        }
        let graph = PeriodicGraph { dim, cell_size, edges: canon, degrees, out };
        if graph.propagation_length() == 0 {
            log::warn!("all edge indices are zero: the graph is a disjoint union of finite cells");
        }
        Ok(graph)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_size(&self) -> usize {
        self.cell_size
    }

    pub fn edges(&self) -> &[FundEdge] {
        &self.edges
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Oriented edges leaving `(0, label)`, loops listed twice.
    pub fn oriented_edges(&self, label: usize) -> &[OrientedEdge] {
        &self.out[label]
    }

    /// `l_G`: the largest absolute edge-index component. Zero only when no
    /// edge crosses a cell boundary.
    pub fn propagation_length(&self) -> usize {
        self.edges
            .iter()
            .flat_map(|e| e.index.iter())
            .map(|c| c.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Oriented bridges with origin in cell 0 (both orientations of every
    /// stored edge with nonzero index).
    pub fn bridges(&self) -> Vec<(usize, OrientedEdge)> {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, es)| {
                es.iter()
                    .filter(|e| e.index.iter().any(|&c| c != 0))
                    .map(move |e| (i, e.clone()))
            })
            .collect()
    }

    pub fn is_degenerate(&self) -> bool {
        self.propagation_length() == 0
    }
}

/// Convenience wrapper matching the builder vocabulary of the CLI.
pub fn build_periodic(dim: usize, cell_size: usize, edges: Vec<FundEdge>) -> Result<PeriodicGraph> {
    PeriodicGraph::new(dim, cell_size, edges)
}

/// Local query interface over a possibly infinite graph.
///
/// Implementations are immutable and pure: any randomness is fixed at
/// construction.
pub trait GraphOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn contains(&self, v: &Vertex) -> bool;

    /// Neighbors of `v` with multiplicity; loops appear twice. Empty when
    /// `v` is not in the graph.
    fn out_edges(&self, v: &Vertex) -> Vec<Vertex>;

    fn degree(&self, v: &Vertex) -> usize {
        self.out_edges(v).len()
    }

    /// Labels of the vertices present at `cell`, ascending.
    fn labels_at(&self, cell: &[i64]) -> Vec<usize>;

    /// The underlying periodic graph when the oracle is unperturbed.
    fn as_periodic(&self) -> Option<&PeriodicGraph> {
        None
    }
}

impl GraphOracle for PeriodicGraph {
    fn dim(&self) -> usize {
        self.dim
    }

    fn contains(&self, v: &Vertex) -> bool {
        v.cell.len() == self.dim && v.label < self.cell_size
    }

    fn out_edges(&self, v: &Vertex) -> Vec<Vertex> {
        if !self.contains(v) {
            return Vec::new();
        }
        self.out[v.label]
            .iter()
            .map(|e| Vertex { cell: add_cells(&v.cell, &e.index), label: e.target })
            .collect()
    }

    fn degree(&self, v: &Vertex) -> usize {
        if self.contains(v) {
            self.degrees[v.label]
        } else {
            0
        }
    }

    fn labels_at(&self, cell: &[i64]) -> Vec<usize> {
        if cell.len() == self.dim {
            (0..self.cell_size).collect()
        } else {
            Vec::new()
        }
    }

    fn as_periodic(&self) -> Option<&PeriodicGraph> {
        Some(self)
    }
}

pub(crate) fn add_cells(a: &[i64], b: &[i64]) -> Cell {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `χ = cell(t) - cell(o)`.
pub fn edge_index(o: &Vertex, t: &Vertex) -> Result<Cell> {
    if o.dim() != t.dim() {
        return Err(Error::DimensionMismatch { expected: o.dim(), got: t.dim() });
    }
    Ok(t.cell.iter().zip(&o.cell).map(|(a, b)| a - b).collect())
}

/// A finitely supported complex function on vertices.
///
/// Entries are kept in vertex order so that every reduction over a field is
/// deterministic. Explicit zeros are allowed and count as support only for
/// bookkeeping.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Field {
    values: BTreeMap<Vertex, Complex64>,
}

impl Field {
    pub fn new() -> Self {
        Field::default()
    }

    pub fn delta(v: Vertex) -> Self {
        let mut f = Field::new();
        f.insert(v, Complex64::new(1.0, 0.0));
        f
    }

    pub fn insert(&mut self, v: Vertex, value: Complex64) {
        self.values.insert(v, value);
    }

    pub fn add_to(&mut self, v: Vertex, value: Complex64) {
        *self.values.entry(v).or_insert(Complex64::new(0.0, 0.0)) += value;
    }

    pub fn get(&self, v: &Vertex) -> Complex64 {
        self.values.get(v).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vertex, &Complex64)> {
        self.values.iter()
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.values.keys()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Vertices carrying a nonzero value.
    pub fn support(&self) -> Vec<Vertex> {
        self.values
            .iter()
            .filter(|(_, z)| **z != Complex64::new(0.0, 0.0))
            .map(|(v, _)| v.clone())
            .collect()
    }

    /// True when every stored value is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.values.values().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.values().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Field {
        Field { values: self.values.iter().map(|(v, z)| (v.clone(), z * factor)).collect() }
    }

    /// `self - other` on the union of both supports.
    pub fn sub(&self, other: &Field) -> Field {
        let mut out = self.clone();
        for (v, z) in other.iter() {
            out.add_to(v.clone(), -z);
        }
        out
    }

    /// `self - lambda * other` on the union of both supports.
    pub fn sub_scaled(&self, lambda: f64, other: &Field) -> Field {
        let mut out = self.clone();
        for (v, z) in other.iter() {
            out.add_to(v.clone(), -(z * lambda));
        }
        out
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&Vertex) -> bool) {
        self.values.retain(|v, _| keep(v));
    }
}

impl FromIterator<(Vertex, Complex64)> for Field {
    fn from_iter<I: IntoIterator<Item = (Vertex, Complex64)>>(iter: I) -> Self {
        Field { values: iter.into_iter().collect() }
    }
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn check_support(psi: &Field, oracle: &dyn GraphOracle) -> Result<()> {
    match psi.vertices().find(|v| !oracle.contains(v)) {
        Some(v) => Err(Error::VertexNotInGraph(v.clone())),
        None => Ok(()),
    }
}

/// `sqrt(Σ |ψ(x)|² deg x)`.
pub fn weighted_norm(psi: &Field, oracle: &dyn GraphOracle) -> Result<f64> {
    check_support(psi, oracle)?;
    let terms: Vec<f64> = psi.iter().map(|(v, z)| z.norm_sqr() * oracle.degree(v) as f64).collect();
    Ok(pairwise_sum(&terms).sqrt())
}

/// `⟨ψ, φ⟩ = Σ conj(ψ(x)) φ(x) deg x`.
pub fn weighted_inner(psi: &Field, phi: &Field, oracle: &dyn GraphOracle) -> Result<Complex64> {
    check_support(psi, oracle)?;
    check_support(phi, oracle)?;
    let (mut re, mut im) = (Vec::new(), Vec::new());
    for (v, a) in psi.iter() {
        let b = phi.get(v);
        if b == Complex64::new(0.0, 0.0) {
            continue;
        }
        let t = a.conj() * b * oracle.degree(v) as f64;
        re.push(t.re);
        im.push(t.im);
    }
    Ok(Complex64::new(pairwise_sum(&re), pairwise_sum(&im)))
}

/// `(Lψ)(x) = (1/deg x) Σ_{x→t} ψ(t)`, evaluated on `supp ψ` and its
/// neighbors.
pub fn apply_laplacian(psi: &Field, oracle: &dyn GraphOracle) -> Result<Field> {
    check_support(psi, oracle)?;
    let mut region: Vec<Vertex> = Vec::with_capacity(psi.len() * 4);
    for v in psi.vertices() {
        region.push(v.clone());
        region.extend(oracle.out_edges(v));
    }
    region.sort();
    region.dedup();
    let mut out = Field::new();
    for x in region {
        let nbrs = oracle.out_edges(&x);
        let sum: Complex64 = nbrs.iter().map(|t| psi.get(t)).sum();
        let value = sum / nbrs.len() as f64;
        out.insert(x, value);
    }
    Ok(out)
}
