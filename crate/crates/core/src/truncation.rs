//! Finite box restrictions of (perturbed) graphs and their spectra.
//!
//! Boxes are induced subgraphs with degrees recounted inside the box, so the
//! truncated operator is the Laplacian of an honest finite graph. With
//! `wrap`, a purely periodic graph is closed up modulo the box lengths; the
//! wrapped operator is block circulant and its spectrum is exactly the set of
//! band values at `k = 2πt/N`.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::floquet::SpectrumApprox;
use crate::graph::{Cell, GraphOracle, Vertex};
use crate::par::{self, Exec};
use crate::perturbation::advance;

/// Largest box handed to the dense eigensolver.
pub const DENSE_CAP: usize = 4000;
pub const DEFAULT_EPS_UNWRAPPED: f64 = 0.02;
pub const DEFAULT_EPS_WRAPPED: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct BoxGraph {
    pub vertices: Vec<Vertex>,
    /// `adjacency[i]` lists `(j, multiplicity)`, sorted by `j`.
    pub adjacency: Vec<Vec<(usize, usize)>>,
    pub degrees: Vec<usize>,
    /// Vertices that lost at least one neighbor to the cut.
    pub on_boundary: Vec<bool>,
    /// Vertices dropped because no neighbor survived the cut.
    pub dropped: usize,
    pub wrapped: bool,
    pub bounds: Vec<(i64, i64)>,
}

fn box_cells(bounds: &[(i64, i64)]) -> Vec<Cell> {
    let d = bounds.len();
    let extents: Vec<i64> = bounds.iter().map(|(lo, hi)| hi - lo).collect();
    let max = extents.iter().copied().max().unwrap_or(0);
    let mut out = Vec::new();
    let mut off = vec![0i64; d];
    loop {
        if off.iter().zip(&extents).all(|(o, e)| o <= e) {
            out.push(bounds.iter().zip(&off).map(|((lo, _), o)| lo + o).collect());
        }
        if !advance(&mut off, 0, max) {
            break;
        }
    }
    out
}

/// Induced subgraph on the cells of `bounds` (inclusive per axis).
pub fn truncate(oracle: &dyn GraphOracle, bounds: &[(i64, i64)], wrap: bool) -> Result<BoxGraph> {
    if bounds.len() != oracle.dim() {
        return Err(Error::DimensionMismatch { expected: oracle.dim(), got: bounds.len() });
    }
    if bounds.is_empty() || bounds.iter().any(|(lo, hi)| lo > hi) {
        return Err(Error::EmptyBox);
    }
    if wrap && oracle.as_periodic().is_none() {
        return Err(Error::InvalidParameter("wrapped truncation needs an unperturbed periodic graph".into()));
    }
    let mut vertices = Vec::new();
    for cell in box_cells(bounds) {
        for label in oracle.labels_at(&cell) {
            vertices.push(Vertex { cell: cell.clone(), label });
        }
    }
    if vertices.is_empty() {
        return Err(Error::EmptyBox);
    }
    let index: HashMap<&Vertex, usize> = vertices.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let fold = |v: Vertex| -> Vertex {
        let cell = v
            .cell
            .iter()
            .zip(bounds)
            .map(|(&c, &(lo, hi))| lo + (c - lo).rem_euclid(hi - lo + 1))
            .collect();
        Vertex { cell, label: v.label }
    };

    let mut adjacency = Vec::with_capacity(vertices.len());
    let mut on_boundary = Vec::with_capacity(vertices.len());
    for v in &vertices {
        let mut row: BTreeMap<usize, usize> = BTreeMap::new();
        let mut lost = false;
        for t in oracle.out_edges(v) {
            let t = if wrap { fold(t) } else { t };
            match index.get(&t) {
                Some(&j) => *row.entry(j).or_insert(0) += 1,
                None => lost = true,
            }
        }
        adjacency.push(row.into_iter().collect::<Vec<_>>());
        on_boundary.push(lost);
    }

    // Drop isolated vertices and re-index.
    let keep: Vec<bool> = adjacency.iter().map(|r: &Vec<(usize, usize)>| !r.is_empty()).collect();
    let dropped = keep.iter().filter(|k| !**k).count();
    if dropped > 0 {
        log::warn!("truncation dropped {dropped} vertices left without neighbors");
    }
    let mut new_index = vec![usize::MAX; vertices.len()];
    let mut next = 0;
    for (i, &k) in keep.iter().enumerate() {
        if k {
            new_index[i] = next;
            next += 1;
        }
    }
    let mut out = BoxGraph {
        vertices: Vec::with_capacity(next),
        adjacency: Vec::with_capacity(next),
        degrees: Vec::with_capacity(next),
        on_boundary: Vec::with_capacity(next),
        dropped,
        wrapped: wrap,
        bounds: bounds.to_vec(),
    };
    for (i, v) in vertices.into_iter().enumerate() {
        if !keep[i] {
            continue;
        }
        let row: Vec<(usize, usize)> = adjacency[i].iter().map(|&(j, m)| (new_index[j], m)).collect();
        out.degrees.push(row.iter().map(|(_, m)| m).sum());
        out.adjacency.push(row);
        out.vertices.push(v);
        out.on_boundary.push(on_boundary[i]);
    }
    if out.vertices.is_empty() {
        return Err(Error::EmptyBox);
    }
    Ok(out)
}

impl BoxGraph {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn index_of(&self, v: &Vertex) -> Option<usize> {
        self.vertices.binary_search(v).ok()
    }

    /// `D^{-1/2} A D^{-1/2}`, similar to the box Laplacian `D^{-1} A`.
    pub fn symmetric_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let sq: Vec<f64> = self.degrees.iter().map(|&d| (d as f64).sqrt()).collect();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.adjacency.iter().enumerate() {
            for &(j, mult) in row {
                m[(i, j)] = mult as f64 / (sq[i] * sq[j]);
            }
        }
        m
    }

    /// Applies the box Laplacian `(Lψ)_i = (1/d_i) Σ_j μ_ij ψ_j`.
    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        self.adjacency
            .iter()
            .zip(&self.degrees)
            .map(|(row, &d)| row.iter().map(|&(j, m)| psi[j] * m as f64).sum::<Complex64>() / d as f64)
            .collect()
    }

    /// Vertices within graph distance `radius` of a boundary vertex.
    pub fn near_boundary(&self, radius: usize) -> Vec<bool> {
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::new();
        for (i, &b) in self.on_boundary.iter().enumerate() {
            if b {
                dist[i] = 0;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            if dist[i] >= radius {
                continue;
            }
            for &(j, _) in &self.adjacency[i] {
                if dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        dist.into_iter().map(|x| x <= radius).collect()
    }
}

fn check_dense(b: &BoxGraph) -> Result<()> {
    if b.is_empty() {
        return Err(Error::EmptyBox);
    }
    if b.len() > DENSE_CAP {
        return Err(Error::BoxTooLarge { vertices: b.len(), cap: DENSE_CAP });
    }
    Ok(())
}

/// Ascending eigenvalues of the box Laplacian (dense solver).
pub fn spectrum_of_box(b: &BoxGraph) -> Result<Vec<f64>> {
    check_dense(b)?;
    let mut ev: Vec<f64> = b.symmetric_matrix().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Eigenvalues with eigenvectors of the symmetric form `D^{-1/2} A D^{-1/2}`
/// (orthonormal columns; `|u_i|²` is the degree-weighted mass of the
/// corresponding Laplacian eigenvector at vertex `i`).
pub fn eigensystem_of_box(b: &BoxGraph) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    check_dense(b)?;
    let eig = b.symmetric_matrix().symmetric_eigen();
    let mut order: Vec<usize> = (0..b.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    let vectors = order.iter().map(|&c| eig.eigenvectors.column(c).into_owned()).collect();
    Ok((values, vectors))
}

/// Spectrum of a wrapped box through its block-circulant structure.
///
/// Verifies that the box operator is block circulant over the cell torus,
/// reads its `s × s` blocks off cell 0, and diagonalizes the symbol
/// `Σ_a B_a exp(2πi a·t/N)` for every `t`. Works at sizes far beyond the dense
/// cap.
pub fn spectrum_of_wrapped_box(b: &BoxGraph, exec: Exec) -> Result<Vec<f64>> {
    if !b.wrapped {
        return Err(Error::InvalidParameter("block-circulant spectrum needs a wrapped box".into()));
    }
    let d = b.bounds.len();
    let lens: Vec<i64> = b.bounds.iter().map(|(lo, hi)| hi - lo + 1).collect();
    let lo: Vec<i64> = b.bounds.iter().map(|(lo, _)| *lo).collect();
    let labels: Vec<usize> = {
        let mut ls: Vec<usize> = b.vertices.iter().map(|v| v.label).collect();
        ls.sort_unstable();
        ls.dedup();
        ls
    };
    let s = labels.len();
    let slot = |label: usize| labels.binary_search(&label).expect("label present");
    let rel = |v: &Vertex| -> Vec<i64> { v.cell.iter().zip(&lo).map(|(c, l)| c - l).collect() };
    let cells: usize = lens.iter().product::<i64>() as usize;
    if b.len() != cells * s {
        return Err(Error::InvalidParameter("wrapped box does not carry every label in every cell".into()));
    }
    let sq: Vec<f64> = b.degrees.iter().map(|&x| (x as f64).sqrt()).collect();

    // Blocks keyed by the torus offset of the target relative to the origin.
    type Blocks = BTreeMap<(Vec<i64>, usize, usize), f64>;
    let entry_key = |i: usize, j: usize| -> (Vec<i64>, usize, usize) {
        let (vi, vj) = (&b.vertices[i], &b.vertices[j]);
        let (ri, rj) = (rel(vi), rel(vj));
        let off: Vec<i64> = rj.iter().zip(&ri).zip(&lens).map(|((a, c), n)| (a - c).rem_euclid(*n)).collect();
        (off, slot(vi.label), slot(vj.label))
    };
    let mut blocks: Blocks = BTreeMap::new();
    let mut origin_degree = vec![0.0; s];
    for (i, v) in b.vertices.iter().enumerate() {
        if rel(v).iter().all(|&c| c == 0) {
            origin_degree[slot(v.label)] = sq[i];
            for &(j, m) in &b.adjacency[i] {
                *blocks.entry(entry_key(i, j)).or_insert(0.0) += m as f64 / (sq[i] * sq[j]);
            }
        }
    }
    for (i, row) in b.adjacency.iter().enumerate() {
        if sq[i] != origin_degree[slot(b.vertices[i].label)] {
            return Err(Error::InvalidParameter("wrapped box is not translation invariant".into()));
        }
        for &(j, m) in row {
            let w = m as f64 / (sq[i] * sq[j]);
            if blocks.get(&entry_key(i, j)) != Some(&w) {
                return Err(Error::InvalidParameter("wrapped box is not block circulant".into()));
            }
        }
        let expected = blocks.keys().filter(|(_, a, _)| *a == slot(b.vertices[i].label)).count();
        if row.len() != expected {
            return Err(Error::InvalidParameter("wrapped box is not block circulant".into()));
        }
    }

    let entries: Vec<_> = blocks.into_iter().collect();
    let per_t = par::map_indexed(exec, cells, |flat| {
        let mut t = vec![0i64; d];
        let mut rest = flat as i64;
        for j in (0..d).rev() {
            t[j] = rest % lens[j];
            rest /= lens[j];
        }
        let mut sym = DMatrix::<Complex64>::zeros(s, s);
        for ((off, i, j), w) in &entries {
            let phase: f64 = off.iter().zip(&t).zip(&lens).map(|((a, tj), n)| 2.0 * PI * (*a * *tj) as f64 / *n as f64).sum();
            sym[(*i, *j)] += Complex64::from_polar(*w, phase);
        }
        let herm = DMatrix::from_fn(s, s, |i, j| (sym[(i, j)] + sym[(j, i)].conj()) * 0.5);
        herm.symmetric_eigenvalues().iter().copied().collect::<Vec<f64>>()
    });
    let mut ev: Vec<f64> = per_t.into_iter().flatten().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

#[derive(Clone, Debug, Serialize)]
pub struct TruncationReport {
    pub eigenvalues: Vec<f64>,
    pub eps: f64,
    pub inside_fraction: f64,
    /// Eigenvectors with at least half their weighted mass within graph
    /// distance 2 of the box boundary. `None` when no eigenvectors were given.
    pub boundary_count: Option<usize>,
    /// Eigenvalues farther than `eps` from the reference spectrum.
    pub outliers: Vec<f64>,
    /// How many outliers have boundary-localized eigenvectors.
    pub boundary_outliers: Option<usize>,
}

/// Compares box eigenvalues with a reference spectrum.
pub fn compare_spectra(
    eigs: &[f64],
    reference: &SpectrumApprox,
    eps: f64,
    localization: Option<(&BoxGraph, &[DVector<f64>])>,
) -> Result<TruncationReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let inside: Vec<bool> = eigs.iter().map(|&x| reference.contains(x, eps)).collect();
    let inside_fraction =
        if eigs.is_empty() { 1.0 } else { inside.iter().filter(|b| **b).count() as f64 / eigs.len() as f64 };
    let outliers: Vec<f64> = eigs.iter().zip(&inside).filter(|(_, ok)| !**ok).map(|(x, _)| *x).collect();
    let (boundary_count, boundary_outliers) = match localization {
        Some((b, vectors)) => {
            let near = b.near_boundary(2);
            let localized: Vec<bool> = vectors
                .iter()
                .map(|u| {
                    let total: f64 = u.iter().map(|x| x * x).sum();
                    let edge: f64 = u.iter().zip(&near).filter(|(_, n)| **n).map(|(x, _)| x * x).sum();
                    total > 0.0 && edge >= 0.5 * total
                })
                .collect();
            let count = localized.iter().filter(|b| **b).count();
            let out = localized.iter().zip(&inside).filter(|(l, ok)| **l && !**ok).count();
            (Some(count), Some(out))
        }
        None => (None, None),
    };
    Ok(TruncationReport { eigenvalues: eigs.to_vec(), eps, inside_fraction, boundary_count, outliers, boundary_outliers })
}

/// Number of eigenvalues with `|λ| ≤ tol`.
pub fn zero_mode_count(b: &BoxGraph, tol: f64) -> Result<usize> {
    if tol < 0.0 {
        return Err(Error::InvalidParameter("tol must be nonnegative".into()));
    }
    Ok(spectrum_of_box(b)?.iter().filter(|x| x.abs() <= tol).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{FundEdge, PeriodicGraph};

    fn z1() -> PeriodicGraph {
        PeriodicGraph::new(1, 1, vec![FundEdge::new(0, 0, &[1])]).unwrap()
    }

    #[test]
    fn ring_spectrum_is_cosines() {
        let b = truncate(&z1(), &[(0, 255)], true).unwrap();
        assert_eq!(b.len(), 256);
        assert!(b.degrees.iter().all(|&d| d == 2));
        let ev = spectrum_of_box(&b).unwrap();
        let mut expect: Vec<f64> = (0..256).map(|j| (2.0 * PI * j as f64 / 256.0).cos()).collect();
        expect.sort_by(f64::total_cmp);
        for (a, e) in ev.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn single_edge_has_plus_minus_one() {
        let b = truncate(&z1(), &[(0, 1)], false).unwrap();
        let ev = spectrum_of_box(&b).unwrap();
        assert!((ev[0] + 1.0).abs() < 1e-15 && (ev[1] - 1.0).abs() < 1e-15);
        assert_eq!(zero_mode_count(&b, 1e-12).unwrap(), 0);
    }

    #[test]
    fn empty_and_mismatched_boxes() {
        assert!(matches!(truncate(&z1(), &[(3, 2)], false), Err(Error::EmptyBox)));
        assert!(matches!(truncate(&z1(), &[(0, 2), (0, 2)], false), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn single_vertex_box_is_dropped() {
        // One vertex alone has no surviving edge.
        assert!(matches!(truncate(&z1(), &[(0, 0)], false), Err(Error::EmptyBox)));
    }

    #[test]
    fn block_circulant_route_matches_dense() {
        let g = PeriodicGraph::new(1, 2, vec![FundEdge::new(0, 0, &[1]), FundEdge::new(0, 1, &[0])]).unwrap();
        let b = truncate(&g, &[(0, 31)], true).unwrap();
        let dense = spectrum_of_box(&b).unwrap();
        let circ = spectrum_of_wrapped_box(&b, Exec::Sequential).unwrap();
        assert_eq!(dense.len(), circ.len());
        for (a, c) in dense.iter().zip(&circ) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_list_is_vacuously_inside() {
        let s = SpectrumApprox::from_ranges(vec![(-1.0, 1.0)], 2, 1e-8);
        let r = compare_spectra(&[], &s, 0.1, None).unwrap();
        assert_eq!(r.inside_fraction, 1.0);
    }
}
