//! Floquet matrices, band functions and the essential spectrum of a periodic
//! graph Laplacian.
//!
//! The fiber of the Laplacian at quasimomentum `k ∈ [0, 2π)^d` is the `s × s`
//! matrix
//!
//! ```text
//! L(k)_{ij} = (1/d_i) Σ_{e: i→j} exp(i χ(e)·k)
//! ```
//!
//! It is self-adjoint for the degree-weighted product `⟨ξ, η⟩ = Σ conj(ξ_i) η_i d_i`,
//! so `D^{1/2} L(k) D^{-1/2}` is Hermitian and carries the same eigenvalues.
//! The spectrum of the infinite operator is the union over bands of
//! `λ_i(T^d)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PeriodicGraph;
use crate::par::{self, Exec};

/// Endpoint tolerance for merging touching bands.
pub const MERGE_TOL: f64 = 1e-10;
/// Default width below which a band is reported as a flat point.
pub const DEFAULT_FLAT_TOL: f64 = 1e-8;
/// Hermiticity defect above which a Floquet matrix is rejected.
pub const HERMITIAN_TOL: f64 = 1e-9;
/// How close a target must be to a band interval to count as inside it.
pub const LOCATE_TOL: f64 = 1e-6;
/// Accuracy `locate_state` aims for after refinement.
pub const LOCATE_TARGET: f64 = 1e-8;
const GOLDEN_STEPS: usize = 40;
const BISECT_STEPS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct FloquetMatrix {
    pub k: Vec<f64>,
    pub entries: DMatrix<Complex64>,
}

/// Builds `L(k)`. Each stored edge contributes in both orientations.
pub fn assemble_floquet(g: &PeriodicGraph, k: &[f64]) -> Result<FloquetMatrix> {
    if k.len() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), got: k.len() });
    }
    let s = g.cell_size();
    let mut m = DMatrix::<Complex64>::zeros(s, s);
    for i in 0..s {
        let inv_deg = 1.0 / g.degrees()[i] as f64;
        for e in g.oriented_edges(i) {
            let phase: f64 = e.index.iter().zip(k).map(|(&c, &kj)| c as f64 * kj).sum();
            m[(i, e.target)] += Complex64::from_polar(inv_deg, phase);
        }
    }
    Ok(FloquetMatrix { k: k.to_vec(), entries: m })
}

/// Eigen-decomposition at one quasimomentum.
#[derive(Clone, Debug)]
pub struct BandSample {
    pub k: Vec<f64>,
    /// Ascending.
    pub lambdas: Vec<f64>,
    /// `vectors[h]` is the eigenvector for `lambdas[h]`, normalized in the
    /// degree-weighted cell product.
    pub vectors: Option<Vec<DVector<Complex64>>>,
}

fn hermitian_form(m: &FloquetMatrix, degrees: &[usize]) -> Result<DMatrix<Complex64>> {
    let s = m.entries.nrows();
    if degrees.len() != s || m.entries.ncols() != s {
        return Err(Error::DimensionMismatch { expected: s, got: degrees.len() });
    }
    let sq: Vec<f64> = degrees.iter().map(|&d| (d as f64).sqrt()).collect();
    let h = DMatrix::from_fn(s, s, |i, j| m.entries[(i, j)] * (sq[i] / sq[j]));
    let deviation = (0..s)
        .flat_map(|i| (0..s).map(move |j| (i, j)))
        .map(|(i, j)| (h[(i, j)] - h[(j, i)].conj()).norm())
        .fold(0.0, f64::max);
    if deviation > HERMITIAN_TOL {
        return Err(Error::NonHermitian { deviation });
    }
    Ok(DMatrix::from_fn(s, s, |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5))
}

/// Diagonalizes `D^{1/2} M D^{-1/2}` and maps eigenvectors back by `D^{-1/2}`.
pub fn band_eigensystem(m: &FloquetMatrix, degrees: &[usize]) -> Result<BandSample> {
    let h = hermitian_form(m, degrees)?;
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..degrees.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lambdas = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    let vectors = order
        .iter()
        .map(|&c| {
            let u = eig.eigenvectors.column(c);
            DVector::from_fn(degrees.len(), |i, _| u[i] / (degrees[i] as f64).sqrt())
        })
        .collect();
    Ok(BandSample { k: m.k.clone(), lambdas, vectors: Some(vectors) })
}

/// Ascending band values at `k` without eigenvectors.
pub fn band_values(g: &PeriodicGraph, k: &[f64]) -> Result<Vec<f64>> {
    let m = assemble_floquet(g, k)?;
    let h = hermitian_form(&m, g.degrees())?;
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Weighted residual `‖L(k)ξ − λξ‖` in the cell product.
pub fn eigen_residual(m: &FloquetMatrix, degrees: &[usize], lambda: f64, xi: &DVector<Complex64>) -> f64 {
    let r = &m.entries * xi - xi * Complex64::new(lambda, 0.0);
    r.iter().zip(degrees).map(|(z, &d)| z.norm_sqr() * d as f64).sum::<f64>().sqrt()
}

/// Uniform grid `k_j = 2π t_j / grid_per_axis`, first axis slowest.
pub fn grid_point(dim: usize, grid_per_axis: usize, flat_index: usize) -> Vec<f64> {
    let mut k = vec![0.0; dim];
    let mut rest = flat_index;
    for j in (0..dim).rev() {
        let t = rest % grid_per_axis;
        rest /= grid_per_axis;
        k[j] = 2.0 * PI * t as f64 / grid_per_axis as f64;
    }
    k
}

fn grid_len(dim: usize, grid_per_axis: usize) -> Result<usize> {
    u32::try_from(dim)
        .ok()
        .and_then(|d| grid_per_axis.checked_pow(d))
        .ok_or_else(|| Error::InvalidParameter("k-grid too large".into()))
}

fn check_grid(grid_per_axis: usize) -> Result<()> {
    if grid_per_axis < 2 || !grid_per_axis.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "grid_per_axis must be even and at least 2 (got {grid_per_axis}) so that 0 and π are sampled"
        )));
    }
    Ok(())
}

/// Band values on the whole grid in grid order.
pub fn band_table(g: &PeriodicGraph, grid_per_axis: usize, exec: Exec) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    check_grid(grid_per_axis)?;
    let n = grid_len(g.dim(), grid_per_axis)?;
    par::map_indexed(exec, n, |t| {
        let k = grid_point(g.dim(), grid_per_axis, t);
        band_values(g, &k).map(|ev| (k, ev))
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub flat: bool,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn distance(&self, x: f64) -> f64 {
        if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            0.0
        }
    }
}

/// Finite union of closed intervals approximating the essential spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumApprox {
    pub intervals: Vec<Interval>,
    pub resolution: usize,
    pub flat_tol: f64,
}

impl SpectrumApprox {
    /// Merges raw band ranges and flags narrow ones.
    pub fn from_ranges(mut ranges: Vec<(f64, f64)>, resolution: usize, flat_tol: f64) -> Self {
        ranges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (lo, hi) in ranges {
            match merged.last_mut() {
                Some(last) if lo <= last.1 + MERGE_TOL => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        let intervals = merged
            .into_iter()
            .map(|(lo, hi)| Interval { lo, hi, flat: hi - lo < flat_tol })
            .collect();
        SpectrumApprox { intervals, resolution, flat_tol }
    }

    pub fn flat_points(&self) -> Vec<f64> {
        self.intervals.iter().filter(|iv| iv.flat).map(|iv| 0.5 * (iv.lo + iv.hi)).collect()
    }

    pub fn distance(&self, x: f64) -> f64 {
        self.intervals.iter().map(|iv| iv.distance(x)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        self.distance(x) <= tol
    }
}

/// Per-band `[min, max]` over the grid, in band order (not merged).
pub fn band_ranges(g: &PeriodicGraph, grid_per_axis: usize, exec: Exec) -> Result<Vec<(f64, f64)>> {
    let table = band_table(g, grid_per_axis, exec)?;
    let s = g.cell_size();
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); s];
    for (_, ev) in &table {
        for (r, &x) in ranges.iter_mut().zip(ev) {
            r.0 = r.0.min(x);
            r.1 = r.1.max(x);
        }
    }
    // The spectrum lies in [-1, 1]; only floating-point jitter can push past it.
    for r in &mut ranges {
        debug_assert!(r.0 >= -1.0 - 1e-9 && r.1 <= 1.0 + 1e-9);
        r.0 = r.0.clamp(-1.0, 1.0);
        r.1 = r.1.clamp(-1.0, 1.0);
    }
    Ok(ranges)
}

pub fn essential_spectrum(g: &PeriodicGraph, grid_per_axis: usize, flat_tol: f64) -> Result<SpectrumApprox> {
    essential_spectrum_with(g, grid_per_axis, flat_tol, Exec::default())
}

pub fn essential_spectrum_with(
    g: &PeriodicGraph,
    grid_per_axis: usize,
    flat_tol: f64,
    exec: Exec,
) -> Result<SpectrumApprox> {
    let ranges = band_ranges(g, grid_per_axis, exec)?;
    Ok(SpectrumApprox::from_ranges(ranges, grid_per_axis, flat_tol))
}

/// A band eigenpair hitting a target energy.
#[derive(Clone, Debug)]
pub struct LocatedState {
    /// 0-based band index.
    pub band: usize,
    pub k: Vec<f64>,
    pub lambda: f64,
    /// Weighted-normalized eigenvector of `L(k)` for `lambda`.
    pub xi: DVector<Complex64>,
    /// `|λ_band(k) − target|` actually reached.
    pub mismatch: f64,
}

fn band_value(g: &PeriodicGraph, band: usize, k: &[f64]) -> f64 {
    band_values(g, k).map(|ev| ev[band]).unwrap_or(f64::NAN)
}

/// Golden-section minimization of `f` on `[a, b]`.
fn golden_min(mut a: f64, mut b: f64, steps: usize, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..steps {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Finds band `h` and quasimomentum `k_0` with `λ_h(k_0) ≈ target`.
///
/// The best grid point is refined by golden-section search along each axis.
/// When that stalls (the level set can miss the axis-aligned segments), the
/// band value is bisected along the segment between the best grid point and
/// the nearest grid point on the other side of the target.
pub fn locate_state(g: &PeriodicGraph, target: f64, grid_per_axis: usize) -> Result<LocatedState> {
    locate_state_with(g, target, grid_per_axis, Exec::default())
}

pub fn locate_state_with(
    g: &PeriodicGraph,
    target: f64,
    grid_per_axis: usize,
    exec: Exec,
) -> Result<LocatedState> {
    let table = band_table(g, grid_per_axis, exec)?;
    let s = g.cell_size();
    let d = g.dim();
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); s];
    for (_, ev) in &table {
        for (r, &x) in ranges.iter_mut().zip(ev) {
            r.0 = r.0.min(x);
            r.1 = r.1.max(x);
        }
    }
    let candidates: Vec<usize> = (0..s)
        .filter(|&h| ranges[h].0 - LOCATE_TOL <= target && target <= ranges[h].1 + LOCATE_TOL)
        .collect();
    if candidates.is_empty() {
        return Err(Error::NotInSpectrum { lambda: target, tol: LOCATE_TOL });
    }

    // Best (grid point, band); ties resolve to the first in grid/band order.
    let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
    for (t, (_, ev)) in table.iter().enumerate() {
        for &h in &candidates {
            let err = (ev[h] - target).abs();
            if err < best.2 {
                best = (t, h, err);
            }
        }
    }
    let (t0, band, mut err) = best;
    let mut k = table[t0].0.clone();
    let step = 2.0 * PI / grid_per_axis as f64;

    if err > LOCATE_TARGET {
        for j in 0..d {
            let mut probe = k.clone();
            let (kj, e) = golden_min(k[j] - step, k[j] + step, GOLDEN_STEPS, |x| {
                probe[j] = x;
                (band_value(g, band, &probe) - target).abs()
            });
            if e < err {
                k[j] = kj;
                err = e;
            }
        }
    }

    if err > LOCATE_TARGET {
        // Bracket the target between the best grid point and the nearest
        // grid point on the opposite side, then bisect on the segment.
        let f0 = table[t0].1[band] - target;
        let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        let other = table
            .iter()
            .filter(|(_, ev)| (ev[band] - target) * f0 < 0.0)
            .min_by(|a, b| dist2(&a.0, &table[t0].0).total_cmp(&dist2(&b.0, &table[t0].0)));
        if let Some((kb, _)) = other {
            let ka = &table[t0].0;
            let at = |u: f64| -> Vec<f64> { ka.iter().zip(kb).map(|(a, b)| a + u * (b - a)).collect() };
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..BISECT_STEPS {
                let mid = 0.5 * (lo + hi);
                if (band_value(g, band, &at(mid)) - target) * f0 > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let kb_try = at(0.5 * (lo + hi));
            let e = (band_value(g, band, &kb_try) - target).abs();
            if e < err {
                k = kb_try;
                err = e;
            }
        }
    }
    if err > LOCATE_TARGET {
        log::warn!("locate_state: reached |λ − target| = {err:e} only (target {target})");
    }

    let m = assemble_floquet(g, &k)?;
    let sample = band_eigensystem(&m, g.degrees())?;
    let xi = sample.vectors.expect("band_eigensystem returns vectors")[band].clone();
    Ok(LocatedState { band, lambda: sample.lambdas[band], mismatch: (sample.lambdas[band] - target).abs(), k, xi })
}
