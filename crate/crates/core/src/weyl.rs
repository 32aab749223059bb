//! Weyl sequences for perturbed periodic graphs.
//!
//! A band eigenpair `(λ_h(k_0), ξ_0)` of the base graph is cut off with the
//! tent `ρ_n(m) = Π_j max(0, 1 − |m_j|/n)`:
//!
//! ```text
//! ψ_n(m, i) = exp(i k_0·m) ρ_n(m) (ξ_0)_i
//! ```
//!
//! translated onto a box `I_n(x_n) ⊂ Λ`, embedded into `G'` and normalized.
//! Because the box sits inside the unperturbed part, the defect `K_Λ` kills
//! the translated state exactly and the residual `‖(L_{G'} − λ)Ψ_n‖` equals the
//! residual of the cut-off Bloch wave on the base graph, which is `O(1/n)`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::floquet::{self, assemble_floquet, eigen_residual};
use crate::graph::{apply_laplacian, weighted_norm, Cell, Field, PeriodicGraph, Vertex};
use crate::par::{self, Exec};
use crate::perturbation::{advance, PerturbedGraph};

/// Eigenpair residual accepted by [`build_psi_n`].
pub const EIGENPAIR_TOL: f64 = 1e-9;
/// Default k-grid used to locate band states.
pub const DEFAULT_GRID: usize = 64;

/// `ρ_n(m)`.
pub fn tent_value(n: usize, m: &[i64]) -> f64 {
    let n = n as f64;
    m.iter().map(|&c| (1.0 - (c as f64).abs() / n).max(0.0)).product()
}

/// `Σ_m ρ_n(m)² = ((2n² + 1) / (3n))^d`.
pub fn tent_norm_sq(n: usize, d: usize) -> f64 {
    let n = n as f64;
    ((2.0 * n * n + 1.0) / (3.0 * n)).powi(d as i32)
}

/// `f_l(n) = Σ_{m∈Z} |ρ((m − l)/n) − ρ(m/n)|²`, summed over the finite support.
pub fn lemma33_sum(n: usize, l: i64) -> f64 {
    let span = n as i64 + l.abs();
    (-span..=span)
        .map(|m| {
            let a = tent_value(n, &[m - l]);
            let b = tent_value(n, &[m]);
            (a - b) * (a - b)
        })
        .sum()
}

/// The three pieces of `f_l(n)` for `n > |l| ≥ 1`, on disjoint ranges:
/// the overlap `−n < m < n − |l|`, the left tail and the right tail.
/// The tails both equal `n^{-2} Σ_{k=1}^{|l|} k²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lemma33Parts {
    pub overlap: f64,
    pub left_tail: f64,
    pub right_tail: f64,
}

pub fn lemma33_parts(n: usize, l: i64) -> Result<Lemma33Parts> {
    let l = l.abs();
    let ni = n as i64;
    if l == 0 || ni <= l {
        return Err(Error::InvalidParameter(format!("decomposition needs n > |l| ≥ 1 (n={n}, l={l})")));
    }
    let rho = |m: i64| tent_value(n, &[m]);
    let overlap = (-ni + 1..=ni - l - 1).map(|m| (rho(m + l) - rho(m)).powi(2)).sum();
    let left_tail = (-ni - l + 1..=-ni).map(|m| rho(m + l).powi(2)).sum();
    let right_tail = (ni - l..=ni - 1).map(|m| rho(m).powi(2)).sum();
    Ok(Lemma33Parts { overlap, left_tail, right_tail })
}

/// `n^{-2} Σ_{k=1}^{l} k²`.
pub fn lemma33_tail_closed_form(n: usize, l: i64) -> f64 {
    let l = l.abs() as f64;
    let n = n as f64;
    l * (l + 1.0) * (2.0 * l + 1.0) / 6.0 / (n * n)
}

fn for_each_cell(d: usize, radius: i64, mut f: impl FnMut(&[i64])) {
    if radius < 0 {
        return;
    }
    let mut off = vec![-radius; d];
    loop {
        f(&off);
        if !advance(&mut off, -radius, radius) {
            break;
        }
    }
}

/// The cut-off Bloch wave `ψ_n` on the base graph.
pub fn build_psi_n(g: &PeriodicGraph, lambda: f64, k0: &[f64], xi: &DVector<Complex64>, n: usize) -> Result<Field> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if xi.len() != g.cell_size() {
        return Err(Error::DimensionMismatch { expected: g.cell_size(), got: xi.len() });
    }
    let m = assemble_floquet(g, k0)?;
    let residual = eigen_residual(&m, g.degrees(), lambda, xi);
    if residual > EIGENPAIR_TOL {
        return Err(Error::BadEigenpair { residual });
    }
    let mut psi = Field::new();
    for_each_cell(g.dim(), n as i64 - 1, |cell| {
        let phase: f64 = cell.iter().zip(k0).map(|(&c, &k)| c as f64 * k).sum();
        let amp = Complex64::from_polar(tent_value(n, cell), phase);
        for (i, x) in xi.iter().enumerate() {
            psi.insert(Vertex::new(cell, i), amp * x);
        }
    });
    Ok(psi)
}

/// `T_a ψ`, i.e. `(T_a ψ)(m, i) = ψ(m − a, i)`: support moves to cells near `a`.
pub fn translate(psi: &Field, a: &[i64]) -> Field {
    psi.iter().map(|(v, z)| (v.shifted(a), *z)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct WeylMeta {
    pub band: usize,
    pub k0: Vec<f64>,
    #[serde(skip)]
    pub xi0: DVector<Complex64>,
    pub lambda_band: f64,
    pub n: usize,
    pub x_n: Vertex,
    /// `‖U_0 T ψ_n‖` before normalization.
    pub c_norm: f64,
}

/// A normalized Weyl state on `G'` with its construction data.
#[derive(Clone, Debug)]
pub struct WeylState {
    pub vector: Field,
    /// `T_{π_*(x_n)} ψ_n` on the base graph.
    pub translated: Field,
    pub meta: WeylMeta,
}

/// `locate_state → ψ_n → translate to x_n → U_0 → normalize`.
pub fn build_weyl_state(p: &PerturbedGraph, lambda: f64, n: usize, window: &[(i64, i64)]) -> Result<WeylState> {
    build_weyl_state_with(p, lambda, n, window, DEFAULT_GRID, Exec::default())
}

pub fn build_weyl_state_with(
    p: &PerturbedGraph,
    lambda: f64,
    n: usize,
    window: &[(i64, i64)],
    grid: usize,
    exec: Exec,
) -> Result<WeylState> {
    let report = p.check_condition_p_with(n, window, exec)?;
    let x_n = report.x_n.ok_or(Error::ConditionPFailed { n })?;
    let loc = floquet::locate_state_with(p.base(), lambda, grid, exec)?;
    weyl_state_from(p, &loc, n, x_n)
}

/// Builds the state for a known band point and center.
pub fn weyl_state_from(p: &PerturbedGraph, loc: &floquet::LocatedState, n: usize, x_n: Vertex) -> Result<WeylState> {
    let psi = build_psi_n(p.base(), loc.lambda, &loc.k, &loc.xi, n)?;
    let translated = translate(&psi, &x_n.cell);
    let lifted = p.embed_u0(&translated);
    let c_norm = weighted_norm(&lifted, p)?;
    let vector = lifted.scaled(1.0 / c_norm);
    Ok(WeylState {
        vector,
        translated,
        meta: WeylMeta {
            band: loc.band,
            k0: loc.k.clone(),
            xi0: loc.xi.clone(),
            lambda_band: loc.lambda,
            n,
            x_n,
            c_norm,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Residual {
    /// `‖(L_{G'} − λ)Ψ_n‖` computed on `G'`.
    pub direct: f64,
    /// `‖U_0 T (L_G − λ) ψ_n‖ / c_norm`, computed on the base graph.
    pub via_base: f64,
}

/// Residual of a Weyl state, by both routes.
pub fn residual(p: &PerturbedGraph, w: &WeylState, lambda: f64) -> Result<Residual> {
    let lw = apply_laplacian(&w.vector, p)?;
    let direct = weighted_norm(&lw.sub_scaled(lambda, &w.vector), p)?;
    let lb = apply_laplacian(&w.translated, p.base())?;
    let base_res = p.embed_u0(&lb.sub_scaled(lambda, &w.translated));
    let via_base = weighted_norm(&base_res, p)? / w.meta.c_norm;
    Ok(Residual { direct, via_base })
}

/// `c_0^{-1} ((2n²+1)/(3n))^{-d/2}`.
pub fn sup_norm_bound(c0: f64, n: usize, d: usize) -> f64 {
    1.0 / (c0 * tent_norm_sq(n, d).sqrt())
}

/// Upper bound on the residual from the Cauchy–Schwarz chain:
///
/// ```text
/// r² ≤ (C_0/c_0)² #B ((2n²+1)/(3n))^{-1} Σ_{e∈B} r_e Σ_{j: χ_j(e)≠0} f_{χ_j(e)}(n)
/// ```
///
/// `B` are the oriented bridges leaving cell 0 and `r_e` counts the nonzero
/// components of `χ(e)` (1 for every bridge along a lattice axis).
pub fn residual_bound(g: &PeriodicGraph, c0: f64, big_c0: f64, n: usize) -> f64 {
    let bridges = g.bridges();
    let count = bridges.len() as f64;
    let sum: f64 = bridges
        .iter()
        .map(|(_, e)| {
            let nonzero: Vec<i64> = e.index.iter().copied().filter(|&c| c != 0).collect();
            nonzero.len() as f64 * nonzero.iter().map(|&c| lemma33_sum(n, c)).sum::<f64>()
        })
        .sum();
    ((big_c0 / c0).powi(2) * count * sum / tent_norm_sq(n, 1)).sqrt()
}

/// Base vertices of `I_n(x_n)`.
pub fn box_vertices(g: &PeriodicGraph, center: &[i64], n: usize) -> Vec<Vertex> {
    let radius = n as i64 + g.propagation_length() as i64 - 1;
    let mut out = Vec::new();
    for_each_cell(g.dim(), radius, |off| {
        let cell: Cell = center.iter().zip(off).map(|(c, o)| c + o).collect();
        for label in 0..g.cell_size() {
            out.push(Vertex { cell: cell.clone(), label });
        }
    });
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualRow {
    pub n: usize,
    pub x_n: Vertex,
    pub residual: f64,
    pub via_base: f64,
    pub sup_norm: f64,
    pub sup_bound: f64,
    pub bound: f64,
    /// Whether `K_Λ T ψ_n` came out exactly zero.
    pub defect_zero: bool,
    pub c0: f64,
    pub big_c0: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub lambda: f64,
    pub band: usize,
    pub k0: Vec<f64>,
    pub lambda_band: f64,
    pub rows: Vec<ResidualRow>,
    /// Least-squares slope of `ln residual` against `ln n`.
    pub slope: Option<f64>,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() || ys.iter().any(|&y| y <= 0.0) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// One row of a residual sweep.
pub fn residual_row(p: &PerturbedGraph, loc: &floquet::LocatedState, lambda: f64, n: usize, window: &[(i64, i64)], exec: Exec) -> Result<ResidualRow> {
    let report = p.check_condition_p_with(n, window, exec)?;
    let x_n = report.x_n.ok_or(Error::ConditionPFailed { n })?;
    let w = weyl_state_from(p, loc, n, x_n.clone())?;
    let res = residual(p, &w, lambda)?;
    let defect_zero = p.apply_k_lambda(&w.translated)?.is_zero();
    let support = box_vertices(p.base(), &x_n.cell, n);
    let u0 = p.u0_constants(&support)?;
    let d = p.base().dim();
    Ok(ResidualRow {
        n,
        x_n,
        residual: res.direct,
        via_base: res.via_base,
        sup_norm: w.vector.max_abs(),
        sup_bound: sup_norm_bound(u0.c0, n, d),
        bound: residual_bound(p.base(), u0.c0, u0.big_c0, n),
        defect_zero,
        c0: u0.c0,
        big_c0: u0.big_c0,
    })
}

/// Residuals for each `n`, ordered as given.
pub fn residual_sweep(
    p: &PerturbedGraph,
    lambda: f64,
    ns: &[usize],
    window: &[(i64, i64)],
    grid: usize,
    exec: Exec,
) -> Result<ResidualReport> {
    let loc = floquet::locate_state_with(p.base(), lambda, grid, exec)?;
    // Each row scans sequentially; the sweep itself is the parallel axis.
    let rows: Vec<ResidualRow> = par::map_slice(exec, ns, |&n| residual_row(p, &loc, lambda, n, window, Exec::Sequential))
        .into_iter()
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.residual).collect();
    Ok(ResidualReport {
        lambda,
        band: loc.band,
        k0: loc.k.clone(),
        lambda_band: loc.lambda,
        slope: loglog_slope(&xs, &ys),
        rows,
    })
}
