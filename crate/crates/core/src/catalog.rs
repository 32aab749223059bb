//! Builders for the named example graphs, with reference spectra and
//! closed-form `Λ` predicates.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::floquet::{SpectrumApprox, DEFAULT_FLAT_TOL};
use crate::graph::{FundEdge, PeriodicGraph, Vertex};
use crate::par::{self, Exec};
use crate::perturbation::{advance, Perturbation, PerturbedGraph};

pub type LambdaPredicate = Arc<dyn Fn(&Vertex) -> bool + Send + Sync>;

/// A named graph with the data needed to check it.
#[derive(Clone)]
pub struct CatalogEntry {
    pub name: String,
    /// One-line description of the graph and its known spectrum.
    pub note: String,
    pub base: PeriodicGraph,
    pub perturbation: Option<Arc<dyn Perturbation>>,
    /// Essential spectrum of the base graph.
    pub reference_spectrum: Option<SpectrumApprox>,
    pub reference_lambda: Option<LambdaPredicate>,
}

impl std::fmt::Debug for CatalogEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CatalogEntry")
            .field("name", &self.name)
            .field("base", &self.base)
            .field("perturbation", &self.perturbation.as_ref().map(|r| r.name()))
            .finish()
    }
}

impl CatalogEntry {
    pub fn perturbed(&self) -> PerturbedGraph {
        match &self.perturbation {
            Some(rule) => PerturbedGraph::new(self.base.clone(), rule.clone()),
            None => PerturbedGraph::unperturbed(self.base.clone()),
        }
    }
}

fn reference(ranges: Vec<(f64, f64)>) -> SpectrumApprox {
    SpectrumApprox::from_ranges(ranges, 0, DEFAULT_FLAT_TOL)
}

/// `Z^d` with one vertex per cell.
pub fn make_lattice(d: usize) -> Result<PeriodicGraph> {
    if d == 0 {
        return Err(Error::InvalidParameter("lattice dimension must be ≥ 1".into()));
    }
    let edges = (0..d)
        .map(|j| {
            let mut e = vec![0i64; d];
            e[j] = 1;
            FundEdge::new(0, 0, &e)
        })
        .collect();
    PeriodicGraph::new(d, 1, edges)
}

pub fn lattice_entry(d: usize) -> Result<CatalogEntry> {
    Ok(CatalogEntry {
        name: format!("lattice{d}"),
        note: format!("square lattice Z^{d}; spectrum [-1,1]"),
        base: make_lattice(d)?,
        perturbation: None,
        reference_spectrum: Some(reference(vec![(-1.0, 1.0)])),
        reference_lambda: Some(Arc::new(|_| true)),
    })
}

/// `Z` with a pendant at every vertex.
pub fn make_g11() -> CatalogEntry {
    let base = PeriodicGraph::new(1, 2, vec![FundEdge::new(0, 0, &[1]), FundEdge::new(0, 1, &[0])])
        .expect("pendant chain is a valid periodic graph");
    CatalogEntry {
        name: "g11".into(),
        note: "chain with one pendant per vertex; spectrum [-1,-1/3] ∪ [1/3,1]".into(),
        base,
        perturbation: None,
        reference_spectrum: Some(reference(vec![(-1.0, -1.0 / 3.0), (1.0 / 3.0, 1.0)])),
        reference_lambda: Some(Arc::new(|_| true)),
    }
}

/// `Z` with a pendant at every even vertex: labels even, odd, pendant.
pub fn make_g21() -> CatalogEntry {
    let base = PeriodicGraph::new(
        1,
        3,
        vec![FundEdge::new(0, 1, &[0]), FundEdge::new(1, 0, &[1]), FundEdge::new(0, 2, &[0])],
    )
    .expect("pendant-on-even chain is a valid periodic graph");
    let r = 1.0 / 3f64.sqrt();
    CatalogEntry {
        name: "g21".into(),
        note: "chain with a pendant at every second vertex; spectrum [-1,-1/√3] ∪ {0} ∪ [1/√3,1]".into(),
        base,
        perturbation: None,
        reference_spectrum: Some(reference(vec![(-1.0, -r), (0.0, 0.0), (r, 1.0)])),
        reference_lambda: Some(Arc::new(|_| true)),
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Pendant attached to label 0 of every cell where a seeded Bernoulli(`p`)
/// field fires. The field is a hash of `(seed, cell)`, so queries are pure.
#[derive(Clone, Debug)]
pub struct RandomPendant {
    pub p: f64,
    pub seed: u64,
    /// Label of the added pendant (the base cell size).
    pub pendant_label: usize,
}

impl RandomPendant {
    pub fn new(base: &PeriodicGraph, p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("p = {p} is not in [0, 1]")));
        }
        Ok(RandomPendant { p, seed, pendant_label: base.cell_size() })
    }

    /// `q_x`: whether the cell carries a pendant.
    pub fn fires(&self, cell: &[i64]) -> bool {
        if self.p >= 1.0 {
            return true;
        }
        let mut h = splitmix64(self.seed);
        for &c in cell {
            h = splitmix64(h ^ c as u64);
        }
        let u = (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        u < self.p
    }
}

impl Perturbation for RandomPendant {
    fn name(&self) -> String {
        format!("random_pendant(p={},seed={})", self.p, self.seed)
    }
    fn keeps_vertex(&self, _v: &Vertex) -> bool {
        true
    }
    fn has_added_vertex(&self, v: &Vertex) -> bool {
        v.label == self.pendant_label && self.fires(&v.cell)
    }
    fn added_labels_at(&self, cell: &[i64]) -> Vec<usize> {
        if self.fires(cell) {
            vec![self.pendant_label]
        } else {
            Vec::new()
        }
    }
    fn added_edges(&self, v: &Vertex) -> Vec<Vertex> {
        if !self.fires(&v.cell) {
            return Vec::new();
        }
        match v.label {
            0 => vec![Vertex { cell: v.cell.clone(), label: self.pendant_label }],
            l if l == self.pendant_label => vec![Vertex { cell: v.cell.clone(), label: 0 }],
            _ => Vec::new(),
        }
    }
    fn influence_radius(&self) -> Option<usize> {
        Some(0)
    }
}

pub fn make_random_pendant(d: usize, p: f64, seed: u64) -> Result<CatalogEntry> {
    let base = make_lattice(d)?;
    let rule = Arc::new(RandomPendant::new(&base, p, seed)?);
    let field = rule.clone();
    Ok(CatalogEntry {
        name: "random_pendant".into(),
        note: format!("Z^{d} with a pendant at each vertex independently with probability {p} (seed {seed})"),
        base,
        perturbation: Some(rule),
        reference_spectrum: Some(reference(vec![(-1.0, 1.0)])),
        reference_lambda: Some(Arc::new(move |v| v.label == 0 && !field.fires(&v.cell))),
    })
}

fn require_dim(base: &PeriodicGraph, d: usize, what: &str) -> Result<()> {
    if base.dim() != d {
        return Err(Error::InvalidPerturbation(format!("{what} needs a {d}-dimensional base graph, got {}", base.dim())));
    }
    Ok(())
}

/// Quadrant `x_1, x_2 ≥ 0`, with label-0 vertices `(a,0)` and `(0,a)` joined
/// for every `a ≥ 1`.
#[derive(Clone, Debug, Default)]
pub struct Cone;

impl Perturbation for Cone {
    fn name(&self) -> String {
        "cone".into()
    }
    fn keeps_vertex(&self, v: &Vertex) -> bool {
        v.cell.iter().all(|&c| c >= 0)
    }
    fn has_added_vertex(&self, _v: &Vertex) -> bool {
        false
    }
    fn added_labels_at(&self, _cell: &[i64]) -> Vec<usize> {
        Vec::new()
    }
    fn added_edges(&self, v: &Vertex) -> Vec<Vertex> {
        if v.label != 0 || v.cell.len() != 2 {
            return Vec::new();
        }
        match (v.cell[0], v.cell[1]) {
            (a, 0) if a >= 1 => vec![Vertex::new(&[0, a], 0)],
            (0, a) if a >= 1 => vec![Vertex::new(&[a, 0], 0)],
            _ => Vec::new(),
        }
    }
}

/// Upper half-plane `x_2 ≥ 0`.
#[derive(Clone, Debug, Default)]
pub struct HalfPlane;

impl Perturbation for HalfPlane {
    fn name(&self) -> String {
        "half_plane".into()
    }
    fn keeps_vertex(&self, v: &Vertex) -> bool {
        v.cell.get(1).is_some_and(|&c| c >= 0)
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
}

pub fn make_cone() -> CatalogEntry {
    CatalogEntry {
        name: "cone".into(),
        note: "quadrant of Z^2 with the two boundary rays glued by extra edges; spectrum [-1,1]".into(),
        base: make_lattice(2).expect("Z^2"),
        perturbation: Some(Arc::new(Cone)),
        reference_spectrum: Some(reference(vec![(-1.0, 1.0)])),
        reference_lambda: Some(Arc::new(|v| v.cell[0] >= 1 && v.cell[1] >= 1)),
    }
}

pub fn make_half_plane() -> CatalogEntry {
    CatalogEntry {
        name: "half_plane".into(),
        note: "upper half-plane of Z^2; spectrum [-1,1]".into(),
        base: make_lattice(2).expect("Z^2"),
        perturbation: Some(Arc::new(HalfPlane)),
        reference_spectrum: Some(reference(vec![(-1.0, 1.0)])),
        reference_lambda: Some(Arc::new(|v| v.cell[1] >= 1)),
    }
}

/// A second pendant (label = base cell size) on label 0 of every cell `x ≥ 0`
/// of a 1-D base.
#[derive(Clone, Debug)]
pub struct DoublePendant {
    pub pendant_label: usize,
}

impl Perturbation for DoublePendant {
    fn name(&self) -> String {
        "counterexample".into()
    }
    fn keeps_vertex(&self, _v: &Vertex) -> bool {
        true
    }
    fn has_added_vertex(&self, v: &Vertex) -> bool {
        v.label == self.pendant_label && v.cell[0] >= 0
    }
    fn added_labels_at(&self, cell: &[i64]) -> Vec<usize> {
        if cell[0] >= 0 {
            vec![self.pendant_label]
        } else {
            Vec::new()
        }
    }
    fn added_edges(&self, v: &Vertex) -> Vec<Vertex> {
        if v.cell[0] < 0 {
            return Vec::new();
        }
        match v.label {
            0 => vec![Vertex { cell: v.cell.clone(), label: self.pendant_label }],
            l if l == self.pendant_label => vec![Vertex { cell: v.cell.clone(), label: 0 }],
            _ => Vec::new(),
        }
    }
}

/// The pendant chain with a second pendant on every vertex `x ≥ 0`.
///
/// `Λ` is every base vertex whose degree and edges survive: all cells `x < 0`
/// plus the original pendants `(x,1)` for `x ≥ 0`.
pub fn make_counterexample() -> CatalogEntry {
    let g11 = make_g11();
    CatalogEntry {
        name: "counterexample".into(),
        note: "pendant chain with a second pendant on each vertex x ≥ 0; base spectrum [-1,-1/3] ∪ [1/3,1], \
               0 is added to the essential spectrum"
            .into(),
        perturbation: Some(Arc::new(DoublePendant { pendant_label: 2 })),
        base: g11.base,
        reference_spectrum: g11.reference_spectrum,
        reference_lambda: Some(Arc::new(|v| v.cell[0] < 0 || v.label == 1)),
    }
}

/// Builds a named perturbation rule on `base`. Parameters come as
/// `key=value` pairs (`p`, `seed` for `random_pendant`).
pub fn perturbation_by_name(base: &PeriodicGraph, name: &str, params: &[(String, String)]) -> Result<Arc<dyn Perturbation>> {
    let get = |key: &str| params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    for (k, _) in params {
        let allowed: &[&str] = if name == "random_pendant" { &["p", "seed"] } else { &[] };
        if !allowed.contains(&k.as_str()) {
            return Err(Error::Parse(format!("unknown parameter {k:?} for perturbation {name:?}")));
        }
    }
    match name {
        "identity" | "none" => Ok(Arc::new(crate::perturbation::Identity)),
        "random_pendant" => {
            let p = get("p")
                .ok_or_else(|| Error::Parse("random_pendant needs p".into()))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad p: {e}")))?;
            let seed = get("seed")
                .unwrap_or("0")
                .parse::<u64>()
                .map_err(|e| Error::Parse(format!("bad seed: {e}")))?;
            Ok(Arc::new(RandomPendant::new(base, p, seed)?))
        }
        "cone" => {
            require_dim(base, 2, "cone")?;
            Ok(Arc::new(Cone))
        }
        "half_plane" => {
            require_dim(base, 2, "half_plane")?;
            Ok(Arc::new(HalfPlane))
        }
        "counterexample" => {
            require_dim(base, 1, "counterexample")?;
            Ok(Arc::new(DoublePendant { pendant_label: base.cell_size() }))
        }
        other => Err(Error::Parse(format!("unknown builtin perturbation {other:?}"))),
    }
}

/// Looks up a catalog entry by name (`lattice<d>`, `g11`, `g21`, `cone`,
/// `half_plane`, `counterexample`, `random_pendant`).
pub fn entry_by_name(name: &str) -> Result<CatalogEntry> {
    match name {
        "g11" => Ok(make_g11()),
        "g21" => Ok(make_g21()),
        "cone" => Ok(make_cone()),
        "half_plane" => Ok(make_half_plane()),
        "counterexample" => Ok(make_counterexample()),
        "random_pendant" => make_random_pendant(2, 0.5, 0),
        _ => match name.strip_prefix("lattice").map(str::parse::<usize>) {
            Some(Ok(d)) if d >= 1 => lattice_entry(d),
            _ => Err(Error::Parse(format!("unknown catalog graph {name:?}"))),
        },
    }
}

/// Names with one-line descriptions, in listing order.
pub fn list() -> Vec<(String, String)> {
    ["lattice1", "lattice2", "lattice3", "g11", "g21", "random_pendant", "cone", "half_plane", "counterexample"]
        .iter()
        .map(|n| {
            let e = entry_by_name(n).expect("listed names resolve");
            (e.name, e.note)
        })
        .collect()
}

/// `P(I_n(x) ⊂ Λ) = (1-p)^{(2n+1)^d}` for the random pendant lattice.
pub fn p_window_probability(n: usize, p: f64, d: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p = {p} is not in [0, 1]")));
    }
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter("need n ≥ 1 and d ≥ 1".into()));
    }
    let cells = (2 * n + 1).pow(d as u32) as f64;
    Ok((1.0 - p).powf(cells))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub trials: usize,
    pub hits: usize,
    pub estimate: f64,
    pub std_error: f64,
}

/// Fraction of disjoint boxes `I_n` (laid side by side along the first axis)
/// that lie inside `Λ` for a random pendant lattice.
///
/// Boxes are disjoint, so their outcomes are independent draws; `Λ` is
/// queried without the cache. The count is exact, so the result does not
/// depend on `exec`.
pub fn monte_carlo_window(d: usize, p: f64, seed: u64, n: usize, trials: usize, exec: Exec) -> Result<MonteCarloEstimate> {
    if n == 0 || trials == 0 {
        return Err(Error::InvalidParameter("need n ≥ 1 and at least one trial".into()));
    }
    let base = make_lattice(d)?;
    let rule = Arc::new(RandomPendant::new(&base, p, seed)?);
    let g = PerturbedGraph::new(base, rule);
    let radius = (n + g.base().propagation_length() - 1) as i64;
    let side = 2 * radius + 1;
    const CHUNK: usize = 4096;
    let chunks = trials.div_ceil(CHUNK);
    let counts = par::map_indexed(exec, chunks, |c| {
        let mut hits = 0usize;
        for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
            let mut center = vec![0i64; d];
            center[0] = t as i64 * side;
            let mut off = vec![-radius; d];
            let mut inside = true;
            loop {
                let cell: Vec<i64> = center.iter().zip(&off).map(|(a, b)| a + b).collect();
                if !g.lambda_contains_uncached(&Vertex::new(&cell, 0)).unwrap_or(false) {
                    inside = false;
                    break;
                }
                if !advance(&mut off, -radius, radius) {
                    break;
                }
            }
            hits += inside as usize;
        }
        hits
    });
    let hits: usize = counts.into_iter().sum();
    let est = hits as f64 / trials as f64;
    Ok(MonteCarloEstimate { trials, hits, estimate: est, std_error: (est * (1.0 - est) / trials as f64).sqrt() })
}

/// Counts vertices where the computed `Λ` disagrees with the closed form on
/// a 1-D or 2-D window of cells (base vertices outside `G_0` count as not in
/// `Λ`).
pub fn lambda_mismatches(entry: &CatalogEntry, window: &[(i64, i64)]) -> Result<usize> {
    let pred = entry
        .reference_lambda
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter(format!("{} has no closed-form Λ", entry.name)))?;
    let g = entry.perturbed();
    let s = entry.base.cell_size();
    if window.len() != entry.base.dim() {
        return Err(Error::DimensionMismatch { expected: entry.base.dim(), got: window.len() });
    }
    let lo = window.iter().map(|w| w.0).min().unwrap_or(0);
    let hi = window.iter().map(|w| w.1).max().unwrap_or(0);
    let mut count = 0;
    let mut cursor = vec![lo; window.len()];
    loop {
        if cursor.iter().zip(window).all(|(c, w)| *c >= w.0 && *c <= w.1) {
            for label in 0..s {
                let v = Vertex::new(&cursor, label);
                let computed = g.in_common(&v) && g.lambda_contains_uncached(&v)?;
                let expected = g.in_common(&v) && pred(&v);
                count += (computed != expected) as usize;
            }
        }
        if !advance(&mut cursor, lo, hi) {
            return Ok(count);
        }
    }
}
