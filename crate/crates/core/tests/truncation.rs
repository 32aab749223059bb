use periodic_spectra::catalog::{make_cone, make_counterexample, make_g11};
use periodic_spectra::floquet::{essential_spectrum, DEFAULT_FLAT_TOL};
use periodic_spectra::truncation::{compare_spectra, eigensystem_of_box, spectrum_of_box, truncate, zero_mode_count};
use periodic_spectra::{FundEdge, PeriodicGraph, Vertex};

#[test]
fn open_pendant_chain_is_mostly_inside_its_bands() {
    let e = make_g11();
    let b = truncate(&e.base, &[(0, 199)], false).unwrap();
    assert_eq!(b.len(), 400);
    let (eigs, vectors) = eigensystem_of_box(&b).unwrap();
    let reference = essential_spectrum(&e.base, 256, DEFAULT_FLAT_TOL).unwrap();
    let report = compare_spectra(&eigs, &reference, 0.02, Some((&b, &vectors))).unwrap();
    assert!(report.inside_fraction >= 0.95, "{}", report.inside_fraction);
    assert_eq!(report.boundary_outliers, Some(report.outliers.len()));
}

#[test]
fn wrapped_pendant_ring_is_inside_exactly() {
    let e = make_g11();
    let b = truncate(&e.base, &[(0, 255)], true).unwrap();
    let eigs = spectrum_of_box(&b).unwrap();
    let reference = essential_spectrum(&e.base, 256, DEFAULT_FLAT_TOL).unwrap();
    let report = compare_spectra(&eigs, &reference, 1e-9, None).unwrap();
    assert_eq!(report.inside_fraction, 1.0);
}

#[test]
fn cone_patch_is_an_induced_subgraph() {
    let g = make_cone().perturbed();
    let b = truncate(&g, &[(0, 60), (0, 60)], false).unwrap();
    assert_eq!(b.len(), 61 * 61);
    let corner = b.index_of(&Vertex::new(&[5, 0], 0)).unwrap();
    let glued = b.index_of(&Vertex::new(&[0, 5], 0)).unwrap();
    assert!(b.adjacency[corner].iter().any(|&(j, _)| j == glued));
    assert!(!b.on_boundary[corner]);
    let far = b.index_of(&Vertex::new(&[60, 30], 0)).unwrap();
    assert!(b.on_boundary[far]);
}

#[test]
fn zero_modes_grow_with_the_box() {
    let g = make_counterexample().perturbed();
    let mut last = 0;
    for a in 1..=15 {
        let count = zero_mode_count(&truncate(&g, &[(-a, a)], false).unwrap(), 1e-12).unwrap();
        assert!(count >= last, "box {a}: {count} < {last}");
        assert!(count as i64 > a);
        last = count;
    }
}

#[test]
fn vertex_with_two_pendants_has_a_zero_mode() {
    let star = PeriodicGraph::new(1, 3, vec![FundEdge::new(0, 1, &[0]), FundEdge::new(0, 2, &[0]), FundEdge::new(0, 0, &[1])])
        .unwrap();
    let b = truncate(&star, &[(0, 0)], false).unwrap();
    assert_eq!(b.len(), 3);
    assert!(zero_mode_count(&b, 1e-12).unwrap() >= 1);
}
