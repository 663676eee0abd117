//! Cross-checks against independent dense oracles.

use nalgebra::DMatrix;
use trispline::*;

fn triangle_grid(k: usize, umax: f64) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for a in 1..=k {
        for b in 0..=a {
            let u = umax * (a as f64 - 0.3) / k as f64;
            let v = u * b as f64 / a as f64;
            pts.push((u, v));
        }
    }
    pts
}

fn basis_matrix(space: &HierSpace, funcs: &[usize], pts: &[(f64, f64)], scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(pts.len(), funcs.len(), |r, c| {
        let (u, v) = pts[r];
        space.eval(funcs[c], scale * u, scale * v, (0, 0)).unwrap()
    })
}

fn lsq_residual(mat: &DMatrix<f64>, rhs: &DMatrix<f64>) -> f64 {
    let svd = mat.clone().svd(true, true);
    let x = svd.solve(rhs, 1e-12).unwrap();
    (mat * x - rhs).amax()
}

fn dense_membership(p: usize, n: u32, f: impl Fn(f64, f64) -> f64) -> f64 {
    let space = HierSpace::build(p, n).unwrap();
    let pts = triangle_grid(60, 1.0);
    let funcs: Vec<usize> = (0..space.dimension()).collect();
    let mat = basis_matrix(&space, &funcs, &pts, 1.0);
    let rhs = DMatrix::from_iterator(pts.len(), 1, pts.iter().map(|&(u, v)| f(u, v)));
    lsq_residual(&mat, &rhs)
}

#[test]
fn v_squared_lies_in_the_quadratic_space() {
    let dense = dense_membership(2, 4, |_, v| v * v);
    assert!(dense < 1e-9, "{dense}");
    let via_projector = geometry::membership_residual(2, 4, |_, v| v * v).unwrap();
    assert!(via_projector < 1e-9);
}

#[test]
fn cubic_monomial_is_not_representable_at_degree_two() {
    let dense = dense_membership(2, 4, |_, v| v * v * v);
    assert!(dense > 1e-6, "{dense}");
    let via_projector = geometry::membership_residual(2, 4, |_, v| v * v * v).unwrap();
    assert!(via_projector > 1e-6);
}

#[test]
fn curved_map_membership_matches_dense_oracle() {
    let f = |u: f64, v: f64| u + 0.1 * u * v;
    assert!(dense_membership(2, 4, f) < 1e-9);
    assert!(dense_membership(1, 3, f) > 1e-5);
    let geom = RationalGeometry::curved(2, 4, 0.1, 0.1).unwrap();
    assert!(geometry::check_membership(&geom, f).unwrap().representable);
}

#[test]
fn restriction_to_half_triangle_spans_coarser_space() {
    let (p, n) = (2, 5);
    let fine = HierSpace::build(p, n).unwrap();
    let coarse = HierSpace::build(p, n - 1).unwrap();
    let pts = triangle_grid(70, 0.5);
    let fine_funcs: Vec<usize> = (0..fine.dimension())
        .filter(|&k| fine.support_rect(k).s0.to_f64() < 0.5)
        .collect();
    let coarse_funcs: Vec<usize> = (0..coarse.dimension()).collect();
    let a = basis_matrix(&fine, &fine_funcs, &pts, 1.0);
    let b = basis_matrix(&coarse, &coarse_funcs, &pts, 2.0);
    let worst = lsq_residual(&a, &b).max(lsq_residual(&b, &a));
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn omega_projection_of_weight_reciprocal_is_exact() {
    // ψ = (φ ∘ F) F0 = 1 for every F0 when φ ∘ F = 1 / F0
    let p = 2;
    let n0 = coarse_level(p);
    let geom = RationalGeometry::from_closed_form(p, n0, |u, _| 1.0 + 0.2 * u, |u, _| u, |_, v| v).unwrap();
    let proj = Projector::new(p, n0 + 1, default_gauss_order(p)).unwrap();
    let c = proj.project_param(|s, t| {
        let mut scratch = Vec::new();
        let g = geom.eval_param(s, t, &mut scratch).unwrap();
        (1.0 / g.f0) * g.f0
    });
    assert!(c.coefficients.iter().all(|x| (x - 1.0).abs() < 1e-12));
}

#[test]
fn identity_geometry_projection_matches_plain_projection() {
    let p = 2;
    let n0 = coarse_level(p);
    let geom = RationalGeometry::identity(p, n0).unwrap();
    let proj = Projector::new(p, n0 + 1, default_gauss_order(p)).unwrap();
    let f = TestFunction::exp();
    let plain = proj.project(|u, v| f.value(u, v));
    let mapped = proj.project_param(|s, t| {
        let mut scratch = Vec::new();
        let g = geom.eval_param(s, t, &mut scratch).unwrap();
        f.value(g.y[0], g.y[1]) * g.f0
    });
    for (a, b) in plain.coefficients.iter().zip(&mapped.coefficients) {
        assert!((a - b).abs() < 1e-12);
    }
}
