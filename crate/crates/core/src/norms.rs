//! Element quadrature and Sobolev (semi)norms on Δ and on mapped domains Ω.

use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::geometry::{GeomPoint, RationalGeometry};
use crate::mesh::{HierElement, HierMesh};
use crate::projector::SplineFunction;
use crate::quadrature::{QuadPoint, QuadRule};
use crate::space::Jet;
use rayon::prelude::*;
use serde::Serialize;

pub type Scratch = Vec<(usize, Jet)>;

/// A function on Δ that can report its jet at a quadrature node.
pub trait Field: Sync {
    fn jet(&self, qp: &QuadPoint, scratch: &mut Scratch) -> Jet;

    fn value(&self, qp: &QuadPoint, scratch: &mut Scratch) -> f64 {
        self.jet(qp, scratch).val
    }
}

impl Field for TestFunction {
    fn jet(&self, qp: &QuadPoint, _: &mut Scratch) -> Jet {
        TestFunction::jet(self, qp.u, qp.v)
    }

    fn value(&self, qp: &QuadPoint, _: &mut Scratch) -> f64 {
        TestFunction::value(self, qp.u, qp.v)
    }
}

impl Field for SplineFunction<'_> {
    fn jet(&self, qp: &QuadPoint, scratch: &mut Scratch) -> Jet {
        self.jet_param(qp.s, qp.t, scratch)
    }

    fn value(&self, qp: &QuadPoint, _: &mut Scratch) -> f64 {
        self.space.value_param(self.coeffs, qp.s, qp.t)
    }
}

impl<F: Fn(&QuadPoint) -> Jet + Sync> Field for F {
    fn jet(&self, qp: &QuadPoint, _: &mut Scratch) -> Jet {
        self(qp)
    }
}

/// `a - b`.
pub struct Difference<'a, A: ?Sized, B: ?Sized>(pub &'a A, pub &'a B);

impl<A: Field + ?Sized, B: Field + ?Sized> Field for Difference<'_, A, B> {
    fn jet(&self, qp: &QuadPoint, scratch: &mut Scratch) -> Jet {
        let mut j = self.0.jet(qp, scratch);
        j.axpy(-1.0, &self.1.jet(qp, scratch));
        j
    }

    fn value(&self, qp: &QuadPoint, scratch: &mut Scratch) -> f64 {
        self.0.value(qp, scratch) - self.1.value(qp, scratch)
    }
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// `∫_δ f` via the pulled-back tensor rule (Duffy on the apex triangle).
pub fn integrate_element(element: &HierElement, quad: &QuadRule, mut f: impl FnMut(&QuadPoint) -> f64) -> f64 {
    let r = &element.rect;
    quad.points(r.s0, r.s1, r.t0, r.t1).iter().map(|qp| qp.weight * f(qp)).sum()
}

/// `∫_Δ f` summed over the mesh.
pub fn integrate_mesh<F: Fn(&QuadPoint) -> f64 + Sync>(mesh: &HierMesh, quad: &QuadRule, f: F) -> f64 {
    let parts: Vec<f64> = mesh.elements().par_iter().map(|e| integrate_element(e, quad, &f)).collect();
    pairwise_sum(&parts)
}

fn seminorm_integrand(j: &Jet, q: usize) -> f64 {
    match q {
        0 => j.val * j.val,
        1 => j.du * j.du + j.dv * j.dv,
        // one term per multi-index |α| = 2
        _ => j.duu * j.duu + j.duv * j.duv + j.dvv * j.dvv,
    }
}

/// Seminorm `|φ|_{H^q}` on one element (or one mesh) with per-element values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolevValue {
    pub order: usize,
    /// Per-element seminorms, indexed like the mesh.
    pub per_element: Vec<f64>,
    pub value: f64,
}

pub fn element_seminorm_sq<F: Field + ?Sized>(
    element: &HierElement,
    quad: &QuadRule,
    field: &F,
    q: usize,
    scratch: &mut Scratch,
) -> f64 {
    let r = &element.rect;
    let pts = quad.points(r.s0, r.s1, r.t0, r.t1);
    if q == 0 {
        return pts
            .iter()
            .map(|qp| {
                let x = field.value(qp, scratch);
                qp.weight * x * x
            })
            .sum();
    }
    pts.iter().map(|qp| qp.weight * seminorm_integrand(&field.jet(qp, scratch), q)).sum()
}

pub fn sobolev_seminorm<F: Field + ?Sized>(mesh: &HierMesh, quad: &QuadRule, field: &F, q: usize) -> Result<SobolevValue> {
    if q > 2 {
        return Err(Error::UnsupportedDerivative(q));
    }
    let sq: Vec<f64> = mesh
        .elements()
        .par_iter()
        .map_init(Vec::new, |scratch, e| element_seminorm_sq(e, quad, field, q, scratch))
        .collect();
    let value = pairwise_sum(&sq).sqrt();
    Ok(SobolevValue { order: q, per_element: sq.into_iter().map(f64::sqrt).collect(), value })
}

/// A function on Ω evaluated through the pullback: value and physical gradient at the
/// image of a Δ node.
pub trait OmegaField: Sync {
    fn eval(&self, qp: &QuadPoint, g: &GeomPoint, scratch: &mut Scratch) -> (f64, [f64; 2]);
}

impl OmegaField for TestFunction {
    fn eval(&self, _: &QuadPoint, g: &GeomPoint, _: &mut Scratch) -> (f64, [f64; 2]) {
        let j = self.jet(g.y[0], g.y[1]);
        (j.val, [j.du, j.dv])
    }
}

/// `Π_V φ = (Π ψ / F0) ∘ F^{-1}` represented on Δ by the coefficients of `Π ψ`.
pub struct MappedSpline<'a> {
    pub spline: SplineFunction<'a>,
    pub geometry: &'a RationalGeometry,
}

impl OmegaField for MappedSpline<'_> {
    fn eval(&self, qp: &QuadPoint, g: &GeomPoint, scratch: &mut Scratch) -> (f64, [f64; 2]) {
        let num = self.spline.jet_param(qp.s, qp.t, scratch);
        let w = self.geometry.space().combine_at(&self.geometry.f0, qp.s, qp.t, scratch);
        let val = num.val / w.val;
        let w2 = w.val * w.val;
        let gx = [(num.du * w.val - num.val * w.du) / w2, (num.dv * w.val - num.val * w.dv) / w2];
        (val, g.push_gradient(gx))
    }
}

pub struct OmegaDifference<'a, A: ?Sized, B: ?Sized>(pub &'a A, pub &'a B);

impl<A: OmegaField + ?Sized, B: OmegaField + ?Sized> OmegaField for OmegaDifference<'_, A, B> {
    fn eval(&self, qp: &QuadPoint, g: &GeomPoint, scratch: &mut Scratch) -> (f64, [f64; 2]) {
        let (a, ga) = self.0.eval(qp, g, scratch);
        let (b, gb) = self.1.eval(qp, g, scratch);
        (a - b, [ga[0] - gb[0], ga[1] - gb[1]])
    }
}

/// `|φ|_{H^q(Ω)}` for `q ∈ {0, 1}`, integrated on Δ with the factor `|det ∇F|`.
pub fn omega_seminorm<F: OmegaField + ?Sized>(
    mesh: &HierMesh,
    quad: &QuadRule,
    geom: &RationalGeometry,
    field: &F,
    q: usize,
) -> Result<SobolevValue> {
    if q > 1 {
        return Err(Error::UnsupportedDerivative(q));
    }
    let parts: Vec<Result<f64>> = mesh
        .elements()
        .par_iter()
        .map_init(Vec::new, |scratch, e| {
            let mut acc = 0.0;
            for qp in quad.points(e.rect.s0, e.rect.s1, e.rect.t0, e.rect.t1) {
                let g = geom.eval_param(qp.s, qp.t, scratch)?;
                let (val, grad) = field.eval(&qp, &g, scratch);
                let integrand = if q == 0 { val * val } else { grad[0] * grad[0] + grad[1] * grad[1] };
                acc += qp.weight * g.det.abs() * integrand;
            }
            Ok(acc)
        })
        .collect();
    let sq = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let value = pairwise_sum(&sq).sqrt();
    Ok(SobolevValue { order: q, per_element: sq.into_iter().map(f64::sqrt).collect(), value })
}

/// Full norm `‖φ‖_{H^k(Ω)}`, `k ≤ 1`.
pub fn omega_norm<F: OmegaField + ?Sized>(
    mesh: &HierMesh,
    quad: &QuadRule,
    geom: &RationalGeometry,
    field: &F,
    k: usize,
) -> Result<f64> {
    if k > 1 {
        return Err(Error::UnsupportedDerivative(k));
    }
    let mut sq = 0.0;
    for q in 0..=k {
        sq += omega_seminorm(mesh, quad, geom, field, q)?.value.powi(2);
    }
    Ok(sq.sqrt())
}
