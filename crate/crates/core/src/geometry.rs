//! The singular map `u`, truncated triangles `Δ_γ` and the rational regular map
//! `F = (F1, F2) / F0` with `F0, F1, F2` in the hierarchical space of a coarse level.

use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::mesh::HierMesh;
use crate::norms::pairwise_sum;
use crate::projector::Projector;
use crate::quadrature::QuadRule;
use crate::space::{HierSpace, Jet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `Δ_γ = {(u,v) : 0 < u < γ, 0 < v < u}`; `γ = 1` is Δ itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleDomain {
    pub gamma: f64,
}

impl TriangleDomain {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidArgument(format!("gamma = {gamma} not in (0, 1]")));
        }
        Ok(TriangleDomain { gamma })
    }

    pub fn full() -> Self {
        TriangleDomain { gamma: 1.0 }
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        0.0 < u && u < self.gamma && 0.0 < v && v < u
    }

    /// Exact membership for dyadic inputs and a dyadic `γ`.
    pub fn contains_dyadic(gamma: Dyadic, u: Dyadic, v: Dyadic) -> bool {
        Dyadic::ZERO < u && u < gamma && Dyadic::ZERO < v && v < u
    }

    pub fn area(&self) -> f64 {
        0.5 * self.gamma * self.gamma
    }
}

/// `u(s,t) = (s, s t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SingularMap;

impl SingularMap {
    pub fn forward(s: f64, t: f64) -> (f64, f64) {
        (s, s * t)
    }

    pub fn inverse(u: f64, v: f64) -> Result<(f64, f64)> {
        if u <= 0.0 {
            return Err(Error::SingularPoint(u, v));
        }
        Ok((u, v / u))
    }

    /// `∇u = [[1, 0], [t, s]]`.
    pub fn jacobian(s: f64, t: f64) -> [[f64; 2]; 2] {
        [[1.0, 0.0], [t, s]]
    }

    pub fn jacobian_det(s: f64) -> f64 {
        s
    }
}

/// Geometry file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryFile {
    pub degree: usize,
    pub coarse_level: u32,
    #[serde(rename = "F0")]
    pub f0: Vec<f64>,
    #[serde(rename = "F1")]
    pub f1: Vec<f64>,
    #[serde(rename = "F2")]
    pub f2: Vec<f64>,
}

/// Physical point, Jacobian `∂y_a/∂x_b` and its determinant at a point of Δ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomPoint {
    pub y: [f64; 2],
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    pub f0: f64,
}

impl GeomPoint {
    /// `J^{-T} g`: physical gradient from a parameter gradient.
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let [[a, b], [c, d]] = self.jac;
        // J^{-1} = [[d, -b], [-c, a]] / det, so J^{-T} = [[d, -c], [-b, a]] / det
        [(d * g[0] - c * g[1]) / self.det, (-b * g[0] + a * g[1]) / self.det]
    }

    /// `J^T g`: parameter gradient of `φ ∘ F` from the physical gradient of `φ`.
    pub fn pull_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let [[a, b], [c, d]] = self.jac;
        [a * g[0] + c * g[1], b * g[0] + d * g[1]]
    }
}

/// `F = (F1/F0, F2/F0)` with coefficient vectors over the canonical basis of the
/// hierarchical space of level `coarse_level`.
#[derive(Debug, Clone)]
pub struct RationalGeometry {
    space: HierSpace,
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
}

/// Sampled positivity report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometryReport {
    pub min_f0: f64,
    /// Smallest sampled `det ∇F` (the reported lower bound `c`).
    pub min_det: f64,
    pub max_det: f64,
    pub samples: usize,
}

impl GeometryReport {
    pub fn is_valid(&self) -> bool {
        self.min_f0 > 0.0 && self.min_det > 0.0
    }
}

impl RationalGeometry {
    pub fn new(degree: usize, coarse_level: u32, f0: Vec<f64>, f1: Vec<f64>, f2: Vec<f64>) -> Result<Self> {
        let space = HierSpace::build(degree, coarse_level)?;
        let dim = space.dimension();
        for (name, c) in [("F0", &f0), ("F1", &f1), ("F2", &f2)] {
            if c.len() != dim {
                return Err(Error::InvalidGeometry(format!(
                    "{name} has {} coefficients, space of degree {degree} level {coarse_level} has {dim}",
                    c.len()
                )));
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidGeometry(format!("{name} has non-finite coefficients")));
            }
        }
        Ok(RationalGeometry { space, f0, f1, f2 })
    }

    pub fn from_file(file: GeometryFile) -> Result<Self> {
        Self::new(file.degree, file.coarse_level, file.f0, file.f1, file.f2)
    }

    pub fn to_file(&self) -> GeometryFile {
        GeometryFile {
            degree: self.degree(),
            coarse_level: self.coarse_level(),
            f0: self.f0.clone(),
            f1: self.f1.clone(),
            f2: self.f2.clone(),
        }
    }

    /// Coefficients obtained by projecting closed forms at the coarse level; exact when
    /// the closed forms belong to the space.
    pub fn from_closed_form<A, B, C>(degree: usize, coarse_level: u32, f0: A, f1: B, f2: C) -> Result<Self>
    where
        A: Fn(f64, f64) -> f64 + Sync,
        B: Fn(f64, f64) -> f64 + Sync,
        C: Fn(f64, f64) -> f64 + Sync,
    {
        let proj = Projector::new(degree, coarse_level, crate::default_gauss_order(degree))?;
        Self::new(
            degree,
            coarse_level,
            proj.project(f0).coefficients,
            proj.project(f1).coefficients,
            proj.project(f2).coefficients,
        )
    }

    pub fn identity(degree: usize, coarse_level: u32) -> Result<Self> {
        Self::from_closed_form(degree, coarse_level, |_, _| 1.0, |u, _| u, |_, v| v)
    }

    /// `F(u,v) = (u + a u v, v + b u v)`, `F0 = 1`. Representable exactly for `p ≥ 2`;
    /// for `p = 1` the coefficients define the projected (piecewise) map.
    pub fn curved(degree: usize, coarse_level: u32, a: f64, b: f64) -> Result<Self> {
        if a.abs() > 0.25 || b.abs() > 0.25 {
            return Err(Error::InvalidGeometry(format!("curved family needs |a|,|b| <= 0.25, got {a}, {b}")));
        }
        Self::from_closed_form(degree, coarse_level, |_, _| 1.0, move |u, v| u + a * u * v, move |u, v| v + b * u * v)
    }

    pub fn degree(&self) -> usize {
        self.space.degree()
    }

    pub fn coarse_level(&self) -> u32 {
        self.space.level()
    }

    pub fn space(&self) -> &HierSpace {
        &self.space
    }

    fn jets(&self, u: f64, v: f64) -> (Jet, Jet, Jet) {
        let mut scratch = Vec::new();
        (
            self.space.jet_at(&self.f0, u, v, &mut scratch),
            self.space.jet_at(&self.f1, u, v, &mut scratch),
            self.space.jet_at(&self.f2, u, v, &mut scratch),
        )
    }

    fn jets_param(&self, s: f64, t: f64, scratch: &mut Vec<(usize, Jet)>) -> (Jet, Jet, Jet) {
        (
            self.space.combine_at(&self.f0, s, t, scratch),
            self.space.combine_at(&self.f1, s, t, scratch),
            self.space.combine_at(&self.f2, s, t, scratch),
        )
    }

    fn assemble(j0: Jet, j1: Jet, j2: Jet) -> Result<GeomPoint> {
        let w = j0.val;
        if !(w > 0.0) {
            return Err(Error::InvalidGeometry(format!("F0 = {w} is not positive")));
        }
        let w2 = w * w;
        let y = [j1.val / w, j2.val / w];
        let jac = [
            [(j1.du * w - j1.val * j0.du) / w2, (j1.dv * w - j1.val * j0.dv) / w2],
            [(j2.du * w - j2.val * j0.du) / w2, (j2.dv * w - j2.val * j0.dv) / w2],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        Ok(GeomPoint { y, jac, det, f0: w })
    }

    /// `F(u,v)`.
    pub fn eval(&self, u: f64, v: f64) -> Result<(f64, f64)> {
        let g = self.eval_point(u, v)?;
        Ok((g.y[0], g.y[1]))
    }

    pub fn jacobian(&self, u: f64, v: f64) -> Result<[[f64; 2]; 2]> {
        Ok(self.eval_point(u, v)?.jac)
    }

    pub fn eval_point(&self, u: f64, v: f64) -> Result<GeomPoint> {
        let (j0, j1, j2) = self.jets(u, v);
        Self::assemble(j0, j1, j2)
    }

    /// Geometry at an interior parameter point `(s,t)`, `s > 0`.
    pub fn eval_param(&self, s: f64, t: f64, scratch: &mut Vec<(usize, Jet)>) -> Result<GeomPoint> {
        let (j0, j1, j2) = self.jets_param(s, t, scratch);
        Self::assemble(j0, j1, j2)
    }

    /// Sample `F0` and `det ∇F` at every quadrature node of the level-`level` mesh and
    /// at all element corners. A sampling check, not a proof of positivity.
    pub fn check(&self, level: u32, gauss_order: usize) -> Result<GeometryReport> {
        let mesh = HierMesh::build(self.degree(), level)?;
        let quad = QuadRule::new(gauss_order);
        let stats: Vec<(f64, f64, f64, usize)> = mesh
            .elements()
            .par_iter()
            .map_init(Vec::new, |scratch, e| {
                let mut min_f0 = f64::INFINITY;
                let mut min_det = f64::INFINITY;
                let mut max_det = f64::NEG_INFINITY;
                let mut count = 0;
                let mut visit = |g: GeomPoint| {
                    min_f0 = min_f0.min(g.f0);
                    min_det = min_det.min(g.det);
                    max_det = max_det.max(g.det);
                    count += 1;
                };
                for qp in quad.points(e.rect.s0, e.rect.s1, e.rect.t0, e.rect.t1) {
                    let (j0, j1, j2) = self.jets_param(qp.s, qp.t, scratch);
                    visit(Self::assemble_unchecked(j0, j1, j2));
                }
                for (u, v) in e.vertices() {
                    let (j0, j1, j2) = self.jets(u, v);
                    visit(Self::assemble_unchecked(j0, j1, j2));
                }
                (min_f0, min_det, max_det, count)
            })
            .collect();
        let mut rep = GeometryReport {
            min_f0: f64::INFINITY,
            min_det: f64::INFINITY,
            max_det: f64::NEG_INFINITY,
            samples: 0,
        };
        for (a, b, c, n) in stats {
            rep.min_f0 = rep.min_f0.min(a);
            rep.min_det = rep.min_det.min(b);
            rep.max_det = rep.max_det.max(c);
            rep.samples += n;
        }
        Ok(rep)
    }

    pub fn validate(&self, level: u32, gauss_order: usize) -> Result<GeometryReport> {
        let rep = self.check(level, gauss_order)?;
        if !rep.is_valid() {
            return Err(Error::InvalidGeometry(format!(
                "sampled min F0 = {:e}, min det = {:e}",
                rep.min_f0, rep.min_det
            )));
        }
        Ok(rep)
    }

    fn assemble_unchecked(j0: Jet, j1: Jet, j2: Jet) -> GeomPoint {
        Self::assemble(j0, j1, j2).unwrap_or(GeomPoint {
            y: [f64::NAN; 2],
            jac: [[f64::NAN; 2]; 2],
            det: f64::NEG_INFINITY,
            f0: j0.val,
        })
    }

    /// Area of `Ω = F(Δ)` by quadrature of `det ∇F` over the level-`level` mesh.
    pub fn area(&self, level: u32, gauss_order: usize) -> Result<f64> {
        let mesh = HierMesh::build(self.degree(), level)?;
        let quad = QuadRule::new(gauss_order);
        let parts: Vec<Result<f64>> = mesh
            .elements()
            .par_iter()
            .map_init(Vec::new, |scratch, e| {
                let mut acc = 0.0;
                for qp in quad.points(e.rect.s0, e.rect.s1, e.rect.t0, e.rect.t1) {
                    acc += qp.weight * self.eval_param(qp.s, qp.t, scratch)?.det.abs();
                }
                Ok(acc)
            })
            .collect();
        Ok(pairwise_sum(&parts.into_iter().collect::<Result<Vec<_>>>()?))
    }
}

/// Residual of projecting a closed-form candidate onto the level-`level` space,
/// measured in L∞ on a sample grid of Δ̄ (including the edges and the vertex).
pub fn membership_residual<F>(degree: usize, level: u32, candidate: F) -> Result<f64>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let proj = Projector::new(degree, level, crate::default_gauss_order(degree))?;
    let c = proj.project(&candidate);
    let k = 40;
    let mut worst: f64 = 0.0;
    for a in 0..=k {
        let s = a as f64 / k as f64;
        for b in 0..=k {
            let t = b as f64 / k as f64;
            let (u, v) = SingularMap::forward(s, t);
            let r = (proj.space().evaluate(&c.coefficients, u, v) - candidate(u, v)).abs();
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// Membership report for a closed-form candidate against the geometry's space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MembershipReport {
    pub residual: f64,
    pub representable: bool,
}

pub fn check_membership<F>(geom: &RationalGeometry, candidate: F) -> Result<MembershipReport>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let residual = membership_residual(geom.degree(), geom.coarse_level(), candidate)?;
    Ok(MembershipReport { residual, representable: residual < 1e-9 })
}

/// Bounds of `‖φ‖_{H^k(Ω)} / ‖φ ∘ F‖_{H^k(Δ)}` over the sample functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormEquivalence {
    pub order: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

pub fn probe_norm_equivalence(
    geom: &RationalGeometry,
    order: usize,
    samples: &[TestFunction],
    level: u32,
    gauss_order: usize,
) -> Result<NormEquivalence> {
    if order > 1 {
        return Err(Error::UnsupportedDerivative(order));
    }
    geom.validate(level, gauss_order)?;
    let mesh = HierMesh::build(geom.degree(), level)?;
    let quad = QuadRule::new(gauss_order);
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    for f in samples {
        let parts: Vec<Result<(f64, f64)>> = mesh
            .elements()
            .par_iter()
            .map_init(Vec::new, |scratch, e| {
                let mut om = 0.0;
                let mut de = 0.0;
                for qp in quad.points(e.rect.s0, e.rect.s1, e.rect.t0, e.rect.t1) {
                    let g = geom.eval_param(qp.s, qp.t, scratch)?;
                    let (a, b) = norm_integrands(f, &g, order);
                    om += qp.weight * g.det.abs() * a;
                    de += qp.weight * b;
                }
                Ok((om, de))
            })
            .collect();
        let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
        let om = pairwise_sum(&parts.iter().map(|x| x.0).collect::<Vec<_>>()).sqrt();
        let de = pairwise_sum(&parts.iter().map(|x| x.1).collect::<Vec<_>>()).sqrt();
        if de > 0.0 {
            let r = om / de;
            min_ratio = min_ratio.min(r);
            max_ratio = max_ratio.max(r);
        }
    }
    Ok(NormEquivalence { order, min_ratio, max_ratio })
}

/// Squared H^k integrands of `φ` on Ω and of `φ ∘ F` on Δ at one node.
fn norm_integrands(f: &TestFunction, g: &GeomPoint, order: usize) -> (f64, f64) {
    let j = f.jet(g.y[0], g.y[1]);
    let mut om = j.val * j.val;
    let mut de = j.val * j.val;
    if order >= 1 {
        let gy = [j.du, j.dv];
        let gx = g.pull_gradient(gy);
        om += gy[0] * gy[0] + gy[1] * gy[1];
        de += gx[0] * gx[0] + gx[1] * gx[1];
    }
    (om, de)
}
