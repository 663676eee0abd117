//! Dual functionals and the quasi-interpolation projector onto the hierarchical space.
//!
//! Every functional is stored as a list of weighted parameter-space nodes, so
//! `Λ(φ) = Σ w φ(s, s t)`:
//! * for `k ≤ p+1` it is the coarse functional `μ_{k,l}` (inverse Gram of the
//!   singular block on the apex `Δ_{h0}`) pulled to level `n` by the scaling
//!   `(u,v) ↦ 2^{n0-n}(u,v)`, which keeps `t` and scales `s`;
//! * for `k ≥ p+2` it is `λ^n_k ⊗ λ^{m(k)}_l` applied to `φ ∘ u`.

use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::mesh::{HierMesh, ParamRect, RegionClass};
use crate::quadrature::{GaussRule, QuadRule};
use crate::space::{block_level, BasisBlock, HierSpace, Jet};
use crate::spline::SplineSpace;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

/// Coarse dual functionals `μ_{k,l}` on the apex triangle `Δ_{h0}`.
#[derive(Debug, Clone)]
pub struct SingularDualSet {
    pub degree: usize,
    pub coarse_level: u32,
    pub h0: f64,
    /// Inverse of the singular-block Gram matrix on `Δ_{h0}`.
    pub gram_inverse: DMatrix<f64>,
    pub condition_number: f64,
    /// Quadrature nodes `(s, t)` on `[0,h0]×[0,1]`.
    nodes: Vec<(f64, f64)>,
    /// `weights[r][q]`: node weight of functional `r` (singular-block order) at node `q`.
    weights: Vec<Vec<f64>>,
}

/// Largest accepted condition number of the coarse Gram matrix.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

impl SingularDualSet {
    pub fn build(degree: usize, gauss_order: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidArgument("degree must be at least 1".into()));
        }
        let n0 = crate::coarse_level(degree);
        let space = HierSpace::build(degree, n0)?;
        let ns = space.singular_block_len();
        let h0 = Dyadic::new(1, n0).to_f64();
        let quad = QuadRule::new(gauss_order.max(degree + 1));
        let pts = quad.points_f64(0.0, h0, 0.0, 1.0);
        let mut jets = Vec::new();
        let mut vals = vec![vec![0.0; pts.len()]; ns];
        for (q, pt) in pts.iter().enumerate() {
            space.active_jets(pt.s, pt.t, &mut jets);
            for (idx, jet) in &jets {
                if *idx < ns {
                    vals[*idx][q] = jet.val;
                }
            }
        }
        let mut gram = DMatrix::<f64>::zeros(ns, ns);
        for a in 0..ns {
            for b in 0..=a {
                let g: f64 = pts.iter().enumerate().map(|(q, pt)| pt.weight * vals[a][q] * vals[b][q]).sum();
                gram[(a, b)] = g;
                gram[(b, a)] = g;
            }
        }
        let sv = gram.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition_number <= MAX_GRAM_CONDITION) {
            return Err(Error::IllConditioned(condition_number));
        }
        let gram_inverse = gram.try_inverse().ok_or(Error::IllConditioned(f64::INFINITY))?;
        let weights = (0..ns)
            .map(|r| {
                pts.iter()
                    .enumerate()
                    .map(|(q, pt)| pt.weight * (0..ns).map(|c| gram_inverse[(r, c)] * vals[c][q]).sum::<f64>())
                    .collect()
            })
            .collect();
        Ok(SingularDualSet {
            degree,
            coarse_level: n0,
            h0,
            gram_inverse,
            condition_number,
            nodes: pts.iter().map(|p| (p.s, p.t)).collect(),
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `μ_r(ψ)` for `ψ` given on `Δ_{h0}` in `(u,v)`.
    pub fn apply(&self, r: usize, psi: impl Fn(f64, f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights[r]).map(|(&(s, t), w)| w * psi(s, s * t)).sum()
    }
}

/// A functional realized as weighted parameter nodes plus its support region.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFunctional {
    pub kind: DualKind,
    /// `(s, t, weight)`.
    pub nodes: Vec<(f64, f64, f64)>,
    pub region: ParamRect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DualKind {
    ScaledSingular,
    Tensor { t_level: u32 },
}

impl DualFunctional {
    pub fn apply(&self, phi: impl Fn(f64, f64) -> f64) -> f64 {
        self.nodes.iter().map(|&(s, t, w)| w * phi(s, s * t)).sum()
    }

    pub fn apply_param(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.nodes.iter().map(|&(s, t, w)| w * f(s, t)).sum()
    }
}

/// t-level used by the tensor functional of s-index `k`.
///
/// Default: `⌈log2(k-p)⌉`, matching the block ranges of the basis. With `literal`
/// the alternative `⌈log2(k-p+1)⌉` is used; it disagrees with the block ranges whenever
/// `k - p` is a power of two, so the resulting functionals are no longer dual.
pub fn m_of_k(k: usize, p: usize, literal: bool) -> Result<u32> {
    if k < p + 2 {
        return Err(Error::InvalidArgument(format!("k = {k} lies in the singular block (p = {p})")));
    }
    if literal {
        let x = k - p + 1;
        Ok(usize::BITS - (x - 1).leading_zeros())
    } else {
        Ok(block_level(k, p).expect("k >= p + 2"))
    }
}

#[derive(Debug, Clone)]
pub struct Projector {
    space: HierSpace,
    singular: SingularDualSet,
    duals: Vec<DualFunctional>,
    gauss_order: usize,
    literal_mk: bool,
}

/// Coefficients of `Πφ` over the canonical basis enumeration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionResult {
    pub degree: usize,
    pub level: u32,
    pub coefficients: Vec<f64>,
}

impl Projector {
    pub fn new(degree: usize, level: u32, gauss_order: usize) -> Result<Self> {
        Self::with_options(degree, level, gauss_order, false)
    }

    pub fn with_options(degree: usize, level: u32, gauss_order: usize, literal_mk: bool) -> Result<Self> {
        let n0 = crate::coarse_level(degree);
        if level < n0 {
            return Err(Error::LevelTooSmall { level, n0 });
        }
        let space = HierSpace::build(degree, level)?;
        let singular = SingularDualSet::build(degree, gauss_order)?;
        let rule = GaussRule::new(gauss_order);
        let s_duals: Vec<Vec<(f64, f64)>> =
            space.s_space().duals()?.iter().map(|d| d.weighted_nodes(&rule)).collect();
        let s_spans: Vec<usize> = space.s_space().duals()?.iter().map(|d| d.span).collect();
        let max_m = level + u32::from(literal_mk);
        let mut t_duals: Vec<Vec<(Vec<(f64, f64)>, usize)>> = vec![Vec::new()];
        for m in 1..=max_m {
            let ts = SplineSpace::new(degree, m)?;
            t_duals.push(ts.duals()?.iter().map(|d| (d.weighted_nodes(&rule), d.span)).collect());
        }
        let c = Dyadic::new(1, level - n0).to_f64();
        let h = Dyadic::new(1, level);
        let mut duals = Vec::with_capacity(space.dimension());
        for (idx, f) in space.basis().iter().enumerate() {
            match f.block {
                BasisBlock::Singular => {
                    let nodes = singular
                        .nodes
                        .iter()
                        .zip(&singular.weights[idx])
                        .map(|(&(s, t), &w)| (c * s, t, w))
                        .collect();
                    let region = ParamRect::new(Dyadic::ZERO, h, Dyadic::ZERO, Dyadic::ONE);
                    duals.push(DualFunctional { kind: DualKind::ScaledSingular, nodes, region });
                }
                BasisBlock::Regular { .. } => {
                    let m = m_of_k(f.i, degree, literal_mk)?;
                    let sn = &s_duals[f.i - 1];
                    let (tn, tspan) = &t_duals[m as usize][f.j - 1];
                    let mut nodes = Vec::with_capacity(sn.len() * tn.len());
                    for &(s, ws) in sn {
                        for &(t, wt) in tn {
                            nodes.push((s, t, ws * wt));
                        }
                    }
                    let sspan = s_spans[f.i - 1] as i64;
                    let region = ParamRect::new(
                        Dyadic::new(sspan, level),
                        Dyadic::new(sspan + 1, level),
                        Dyadic::new(*tspan as i64, m),
                        Dyadic::new(*tspan as i64 + 1, m),
                    );
                    duals.push(DualFunctional { kind: DualKind::Tensor { t_level: m }, nodes, region });
                }
            }
        }
        Ok(Projector { space, singular, duals, gauss_order, literal_mk })
    }

    pub fn space(&self) -> &HierSpace {
        &self.space
    }

    pub fn singular_duals(&self) -> &SingularDualSet {
        &self.singular
    }

    pub fn duals(&self) -> &[DualFunctional] {
        &self.duals
    }

    pub fn gauss_order(&self) -> usize {
        self.gauss_order
    }

    pub fn literal_mk(&self) -> bool {
        self.literal_mk
    }

    pub fn level(&self) -> u32 {
        self.space.level()
    }

    pub fn degree(&self) -> usize {
        self.space.degree()
    }

    /// `Λ_idx(φ)` for `φ` given in `(u,v)`.
    pub fn apply_dual(&self, idx: usize, phi: impl Fn(f64, f64) -> f64) -> Result<f64> {
        let d = self.duals.get(idx).ok_or(Error::IndexOutOfRange { index: idx, max: self.duals.len() })?;
        Ok(d.apply(phi))
    }

    /// `Π φ`, `φ` given in `(u,v)`.
    pub fn project<F>(&self, phi: F) -> ProjectionResult
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        self.project_param(|s, t| phi(s, s * t))
    }

    /// `Π φ`, `φ` given in parameter coordinates `(s,t)`.
    pub fn project_param<F>(&self, f: F) -> ProjectionResult
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        let coefficients = self.duals.par_iter().map(|d| d.apply_param(&f)).collect();
        ProjectionResult { degree: self.degree(), level: self.level(), coefficients }
    }

    /// Re-project a function of the space given by its coefficients.
    pub fn reproject(&self, coeffs: &[f64]) -> ProjectionResult {
        let coefficients = self
            .duals
            .par_iter()
            .map_init(Vec::new, |scratch, d| {
                d.nodes
                    .iter()
                    .map(|&(s, t, w)| w * self.space.combine_at(coeffs, s, t, scratch).val)
                    .sum()
            })
            .collect();
        ProjectionResult { degree: self.degree(), level: self.level(), coefficients }
    }

    /// Sparse row `[Λ_idx(β_j)]_j`.
    pub fn duality_row(&self, idx: usize) -> Vec<(usize, f64)> {
        let mut acc = std::collections::BTreeMap::new();
        let mut jets: Vec<(usize, Jet)> = Vec::new();
        for &(s, t, w) in &self.duals[idx].nodes {
            self.space.active_jets(s, t, &mut jets);
            for (j, jet) in &jets {
                *acc.entry(*j).or_insert(0.0) += w * jet.val;
            }
        }
        acc.into_iter().collect()
    }

    /// `max |Λ_k(β_j) - δ_kj|` over the full basis.
    pub fn duality_defect(&self) -> f64 {
        (0..self.duals.len())
            .into_par_iter()
            .map(|k| {
                let row = self.duality_row(k);
                let mut worst: f64 = 0.0;
                let mut diag_seen = false;
                for (j, v) in row {
                    let e = if j == k {
                        diag_seen = true;
                        1.0
                    } else {
                        0.0
                    };
                    worst = worst.max((v - e).abs());
                }
                if !diag_seen {
                    worst = worst.max(1.0);
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Evaluation handle for `Σ c_k β_k`.
#[derive(Debug, Clone, Copy)]
pub struct SplineFunction<'a> {
    pub space: &'a HierSpace,
    pub coeffs: &'a [f64],
}

impl SplineFunction<'_> {
    pub fn jet_param(&self, s: f64, t: f64, scratch: &mut Vec<(usize, Jet)>) -> Jet {
        self.space.combine_at(self.coeffs, s, t, scratch)
    }

    pub fn value(&self, u: f64, v: f64) -> f64 {
        self.space.evaluate(self.coeffs, u, v)
    }
}

/// Pointwise defect of the singular-core scaling identity
/// `Π_n φ (x) = Π_{n0}(φ ∘ cI)(x / c)`, `c = 2^{n0-n}`, at the Gauss nodes of every
/// singular-core element, together with the matching L² identity
/// `‖Π_n φ‖_δ = c ‖Π_{n0}(φ ∘ cI)‖_{δ/c}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingCheck {
    pub pointwise: f64,
    pub norm_relative: f64,
    pub elements: usize,
}

pub fn singular_core_scaling_check<F>(
    fine: &Projector,
    coarse: &Projector,
    mesh: &HierMesh,
    phi: F,
) -> Result<ScalingCheck>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let n0 = crate::coarse_level(fine.degree());
    if coarse.level() != n0 || fine.degree() != coarse.degree() || mesh.level() != fine.level() {
        return Err(Error::InvalidArgument("scaling check needs level-n and level-n0 projectors".into()));
    }
    let c = Dyadic::new(1, fine.level() - n0).to_f64();
    let fine_c = fine.project(&phi);
    let coarse_c = coarse.project(|u, v| phi(c * u, c * v));
    let quad = QuadRule::new(fine.gauss_order());
    let mut pointwise: f64 = 0.0;
    let mut norm_relative: f64 = 0.0;
    let mut count = 0;
    let mut sf = Vec::new();
    let mut sc = Vec::new();
    for (id, e) in mesh.elements().iter().enumerate() {
        if mesh.classify(id)? != RegionClass::SingularCore {
            continue;
        }
        count += 1;
        let mut nf = 0.0;
        let mut nc = 0.0;
        for qp in quad.points(e.rect.s0, e.rect.s1, e.rect.t0, e.rect.t1) {
            let a = fine.space.combine_at(&fine_c.coefficients, qp.s, qp.t, &mut sf).val;
            let b = coarse.space.combine_at(&coarse_c.coefficients, qp.s / c, qp.t, &mut sc).val;
            pointwise = pointwise.max((a - b).abs());
            nf += qp.weight * a * a;
            // the node weight on δ/c is weight / c²
            nc += qp.weight / (c * c) * b * b;
        }
        let lhs = nf.sqrt();
        let rhs = c * nc.sqrt();
        if lhs > 0.0 {
            norm_relative = norm_relative.max((lhs - rhs).abs() / lhs);
        }
    }
    Ok(ScalingCheck { pointwise, norm_relative, elements: count })
}
