//! The hierarchical basis `β^n_{i,j} = (b^n_i ⊗ T_{i,j}) ∘ u^{-1}` on Δ.
//!
//! The s-factor is always the level-`n` B-spline `b^n_i`. The t-factor depends on the
//! block of `i`:
//! * singular block `1 ≤ i ≤ p+1`: Bernstein polynomials of degree `i-1`, `j = 1..=i`;
//! * regular block of level `m ≥ 1`, `p + 2^{m-1} + 1 ≤ i ≤ p + 2^m`: the level-`m`
//!   B-splines `b^m_j`, `j = 1..=2^m + p`.
//!
//! Enumeration is by `i`, then `j`, which coincides with "singular block first, then
//! regular blocks by level".

use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::mesh::{HierElement, ParamRect};
use crate::spline::{bernstein_deriv, SplineSpace};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Below this `u` a point is treated as the singular vertex.
pub const VERTEX_GUARD: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BasisBlock {
    Singular,
    Regular { level: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HierBasisFunction {
    pub i: usize,
    pub j: usize,
    pub block: BasisBlock,
}

/// Value and partial derivatives up to second order in `(u,v)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub val: f64,
    pub du: f64,
    pub dv: f64,
    pub duu: f64,
    pub duv: f64,
    pub dvv: f64,
}

impl Jet {
    pub fn get(&self, a1: usize, a2: usize) -> f64 {
        match (a1, a2) {
            (0, 0) => self.val,
            (1, 0) => self.du,
            (0, 1) => self.dv,
            (2, 0) => self.duu,
            (1, 1) => self.duv,
            (0, 2) => self.dvv,
            _ => f64::NAN,
        }
    }

    pub fn scaled(&self, c: f64) -> Jet {
        Jet {
            val: c * self.val,
            du: c * self.du,
            dv: c * self.dv,
            duu: c * self.duu,
            duv: c * self.duv,
            dvv: c * self.dvv,
        }
    }

    pub fn axpy(&mut self, c: f64, x: &Jet) {
        self.val += c * x.val;
        self.du += c * x.du;
        self.dv += c * x.dv;
        self.duu += c * x.duu;
        self.duv += c * x.duv;
        self.dvv += c * x.dvv;
    }

    /// Jet of a product `s(u) T(v/u)` from the parameter-space factor derivatives.
    fn from_factors(u: f64, t: f64, sf: [f64; 3], tf: [f64; 3]) -> Jet {
        let (s0, s1, s2) = (sf[0], sf[1], sf[2]);
        let (t0, t1, t2) = (tf[0], tf[1], tf[2]);
        let iu = 1.0 / u;
        Jet {
            val: s0 * t0,
            du: s1 * t0 - t * iu * s0 * t1,
            dv: s0 * t1 * iu,
            duu: s2 * t0 - 2.0 * t * iu * s1 * t1 + 2.0 * t * iu * iu * s0 * t1 + t * t * iu * iu * s0 * t2,
            duv: s1 * t1 * iu - s0 * t1 * iu * iu - t * s0 * t2 * iu * iu,
            dvv: s0 * t2 * iu * iu,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierSpace {
    degree: usize,
    level: u32,
    s_space: SplineSpace,
    /// `t_spaces[m-1]` is the level-`m` space used by regular block `m`.
    t_spaces: Vec<SplineSpace>,
    basis: Vec<HierBasisFunction>,
    /// `offsets[i-1]`: position of `(i, 1)` in the enumeration.
    offsets: Vec<usize>,
}

/// t-level of the regular block containing s-index `k`: `⌈log2(k - p)⌉`.
pub fn block_level(k: usize, p: usize) -> Option<u32> {
    if k < p + 2 {
        return None;
    }
    let x = k - p;
    Some(usize::BITS - (x - 1).leading_zeros())
}

impl HierSpace {
    pub fn build(degree: usize, level: u32) -> Result<Self> {
        let s_space = SplineSpace::new(degree, level)?;
        let t_spaces = (1..=level).map(|m| SplineSpace::new(degree, m)).collect::<Result<Vec<_>>>()?;
        let mut basis = Vec::new();
        let mut offsets = Vec::with_capacity(s_space.dimension());
        for i in 1..=s_space.dimension() {
            offsets.push(basis.len());
            match block_level(i, degree) {
                None => {
                    for j in 1..=i {
                        basis.push(HierBasisFunction { i, j, block: BasisBlock::Singular });
                    }
                }
                Some(m) => {
                    let dim = t_spaces[m as usize - 1].dimension();
                    for j in 1..=dim {
                        basis.push(HierBasisFunction { i, j, block: BasisBlock::Regular { level: m } });
                    }
                }
            }
        }
        Ok(HierSpace { degree, level, s_space, t_spaces, basis, offsets })
    }

    /// `(p+1)(p+2)/2 + Σ_{k=1..n} 2^{k-1} (p + 2^k)`.
    pub fn expected_dimension(degree: usize, level: u32) -> usize {
        (degree + 1) * (degree + 2) / 2
            + (1..=level).map(|k| (1usize << (k - 1)) * (degree + (1usize << k))).sum::<usize>()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[HierBasisFunction] {
        &self.basis
    }

    pub fn s_space(&self) -> &SplineSpace {
        &self.s_space
    }

    pub fn t_space(&self, m: u32) -> &SplineSpace {
        &self.t_spaces[m as usize - 1]
    }

    pub fn singular_block_len(&self) -> usize {
        (self.degree + 1) * (self.degree + 2) / 2
    }

    pub fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        if i == 0 || i > self.s_space.dimension() || j == 0 {
            return None;
        }
        let start = self.offsets[i - 1];
        let end = self.offsets.get(i).copied().unwrap_or(self.basis.len());
        (j <= end - start).then(|| start + j - 1)
    }

    /// Functions with s-index `i`, as an index range.
    pub fn range_of_i(&self, i: usize) -> std::ops::Range<usize> {
        let start = self.offsets[i - 1];
        let end = self.offsets.get(i).copied().unwrap_or(self.basis.len());
        start..end
    }

    /// Parameter-space support rectangle.
    pub fn support_rect(&self, idx: usize) -> ParamRect {
        let f = self.basis[idx];
        let (s0, s1) = self.s_space.support(f.i);
        let (t0, t1) = match f.block {
            BasisBlock::Singular => (Dyadic::ZERO, Dyadic::ONE),
            BasisBlock::Regular { level } => self.t_space(level).support(f.j),
        };
        ParamRect::new(s0, s1, t0, t1)
    }

    /// Functions whose support overlaps `rect` with positive area.
    pub fn functions_overlapping(&self, rect: &ParamRect) -> Vec<usize> {
        let p = self.degree;
        let n = self.level;
        let mut out = Vec::new();
        let lo = rect.s0.max(Dyadic::ZERO);
        // s-indices whose support (i-p-1)h..ih overlaps (s0, s1)
        let first_span = lo.floor_at(n);
        let last_span = rect.s1.min(Dyadic::ONE).ceil_at(n);
        let i_lo = (first_span + 1).max(1) as usize;
        let i_hi = ((last_span + p as i64) as usize).min(self.s_space.dimension());
        for i in i_lo..=i_hi {
            let (a, b) = self.s_space.support(i);
            if !(a < rect.s1 && rect.s0 < b) {
                continue;
            }
            for idx in self.range_of_i(i) {
                if self.support_rect(idx).overlaps(rect) {
                    out.push(idx);
                }
            }
        }
        out
    }

    /// Parameter-space factor derivatives `[f, f', f'']` of function `idx` at `(s,t)`.
    fn factors(&self, idx: usize, s: f64, t: f64) -> ([f64; 3], [f64; 3]) {
        let f = self.basis[idx];
        let act = self.s_space.active(s, 2.min(self.degree));
        let sf = pick3(&act.ders, act.first, f.i);
        let tf = match f.block {
            BasisBlock::Singular => {
                let d = f.i - 1;
                [
                    bernstein_deriv(d, f.j - 1, t, 0),
                    bernstein_deriv(d, f.j - 1, t, 1),
                    bernstein_deriv(d, f.j - 1, t, 2),
                ]
            }
            BasisBlock::Regular { level } => {
                let ts = self.t_space(level);
                let a = ts.active(t, 2.min(self.degree));
                pick3(&a.ders, a.first, f.j)
            }
        };
        (sf, tf)
    }

    /// Derivative `∂^α β_idx` at `(u,v) ∈ Δ̄`, `α1 + α2 ≤ min(p, 2)`.
    pub fn eval(&self, idx: usize, u: f64, v: f64, alpha: (usize, usize)) -> Result<f64> {
        let order = alpha.0 + alpha.1;
        if order > self.degree {
            return Err(Error::DerivativeTooHigh { order, degree: self.degree });
        }
        if order > 2 {
            return Err(Error::UnsupportedDerivative(order));
        }
        if idx >= self.basis.len() {
            return Err(Error::IndexOutOfRange { index: idx, max: self.basis.len() });
        }
        let tol = 1e-12;
        if u < -tol || u > 1.0 + tol || v < -tol || v > u + tol {
            return Err(Error::OutsideDomain(u, v));
        }
        if u < VERTEX_GUARD {
            return Ok(self.vertex_derivative(idx, alpha.0, alpha.1));
        }
        let t = (v / u).clamp(0.0, 1.0);
        let (sf, tf) = self.factors(idx, u, t);
        Ok(Jet::from_factors(u, t, sf, tf).get(alpha.0, alpha.1))
    }

    /// Limit of `∂_u^a ∂_v^b β_idx` at the singular vertex.
    ///
    /// On the apex triangle a singular-block function is `q(u) H(u,v)` with
    /// `q = b_i / u^{i-1}` and `H = C(i-1,j-1) (u-v)^{i-j} v^{j-1}` homogeneous of
    /// degree `i-1`; regular-block functions vanish identically near the vertex.
    pub fn vertex_derivative(&self, idx: usize, a: usize, b: usize) -> f64 {
        let f = self.basis[idx];
        if f.block != BasisBlock::Singular {
            return 0.0;
        }
        let (i, j) = (f.i, f.j);
        let deg_h = i - 1;
        if a + b < deg_h {
            return 0.0;
        }
        let r = a + b - deg_h;
        if r > a || b + 1 < j {
            return 0.0;
        }
        let ap = a - r;
        // q^{(r)}(0) = r! * b_i^{(r+i-1)}(0) / (r+i-1)!
        let order = r + deg_h;
        let bi = if order > self.degree {
            0.0
        } else {
            self.s_space.eval(i, 0.0, order).unwrap_or(0.0)
        };
        let q_r = factorial(r) * bi / factorial(order);
        let vpow = b + 1 - j;
        if vpow > i - j || ap != i - j - vpow {
            return 0.0;
        }
        let sign = if vpow.is_multiple_of(2) { 1.0 } else { -1.0 };
        let h = binom(i - 1, j - 1) * sign * binom(i - j, ap) * factorial(ap) * factorial(b);
        binom(a, r) * q_r * h
    }

    /// All functions nonzero at parameter point `(s,t)`, `s > 0`, with their jets.
    pub fn active_jets(&self, s: f64, t: f64, out: &mut Vec<(usize, Jet)>) {
        out.clear();
        let p = self.degree;
        let nd = 2.min(p);
        let act = self.s_space.active(s, nd);
        let mut t_cache: [Option<crate::spline::ActiveSplines>; 32] = std::array::from_fn(|_| None);
        for r in 0..=p {
            let i = act.first + r;
            let sf = [act.ders[0][r], get(&act.ders, 1, r), get(&act.ders, 2, r)];
            match block_level(i, p) {
                None => {
                    let d = i - 1;
                    for j in 1..=i {
                        let tf = [
                            bernstein_deriv(d, j - 1, t, 0),
                            bernstein_deriv(d, j - 1, t, 1),
                            bernstein_deriv(d, j - 1, t, 2),
                        ];
                        let idx = self.offsets[i - 1] + j - 1;
                        out.push((idx, Jet::from_factors(s, t, sf, tf)));
                    }
                }
                Some(m) => {
                    let ta = t_cache[m as usize].get_or_insert_with(|| self.t_space(m).active(t, nd));
                    for q in 0..=p {
                        let j = ta.first + q;
                        let tf = [ta.ders[0][q], get(&ta.ders, 1, q), get(&ta.ders, 2, q)];
                        let idx = self.offsets[i - 1] + j - 1;
                        out.push((idx, Jet::from_factors(s, t, sf, tf)));
                    }
                }
            }
        }
    }

    /// Value of `Σ c_k β_k` at parameter point `(s,t)` with `s > 0`.
    pub fn value_param(&self, coeffs: &[f64], s: f64, t: f64) -> f64 {
        let p = self.degree;
        let act = self.s_space.active(s, 0);
        let mut t_cache: [Option<crate::spline::ActiveSplines>; 32] = std::array::from_fn(|_| None);
        let mut acc = 0.0;
        for r in 0..=p {
            let i = act.first + r;
            let off = self.offsets[i - 1];
            let mut inner = 0.0;
            match block_level(i, p) {
                None => {
                    for j in 1..=i {
                        inner += coeffs[off + j - 1] * bernstein_deriv(i - 1, j - 1, t, 0);
                    }
                }
                Some(m) => {
                    let ta = t_cache[m as usize].get_or_insert_with(|| self.t_space(m).active(t, 0));
                    for (q, b) in ta.ders[0].iter().enumerate() {
                        inner += coeffs[off + ta.first + q - 1] * b;
                    }
                }
            }
            acc += act.ders[0][r] * inner;
        }
        acc
    }

    /// Jet of `Σ c_k β_k` at parameter point `(s,t)` with `s > 0`.
    pub fn combine_at(&self, coeffs: &[f64], s: f64, t: f64, scratch: &mut Vec<(usize, Jet)>) -> Jet {
        self.active_jets(s, t, scratch);
        let mut acc = Jet::default();
        for (idx, jet) in scratch.iter() {
            acc.axpy(coeffs[*idx], jet);
        }
        acc
    }

    /// Value of `Σ c_k β_k` at `(u,v)`, including the singular vertex.
    pub fn evaluate(&self, coeffs: &[f64], u: f64, v: f64) -> f64 {
        if u < VERTEX_GUARD {
            return self
                .range_of_i(1)
                .map(|idx| coeffs[idx] * self.vertex_derivative(idx, 0, 0))
                .sum();
        }
        let mut scratch = Vec::new();
        self.combine_at(coeffs, u, (v / u).clamp(0.0, 1.0), &mut scratch).val
    }

    /// Values along the rays `v = α u`, `α ∈ {0, 1/2, 1}`, at distance `u = eps`.
    pub fn vertex_ray_values(&self, idx: usize, eps: f64) -> [f64; 3] {
        [0.0, 0.5, 1.0].map(|a| {
            let (sf, tf) = self.factors(idx, eps, a);
            sf[0] * tf[0]
        })
    }

    /// Max deviation of `β^n_{i,j}(u,v)` from `β^{n-1}_{i,j}(2u,2v)` over samples in
    /// `Δ_{1/2}`, for every `i ≤ 2^{n-1}`.
    pub fn self_similarity_defect(&self, coarser: &HierSpace, samples: &[(f64, f64)]) -> Result<f64> {
        if coarser.level + 1 != self.level || coarser.degree != self.degree {
            return Err(Error::InvalidArgument("spaces must be consecutive levels of one degree".into()));
        }
        let mut worst: f64 = 0.0;
        let imax = 1usize << (self.level - 1);
        for &(u, v) in samples {
            if !(u < 0.5 && v <= u) {
                return Err(Error::OutsideDomain(u, v));
            }
            for i in 1..=imax.min(self.s_space.dimension()) {
                for idx in self.range_of_i(i) {
                    let f = self.basis[idx];
                    let Some(cidx) = coarser.index_of(f.i, f.j) else { continue };
                    let a = self.eval(idx, u, v, (0, 0))?;
                    let b = coarser.eval(cidx, 2.0 * u, 2.0 * v, (0, 0))?;
                    worst = worst.max((a - b).abs());
                }
            }
        }
        Ok(worst)
    }

    /// Least-squares fit of every monomial `u^a v^b`, `a + b ≤ p`, by the functions
    /// overlapping `element`, restricted to sample points of the element.
    pub fn polynomial_embedding(&self, element: &HierElement) -> EmbeddingReport {
        let p = self.degree;
        let funcs = self.functions_overlapping(&element.rect);
        let k = 2 * (p + 2);
        let r = &element.rect;
        let (s0, s1, t0, t1) = (r.s0.to_f64(), r.s1.to_f64(), r.t0.to_f64(), r.t1.to_f64());
        let mut pts = Vec::with_capacity(k * k);
        for a in 0..k {
            for b in 0..k {
                let s = s0 + (s1 - s0) * (a as f64 + 0.5) / k as f64;
                let t = t0 + (t1 - t0) * (b as f64 + 0.5) / k as f64;
                pts.push((s, t));
            }
        }
        let mut mat = DMatrix::<f64>::zeros(pts.len(), funcs.len());
        for (row, &(s, t)) in pts.iter().enumerate() {
            for (col, &idx) in funcs.iter().enumerate() {
                let (sf, tf) = self.factors(idx, s, t);
                mat[(row, col)] = sf[0] * tf[0];
            }
        }
        let svd = mat.clone().svd(true, true);
        let mut max_residual: f64 = 0.0;
        for total in 0..=p {
            for b in 0..=total {
                let a = total - b;
                let rhs = DVector::from_iterator(
                    pts.len(),
                    pts.iter().map(|&(s, t)| s.powi(a as i32) * (s * t).powi(b as i32)),
                );
                let x = svd.solve(&rhs, 1e-13).expect("svd with vectors");
                let res = (&mat * x - rhs).amax();
                max_residual = max_residual.max(res);
            }
        }
        // Restricted factors: b^n_i is one degree-p polynomial per span, Bernstein factors
        // have degree i-1 ≤ p and b^m_j is degree p per span.
        let max_s_degree = self.degree;
        let max_t_degree = funcs
            .iter()
            .map(|&idx| match self.basis[idx].block {
                BasisBlock::Singular => self.basis[idx].i - 1,
                BasisBlock::Regular { .. } => self.degree,
            })
            .max()
            .unwrap_or(0);
        EmbeddingReport { max_residual, num_functions: funcs.len(), max_s_degree, max_t_degree }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmbeddingReport {
    pub max_residual: f64,
    pub num_functions: usize,
    pub max_s_degree: usize,
    pub max_t_degree: usize,
}

fn get(ders: &[Vec<f64>], k: usize, r: usize) -> f64 {
    ders.get(k).map(|d| d[r]).unwrap_or(0.0)
}

fn pick3(ders: &[Vec<f64>], first: usize, i: usize) -> [f64; 3] {
    if i < first || i >= first + ders[0].len() {
        return [0.0; 3];
    }
    let r = i - first;
    [ders[0][r], get(ders, 1, r), get(ders, 2, r)]
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}


impl HierSpace {
    /// Jet of `Σ c_k β_k` at `(u,v) ∈ Δ̄`, using vertex limits at the singular point.
    pub fn jet_at(&self, coeffs: &[f64], u: f64, v: f64, scratch: &mut Vec<(usize, Jet)>) -> Jet {
        if u < VERTEX_GUARD {
            let mut acc = Jet::default();
            for i in 1..=(self.degree + 1) {
                for idx in self.range_of_i(i) {
                    let c = coeffs[idx];
                    acc.val += c * self.vertex_derivative(idx, 0, 0);
                    acc.du += c * self.vertex_derivative(idx, 1, 0);
                    acc.dv += c * self.vertex_derivative(idx, 0, 1);
                    acc.duu += c * self.vertex_derivative(idx, 2, 0);
                    acc.duv += c * self.vertex_derivative(idx, 1, 1);
                    acc.dvv += c * self.vertex_derivative(idx, 0, 2);
                }
            }
            return acc;
        }
        self.combine_at(coeffs, u, (v / u).clamp(0.0, 1.0), scratch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::HierMesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, umax: f64, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let a: f64 = rng.gen();
                let b: f64 = rng.gen();
                let (x, y) = if b > a { (b, a) } else { (a, b) };
                (umax * x, umax * y)
            })
            .collect()
    }

    // count straight from the index ranges of the definition
    fn counted_dimension(p: usize, n: u32) -> usize {
        let mut count = 0;
        for i in 1..=(1usize << n) + p {
            if i <= p + 1 {
                count += i;
            } else {
                let m = (1..=n).find(|&m| i > p + (1 << (m - 1)) && i <= p + (1 << m)).unwrap();
                count += (1 << m) + p;
            }
        }
        count
    }

    #[test]
    fn dimensions() {
        assert_eq!(HierSpace::build(2, 1).unwrap().dimension(), 10);
        assert_eq!(HierSpace::build(2, 2).unwrap().dimension(), 22);
        assert_eq!(HierSpace::build(1, 1).unwrap().dimension(), 6);
        for p in 1..=4 {
            for n in 1..=6 {
                let sp = HierSpace::build(p, n).unwrap();
                assert_eq!(sp.dimension(), counted_dimension(p, n));
                assert_eq!(sp.dimension(), HierSpace::expected_dimension(p, n));
            }
        }
    }

    #[test]
    fn enumeration_order() {
        let sp = HierSpace::build(2, 3).unwrap();
        let b = sp.basis();
        assert_eq!(sp.singular_block_len(), 6);
        assert!(b[..6].iter().all(|f| f.block == BasisBlock::Singular));
        for w in b.windows(2) {
            assert!((w[0].i, w[0].j) < (w[1].i, w[1].j));
        }
        assert_eq!(b[6].block, BasisBlock::Regular { level: 1 });
        for (k, f) in b.iter().enumerate() {
            assert_eq!(sp.index_of(f.i, f.j), Some(k));
        }
    }

    #[test]
    fn partition_of_unity() {
        for p in 1..=4 {
            let sp = HierSpace::build(p, 4).unwrap();
            let ones = vec![1.0; sp.dimension()];
            let mut scratch = Vec::new();
            for (u, v) in random_points(1000, 1.0, p as u64) {
                let j = sp.jet_at(&ones, u, v, &mut scratch);
                assert!((j.val - 1.0).abs() < 1e-12);
                assert!(j.du.abs() < 1e-9 && j.dv.abs() < 1e-9);
                let direct: f64 = (0..sp.dimension()).map(|k| sp.eval(k, u, v, (0, 0)).unwrap()).sum();
                assert!((direct - 1.0).abs() < 1e-12);
            }
            assert!((sp.evaluate(&ones, 0.0, 0.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn first_function_is_independent_of_v() {
        let sp = HierSpace::build(2, 3).unwrap();
        let k = sp.index_of(1, 1).unwrap();
        for u in [0.01, 0.05, 0.1] {
            let a = sp.eval(k, u, 0.0, (0, 0)).unwrap();
            for v in [0.2 * u, 0.7 * u, u] {
                assert_eq!(sp.eval(k, u, v, (0, 0)).unwrap(), a);
            }
            assert_eq!(a, sp.s_space().eval(1, u, 0).unwrap());
        }
    }

    #[test]
    fn vertex_ray_limits_agree() {
        for p in 1..=4 {
            let sp = HierSpace::build(p, 3).unwrap();
            for k in 0..sp.dimension() {
                let r = sp.vertex_ray_values(k, 1e-12);
                let at0 = sp.eval(k, 0.0, 0.0, (0, 0)).unwrap();
                for x in r {
                    assert!((x - at0).abs() < 1e-10, "p={p} k={k} {r:?} {at0}");
                }
            }
        }
    }

    #[test]
    fn gradient_limits_are_ray_independent() {
        for p in 2..=4 {
            let sp = HierSpace::build(p, 3).unwrap();
            let eps = 1e-7;
            for k in 0..sp.singular_block_len() {
                for alpha in [(1, 0), (0, 1)] {
                    let lim = sp.vertex_derivative(k, alpha.0, alpha.1);
                    for a in [0.0, 0.5, 1.0] {
                        let x = sp.eval(k, eps, a * eps, alpha).unwrap();
                        assert!((x - lim).abs() < 1e-4 * (1.0 + lim.abs()), "p={p} k={k} {alpha:?} {x} {lim}");
                    }
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let sp = HierSpace::build(3, 3).unwrap();
        let h = 1e-5;
        for (u, v) in random_points(40, 1.0, 9) {
            if u < 0.05 || v < 1e-3 || v > u - 1e-3 || u > 1.0 - 1e-3 {
                continue;
            }
            for k in 0..sp.dimension() {
                let f = |a: f64, b: f64| sp.eval(k, a, b, (0, 0)).unwrap();
                let g = |a: f64, b: f64, al| sp.eval(k, a, b, al).unwrap();
                let du = (f(u + h, v) - f(u - h, v)) / (2.0 * h);
                let dv = (f(u, v + h) - f(u, v - h)) / (2.0 * h);
                assert!((du - g(u, v, (1, 0))).abs() < 1e-4, "k={k}");
                assert!((dv - g(u, v, (0, 1))).abs() < 1e-4, "k={k}");
                let duu = (g(u + h, v, (1, 0)) - g(u - h, v, (1, 0))) / (2.0 * h);
                let duv = (g(u, v + h, (1, 0)) - g(u, v - h, (1, 0))) / (2.0 * h);
                let dvv = (g(u, v + h, (0, 1)) - g(u, v - h, (0, 1))) / (2.0 * h);
                assert!((duu - g(u, v, (2, 0))).abs() < 1e-2 * (1.0 + duu.abs()), "k={k}");
                assert!((duv - g(u, v, (1, 1))).abs() < 1e-2 * (1.0 + duv.abs()), "k={k}");
                assert!((dvv - g(u, v, (0, 2))).abs() < 1e-2 * (1.0 + dvv.abs()), "k={k}");
            }
        }
    }

    #[test]
    fn derivative_order_limits() {
        let sp = HierSpace::build(1, 2).unwrap();
        assert!(matches!(sp.eval(0, 0.5, 0.2, (1, 1)), Err(Error::DerivativeTooHigh { .. })));
        assert!(matches!(sp.eval(0, 0.5, 0.7, (0, 0)), Err(Error::OutsideDomain(..))));
        assert!(sp.eval(999, 0.5, 0.2, (0, 0)).is_err());
    }

    #[test]
    fn local_support() {
        let sp = HierSpace::build(2, 3).unwrap();
        for (u, v) in random_points(300, 1.0, 4) {
            if u < 1e-3 {
                continue;
            }
            let (s, t) = (u, v / u);
            for k in 0..sp.dimension() {
                let r = sp.support_rect(k);
                let inside = r.s0.to_f64() <= s && s <= r.s1.to_f64() && r.t0.to_f64() <= t && t <= r.t1.to_f64();
                if !inside {
                    assert_eq!(sp.eval(k, u, v, (0, 0)).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn continuity_across_element_edges() {
        let p = 3;
        let n = 4;
        let sp = HierSpace::build(p, n).unwrap();
        let mesh = HierMesh::build(p, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coeffs: Vec<f64> = (0..sp.dimension()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut scratch = Vec::new();
        let mut worst: f64 = 0.0;
        let eps = 1e-13;
        for e in mesh.elements() {
            let r = &e.rect;
            let (s0, s1, t0, t1) = (r.s0.to_f64(), r.s1.to_f64(), r.t0.to_f64(), r.t1.to_f64());
            for k in 1..8 {
                let a = k as f64 / 8.0;
                let t = t0 + a * (t1 - t0);
                if s0 > 0.0 {
                    let l = sp.combine_at(&coeffs, s0 - eps, t, &mut scratch).val;
                    let rr = sp.combine_at(&coeffs, s0 + eps, t, &mut scratch).val;
                    worst = worst.max((l - rr).abs());
                }
                let s = s0.max(1e-3) + a * (s1 - s0.max(1e-3));
                for tb in [t0, t1] {
                    if tb > 0.0 && tb < 1.0 {
                        let l = sp.combine_at(&coeffs, s, tb - eps, &mut scratch).val;
                        let rr = sp.combine_at(&coeffs, s, tb + eps, &mut scratch).val;
                        worst = worst.max((l - rr).abs());
                    }
                }
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn self_similarity() {
        let fine = HierSpace::build(2, 5).unwrap();
        let coarse = HierSpace::build(2, 4).unwrap();
        let pts: Vec<(f64, f64)> = random_points(500, 0.5, 21).into_iter().filter(|p| p.0 < 0.5).collect();
        assert!(fine.self_similarity_defect(&coarse, &pts).unwrap() < 1e-12);
        // the boundary index i = 2^{n-1} is part of the check
        let i = 16;
        let k = fine.index_of(i, 9).unwrap();
        let kc = coarse.index_of(i, 9).unwrap();
        let (u, v) = (0.45, 0.2);
        let a = fine.eval(k, u, v, (0, 0)).unwrap();
        let b = coarse.eval(kc, 2.0 * u, 2.0 * v, (0, 0)).unwrap();
        assert!(a > 0.0 && (a - b).abs() < 1e-12);
        assert!(fine.self_similarity_defect(&fine, &pts).is_err());
    }

    #[test]
    fn polynomial_embedding() {
        for p in 1..=4 {
            let sp = HierSpace::build(p, 3).unwrap();
            let mesh = HierMesh::build(p, 3).unwrap();
            for e in mesh.elements() {
                let rep = sp.polynomial_embedding(e);
                assert!(rep.max_residual < 1e-9, "p={p} {rep:?}");
                assert!(rep.max_s_degree <= p && rep.max_t_degree <= p);
            }
        }
    }

    #[test]
    fn value_path_matches_jets() {
        let sp = HierSpace::build(3, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coeffs: Vec<f64> = (0..sp.dimension()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut scratch = Vec::new();
        for (u, v) in random_points(200, 1.0, 8) {
            if u < 1e-6 {
                continue;
            }
            let t = v / u;
            let a = sp.value_param(&coeffs, u, t);
            let b = sp.combine_at(&coeffs, u, t, &mut scratch).val;
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn block_levels() {
        assert_eq!(block_level(3, 2), None);
        assert_eq!(block_level(4, 2), Some(1));
        assert_eq!(block_level(5, 2), Some(2));
        assert_eq!(block_level(6, 2), Some(2));
        assert_eq!(block_level(7, 2), Some(3));
        assert_eq!(block_level(10, 2), Some(3));
        assert_eq!(block_level(11, 2), Some(4));
    }
}
