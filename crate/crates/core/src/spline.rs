//! Uniform open-knot B-splines, Bernstein polynomials and local L² dual functionals.
//!
//! Basis indices are 1-based throughout the crate: `b^n_i` for `i = 1..=2^n + p`.

use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::quadrature::GaussRule;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Univariate uniform B-spline space of degree `p` on `[0,1]` with mesh size `2^-n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SplineSpace {
    degree: usize,
    level: u32,
}

/// Largest supported polynomial degree.
pub const MAX_DEGREE: usize = 8;

/// The `p + 1` B-splines that are nonzero on a knot span, with derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSplines {
    /// 1-based index of the first active function.
    pub first: usize,
    /// `ders[k][r]`: k-th derivative of function `first + r`.
    pub ders: Vec<Vec<f64>>,
}

impl SplineSpace {
    pub fn new(degree: usize, level: u32) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::InvalidArgument(format!("spline degree must lie in 1..={MAX_DEGREE}")));
        }
        if level > 30 {
            return Err(Error::InvalidArgument(format!("level {level} too large")));
        }
        Ok(SplineSpace { degree, level })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn num_spans(&self) -> usize {
        1usize << self.level
    }

    pub fn mesh_size(&self) -> Dyadic {
        Dyadic::new(1, self.level)
    }

    pub fn h(&self) -> f64 {
        self.mesh_size().to_f64()
    }

    pub fn dimension(&self) -> usize {
        self.num_spans() + self.degree
    }

    /// Knot `ξ_r`, 1-based, as a multiple of `h` clamped to `[0, 2^n]`.
    pub fn knot_index(&self, r: usize) -> usize {
        let p = self.degree;
        (r.saturating_sub(p + 1)).min(self.num_spans())
    }

    /// Support of `b_i` as span indices `[first, last)` in units of `h`.
    pub fn support_spans(&self, i: usize) -> (usize, usize) {
        let p = self.degree;
        (self.knot_index(i), self.knot_index(i + p + 1))
    }

    pub fn support(&self, i: usize) -> (Dyadic, Dyadic) {
        let (a, b) = self.support_spans(i);
        (Dyadic::new(a as i64, self.level), Dyadic::new(b as i64, self.level))
    }

    /// Span index containing `s`; right-sided at breakpoints except at `s = 1`.
    pub fn span_of(&self, s: f64) -> usize {
        let m = self.num_spans();
        let x = (s * m as f64).floor();
        if x < 0.0 {
            0
        } else {
            (x as usize).min(m - 1)
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.dimension() {
            return Err(Error::IndexOutOfRange { index: i, max: self.dimension() });
        }
        Ok(())
    }

    /// Values and derivatives up to `max_deriv` of the active functions at `s`.
    pub fn active(&self, s: f64, max_deriv: usize) -> ActiveSplines {
        let span = self.span_of(s);
        self.active_on_span(span, s, max_deriv)
    }

    /// Same as [`active`](Self::active) with the span fixed by the caller.
    pub fn active_on_span(&self, span: usize, s: f64, max_deriv: usize) -> ActiveSplines {
        let p = self.degree;
        let h = self.h();
        let knot = |r: isize| -> f64 {
            // knot with 0-based index `span + p + r` in the full vector
            let idx = span as isize + r;
            (idx.clamp(0, self.num_spans() as isize)) as f64 * h
        };
        let nd = max_deriv.min(p);
        // Piegl & Tiller A2.3.
        let mut ndu = [[0.0; MAX_DEGREE + 1]; MAX_DEGREE + 1];
        let mut left = [0.0; MAX_DEGREE + 1];
        let mut right = [0.0; MAX_DEGREE + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = s - knot(1 - j as isize);
            right[j] = knot(j as isize) - s;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; max_deriv + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = [[0.0; MAX_DEGREE + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=nd {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut fac = p as f64;
        for k in 1..=nd {
            for v in ders[k].iter_mut() {
                *v *= fac;
            }
            fac *= (p - k) as f64;
        }
        ActiveSplines { first: span + 1, ders }
    }

    /// `deriv_order`-th derivative of `b_i` at `s`.
    pub fn eval(&self, i: usize, s: f64, deriv_order: usize) -> Result<f64> {
        self.check_index(i)?;
        if deriv_order > self.degree {
            return Err(Error::DerivativeTooHigh { order: deriv_order, degree: self.degree });
        }
        let act = self.active(s, deriv_order);
        if i < act.first || i > act.first + self.degree {
            return Ok(0.0);
        }
        Ok(act.ders[deriv_order][i - act.first])
    }

    /// Local L² dual functional of `b_k`.
    pub fn dual(&self, k: usize) -> Result<UnivariateDual> {
        UnivariateDual::build(*self, k)
    }

    pub fn duals(&self) -> Result<Vec<UnivariateDual>> {
        (1..=self.dimension()).map(|k| self.dual(k)).collect()
    }
}

/// Bernstein polynomials of degree `d` on `[0,1]`, indexed `j = 1..=d+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BernsteinBasis {
    pub degree: usize,
}

impl BernsteinBasis {
    pub fn new(degree: usize) -> Self {
        BernsteinBasis { degree }
    }

    pub fn dimension(&self) -> usize {
        self.degree + 1
    }

    pub fn eval(&self, j: usize, t: f64, deriv_order: usize) -> Result<f64> {
        if j == 0 || j > self.dimension() {
            return Err(Error::IndexOutOfRange { index: j, max: self.dimension() });
        }
        Ok(bernstein_deriv(self.degree, j - 1, t, deriv_order))
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut r = 1.0;
    for i in 0..k.min(n - k) {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Plain Bernstein value, 0-based index.
pub(crate) fn bernstein(d: usize, i: usize, t: f64) -> f64 {
    if i > d {
        return 0.0;
    }
    binomial(d, i) * t.powi(i as i32) * (1.0 - t).powi((d - i) as i32)
}

/// k-th derivative of the 0-based Bernstein polynomial `B^d_i`.
pub(crate) fn bernstein_deriv(d: usize, i: usize, t: f64, k: usize) -> f64 {
    if k == 0 {
        return bernstein(d, i, t);
    }
    if k > d {
        return 0.0;
    }
    let mut acc = 0.0;
    for r in 0..=k {
        if r > i {
            break;
        }
        let sign = if (k - r).is_multiple_of(2) { 1.0 } else { -1.0 };
        acc += sign * binomial(k, r) * bernstein(d - k, i - r, t);
    }
    let mut fall = 1.0;
    for q in 0..k {
        fall *= (d - q) as f64;
    }
    fall * acc
}

/// Dual functional `λ_k(f) = ∫_span w_k f` with `w_k` in the span-local polynomial space.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateDual {
    pub index: usize,
    space: SplineSpace,
    /// Knot span (in units of `h`) carrying the weight.
    pub span: usize,
    /// Coefficients of the weight over the `p+1` splines active on the span.
    pub weight_coefficients: Vec<f64>,
}

impl UnivariateDual {
    fn build(space: SplineSpace, k: usize) -> Result<Self> {
        space.check_index(k)?;
        let p = space.degree();
        let (a, b) = space.support_spans(k);
        // middle span of the support, ties broken toward the left
        let span = a + (b - a - 1) / 2;
        let h = space.h();
        let rule = GaussRule::new(p + 1);
        let first = span + 1;
        let mut gram = DMatrix::<f64>::zeros(p + 1, p + 1);
        for (s, w) in rule.mapped(span as f64 * h, (span + 1) as f64 * h) {
            let act = space.active_on_span(span, s, 0);
            debug_assert_eq!(act.first, first);
            for r in 0..=p {
                for q in 0..=p {
                    gram[(r, q)] += w * act.ders[0][r] * act.ders[0][q];
                }
            }
        }
        let inv = gram.try_inverse().ok_or(Error::SingularGram(k))?;
        let row = k - first;
        let weight_coefficients = (0..=p).map(|q| inv[(row, q)]).collect();
        Ok(UnivariateDual { index: k, space, span, weight_coefficients })
    }

    pub fn support_interval(&self) -> (Dyadic, Dyadic) {
        let l = self.space.level();
        (Dyadic::new(self.span as i64, l), Dyadic::new(self.span as i64 + 1, l))
    }

    /// Weight function value at `s` (zero off the span).
    pub fn weight(&self, s: f64) -> f64 {
        let h = self.space.h();
        let (a, b) = (self.span as f64 * h, (self.span + 1) as f64 * h);
        if s < a || s > b {
            return 0.0;
        }
        let act = self.space.active_on_span(self.span, s, 0);
        act.ders[0].iter().zip(&self.weight_coefficients).map(|(b, c)| b * c).sum()
    }

    /// Quadrature nodes on the span with weights already multiplied by `w_k`.
    pub fn weighted_nodes(&self, rule: &GaussRule) -> Vec<(f64, f64)> {
        let h = self.space.h();
        rule.mapped(self.span as f64 * h, (self.span + 1) as f64 * h)
            .map(|(s, w)| {
                let act = self.space.active_on_span(self.span, s, 0);
                let wk: f64 =
                    act.ders[0].iter().zip(&self.weight_coefficients).map(|(b, c)| b * c).sum();
                (s, w * wk)
            })
            .collect()
    }

    pub fn apply(&self, rule: &GaussRule, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.weighted_nodes(rule).into_iter().map(|(s, w)| w * f(s)).sum()
    }

    /// `‖w_k‖_{L²}`, the operator norm of the functional on L².
    pub fn l2_bound(&self) -> f64 {
        let h = self.space.h();
        let rule = GaussRule::new(self.space.degree() + 1);
        rule.integrate(self.span as f64 * h, (self.span + 1) as f64 * h, |s| self.weight(s).powi(2))
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook Cox–de Boor recursion on the full knot vector, used as an oracle.
    fn cox_de_boor(space: &SplineSpace, i: usize, p: usize, s: f64) -> f64 {
        let h = space.h();
        let kn = |r: usize| space.knot_index(r) as f64 * h;
        if p == 0 {
            let (a, b) = (kn(i), kn(i + 1));
            let last = space.span_of(s) + space.degree() + 1 == i;
            return if (a <= s && s < b) || (s == 1.0 && last && a < b) { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = kn(i + p) - kn(i);
        if d1 > 0.0 {
            v += (s - kn(i)) / d1 * cox_de_boor(space, i, p - 1, s);
        }
        let d2 = kn(i + p + 1) - kn(i + 1);
        if d2 > 0.0 {
            v += (kn(i + p + 1) - s) / d2 * cox_de_boor(space, i + 1, p - 1, s);
        }
        v
    }

    #[test]
    fn hat_function_peak() {
        let sp = SplineSpace::new(1, 1).unwrap();
        assert_abs_diff_eq!(sp.eval(2, 0.5, 0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn open_knot_interpolates_at_zero() {
        let sp = SplineSpace::new(2, 0).unwrap();
        assert_abs_diff_eq!(sp.eval(1, 0.0, 0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sp.eval(3, 1.0, 0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn errors() {
        let sp = SplineSpace::new(2, 2).unwrap();
        assert!(matches!(sp.eval(0, 0.3, 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(sp.eval(7, 0.3, 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(sp.eval(2, 0.3, 3), Err(Error::DerivativeTooHigh { .. })));
        assert!(SplineSpace::new(0, 2).is_err());
        assert!(sp.dual(0).is_err());
    }

    #[test]
    fn matches_cox_de_boor_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in 1..=4 {
            for n in 0..=4 {
                let sp = SplineSpace::new(p, n).unwrap();
                for _ in 0..50 {
                    let s: f64 = rng.gen();
                    for i in 1..=sp.dimension() {
                        let a = sp.eval(i, s, 0).unwrap();
                        let b = cox_de_boor(&sp, i, p, s);
                        assert_abs_diff_eq!(a, b, epsilon = 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn partition_of_unity_all_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in 1..=4 {
            for n in 0..=6 {
                let sp = SplineSpace::new(p, n).unwrap();
                for _ in 0..1000 {
                    let s: f64 = rng.gen();
                    let sum: f64 = sp.active(s, 0).ders[0].iter().sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                }
                let sum: f64 = (1..=sp.dimension()).map(|i| sp.eval(i, 1.0, 0).unwrap()).sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn local_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for p in 1..=4 {
            let sp = SplineSpace::new(p, 3).unwrap();
            for i in 1..=sp.dimension() {
                let (a, b) = sp.support(i);
                for _ in 0..200 {
                    let s: f64 = rng.gen();
                    if s < a.to_f64() || s > b.to_f64() {
                        assert_eq!(sp.eval(i, s, 0).unwrap(), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in 1..=4 {
            let sp = SplineSpace::new(p, 2).unwrap();
            for _ in 0..100 {
                let s: f64 = rng.gen_range(0.01..0.99);
                let eps = 1e-6;
                // stay away from breakpoints where derivatives jump
                let dist = ((s * 4.0) - (s * 4.0).round()).abs() / 4.0;
                if dist < 10.0 * eps {
                    continue;
                }
                for i in 1..=sp.dimension() {
                    for d in 1..=p {
                        let exact = sp.eval(i, s, d).unwrap();
                        let fd = (sp.eval(i, s + eps, d - 1).unwrap()
                            - sp.eval(i, s - eps, d - 1).unwrap())
                            / (2.0 * eps);
                        let scale = exact.abs().max(1.0);
                        assert!(
                            (exact - fd).abs() / scale < 1e-6,
                            "p={p} i={i} d={d} s={s}: {exact} vs {fd}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn bernstein_values() {
        let b2 = BernsteinBasis::new(2);
        assert_abs_diff_eq!(b2.eval(1, 0.0, 0).unwrap(), 1.0);
        let b1 = BernsteinBasis::new(1);
        assert_abs_diff_eq!(b1.eval(2, 0.25, 0).unwrap(), 0.25);
        assert!(b1.eval(3, 0.25, 0).is_err());
        assert!(b1.eval(0, 0.25, 0).is_err());
        let b3 = BernsteinBasis::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let t: f64 = rng.gen();
            let sum: f64 = (1..=4).map(|j| b3.eval(j, t, 0).unwrap()).sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-14);
            let dsum: f64 = (1..=4).map(|j| b3.eval(j, t, 1).unwrap()).sum();
            assert_abs_diff_eq!(dsum, 0.0, epsilon = 1e-12);
        }
        let b0 = BernsteinBasis::new(0);
        assert_eq!(b0.eval(1, 0.3, 0).unwrap(), 1.0);
        assert_eq!(b0.eval(1, 0.3, 1).unwrap(), 0.0);
    }

    #[test]
    fn bernstein_derivatives_match_finite_differences() {
        for d in 0..=4 {
            let b = BernsteinBasis::new(d);
            for j in 1..=d + 1 {
                for &t in &[0.13, 0.5, 0.77] {
                    for k in 1..=2 {
                        let eps = 1e-5;
                        let fd = (b.eval(j, t + eps, k - 1).unwrap() - b.eval(j, t - eps, k - 1).unwrap())
                            / (2.0 * eps);
                        assert_abs_diff_eq!(b.eval(j, t, k).unwrap(), fd, epsilon = 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn duality_matrix_is_identity() {
        for p in 1..=4 {
            for n in 0..=5 {
                let sp = SplineSpace::new(p, n).unwrap();
                let rule = GaussRule::new(p + 2);
                for k in 1..=sp.dimension() {
                    let dual = sp.dual(k).unwrap();
                    let (a, b) = dual.support_interval();
                    let (sa, sb) = sp.support(k);
                    assert!(sa <= a && b <= sb);
                    for i in 1..=sp.dimension() {
                        let val = dual.apply(&rule, |s| sp.eval(i, s, 0).unwrap());
                        let expect = if i == k { 1.0 } else { 0.0 };
                        assert!((val - expect).abs() < 1e-9, "p={p} n={n} k={k} i={i}: {val}");
                    }
                }
            }
        }
    }

    #[test]
    fn dual_span_is_middle_of_support() {
        let sp = SplineSpace::new(2, 3).unwrap();
        // b_1 lives on one span, b_2 on two (take the left), b_3 on three (take the middle)
        assert_eq!(sp.dual(1).unwrap().span, 0);
        assert_eq!(sp.dual(2).unwrap().span, 0);
        assert_eq!(sp.dual(3).unwrap().span, 1);
        assert_eq!(sp.dual(10).unwrap().span, 7);
    }

    #[test]
    fn constants_reproduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in 1..=3 {
            let sp = SplineSpace::new(p, 3).unwrap();
            let rule = GaussRule::new(p + 2);
            let coeffs: Vec<f64> =
                sp.duals().unwrap().iter().map(|d| d.apply(&rule, |_| 1.0)).collect();
            for _ in 0..100 {
                let s: f64 = rng.gen();
                let v: f64 = (1..=sp.dimension()).map(|i| coeffs[i - 1] * sp.eval(i, s, 0).unwrap()).sum();
                assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn dual_bound_scales_like_inverse_sqrt_h() {
        for p in 1..=3 {
            let a = SplineSpace::new(p, 4).unwrap().dual(8).unwrap().l2_bound();
            let b = SplineSpace::new(p, 6).unwrap().dual(30).unwrap().l2_bound();
            // interior functions: the bound grows by sqrt(4) = 2 when h shrinks by 4
            assert_abs_diff_eq!(b / a, 2.0, epsilon = 1e-8);
        }
    }
}
