//! Smooth test functions with derivatives up to order two.

use crate::space::Jet;
use crate::spline::SplineSpace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub enum TestFunctionKind {
    One,
    /// `x^p + x^{p-1} y`, a total-degree-`p` polynomial.
    Poly { degree: usize },
    /// `sin(πx) sin(πy)`.
    Trig,
    /// `exp(x + y)`.
    Exp,
    Monomial { a: u32, b: u32 },
    Random(Box<RandomSmooth>),
}

/// A named smooth function of two variables; on Δ the variables are `(u,v)`, on Ω
/// they are the physical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub name: String,
    pub kind: TestFunctionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    Polynomial,
    Analytic,
}

impl TestFunction {
    pub fn one() -> Self {
        TestFunction { name: "one".into(), kind: TestFunctionKind::One }
    }

    pub fn poly(degree: usize) -> Self {
        TestFunction { name: "poly".into(), kind: TestFunctionKind::Poly { degree } }
    }

    pub fn trig() -> Self {
        TestFunction { name: "trig".into(), kind: TestFunctionKind::Trig }
    }

    pub fn exp() -> Self {
        TestFunction { name: "exp".into(), kind: TestFunctionKind::Exp }
    }

    pub fn monomial(a: u32, b: u32) -> Self {
        TestFunction { name: format!("u^{a}v^{b}"), kind: TestFunctionKind::Monomial { a, b } }
    }

    pub fn random(seed: u64, index: u64) -> Self {
        TestFunction {
            name: format!("random[{seed}:{index}]"),
            kind: TestFunctionKind::Random(Box::new(RandomSmooth::new(seed, index))),
        }
    }

    /// Registry lookup; `poly` resolves to the degree-`p` polynomial.
    pub fn by_name(name: &str, degree: usize) -> Option<Self> {
        match name {
            "one" => Some(Self::one()),
            "poly" => Some(Self::poly(degree)),
            "trig" => Some(Self::trig()),
            "exp" | "expf" => Some(Self::exp()),
            "u" => Some(Self::monomial(1, 0)),
            "v" => Some(Self::monomial(0, 1)),
            _ => None,
        }
    }

    pub fn registry_names() -> &'static [&'static str] {
        &["one", "poly", "trig", "exp", "u", "v"]
    }

    pub fn smoothness(&self) -> Smoothness {
        match self.kind {
            TestFunctionKind::One | TestFunctionKind::Poly { .. } | TestFunctionKind::Monomial { .. } => {
                Smoothness::Polynomial
            }
            _ => Smoothness::Analytic,
        }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        match &self.kind {
            TestFunctionKind::One => 1.0,
            TestFunctionKind::Poly { degree } => {
                let p = *degree as i32;
                x.powi(p) + x.powi(p - 1) * y
            }
            TestFunctionKind::Trig => (PI * x).sin() * (PI * y).sin(),
            TestFunctionKind::Exp => (x + y).exp(),
            TestFunctionKind::Monomial { a, b } => x.powi(*a as i32) * y.powi(*b as i32),
            TestFunctionKind::Random(r) => r.value(x, y),
        }
    }

    pub fn jet(&self, x: f64, y: f64) -> Jet {
        match &self.kind {
            TestFunctionKind::One => Jet { val: 1.0, ..Jet::default() },
            TestFunctionKind::Poly { degree } => {
                let p = *degree as u32;
                let mut j = monomial_jet(p, 0, x, y);
                j.axpy(1.0, &monomial_jet(p - 1, 1, x, y));
                j
            }
            TestFunctionKind::Trig => {
                let (sx, cx) = (PI * x).sin_cos();
                let (sy, cy) = (PI * y).sin_cos();
                let pi2 = PI * PI;
                Jet {
                    val: sx * sy,
                    du: PI * cx * sy,
                    dv: PI * sx * cy,
                    duu: -pi2 * sx * sy,
                    duv: pi2 * cx * cy,
                    dvv: -pi2 * sx * sy,
                }
            }
            TestFunctionKind::Exp => {
                let e = (x + y).exp();
                Jet { val: e, du: e, dv: e, duu: e, duv: e, dvv: e }
            }
            TestFunctionKind::Monomial { a, b } => monomial_jet(*a, *b, x, y),
            TestFunctionKind::Random(r) => r.jet(x, y),
        }
    }
}

fn dpow(x: f64, a: u32, k: u32) -> f64 {
    if k > a {
        return 0.0;
    }
    let mut c = 1.0;
    for q in 0..k {
        c *= (a - q) as f64;
    }
    c * x.powi((a - k) as i32)
}

fn monomial_jet(a: u32, b: u32, x: f64, y: f64) -> Jet {
    Jet {
        val: dpow(x, a, 0) * dpow(y, b, 0),
        du: dpow(x, a, 1) * dpow(y, b, 0),
        dv: dpow(x, a, 0) * dpow(y, b, 1),
        duu: dpow(x, a, 2) * dpow(y, b, 0),
        duv: dpow(x, a, 1) * dpow(y, b, 1),
        dvv: dpow(x, a, 0) * dpow(y, b, 2),
    }
}

/// Random smooth function: a cubic tensor B-spline on a 4×4 Cartesian grid of
/// `[0,1]²` with coefficients uniform in `[-1,1]`, plus three plane-wave modes
/// `a cos(π(k1 x + k2 y) + φ)` with `k1, k2 ∈ {0,1,2}`.
///
/// The stream comes from `ChaCha8Rng::seed_from_u64(seed)` advanced to `index` via
/// `set_stream(index)`, so function `index` does not depend on how many others were drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSmooth {
    space: SplineSpace,
    coeffs: Vec<f64>,
    modes: Vec<(f64, f64, f64, f64)>,
}

impl RandomSmooth {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let space = SplineSpace::new(3, 2).expect("valid space");
        let n = space.dimension();
        let coeffs = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let modes = (0..3)
            .map(|_| {
                let k1 = rng.gen_range(0..=2) as f64;
                let k2 = rng.gen_range(0..=2) as f64;
                let amp = rng.gen_range(-1.0..1.0);
                let phase = rng.gen_range(0.0..2.0 * PI);
                (k1, k2, amp, phase)
            })
            .collect();
        RandomSmooth { space, coeffs, modes }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let n = self.space.dimension();
        let ax = self.space.active(x.clamp(0.0, 1.0), 0);
        let ay = self.space.active(y.clamp(0.0, 1.0), 0);
        let mut val = 0.0;
        for (r, bx) in ax.ders[0].iter().enumerate() {
            let row = &self.coeffs[(ax.first + r - 1) * n..];
            for (q, by) in ay.ders[0].iter().enumerate() {
                val += row[ay.first + q - 1] * bx * by;
            }
        }
        for &(k1, k2, a, ph) in &self.modes {
            val += a * (PI * (k1 * x + k2 * y) + ph).cos();
        }
        val
    }

    pub fn jet(&self, x: f64, y: f64) -> Jet {
        let n = self.space.dimension();
        let ax = self.space.active(x.clamp(0.0, 1.0), 2);
        let ay = self.space.active(y.clamp(0.0, 1.0), 2);
        let mut j = Jet::default();
        for (r, _) in ax.ders[0].iter().enumerate() {
            for (q, _) in ay.ders[0].iter().enumerate() {
                let c = self.coeffs[(ax.first + r - 1) * n + (ay.first + q - 1)];
                j.val += c * ax.ders[0][r] * ay.ders[0][q];
                j.du += c * ax.ders[1][r] * ay.ders[0][q];
                j.dv += c * ax.ders[0][r] * ay.ders[1][q];
                j.duu += c * ax.ders[2][r] * ay.ders[0][q];
                j.duv += c * ax.ders[1][r] * ay.ders[1][q];
                j.dvv += c * ax.ders[0][r] * ay.ders[2][q];
            }
        }
        for &(k1, k2, a, ph) in &self.modes {
            let arg = PI * (k1 * x + k2 * y) + ph;
            let (s, c) = arg.sin_cos();
            let (w1, w2) = (PI * k1, PI * k2);
            j.val += a * c;
            j.du -= a * w1 * s;
            j.dv -= a * w2 * s;
            j.duu -= a * w1 * w1 * c;
            j.duv -= a * w1 * w2 * c;
            j.dvv -= a * w2 * w2 * c;
        }
        j
    }
}
