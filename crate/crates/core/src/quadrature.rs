//! Gauss–Legendre rules on [0, 1] and their tensor/Duffy use on mesh elements.

use crate::dyadic::Dyadic;

/// Gauss–Legendre rule with `order` points, mapped to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss rule needs at least one point");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order;
        for i in 0..n.div_ceil(2) {
            // Newton on P_n starting from the Chebyshev-like guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map [-1, 1] -> [0, 1]
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        GaussRule { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let len = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(a + len * x))
            .sum::<f64>()
            * len
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let len = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (a + len * x, w * len))
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A quadrature node on Δ together with its parameter-space preimage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub s: f64,
    pub t: f64,
    pub u: f64,
    pub v: f64,
    /// Weight including the pullback Jacobian `det ∇u = s`.
    pub weight: f64,
}

/// Element quadrature on Δ: tensor Gauss in the parameter rectangle, pulled back by
/// `u(s,t) = (s, s t)`. For the apex triangle `[0,h]×[0,1]` this is exactly the Duffy
/// transform of the unit square onto the triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub rule: GaussRule,
}

impl QuadRule {
    pub fn new(gauss_order: usize) -> Self {
        QuadRule { rule: GaussRule::new(gauss_order) }
    }

    pub fn gauss_order(&self) -> usize {
        self.rule.order()
    }

    pub fn points(&self, s0: Dyadic, s1: Dyadic, t0: Dyadic, t1: Dyadic) -> Vec<QuadPoint> {
        self.points_f64(s0.to_f64(), s1.to_f64(), t0.to_f64(), t1.to_f64())
    }

    pub fn points_f64(&self, s0: f64, s1: f64, t0: f64, t1: f64) -> Vec<QuadPoint> {
        let mut out = Vec::with_capacity(self.rule.order() * self.rule.order());
        for (s, ws) in self.rule.mapped(s0, s1) {
            for (t, wt) in self.rule.mapped(t0, t1) {
                out.push(QuadPoint { s, t, u: s, v: s * t, weight: ws * wt * s });
            }
        }
        out
    }
}
