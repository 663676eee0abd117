//! The hierarchical Bézier mesh on Δ.
//!
//! `T̂_0 = {Δ}` and `T̂_n` keeps the level-`n` uniform cells lying in `u ≥ 1/2` and adds
//! every element of `T̂_{n-1}` scaled by 1/2 toward the singular vertex. In parameter
//! space this gives uniform columns of width `h = 2^-n`; column `c ≥ 1` (covering
//! `s ∈ [c h, (c+1) h]`) is cut into `2^L` strips in `t` with `L = ⌊log2 c⌋ + 1`, and
//! column 0 is the apex triangle `Δ_h`.

use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::space::HierSpace;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Trapezoid,
    ApexTriangle,
}

/// Parameter rectangle `[s0,s1]×[t0,t1]`; the element is its image under `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamRect {
    pub s0: Dyadic,
    pub s1: Dyadic,
    pub t0: Dyadic,
    pub t1: Dyadic,
}

impl ParamRect {
    pub fn new(s0: Dyadic, s1: Dyadic, t0: Dyadic, t1: Dyadic) -> Self {
        ParamRect { s0, s1, t0, t1 }
    }

    /// Positive-area overlap; rectangles touching along an edge or a corner are disjoint.
    pub fn overlaps(&self, other: &ParamRect) -> bool {
        self.s0 < other.s1 && other.s0 < self.s1 && self.t0 < other.t1 && other.t0 < self.t1
    }

    pub fn contains(&self, other: &ParamRect) -> bool {
        self.s0 <= other.s0 && other.s1 <= self.s1 && self.t0 <= other.t0 && other.t1 <= self.t1
    }

    /// Area of `u(rect)`: `∫∫ s ds dt`.
    pub fn mapped_area(&self) -> Dyadic {
        (self.s1 * self.s1 - self.s0 * self.s0) * (self.t1 - self.t0) * Dyadic::new(1, 1)
    }

    fn halved(&self) -> Self {
        ParamRect { s0: self.s0.half(), s1: self.s1.half(), ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierElement {
    pub kind: ElementKind,
    pub rect: ParamRect,
    pub level_of_origin: u32,
    pub diameter: f64,
    pub inradius: f64,
}

impl HierElement {
    fn new(kind: ElementKind, rect: ParamRect, level_of_origin: u32) -> Self {
        let verts = vertices_of(kind, &rect);
        let diameter = diameter(&verts);
        let inradius = inradius(&verts);
        HierElement { kind, rect, level_of_origin, diameter, inradius }
    }

    /// Physical vertices in counter-clockwise order.
    pub fn vertices(&self) -> Vec<(f64, f64)> {
        vertices_of(self.kind, &self.rect)
    }

    pub fn area(&self) -> Dyadic {
        self.rect.mapped_area()
    }

    pub fn contains_point(&self, u: f64, v: f64) -> bool {
        let (s0, s1) = (self.rect.s0.to_f64(), self.rect.s1.to_f64());
        if u < s0 || u > s1 || u <= 0.0 {
            return self.kind == ElementKind::ApexTriangle && u == 0.0 && v == 0.0;
        }
        let t = v / u;
        t >= self.rect.t0.to_f64() && t <= self.rect.t1.to_f64()
    }
}

fn vertices_of(kind: ElementKind, r: &ParamRect) -> Vec<(f64, f64)> {
    let (s0, s1, t0, t1) = (r.s0.to_f64(), r.s1.to_f64(), r.t0.to_f64(), r.t1.to_f64());
    match kind {
        ElementKind::ApexTriangle => vec![(0.0, 0.0), (s1, s1 * t0), (s1, s1 * t1)],
        ElementKind::Trapezoid => {
            vec![(s0, s0 * t0), (s1, s1 * t0), (s1, s1 * t1), (s0, s0 * t1)]
        }
    }
}

fn diameter(v: &[(f64, f64)]) -> f64 {
    let mut d: f64 = 0.0;
    for a in v {
        for b in v {
            d = d.max(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt());
        }
    }
    d
}

/// Radius of the largest inscribed circle of a convex CCW polygon (Chebyshev center):
/// the optimum is equidistant to three edge lines, so every triple is tried.
fn inradius(v: &[(f64, f64)]) -> f64 {
    let k = v.len();
    // edge lines n·x <= c with unit outward normals
    let lines: Vec<(f64, f64, f64)> = (0..k)
        .map(|i| {
            let a = v[i];
            let b = v[(i + 1) % k];
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let len = (dx * dx + dy * dy).sqrt();
            let (nx, ny) = (dy / len, -dx / len);
            (nx, ny, nx * a.0 + ny * a.1)
        })
        .collect();
    let mut best: f64 = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            for l in j + 1..k {
                let m = nalgebra::Matrix3::new(
                    lines[i].0, lines[i].1, 1.0, lines[j].0, lines[j].1, 1.0, lines[l].0,
                    lines[l].1, 1.0,
                );
                let rhs = nalgebra::Vector3::new(lines[i].2, lines[j].2, lines[l].2);
                let Some(sol) = m.lu().solve(&rhs) else { continue };
                let (x, y, r) = (sol[0], sol[1], sol[2]);
                if r <= 0.0 {
                    continue;
                }
                let feasible = lines.iter().all(|&(nx, ny, c)| c - nx * x - ny * y >= r * (1.0 - 1e-12));
                if feasible {
                    best = best.max(r);
                }
            }
        }
    }
    best
}

/// Three-way split of elements used to bound the projector locally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionClass {
    /// Element lies in `Δ \ Δ_{3/8}`.
    RightOf38,
    /// `2^m δ ⊂ Δ_{3/4} \ Δ_{3/8}` for the reported `m ≤ n - n0`.
    Scalable { m: u32 },
    /// Everything else; only reachable by scaling down to level `n0`.
    SingularCore,
}

impl RegionClass {
    pub fn label(&self) -> &'static str {
        match self {
            RegionClass::RightOf38 => "right_of_3_8",
            RegionClass::Scalable { .. } => "scalable",
            RegionClass::SingularCore => "singular_core",
        }
    }
}

/// Classify an s-range `[s0,s1]` of a level-`n` element, exact in dyadic arithmetic.
pub fn classify_s_range(s0: Dyadic, s1: Dyadic, level: u32, n0: u32) -> Result<RegionClass> {
    if level < n0 {
        return Err(Error::LevelTooSmall { level, n0 });
    }
    let three_8 = Dyadic::new(3, 3);
    let three_4 = Dyadic::new(3, 2);
    if s0 >= three_8 {
        return Ok(RegionClass::RightOf38);
    }
    if s1 <= three_8 {
        for m in 1..=(level - n0) {
            let a = s0.scale_pow2(m as i32);
            let b = s1.scale_pow2(m as i32);
            if a >= three_8 && b <= three_4 {
                return Ok(RegionClass::Scalable { m });
            }
        }
    }
    Ok(RegionClass::SingularCore)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierMesh {
    level: u32,
    degree: usize,
    elements: Vec<HierElement>,
    /// `column_start[c]` is the index of the first element of column `c`.
    column_start: Vec<usize>,
}

impl HierMesh {
    pub fn build(degree: usize, level: u32) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidArgument("degree must be at least 1".into()));
        }
        if level > 14 {
            return Err(Error::InvalidArgument(format!("mesh level {level} too large")));
        }
        let mut elements = build_recursive(level);
        elements.sort_by_key(|e| (e.rect.s0, e.rect.t0));
        let ncols = 1usize << level;
        let mut column_start = Vec::with_capacity(ncols + 1);
        for (idx, e) in elements.iter().enumerate() {
            let c = e.rect.s0.numerator_at(level) as usize;
            while column_start.len() <= c {
                column_start.push(idx);
            }
        }
        column_start.push(elements.len());
        debug_assert_eq!(column_start.len(), ncols + 1);
        Ok(HierMesh { level, degree, elements, column_start })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn elements(&self) -> &[HierElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, id: usize) -> Result<&HierElement> {
        self.elements.get(id).ok_or(Error::UnknownElement(id))
    }

    /// Closed-form element count `1 + Σ_{k=1..n} 2^{2k-1}`.
    pub fn expected_count(level: u32) -> usize {
        1 + (1..=level).map(|k| 1usize << (2 * k - 1)).sum::<usize>()
    }

    /// Number of t-strips in column `c` as a power of two (`0` for the apex).
    pub fn column_t_level(c: usize) -> u32 {
        if c == 0 {
            0
        } else {
            usize::BITS - c.leading_zeros()
        }
    }

    pub fn column(&self, c: usize) -> std::ops::Range<usize> {
        self.column_start[c]..self.column_start[c + 1]
    }

    /// Element containing the parameter point `(s,t)` (right/top-sided at interfaces).
    pub fn locate_param(&self, s: f64, t: f64) -> usize {
        let ncols = 1usize << self.level;
        let c = ((s * ncols as f64).floor().max(0.0) as usize).min(ncols - 1);
        let range = self.column(c);
        let strips = range.len();
        let r = ((t * strips as f64).floor().max(0.0) as usize).min(strips - 1);
        range.start + r
    }

    pub fn locate(&self, u: f64, v: f64) -> usize {
        let t = if u > 0.0 { v / u } else { 0.0 };
        self.locate_param(u, t)
    }

    /// Ids of all elements overlapping `rect` with positive area.
    pub fn elements_overlapping(&self, rect: &ParamRect) -> Vec<usize> {
        let ncols = 1i64 << self.level;
        let mut out = Vec::new();
        // columns whose open s-interval meets (s0, s1)
        let lo = rect.s0.floor_at(self.level).max(0);
        let hi = rect.s1.ceil_at(self.level).min(ncols);
        for c in lo..hi {
            for id in self.column(c as usize) {
                if self.elements[id].rect.overlaps(rect) {
                    out.push(id);
                }
            }
        }
        out
    }

    /// Support extension: union of the supports of all basis functions whose support
    /// overlaps the element, as element ids.
    pub fn support_extension(&self, id: usize, space: &HierSpace) -> Result<Vec<usize>> {
        let elem = self.element(id)?;
        if space.level() != self.level || space.degree() != self.degree {
            return Err(Error::InvalidArgument("space and mesh levels differ".into()));
        }
        let mut set = BTreeSet::new();
        for f in space.functions_overlapping(&elem.rect) {
            let rect = space.support_rect(f);
            set.extend(self.elements_overlapping(&rect));
        }
        Ok(set.into_iter().collect())
    }

    pub fn classify(&self, id: usize) -> Result<RegionClass> {
        let e = self.element(id)?;
        classify_s_range(e.rect.s0, e.rect.s1, self.level, crate::coarse_level(self.degree))
    }

    /// Smallest inradius/diameter ratio over all elements.
    pub fn min_shape_ratio(&self) -> f64 {
        self.elements.iter().map(|e| e.inradius / e.diameter).fold(f64::INFINITY, f64::min)
    }

    pub fn total_area(&self) -> Dyadic {
        self.elements.iter().fold(Dyadic::ZERO, |acc, e| acc + e.area())
    }
}


fn build_recursive(level: u32) -> Vec<HierElement> {
    let one = Dyadic::ONE;
    if level == 0 {
        let rect = ParamRect::new(Dyadic::ZERO, one, Dyadic::ZERO, one);
        return vec![HierElement::new(ElementKind::ApexTriangle, rect, 0)];
    }
    let n = level;
    let cells = 1i64 << n;
    let half = Dyadic::new(1, 1);
    let mut out = Vec::new();
    // uniform level-n cells fully inside Δ \ Δ_{1/2}
    for i in 0..cells {
        let s0 = Dyadic::new(i, n);
        let s1 = Dyadic::new(i + 1, n);
        if s0 < half {
            continue;
        }
        for j in 0..cells {
            let rect = ParamRect::new(s0, s1, Dyadic::new(j, n), Dyadic::new(j + 1, n));
            out.push(HierElement::new(ElementKind::Trapezoid, rect, n));
        }
    }
    for e in build_recursive(n - 1) {
        out.push(HierElement::new(e.kind, e.rect.halved(), e.level_of_origin));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct enumeration oracle: columns with the t-strip rule, independent of the
    /// recursive construction.
    fn enumerate(level: u32) -> BTreeSet<ParamRect> {
        let mut set = BTreeSet::new();
        let h = |k: i64| Dyadic::new(k, level);
        set.insert(ParamRect::new(Dyadic::ZERO, h(1), Dyadic::ZERO, Dyadic::ONE));
        for c in 1..(1i64 << level) {
            let l = HierMesh::column_t_level(c as usize);
            for r in 0..(1i64 << l) {
                set.insert(ParamRect::new(h(c), h(c + 1), Dyadic::new(r, l), Dyadic::new(r + 1, l)));
            }
        }
        set
    }

    #[test]
    fn element_counts() {
        assert_eq!(HierMesh::build(2, 0).unwrap().len(), 1);
        assert_eq!(HierMesh::build(2, 1).unwrap().len(), 3);
        assert_eq!(HierMesh::build(2, 2).unwrap().len(), 11);
        assert_eq!(HierMesh::build(2, 3).unwrap().len(), 43);
        for n in 0..=8 {
            let m = HierMesh::build(1, n).unwrap();
            assert_eq!(m.len(), HierMesh::expected_count(n));
            // 1 + (2/3)(4^n - 1)
            assert_eq!(m.len(), 1 + 2 * ((1usize << (2 * n)) - 1) / 3);
        }
    }

    #[test]
    fn recursion_matches_enumeration() {
        for n in 0..=7 {
            let m = HierMesh::build(2, n).unwrap();
            let got: BTreeSet<ParamRect> = m.elements().iter().map(|e| e.rect).collect();
            assert_eq!(got, enumerate(n));
        }
    }

    #[test]
    fn partition_area_is_exact() {
        for n in 0..=8 {
            let m = HierMesh::build(3, n).unwrap();
            assert_eq!(m.total_area(), Dyadic::new(1, 1));
        }
    }

    #[test]
    fn left_half_is_scaled_coarser_mesh() {
        for n in 1..=7 {
            let fine = HierMesh::build(2, n).unwrap();
            let coarse = HierMesh::build(2, n - 1).unwrap();
            let half = Dyadic::new(1, 1);
            let scaled: BTreeSet<ParamRect> = fine
                .elements()
                .iter()
                .filter(|e| e.rect.s1 <= half)
                .map(|e| ParamRect { s0: e.rect.s0.scale_pow2(1), s1: e.rect.s1.scale_pow2(1), ..e.rect })
                .collect();
            let expect: BTreeSet<ParamRect> = coarse.elements().iter().map(|e| e.rect).collect();
            assert_eq!(scaled, expect);
        }
    }

    #[test]
    fn trapezoid_vertices() {
        let m = HierMesh::build(1, 2).unwrap();
        for e in m.elements() {
            let v = e.vertices();
            let (s0, s1, t0, t1) =
                (e.rect.s0.to_f64(), e.rect.s1.to_f64(), e.rect.t0.to_f64(), e.rect.t1.to_f64());
            match e.kind {
                ElementKind::Trapezoid => {
                    assert!(v.contains(&(s0, s0 * t0)) && v.contains(&(s0, s0 * t1)));
                    assert!(v.contains(&(s1, s1 * t0)) && v.contains(&(s1, s1 * t1)));
                }
                ElementKind::ApexTriangle => assert_eq!(v, vec![(0.0, 0.0), (0.25, 0.0), (0.25, 0.25)]),
            }
        }
    }

    #[test]
    fn inradius_of_known_shapes() {
        // right isoceles triangle with legs 1: r = (a + b - c)/2
        let r = inradius(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]);
        assert!((r - (2.0 - 2f64.sqrt()) / 2.0).abs() < 1e-14);
        let sq = inradius(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]);
        assert!((sq - 1.0).abs() < 1e-14);
        let rect = inradius(&[(0.0, 0.0), (4.0, 0.0), (4.0, 1.0), (0.0, 1.0)]);
        assert!((rect - 0.5).abs() < 1e-14);
    }

    #[test]
    fn shape_regularity_is_level_independent() {
        let ratios: Vec<f64> = (1..=8).map(|n| HierMesh::build(2, n).unwrap().min_shape_ratio()).collect();
        // the minimum settles as n grows: new column positions only add shapes
        // close to ones already present
        assert!(ratios.iter().all(|&r| r > 0.09), "{ratios:?}");
        for w in ratios.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        let steps: Vec<f64> = ratios.windows(2).map(|w| w[0] - w[1]).collect();
        for w in steps.windows(2) {
            assert!(w[1] < w[0], "{steps:?}");
        }
        assert!((ratios[6] - ratios[7]) / ratios[7] < 0.01);
    }

    #[test]
    fn locate_finds_containing_element() {
        let m = HierMesh::build(2, 4).unwrap();
        for k in 0..200 {
            let u = (k as f64 * 0.6180339887).fract() * 0.999 + 0.0005;
            let v = u * (k as f64 * 0.41421356).fract();
            let id = m.locate(u, v);
            assert!(m.elements()[id].contains_point(u, v));
        }
        assert_eq!(m.elements()[m.locate(0.0, 0.0)].kind, ElementKind::ApexTriangle);
    }

    #[test]
    fn classification() {
        // p = 1: n0 = 3
        let n0 = 3;
        let d = |k, l| Dyadic::new(k, l);
        assert_eq!(classify_s_range(d(1, 1), d(1, 0), 4, n0).unwrap(), RegionClass::RightOf38);
        assert_eq!(classify_s_range(d(3, 4), d(3, 3), 4, n0).unwrap(), RegionClass::Scalable { m: 1 });
        assert_eq!(classify_s_range(d(5, 4), d(6, 4), 4, n0).unwrap(), RegionClass::Scalable { m: 1 });
        assert_eq!(classify_s_range(d(2, 4), d(3, 4), 4, n0).unwrap(), RegionClass::SingularCore);
        assert_eq!(classify_s_range(d(2, 4), d(3, 4), 5, n0).unwrap(), RegionClass::Scalable { m: 2 });
        assert!(classify_s_range(d(1, 1), d(1, 0), 2, n0).is_err());
        // apex is always singular core, exhaustively over m
        for n in n0 + 1..=n0 + 5 {
            let m = HierMesh::build(1, n).unwrap();
            assert_eq!(m.classify(0).unwrap(), RegionClass::SingularCore);
            for id in 0..m.len() {
                let c = m.classify(id).unwrap();
                if let RegionClass::Scalable { m: k } = c {
                    assert!(k >= 1 && k <= n - n0);
                }
            }
        }
    }
}
