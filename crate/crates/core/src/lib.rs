//! Hierarchical spline spaces on the triangle `Δ = {0 < v < u < 1}` obtained from the
//! singular map `u(s,t) = (s, s t)`, their dual-basis quasi-interpolation projector,
//! and the quadrature/Sobolev-norm machinery used to measure its stability and
//! approximation rates on Δ and on mapped domains `Ω = F(Δ)`.

pub mod dyadic;
pub mod error;
pub mod functions;
pub mod geometry;
pub mod mesh;
pub mod norms;
pub mod projector;
pub mod quadrature;
pub mod space;
pub mod spline;
pub mod study;

pub use dyadic::Dyadic;
pub use error::{Error, Result};
pub use functions::{TestFunction, TestFunctionKind};
pub use geometry::{RationalGeometry, SingularMap, TriangleDomain};
pub use mesh::{HierElement, HierMesh, RegionClass};
pub use projector::{Projector, ProjectionResult, SingularDualSet, SplineFunction};
pub use quadrature::{GaussRule, QuadPoint, QuadRule};
pub use space::{BasisBlock, HierBasisFunction, HierSpace, Jet};
pub use spline::{BernsteinBasis, SplineSpace, UnivariateDual};
pub use study::{
    fit_rate, run_convergence_study, run_stability_scan, ErrorTable, RateFit, StabilityConfig, StabilityReport,
    StudyConfig,
};

/// Coarsest level of the projector, `n0 = ceil(log2(8 p))`.
pub fn coarse_level(degree: usize) -> u32 {
    let x = 8 * degree;
    // ceil(log2 x) for x >= 1
    usize::BITS - (x - 1).leading_zeros()
}

/// Default Gauss points per direction for the dual functionals.
pub fn default_gauss_order(degree: usize) -> usize {
    degree + 3
}

/// Default Gauss points per direction for error norms. Two more than the dual rule:
/// at `p + 3` the H¹ errors still move by ~1e-7 under `q → q + 2`.
pub fn default_norm_order(degree: usize) -> usize {
    degree + 5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_levels() {
        assert_eq!(coarse_level(1), 3);
        assert_eq!(coarse_level(2), 4);
        assert_eq!(coarse_level(3), 5);
        assert_eq!(coarse_level(4), 5);
        assert_eq!(coarse_level(5), 6);
    }
}
