//! Convergence studies, stability scans, rate fitting and report output.

use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::geometry::RationalGeometry;
use crate::mesh::{HierMesh, RegionClass};
use crate::norms::{
    element_seminorm_sq, omega_seminorm, sobolev_seminorm, Difference, MappedSpline, OmegaDifference,
};
use crate::projector::{singular_core_scaling_check, Projector, SplineFunction};
use crate::quadrature::QuadRule;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

/// Errors at or below this are treated as exact reproduction.
pub const REPRODUCTION_THRESHOLD: f64 = 1e-13;

pub const VERSION: &str = concat!("trispline ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RateFit {
    /// Least-squares slope of `log e` against `log h`, plus `log2(e_k / e_{k+1})`.
    Slope { slope: f64, ratios: Vec<f64> },
    /// All errors vanish to rounding; no rate is defined.
    Reproduced,
}

impl RateFit {
    pub fn slope(&self) -> Option<f64> {
        match self {
            RateFit::Slope { slope, .. } => Some(*slope),
            RateFit::Reproduced => None,
        }
    }
}

pub fn fit_rate(errors: &[f64], hs: &[f64]) -> Result<RateFit> {
    if errors.len() != hs.len() || errors.len() < 2 {
        return Err(Error::InvalidArgument("rate fit needs at least two (h, error) pairs".into()));
    }
    if errors.iter().any(|&e| !(e > REPRODUCTION_THRESHOLD)) {
        return Ok(RateFit::Reproduced);
    }
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let ratios = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(RateFit::Slope { slope, ratios })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRow {
    pub level: u32,
    pub h: f64,
    pub err_l2: f64,
    pub err_h1: f64,
    pub err_h2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorTable {
    pub degree: usize,
    pub n0: u32,
    pub function: String,
    pub domain: String,
    pub gauss_order: usize,
    pub version: String,
    pub rows: Vec<ErrorRow>,
    /// Fits over the finest three levels.
    pub rate_l2: RateFit,
    pub rate_h1: RateFit,
}

/// Setup of a convergence study.
#[derive(Debug, Clone)]
pub struct StudyConfig<'a> {
    pub degree: usize,
    pub levels: RangeInclusive<u32>,
    pub function: TestFunction,
    pub geometry: Option<&'a RationalGeometry>,
    pub gauss_order: usize,
    pub with_h2: bool,
}

impl<'a> StudyConfig<'a> {
    pub fn new(degree: usize, levels: RangeInclusive<u32>, function: TestFunction) -> Self {
        StudyConfig {
            degree,
            levels,
            function,
            geometry: None,
            gauss_order: crate::default_norm_order(degree),
            with_h2: false,
        }
    }

    pub fn on(mut self, geometry: &'a RationalGeometry) -> Self {
        self.geometry = Some(geometry);
        self
    }

    pub fn gauss_order(mut self, q: usize) -> Self {
        self.gauss_order = q;
        self
    }
}

fn level_errors(cfg: &StudyConfig<'_>, level: u32) -> Result<ErrorRow> {
    let p = cfg.degree;
    let proj = Projector::new(p, level, crate::default_gauss_order(p))?;
    let mesh = HierMesh::build(p, level)?;
    let quad = QuadRule::new(cfg.gauss_order);
    let phi = &cfg.function;
    let h = (0.5f64).powi(level as i32);
    match cfg.geometry {
        None => {
            let coeffs = proj.project(|u, v| phi.value(u, v));
            let approx = SplineFunction { space: proj.space(), coeffs: &coeffs.coefficients };
            let err = Difference(phi, &approx);
            let err_l2 = sobolev_seminorm(&mesh, &quad, &err, 0)?.value;
            let err_h1 = sobolev_seminorm(&mesh, &quad, &err, 1)?.value;
            let err_h2 =
                if cfg.with_h2 && p >= 2 { Some(sobolev_seminorm(&mesh, &quad, &err, 2)?.value) } else { None };
            Ok(ErrorRow { level, h, err_l2, err_h1, err_h2 })
        }
        Some(geom) => {
            if level < geom.coarse_level() {
                return Err(Error::LevelTooSmall { level, n0: geom.coarse_level() });
            }
            if geom.degree() != p {
                return Err(Error::InvalidGeometry("geometry degree differs from study degree".into()));
            }
            // ψ = (φ ∘ F) F0
            let coeffs = proj.project_param(|s, t| {
                let mut scratch = Vec::new();
                match geom.eval_param(s, t, &mut scratch) {
                    Ok(g) => phi.value(g.y[0], g.y[1]) * g.f0,
                    Err(_) => f64::NAN,
                }
            });
            let mapped = MappedSpline {
                spline: SplineFunction { space: proj.space(), coeffs: &coeffs.coefficients },
                geometry: geom,
            };
            let err = OmegaDifference(phi, &mapped);
            let err_l2 = omega_seminorm(&mesh, &quad, geom, &err, 0)?.value;
            let err_h1 = omega_seminorm(&mesh, &quad, geom, &err, 1)?.value;
            Ok(ErrorRow { level, h, err_l2, err_h1, err_h2: None })
        }
    }
}

pub fn run_convergence_study(cfg: &StudyConfig<'_>) -> Result<ErrorTable> {
    let levels: Vec<u32> = cfg.levels.clone().collect();
    if levels.len() < 3 {
        return Err(Error::InvalidArgument("a convergence study needs at least three levels".into()));
    }
    let n0 = crate::coarse_level(cfg.degree);
    if let Some(&first) = levels.first() {
        if first < n0 {
            return Err(Error::LevelTooSmall { level: first, n0 });
        }
    }
    if let Some(geom) = cfg.geometry {
        geom.validate(*levels.last().expect("nonempty"), cfg.gauss_order)?;
    }
    let rows = levels.iter().map(|&n| level_errors(cfg, n)).collect::<Result<Vec<_>>>()?;
    let tail = &rows[rows.len() - 3..];
    let hs: Vec<f64> = tail.iter().map(|r| r.h).collect();
    let rate_l2 = fit_rate(&tail.iter().map(|r| r.err_l2).collect::<Vec<_>>(), &hs)?;
    let rate_h1 = fit_rate(&tail.iter().map(|r| r.err_h1).collect::<Vec<_>>(), &hs)?;
    Ok(ErrorTable {
        degree: cfg.degree,
        n0,
        function: cfg.function.name.clone(),
        domain: if cfg.geometry.is_some() { "omega".into() } else { "delta".into() },
        gauss_order: cfg.gauss_order,
        version: VERSION.into(),
        rows,
        rate_l2,
        rate_h1,
    })
}

/// Largest relative change of any reported error when the Gauss order grows by two.
pub fn quadrature_self_convergence(cfg: &StudyConfig<'_>) -> Result<f64> {
    let base = run_convergence_study(cfg)?;
    let refined = run_convergence_study(&cfg.clone().gauss_order(cfg.gauss_order + 2))?;
    Ok(table_change(&base, &refined))
}

/// Largest relative difference between matching error entries of two tables.
pub fn table_change(a: &ErrorTable, b: &ErrorTable) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.rows.iter().zip(&b.rows) {
        worst = worst.max(relative_change(x.err_l2, y.err_l2)).max(relative_change(x.err_h1, y.err_h1));
        if let (Some(p), Some(q)) = (x.err_h2, y.err_h2) {
            worst = worst.max(relative_change(p, q));
        }
    }
    worst
}

fn relative_change(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn fmt_ratio(r: Option<f64>) -> String {
    r.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl ErrorTable {
    /// `level,h,err_L2,err_H1,ratio_L2,ratio_H1` with `#` comment lines for the
    /// configuration and the fitted slopes.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# {} degree={} n0={} function={} domain={} gauss_order={}",
            self.version, self.degree, self.n0, self.function, self.domain, self.gauss_order
        );
        out.push_str("level,h,err_L2,err_H1,ratio_L2,ratio_H1\n");
        for (k, r) in self.rows.iter().enumerate() {
            let (rl2, rh1) = if k == 0 {
                (None, None)
            } else {
                let prev = &self.rows[k - 1];
                (Some((prev.err_l2 / r.err_l2).log2()), Some((prev.err_h1 / r.err_h1).log2()))
            };
            let _ = writeln!(
                out,
                "{},{:.12e},{:.12e},{:.12e},{},{}",
                r.level,
                r.h,
                r.err_l2,
                r.err_h1,
                fmt_ratio(rl2),
                fmt_ratio(rh1)
            );
        }
        let show = |f: &RateFit| f.slope().map(|s| format!("{s:.6}")).unwrap_or_else(|| "reproduced".into());
        let _ = writeln!(out, "# slope_L2={} slope_H1={}", show(&self.rate_l2), show(&self.rate_h1));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable table")
    }
}

/// Setup of a stability scan.
#[derive(Debug, Clone)]
pub struct StabilityConfig {
    pub degree: usize,
    pub levels: RangeInclusive<u32>,
    pub samples: usize,
    pub seed: u64,
    pub gauss_order: usize,
}

impl StabilityConfig {
    pub fn new(degree: usize, levels: RangeInclusive<u32>, samples: usize, seed: u64) -> Self {
        StabilityConfig { degree, levels, samples, seed, gauss_order: crate::default_norm_order(degree) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStats {
    pub class: String,
    pub elements: usize,
    pub max_ratio: f64,
    pub mean_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStability {
    pub level: u32,
    pub elements: usize,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub per_class: Vec<ClassStats>,
    /// Largest ratio for the control function `φ = 1`.
    pub control_max_ratio: f64,
    /// Largest pointwise defect of the singular-core scaling identity over the samples.
    pub scaling_defect: f64,
    pub scaling_norm_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub degree: usize,
    pub n0: u32,
    pub seed: u64,
    pub samples: usize,
    pub gauss_order: usize,
    pub version: String,
    pub levels: Vec<LevelStability>,
    /// Measured stability constant: the largest ratio over all levels.
    pub cs_estimate: f64,
}

impl StabilityReport {
    /// Max ratio at the finest level divided by the max ratio at the first level.
    pub fn growth(&self) -> f64 {
        let first = self.levels.first().map(|l| l.max_ratio).unwrap_or(f64::NAN);
        let last = self.levels.last().map(|l| l.max_ratio).unwrap_or(f64::NAN);
        last / first
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# {} degree={} n0={} seed={} samples={} gauss_order={}",
            self.version, self.degree, self.n0, self.seed, self.samples, self.gauss_order
        );
        out.push_str("level,elements,max_ratio,mean_ratio,max_right_of_3_8,max_scalable,max_singular_core,control_max,scaling_defect\n");
        for l in &self.levels {
            let class_max = |name: &str| {
                l.per_class
                    .iter()
                    .find(|c| c.class == name)
                    .map(|c| format!("{:.12e}", c.max_ratio))
                    .unwrap_or_default()
            };
            let _ = writeln!(
                out,
                "{},{},{:.12e},{:.12e},{},{},{},{:.12e},{:.3e}",
                l.level,
                l.elements,
                l.max_ratio,
                l.mean_ratio,
                class_max("right_of_3_8"),
                class_max("scalable"),
                class_max("singular_core"),
                l.control_max_ratio,
                l.scaling_defect
            );
        }
        let _ = writeln!(out, "# cs_estimate={:.6} growth={:.6}", self.cs_estimate, self.growth());
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable report")
    }
}

/// Per-element ratios `‖Πφ‖_δ / ‖φ‖_{δ̃}` for one function.
pub fn element_ratios(
    proj: &Projector,
    mesh: &HierMesh,
    extensions: &[Vec<usize>],
    quad: &QuadRule,
    phi: &TestFunction,
) -> Vec<f64> {
    let coeffs = proj.project(|u, v| phi.value(u, v));
    let approx = SplineFunction { space: proj.space(), coeffs: &coeffs.coefficients };
    let mut scratch = Vec::new();
    let phi_sq: Vec<f64> =
        mesh.elements().iter().map(|e| element_seminorm_sq(e, quad, phi, 0, &mut scratch)).collect();
    mesh.elements()
        .iter()
        .zip(extensions)
        .map(|(e, ext)| {
            let num = element_seminorm_sq(e, quad, &approx, 0, &mut scratch).sqrt();
            let den = ext.iter().map(|&k| phi_sq[k]).sum::<f64>().sqrt();
            if den < 1e-300 {
                0.0
            } else {
                num / den
            }
        })
        .collect()
}

/// `‖Πφ‖_{L²(δ)} / ‖φ‖_{L²(δ̃)}` for a single element.
pub fn stability_ratio(proj: &Projector, mesh: &HierMesh, phi: &TestFunction, element: usize) -> Result<f64> {
    let quad = QuadRule::new(proj.gauss_order());
    let ext = mesh.support_extension(element, proj.space())?;
    let coeffs = proj.project(|u, v| phi.value(u, v));
    let approx = SplineFunction { space: proj.space(), coeffs: &coeffs.coefficients };
    let mut scratch = Vec::new();
    let e = mesh.element(element)?;
    let num = element_seminorm_sq(e, &quad, &approx, 0, &mut scratch).sqrt();
    let den = ext
        .iter()
        .map(|&k| element_seminorm_sq(&mesh.elements()[k], &quad, phi, 0, &mut scratch))
        .sum::<f64>()
        .sqrt();
    Ok(if den < 1e-300 { 0.0 } else { num / den })
}

pub fn run_stability_scan(cfg: &StabilityConfig) -> Result<StabilityReport> {
    let p = cfg.degree;
    let n0 = crate::coarse_level(p);
    if *cfg.levels.start() < n0 {
        return Err(Error::LevelTooSmall { level: *cfg.levels.start(), n0 });
    }
    let quad = QuadRule::new(cfg.gauss_order);
    let coarse = Projector::new(p, n0, crate::default_gauss_order(p))?;
    let samples: Vec<TestFunction> = (0..cfg.samples as u64).map(|k| TestFunction::random(cfg.seed, k)).collect();
    let mut levels = Vec::new();
    for level in cfg.levels.clone() {
        let mesh = HierMesh::build(p, level)?;
        let proj = Projector::new(p, level, crate::default_gauss_order(p))?;
        let extensions = (0..mesh.len())
            .into_par_iter()
            .map(|id| mesh.support_extension(id, proj.space()))
            .collect::<Result<Vec<_>>>()?;
        let classes = (0..mesh.len()).map(|id| mesh.classify(id)).collect::<Result<Vec<_>>>()?;
        let ratios: Vec<Vec<f64>> =
            samples.par_iter().map(|f| element_ratios(&proj, &mesh, &extensions, &quad, f)).collect();
        let control = element_ratios(&proj, &mesh, &extensions, &quad, &TestFunction::one());
        let mut max_ratio: f64 = 0.0;
        let mut sum = 0.0;
        let mut count = 0usize;
        let labels = ["right_of_3_8", "scalable", "singular_core"];
        let mut cls: Vec<(usize, f64, f64, usize)> = vec![(0, 0.0, 0.0, 0); 3];
        for (id, c) in classes.iter().enumerate() {
            let slot = match c {
                RegionClass::RightOf38 => 0,
                RegionClass::Scalable { .. } => 1,
                RegionClass::SingularCore => 2,
            };
            cls[slot].0 += 1;
            for r in &ratios {
                let x = r[id];
                max_ratio = max_ratio.max(x);
                sum += x;
                count += 1;
                cls[slot].1 = cls[slot].1.max(x);
                cls[slot].2 += x;
                cls[slot].3 += 1;
            }
        }
        let per_class = labels
            .iter()
            .zip(&cls)
            .filter(|(_, c)| c.0 > 0)
            .map(|(l, c)| ClassStats {
                class: (*l).into(),
                elements: c.0,
                max_ratio: c.1,
                mean_ratio: if c.3 > 0 { c.2 / c.3 as f64 } else { 0.0 },
            })
            .collect();
        let checks = samples
            .par_iter()
            .map(|f| singular_core_scaling_check(&proj, &coarse, &mesh, |u, v| f.value(u, v)))
            .collect::<Result<Vec<_>>>()?;
        levels.push(LevelStability {
            level,
            elements: mesh.len(),
            max_ratio,
            mean_ratio: if count > 0 { sum / count as f64 } else { 0.0 },
            per_class,
            control_max_ratio: control.iter().cloned().fold(0.0, f64::max),
            scaling_defect: checks.iter().map(|c| c.pointwise).fold(0.0, f64::max),
            scaling_norm_defect: checks.iter().map(|c| c.norm_relative).fold(0.0, f64::max),
        });
    }
    let cs_estimate = levels.iter().map(|l| l.max_ratio).fold(0.0, f64::max);
    Ok(StabilityReport {
        degree: p,
        n0,
        seed: cfg.seed,
        samples: cfg.samples,
        gauss_order: cfg.gauss_order,
        version: VERSION.into(),
        levels,
        cs_estimate,
    })
}

/// Largest relative change of the per-level maximum ratios under `q_g → q_g + 2`.
pub fn stability_self_convergence(cfg: &StabilityConfig) -> Result<f64> {
    let a = run_stability_scan(cfg)?;
    let mut refined = cfg.clone();
    refined.gauss_order += 2;
    let b = run_stability_scan(&refined)?;
    Ok(report_change(&a, &b))
}

/// Largest relative difference of the per-level max and mean ratios of two reports.
pub fn report_change(a: &StabilityReport, b: &StabilityReport) -> f64 {
    a.levels
        .iter()
        .zip(&b.levels)
        .map(|(x, y)| relative_change(x.max_ratio, y.max_ratio).max(relative_change(x.mean_ratio, y.mean_ratio)))
        .fold(0.0, f64::max)
}
