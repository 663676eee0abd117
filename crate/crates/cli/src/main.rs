//! Command-line front end for meshes, bases, projections, convergence studies and
//! stability scans on the singularly parameterized triangle.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use trispline::geometry::GeometryFile;
use trispline::study::{quadrature_self_convergence, VERSION};
use trispline::*;

#[derive(Parser, Debug)]
#[command(name = "trispline", version, about = "Hierarchical splines on the singular triangle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump the elements of the hierarchical mesh as JSON.
    Mesh {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        level: Option<u32>,
    },
    /// List the basis (JSON) or sample one function on a grid (CSV: u,v,value).
    Basis {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        level: Option<u32>,
        /// 0-based position in the canonical enumeration.
        #[arg(long)]
        index: Option<usize>,
        /// Grid points per direction when sampling a function.
        #[arg(long, default_value_t = 21)]
        grid: usize,
    },
    /// Project a test function and write the coefficient vector.
    Project {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        level: Option<u32>,
        #[arg(long)]
        function: String,
        #[arg(long)]
        geometry: Option<PathBuf>,
    },
    /// Convergence study over a range of levels.
    Study {
        #[command(flatten)]
        common: Common,
        /// `a:b` or a single level.
        #[arg(long)]
        levels: Option<String>,
        #[arg(long)]
        function: String,
        #[arg(long)]
        geometry: Option<PathBuf>,
        /// Also report the second-order seminorm error (Δ studies, p >= 2).
        #[arg(long)]
        h2: bool,
        /// Repeat the study with two more Gauss points and report the largest change.
        #[arg(long)]
        certify: bool,
    },
    /// Stability scan with seeded random smooth functions.
    Stability {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        levels: Option<String>,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Validate a geometry file, or write one of the built-in geometries.
    GeometryCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "preset")]
        geometry: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Coefficients `a,b` of the curved preset `(u + a u v, v + b u v)`.
        #[arg(long, default_value = "0.1,0.1")]
        bend: String,
        /// Level of the sampling mesh.
        #[arg(long)]
        level: Option<u32>,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, default_value_t = 2)]
    degree: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Gauss points per direction for norms (default p+5).
    #[arg(long)]
    quad_order: Option<usize>,
    /// Use the printed `m(k) = ceil(log2(k-p+1))` for the tensor duals.
    #[arg(long)]
    literal_mk: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Preset {
    Identity,
    Curved,
}

enum Failure {
    Validation(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn invalid<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Validation(msg.into()))
}

fn parse_levels(spec: Option<&str>, n0: u32) -> CliResult<RangeInclusive<u32>> {
    let Some(spec) = spec else { return Ok(n0..=n0 + 3) };
    let parse = |x: &str| x.trim().parse::<u32>().map_err(|_| Failure::Validation(format!("bad level `{x}`")));
    let (a, b) = match spec.split_once(':') {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => {
            let a = parse(spec)?;
            (a, a)
        }
    };
    if a > b {
        return invalid(format!("empty level range {spec}"));
    }
    if b > 12 {
        return invalid(format!("level {b} too large (max 12)"));
    }
    Ok(a..=b)
}

fn check_degree(p: usize) -> CliResult<()> {
    if !(1..=4).contains(&p) {
        return invalid(format!("degree {p} not supported (1..=4)"));
    }
    Ok(())
}

fn function(name: &str, p: usize) -> CliResult<TestFunction> {
    TestFunction::by_name(name, p).ok_or_else(|| {
        Failure::Validation(format!("unknown function `{name}` (known: {})", TestFunction::registry_names().join(", ")))
    })
}

fn load_geometry(path: &Path) -> CliResult<RationalGeometry> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    let file: GeometryFile =
        serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    Ok(RationalGeometry::from_file(file)?)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Validation(format!("stdout: {e}")))
        }
    }
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn echo(args: &[String]) -> String {
    args.join(" ")
}

fn run_mesh(common: &Common, level: Option<u32>, argv: &str) -> CliResult<String> {
    let p = common.degree;
    check_degree(p)?;
    let level = level.unwrap_or(coarse_level(p));
    if level > 12 {
        return invalid(format!("level {level} too large (max 12)"));
    }
    let mesh = HierMesh::build(p, level)?;
    let n0 = coarse_level(p);
    let elements = mesh
        .elements()
        .iter()
        .enumerate()
        .map(|(id, e)| {
            let class = if level >= n0 { mesh.classify(id).ok().map(|c| c.label()) } else { None };
            json!({
                "id": id,
                "kind": e.kind,
                "rect": e.rect,
                "vertices": e.vertices(),
                "diameter": e.diameter,
                "inradius": e.inradius,
                "class": class,
            })
        })
        .collect::<Vec<_>>();
    Ok(to_json(&json!({
        "config": { "command": argv, "version": VERSION, "degree": p, "level": level },
        "count": mesh.len(),
        "elements": elements,
    })))
}

fn run_basis(common: &Common, level: Option<u32>, index: Option<usize>, grid: usize, argv: &str) -> CliResult<String> {
    let p = common.degree;
    check_degree(p)?;
    let level = level.unwrap_or(coarse_level(p));
    if level > 12 {
        return invalid(format!("level {level} too large (max 12)"));
    }
    let space = HierSpace::build(p, level)?;
    match index {
        None => Ok(to_json(&json!({
            "config": { "command": argv, "version": VERSION, "degree": p, "level": level },
            "dimension": space.dimension(),
            "basis": space.basis(),
        }))),
        Some(k) => {
            if k >= space.dimension() {
                return invalid(format!("index {k} out of range 0..{}", space.dimension()));
            }
            if grid < 2 {
                return invalid("grid needs at least 2 points per direction");
            }
            let f = space.basis()[k];
            let mut out = String::new();
            let _ = writeln!(out, "# {argv}");
            let _ = writeln!(out, "# {VERSION} degree={p} level={level} i={} j={}", f.i, f.j);
            out.push_str("u,v,value\n");
            let m = grid - 1;
            for a in 0..=m {
                for b in 0..=a {
                    let u = a as f64 / m as f64;
                    let v = b as f64 / m as f64;
                    let val = space.eval(k, u, v, (0, 0))?;
                    let _ = writeln!(out, "{u:.6},{v:.6},{val:.15e}");
                }
            }
            Ok(out)
        }
    }
}

fn run_project(
    common: &Common,
    level: Option<u32>,
    fname: &str,
    geometry: Option<&Path>,
    argv: &str,
) -> CliResult<String> {
    let p = common.degree;
    check_degree(p)?;
    let n0 = coarse_level(p);
    let level = level.unwrap_or(n0);
    if level > 12 {
        return invalid(format!("level {level} too large (max 12)"));
    }
    let phi = function(fname, p)?;
    let proj = Projector::with_options(p, level, default_gauss_order(p), common.literal_mk)?;
    let result = match geometry {
        None => proj.project(|u, v| phi.value(u, v)),
        Some(path) => {
            let geom = load_geometry(path)?;
            if geom.degree() != p {
                return invalid(format!("geometry degree {} differs from --degree {p}", geom.degree()));
            }
            if level < geom.coarse_level() {
                return Err(Error::LevelTooSmall { level, n0: geom.coarse_level() }.into());
            }
            geom.validate(level, default_norm_order(p))?;
            proj.project_param(|s, t| {
                let mut scratch = Vec::new();
                match geom.eval_param(s, t, &mut scratch) {
                    Ok(g) => phi.value(g.y[0], g.y[1]) * g.f0,
                    Err(_) => f64::NAN,
                }
            })
        }
    };
    if result.coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Failure::Numerical("projection produced non-finite coefficients".into()));
    }
    Ok(to_json(&json!({
        "config": {
            "command": argv,
            "version": VERSION,
            "degree": p,
            "level": level,
            "n0": n0,
            "function": phi.name,
            "geometry": geometry.map(|g| g.display().to_string()),
            "dual_gauss_order": proj.gauss_order(),
            "literal_mk": common.literal_mk,
        },
        "basis": proj.space().basis(),
        "coefficients": result.coefficients,
    })))
}

fn prepend_echo(argv: &str, text: String, format: Format) -> String {
    match format {
        Format::Csv => format!("# {argv}\n{text}"),
        Format::Json => text,
    }
}

fn run_study(
    common: &Common,
    levels: Option<&str>,
    fname: &str,
    geometry: Option<&Path>,
    h2: bool,
    certify: bool,
    argv: &str,
) -> CliResult<String> {
    let p = common.degree;
    check_degree(p)?;
    if common.literal_mk {
        return invalid("--literal-mk applies to project only");
    }
    let n0 = coarse_level(p);
    let levels = parse_levels(levels, n0)?;
    let phi = function(fname, p)?;
    let geom = geometry.map(load_geometry).transpose()?;
    let mut cfg = StudyConfig::new(p, levels, phi);
    if let Some(q) = common.quad_order {
        cfg = cfg.gauss_order(q);
    }
    if let Some(g) = geom.as_ref() {
        cfg = cfg.on(g);
    }
    cfg.with_h2 = h2;
    let table = run_convergence_study(&cfg)?;
    let change = if certify { Some(quadrature_self_convergence(&cfg)?) } else { None };
    let format = common.format.unwrap_or(Format::Csv);
    Ok(match format {
        Format::Csv => {
            let mut text = prepend_echo(argv, table.to_csv(), format);
            if let Some(c) = change {
                let _ = writeln!(text, "# quadrature_change={c:.3e}");
            }
            text
        }
        Format::Json => {
            let mut v = serde_json::to_value(&table).expect("serializable");
            v["config"] = json!({ "command": argv, "geometry": geometry.map(|g| g.display().to_string()) });
            if let Some(c) = change {
                v["quadrature_change"] = json!(c);
            }
            to_json(&v)
        }
    })
}

fn run_stability(common: &Common, levels: Option<&str>, samples: usize, seed: u64, argv: &str) -> CliResult<String> {
    let p = common.degree;
    check_degree(p)?;
    if common.literal_mk {
        return invalid("--literal-mk applies to project only");
    }
    if samples == 0 {
        return invalid("--samples must be positive");
    }
    let n0 = coarse_level(p);
    let levels = parse_levels(levels, n0)?;
    let mut cfg = StabilityConfig::new(p, levels, samples, seed);
    if let Some(q) = common.quad_order {
        cfg.gauss_order = q;
    }
    let report = run_stability_scan(&cfg)?;
    let format = common.format.unwrap_or(Format::Csv);
    Ok(match format {
        Format::Csv => prepend_echo(argv, report.to_csv(), format),
        Format::Json => {
            let mut v = serde_json::to_value(&report).expect("serializable");
            v["config"] = json!({ "command": argv });
            v["growth"] = json!(report.growth());
            to_json(&v)
        }
    })
}

fn run_geometry_check(
    common: &Common,
    geometry: Option<&Path>,
    preset: Option<Preset>,
    bend: &str,
    level: Option<u32>,
    argv: &str,
) -> CliResult<String> {
    let p = common.degree;
    let geom = match (geometry, preset) {
        (Some(path), _) => load_geometry(path)?,
        (None, Some(preset)) => {
            check_degree(p)?;
            let n0 = coarse_level(p);
            match preset {
                Preset::Identity => RationalGeometry::identity(p, n0)?,
                Preset::Curved => {
                    let parts: Vec<f64> = bend
                        .split(',')
                        .map(|x| x.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Failure::Validation(format!("bad --bend `{bend}`")))?;
                    let [a, b] = parts[..] else { return invalid(format!("--bend needs `a,b`, got `{bend}`")) };
                    RationalGeometry::curved(p, n0, a, b)?
                }
            }
        }
        (None, None) => return invalid("geometry-check needs --geometry FILE or --preset"),
    };
    let level = level.unwrap_or(geom.coarse_level() + 2);
    if level > 10 {
        return invalid(format!("level {level} too large (max 10)"));
    }
    let q = common.quad_order.unwrap_or(default_norm_order(geom.degree()));
    let report = geom.check(level, q)?;
    let area = geom.area(level, q)?;
    if let (Some(path), Some(_)) = (common.out.as_deref(), preset) {
        let text = serde_json::to_string_pretty(&geom.to_file()).expect("serializable");
        fs::write(path, text + "\n").map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    }
    let text = to_json(&json!({
        "config": { "command": argv, "version": VERSION, "degree": geom.degree(), "coarse_level": geom.coarse_level(), "level": level, "gauss_order": q },
        "valid": report.is_valid(),
        "report": report,
        "area": area,
    }));
    if !report.is_valid() {
        // report first, then fail
        let _ = std::io::stdout().write_all(text.as_bytes());
        return invalid(format!("geometry invalid: min F0 = {:e}, min det = {:e}", report.min_f0, report.min_det));
    }
    Ok(text)
}

fn check_common(common: &Common) -> CliResult<()> {
    match common.quad_order {
        Some(q) if !(1..=32).contains(&q) => invalid(format!("--quad-order {q} outside 1..=32")),
        _ => Ok(()),
    }
}

fn dispatch(cli: &Cli, argv: &str) -> CliResult<()> {
    let common = match &cli.command {
        Command::Mesh { common, .. }
        | Command::Basis { common, .. }
        | Command::Project { common, .. }
        | Command::Study { common, .. }
        | Command::Stability { common, .. }
        | Command::GeometryCheck { common, .. } => common,
    };
    check_common(common)?;
    match &cli.command {
        Command::Mesh { common, level } => {
            reject_format(common, Format::Json)?;
            let text = run_mesh(common, *level, argv)?;
            emit(common.out.as_deref(), &text)
        }
        Command::Basis { common, level, index, grid } => {
            let text = run_basis(common, *level, *index, *grid, argv)?;
            emit(common.out.as_deref(), &text)
        }
        Command::Project { common, level, function, geometry } => {
            reject_format(common, Format::Json)?;
            let text = run_project(common, *level, function, geometry.as_deref(), argv)?;
            emit(common.out.as_deref(), &text)
        }
        Command::Study { common, levels, function, geometry, h2, certify } => {
            let text = run_study(common, levels.as_deref(), function, geometry.as_deref(), *h2, *certify, argv)?;
            emit(common.out.as_deref(), &text)
        }
        Command::Stability { common, levels, samples, seed } => {
            let text = run_stability(common, levels.as_deref(), *samples, *seed, argv)?;
            emit(common.out.as_deref(), &text)
        }
        Command::GeometryCheck { common, geometry, preset, bend, level } => {
            let text = run_geometry_check(common, geometry.as_deref(), *preset, bend, *level, argv)?;
            // with a preset, --out receives the geometry file and the report goes to stdout
            let target = if preset.is_some() { None } else { common.out.as_deref() };
            emit(target, &text)
        }
    }
}

fn reject_format(common: &Common, only: Format) -> CliResult<()> {
    match common.format {
        Some(f) if f != only => invalid(format!("this subcommand only writes {only:?}")),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let argv = echo(&args[1..]);
    match dispatch(&cli, &format!("trispline {argv}")) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}
