//! Experiment runner behind the `conelab` binary.
//!
//! Every subcommand writes `report.json` and `tables/*.csv` into the output
//! directory, plus a `report.meta.json` sidecar holding the wall-clock data
//! so that reports stay byte-identical across runs. Exit codes: 0 PASS (or
//! no verdict), 2 FAIL, 3 INCONCLUSIVE, 1 error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cone::{fmt_ext, path_d_length, ConeSpec, GeneralizedCone, GridPoint};
use crate::converge::{
    default_schedule, ell_converge_check, measured_converge_check, precompact_harness, tangent_cone, ConeSequence,
    ScheduleEntry,
};
use crate::lorot::{
    check_cyclical_monotonicity, solve_lp, solve_lp_timelike, tcd_verify, tmcp_verify, truncated_bump, DiscreteMeasure,
    Flavor, MarginReport, VerifyOptions, DEFAULT_DENSITY_CAP,
};
use crate::metricspace::{gh_distance, FiniteMetricSpace, GhMode};
use crate::model2d::tcbb_verify;
use crate::smoothcurv::{oneill_diagnostics, ricci_reduction, sectional_reduction, tangential_ricci_bound};
use crate::warp::{Preset, WarpingFunction};
use crate::{Error, Verdict};

#[derive(Parser, Debug)]
#[command(name = "conelab", version, about = "Checks on discrete generalized cones")]
pub struct Cli {
    /// Output directory for report.json and tables/.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Cap on worker threads (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Time separation between two grid points.
    Tau(TauArgs),
    /// Grid maximizer between two grid points.
    Geodesic(PairArgs),
    /// Four-point timelike comparison on sampled configurations.
    Tcbb(TcbbArgs),
    /// Optimal causal coupling of two discrete measures.
    Ot(OtArgs),
    /// Entropic or Renyi convexity along the optimal plan.
    Tcd(TcdArgs),
    /// Measure contraction towards a point.
    Tmcp(TmcpArgs),
    /// Gromov-Hausdorff bracket of two finite metric spaces.
    Gh(GhArgs),
    /// Uniform l-convergence of a cone sequence.
    Ellconv(SequenceArgs),
    /// Measured convergence of a cone sequence.
    Measured(MeasuredArgs),
    /// Class checks and subsequence extraction.
    Precompact(PrecompactArgs),
    /// Blow-ups at a point.
    Tangent(TangentArgs),
    /// Ricci reduction for a smooth warped product.
    Ricci(RicciArgs),
    /// Sectional reduction for a smooth warped product.
    Sectional(SectionalArgs),
    /// Run an experiment config (JSON object with a "command" key).
    Run {
        config: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct PairArgs {
    /// Cone spec JSON file or `preset:NAME`.
    #[arg(long)]
    pub cone: String,
    /// Start point `t,x` (grid indices).
    #[arg(long, value_parser = parse_point)]
    pub p: GridPoint,
    /// End point `t,x`.
    #[arg(long, value_parser = parse_point)]
    pub q: GridPoint,
}

#[derive(Args, Debug)]
pub struct TauArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Also export the full (s, t, r, lo, hi) table.
    #[arg(long)]
    pub table: bool,
}

#[derive(Args, Debug)]
pub struct TcbbArgs {
    #[arg(long)]
    pub cone: String,
    #[arg(long = "K", allow_negative_numbers = true)]
    pub k: f64,
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.02)]
    pub tol: f64,
    #[arg(long)]
    pub seed: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OtPreset {
    /// `mu1` sits entirely in the past of `mu0`.
    NonCouplable,
}

#[derive(Args, Debug)]
pub struct OtArgs {
    #[arg(long)]
    pub cone: String,
    /// Measure JSON: list of atoms `{t, x, mass}` or `{"bump": {...}}`.
    #[arg(long, required_unless_present = "preset")]
    pub mu0: Option<PathBuf>,
    #[arg(long, required_unless_present = "preset")]
    pub mu1: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<OtPreset>,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    /// Restrict to strictly timelike pairs.
    #[arg(long)]
    pub timelike: bool,
    /// Random cycles for the cyclical monotonicity check.
    #[arg(long, default_value_t = 200)]
    pub cycles: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlavorArg {
    Entropic,
    Renyi,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long = "K", allow_negative_numbers = true)]
    pub k: f64,
    #[arg(long = "N")]
    pub n: f64,
    #[arg(long, default_value_t = 0.05)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_DENSITY_CAP)]
    pub density_cap: f64,
}

impl VerifyArgs {
    fn options(&self) -> VerifyOptions {
        VerifyOptions { tol: self.tol, density_cap: self.density_cap, ..VerifyOptions::default() }
    }
}

#[derive(Args, Debug)]
pub struct TcdArgs {
    #[arg(long)]
    pub cone: String,
    #[arg(long)]
    pub mu0: PathBuf,
    #[arg(long)]
    pub mu1: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, value_enum, default_value_t = FlavorArg::Entropic)]
    pub flavor: FlavorArg,
    #[command(flatten)]
    pub verify: VerifyArgs,
}

#[derive(Args, Debug)]
pub struct TmcpArgs {
    #[arg(long)]
    pub cone: String,
    #[arg(long)]
    pub mu0: PathBuf,
    /// Target point `t,x`.
    #[arg(long, value_parser = parse_point)]
    pub x1: GridPoint,
    #[command(flatten)]
    pub verify: VerifyArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum GhModeArg {
    Exact,
    Heuristic,
}

#[derive(Args, Debug)]
pub struct GhArgs {
    /// Metric space JSON (`{n, base, dist}`, `{"segment": ...}` or `{"circleArc": ...}`).
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, value_enum, default_value_t = GhModeArg::Exact)]
    pub mode: GhModeArg,
}

#[derive(Args, Debug)]
pub struct SequenceArgs {
    /// Sequence JSON file or `preset:cos-family`.
    #[arg(long)]
    pub sequence: String,
}

#[derive(Args, Debug)]
pub struct MeasuredArgs {
    #[arg(long)]
    pub sequence: String,
    /// Cover level.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
}

#[derive(Args, Debug)]
pub struct PrecompactArgs {
    /// JSON list of cone specs, or `preset:sin-family`.
    #[arg(long)]
    pub cones: String,
    #[arg(long = "K", allow_negative_numbers = true)]
    pub k: f64,
    #[arg(long = "N")]
    pub n: f64,
    /// Interval length bound.
    #[arg(long = "D")]
    pub d: f64,
    #[arg(long, default_value_t = 0.05)]
    pub tol: f64,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
}

#[derive(Args, Debug)]
pub struct TangentArgs {
    #[arg(long)]
    pub cone: String,
    #[arg(long, value_parser = parse_point)]
    pub point: GridPoint,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.125,0.0625,0.03125,0.015625")]
    pub eps: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct RicciArgs {
    /// Warping function JSON (`{a, b, ts, vals}` or a preset).
    #[arg(long)]
    pub warp: PathBuf,
    #[arg(long = "K", allow_negative_numbers = true)]
    pub k: f64,
    /// Fiber dimension.
    #[arg(long)]
    pub n: usize,
    /// Declared lower Ricci bound of the fiber.
    #[arg(long, allow_negative_numbers = true)]
    pub fiber_bound: f64,
}

#[derive(Args, Debug)]
pub struct SectionalArgs {
    #[arg(long)]
    pub warp: PathBuf,
    #[arg(long = "K", allow_negative_numbers = true)]
    pub k: f64,
    /// Declared lower sectional bound of the fiber.
    #[arg(long, allow_negative_numbers = true)]
    pub fiber_bound: f64,
}

fn parse_point(s: &str) -> std::result::Result<GridPoint, String> {
    let (t, x) = s.split_once(',').ok_or_else(|| format!("expected `t,x`, got `{s}`"))?;
    let t = t.trim().parse().map_err(|e| format!("bad time index `{t}`: {e}"))?;
    let x = x.trim().parse().map_err(|e| format!("bad fiber index `{x}`: {e}"))?;
    Ok(GridPoint::new(t, x))
}

/// Error with a machine-readable code.
#[derive(Debug)]
pub struct Failure {
    pub code: String,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: e.code().into(), message: e.to_string() }
    }
}

impl Failure {
    fn new(code: &str, message: impl Into<String>) -> Self {
        Failure { code: code.into(), message: message.into() }
    }

    pub fn to_json(&self) -> String {
        json!({ "code": self.code, "message": self.message }).to_string()
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

// ---- inputs -------------------------------------------------------------

#[derive(Deserialize)]
#[serde(untagged)]
pub enum WarpInput {
    Preset { preset: Preset, a: f64, b: f64, n: usize },
    Samples(WarpingFunction),
}

impl WarpInput {
    pub fn build(self) -> crate::Result<WarpingFunction> {
        match self {
            WarpInput::Preset { preset, a, b, n } => WarpingFunction::preset(preset, a, b, n),
            WarpInput::Samples(w) => Ok(w),
        }
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SegmentInput {
    pub length: f64,
    pub points: usize,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ArcInput {
    pub radius: f64,
    pub angle: f64,
    pub points: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
pub enum FiberInput {
    Segment {
        segment: SegmentInput,
    },
    Arc {
        #[serde(rename = "circleArc")]
        circle_arc: ArcInput,
    },
    Explicit(FiniteMetricSpace),
}

impl FiberInput {
    pub fn build(self) -> crate::Result<FiniteMetricSpace> {
        match self {
            FiberInput::Segment { segment } => FiniteMetricSpace::segment(segment.length, segment.points),
            FiberInput::Arc { circle_arc: a } => FiniteMetricSpace::circle_arc(a.radius, a.angle, a.points),
            FiberInput::Explicit(x) => Ok(x),
        }
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ConeInput {
    pub warp: WarpInput,
    pub fiber: FiberInput,
    #[serde(rename = "N", default)]
    pub n: Option<f64>,
    pub time_steps: usize,
    pub dist_steps: usize,
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default)]
    pub null_band: Option<usize>,
    #[serde(default)]
    pub fiber_weights: Option<Vec<f64>>,
}

impl ConeInput {
    pub fn spec(self) -> crate::Result<ConeSpec> {
        let mut spec = ConeSpec::new(self.warp.build()?, self.fiber.build()?, self.time_steps, self.dist_steps);
        if let Some(n) = self.n {
            spec = spec.with_n(n);
        }
        if let Some(w) = self.window {
            spec = spec.with_window(w);
        }
        if let Some(b) = self.null_band {
            spec = spec.with_null_band(b);
        }
        spec.fiber_weights = self.fiber_weights;
        Ok(spec)
    }
}

/// A cone given inline or as `"preset:NAME"`.
#[derive(Deserialize)]
#[serde(untagged)]
pub enum ConeRef {
    Name(String),
    Inline(Box<ConeInput>),
}

impl ConeRef {
    fn spec(self) -> CliResult<ConeSpec> {
        match self {
            ConeRef::Name(s) => match s.strip_prefix("preset:") {
                Some(name) => Ok(preset_cone(name)?),
                None => Err(Failure::new("CONFIG", format!("inline cone reference must be `preset:NAME`, got `{s}`"))),
            },
            ConeRef::Inline(c) => Ok(c.spec()?),
        }
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BumpInput {
    /// `[t, x]`
    pub center: [usize; 2],
    pub half: usize,
    pub step: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
pub enum MeasureInput {
    Bump { bump: BumpInput },
    Atoms(DiscreteMeasure),
}

impl MeasureInput {
    fn build(self, cone: &GeneralizedCone) -> crate::Result<DiscreteMeasure> {
        match self {
            MeasureInput::Bump { bump } => {
                truncated_bump(cone, GridPoint::new(bump.center[0], bump.center[1]), bump.half, bump.step)
            }
            MeasureInput::Atoms(m) => Ok(m),
        }
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SequenceInput {
    pub cones: Vec<ConeRef>,
    pub limit: ConeRef,
    #[serde(default)]
    pub center: Option<f64>,
    pub depth: usize,
    #[serde(default)]
    pub schedule: Option<Vec<ScheduleEntry>>,
}

/// Built-in cones: `minkowski-strip`, `minkowski-cone`, `sin-arc`, `cos-arc`.
pub fn preset_cone(name: &str) -> crate::Result<ConeSpec> {
    let unit = || FiniteMetricSpace::segment(1.0, 101);
    let arc = || FiniteMetricSpace::circle_arc(1.0, 1.0, 41);
    match name {
        "minkowski-strip" => Ok(ConeSpec::minkowski_strip(2.0, 1.0, 101, 200, 100)?.with_window(8)),
        "minkowski-cone" => Ok(ConeSpec::new(WarpingFunction::sample(0.5, 2.0, 151, |t| t)?, unit()?, 150, 100)),
        "sin-arc" => Ok(ConeSpec::new(WarpingFunction::sample(0.0, std::f64::consts::PI, 201, f64::sin)?, arc()?, 200, 80)
            .with_n(2.0)),
        "cos-arc" => Ok(ConeSpec::new(WarpingFunction::sample(-1.4, 1.4, 201, f64::cos)?, arc()?, 200, 80)),
        other => Err(Error::InvalidInput(format!("unknown cone preset `{other}`"))),
    }
}

/// `(cos t)^(1/i)` on `[-1.4, 1.4]` for `i in {1, 2, 4, 8, 16}` against `f = 1`.
pub fn preset_cos_family() -> crate::Result<(Vec<ConeSpec>, ConeSpec, f64, usize)> {
    let fiber = FiniteMetricSpace::segment(1.0, 21)?;
    let mk = |f: &dyn Fn(f64) -> f64| -> crate::Result<ConeSpec> {
        Ok(ConeSpec::new(WarpingFunction::sample(-1.4, 1.4, 101, f)?, fiber.clone(), 100, 50))
    };
    let cones = [1.0, 2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|&i| mk(&|t: f64| t.cos().powf(1.0 / i)))
        .collect::<crate::Result<Vec<_>>>()?;
    Ok((cones, mk(&|_| 1.0)?, 0.0, 2))
}

/// `a sin t` on `[0, pi]` for five amplitudes.
pub fn preset_sin_family() -> crate::Result<Vec<ConeSpec>> {
    (0..5)
        .map(|j| {
            let a = 1.0 + 0.5 * j as f64;
            let w = WarpingFunction::sample(0.0, std::f64::consts::PI, 61, |t| a * t.sin())?;
            Ok(ConeSpec::new(w, FiniteMetricSpace::segment(1.0, 21)?, 60, 40))
        })
        .collect()
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure::new("IO", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::new("PARSE", format!("{}: {e}", path.display())))
}

fn load_cone(s: &str) -> CliResult<GeneralizedCone> {
    let spec = match s.strip_prefix("preset:") {
        Some(name) => preset_cone(name)?,
        None => read_json::<ConeInput>(Path::new(s))?.spec()?,
    };
    Ok(GeneralizedCone::new(spec)?)
}

fn load_measure(path: &Path, cone: &GeneralizedCone) -> CliResult<DiscreteMeasure> {
    let m = read_json::<MeasureInput>(path)?.build(cone)?;
    m.check_on(cone)?;
    Ok(m)
}

fn load_sequence(s: &str) -> CliResult<(ConeSequence, Vec<ScheduleEntry>)> {
    let (cones, limit, center, depth, schedule) = match s {
        "preset:cos-family" => {
            let (c, l, center, depth) = preset_cos_family()?;
            (c, l, Some(center), depth, None)
        }
        _ => {
            let input: SequenceInput = read_json(Path::new(s))?;
            let cones = input.cones.into_iter().map(ConeRef::spec).collect::<CliResult<Vec<_>>>()?;
            (cones, input.limit.spec()?, input.center, input.depth, input.schedule)
        }
    };
    let cones = cones.into_iter().map(GeneralizedCone::new).collect::<crate::Result<Vec<_>>>()?;
    let limit = GeneralizedCone::new(limit)?;
    let center = center.unwrap_or(0.5 * (limit.warp().a() + limit.warp().b()));
    let schedule = schedule.unwrap_or_else(|| default_schedule(depth));
    Ok((ConeSequence::new(cones, limit, center, depth)?, schedule))
}

// ---- outputs ------------------------------------------------------------

/// Report, CSV tables and verdict of one pipeline.
pub struct Outcome {
    pub report: Value,
    pub tables: Vec<(String, String)>,
    pub verdict: Option<Verdict>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.verdict.map_or(0, Verdict::exit_code)
    }
}

fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| Failure::new("JSON", e.to_string()))
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

fn margin_table(r: &MarginReport) -> String {
    csv(
        "t,margin,margin_hi,bracket_width,excluded",
        r.slots.iter().map(|s| {
            format!(
                "{},{},{},{},{}",
                s.t,
                fmt_ext(s.margin),
                fmt_ext(s.margin_hi),
                fmt_ext(s.bracket_width),
                s.excluded.as_deref().unwrap_or("")
            )
        }),
    )
}

fn verdict_of(b: bool) -> Verdict {
    if b {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

// ---- pipelines ----------------------------------------------------------

pub fn execute(cmd: &Command) -> CliResult<Outcome> {
    match cmd {
        Command::Tau(a) => tau(a),
        Command::Geodesic(a) => geodesic(a),
        Command::Tcbb(a) => {
            let cone = load_cone(&a.cone)?;
            let r = tcbb_verify(&cone, a.k, a.samples, a.tol, a.seed)?;
            let mut tables = Vec::new();
            if let Some(w) = &r.worst {
                let c = &w.comparison;
                let pts = [("y", c.y), ("x", c.x), ("z1", c.z[0]), ("z2", c.z[1])];
                let rows = pts.iter().map(|(n, p)| format!("{n},{},{}", p.t, p.x));
                tables.push(("worst_config_model.csv".into(), csv("point,t,x", rows)));
            }
            Ok(Outcome { report: to_value(&r)?, tables, verdict: Some(r.verdict) })
        }
        Command::Ot(a) => ot(a),
        Command::Tcd(a) => {
            let cone = load_cone(&a.cone)?;
            let mu0 = load_measure(&a.mu0, &cone)?;
            let mu1 = load_measure(&a.mu1, &cone)?;
            let flavor = match a.flavor {
                FlavorArg::Entropic => Flavor::Entropic,
                FlavorArg::Renyi => Flavor::Renyi,
            };
            let r = tcd_verify(&cone, &mu0, &mu1, a.p, a.verify.k, a.verify.n, flavor, &a.verify.options())?;
            Ok(Outcome { tables: vec![("margins.csv".into(), margin_table(&r))], report: to_value(&r)?, verdict: Some(r.verdict) })
        }
        Command::Tmcp(a) => {
            let cone = load_cone(&a.cone)?;
            let mu0 = load_measure(&a.mu0, &cone)?;
            let r = tmcp_verify(&cone, &mu0, a.x1, a.verify.k, a.verify.n, &a.verify.options())?;
            Ok(Outcome { tables: vec![("margins.csv".into(), margin_table(&r))], report: to_value(&r)?, verdict: Some(r.verdict) })
        }
        Command::Gh(a) => {
            let x = read_json::<FiberInput>(&a.a)?.build()?;
            let y = read_json::<FiberInput>(&a.b)?.build()?;
            let mode = match a.mode {
                GhModeArg::Exact => GhMode::Exact,
                GhModeArg::Heuristic => GhMode::Heuristic,
            };
            let r = gh_distance(&x, &y, mode)?;
            let rows = r.witness.pairs.iter().map(|(i, j)| format!("{i},{j}"));
            Ok(Outcome {
                tables: vec![("correspondence.csv".into(), csv("a,b", rows))],
                report: json!({ "mode": mode, "nA": x.n(), "nB": y.n(), "bracket": r }),
                verdict: None,
            })
        }
        Command::Ellconv(a) => {
            let (seq, schedule) = load_sequence(&a.sequence)?;
            let r = ell_converge_check(&seq, &schedule)?;
            let rows = r.moduli.iter().map(|m| {
                format!(
                    "{},{},{},{},{},{},{},{},{}",
                    m.i,
                    m.k,
                    m.l,
                    fmt_ext(m.eps1),
                    fmt_ext(m.eps2),
                    fmt_ext(m.eps),
                    fmt_ext(m.delta),
                    fmt_ext(m.bracket_width),
                    m.inclusion_ok
                )
            });
            let gh_rows = r.gh.iter().map(|g| format!("{},{},{},{}", g.i, g.k, g.lower, g.upper));
            Ok(Outcome {
                tables: vec![
                    ("moduli.csv".into(), csv("i,k,l,eps1,eps2,eps,delta,bracket_width,inclusion_ok", rows)),
                    ("gh.csv".into(), csv("i,k,lower,upper", gh_rows)),
                ],
                report: to_value(&r)?,
                verdict: Some(r.verdict),
            })
        }
        Command::Measured(a) => {
            let (seq, _) = load_sequence(&a.sequence)?;
            let r = measured_converge_check(&seq, a.k)?;
            let rows = r
                .iter()
                .map(|e| format!("{},{},{},{},{}", e.i, e.distance, e.coarsening_radius, e.distortion, e.centers));
            Ok(Outcome {
                tables: vec![("measured.csv".into(), csv("i,distance,coarsening_radius,distortion,centers", rows))],
                report: json!({ "k": a.k, "entries": to_value(&r)? }),
                verdict: None,
            })
        }
        Command::Precompact(a) => {
            let specs = match a.cones.as_str() {
                "preset:sin-family" => preset_sin_family()?,
                path => read_json::<Vec<ConeRef>>(Path::new(path))?
                    .into_iter()
                    .map(ConeRef::spec)
                    .collect::<CliResult<Vec<_>>>()?,
            };
            let cones = specs.into_iter().map(GeneralizedCone::new).collect::<crate::Result<Vec<_>>>()?;
            let r = precompact_harness(&cones, a.k, a.n, a.d, a.tol, a.depth)?;
            let rows = r.profiles.iter().map(|p| {
                format!("{},{},{},{},{}", p.index, p.lambda, p.slope_bound_ok, p.worst_excess, p.worst_t)
            });
            Ok(Outcome {
                tables: vec![("profiles.csv".into(), csv("index,lambda,slope_bound_ok,worst_excess,worst_t", rows))],
                report: to_value(&r)?,
                verdict: Some(r.verdict),
            })
        }
        Command::Tangent(a) => {
            let cone = load_cone(&a.cone)?;
            let r = tangent_cone(&cone, a.point, &a.eps)?;
            let rows = r.entries.iter().map(|e| {
                let devs: Vec<String> = e.f_deviation.iter().map(|v| v.to_string()).collect();
                format!("{},{},{}", e.eps, devs.join(";"), e.within_bound)
            });
            Ok(Outcome {
                tables: vec![("tangent.csv".into(), csv("eps,f_deviation,within_bound", rows))],
                report: to_value(&r)?,
                verdict: Some(r.verdict),
            })
        }
        Command::Ricci(a) => {
            let w = read_json::<WarpInput>(&a.warp)?.build()?;
            let r = ricci_reduction(&w, a.k, a.n, a.fiber_bound)?;
            let diag = oneill_diagnostics(&w, a.n)?;
            let bound = tangential_ricci_bound(&w, a.n, a.fiber_bound)?;
            let rows = diag.iter().map(|p| {
                let b = bound.iter().find(|(t, _)| *t == p.t).map_or(String::new(), |(_, v)| v.to_string());
                format!("{},{},{},{},{},{}", p.t, fmt_ext(p.radial), p.mixed, fmt_ext(p.tangential), b, p.near_zero)
            });
            Ok(Outcome {
                tables: vec![("oneill.csv".into(), csv("t,radial,mixed,tangential,tangential_bound,near_zero", rows))],
                report: json!({ "reduction": to_value(&r)?, "diagnostics": to_value(&diag)? }),
                verdict: Some(verdict_of(r.verdict)),
            })
        }
        Command::Sectional(a) => {
            let w = read_json::<WarpInput>(&a.warp)?.build()?;
            let r = sectional_reduction(&w, a.k, a.fiber_bound)?;
            let g = w.g_values(a.k);
            let rows = (0..w.len()).map(|i| format!("{},{},{}", w.ts()[i], w.vals()[i], g[i]));
            Ok(Outcome {
                tables: vec![("g.csv".into(), csv("t,f,g", rows))],
                report: to_value(&r)?,
                verdict: Some(verdict_of(r.verdict)),
            })
        }
        Command::Run { .. } => Err(Failure::new("CONFIG", "nested `run` is not allowed")),
    }
}

fn tau(a: &TauArgs) -> CliResult<Outcome> {
    let cone = load_cone(&a.pair.cone)?;
    let (p, q) = (a.pair.p, a.pair.q);
    check_point(&cone, p)?;
    check_point(&cone, q)?;
    let lo = cone.signed_separation(p, q);
    let hi = cone.signed_separation_hi(p, q);
    let refined = if lo >= 0.0 { cone.tau_geodesic(p, q) } else { lo };
    let mut tables = vec![(
        "tau.csv".into(),
        csv(
            "p_t,p_x,q_t,q_x,tau_lo,tau_hi,tau_refined",
            [format!("{},{},{},{},{},{},{}", p.t, p.x, q.t, q.x, fmt_ext(lo), fmt_ext(hi), fmt_ext(refined))],
        ),
    )];
    if a.table {
        let mut buf = Vec::new();
        cone.write_table_csv(&mut buf)?;
        tables.push(("tau_table.csv".into(), String::from_utf8_lossy(&buf).into_owned()));
    }
    let ext = |v: f64| if v.is_finite() { json!(v) } else { json!(fmt_ext(v)) };
    Ok(Outcome {
        report: json!({
            "p": p,
            "q": q,
            "times": [cone.time(p.t), cone.time(q.t)],
            "fiberDistance": cone.fiber().d(p.x, q.x),
            "tauLo": ext(lo),
            "tauHi": ext(hi),
            "tauRefined": ext(refined),
            "bracketWidth": ext(hi - lo),
            "causal": cone.causal(p, q),
            "timelike": cone.timelike(p, q),
        }),
        tables,
        verdict: None,
    })
}

fn geodesic(a: &PairArgs) -> CliResult<Outcome> {
    let cone = load_cone(&a.cone)?;
    check_point(&cone, a.p)?;
    check_point(&cone, a.q)?;
    let g = cone.maximizer(a.p, a.q)?;
    let d_len = path_d_length(&cone, &g);
    let rows = g.states.iter().map(|&(i, b)| format!("{},{},{},{}", i, cone.time(i), b, b as f64 * cone.dr()));
    Ok(Outcome {
        report: json!({
            "geodesic": to_value(&g)?,
            "dLength": d_len,
            "tauRefined": cone.tau_geodesic(a.p, a.q),
        }),
        tables: vec![("geodesic.csv".into(), csv("t_index,time,steps,r", rows))],
        verdict: None,
    })
}

fn ot(a: &OtArgs) -> CliResult<Outcome> {
    let cone = load_cone(&a.cone)?;
    let (mu0, mu1) = match a.preset {
        Some(OtPreset::NonCouplable) => {
            let last = cone.nt() - 1;
            (DiscreteMeasure::dirac(GridPoint::new(last, 0)), DiscreteMeasure::dirac(GridPoint::new(0, 0)))
        }
        None => {
            let (m0, m1) = (a.mu0.as_ref().unwrap(), a.mu1.as_ref().unwrap());
            (load_measure(m0, &cone)?, load_measure(m1, &cone)?)
        }
    };
    let c = if a.timelike { solve_lp_timelike(&cone, &mu0, &mu1, a.p)? } else { solve_lp(&cone, &mu0, &mu1, a.p)? };
    let slack = check_cyclical_monotonicity(&cone, &c, a.p, a.cycles, a.seed);
    let mut rows = String::new();
    for (i, j, m) in c.support() {
        let (s, t) = (c.sources[i], c.targets[j]);
        let _ = writeln!(rows, "{i},{j},{},{},{},{},{m}", s.t, s.x, t.t, t.x);
    }
    Ok(Outcome {
        report: json!({
            "p": a.p,
            "timelike": a.timelike,
            "pValue": c.p_value,
            "marginalError": c.marginal_error(),
            "cyclicalSlack": if slack.is_finite() { json!(slack) } else { json!(fmt_ext(slack)) },
            "seed": a.seed,
            "coupling": to_value(&c)?,
        }),
        tables: vec![("plan.csv".into(), format!("i,j,src_t,src_x,dst_t,dst_x,mass\n{rows}"))],
        verdict: None,
    })
}

fn check_point(cone: &GeneralizedCone, p: GridPoint) -> CliResult<()> {
    if p.t >= cone.nt() || p.x >= cone.fiber().n() {
        return Err(Failure::new("INVALID_INPUT", format!("point ({}, {}) outside the grid", p.t, p.x)));
    }
    Ok(())
}

/// Writes `report.json`, `report.meta.json` and `tables/*.csv`.
pub fn write_outputs(out: &Path, name: &str, outcome: &Outcome, threads: Option<usize>) -> CliResult<()> {
    let io = |e: std::io::Error| Failure::new("IO", format!("{}: {e}", out.display()));
    fs::create_dir_all(out.join("tables")).map_err(io)?;
    let report = serde_json::to_string_pretty(&outcome.report).map_err(|e| Failure::new("JSON", e.to_string()))?;
    fs::write(out.join("report.json"), report + "\n").map_err(io)?;
    for (file, body) in &outcome.tables {
        fs::write(out.join("tables").join(file), body).map_err(io)?;
    }
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let meta = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "unixTime": now,
        "threads": threads.unwrap_or_else(rayon::current_num_threads),
        "exitCode": outcome.exit_code(),
    });
    fs::write(out.join("report.meta.json"), meta.to_string() + "\n").map_err(io)?;
    Ok(())
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Tau(_) => "tau",
        Command::Geodesic(_) => "geodesic",
        Command::Tcbb(_) => "tcbb",
        Command::Ot(_) => "ot",
        Command::Tcd(_) => "tcd",
        Command::Tmcp(_) => "tmcp",
        Command::Gh(_) => "gh",
        Command::Ellconv(_) => "ellconv",
        Command::Measured(_) => "measured",
        Command::Precompact(_) => "precompact",
        Command::Tangent(_) => "tangent",
        Command::Ricci(_) => "ricci",
        Command::Sectional(_) => "sectional",
        Command::Run { .. } => "run",
    }
}

/// Keys of an experiment config holding paths, resolved against the
/// config file's directory.
const PATH_KEYS: [&str; 8] = ["cone", "mu0", "mu1", "a", "b", "sequence", "cones", "warp"];

fn flag_name(key: &str) -> String {
    if key.len() == 1 {
        return key.to_string();
    }
    let mut s = String::new();
    for c in key.chars() {
        if c.is_ascii_uppercase() {
            s.push('-');
            s.push(c.to_ascii_lowercase());
        } else {
            s.push(c);
        }
    }
    s
}

/// Converts an experiment config into the equivalent argument vector.
pub fn config_to_args(config: &Value, base: &Path) -> CliResult<Vec<String>> {
    let obj = config.as_object().ok_or_else(|| Failure::new("CONFIG", "config must be a JSON object"))?;
    let command = obj
        .get("command")
        .and_then(Value::as_str)
        .ok_or_else(|| Failure::new("CONFIG", "config needs a string `command`"))?;
    if command == "run" {
        return Err(Failure::new("CONFIG", "nested `run` is not allowed"));
    }
    let mut args = vec!["conelab".to_string(), command.to_string()];
    for (key, v) in obj {
        if key == "command" {
            continue;
        }
        let flag = format!("--{}", flag_name(key));
        let text = match v {
            Value::Bool(true) => {
                args.push(flag);
                continue;
            }
            Value::Bool(false) | Value::Null => continue,
            Value::String(s) => {
                let resolve = (PATH_KEYS.contains(&key.as_str()) && !s.starts_with("preset:")) || key == "out";
                if resolve && Path::new(s).is_relative() {
                    base.join(s).to_string_lossy().into_owned()
                } else {
                    s.clone()
                }
            }
            Value::Number(n) => n.to_string(),
            Value::Array(items) => items
                .iter()
                .map(|x| match x {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            Value::Object(_) => return Err(Failure::new("CONFIG", format!("`{key}` must not be an object"))),
        };
        args.push(flag);
        args.push(text);
    }
    Ok(args)
}

/// Runs an experiment config in memory, without writing outputs.
pub fn run_config(config: &Value, base: &Path) -> CliResult<Outcome> {
    let args = config_to_args(config, base)?;
    let cli = Cli::try_parse_from(&args).map_err(|e| Failure::new("USAGE", e.to_string().trim().to_string()))?;
    execute(&cli.command)
}

fn parse_cli(args: &[String]) -> std::result::Result<Cli, i32> {
    Cli::try_parse_from(args).map_err(|e| {
        use clap::error::ErrorKind;
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                let _ = e.print();
                0
            }
            _ => {
                let f = Failure::new("USAGE", e.to_string().trim().to_string());
                eprintln!("{}", f.to_json());
                1
            }
        }
    })
}

/// Parses `args`, runs the pipeline and returns the process exit code.
pub fn main_with(args: Vec<String>) -> i32 {
    let mut cli = match parse_cli(&args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Command::Run { config } = &cli.command {
        let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = read_json::<Value>(config).and_then(|v| config_to_args(&v, &base));
        let args = match loaded {
            Ok(a) => a,
            Err(f) => {
                eprintln!("{}", f.to_json());
                return 1;
            }
        };
        let (out, threads) = (cli.out.clone(), cli.threads);
        cli = match parse_cli(&args) {
            Ok(c) => c,
            Err(code) => return code,
        };
        if !args.iter().any(|a| a == "--out") {
            cli.out = out;
        }
        cli.threads = cli.threads.or(threads);
    }
    if let Some(n) = cli.threads {
        // a global pool may already exist when embedded in tests
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let name = command_name(&cli.command);
    let result = execute(&cli.command).and_then(|o| write_outputs(&cli.out, name, &o, cli.threads).map(|_| o));
    match result {
        Ok(o) => {
            println!("{name}: {}", o.verdict.map_or("done".to_string(), |v| format!("{v:?}").to_uppercase()));
            o.exit_code()
        }
        Err(f) => {
            eprintln!("{}", f.to_json());
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_parsing() {
        assert_eq!(parse_point("3, 7").unwrap(), GridPoint::new(3, 7));
        assert!(parse_point("3").is_err());
    }

    #[test]
    fn config_flags() {
        let v = json!({ "command": "tcbb", "cone": "preset:minkowski-strip", "K": -1, "seed": 7, "fiberBound": 2, "table": true });
        let args = config_to_args(&v, Path::new("/cfg")).unwrap();
        assert_eq!(args[1], "tcbb");
        assert!(args.windows(2).any(|w| w[0] == "--K" && w[1] == "-1"));
        assert!(args.windows(2).any(|w| w[0] == "--cone" && w[1] == "preset:minkowski-strip"));
        assert!(args.contains(&"--fiber-bound".to_string()));
        assert!(args.contains(&"--table".to_string()));
        let v = json!({ "command": "gh", "a": "x.json" });
        let args = config_to_args(&v, Path::new("/cfg")).unwrap();
        assert_eq!(args[3], "/cfg/x.json");
    }

    #[test]
    fn inputs_parse() {
        let c: ConeInput = serde_json::from_str(
            r#"{"warp": {"preset": {"kind": "sin"}, "a": 0, "b": 3, "n": 31},
                "fiber": {"segment": {"length": 1, "points": 11}}, "timeSteps": 30, "distSteps": 10}"#,
        )
        .unwrap();
        let spec = c.spec().unwrap();
        assert_eq!(spec.fiber.n(), 11);
        let m: MeasureInput = serde_json::from_str(r#"[{"t": 1, "x": 2, "mass": 1.0}]"#).unwrap();
        assert!(matches!(m, MeasureInput::Atoms(_)));
        let m: MeasureInput = serde_json::from_str(r#"{"bump": {"center": [5, 5], "half": 1, "step": 1}}"#).unwrap();
        assert!(matches!(m, MeasureInput::Bump { .. }));
    }
}
