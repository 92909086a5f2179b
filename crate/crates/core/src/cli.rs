//! Command-line front end. Every subcommand validates its whole configuration
//! up front, then runs the library operation and writes one JSON report.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 when a numerical procedure
//! fails to converge.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::embedding::{
    self, BallPlan, EmbeddingParams, HistogramBin, Verdict,
};
use crate::expansion::HermiteExpansion;
use crate::frames::{self, FrameFile, FrameSequence};
use crate::multipliers::{self, MultiplierSystem, SystemKind};
use crate::norms::{self, NormOptions, Scale, SpaceParams};
use crate::tiles::{self, TileGrid};
use crate::weights::{self, CubeFamily, EvalCells, GridFunction, SamplingPlan, Weight};
use crate::{io, Error, Result};

pub const DEFAULT_DELTA_STAR: f64 = 0.025;
pub const DEFAULT_J: usize = 3;
pub const DEFAULT_N: usize = 1;
pub const DEFAULT_C_FLOOR: f64 = 0.05;
pub const DEFAULT_TOL_QUADRATURE: f64 = 1e-13;
pub const DEFAULT_TOL_RECONSTRUCTION: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "hermite-frames", version, about = "Hermite needlet frames, weighted smoothness norms and embedding reports")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Output file; the report goes to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Accepted relative tail bound of the norm quadrature.
    #[arg(long = "tol-quadrature", global = true, default_value_t = DEFAULT_TOL_QUADRATURE)]
    tol_quadrature: f64,
    /// Largest accepted relative round-trip error after analysis.
    #[arg(long = "tol-reconstruction", global = true, default_value_t = DEFAULT_TOL_RECONSTRUCTION)]
    tol_reconstruction: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the tile grid and export its levels.
    Grid(GridArgs),
    /// Frame coefficients of an expansion.
    Analyze(AnalyzeArgs),
    /// Expansion of a frame coefficient sequence.
    Synthesize(SynthesizeArgs),
    /// Besov or Triebel–Lizorkin norm of an expansion or a sequence.
    Norm(NormArgs),
    /// Weight class evidence.
    #[command(subcommand)]
    Weight(WeightCommand),
    /// Embedding reports.
    #[command(subcommand)]
    Embed(EmbedCommand),
    /// Numerical probes of the frame machinery.
    #[command(subcommand)]
    Diagnose(DiagnoseCommand),
}

#[derive(Debug, Args)]
struct GridShape {
    #[arg(long, default_value_t = DEFAULT_N)]
    n: usize,
    #[arg(long = "delta-star", default_value_t = DEFAULT_DELTA_STAR)]
    delta_star: f64,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[command(flatten)]
    shape: GridShape,
    #[arg(long = "J", default_value_t = DEFAULT_J)]
    big_j: usize,
    /// Also export the subdivision of every tile into cubes.
    #[arg(long)]
    subdivide: bool,
}

#[derive(Debug, Args)]
struct SystemArgs {
    /// `partition`, `dual` or the path of a system JSON file.
    #[arg(long, default_value = "partition")]
    system: String,
    #[arg(long = "c-floor", default_value_t = DEFAULT_C_FLOOR)]
    c_floor: f64,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long = "J", default_value_t = DEFAULT_J)]
    big_j: usize,
    #[arg(long = "delta-star", default_value_t = DEFAULT_DELTA_STAR)]
    delta_star: f64,
}

#[derive(Debug, Args)]
struct SynthesizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// The analysis system; synthesis uses its dual partner.
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    shape: GridShape,
}

#[derive(Debug, Args)]
struct NormArgs {
    #[arg(long, default_value = "besov")]
    kind: Scale,
    /// `a=…,p=…,q=…`; `inf` is accepted for p and q.
    #[arg(long)]
    space: String,
    #[arg(long)]
    weight: Option<PathBuf>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "J", default_value_t = DEFAULT_J)]
    big_j: usize,
    #[command(flatten)]
    shape: GridShape,
    #[command(flatten)]
    system: SystemArgs,
}

#[derive(Debug, Subcommand)]
enum WeightCommand {
    /// Sampled class ratio of a weight.
    Certify(CertifyArgs),
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[arg(long)]
    weight: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long = "scan-depth", default_value_t = 6)]
    scan_depth: u32,
    #[arg(long, default_value_t = DEFAULT_N)]
    n: usize,
}

#[derive(Debug, Subcommand)]
enum EmbedCommand {
    /// Lower-bound, necessity and sufficiency evidence for one embedding.
    Check(EmbedArgs),
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long)]
    source: String,
    #[arg(long)]
    target: String,
    /// Order of the lower bound (default: the dimension).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    weight: Option<PathBuf>,
    #[arg(long = "J", default_value_t = 4)]
    big_j: usize,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value = "besov")]
    scale: Scale,
    #[command(flatten)]
    shape: GridShape,
    /// Report path (falls back to --out).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long = "histogram-csv")]
    histogram_csv: Option<PathBuf>,
    #[arg(long = "ahp-p", default_value_t = 2.0)]
    ahp_p: f64,
    #[arg(long = "ahp-eta", default_value_t = 0.0)]
    ahp_eta: f64,
}

#[derive(Debug, Subcommand)]
enum DiagnoseCommand {
    /// Localization bound of the scale-j kernel.
    KernelDecay(KernelDecayArgs),
    /// Tile containment constants.
    Geometry(GeometryArgs),
    /// Composition of scales j and k of the partition and dual systems.
    Orthogonality(OrthogonalityArgs),
    /// Vector-valued maximal inequality on random step functions.
    FeffermanStein(FeffermanSteinArgs),
    /// Peetre-type maximal bound for random tile sequences.
    Peetre(PeetreArgs),
    /// Sampling inequality for a random band-limited expansion.
    PlancherelPolya(PlancherelPolyaArgs),
}

#[derive(Debug, Args)]
struct KernelDecayArgs {
    #[arg(long, default_value_t = 3)]
    j: usize,
    #[arg(long = "N", default_value_t = 6.0)]
    decay_order: f64,
    #[arg(long, default_value_t = 5.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[arg(long = "c-floor", default_value_t = DEFAULT_C_FLOOR)]
    c_floor: f64,
}

#[derive(Debug, Args)]
struct GeometryArgs {
    #[arg(long = "J", default_value_t = DEFAULT_J)]
    big_j: usize,
    #[command(flatten)]
    shape: GridShape,
}

#[derive(Debug, Args)]
struct OrthogonalityArgs {
    #[arg(long, default_value_t = 2)]
    j: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 64)]
    points: usize,
    #[arg(long = "c-floor", default_value_t = DEFAULT_C_FLOOR)]
    c_floor: f64,
}

#[derive(Debug, Args)]
struct FeffermanSteinArgs {
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long)]
    weight: Option<PathBuf>,
    /// Number of step functions.
    #[arg(long, default_value_t = 3)]
    functions: usize,
    /// Cells per axis on `[−8, 8]`.
    #[arg(long, default_value_t = 32)]
    cells: usize,
}

#[derive(Debug, Args)]
struct PeetreArgs {
    #[arg(long, default_value_t = 2)]
    j: usize,
    /// Decay exponent σ (default: one above the admissible threshold).
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long = "c-tilde", default_value_t = 0.5)]
    c_tilde: f64,
    #[arg(long, default_value_t = 33)]
    samples: usize,
    #[command(flatten)]
    shape: GridShape,
}

#[derive(Debug, Args)]
struct PlancherelPolyaArgs {
    #[arg(long, default_value_t = 2)]
    j: usize,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long)]
    weight: Option<PathBuf>,
    #[command(flatten)]
    shape: GridShape,
}

/// Configuration echoed at the top of every report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_star: Option<f64>,
    #[serde(rename = "J", skip_serializing_if = "Option::is_none")]
    pub big_j: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub spaces: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
    pub tol_quadrature: f64,
    pub tol_reconstruction: f64,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub pass: bool,
}

fn check(name: &str, value: f64, pass: bool) -> Check {
    Check {
        name: name.to_string(),
        value,
        pass,
    }
}

#[derive(Serialize)]
struct Diagnosis<T: Serialize> {
    checks: Vec<Check>,
    pass: bool,
    result: T,
}

fn diagnosis<T: Serialize>(checks: Vec<Check>, result: T) -> Diagnosis<T> {
    Diagnosis {
        pass: checks.iter().all(|c| c.pass),
        checks,
        result,
    }
}

/// Collects every validation problem before anything is computed.
#[derive(Default)]
struct Validator {
    problems: Vec<String>,
}

impl Validator {
    fn take<T>(&mut self, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(Error::InvalidInput(m)) => {
                self.problems.push(m);
                None
            }
            Err(e) => {
                self.problems.push(e.to_string());
                None
            }
        }
    }

    fn require(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.problems.push(msg.into());
        }
    }

    fn shape(&mut self, shape: &GridShape) {
        self.require(shape.n >= 1, "--n must be at least 1");
        self.require(
            shape.delta_star > 0.0 && shape.delta_star < 1.0 / 37.0,
            format!("--delta-star must lie in (0, 1/37), got {}", shape.delta_star),
        );
    }

    fn finish(self) -> Result<()> {
        if self.problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(self.problems.join("; ")))
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

fn load_weight(path: Option<&Path>) -> Result<Weight> {
    match path {
        None => Ok(Weight::unit()),
        Some(p) => Weight::from_json_str(&read(p)?),
    }
}

fn load_system(args: &SystemArgs) -> Result<MultiplierSystem> {
    match args.system.as_str() {
        "partition" => MultiplierSystem::partition(args.c_floor),
        "dual" => MultiplierSystem::partition(args.c_floor)?.dual(),
        path => MultiplierSystem::from_json_str(&read(Path::new(path))?),
    }
}

/// The synthesis partner of an analysis system.
fn partner(sys: &MultiplierSystem) -> Result<MultiplierSystem> {
    match sys.kind() {
        SystemKind::Partition => sys.dual(),
        SystemKind::Dual => MultiplierSystem::partition_with(sys.c_floor(), sys.transition()),
    }
}

fn display(p: &Path) -> Option<String> {
    Some(p.display().to_string())
}

struct Context {
    global: Global,
    config: RunConfig,
}

impl Context {
    fn emit<T: Serialize>(&self, body: T) -> Result<()> {
        self.emit_to(self.global.out.as_deref(), body)
    }

    fn emit_to<T: Serialize>(&self, path: Option<&Path>, body: T) -> Result<()> {
        let report = Report {
            config: &self.config,
            body,
        };
        match path {
            Some(p) => io::write_json(p, &report),
            None => {
                print!("{}", io::to_json_string(&report)?);
                Ok(())
            }
        }
    }

    fn emit_raw(&self, text: &str) -> Result<()> {
        match &self.global.out {
            Some(p) => io::write_atomic(p, text.as_bytes()),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn norm_options(&self) -> NormOptions {
        NormOptions {
            tail_rel: self.global.tol_quadrature,
            ..NormOptions::default()
        }
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                3
            } else {
                2
            }
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut v = Validator::default();
    v.require(
        cli.global.tol_quadrature > 0.0 && cli.global.tol_quadrature < 1.0,
        "--tol-quadrature must lie in (0, 1)",
    );
    v.require(
        cli.global.tol_reconstruction > 0.0,
        "--tol-reconstruction must be positive",
    );
    v.require(cli.global.threads != Some(0), "--threads must be positive");
    v.finish()?;
    let ctx = Context {
        config: RunConfig {
            seed: cli.global.seed,
            tol_quadrature: cli.global.tol_quadrature,
            tol_reconstruction: cli.global.tol_reconstruction,
            ..RunConfig::default()
        },
        global: cli.global,
    };
    match ctx.global.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(ctx, cli.command))
        }
        None => dispatch(ctx, cli.command),
    }
}

fn dispatch(ctx: Context, command: Command) -> Result<()> {
    match command {
        Command::Grid(a) => grid(ctx, a),
        Command::Analyze(a) => analyze(ctx, a),
        Command::Synthesize(a) => synthesize(ctx, a),
        Command::Norm(a) => norm(ctx, a),
        Command::Weight(WeightCommand::Certify(a)) => certify(ctx, a),
        Command::Embed(EmbedCommand::Check(a)) => embed(ctx, a),
        Command::Diagnose(d) => match d {
            DiagnoseCommand::KernelDecay(a) => kernel_decay(ctx, a),
            DiagnoseCommand::Geometry(a) => geometry(ctx, a),
            DiagnoseCommand::Orthogonality(a) => orthogonality(ctx, a),
            DiagnoseCommand::FeffermanStein(a) => fefferman_stein(ctx, a),
            DiagnoseCommand::Peetre(a) => peetre(ctx, a),
            DiagnoseCommand::PlancherelPolya(a) => plancherel_polya(ctx, a),
        },
    }
}

fn grid(mut ctx: Context, a: GridArgs) -> Result<()> {
    let mut v = Validator::default();
    v.shape(&a.shape);
    v.finish()?;
    ctx.config.command = "grid".into();
    ctx.config.n = Some(a.shape.n);
    ctx.config.delta_star = Some(a.shape.delta_star);
    ctx.config.big_j = Some(a.big_j);
    let g = TileGrid::build(a.shape.n, a.shape.delta_star, a.big_j, a.subdivide)?;
    ctx.emit(g.to_export())
}

fn analyze(mut ctx: Context, a: AnalyzeArgs) -> Result<()> {
    let mut v = Validator::default();
    let f = v.take(read(&a.input).and_then(|s| HermiteExpansion::from_json_str(&s)));
    let sys = v.take(load_system(&a.system));
    v.require(
        a.delta_star > 0.0 && a.delta_star < 1.0 / 37.0,
        "--delta-star must lie in (0, 1/37)",
    );
    if let Some(f) = &f {
        let cap = 4usize.saturating_pow(a.big_j as u32);
        if let Some(d) = f.effective_degree() {
            v.require(d <= cap, format!("expansion degree {d} exceeds 4^J = {cap}"));
        }
    }
    v.finish()?;
    let (f, sys) = (f.expect("validated"), sys.expect("validated"));
    ctx.config.command = "analyze".into();
    let grid = TileGrid::build(f.dim(), a.delta_star, a.big_j + 2, false)?;
    let s = frames::analyze(&sys, &grid, &f, a.big_j)?;
    let back = frames::synthesize(&partner(&sys)?, &grid, &s)?;
    let degree = back.degree().max(f.degree());
    let err = back.with_degree(degree)?.l2_distance(&f.with_degree(degree)?) / f.l2_norm().max(f64::MIN_POSITIVE);
    if !(err <= ctx.global.tol_reconstruction) {
        return Err(Error::Convergence {
            what: format!("reconstruction error {err:e} exceeds the tolerance"),
            lo: 0.0,
            hi: ctx.global.tol_reconstruction,
        });
    }
    ctx.emit_raw(&io::to_json_string(&s.to_file(&grid))?)
}

fn synthesize(ctx: Context, a: SynthesizeArgs) -> Result<()> {
    let mut v = Validator::default();
    v.shape(&a.shape);
    let file: Option<FrameFile> = v.take(read(&a.input).and_then(|s| Ok(serde_json::from_str(&s)?)));
    let sys = v.take(load_system(&a.system));
    v.finish()?;
    let (file, sys) = (file.expect("validated"), sys.expect("validated"));
    let n = file.entries.first().map_or(a.shape.n, |e| e.node.len());
    let grid = TileGrid::build(n, a.shape.delta_star, file.max_level, false)?;
    let s = FrameSequence::from_file(&file, &grid)?;
    let f = frames::synthesize(&partner(&sys)?, &grid, &s)?;
    ctx.emit_raw(&f.to_json_string()?)
}

#[derive(Serialize)]
struct NormBody {
    input_kind: &'static str,
    #[serde(flatten)]
    report: norms::NormReport,
}

fn norm(mut ctx: Context, a: NormArgs) -> Result<()> {
    let mut v = Validator::default();
    v.shape(&a.shape);
    let params = v.take(SpaceParams::parse(&a.space, a.kind));
    let w = v.take(load_weight(a.weight.as_deref()));
    let text = v.take(read(&a.input));
    let value: Option<serde_json::Value> = text.and_then(|t| v.take(serde_json::from_str(&t).map_err(Error::from)));
    let sequence = value.as_ref().map(|val| val.get("entries").is_some());
    let sys = if sequence == Some(false) {
        v.take(load_system(&a.system))
    } else {
        None
    };
    if let Some(val) = &value {
        v.require(
            val.get("entries").is_some() || val.get("coeffs").is_some(),
            "input is neither a frame sequence nor an expansion",
        );
    }
    v.finish()?;
    let (params, w, value) = (params.expect("validated"), w.expect("validated"), value.expect("validated"));
    ctx.config.command = "norm".into();
    ctx.config.weight = Some(a.weight.as_deref().map_or_else(|| w.label(), |p| p.display().to_string()));
    ctx.config.input = display(&a.input);
    ctx.config.spaces.insert("space".into(), params.to_string());
    ctx.config.delta_star = Some(a.shape.delta_star);
    let body = if sequence == Some(true) {
        let file: FrameFile = serde_json::from_value(value)?;
        let n = file.entries.first().map_or(a.shape.n, |e| e.node.len());
        ctx.config.n = Some(n);
        ctx.config.big_j = Some(file.max_level);
        let grid = TileGrid::build(n, a.shape.delta_star, file.max_level, false)?;
        let s = FrameSequence::from_file(&file, &grid)?;
        NormBody {
            input_kind: "sequence",
            report: norms::sequence_norm(&s, &params, &w, &grid)?,
        }
    } else {
        let f = HermiteExpansion::try_from(serde_json::from_value::<crate::expansion::ExpansionFile>(value)?)?;
        let sys = sys.expect("validated");
        ctx.config.n = Some(f.dim());
        ctx.config.big_j = Some(a.big_j);
        ctx.config.system = Some(a.system.system.clone());
        ctx.config.c_floor = Some(sys.c_floor());
        NormBody {
            input_kind: "expansion",
            report: norms::function_norm(&f, &sys, &params, &w, a.big_j, &ctx.norm_options())?,
        }
    };
    ctx.emit(body)
}

#[derive(Serialize)]
struct CertifyBody {
    consistent: bool,
    plan: SamplingPlan,
    certificate: weights::AhpCertificate,
}

fn certify(mut ctx: Context, a: CertifyArgs) -> Result<()> {
    let mut v = Validator::default();
    let w = v.take(load_weight(Some(&a.weight)));
    v.require(a.p >= 1.0 && a.p.is_finite(), "--p must lie in [1, ∞)");
    v.require(a.eta >= 0.0, "--eta must be nonnegative");
    v.require(a.n >= 1, "--n must be at least 1");
    v.require(a.scan_depth <= 16, "--scan-depth must not exceed 16");
    if let Some(w) = &w {
        v.take(w.check_dim(a.n));
    }
    v.finish()?;
    let w = w.expect("validated");
    ctx.config.command = "weight certify".into();
    ctx.config.n = Some(a.n);
    ctx.config.weight = display(&a.weight);
    ctx.config.params.insert("p".into(), a.p);
    ctx.config.params.insert("eta".into(), a.eta);
    ctx.config.params.insert("scan_depth".into(), a.scan_depth as f64);
    let plan = SamplingPlan::with_depth(a.n, a.scan_depth);
    let certificate = weights::ahp_certificate(&w, a.p, a.eta, &plan)?;
    ctx.emit(CertifyBody {
        consistent: certificate.consistent(),
        plan,
        certificate,
    })
}

/// Lower-bound evidence in both forms.
#[derive(Serialize)]
struct LowerBound {
    tiles: embedding::TileBoundReport,
    balls: embedding::BallBoundReport,
    agree: bool,
}

#[derive(Serialize)]
struct AhpEvidence {
    consistent: bool,
    certificate: weights::AhpCertificate,
}

#[derive(Serialize)]
struct EmbedBody {
    verdict: Verdict,
    lower_bound: LowerBound,
    necessity: embedding::NecessityReport,
    sufficiency: embedding::SufficiencyReport,
    ahp: AhpEvidence,
}

fn overall(verdicts: &[Verdict]) -> Verdict {
    if verdicts.contains(&Verdict::Fail) {
        Verdict::Fail
    } else if verdicts.iter().all(|v| *v == Verdict::Pass) {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    }
}

fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("lo,hi,count\n");
    for b in bins {
        out.push_str(&format!("{},{},{}\n", io::format_f64(b.lo), io::format_f64(b.hi), b.count));
    }
    out
}

fn embed(mut ctx: Context, a: EmbedArgs) -> Result<()> {
    let mut v = Validator::default();
    v.shape(&a.shape);
    let gamma = a.gamma.unwrap_or(a.shape.n as f64);
    let source = v.take(SpaceParams::parse(&a.source, a.scale));
    let target = v.take(SpaceParams::parse(&a.target, a.scale));
    let params = match (source, target) {
        (Some(s), Some(t)) => v.take(EmbeddingParams::new(s, t, gamma)),
        _ => None,
    };
    let w = v.take(load_weight(a.weight.as_deref()));
    if let Some(w) = &w {
        v.take(w.check_dim(a.shape.n));
    }
    v.require(a.trials >= 2, "--trials must be at least 2");
    v.require(a.big_j >= 1, "--J must be at least 1");
    v.require(a.ahp_p >= 1.0 && a.ahp_p.is_finite(), "--ahp-p must lie in [1, ∞)");
    v.require(a.ahp_eta >= 0.0, "--ahp-eta must be nonnegative");
    v.finish()?;
    let (params, w) = (params.expect("validated"), w.expect("validated"));
    ctx.config.command = "embed check".into();
    ctx.config.n = Some(a.shape.n);
    ctx.config.delta_star = Some(a.shape.delta_star);
    ctx.config.big_j = Some(a.big_j);
    ctx.config.weight = Some(a.weight.as_deref().map_or_else(|| w.label(), |p| p.display().to_string()));
    ctx.config.spaces.insert("source".into(), params.source.to_string());
    ctx.config.spaces.insert("target".into(), params.target.to_string());
    ctx.config.params.insert("gamma".into(), gamma);
    ctx.config.params.insert("trials".into(), a.trials as f64);
    ctx.config.params.insert("ahp_p".into(), a.ahp_p);
    ctx.config.params.insert("ahp_eta".into(), a.ahp_eta);

    let grid = TileGrid::build(a.shape.n, a.shape.delta_star, a.big_j, false)?;
    let tiles = embedding::lower_bound_tiles(&w, &grid, gamma, a.big_j)?;
    let balls = embedding::lower_bound_balls(&w, gamma, &BallPlan::matched(&grid, a.big_j))?;
    let necessity = embedding::necessity_probe(&params, &w, &grid, a.big_j)?;
    let sufficiency = embedding::sufficiency_probe(&params, &w, &grid, a.big_j, a.trials, ctx.global.seed)?;
    let plan = SamplingPlan::with_depth(a.shape.n, a.big_j as u32);
    let certificate = weights::ahp_certificate(&w, a.ahp_p, a.ahp_eta, &plan)?;
    let verdict = overall(&[tiles.verdict, necessity.verdict, sufficiency.verdict]);
    if let Some(path) = &a.histogram_csv {
        io::write_atomic(path, histogram_csv(&sufficiency.histogram).as_bytes())?;
    }
    let body = EmbedBody {
        verdict,
        lower_bound: LowerBound {
            agree: tiles.verdict == balls.verdict,
            tiles,
            balls,
        },
        necessity,
        sufficiency,
        ahp: AhpEvidence {
            consistent: certificate.consistent(),
            certificate,
        },
    };
    let path = a.report.as_deref().or(ctx.global.out.as_deref());
    ctx.emit_to(path, body)
}

/// Uniform one-dimensional sample points on `[−x, x]`.
fn line(x: f64, points: usize) -> Vec<Vec<f64>> {
    (0..points)
        .map(|i| vec![-x + 2.0 * x * i as f64 / (points - 1) as f64])
        .collect()
}

fn kernel_decay(mut ctx: Context, a: KernelDecayArgs) -> Result<()> {
    let mut v = Validator::default();
    v.require(a.points >= 2, "--points must be at least 2");
    v.require(a.j <= 8, "--j must not exceed 8");
    v.require(a.epsilon > 4.0, "--epsilon must exceed 4");
    v.require(a.decay_order >= 1.0, "--N must be at least 1");
    let sys = v.take(MultiplierSystem::partition(a.c_floor));
    v.finish()?;
    let sys = sys.expect("validated");
    ctx.config.command = "diagnose kernel-decay".into();
    ctx.config.c_floor = Some(a.c_floor);
    ctx.config.params.insert("j".into(), a.j as f64);
    ctx.config.params.insert("N".into(), a.decay_order);
    ctx.config.params.insert("epsilon".into(), a.epsilon);
    ctx.config.params.insert("points".into(), a.points as f64);
    // The grid reaches past the cutoff radius √ε 2^j so the far field is sampled.
    let extent = 1.25 * a.epsilon.sqrt() * 2f64.powi(a.j as i32);
    ctx.config.params.insert("extent".into(), extent);
    let r = multipliers::kernel_decay_diagnostic(&sys, a.j, a.decay_order, a.epsilon, &line(extent, a.points))?;
    let checks = vec![
        check("fitted_c_finite", r.fitted_c, r.fitted_c.is_finite() && r.fitted_c > 0.0),
        check("theta_positive", r.theta, r.theta > 0.0),
        check("far_field_within_near_constant", r.max_violation, r.max_violation <= 1.0 + 1e-12),
    ];
    ctx.emit(diagnosis(checks, r))
}

fn geometry(mut ctx: Context, a: GeometryArgs) -> Result<()> {
    let mut v = Validator::default();
    v.shape(&a.shape);
    v.finish()?;
    ctx.config.command = "diagnose geometry".into();
    ctx.config.n = Some(a.shape.n);
    ctx.config.delta_star = Some(a.shape.delta_star);
    ctx.config.big_j = Some(a.big_j);
    let grid = TileGrid::build(a.shape.n, a.shape.delta_star, a.big_j, true)?;
    let r = tiles::verify_geometry(&grid);
    let mut checks: Vec<Check> = r
        .levels
        .iter()
        .map(|l| check(&format!("partition_level_{}", l.j), l.partition_error, l.partition_error <= 1e-12))
        .collect();
    for (name, c) in [("c0", r.c0), ("c1", r.c1), ("c2", r.c2), ("c3", r.c3)] {
        checks.push(check(name, c, c.is_finite() && c > 0.0));
    }
    checks.push(check("containments", r.failures.len() as f64, r.pass));
    ctx.emit(diagnosis(checks, r))
}

fn orthogonality(mut ctx: Context, a: OrthogonalityArgs) -> Result<()> {
    let mut v = Validator::default();
    v.require(a.points >= 2, "--points must be at least 2");
    v.require(a.j.max(a.k) <= 8, "scales must not exceed 8");
    let sys = v.take(MultiplierSystem::partition(a.c_floor));
    v.finish()?;
    let sys = sys.expect("validated");
    let dual = sys.dual()?;
    ctx.config.command = "diagnose orthogonality".into();
    ctx.config.c_floor = Some(a.c_floor);
    ctx.config.params.insert("j".into(), a.j as f64);
    ctx.config.params.insert("k".into(), a.k as f64);
    ctx.config.params.insert("points".into(), a.points as f64);
    let extent = 1.25 * 2f64.powi(a.j.max(a.k) as i32);
    let r = multipliers::orthogonality_check(&sys, &dual, a.j, a.k, &line(extent, a.points))?;
    let separated = a.j.abs_diff(a.k) >= 3;
    let checks = if separated {
        vec![
            check("coefficients_vanish", r.coefficient_max, r.coefficient_max == 0.0),
            check("kernel_below_1e-13", r.kernel_max, r.kernel_max < 1e-13),
        ]
    } else {
        vec![check("kernel_finite", r.kernel_max, r.kernel_max.is_finite())]
    };
    ctx.emit(diagnosis(checks, r))
}

fn fefferman_stein(mut ctx: Context, a: FeffermanSteinArgs) -> Result<()> {
    let mut v = Validator::default();
    let w = v.take(load_weight(a.weight.as_deref()));
    if let Some(w) = &w {
        v.take(w.check_dim(1));
    }
    v.require(a.p > 0.0 && a.p.is_finite(), "--p must be positive and finite");
    v.require(a.q > 0.0, "--q must be positive");
    v.require(a.s > 0.0, "--s must be positive");
    v.require(a.theta >= 0.0, "--theta must be nonnegative");
    v.require(a.functions >= 1, "--functions must be at least 1");
    v.require((2..=4096).contains(&a.cells), "--cells must lie in [2, 4096]");
    v.finish()?;
    let w = w.expect("validated");
    ctx.config.command = "diagnose fefferman-stein".into();
    ctx.config.n = Some(1);
    ctx.config.weight = Some(w.label());
    for (k, x) in [("p", a.p), ("q", a.q), ("s", a.s), ("theta", a.theta)] {
        ctx.config.params.insert(k.into(), x);
    }
    ctx.config.params.insert("functions".into(), a.functions as f64);
    ctx.config.params.insert("cells".into(), a.cells as f64);
    let breaks: Vec<f64> = (0..=a.cells).map(|i| -8.0 + 16.0 * i as f64 / a.cells as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.global.seed);
    let fs: Vec<GridFunction> = (0..a.functions)
        .map(|_| {
            let values = (0..a.cells)
                .map(|_| if rng.gen_bool(0.3) { rng.gen_range(-1.0..1.0) } else { 0.0 })
                .collect();
            GridFunction::new(vec![breaks.clone()], values)
        })
        .collect::<Result<_>>()?;
    let family = CubeFamily::Lattice {
        min_exp: -((a.cells as f64 / 16.0).log2().ceil() as i32) - 1,
        max_exp: 4,
        subdivisions: 2,
    };
    let cells = EvalCells::from_breaks(&[breaks], &w)?;
    let r = weights::fefferman_stein_probe(&fs, a.p, a.q, a.s, a.theta, &w, &family, &cells)?;
    let checks = vec![check("ratio_finite", r.ratio, r.ratio.is_finite())];
    ctx.emit(diagnosis(checks, r))
}

fn peetre(mut ctx: Context, a: PeetreArgs) -> Result<()> {
    let mut v = Validator::default();
    v.shape(&a.shape);
    v.require(a.s > 0.0, "--s must be positive");
    v.require(a.theta >= 0.0, "--theta must be nonnegative");
    v.require(a.c_tilde > 0.0, "--c-tilde must be positive");
    v.require(a.samples >= 2, "--samples must be at least 2");
    v.require(a.j <= 6, "--j must not exceed 6");
    v.finish()?;
    let n = a.shape.n as f64;
    let sigma = a.sigma.unwrap_or(a.theta / a.s + n.max(n / a.s) + 1.0);
    ctx.config.command = "diagnose peetre".into();
    ctx.config.n = Some(a.shape.n);
    ctx.config.delta_star = Some(a.shape.delta_star);
    for (k, x) in [("j", a.j as f64), ("sigma", sigma), ("s", a.s), ("theta", a.theta), ("c_tilde", a.c_tilde)] {
        ctx.config.params.insert(k.into(), x);
    }
    ctx.config.params.insert("samples".into(), a.samples as f64);
    let grid = TileGrid::build(a.shape.n, a.shape.delta_star, a.j, false)?;
    let count = usize::try_from(grid.tile_count(a.j)).map_err(|_| Error::Resource {
        what: "tiles",
        needed: grid.tile_count(a.j),
        cap: usize::MAX as u128,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.global.seed);
    let values: Vec<f64> = (0..count)
        .map(|_| if rng.gen_bool(0.1) { rng.gen_range(0.1..1.0) } else { 0.0 })
        .collect();
    let x = 2f64.powi(a.j as i32);
    let axis: Vec<f64> = line(x, a.samples).into_iter().map(|p| p[0]).collect();
    let samples: Vec<Vec<f64>> = (0..a.samples.pow(a.shape.n as u32))
        .map(|mut i| {
            (0..a.shape.n)
                .map(|_| {
                    let t = axis[i % a.samples];
                    i /= a.samples;
                    t
                })
                .collect()
        })
        .collect();
    let r = frames::peetre_probe(&grid, a.j, &values, sigma, a.s, a.theta, a.c_tilde, &samples)?;
    let checks = vec![check("ratio_finite", r.max_ratio, r.max_ratio.is_finite())];
    ctx.emit(diagnosis(checks, r))
}

fn plancherel_polya(mut ctx: Context, a: PlancherelPolyaArgs) -> Result<()> {
    let mut v = Validator::default();
    v.shape(&a.shape);
    v.require(a.p > 0.0, "--p must be positive");
    v.require(a.j <= 4, "--j must not exceed 4");
    let w = v.take(load_weight(a.weight.as_deref()));
    if let Some(w) = &w {
        v.take(w.check_dim(a.shape.n));
    }
    v.finish()?;
    let w = w.expect("validated");
    ctx.config.command = "diagnose plancherel-polya".into();
    ctx.config.n = Some(a.shape.n);
    ctx.config.delta_star = Some(a.shape.delta_star);
    ctx.config.weight = Some(w.label());
    ctx.config.params.insert("j".into(), a.j as f64);
    ctx.config.params.insert("p".into(), a.p);
    let degree = 4usize.pow(a.j as u32);
    let mut g = HermiteExpansion::zero(a.shape.n, degree);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.global.seed);
    for c in g.coeffs_mut() {
        *c = Complex64::new(rng.gen_range(-1.0..1.0), 0.0);
    }
    let grid = TileGrid::build(a.shape.n, a.shape.delta_star, a.j, true)?;
    let r = frames::plancherel_polya_probe(&grid, a.j, &g, a.p, &w, &ctx.norm_options())?;
    let checks = vec![check("ratio_bounded", r.ratio, r.ratio > 1e-2 && r.ratio < 1e2)];
    ctx.emit(diagnosis(checks, r))
}
