//! Command-line driver: `verify`, `deform` and `fuse`.
//!
//! Exit codes: 0 when every requested check passes, 1 when a check fails
//! or a family rejects its input, 2 on usage errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use crate::axioms::{check_family, check_space, CheckConfig, FamilyReport, Report};
use crate::error::{Error, Result};
use crate::families::{conj_family, double_family, external_fuse_family, moduli_family, DeformationFamily};
use crate::fusion::{moduli_ham, moduli_qh, MODULI_FUSION_ORDER};
use crate::liegroup::{AlgebraVector, GroupKind, GroupModel};
use crate::spaces::{conj_class_space, double_space, orbit_space, tstar_space, StructuredSpace};

/// Environment variable overriding `--seed`.
pub const SEED_ENV: &str = "QHDEF_SEED";
pub const DEFAULT_T_GRID: &str = "1,0.5,0.25,0.125,0.0625,0.03125,0.015625,0";

#[derive(Debug, Parser)]
#[command(name = "qhdef", version, about = "Verify quasi-Hamiltonian spaces and their Hamiltonian deformations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the axiom suite on one structured space.
    Verify(VerifyArgs),
    /// Check a deformation family on a grid of t values.
    Deform(DeformArgs),
    /// Externally fuse two families and check the result.
    Fuse(FuseArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SpaceKind {
    Double,
    Tstar,
    Conjugacy,
    Orbit,
    Moduli,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyKind {
    Double,
    Conjugacy,
    Moduli,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FusibleFamily {
    Double,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long, value_enum, default_value = "su2")]
    group: GroupKind,
    #[arg(long, default_value_t = 32)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "fd-step", default_value_t = 1e-4)]
    fd_step: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave the timestamp out of the report.
    #[arg(long = "no-timestamp")]
    no_timestamp: bool,
}

#[derive(Debug, Args)]
struct Surface {
    #[arg(long, default_value_t = 1)]
    genus: usize,
    #[arg(long, default_value_t = 1)]
    boundaries: usize,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    space: SpaceKind,
    /// Algebra-basis coefficients of the orbit representative.
    #[arg(long)]
    element: Option<String>,
    #[command(flatten)]
    surface: Surface,
    /// Check the Hamiltonian moduli space built from cotangent bundles.
    #[arg(long)]
    hamiltonian: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct DeformArgs {
    #[arg(long, value_enum)]
    family: FamilyKind,
    #[arg(long)]
    element: Option<String>,
    #[command(flatten)]
    surface: Surface,
    #[arg(long = "t-grid", default_value = DEFAULT_T_GRID)]
    t_grid: String,
    /// Write the convergence table here.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct FuseArgs {
    #[arg(long, value_enum)]
    family: FusibleFamily,
    #[arg(long = "with", value_enum)]
    with: FusibleFamily,
    #[arg(long = "t-grid", default_value = DEFAULT_T_GRID)]
    t_grid: String,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

impl ValueEnum for GroupKind {
    fn value_variants<'a>() -> &'a [Self] {
        &[GroupKind::Su2, GroupKind::So3, GroupKind::T2, GroupKind::Sl2r]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

/// Default orbit representative per group, as basis coefficients.
pub fn default_element(kind: GroupKind) -> &'static str {
    match kind {
        GroupKind::Su2 | GroupKind::So3 => "0.7,0.3,0.2",
        GroupKind::T2 => "0.7,0.3",
        GroupKind::Sl2r => "0.2,0.3,-0.6",
    }
}

pub fn parse_element(model: &GroupModel, text: &str) -> Result<AlgebraVector> {
    let coeffs: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Usage(format!("bad --element {text:?}: {e}")))?;
    if coeffs.len() != model.dim() {
        return Err(Error::Usage(format!(
            "--element needs {} coefficients for {}, got {}",
            model.dim(),
            model.name(),
            coeffs.len()
        )));
    }
    Ok(model.from_coords(&DVector::from_vec(coeffs)))
}

pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Usage(format!("bad --t-grid entry {s:?}: {e}")))
        })
        .collect()
}

#[derive(Serialize)]
struct Output<'a, T: Serialize> {
    #[serde(flatten)]
    body: &'a T,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<u64>,
}

#[derive(Serialize)]
struct CsvRow {
    t: f64,
    metric: String,
    max_residual: f64,
    mean_residual: f64,
    samples: usize,
}

fn config(common: &Common) -> Result<CheckConfig> {
    let seed = match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::Usage(format!("{SEED_ENV}={v:?}: {e}")))?,
        Err(_) => common.seed,
    };
    let cfg = CheckConfig {
        samples: common.samples,
        seed,
        fd_step: common.fd_step,
        tol: common.tol,
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn timestamp(common: &Common) -> Option<u64> {
    if common.no_timestamp {
        None
    } else {
        SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
    }
}

fn emit<T: Serialize>(common: &Common, body: &T, notes: Vec<String>) -> Result<()> {
    let out = Output {
        body,
        notes,
        timestamp: timestamp(common),
    };
    let mut text = serde_json::to_string_pretty(&out)?;
    text.push('\n');
    match &common.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn write_csv(path: &Path, report: &FamilyReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &report.convergence {
        w.serialize(CsvRow {
            t: r.t,
            metric: r.metric.clone(),
            max_residual: r.max_residual,
            mean_residual: r.mean_residual,
            samples: r.samples,
        })?;
    }
    w.serialize(CsvRow {
        t: f64::NAN,
        metric: "slope".into(),
        max_residual: report.slope.unwrap_or(f64::NAN),
        mean_residual: f64::NAN,
        samples: report.convergence.first().map_or(0, |r| r.samples),
    })?;
    w.flush()?;
    Ok(())
}

fn summarize_report(r: &Report) -> String {
    let worst = r
        .axioms
        .iter()
        .filter(|a| a.name != "rank")
        .map(|a| a.max_residual)
        .fold(0.0, f64::max);
    format!(
        "{} on {}: {} (worst residual {:.3e}, rank {}..{} of {})",
        r.space,
        r.group,
        if r.pass { "pass" } else { "FAIL" },
        worst,
        r.ranks.min_rank,
        r.ranks.max_rank,
        r.ranks.chart_dim
    )
}

fn verify(args: &VerifyArgs) -> Result<bool> {
    let cfg = config(&args.common)?;
    let model = GroupModel::new(args.common.group);
    let element = || parse_element(&model, args.element.as_deref().unwrap_or(default_element(model.kind())));
    let mut notes = Vec::new();
    let space: StructuredSpace = match args.space {
        SpaceKind::Double => double_space(&model),
        SpaceKind::Tstar => tstar_space(&model),
        SpaceKind::Conjugacy => conj_class_space(&model, &model.exp(&element()?)?)?,
        SpaceKind::Orbit => orbit_space(&model, &element()?)?,
        SpaceKind::Moduli => {
            notes.push(format!("fusion order: {MODULI_FUSION_ORDER}"));
            let (g, r) = (args.surface.genus, args.surface.boundaries);
            if args.hamiltonian {
                moduli_ham(&model, g, r)?
            } else {
                moduli_qh(&model, g, r)?
            }
        }
    };
    let report = check_space(&space, &cfg)?;
    emit(&args.common, &report, notes)?;
    if args.common.out.is_some() {
        println!("{}", summarize_report(&report));
    }
    Ok(report.pass)
}

fn run_family(family: &DeformationFamily, grid: &str, csv: Option<&Path>, common: &Common, notes: Vec<String>) -> Result<bool> {
    let cfg = config(common)?;
    let grid = parse_grid(grid)?;
    let report = check_family(family, &grid, &cfg)?;
    if let Some(path) = csv {
        write_csv(path, &report)?;
    }
    emit(common, &report, notes)?;
    if common.out.is_some() {
        for f in &report.fibers {
            println!("t = {:<10} {}", f.t, summarize_report(&f.report));
        }
        match report.slope {
            Some(s) => println!("convergence order {s:.3}"),
            None => println!("fiber forms do not depend on t"),
        }
        println!("{}", if report.pass { "pass" } else { "FAIL" });
    }
    Ok(report.pass)
}

fn deform(args: &DeformArgs) -> Result<bool> {
    let model = GroupModel::new(args.common.group);
    let mut notes = Vec::new();
    let family = match args.family {
        FamilyKind::Double => double_family(&model),
        FamilyKind::Conjugacy => {
            let x = parse_element(&model, args.element.as_deref().unwrap_or(default_element(model.kind())))?;
            notes.push("t domain: first singular t of dexp_{tx} from the spectrum of ad_x, capped at 16".into());
            conj_family(&model, &x)?
        }
        FamilyKind::Moduli => {
            notes.push(format!("fusion order: {MODULI_FUSION_ORDER}"));
            moduli_family(&model, args.surface.genus, args.surface.boundaries)?
        }
    };
    run_family(&family, &args.t_grid, args.csv.as_deref(), &args.common, notes)
}

fn fuse(args: &FuseArgs) -> Result<bool> {
    let model = GroupModel::new(args.common.group);
    let pick = |f: FusibleFamily| match f {
        FusibleFamily::Double => double_family(&model),
    };
    let fused = external_fuse_family(&pick(args.family), &pick(args.with), (0, 0))?;
    let notes = vec!["fused factor 0 of the first family with factor 0 of the second".to_string()];
    run_family(&fused, &args.t_grid, args.csv.as_deref(), &args.common, notes)
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Verify(a) => verify(a),
        Command::Deform(a) => deform(a),
        Command::Fuse(a) => fuse(a),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(Error::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
