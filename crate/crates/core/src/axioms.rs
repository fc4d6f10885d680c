//! Numerical verification of the quasi-Hamiltonian and Hamiltonian axioms.
//!
//! Every check samples chart points, evaluates the space's [`LocalData`]
//! there and compares both sides of each axiom in the coordinate frame.
//! Samples are drawn from a ChaCha stream per sample index, run in
//! parallel and aggregated in index order, so reports are reproducible bit
//! for bit.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charts::{ext_deriv_from_partials, gram_rank_matrix};
use crate::error::{Error, Result};
use crate::families::{fuse_family, DeformationFamily};
use crate::fusion::internal_fuse;
use crate::liegroup::{AlgebraVector, GroupModel};
use crate::spaces::{Component, Flavor, LocalData, Point, StructuredSpace};

/// Resamples allowed per sample when a chart or logarithm domain is left.
pub const RETRY_BUDGET: usize = 8;
/// Singular values of `Ad_mu + 1` below this count as kernel.
pub const KERNEL_TOL: f64 = 1e-8;
/// Radius of the chart offsets at which axioms are evaluated.
pub const SAMPLE_OFFSET: f64 = 0.1;

/// Signs that fix the axiom conventions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignConvention {
    pub moment_sign_qh: f64,
    pub moment_sign_ham: f64,
    pub chi_sign: f64,
}

impl Default for SignConvention {
    fn default() -> Self {
        Self {
            moment_sign_qh: 1.0,
            moment_sign_ham: 1.0,
            chi_sign: 1.0,
        }
    }
}

impl SignConvention {
    /// All eight sign triples, the default first.
    pub fn all() -> Vec<SignConvention> {
        let mut out = vec![Self::default()];
        for q in [1.0, -1.0] {
            for h in [1.0, -1.0] {
                for c in [1.0, -1.0] {
                    let s = SignConvention {
                        moment_sign_qh: q,
                        moment_sign_ham: h,
                        chi_sign: c,
                    };
                    if s != Self::default() {
                        out.push(s);
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub samples: usize,
    pub seed: u64,
    pub fd_step: f64,
    pub tol: f64,
    pub rank_tol: f64,
    pub sign_convention: SignConvention,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            samples: 32,
            seed: 0,
            fd_step: 1e-4,
            tol: 1e-6,
            rank_tol: 1e-8,
            sign_convention: SignConvention::default(),
        }
    }
}

impl CheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Usage("samples must be positive".into()));
        }
        if !(self.fd_step > 0.0 && self.tol > 0.0 && self.rank_tol > 0.0) {
            return Err(Error::Usage("fd_step, tol and rank_tol must be positive".into()));
        }
        Ok(())
    }

    /// The generator for sample `index`.
    pub fn rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomResult {
    pub name: String,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub chart_dim: usize,
    pub min_rank: usize,
    pub max_rank: usize,
    /// Samples where `Ad_mu + 1` is invertible (all samples for Hamiltonian
    /// spaces); the rank must equal the chart dimension there.
    pub full_rank_expected: usize,
    pub full_rank_observed: usize,
    /// Samples where `Ad_mu + 1` has a kernel.
    pub kernel_points: usize,
}

/// Settings echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub samples: usize,
    pub seed: u64,
    pub fd_step: f64,
    pub tol: f64,
    pub rank_tol: f64,
    pub sign_convention: SignConvention,
    pub pairing_scale: f64,
    pub pairing_rescale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub space: String,
    pub group: String,
    pub flavor: Flavor,
    pub config: ConfigEcho,
    pub axioms: Vec<AxiomResult>,
    pub ranks: RankSummary,
    pub pass: bool,
}

impl Report {
    pub fn axiom(&self, name: &str) -> Option<&AxiomResult> {
        self.axioms.iter().find(|a| a.name == name)
    }

    /// Largest residual over the named axioms.
    pub fn max_of(&self, names: &[&str]) -> f64 {
        self.axioms
            .iter()
            .filter(|a| names.contains(&a.name.as_str()))
            .map(|a| a.max_residual)
            .fold(0.0, f64::max)
    }
}

/// `1/2 <a, [b, c]>` in coordinates, for a pairing matrix `pairing`.
pub fn chi_coords(model: &GroupModel, pairing: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>) -> f64 {
    0.5 * (a.transpose() * pairing * (model.ad_matrix(b) * c))[(0, 0)]
}

/// The Cartan 3-form on left-trivialized vectors: `1/2 <a, [b, c]>`.
pub fn cartan_chi(model: &GroupModel, a: &AlgebraVector, b: &AlgebraVector, c: &AlgebraVector) -> f64 {
    chi_coords(model, model.pairing_matrix(), &model.coords(a), &model.coords(b), &model.coords(c))
}

/// Residuals gathered at one sample, keyed by axiom name in a fixed order.
struct SampleOutcome {
    residuals: Vec<(&'static str, f64)>,
    rank: usize,
    full_rank_expected: bool,
    kernel_point: bool,
}

fn random_offset(rng: &mut dyn RngCore, dim: usize) -> DVector<f64> {
    if dim == 0 {
        return DVector::zeros(0);
    }
    let dir = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
    let norm = dir.norm();
    if norm == 0.0 {
        return dir;
    }
    dir * (SAMPLE_OFFSET * rng.gen::<f64>() / norm)
}

fn shifted(u: &DVector<f64>, axis: usize, delta: f64) -> DVector<f64> {
    let mut v = u.clone();
    v[axis] += delta;
    v
}

/// Left-trivialized difference `log(a^-1 b)` or `b - a`, in coordinates.
fn moment_difference(model: &GroupModel, a: &Component, b: &Component) -> Result<DVector<f64>> {
    match (a, b) {
        (Component::Group(a), Component::Group(b)) => model.log_coords(&a.inverse().mul(b)),
        (Component::Algebra(a), Component::Algebra(b)) => Ok(model.coords(&(b.clone() - a.clone()))),
        _ => Err(Error::Contract("moment changed type".into())),
    }
}

/// `g . m . g^-1` or `Ad_g m`.
fn conjugate(model: &GroupModel, g: &crate::liegroup::GroupElement, m: &Component) -> Component {
    match m {
        Component::Group(h) => Component::Group(g.mul(h).mul(&g.inverse())),
        Component::Algebra(x) => Component::Algebra(model.adjoint(g, x)),
    }
}

/// Fourth-order central difference of a moment curve `s -> at(s)` at
/// `s = 0`, left-trivialized against `reference = at(0)`.
fn moment_derivative(
    factors: &[GroupModel],
    reference: &[Component],
    at: impl Fn(f64) -> Result<Vec<Component>>,
    h: f64,
) -> Result<Vec<DVector<f64>>> {
    let samples = [at(2.0 * h)?, at(h)?, at(-h)?, at(-2.0 * h)?];
    factors
        .iter()
        .enumerate()
        .map(|(f, model)| {
            let d: Vec<DVector<f64>> = samples
                .iter()
                .map(|m| moment_difference(model, &reference[f], &m[f]))
                .collect::<Result<_>>()?;
            Ok(((&d[1] - &d[2]) * 8.0 - (&d[0] - &d[3])) / (12.0 * h))
        })
        .collect()
}

fn evaluate_sample(space: &StructuredSpace, cfg: &CheckConfig, rng: &mut dyn RngCore) -> Result<SampleOutcome> {
    let flavor = space.flavor();
    let dim = space.dim();
    let factors = space.factors();
    let r = space.pairing_rescale();
    let h = cfg.fd_step;
    let signs = cfg.sign_convention;

    let base: Point = space.sample_point(rng)?;
    let u = random_offset(rng, dim);
    let local: LocalData = space.local(&base, &u)?;
    let point = space.embed(&base, &u)?;
    let mut residuals: Vec<(&'static str, f64)> = Vec::new();

    // Closedness (Hamiltonian) or relative closedness against the Cartan
    // 3-form (quasi-Hamiltonian).
    let mut partials = Vec::with_capacity(dim);
    for axis in 0..dim {
        let plus_u = shifted(&u, axis, h);
        let minus_u = shifted(&u, axis, -h);
        let plus = space.local(&base, &plus_u)?;
        let minus = space.local(&base, &minus_u)?;
        partials.push((plus.form - minus.form) / (2.0 * h));
    }
    let d_omega = ext_deriv_from_partials(&partials);
    let mut closed = 0.0f64;
    for ((i, j, k), value) in d_omega {
        let mut total = value;
        if flavor == Flavor::QuasiHamiltonian {
            for (f, model) in factors.iter().enumerate() {
                let a = &local.dmoment[f];
                let p = model.pairing_matrix() * r;
                let chi = chi_coords(model, &p, &a.column(i).into_owned(), &a.column(j).into_owned(), &a.column(k).into_owned());
                total += signs.chi_sign * chi;
            }
        }
        closed = closed.max(total.abs());
    }
    residuals.push((
        match flavor {
            Flavor::QuasiHamiltonian => "B1",
            Flavor::Hamiltonian => "closedness",
        },
        closed,
    ));

    // Moment condition.
    let mut moment_cond = 0.0f64;
    for (f, model) in factors.iter().enumerate() {
        let n = model.dim();
        let p = model.pairing_matrix() * r;
        let lhs = local.generators[f].transpose() * &local.form;
        let rhs = match flavor {
            Flavor::QuasiHamiltonian => {
                let mu = local.moment[f].as_group()?;
                let sym = DMatrix::identity(n, n) + model.adjoint_matrix(mu);
                &p * sym * &local.dmoment[f] * (0.5 * signs.moment_sign_qh)
            }
            Flavor::Hamiltonian => &p * &local.dmoment[f] * signs.moment_sign_ham,
        };
        if dim > 0 {
            moment_cond = moment_cond.max((lhs - rhs).amax());
        }
    }
    residuals.push((
        match flavor {
            Flavor::QuasiHamiltonian => "B2",
            Flavor::Hamiltonian => "moment_condition",
        },
        moment_cond,
    ));

    // Rank and kernel.
    let (rank, _) = gram_rank_matrix(&local.form, cfg.rank_tol);
    let mut kernel_residual = 0.0f64;
    let mut kernel_point = false;
    if flavor == Flavor::QuasiHamiltonian {
        for (f, model) in factors.iter().enumerate() {
            let n = model.dim();
            let mu = local.moment[f].as_group()?;
            let shifted_ad = model.adjoint_matrix(mu) + DMatrix::identity(n, n);
            let (k_rank, kernel) = gram_rank_matrix(&shifted_ad, KERNEL_TOL);
            if k_rank < n {
                kernel_point = true;
                for v in kernel {
                    let x = &local.generators[f] * v;
                    if dim > 0 {
                        kernel_residual = kernel_residual.max((&local.form * x).amax());
                    }
                }
            }
        }
        residuals.push(("B3", kernel_residual));
    }

    // Equivariance of the moment map, one random element per factor.
    let moment = space.moment(&point)?;
    let mut equiv = 0.0f64;
    for (f, model) in factors.iter().enumerate() {
        let g = model.random_group(rng, 1.0)?;
        let moved = space.moment(&space.act(f, &g, &point)?)?;
        for (e, m) in moment.iter().enumerate() {
            let expected = if e == f { conjugate(model, &g, m) } else { m.clone() };
            equiv = equiv.max(moved[e].distance(&expected));
        }
    }
    residuals.push(("equivariance", equiv));

    // The analytic moment differential against finite differences.
    let mut dmom = 0.0f64;
    for axis in 0..dim {
        let at = |s: f64| space.moment(&space.embed(&base, &shifted(&u, axis, s))?);
        let derivs = moment_derivative(&factors, &local.moment, at, h)?;
        for (f, d) in derivs.iter().enumerate() {
            dmom = dmom.max((d - local.dmoment[f].column(axis)).amax());
        }
    }
    residuals.push(("moment_differential", dmom));

    // Generators against the derivative of the action, seen through the
    // moment map.
    let mut action = 0.0f64;
    for (f, model) in factors.iter().enumerate() {
        let v = model.random_coords(rng, 1.0);
        let at = |s: f64| -> Result<Vec<Component>> {
            let g = model.exp_coords(&(&v * s))?;
            space.moment(&space.act(f, &g, &point)?)
        };
        let derivs = moment_derivative(&factors, &moment, at, h)?;
        let x = &local.generators[f] * &v;
        for (e, d) in derivs.iter().enumerate() {
            let predicted = &local.dmoment[e] * &x;
            action = action.max((d - predicted).amax());
        }
    }
    residuals.push(("action", action));

    let full_rank_expected = !kernel_point;
    Ok(SampleOutcome {
        residuals,
        rank,
        full_rank_expected,
        kernel_point,
    })
}

fn run_sample(space: &StructuredSpace, cfg: &CheckConfig, index: usize) -> Result<SampleOutcome> {
    let mut rng = cfg.rng(index);
    let mut last = None;
    for _ in 0..=RETRY_BUDGET {
        match evaluate_sample(space, cfg, &mut rng) {
            Ok(out) => return Ok(out),
            Err(e) if e.is_domain() => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Domain("sample retries exhausted".into())))
}

fn aggregate(space: &StructuredSpace, cfg: &CheckConfig, outcomes: Vec<SampleOutcome>) -> Report {
    let dim = space.dim();
    let names: Vec<&'static str> = outcomes[0].residuals.iter().map(|(n, _)| *n).collect();
    let mut axioms: Vec<AxiomResult> = names
        .iter()
        .enumerate()
        .map(|(idx, name)| {
            let values: Vec<f64> = outcomes.iter().map(|o| o.residuals[idx].1).collect();
            let max = values.iter().copied().fold(0.0, f64::max);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            AxiomResult {
                name: name.to_string(),
                max_residual: max,
                mean_residual: mean,
                pass: max <= cfg.tol,
            }
        })
        .collect();

    let mut ranks = RankSummary {
        chart_dim: dim,
        min_rank: usize::MAX,
        ..Default::default()
    };
    let mut deficits = Vec::new();
    for o in &outcomes {
        ranks.min_rank = ranks.min_rank.min(o.rank);
        ranks.max_rank = ranks.max_rank.max(o.rank);
        if o.kernel_point {
            ranks.kernel_points += 1;
        }
        if o.full_rank_expected {
            ranks.full_rank_expected += 1;
            if o.rank == dim {
                ranks.full_rank_observed += 1;
            }
            deficits.push((dim - o.rank.min(dim)) as f64);
        }
    }
    let max_def = deficits.iter().copied().fold(0.0, f64::max);
    let mean_def = if deficits.is_empty() {
        0.0
    } else {
        deficits.iter().sum::<f64>() / deficits.len() as f64
    };
    axioms.push(AxiomResult {
        name: "rank".into(),
        max_residual: max_def,
        mean_residual: mean_def,
        pass: max_def == 0.0,
    });

    let pass = axioms.iter().all(|a| a.pass);
    let pairing_scale = space.factors().first().map(|m| m.pairing_scale()).unwrap_or(1.0);
    Report {
        space: space.name(),
        group: space.group_label(),
        flavor: space.flavor(),
        config: ConfigEcho {
            samples: cfg.samples,
            seed: cfg.seed,
            fd_step: cfg.fd_step,
            tol: cfg.tol,
            rank_tol: cfg.rank_tol,
            sign_convention: cfg.sign_convention,
            pairing_scale,
            pairing_rescale: space.pairing_rescale(),
        },
        axioms,
        ranks,
        pass,
    }
}

/// Runs every axiom appropriate to the space's flavor.
pub fn check_space(space: &StructuredSpace, cfg: &CheckConfig) -> Result<Report> {
    cfg.validate()?;
    let outcomes: Vec<SampleOutcome> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| run_sample(space, cfg, i))
        .collect::<Result<_>>()?;
    Ok(aggregate(space, cfg, outcomes))
}

/// Quasi-Hamiltonian suite: B1 (relative closedness), B2 (moment
/// condition), B3 (kernel), rank, equivariance and consistency of the
/// moment differential and generators.
pub fn check_qh(space: &StructuredSpace, cfg: &CheckConfig) -> Result<Report> {
    if space.flavor() != Flavor::QuasiHamiltonian {
        return Err(Error::Contract(format!("{} is not quasi-Hamiltonian", space.name())));
    }
    check_space(space, cfg)
}

/// Hamiltonian suite: closedness, nondegeneracy, moment condition,
/// equivariance and consistency checks.
pub fn check_ham(space: &StructuredSpace, cfg: &CheckConfig) -> Result<Report> {
    if space.flavor() != Flavor::Hamiltonian {
        return Err(Error::Contract(format!("{} is not Hamiltonian", space.name())));
    }
    check_space(space, cfg)
}

/// Result of sweeping sign conventions over a set of calibration spaces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Calibration {
    pub chosen: SignConvention,
    /// Worst residual over the calibration spaces, per convention.
    pub scores: Vec<(SignConvention, f64)>,
}

/// Picks the sign triple under which the calibration spaces pass with the
/// smallest worst-case residual.
pub fn calibrate(spaces: &[StructuredSpace], cfg: &CheckConfig) -> Result<Calibration> {
    let mut scores = Vec::new();
    for signs in SignConvention::all() {
        let c = CheckConfig {
            sign_convention: signs,
            ..cfg.clone()
        };
        let mut worst = 0.0f64;
        for s in spaces {
            let report = check_space(s, &c)?;
            worst = worst.max(report.axioms.iter().filter(|a| a.name != "rank").map(|a| a.max_residual).fold(0.0, f64::max));
        }
        scores.push((signs, worst));
    }
    let chosen = scores
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(s, _)| *s)
        .expect("eight conventions");
    Ok(Calibration { chosen, scores })
}

// ---------------------------------------------------------------------
// Families.

/// Smallest acceptable convergence order of the fiber forms as `t -> 0`.
pub const MIN_SLOPE: f64 = 0.9;
/// Deviations at or below this are treated as exactly zero when fitting
/// the convergence order.
pub const NEGLIGIBLE_DEVIATION: f64 = 1e-12;

/// Metrics tracked per `t`, in CSV order.
pub const FAMILY_METRICS: [&str; 4] = ["form_vs_limit", "B1", "B2", "moment_continuity"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub t: f64,
    pub metric: String,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberReport {
    pub t: f64,
    pub report: Report,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: String,
    pub group: String,
    pub t_domain: (f64, f64),
    pub t_grid: Vec<f64>,
    pub fibers: Vec<FiberReport>,
    pub convergence: Vec<ConvergenceRow>,
    /// Fitted order of `max |form(t) - form(0)|` in `t`; `None` when every
    /// deviation is negligible.
    pub slope: Option<f64>,
    pub pass: bool,
}

impl FamilyReport {
    pub fn fiber(&self, t: f64) -> Option<&Report> {
        self.fibers.iter().find(|f| f.t == t).map(|f| &f.report)
    }

    pub fn rows(&self, metric: &str) -> Vec<&ConvergenceRow> {
        self.convergence.iter().filter(|r| r.metric == metric).collect()
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Runs `f` on a fresh chart sample, resampling on domain errors.
fn with_family_sample<T>(
    family: &DeformationFamily,
    cfg: &CheckConfig,
    index: usize,
    mut f: impl FnMut(&Point, &DVector<f64>) -> Result<T>,
) -> Result<T> {
    let mut rng = cfg.rng(index);
    let mut last = None;
    for _ in 0..=RETRY_BUDGET {
        let attempt = family
            .sample_point(&mut rng)
            .and_then(|base| {
                let u = random_offset(&mut rng, family.dim());
                f(&base, &u)
            });
        match attempt {
            Ok(v) => return Ok(v),
            Err(e) if e.is_domain() => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Domain("sample retries exhausted".into())))
}

fn summarize(values: &[f64]) -> (f64, f64) {
    let max = values.iter().copied().fold(0.0, f64::max);
    let mean = if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    (max, mean)
}

/// Per-`t` axiom suites (quasi-Hamiltonian for `t != 0` under the pairing
/// `(1/t) < , >`, Hamiltonian at `0`), the convergence table of fiber
/// forms and chart moments towards `t = 0`, and the fitted order.
pub fn check_family(family: &DeformationFamily, t_grid: &[f64], cfg: &CheckConfig) -> Result<FamilyReport> {
    cfg.validate()?;
    if !t_grid.contains(&0.0) || !t_grid.contains(&1.0) {
        return Err(Error::Usage("the t grid must contain 0 and 1".into()));
    }
    for t in t_grid {
        if !family.contains_t(*t) {
            let (lo, hi) = family.t_domain();
            return Err(Error::Precondition {
                reason: format!("grid point outside the family's domain ({lo}, {hi})"),
                t: *t,
            });
        }
    }

    let mut fibers = Vec::new();
    let mut convergence = Vec::new();
    let mut deviations = Vec::new();
    for &t in t_grid {
        let fiber = family.fiber(t)?;
        let report = check_space(&fiber, cfg)?;
        let per_sample: Vec<(f64, f64)> = (0..cfg.samples)
            .into_par_iter()
            .map(|i| {
                with_family_sample(family, cfg, i, |base, u| {
                    let form_t = family.local(base, u, t)?.form;
                    let form_0 = family.local(base, u, 0.0)?.form;
                    let p = family.embed(base, u)?;
                    let m_t = family.moment_chart(&p, t)?;
                    let m_0 = family.moment_chart(&p, 0.0)?;
                    let dm = m_t
                        .iter()
                        .zip(&m_0)
                        .map(|(a, b)| (a - b).amax())
                        .fold(0.0, f64::max);
                    let df = if form_t.is_empty() { 0.0 } else { (form_t - form_0).amax() };
                    Ok((df, dm))
                })
            })
            .collect::<Result<_>>()?;
        let (form_max, form_mean) = summarize(&per_sample.iter().map(|p| p.0).collect::<Vec<_>>());
        let (mom_max, mom_mean) = summarize(&per_sample.iter().map(|p| p.1).collect::<Vec<_>>());
        let closed = report.axiom("B1").or(report.axiom("closedness"));
        let moment = report.axiom("B2").or(report.axiom("moment_condition"));
        let row = |metric: &str, max: f64, mean: f64| ConvergenceRow {
            t,
            metric: metric.to_string(),
            max_residual: max,
            mean_residual: mean,
            samples: cfg.samples,
        };
        convergence.push(row("form_vs_limit", form_max, form_mean));
        convergence.push(row(
            "B1",
            closed.map_or(0.0, |a| a.max_residual),
            closed.map_or(0.0, |a| a.mean_residual),
        ));
        convergence.push(row(
            "B2",
            moment.map_or(0.0, |a| a.max_residual),
            moment.map_or(0.0, |a| a.mean_residual),
        ));
        convergence.push(row("moment_continuity", mom_max, mom_mean));
        if t != 0.0 {
            deviations.push((t.abs(), form_max));
        }
        fibers.push(FiberReport { t, report });
    }

    let significant: Vec<(f64, f64)> = deviations
        .iter()
        .copied()
        .filter(|(_, d)| *d > NEGLIGIBLE_DEVIATION)
        .collect();
    let slope = fit_log_slope(&significant);
    let converges = match slope {
        Some(s) => s >= MIN_SLOPE,
        None => significant.is_empty(),
    };
    let pass = converges && fibers.iter().all(|f| f.report.pass);
    Ok(FamilyReport {
        family: family.name(),
        group: family.group_label(),
        t_domain: family.t_domain(),
        t_grid: t_grid.to_vec(),
        fibers,
        convergence,
        slope,
        pass,
    })
}

/// Largest `|omega_a(x, y) - omega_b(x, y)|` between the fibers of
/// `fuse_family(family, pair)` and the internal fusions of the fibers of
/// `family`, over `samples` chart points and `pairs` random tangent pairs,
/// per `t`.
pub fn fusion_commutation(
    family: &DeformationFamily,
    pair: (usize, usize),
    t_grid: &[f64],
    samples: usize,
    pairs: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let fused = fuse_family(family, pair)?;
    let cfg = CheckConfig {
        samples,
        seed,
        ..Default::default()
    };
    t_grid
        .iter()
        .map(|&t| {
            let direct = fused.fiber(t)?;
            let via = internal_fuse(&family.fiber(t)?, pair)?;
            let worst: Vec<f64> = (0..samples)
                .into_par_iter()
                .map(|i| {
                    // Tangent pairs come from a stream separate from the
                    // point samples.
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
                    rng.set_stream(i as u64);
                    let dim = family.dim();
                    with_family_sample(family, &cfg, i, |base, u| {
                        let a = direct.form(base, u)?;
                        let b = via.form(base, u)?;
                        let mut worst = 0.0f64;
                        for _ in 0..pairs {
                            let x = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
                            let y = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
                            let d = (x.transpose() * (&a - &b) * y)[(0, 0)];
                            worst = worst.max(d.abs());
                        }
                        Ok(worst)
                    })
                })
                .collect::<Result<_>>()?;
            Ok((t, worst.into_iter().fold(0.0, f64::max)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{conj_class_space, double_space, orbit_space, tstar_space};

    fn cfg(samples: usize) -> CheckConfig {
        CheckConfig {
            samples,
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn chi_is_alternating_and_vanishes_on_abelian() {
        let m = GroupModel::su2();
        let a = m.sample_algebra(1, 1.0);
        let b = m.sample_algebra(2, 1.0);
        assert!(cartan_chi(&m, &a, &a, &b).abs() < 1e-15);
        assert!((cartan_chi(&m, &a, &b, &a)).abs() < 1e-15);
        let t = GroupModel::t2();
        assert_eq!(cartan_chi(&t, &t.sample_algebra(1, 1.0), &t.sample_algebra(2, 1.0), &t.sample_algebra(3, 1.0)), 0.0);
    }

    #[test]
    fn chi_on_su2_basis() {
        // [e2, e3] = e1 and <e1, e1> = -2 tr(e1 e1) = 1 under the default
        // pairing scale, so chi(e1, e2, e3) = 1/2.
        let m = GroupModel::su2();
        let b = m.basis();
        let expected = 0.5 * m.pair(&b[0], &b[0]);
        assert!((cartan_chi(&m, &b[0], &b[1], &b[2]) - expected).abs() < 1e-14);
    }

    #[test]
    fn default_convention_passes_double_and_tstar() {
        for m in [GroupModel::su2(), GroupModel::so3(), GroupModel::t2()] {
            let r = check_qh(&double_space(&m), &cfg(8)).unwrap();
            assert!(r.pass, "double {}: {:?}", m.name(), r.axioms);
            let r = check_ham(&tstar_space(&m), &cfg(8)).unwrap();
            assert!(r.pass, "tstar {}: {:?}", m.name(), r.axioms);
        }
    }

    #[test]
    fn calibration_selects_default() {
        let m = GroupModel::su2();
        let cal = calibrate(&[double_space(&m), tstar_space(&m)], &cfg(4)).unwrap();
        assert_eq!(cal.chosen, SignConvention::default());
    }

    #[test]
    fn orbits_pass_with_reversed_moment_signs() {
        let m = GroupModel::su2();
        let x = m.from_coords(&DVector::from_vec(vec![0.7, 0.3, 0.2]));
        let reversed = CheckConfig {
            sign_convention: SignConvention {
                moment_sign_qh: -1.0,
                moment_sign_ham: -1.0,
                chi_sign: 1.0,
            },
            ..cfg(8)
        };
        let c = check_qh(&conj_class_space(&m, &m.exp(&x).unwrap()).unwrap(), &reversed).unwrap();
        assert!(c.pass, "{:?}", c.axioms);
        let o = check_ham(&orbit_space(&m, &x).unwrap(), &reversed).unwrap();
        assert!(o.pass, "{:?}", o.axioms);
    }

    #[test]
    fn reports_are_deterministic() {
        let m = GroupModel::so3();
        let s = double_space(&m);
        let a = check_qh(&s, &cfg(6)).unwrap();
        let b = check_qh(&s, &cfg(6)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn abelian_double_residuals_are_exact() {
        let m = GroupModel::t2();
        let r = check_qh(&double_space(&m), &cfg(8)).unwrap();
        assert!(r.max_of(&["B1", "B2", "equivariance"]) < 1e-12, "{:?}", r.axioms);
    }

    #[test]
    fn point_orbits_pass_vacuously() {
        let m = GroupModel::su2();
        let r = check_ham(&orbit_space(&m, &m.zero()).unwrap(), &cfg(4)).unwrap();
        assert!(r.pass);
        assert_eq!(r.ranks.max_rank, 0);
    }

    #[test]
    fn flavor_mismatch_is_rejected() {
        let m = GroupModel::su2();
        assert!(check_ham(&double_space(&m), &cfg(1)).is_err());
        assert!(check_qh(&tstar_space(&m), &cfg(1)).is_err());
    }

    #[test]
    fn slope_fit_recovers_power_laws() {
        let pts: Vec<(f64, f64)> = [1.0, 0.5, 0.25, 0.125].iter().map(|t: &f64| (*t, 3.0 * t * t)).collect();
        assert!((fit_log_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit_log_slope(&pts[..1]).is_none());
    }

    #[test]
    fn family_grid_must_contain_endpoints() {
        let f = crate::families::double_family(&GroupModel::su2());
        assert!(check_family(&f, &[1.0, 0.5], &cfg(2)).is_err());
        assert!(check_family(&f, &[0.0, 0.5], &cfg(2)).is_err());
        assert!(check_family(&f, &[0.0, 1.0, 3.0], &cfg(2)).is_err());
    }

    #[test]
    fn double_family_converges() {
        let f = crate::families::double_family(&GroupModel::su2());
        let grid = [1.0, 0.5, 0.25, 0.125, 0.0];
        let r = check_family(&f, &grid, &cfg(4)).unwrap();
        assert!(r.pass, "{:?}", r.convergence);
        assert!(r.slope.unwrap() >= MIN_SLOPE);
        assert_eq!(r.convergence.len(), grid.len() * FAMILY_METRICS.len());
    }

    #[test]
    fn abelian_family_deviations_vanish() {
        let f = crate::families::double_family(&GroupModel::t2());
        let r = check_family(&f, &[1.0, 0.5, 0.0], &cfg(4)).unwrap();
        assert!(r.slope.is_none());
        assert!(r.rows("form_vs_limit").iter().all(|row| row.max_residual <= 1e-12));
        assert!(r.pass);
    }

    #[test]
    fn kernel_condition_on_a_degenerate_class() {
        // f = exp(pi e1) has Ad_f = diag(1, -1, -1): its class is tangent to
        // ker(Ad_f + 1), so the form vanishes there and only B3 constrains it.
        let m = GroupModel::su2();
        let f = m.exp(&m.basis()[0].scale(std::f64::consts::PI)).unwrap();
        let space = conj_class_space(&m, &f).unwrap();
        let r = check_qh(&space, &cfg(4)).unwrap();
        assert_eq!(r.ranks.kernel_points, 4);
        assert_eq!(r.ranks.max_rank, 0);
        assert!(r.axiom("B3").unwrap().pass && r.axiom("rank").unwrap().pass);
    }
}
