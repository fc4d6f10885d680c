//! Hamiltonian deformation families: the double family `G x g x R`, the
//! conjugacy-class family over an adjoint orbit, their fusions, and the
//! moduli families.
//!
//! A family is presented on one chart for all `t`. Points carry their
//! chart-moment coordinates `m` directly; on the fiber over `t != 0` the
//! group-valued moment is `exp(t m)` and the pairing is rescaled by `1/t`,
//! while the fiber over `0` is Hamiltonian with moment `m`.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::charts::{antisymmetrize, wedge_pair_matrix};
use crate::defspace::{mul_chart_coords, theta_hat_matrix, ChartPoint, Side};
use crate::error::{Error, Result};
use crate::liegroup::{factorial, series_matrix, AlgebraVector, GroupElement, GroupModel};
use crate::spaces::{
    adjoint_orbit_embed, adjoint_orbit_local, blocks, cotangent_act, cotangent_pieces, orbit_transversal, Component, Flavor,
    LocalData, OrbitKind, Point, SlotChart, Slot, SpaceModel, StructuredSpace,
};

/// Below this `|t|` the difference quotients use their `t = 0` values.
pub const SMALL_T: f64 = 1e-6;
/// Largest `|t|` any family domain extends to.
pub const T_CAP: f64 = 16.0;
/// Half-width of the double family's parameter interval.
pub const DOUBLE_T_RADIUS: f64 = 2.0;
/// Coordinate scale of sampled momenta in family charts.
pub const FAMILY_MOMENTUM_SCALE: f64 = 0.3;
/// Grid points used to confirm invertibility of `dexp_{tx}` on `[0, 1]`.
pub const PRECONDITION_GRID: usize = 64;

/// Everything the checks need from a family at one chart point and `t`.
#[derive(Clone, Debug)]
pub struct FamilyLocal {
    pub form: DMatrix<f64>,
    /// Chart-moment coordinates per factor.
    pub moment_chart: Vec<DVector<f64>>,
    /// Per factor, `algebra dim x chart dim` differential of the chart moment.
    pub dmoment_chart: Vec<DMatrix<f64>>,
    pub generators: Vec<DMatrix<f64>>,
}

pub trait FamilyModel: Send + Sync {
    fn name(&self) -> String;
    fn factors(&self) -> Vec<GroupModel>;
    /// Open interval of admissible `t`.
    fn t_domain(&self) -> (f64, f64);
    fn dim(&self) -> usize;
    fn components(&self) -> usize;
    fn sample_point(&self, rng: &mut dyn RngCore) -> Result<Point>;
    fn embed(&self, base: &[Component], u: &DVector<f64>) -> Result<Point>;
    fn local(&self, base: &[Component], u: &DVector<f64>, t: f64) -> Result<FamilyLocal>;
    /// Chart-moment coordinates per factor at a point.
    fn moment_chart(&self, p: &[Component], t: f64) -> Result<Vec<DVector<f64>>>;
    /// The action on chart points; it does not depend on `t`.
    fn act(&self, factor: usize, g: &GroupElement, p: &[Component]) -> Result<Point>;
}

#[derive(Clone)]
pub struct DeformationFamily(Arc<dyn FamilyModel>);

impl Deref for DeformationFamily {
    type Target = dyn FamilyModel;
    fn deref(&self) -> &Self::Target {
        self.0.as_ref()
    }
}

impl fmt::Debug for DeformationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeformationFamily")
            .field("name", &self.name())
            .field("t_domain", &self.t_domain())
            .field("dim", &self.dim())
            .finish()
    }
}

impl DeformationFamily {
    pub fn new(model: impl FamilyModel + 'static) -> Self {
        Self(Arc::new(model))
    }

    pub fn contains_t(&self, t: f64) -> bool {
        let (lo, hi) = self.t_domain();
        t > lo && t < hi
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if self.contains_t(t) {
            Ok(())
        } else {
            let (lo, hi) = self.t_domain();
            Err(Error::Precondition {
                reason: format!("t outside the family's domain ({lo}, {hi})"),
                t,
            })
        }
    }

    /// The structured space over `t`.
    pub fn fiber(&self, t: f64) -> Result<StructuredSpace> {
        self.check_t(t)?;
        Ok(StructuredSpace::new(FiberSpace {
            family: self.clone(),
            t,
        }))
    }

    /// `mu_hat` in deformation-space chart coordinates, one per factor.
    pub fn mu_hat_chart(&self, p: &[Component], t: f64) -> Result<Vec<ChartPoint>> {
        self.check_t(t)?;
        let factors = self.factors();
        Ok(self
            .moment_chart(p, t)?
            .iter()
            .zip(&factors)
            .map(|(m, model)| ChartPoint::new(model.from_coords(m), t))
            .collect())
    }

    pub fn group_label(&self) -> String {
        let mut names: Vec<&str> = self.factors().iter().map(|m| m.name()).collect();
        names.dedup();
        names.join(" x ")
    }
}

/// The fiber of a family over `t`.
struct FiberSpace {
    family: DeformationFamily,
    t: f64,
}

impl FiberSpace {
    fn moment_from_chart(&self, model: &GroupModel, m: &DVector<f64>) -> Result<Component> {
        if self.t == 0.0 {
            Ok(Component::Algebra(model.from_coords(m)))
        } else {
            Ok(Component::Group(model.exp_coords(&(m * self.t))?))
        }
    }
}

impl SpaceModel for FiberSpace {
    fn name(&self) -> String {
        format!("{}[t={}]", self.family.name(), self.t)
    }

    fn flavor(&self) -> Flavor {
        if self.t == 0.0 {
            Flavor::Hamiltonian
        } else {
            Flavor::QuasiHamiltonian
        }
    }

    fn factors(&self) -> Vec<GroupModel> {
        self.family.factors()
    }

    fn pairing_rescale(&self) -> f64 {
        if self.t == 0.0 {
            1.0
        } else {
            1.0 / self.t
        }
    }

    fn dim(&self) -> usize {
        self.family.dim()
    }

    fn components(&self) -> usize {
        self.family.components()
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Result<Point> {
        self.family.sample_point(rng)
    }

    fn embed(&self, base: &[Component], u: &DVector<f64>) -> Result<Point> {
        self.family.embed(base, u)
    }

    fn local(&self, base: &[Component], u: &DVector<f64>) -> Result<LocalData> {
        let l = self.family.local(base, u, self.t)?;
        let factors = self.family.factors();
        let mut moment = Vec::new();
        let mut dmoment = Vec::new();
        for ((model, m), dm) in factors.iter().zip(&l.moment_chart).zip(&l.dmoment_chart) {
            moment.push(self.moment_from_chart(model, m)?);
            if self.t == 0.0 {
                dmoment.push(dm.clone());
            } else {
                dmoment.push(model.dexp_matrix(&(m * self.t)) * dm * self.t);
            }
        }
        Ok(LocalData {
            form: l.form,
            moment,
            dmoment,
            generators: l.generators,
        })
    }

    fn moment(&self, p: &[Component]) -> Result<Vec<Component>> {
        let factors = self.family.factors();
        self.family
            .moment_chart(p, self.t)?
            .iter()
            .zip(&factors)
            .map(|(m, model)| self.moment_from_chart(model, m))
            .collect()
    }

    fn act(&self, factor: usize, g: &GroupElement, p: &[Component]) -> Result<Point> {
        self.family.act(factor, g, p)
    }
}

// ---------------------------------------------------------------------
// Difference quotients, evaluated from their power series.

/// `sinh(M) / M = sum_k M^{2k} / (2k+1)!`.
fn sinhc(m: &DMatrix<f64>) -> DMatrix<f64> {
    series_matrix(&(m * m), |k| 1.0 / factorial(2 * k + 1))
}

/// `(Ad_{e^{-tx}} - Ad_{e^{tx}}) / 2t`, equal to `-ad_x` at `t = 0`.
pub fn double_a(model: &GroupModel, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
    let k = model.ad_matrix(x);
    if t.abs() < SMALL_T {
        return -k;
    }
    -(&k * sinhc(&(&k * t)))
}

/// `dexp_{tx} + Ad_{e^{tx}} dexp_{tx}`, equal to `2` at `t = 0`.
pub fn double_b(model: &GroupModel, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
    let n = model.dim();
    if t.abs() < SMALL_T {
        return DMatrix::identity(n, n) * 2.0;
    }
    sinhc(&(model.ad_matrix(x) * t)) * 2.0
}

/// `(Ad_{e^{ty}} - Ad_{e^{-ty}}) / 2t`, equal to `ad_y` at `t = 0`.
pub fn conj_c(model: &GroupModel, y: &DVector<f64>, t: f64) -> DMatrix<f64> {
    let k = model.ad_matrix(y);
    if t.abs() < SMALL_T {
        return k;
    }
    &k * sinhc(&(&k * t))
}

// ---------------------------------------------------------------------
// The double family.

#[derive(Clone, Debug)]
struct DoubleFamily {
    model: GroupModel,
    chart: SlotChart,
}

/// Deforms the double `D(G)` (fibers `t != 0`, with `beta = exp(t x)`)
/// into `T*G` (fiber `0`).
pub fn double_family(model: &GroupModel) -> DeformationFamily {
    DeformationFamily::new(DoubleFamily {
        model: model.clone(),
        chart: SlotChart::new(model, &[Slot::Group, Slot::Algebra]),
    })
}

impl DoubleFamily {
    /// `<u1, A_t u2> + 1/2 (<u1, B_t v2> - <u2, B_t v1>)` on natural
    /// tangents `(u, v)`.
    fn natural_form(model: &GroupModel, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
        let n = model.dim();
        let p = model.pairing_matrix();
        let a = double_a(model, x, t);
        let b = double_b(model, x, t);
        let uu = p * a;
        let uv = p * &b * 0.5;
        let vu = -(b.transpose() * p) * 0.5;
        blocks(n, 2, 2, &[(0, 0, uu), (0, 1, uv), (1, 0, vu)])
    }
}

impl FamilyModel for DoubleFamily {
    fn name(&self) -> String {
        "double_family".into()
    }

    fn factors(&self) -> Vec<GroupModel> {
        vec![self.model.clone(), self.model.clone()]
    }

    fn t_domain(&self) -> (f64, f64) {
        (-DOUBLE_T_RADIUS, DOUBLE_T_RADIUS)
    }

    fn dim(&self) -> usize {
        self.chart.dim()
    }

    fn components(&self) -> usize {
        2
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Result<Point> {
        Ok(vec![
            Component::Group(self.model.random_group(rng, 1.0)?),
            Component::Algebra(self.model.random_algebra(rng, FAMILY_MOMENTUM_SCALE)),
        ])
    }

    fn embed(&self, base: &[Component], u: &DVector<f64>) -> Result<Point> {
        self.chart.embed(base, u)
    }

    fn local(&self, base: &[Component], u: &DVector<f64>, t: f64) -> Result<FamilyLocal> {
        let m = &self.model;
        let p = self.embed(base, u)?;
        let alpha = p[0].as_group()?;
        let x = m.coords(p[1].as_algebra()?);
        let frame = self.chart.frame(u);
        let frame_inv = self.chart.frame_inverse(u)?;
        let form = antisymmetrize(&(frame.transpose() * Self::natural_form(m, &x, t) * &frame));
        let (dm, gens) = cotangent_pieces(m, alpha, &x);
        Ok(FamilyLocal {
            form,
            moment_chart: self.moment_chart(&p, t)?,
            dmoment_chart: dm.into_iter().map(|d| d * &frame).collect(),
            generators: gens.into_iter().map(|g| &frame_inv * g).collect(),
        })
    }

    fn moment_chart(&self, p: &[Component], _t: f64) -> Result<Vec<DVector<f64>>> {
        let m = &self.model;
        let a = p[0].as_group()?;
        let x = p[1].as_algebra()?;
        Ok(vec![m.coords(&m.adjoint(a, x)), -m.coords(x)])
    }

    fn act(&self, factor: usize, g: &GroupElement, p: &[Component]) -> Result<Point> {
        cotangent_act(&self.model, factor, g, p)
    }
}

// ---------------------------------------------------------------------
// The conjugacy-class family.

#[derive(Clone, Debug)]
struct ConjFamily {
    model: GroupModel,
    x: AlgebraVector,
    dim: usize,
    t_max: f64,
}

/// Smallest `t > 0` at which `dexp_{tx}` is singular, from the spectrum of
/// `ad_x`: singular exactly when `t lambda` is a nonzero multiple of
/// `2 pi i` for an eigenvalue `lambda`. Capped at [`T_CAP`].
pub fn first_singular_t(model: &GroupModel, x: &AlgebraVector) -> f64 {
    let k = model.ad_matrix(&model.coords(x));
    let scale = k.amax().max(1.0);
    let mut best = T_CAP;
    for lambda in k.complex_eigenvalues().iter() {
        if lambda.re.abs() <= 1e-10 * scale && lambda.im.abs() > 1e-12 {
            best = best.min(2.0 * std::f64::consts::PI / lambda.im.abs());
        }
    }
    best
}

/// Deforms the conjugacy class of `exp(x)` (fibers `t != 0`, class of
/// `exp(t x)`) into the adjoint orbit of `x` (fiber `0`).
pub fn conj_family(model: &GroupModel, x: &AlgebraVector) -> Result<DeformationFamily> {
    model.check_algebra(x)?;
    let t_max = first_singular_t(model, x);
    if t_max <= 1.0 {
        return Err(Error::Precondition {
            reason: "dexp_{tx} is singular inside [0, 1]".into(),
            t: t_max,
        });
    }
    for k in 0..=PRECONDITION_GRID {
        let t = k as f64 / PRECONDITION_GRID as f64;
        if !model.dexp_invertible(&x.scale(t)) {
            return Err(Error::Precondition {
                reason: "dexp_{tx} is not invertible on the grid over [0, 1]".into(),
                t,
            });
        }
    }
    let dim = orbit_transversal(model, OrbitKind::Adjoint, &Component::Algebra(x.clone()))?.len();
    Ok(DeformationFamily::new(ConjFamily {
        model: model.clone(),
        x: x.clone(),
        dim,
        t_max,
    }))
}

impl FamilyModel for ConjFamily {
    fn name(&self) -> String {
        "conjugacy_family".into()
    }

    fn factors(&self) -> Vec<GroupModel> {
        vec![self.model.clone()]
    }

    fn t_domain(&self) -> (f64, f64) {
        (-self.t_max, self.t_max)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn components(&self) -> usize {
        1
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Result<Point> {
        let g = self.model.random_group(rng, 1.0)?;
        Ok(vec![Component::Algebra(self.model.adjoint(&g, &self.x))])
    }

    fn embed(&self, base: &[Component], u: &DVector<f64>) -> Result<Point> {
        adjoint_orbit_embed(&self.model, base, u)
    }

    fn local(&self, base: &[Component], u: &DVector<f64>, t: f64) -> Result<FamilyLocal> {
        let m = &self.model;
        let (p, form, dm, gens) = adjoint_orbit_local(m, base, self.dim, u, |y| m.pairing_matrix() * conj_c(m, y, t))?;
        Ok(FamilyLocal {
            form,
            moment_chart: vec![m.coords(p.as_algebra()?)],
            dmoment_chart: vec![dm],
            generators: vec![gens],
        })
    }

    fn moment_chart(&self, p: &[Component], _t: f64) -> Result<Vec<DVector<f64>>> {
        Ok(vec![self.model.coords(p[0].as_algebra()?)])
    }

    fn act(&self, factor: usize, g: &GroupElement, p: &[Component]) -> Result<Point> {
        if factor != 0 {
            return Err(Error::Contract(format!("conjugacy family has 1 factor, got index {factor}")));
        }
        Ok(vec![Component::Algebra(self.model.adjoint(g, p[0].as_algebra()?))])
    }
}

// ---------------------------------------------------------------------
// Products and fusion of families.

#[derive(Clone, Debug)]
struct ProductFamily {
    parts: Vec<DeformationFamily>,
}

fn offsets(sizes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    for s in sizes {
        out.push(out.last().unwrap() + s);
    }
    out
}

impl ProductFamily {
    fn split<'a>(&self, p: &'a [Component]) -> Vec<&'a [Component]> {
        let off = offsets(self.parts.iter().map(|f| f.components()));
        (0..self.parts.len()).map(|k| &p[off[k]..off[k + 1]]).collect()
    }

    fn split_u(&self, u: &DVector<f64>) -> Vec<DVector<f64>> {
        let off = offsets(self.parts.iter().map(|f| f.dim()));
        (0..self.parts.len())
            .map(|k| u.rows(off[k], off[k + 1] - off[k]).into_owned())
            .collect()
    }
}

impl FamilyModel for ProductFamily {
    fn name(&self) -> String {
        self.parts.iter().map(|p| p.name()).collect::<Vec<_>>().join(" x ")
    }

    fn factors(&self) -> Vec<GroupModel> {
        self.parts.iter().flat_map(|p| p.factors()).collect()
    }

    fn t_domain(&self) -> (f64, f64) {
        self.parts.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), p| {
            let (a, b) = p.t_domain();
            (lo.max(a), hi.min(b))
        })
    }

    fn dim(&self) -> usize {
        self.parts.iter().map(|p| p.dim()).sum()
    }

    fn components(&self) -> usize {
        self.parts.iter().map(|p| p.components()).sum()
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Result<Point> {
        let mut out = Vec::new();
        for p in &self.parts {
            out.extend(p.sample_point(rng)?);
        }
        Ok(out)
    }

    fn embed(&self, base: &[Component], u: &DVector<f64>) -> Result<Point> {
        let mut out = Vec::new();
        for ((part, b), uk) in self.parts.iter().zip(self.split(base)).zip(self.split_u(u)) {
            out.extend(part.embed(b, &uk)?);
        }
        Ok(out)
    }

    fn local(&self, base: &[Component], u: &DVector<f64>, t: f64) -> Result<FamilyLocal> {
        let dim = self.dim();
        let off = offsets(self.parts.iter().map(|f| f.dim()));
        let mut form = DMatrix::zeros(dim, dim);
        let mut moment_chart = Vec::new();
        let mut dmoment_chart = Vec::new();
        let mut generators = Vec::new();
        for (k, ((part, b), uk)) in self.parts.iter().zip(self.split(base)).zip(self.split_u(u)).enumerate() {
            let l = part.local(b, &uk, t)?;
            let d = part.dim();
            form.view_mut((off[k], off[k]), (d, d)).copy_from(&l.form);
            moment_chart.extend(l.moment_chart);
            for a in l.dmoment_chart {
                let mut full = DMatrix::zeros(a.nrows(), dim);
                full.view_mut((0, off[k]), (a.nrows(), d)).copy_from(&a);
                dmoment_chart.push(full);
            }
            for g in l.generators {
                let mut full = DMatrix::zeros(dim, g.ncols());
                full.view_mut((off[k], 0), (d, g.ncols())).copy_from(&g);
                generators.push(full);
            }
        }
        Ok(FamilyLocal {
            form,
            moment_chart,
            dmoment_chart,
            generators,
        })
    }

    fn moment_chart(&self, p: &[Component], t: f64) -> Result<Vec<DVector<f64>>> {
        let mut out = Vec::new();
        for (part, q) in self.parts.iter().zip(self.split(p)) {
            out.extend(part.moment_chart(q, t)?);
        }
        Ok(out)
    }

    fn act(&self, factor: usize, g: &GroupElement, p: &[Component]) -> Result<Point> {
        let off = offsets(self.parts.iter().map(|f| f.factors().len()));
        let k = (0..self.parts.len())
            .find(|k| factor >= off[*k] && factor < off[k + 1])
            .ok_or_else(|| Error::Contract(format!("factor index {factor} out of range")))?;
        let mut out = Vec::new();
        for (idx, (part, q)) in self.parts.iter().zip(self.split(p)).enumerate() {
            if idx == k {
                out.extend(part.act(factor - off[k], g, q)?);
            } else {
                out.extend(q.iter().cloned());
            }
        }
        Ok(out)
    }
}

/// Fusion of factors `i`, `j` of a family, merged at position `i`.
#[derive(Clone, Debug)]
struct FusedFamily {
    inner: DeformationFamily,
    i: usize,
    j: usize,
    name: String,
}

/// Fuses factors `i` and `j` of `family`. On the fiber over `t != 0` the
/// form gains `(t/2) <theta_hat^L(m_i) dm_i, theta_hat^R(m_j) dm_j>`
/// (wedged), which is the quasi-Hamiltonian fusion term under the pairing
/// `(1/t) < , >`; over `0` it vanishes and the moments add.
pub fn fuse_family(family: &DeformationFamily, (i, j): (usize, usize)) -> Result<DeformationFamily> {
    let factors = family.factors();
    if i == j || i >= factors.len() || j >= factors.len() {
        return Err(Error::Contract(format!(
            "cannot fuse factors ({i}, {j}) of a family with {} factors",
            factors.len()
        )));
    }
    if factors[i] != factors[j] {
        return Err(Error::Contract(format!("factors {i} and {j} use different group models")));
    }
    Ok(DeformationFamily::new(FusedFamily {
        inner: family.clone(),
        i,
        j,
        name: format!("fused({})", family.name()),
    }))
}

impl FusedFamily {
    fn merged_index(&self) -> usize {
        if self.j < self.i {
            self.i - 1
        } else {
            self.i
        }
    }

    fn merge_list<T>(&self, items: Vec<T>, merged: T) -> Vec<T> {
        let mut rest: Vec<T> = items
            .into_iter()
            .enumerate()
            .filter(|(k, _)| *k != self.i && *k != self.j)
            .map(|(_, x)| x)
            .collect();
        rest.insert(self.merged_index(), merged);
        rest
    }

    fn model(&self) -> GroupModel {
        self.inner.factors()[self.i].clone()
    }

    fn inner_factors(&self, factor: usize) -> Vec<usize> {
        let m = self.merged_index();
        if factor == m {
            return vec![self.i, self.j];
        }
        let k = if factor > m { factor - 1 } else { factor };
        (0..self.inner.factors().len())
            .filter(|idx| *idx != self.i && *idx != self.j)
            .nth(k)
            .into_iter()
            .collect()
    }
}

/// The differential of the merged chart moment `M = (1/t) log(e^{t m_i} e^{t m_j})`.
fn merged_chart_differential(
    model: &GroupModel,
    m_i: &DVector<f64>,
    m_j: &DVector<f64>,
    merged: &DVector<f64>,
    dm_i: &DMatrix<f64>,
    dm_j: &DMatrix<f64>,
    t: f64,
) -> Result<DMatrix<f64>> {
    if t == 0.0 {
        return Ok(dm_i + dm_j);
    }
    let left = model.adjoint_matrix(&model.exp_coords(&(m_j * -t))?) * model.dexp_matrix(&(m_i * t)) * dm_i;
    let right = model.dexp_matrix(&(m_j * t)) * dm_j;
    Ok(model.dexp_inverse_matrix(&(merged * t))? * (left + right))
}

impl FamilyModel for FusedFamily {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn factors(&self) -> Vec<GroupModel> {
        let f = self.inner.factors();
        let merged = f[self.i].clone();
        self.merge_list(f, merged)
    }

    fn t_domain(&self) -> (f64, f64) {
        self.inner.t_domain()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn components(&self) -> usize {
        self.inner.components()
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Result<Point> {
        self.inner.sample_point(rng)
    }

    fn embed(&self, base: &[Component], u: &DVector<f64>) -> Result<Point> {
        self.inner.embed(base, u)
    }

    fn local(&self, base: &[Component], u: &DVector<f64>, t: f64) -> Result<FamilyLocal> {
        let l = self.inner.local(base, u, t)?;
        let model = self.model();
        let (i, j) = (self.i, self.j);
        let (m_i, m_j) = (&l.moment_chart[i], &l.moment_chart[j]);
        let (dm_i, dm_j) = (&l.dmoment_chart[i], &l.dmoment_chart[j]);

        let left = theta_hat_matrix(&model, Side::L, m_i, t)? * dm_i;
        let right = theta_hat_matrix(&model, Side::R, m_j, t)? * dm_j;
        let correction = wedge_pair_matrix(model.pairing_matrix(), &left, &right) * (0.5 * t);

        let merged = mul_chart_coords(&model, m_i, m_j, t, t)?;
        let dmerged = merged_chart_differential(&model, m_i, m_j, &merged, dm_i, dm_j, t)?;
        let gens = &l.generators[i] + &l.generators[j];
        Ok(FamilyLocal {
            form: &l.form + correction,
            moment_chart: self.merge_list(l.moment_chart, merged),
            dmoment_chart: self.merge_list(l.dmoment_chart, dmerged),
            generators: self.merge_list(l.generators, gens),
        })
    }

    fn moment_chart(&self, p: &[Component], t: f64) -> Result<Vec<DVector<f64>>> {
        let m = self.inner.moment_chart(p, t)?;
        let merged = mul_chart_coords(&self.model(), &m[self.i], &m[self.j], t, t)?;
        Ok(self.merge_list(m, merged))
    }

    fn act(&self, factor: usize, g: &GroupElement, p: &[Component]) -> Result<Point> {
        let inner = self.inner_factors(factor);
        if inner.is_empty() {
            return Err(Error::Contract(format!("factor index {factor} out of range")));
        }
        let mut q = p.to_vec();
        for k in inner {
            q = self.inner.act(k, g, &q)?;
        }
        Ok(q)
    }
}

/// Product of two families over a common `t`, then fusion of factor
/// `shared.0` of `f1` with factor `shared.1` of `f2`.
pub fn external_fuse_family(
    f1: &DeformationFamily,
    f2: &DeformationFamily,
    shared: (usize, usize),
) -> Result<DeformationFamily> {
    let n1 = f1.factors().len();
    let product = DeformationFamily::new(ProductFamily {
        parts: vec![f1.clone(), f2.clone()],
    });
    fuse_family(&product, (shared.0, n1 + shared.1))
}

/// The family deforming the moduli space of a genus-`genus` surface with
/// `boundaries + 1` boundary circles into its Hamiltonian counterpart.
/// Pieces are fused in the same order as [`crate::fusion::moduli_qh`].
pub fn moduli_family(model: &GroupModel, genus: usize, boundaries: usize) -> Result<DeformationFamily> {
    let piece = double_family(model);
    let handle = fuse_family(&piece, (0, 1))?;
    let mut pieces = std::iter::repeat(piece)
        .take(boundaries)
        .chain(std::iter::repeat(handle).take(genus));
    let mut acc = pieces
        .next()
        .ok_or_else(|| Error::Contract("moduli family needs genus + boundaries > 0".into()))?;
    for next in pieces {
        acc = external_fuse_family(&acc, &next, (0, 0))?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{double_space, tstar_space, ConjugacyClassSpace, DoubleSpace, OrbitSpace, TStarSpace};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn quotients_match_direct_formulas() {
        let m = GroupModel::su2();
        let x = DVector::from_vec(vec![0.5, -0.3, 0.8]);
        for t in [1.0, 0.5, -0.25, 1e-3] {
            let plus = m.adjoint_matrix(&m.exp_coords(&(&x * t)).unwrap());
            let minus = m.adjoint_matrix(&m.exp_coords(&(&x * -t)).unwrap());
            let a = (&minus - &plus) / (2.0 * t);
            assert!((double_a(&m, &x, t) - a).amax() < 1e-9);
            let c = (&plus - &minus) / (2.0 * t);
            assert!((conj_c(&m, &x, t) - c).amax() < 1e-9);
            let dexp = m.dexp_matrix(&(&x * t));
            let b = &dexp + &plus * &dexp;
            assert!((double_b(&m, &x, t) - b).amax() < 1e-12);
        }
    }

    #[test]
    fn quotients_are_continuous_at_zero() {
        let m = GroupModel::so3();
        let x = DVector::from_vec(vec![0.2, 0.9, -0.4]);
        let t = 2e-6;
        assert!((double_a(&m, &x, t) - double_a(&m, &x, 0.0)).amax() < 1e-10);
        assert!((double_b(&m, &x, t) - double_b(&m, &x, 0.0)).amax() < 1e-10);
        assert!((conj_c(&m, &x, t) - conj_c(&m, &x, 0.0)).amax() < 1e-10);
    }

    #[test]
    fn double_family_unit_fiber_is_the_double() {
        let m = GroupModel::su2();
        let f = double_family(&m);
        let fib = f.fiber(1.0).unwrap();
        let base = f.sample_point(&mut rng(1)).unwrap();
        let u = DVector::from_vec(vec![0.03, -0.02, 0.05, 0.1, -0.04, 0.02]);
        let p = f.embed(&base, &u).unwrap();
        let alpha = p[0].as_group().unwrap();
        let x = m.coords(p[1].as_algebra().unwrap());
        let beta = m.exp_coords(&x).unwrap();
        // Chart tangents in x map to theta^L(d beta) = dexp_x(dx).
        let frame = blocks(
            3,
            2,
            2,
            &[(0, 0, m.dexp_matrix(&u.rows(0, 3).into_owned())), (1, 1, m.dexp_matrix(&x))],
        );
        let expected = frame.transpose() * DoubleSpace::natural_form(&m, &beta) * &frame;
        let form = fib.form(&base, &u).unwrap();
        assert!((form - antisymmetrize(&expected)).amax() < 1e-10);
        let mu = fib.moment(&p).unwrap();
        let mu_d = double_space(&m).moment(&[Component::Group(alpha.clone()), Component::Group(beta)]).unwrap();
        assert!(mu[0].distance(&mu_d[0]) < 1e-12 && mu[1].distance(&mu_d[1]) < 1e-12);
    }

    #[test]
    fn double_family_zero_fiber_is_tstar() {
        let m = GroupModel::su2();
        let f = double_family(&m);
        let fib = f.fiber(0.0).unwrap();
        let t = tstar_space(&m);
        let base = f.sample_point(&mut rng(2)).unwrap();
        let u = DVector::from_vec(vec![0.03, -0.02, 0.05, 0.1, -0.04, 0.02]);
        assert!((fib.form(&base, &u).unwrap() - t.form(&base, &u).unwrap()).amax() < 1e-10);
        let p = f.embed(&base, &u).unwrap();
        let x = m.coords(p[1].as_algebra().unwrap());
        assert!((DoubleFamily::natural_form(&m, &x, 0.0) - TStarSpace::natural_form(&m, &x)).amax() < 1e-15);
    }

    #[test]
    fn conj_family_end_fibers() {
        let m = GroupModel::su2();
        let x = m.from_coords(&DVector::from_vec(vec![0.6, 0.3, 0.4]));
        let f = conj_family(&m, &x).unwrap();
        let y = DVector::from_vec(vec![0.1, -0.7, 0.3]);
        let w1 = m.pairing_matrix() * conj_c(&m, &y, 1.0);
        let f1 = m.exp_coords(&y).unwrap();
        assert!((w1 - ConjugacyClassSpace::natural_form(&m, &f1)).amax() < 1e-10);
        let w0 = m.pairing_matrix() * conj_c(&m, &y, 0.0);
        assert!((antisymmetrize(&w0) - antisymmetrize(&OrbitSpace::natural_form(&m, &y))).amax() < 1e-15);
        assert!(f.t_domain().1 > 1.0);
    }

    #[test]
    fn conj_family_rejects_large_elements() {
        let m = GroupModel::su2();
        let x = m.from_coords(&DVector::from_vec(vec![7.0, 0.0, 0.0]));
        match conj_family(&m, &x) {
            Err(Error::Precondition { t, .. }) => assert!((t - 2.0 * std::f64::consts::PI / 7.0).abs() < 1e-9),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn fiber_outside_domain_is_an_error() {
        let m = GroupModel::su2();
        assert!(double_family(&m).fiber(5.0).is_err());
    }

    #[test]
    fn abelian_families_are_t_independent() {
        let m = GroupModel::t2();
        let f = double_family(&m);
        let base = f.sample_point(&mut rng(3)).unwrap();
        let u = DVector::from_vec(vec![0.01, 0.02, -0.03, 0.04]);
        let f0 = f.local(&base, &u, 0.0).unwrap().form;
        for t in [1.0, 0.3] {
            assert!((f.local(&base, &u, t).unwrap().form - &f0).amax() < 1e-15);
        }
    }

    #[test]
    fn fused_family_fibers_are_fused_fibers() {
        let m = GroupModel::su2();
        let f = double_family(&m);
        let fused = fuse_family(&f, (0, 1)).unwrap();
        let base = f.sample_point(&mut rng(4)).unwrap();
        let u = DVector::from_vec(vec![0.03, -0.02, 0.05, 0.1, -0.04, 0.02]);
        for t in [1.0, 0.5, 0.125, 0.0] {
            let a = fused.fiber(t).unwrap().local(&base, &u).unwrap();
            let b = crate::fusion::internal_fuse(&f.fiber(t).unwrap(), (0, 1))
                .unwrap()
                .local(&base, &u)
                .unwrap();
            assert!((&a.form - &b.form).amax() < 1e-9, "t = {t}");
            assert!(a.moment[0].distance(&b.moment[0]) < 1e-9);
            assert!((&a.dmoment[0] - &b.dmoment[0]).amax() < 1e-9);
        }
    }

    #[test]
    fn moduli_family_shapes() {
        let m = GroupModel::su2();
        let f = moduli_family(&m, 1, 1).unwrap();
        assert_eq!(f.dim(), 12);
        assert_eq!(f.factors().len(), 2);
        assert!(moduli_family(&m, 0, 0).is_err());
        assert_eq!(moduli_family(&m, 0, 1).unwrap().name(), "double_family");
    }
}
