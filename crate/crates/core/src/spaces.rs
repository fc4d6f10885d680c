//! Structured spaces: a chart-presented manifold with a group action, a
//! 2-form and a moment map, in quasi-Hamiltonian (group-valued moment) or
//! Hamiltonian (algebra-valued moment) flavor.
//!
//! Four concrete spaces live here: the double `G x G`, the cotangent bundle
//! `T*G = G x g` in left trivialization, conjugacy classes and adjoint
//! orbits. Everything is evaluated in the coordinate frame of a chart
//! centered at a base point; tangents at group components are converted to
//! and from their left-trivialized (`theta^L`) form through `dexp`.
//!
//! Generating vector fields follow the action directly:
//! `X_v(p) = d/ds|_0 exp(s v) . p`.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::charts::{antisymmetrize, check_domain, Chart, FnTwoForm, GROUP_CHART_RADIUS};
use crate::error::{Error, Result};
use crate::liegroup::{AlgebraVector, GroupElement, GroupModel};

/// Residual threshold for accepting a transversal direction of an orbit
/// chart.
pub const TRANSVERSAL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    QuasiHamiltonian,
    Hamiltonian,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flavor::QuasiHamiltonian => f.write_str("quasi-Hamiltonian"),
            Flavor::Hamiltonian => f.write_str("Hamiltonian"),
        }
    }
}

/// One component of a point, or one moment value.
#[derive(Clone, Debug, PartialEq)]
pub enum Component {
    Group(GroupElement),
    Algebra(AlgebraVector),
}

impl Component {
    pub fn distance(&self, other: &Component) -> f64 {
        match (self, other) {
            (Component::Group(a), Component::Group(b)) => a.distance(b),
            (Component::Algebra(a), Component::Algebra(b)) => (&a.mat - &b.mat).norm(),
            _ => f64::INFINITY,
        }
    }

    pub fn as_group(&self) -> Result<&GroupElement> {
        match self {
            Component::Group(g) => Ok(g),
            Component::Algebra(_) => Err(Error::Contract("expected a group component".into())),
        }
    }

    pub fn as_algebra(&self) -> Result<&AlgebraVector> {
        match self {
            Component::Algebra(x) => Ok(x),
            Component::Group(_) => Err(Error::Contract("expected an algebra component".into())),
        }
    }
}

pub type Point = Vec<Component>;

pub fn point_distance(p: &[Component], q: &[Component]) -> f64 {
    if p.len() != q.len() {
        return f64::INFINITY;
    }
    p.iter().zip(q).map(|(a, b)| a.distance(b)).sum()
}

/// Everything the axiom checks need at one chart point.
#[derive(Clone, Debug)]
pub struct LocalData {
    /// `omega(d_i, d_j)` in the coordinate frame.
    pub form: DMatrix<f64>,
    pub moment: Vec<Component>,
    /// Per factor, `algebra dim x chart dim`: column `k` holds the
    /// coordinates of `theta^L(d mu(d_k))` (quasi-Hamiltonian) or
    /// `d nu(d_k)` (Hamiltonian).
    pub dmoment: Vec<DMatrix<f64>>,
    /// Per factor, `chart dim x algebra dim`: column `i` holds the chart
    /// coordinates of the generating vector field of basis element `i`.
    pub generators: Vec<DMatrix<f64>>,
}

/// Behavior shared by every structured space.
pub trait SpaceModel: Send + Sync {
    fn name(&self) -> String;
    fn flavor(&self) -> Flavor;
    /// Group models of the acting product group, one per factor.
    fn factors(&self) -> Vec<GroupModel>;
    /// Multiplier of the ambient pairing used by this space's axioms.
    fn pairing_rescale(&self) -> f64 {
        1.0
    }
    fn dim(&self) -> usize;
    /// Number of components of a point.
    fn components(&self) -> usize;
    fn domain_radius(&self) -> f64 {
        GROUP_CHART_RADIUS
    }
    fn sample_point(&self, rng: &mut dyn RngCore) -> Result<Point>;
    fn embed(&self, base: &[Component], u: &DVector<f64>) -> Result<Point>;
    fn local(&self, base: &[Component], u: &DVector<f64>) -> Result<LocalData>;
    fn form(&self, base: &[Component], u: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.local(base, u)?.form)
    }
    fn moment(&self, p: &[Component]) -> Result<Vec<Component>>;
    fn act(&self, factor: usize, g: &GroupElement, p: &[Component]) -> Result<Point>;
}

/// A shared handle to a [`SpaceModel`].
#[derive(Clone)]
pub struct StructuredSpace(Arc<dyn SpaceModel>);

impl StructuredSpace {
    pub fn new(model: impl SpaceModel + 'static) -> Self {
        Self(Arc::new(model))
    }

    pub fn from_arc(model: Arc<dyn SpaceModel>) -> Self {
        Self(model)
    }

    /// The chart centered at `base`.
    pub fn chart(&self, base: Point) -> Chart<Point> {
        let space = self.clone();
        Chart::new(self.dim(), self.domain_radius(), move |u| space.embed(&base, u))
    }

    /// The 2-form in the chart centered at `base`.
    pub fn two_form<'a>(&'a self, base: &'a [Component]) -> FnTwoForm<impl Fn(&DVector<f64>) -> Result<DMatrix<f64>> + 'a> {
        FnTwoForm::new(self.dim(), move |u: &DVector<f64>| self.form(base, u))
    }

    /// Name of the acting group(s), e.g. `su2` or `su2 x so3`.
    pub fn group_label(&self) -> String {
        let mut names: Vec<&str> = self.factors().iter().map(|m| m.name()).collect();
        names.dedup();
        if names.is_empty() {
            "trivial".to_string()
        } else {
            names.join(" x ")
        }
    }
}

impl Deref for StructuredSpace {
    type Target = dyn SpaceModel;
    fn deref(&self) -> &Self::Target {
        self.0.as_ref()
    }
}

impl fmt::Debug for StructuredSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StructuredSpace")
            .field("name", &self.name())
            .field("flavor", &self.flavor())
            .field("dim", &self.dim())
            .finish()
    }
}

// ---------------------------------------------------------------------
// Product charts: each component is a group element (chart g0 exp(U)) or
// an algebra element (chart x0 + U).

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Slot {
    Group,
    Algebra,
}

#[derive(Clone, Debug)]
pub(crate) struct SlotChart {
    pub model: GroupModel,
    pub slots: Vec<Slot>,
}

impl SlotChart {
    pub fn new(model: &GroupModel, slots: &[Slot]) -> Self {
        Self {
            model: model.clone(),
            slots: slots.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.model.dim() * self.slots.len()
    }

    fn block(&self, u: &DVector<f64>, s: usize) -> DVector<f64> {
        let n = self.model.dim();
        u.rows(s * n, n).into_owned()
    }

    pub fn embed(&self, base: &[Component], u: &DVector<f64>) -> Result<Point> {
        check_domain(u, GROUP_CHART_RADIUS)?;
        self.slots
            .iter()
            .enumerate()
            .map(|(s, slot)| {
                let c = self.block(u, s);
                Ok(match slot {
                    Slot::Group => Component::Group(base[s].as_group()?.mul(&self.model.exp_coords(&c)?)),
                    Slot::Algebra => {
                        let x = self.model.coords(base[s].as_algebra()?) + c;
                        Component::Algebra(self.model.from_coords(&x))
                    }
                })
            })
            .collect()
    }

    /// Columns are the natural (left-trivialized / linear) coordinates of the
    /// coordinate vector fields at `u`.
    pub fn frame(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let n = self.model.dim();
        let total = self.dim();
        let mut f = DMatrix::zeros(total, total);
        for (s, slot) in self.slots.iter().enumerate() {
            let block = match slot {
                Slot::Group => self.model.dexp_matrix(&self.block(u, s)),
                Slot::Algebra => DMatrix::identity(n, n),
            };
            f.view_mut((s * n, s * n), (n, n)).copy_from(&block);
        }
        f
    }

    pub fn frame_inverse(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.frame(u)
            .try_inverse()
            .ok_or_else(|| Error::Domain("chart frame is singular".into()))
    }
}

/// Builds a `rows x cols` block matrix from `n x n` blocks.
pub(crate) fn blocks(n: usize, rows: usize, cols: usize, entries: &[(usize, usize, DMatrix<f64>)]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows * n, cols * n);
    for (r, c, b) in entries {
        m.view_mut((r * n, c * n), (n, n)).copy_from(b);
    }
    m
}

// ---------------------------------------------------------------------
// Orbit charts.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum OrbitKind {
    /// Conjugacy class in the group.
    Conjugacy,
    /// Adjoint orbit in the algebra.
    Adjoint,
}

/// Map from a generator `v` to the natural coordinates of `X_v` at `p`:
/// `(Ad_{f^{-1}} - 1) v` on a conjugacy class (left-trivialized), `[v, y]`
/// on an adjoint orbit.
pub(crate) fn orbit_tangent_map(model: &GroupModel, kind: OrbitKind, p: &Component) -> Result<DMatrix<f64>> {
    let d = model.dim();
    Ok(match kind {
        OrbitKind::Conjugacy => model.adjoint_matrix(&p.as_group()?.inverse()) - DMatrix::identity(d, d),
        OrbitKind::Adjoint => -model.ad_matrix(&model.coords(p.as_algebra()?)),
    })
}

/// Basis indices whose generating fields are transverse to the stabilizer
/// at `p`, by Gram–Schmidt on their images.
pub(crate) fn orbit_transversal(model: &GroupModel, kind: OrbitKind, p: &Component) -> Result<Vec<usize>> {
    let j = orbit_tangent_map(model, kind, p)?;
    let mut accepted: Vec<DVector<f64>> = Vec::new();
    let mut out = Vec::new();
    for i in 0..model.dim() {
        let mut r = j.column(i).into_owned();
        for q in &accepted {
            let proj = r.dot(q);
            r -= q * proj;
        }
        let norm = r.norm();
        if norm > TRANSVERSAL_TOL {
            accepted.push(r / norm);
            out.push(i);
        }
    }
    Ok(out)
}

fn transversal_element(model: &GroupModel, transversal: &[usize], u: &DVector<f64>) -> DVector<f64> {
    let mut s = DVector::zeros(model.dim());
    for (k, idx) in transversal.iter().enumerate() {
        s[*idx] += u[k];
    }
    s
}

/// `exp(S) f exp(-S)` or `Ad_{exp S} y` with `S = sum u_k b_{c_k}`.
pub(crate) fn orbit_embed(
    model: &GroupModel,
    kind: OrbitKind,
    base: &Component,
    transversal: &[usize],
    u: &DVector<f64>,
) -> Result<Component> {
    check_domain(u, GROUP_CHART_RADIUS)?;
    let e = model.exp_coords(&transversal_element(model, transversal, u))?;
    Ok(match kind {
        OrbitKind::Conjugacy => Component::Group(e.mul(base.as_group()?).mul(&e.inverse())),
        OrbitKind::Adjoint => Component::Algebra(model.adjoint(&e, base.as_algebra()?)),
    })
}

/// Generators of the coordinate fields: column `k` is
/// `w_k = Ad_{exp S} dexp_S(b_{c_k})`, so that `d_k = X_{w_k}`.
pub(crate) fn orbit_frame(model: &GroupModel, transversal: &[usize], u: &DVector<f64>) -> Result<DMatrix<f64>> {
    let s = transversal_element(model, transversal, u);
    let lifted = model.adjoint_matrix(&model.exp_coords(&s)?) * model.dexp_matrix(&s);
    let cols: Vec<DVector<f64>> = transversal.iter().map(|i| lifted.column(*i).into_owned()).collect();
    if cols.is_empty() {
        return Ok(DMatrix::zeros(model.dim(), 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Chart coordinates of `X_{b_i}` for every basis element, by least squares
/// against the frame images.
pub(crate) fn orbit_generators(tangent_map: &DMatrix<f64>, frame: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if frame.ncols() == 0 {
        return Ok(DMatrix::zeros(0, tangent_map.ncols()));
    }
    let images = tangent_map * frame;
    let pinv = images
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Domain(format!("orbit chart: {e}")))?;
    Ok(pinv * tangent_map)
}

// ---------------------------------------------------------------------
// The double D(G) = G x G.

/// The double, a quasi-Hamiltonian `G x G`-space with action
/// `(g, h).(a, b) = (g a h^-1, h b h^-1)` and moment `(a b a^-1, b^-1)`.
#[derive(Clone, Debug)]
pub struct DoubleSpace {
    model: GroupModel,
    chart: SlotChart,
}

pub fn double_space(model: &GroupModel) -> StructuredSpace {
    StructuredSpace::new(DoubleSpace {
        model: model.clone(),
        chart: SlotChart::new(model, &[Slot::Group, Slot::Group]),
    })
}

impl DoubleSpace {
    /// The 2-form on left-trivialized tangents `(u_i, v_i)` at `(alpha, beta)`:
    /// `1/2 (<Ad_b u1, u2> - <Ad_b u2, u1>) + 1/2 (<u1, v2 + Ad_b v2> - <u2, v1 + Ad_b v1>)`.
    pub fn natural_form(model: &GroupModel, beta: &GroupElement) -> DMatrix<f64> {
        let n = model.dim();
        let p = model.pairing_matrix();
        let ad_b = model.adjoint_matrix(beta);
        let eye = DMatrix::identity(n, n);
        let uu = (ad_b.transpose() * p - p * &ad_b) * 0.5;
        let uv = p * (&eye + &ad_b) * 0.5;
        let vu = -uv.transpose();
        blocks(n, 2, 2, &[(0, 0, uu), (0, 1, uv), (1, 0, vu)])
    }
}

impl SpaceModel for DoubleSpace {
    fn name(&self) -> String {
        "double".into()
    }

    fn flavor(&self) -> Flavor {
        Flavor::QuasiHamiltonian
    }

    fn factors(&self) -> Vec<GroupModel> {
        vec![self.model.clone(), self.model.clone()]
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
            Component::Group(self.model.random_group(rng, 0.8)?),
        ])
    }

    fn embed(&self, base: &[Component], u: &DVector<f64>) -> Result<Point> {
        self.chart.embed(base, u)
    }

    fn local(&self, base: &[Component], u: &DVector<f64>) -> Result<LocalData> {
        let m = &self.model;
        let n = m.dim();
        let p = self.embed(base, u)?;
        let alpha = p[0].as_group()?;
        let beta = p[1].as_group()?;
        let frame = self.chart.frame(u);
        let frame_inv = self.chart.frame_inverse(u)?;
        let form = antisymmetrize(&(frame.transpose() * Self::natural_form(m, beta) * &frame));

        let eye = DMatrix::identity(n, n);
        let ad_a = m.adjoint_matrix(alpha);
        let ad_a_inv = m.adjoint_matrix(&alpha.inverse());
        let ad_b = m.adjoint_matrix(beta);
        let ad_b_inv = m.adjoint_matrix(&beta.inverse());
        let d1 = blocks(n, 1, 2, &[(0, 0, &ad_a * (&ad_b_inv - &eye)), (0, 1, ad_a.clone())]);
        let d2 = blocks(n, 1, 2, &[(0, 1, -ad_b)]);
        let g1 = blocks(n, 2, 1, &[(0, 0, ad_a_inv)]);
        let g2 = blocks(n, 2, 1, &[(0, 0, -eye.clone()), (1, 0, &ad_b_inv - &eye)]);

        Ok(LocalData {
            form,
            moment: self.moment(&p)?,
            dmoment: vec![d1 * &frame, d2 * &frame],
            generators: vec![&frame_inv * g1, &frame_inv * g2],
        })
    }

    fn moment(&self, p: &[Component]) -> Result<Vec<Component>> {
        let a = p[0].as_group()?;
        let b = p[1].as_group()?;
        Ok(vec![
            Component::Group(a.mul(b).mul(&a.inverse())),
            Component::Group(b.inverse()),
        ])
    }

    fn act(&self, factor: usize, g: &GroupElement, p: &[Component]) -> Result<Point> {
        let a = p[0].as_group()?;
        let b = p[1].as_group()?;
        match factor {
            0 => Ok(vec![Component::Group(g.mul(a)), Component::Group(b.clone())]),
            1 => Ok(vec![
                Component::Group(a.mul(&g.inverse())),
                Component::Group(g.mul(b).mul(&g.inverse())),
            ]),
            _ => Err(Error::Contract(format!("double has 2 factors, got index {factor}"))),
        }
    }
}

// ---------------------------------------------------------------------
// T*G = G x g.

/// The cotangent bundle in left trivialization, a Hamiltonian
/// `G x G`-space with action `(g, h).(a, x) = (g a h^-1, Ad_h x)` and
/// moment `(Ad_a x, -x)`.
#[derive(Clone, Debug)]
pub struct TStarSpace {
    model: GroupModel,
    chart: SlotChart,
}

pub fn tstar_space(model: &GroupModel) -> StructuredSpace {
    StructuredSpace::new(TStarSpace {
        model: model.clone(),
        chart: SlotChart::new(model, &[Slot::Group, Slot::Algebra]),
    })
}

impl TStarSpace {
    /// `sigma((y1, z1), (y2, z2)) = <y1, z2> - <y2, z1> + <x, [y1, y2]>`.
    pub fn natural_form(model: &GroupModel, x: &DVector<f64>) -> DMatrix<f64> {
        let n = model.dim();
        let p = model.pairing_matrix();
        let yy = model.ad_matrix(x).transpose() * p;
        blocks(n, 2, 2, &[(0, 0, yy), (0, 1, p.clone()), (1, 0, -p.clone())])
    }
}

/// Natural-coordinate pieces shared by every `G x g` chart with action
/// `(g a h^-1, Ad_h x)` and chart moment `(Ad_a x, -x)`: the moment
/// differentials and the generators.
pub(crate) fn cotangent_pieces(
    model: &GroupModel,
    alpha: &GroupElement,
    x: &DVector<f64>,
) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let n = model.dim();
    let eye = DMatrix::identity(n, n);
    let ad_a = model.adjoint_matrix(alpha);
    let ad_x = model.ad_matrix(x);
    let d1 = blocks(n, 1, 2, &[(0, 0, -(&ad_a * &ad_x)), (0, 1, ad_a.clone())]);
    let d2 = blocks(n, 1, 2, &[(0, 1, -eye.clone())]);
    let g1 = blocks(n, 2, 1, &[(0, 0, model.adjoint_matrix(&alpha.inverse()))]);
    let g2 = blocks(n, 2, 1, &[(0, 0, -eye), (1, 0, -ad_x)]);
    (vec![d1, d2], vec![g1, g2])
}

pub(crate) fn cotangent_act(model: &GroupModel, factor: usize, g: &GroupElement, p: &[Component]) -> Result<Point> {
    let a = p[0].as_group()?;
    let x = p[1].as_algebra()?;
    match factor {
        0 => Ok(vec![Component::Group(g.mul(a)), Component::Algebra(x.clone())]),
        1 => Ok(vec![
            Component::Group(a.mul(&g.inverse())),
            Component::Algebra(model.adjoint(g, x)),
        ]),
        _ => Err(Error::Contract(format!("G x g has 2 factors, got index {factor}"))),
    }
}

impl SpaceModel for TStarSpace {
    fn name(&self) -> String {
        "tstar".into()
    }

    fn flavor(&self) -> Flavor {
        Flavor::Hamiltonian
    }

    fn factors(&self) -> Vec<GroupModel> {
        vec![self.model.clone(), self.model.clone()]
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
            Component::Algebra(self.model.random_algebra(rng, 0.8)),
        ])
    }

    fn embed(&self, base: &[Component], u: &DVector<f64>) -> Result<Point> {
        self.chart.embed(base, u)
    }

    fn local(&self, base: &[Component], u: &DVector<f64>) -> Result<LocalData> {
        let m = &self.model;
        let p = self.embed(base, u)?;
        let alpha = p[0].as_group()?;
        let x = m.coords(p[1].as_algebra()?);
        let frame = self.chart.frame(u);
        let frame_inv = self.chart.frame_inverse(u)?;
        let form = antisymmetrize(&(frame.transpose() * Self::natural_form(m, &x) * &frame));
        let (dm, gens) = cotangent_pieces(m, alpha, &x);
        Ok(LocalData {
            form,
            moment: self.moment(&p)?,
            dmoment: dm.into_iter().map(|d| d * &frame).collect(),
            generators: gens.into_iter().map(|g| &frame_inv * g).collect(),
        })
    }

    fn moment(&self, p: &[Component]) -> Result<Vec<Component>> {
        let a = p[0].as_group()?;
        let x = p[1].as_algebra()?;
        Ok(vec![
            Component::Algebra(self.model.adjoint(a, x)),
            Component::Algebra(x.scale(-1.0)),
        ])
    }

    fn act(&self, factor: usize, g: &GroupElement, p: &[Component]) -> Result<Point> {
        cotangent_act(&self.model, factor, g, p)
    }
}

// ---------------------------------------------------------------------
// Conjugacy classes and adjoint orbits.

/// The conjugacy class of `a`, a quasi-Hamiltonian `G`-space with moment
/// the inclusion and
/// `omega_f(X_v1, X_v2) = 1/2 (<v1, Ad_f v2> - <v2, Ad_f v1>)`.
#[derive(Clone, Debug)]
pub struct ConjugacyClassSpace {
    model: GroupModel,
    a: GroupElement,
    dim: usize,
}

pub fn conj_class_space(model: &GroupModel, a: &GroupElement) -> Result<StructuredSpace> {
    model.check_group(a)?;
    let dim = orbit_transversal(model, OrbitKind::Conjugacy, &Component::Group(a.clone()))?.len();
    Ok(StructuredSpace::new(ConjugacyClassSpace {
        model: model.clone(),
        a: a.clone(),
        dim,
    }))
}

impl ConjugacyClassSpace {
    /// Natural form on generators at `f`: `1/2 (P Ad_f - Ad_f^T P)`.
    pub fn natural_form(model: &GroupModel, f: &GroupElement) -> DMatrix<f64> {
        let p = model.pairing_matrix();
        let ad_f = model.adjoint_matrix(f);
        (p * &ad_f - ad_f.transpose() * p) * 0.5
    }

    fn transversal(&self, base: &[Component]) -> Result<Vec<usize>> {
        let t = orbit_transversal(&self.model, OrbitKind::Conjugacy, &base[0])?;
        if t.len() != self.dim {
            return Err(Error::Domain("conjugacy chart: stabilizer dimension jumped at base point".into()));
        }
        Ok(t)
    }
}

impl SpaceModel for ConjugacyClassSpace {
    fn name(&self) -> String {
        "conjugacy".into()
    }

    fn flavor(&self) -> Flavor {
        Flavor::QuasiHamiltonian
    }

    fn factors(&self) -> Vec<GroupModel> {
        vec![self.model.clone()]
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn components(&self) -> usize {
        1
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Result<Point> {
        let g = self.model.random_group(rng, 1.0)?;
        Ok(vec![Component::Group(g.mul(&self.a).mul(&g.inverse()))])
    }

    fn embed(&self, base: &[Component], u: &DVector<f64>) -> Result<Point> {
        let t = self.transversal(base)?;
        Ok(vec![orbit_embed(&self.model, OrbitKind::Conjugacy, &base[0], &t, u)?])
    }

    fn local(&self, base: &[Component], u: &DVector<f64>) -> Result<LocalData> {
        let m = &self.model;
        let t = self.transversal(base)?;
        let p = orbit_embed(m, OrbitKind::Conjugacy, &base[0], &t, u)?;
        let f = p.as_group()?;
        let frame = orbit_frame(m, &t, u)?;
        let form = antisymmetrize(&(frame.transpose() * Self::natural_form(m, f) * &frame));
        let tangent = orbit_tangent_map(m, OrbitKind::Conjugacy, &p)?;
        Ok(LocalData {
            form,
            moment: vec![p.clone()],
            dmoment: vec![&tangent * &frame],
            generators: vec![orbit_generators(&tangent, &frame)?],
        })
    }

    fn moment(&self, p: &[Component]) -> Result<Vec<Component>> {
        Ok(vec![p[0].clone()])
    }

    fn act(&self, factor: usize, g: &GroupElement, p: &[Component]) -> Result<Point> {
        if factor != 0 {
            return Err(Error::Contract(format!("conjugacy class has 1 factor, got index {factor}")));
        }
        Ok(vec![Component::Group(g.mul(p[0].as_group()?).mul(&g.inverse()))])
    }
}

/// The adjoint orbit of `x`, a Hamiltonian `G`-space with moment the
/// inclusion and `sigma_y(X_v1, X_v2) = -<y, [v1, v2]>`.
#[derive(Clone, Debug)]
pub struct OrbitSpace {
    model: GroupModel,
    x: AlgebraVector,
    dim: usize,
}

pub fn orbit_space(model: &GroupModel, x: &AlgebraVector) -> Result<StructuredSpace> {
    model.check_algebra(x)?;
    let dim = orbit_transversal(model, OrbitKind::Adjoint, &Component::Algebra(x.clone()))?.len();
    Ok(StructuredSpace::new(OrbitSpace {
        model: model.clone(),
        x: x.clone(),
        dim,
    }))
}

impl OrbitSpace {
    /// Natural form on generators at `y`: `-ad_y^T P`.
    pub fn natural_form(model: &GroupModel, y: &DVector<f64>) -> DMatrix<f64> {
        -(model.ad_matrix(y).transpose() * model.pairing_matrix())
    }
}

/// Local data of an adjoint-orbit chart with a given natural form; shared
/// with the conjugacy deformation family.
pub(crate) fn adjoint_orbit_local(
    model: &GroupModel,
    base: &[Component],
    expected_dim: usize,
    u: &DVector<f64>,
    natural_form: impl Fn(&DVector<f64>) -> DMatrix<f64>,
) -> Result<(Component, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let t = orbit_transversal(model, OrbitKind::Adjoint, &base[0])?;
    if t.len() != expected_dim {
        return Err(Error::Domain("orbit chart: stabilizer dimension jumped at base point".into()));
    }
    let p = orbit_embed(model, OrbitKind::Adjoint, &base[0], &t, u)?;
    let y = model.coords(p.as_algebra()?);
    let frame = orbit_frame(model, &t, u)?;
    let form = antisymmetrize(&(frame.transpose() * natural_form(&y) * &frame));
    let tangent = orbit_tangent_map(model, OrbitKind::Adjoint, &p)?;
    let gens = orbit_generators(&tangent, &frame)?;
    Ok((p, form, &tangent * &frame, gens))
}

pub(crate) fn adjoint_orbit_embed(model: &GroupModel, base: &[Component], u: &DVector<f64>) -> Result<Point> {
    let t = orbit_transversal(model, OrbitKind::Adjoint, &base[0])?;
    Ok(vec![orbit_embed(model, OrbitKind::Adjoint, &base[0], &t, u)?])
}

impl SpaceModel for OrbitSpace {
    fn name(&self) -> String {
        "orbit".into()
    }

    fn flavor(&self) -> Flavor {
        Flavor::Hamiltonian
    }

    fn factors(&self) -> Vec<GroupModel> {
        vec![self.model.clone()]
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

    fn local(&self, base: &[Component], u: &DVector<f64>) -> Result<LocalData> {
        let m = &self.model;
        let (p, form, dmoment, gens) = adjoint_orbit_local(m, base, self.dim, u, |y| Self::natural_form(m, y))?;
        Ok(LocalData {
            form,
            moment: vec![p],
            dmoment: vec![dmoment],
            generators: vec![gens],
        })
    }

    fn moment(&self, p: &[Component]) -> Result<Vec<Component>> {
        Ok(vec![p[0].clone()])
    }

    fn act(&self, factor: usize, g: &GroupElement, p: &[Component]) -> Result<Point> {
        if factor != 0 {
            return Err(Error::Contract(format!("adjoint orbit has 1 factor, got index {factor}")));
        }
        Ok(vec![Component::Algebra(self.model.adjoint(g, p[0].as_algebra()?))])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::{ext_deriv_all, gram_rank_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn zero(n: usize) -> DVector<f64> {
        DVector::zeros(n)
    }

    #[test]
    fn double_form_at_unit_beta() {
        // beta = 1: omega((u1,v1),(u2,v2)) = <u1, v2> - <u2, v1>.
        let m = GroupModel::su2();
        let w = DoubleSpace::natural_form(&m, &m.identity());
        let mut r = rng(1);
        let t1 = m.random_coords(&mut r, 1.0).iter().chain(m.random_coords(&mut r, 1.0).iter()).copied().collect::<Vec<_>>();
        let t2 = m.random_coords(&mut r, 1.0).iter().chain(m.random_coords(&mut r, 1.0).iter()).copied().collect::<Vec<_>>();
        let a = DVector::from_vec(t1);
        let b = DVector::from_vec(t2);
        let val = (a.transpose() * &w * &b)[(0, 0)];
        let (u1, v1) = (a.rows(0, 3).into_owned(), a.rows(3, 3).into_owned());
        let (u2, v2) = (b.rows(0, 3).into_owned(), b.rows(3, 3).into_owned());
        let expected = m.pair_coords(&u1, &v2) - m.pair_coords(&u2, &v1);
        assert!((val - expected).abs() < 1e-15);
    }

    #[test]
    fn double_moment_at_unit_beta() {
        let m = GroupModel::su2();
        let s = double_space(&m);
        let a = m.sample_group(2, 1.0).unwrap();
        let mu = s.moment(&[Component::Group(a), Component::Group(m.identity())]).unwrap();
        assert!(mu[0].as_group().unwrap().distance(&m.identity()) < 1e-14);
        assert!(mu[1].as_group().unwrap().distance(&m.identity()) < 1e-15);
    }

    #[test]
    fn abelian_double_form_is_constant_pairing() {
        let m = GroupModel::t2();
        let s = double_space(&m);
        let mut r = rng(3);
        let base = s.sample_point(&mut r).unwrap();
        let u = DVector::from_vec(vec![0.05, -0.1, 0.02, 0.07]);
        let form = s.form(&base, &u).unwrap();
        let p = m.pairing_matrix();
        let expected = blocks(2, 2, 2, &[(0, 1, p.clone()), (1, 0, -p.clone())]);
        assert!((form - expected).amax() < 1e-15);
    }

    #[test]
    fn tstar_form_at_zero_momentum() {
        let m = GroupModel::so3();
        let w = TStarSpace::natural_form(&m, &zero(3));
        let p = m.pairing_matrix();
        assert!(w.view((0, 0), (3, 3)).amax() == 0.0);
        assert!((w.view((0, 3), (3, 3)) - p).amax() == 0.0);
    }

    #[test]
    fn tstar_moment_at_identity() {
        let m = GroupModel::su2();
        let s = tstar_space(&m);
        let x = m.sample_algebra(4, 1.0);
        let nu = s.moment(&[Component::Group(m.identity()), Component::Algebra(x.clone())]).unwrap();
        assert!((nu[0].as_algebra().unwrap().mat.clone() - &x.mat).norm() < 1e-15);
        assert!((nu[1].as_algebra().unwrap().mat.clone() + &x.mat).norm() < 1e-15);
    }

    #[test]
    fn tstar_is_closed_and_nondegenerate() {
        let m = GroupModel::su2();
        let s = tstar_space(&m);
        let mut r = rng(5);
        for _ in 0..4 {
            let base = s.sample_point(&mut r).unwrap();
            let form = s.two_form(&base);
            let d = ext_deriv_all(&form, &zero(6), 1e-4).unwrap();
            assert!(d.iter().all(|(_, v)| v.abs() < 1e-6));
            let (rank, _) = gram_rank_matrix(&s.form(&base, &zero(6)).unwrap(), 1e-8);
            assert_eq!(rank, 6);
        }
    }

    #[test]
    fn central_elements_give_point_orbits() {
        let m = GroupModel::su2();
        assert_eq!(conj_class_space(&m, &m.identity()).unwrap().dim(), 0);
        assert_eq!(orbit_space(&m, &m.zero()).unwrap().dim(), 0);
        let t = GroupModel::t2();
        assert_eq!(orbit_space(&t, &t.sample_algebra(1, 1.0)).unwrap().dim(), 0);
    }

    #[test]
    fn generic_su2_orbits_are_two_dimensional_and_nondegenerate() {
        let m = GroupModel::su2();
        let x = m.from_coords(&DVector::from_vec(vec![0.7, 0.3, 0.2]));
        let a = m.exp(&x).unwrap();
        let mut r = rng(6);
        for space in [conj_class_space(&m, &a).unwrap(), orbit_space(&m, &x).unwrap()] {
            assert_eq!(space.dim(), 2);
            let base = space.sample_point(&mut r).unwrap();
            let (rank, _) = gram_rank_matrix(&space.form(&base, &zero(2)).unwrap(), 1e-8);
            assert_eq!(rank, 2);
        }
    }

    #[test]
    fn orbit_form_vanishes_on_equal_generators() {
        let m = GroupModel::su2();
        let y = DVector::from_vec(vec![0.2, -0.4, 0.9]);
        let w = OrbitSpace::natural_form(&m, &y);
        let v = DVector::from_vec(vec![0.3, 0.1, -0.5]);
        assert!((v.transpose() * &w * &v)[(0, 0)].abs() < 1e-15);
        let c = ConjugacyClassSpace::natural_form(&m, &m.identity());
        assert!(c.amax() < 1e-15);
    }

    #[test]
    fn orbit_frame_matches_finite_differences() {
        let m = GroupModel::so3();
        let x = m.from_coords(&DVector::from_vec(vec![0.4, -0.2, 0.5]));
        let s = orbit_space(&m, &x).unwrap();
        let base = s.sample_point(&mut rng(7)).unwrap();
        let u = DVector::from_vec(vec![0.05, -0.03]);
        let local = s.local(&base, &u).unwrap();
        let f = |w: &DVector<f64>| Ok(m.coords(s.embed(&base, w)?[0].as_algebra()?));
        let j = crate::charts::fd_jacobian(f, &u, 1e-5).unwrap();
        assert!((j - &local.dmoment[0]).amax() < 1e-9);
    }

    #[test]
    fn double_generators_match_action_derivative() {
        let m = GroupModel::su2();
        let s = double_space(&m);
        let base = s.sample_point(&mut rng(8)).unwrap();
        let u = DVector::from_vec(vec![0.02, -0.05, 0.01, 0.04, 0.03, -0.02]);
        let p = s.embed(&base, &u).unwrap();
        let local = s.local(&base, &u).unwrap();
        let v = DVector::from_vec(vec![0.3, -0.7, 0.2]);
        for factor in 0..2 {
            // d/ds of moment(exp(s v) . p) equals dmoment applied to X_v.
            let f = |sv: &DVector<f64>| {
                let g = m.exp_coords(&(&v * sv[0]))?;
                let q = s.act(factor, &g, &p)?;
                let mu = s.moment(&q)?;
                let mu0 = s.moment(&p)?;
                m.log_coords(&mu0[factor].as_group()?.inverse().mul(mu[factor].as_group()?))
            };
            let fd = crate::charts::fd_jacobian(f, &zero(1), 1e-5).unwrap();
            let x = &local.generators[factor] * &v;
            let predicted = &local.dmoment[factor] * x;
            assert!((fd.column(0) - predicted).amax() < 1e-8);
        }
    }
}
