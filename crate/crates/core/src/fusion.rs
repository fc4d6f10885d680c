//! Internal and external fusion, and the moduli-space builders.
//!
//! Internal fusion merges two factors `i`, `j` of the acting group into a
//! diagonal factor placed at `i`. Quasi-Hamiltonian spaces multiply the
//! moments (`mu_i mu_j`) and add `1/2 <mu_i^* theta^L, mu_j^* theta^R>` to
//! the form; Hamiltonian spaces add the moments and keep the form.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::charts::wedge_pair_matrix;
use crate::error::{Error, Result};
use crate::liegroup::{GroupElement, GroupModel};
use crate::spaces::{double_space, tstar_space, Component, Flavor, LocalData, Point, SpaceModel, StructuredSpace};

/// A single point acted on trivially by `G`, with moment the identity
/// (quasi-Hamiltonian) or zero (Hamiltonian). Unit for fusion.
#[derive(Clone, Debug)]
pub struct PointSpace {
    model: GroupModel,
    flavor: Flavor,
}

pub fn point_space(model: &GroupModel, flavor: Flavor) -> StructuredSpace {
    StructuredSpace::new(PointSpace {
        model: model.clone(),
        flavor,
    })
}

impl PointSpace {
    fn unit(&self) -> Component {
        match self.flavor {
            Flavor::QuasiHamiltonian => Component::Group(self.model.identity()),
            Flavor::Hamiltonian => Component::Algebra(self.model.zero()),
        }
    }
}

impl SpaceModel for PointSpace {
    fn name(&self) -> String {
        "point".into()
    }

    fn flavor(&self) -> Flavor {
        self.flavor
    }

    fn factors(&self) -> Vec<GroupModel> {
        vec![self.model.clone()]
    }

    fn dim(&self) -> usize {
        0
    }

    fn components(&self) -> usize {
        0
    }

    fn sample_point(&self, _rng: &mut dyn RngCore) -> Result<Point> {
        Ok(Vec::new())
    }

    fn embed(&self, _base: &[Component], _u: &DVector<f64>) -> Result<Point> {
        Ok(Vec::new())
    }

    fn local(&self, _base: &[Component], _u: &DVector<f64>) -> Result<LocalData> {
        let n = self.model.dim();
        Ok(LocalData {
            form: DMatrix::zeros(0, 0),
            moment: vec![self.unit()],
            dmoment: vec![DMatrix::zeros(n, 0)],
            generators: vec![DMatrix::zeros(0, n)],
        })
    }

    fn moment(&self, _p: &[Component]) -> Result<Vec<Component>> {
        Ok(vec![self.unit()])
    }

    fn act(&self, factor: usize, _g: &GroupElement, p: &[Component]) -> Result<Point> {
        if factor != 0 {
            return Err(Error::Contract(format!("point space has 1 factor, got index {factor}")));
        }
        Ok(p.to_vec())
    }
}

/// The direct product of spaces of one flavor; factors and components are
/// concatenated in order.
#[derive(Clone, Debug)]
pub struct ProductSpace {
    parts: Vec<StructuredSpace>,
}

pub fn product_space(parts: Vec<StructuredSpace>) -> Result<StructuredSpace> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Contract("product of no spaces".into()))?;
    for p in &parts[1..] {
        if p.flavor() != first.flavor() {
            return Err(Error::Contract(format!(
                "cannot combine {} ({}) with {} ({})",
                first.name(),
                first.flavor(),
                p.name(),
                p.flavor()
            )));
        }
        if (p.pairing_rescale() - first.pairing_rescale()).abs() > 0.0 {
            return Err(Error::Contract("product factors use different pairing rescales".into()));
        }
    }
    Ok(StructuredSpace::new(ProductSpace { parts }))
}

impl ProductSpace {
    fn component_offsets(&self) -> Vec<usize> {
        offsets(self.parts.iter().map(|p| p.components()))
    }

    fn dim_offsets(&self) -> Vec<usize> {
        offsets(self.parts.iter().map(|p| p.dim()))
    }

    fn factor_offsets(&self) -> Vec<usize> {
        offsets(self.parts.iter().map(|p| p.factors().len()))
    }

    fn split<'a>(&self, p: &'a [Component]) -> Vec<&'a [Component]> {
        let off = self.component_offsets();
        (0..self.parts.len()).map(|k| &p[off[k]..off[k + 1]]).collect()
    }

    fn split_u(&self, u: &DVector<f64>) -> Vec<DVector<f64>> {
        let off = self.dim_offsets();
        (0..self.parts.len())
            .map(|k| u.rows(off[k], off[k + 1] - off[k]).into_owned())
            .collect()
    }

    /// Which part owns `factor`, and its index inside that part.
    fn locate(&self, factor: usize) -> Result<(usize, usize)> {
        let off = self.factor_offsets();
        (0..self.parts.len())
            .find(|k| factor >= off[*k] && factor < off[k + 1])
            .map(|k| (k, factor - off[k]))
            .ok_or_else(|| Error::Contract(format!("factor index {factor} out of range")))
    }
}

fn offsets(sizes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    for s in sizes {
        out.push(out.last().unwrap() + s);
    }
    out
}

impl SpaceModel for ProductSpace {
    fn name(&self) -> String {
        self.parts.iter().map(|p| p.name()).collect::<Vec<_>>().join(" x ")
    }

    fn flavor(&self) -> Flavor {
        self.parts[0].flavor()
    }

    fn factors(&self) -> Vec<GroupModel> {
        self.parts.iter().flat_map(|p| p.factors()).collect()
    }

    fn pairing_rescale(&self) -> f64 {
        self.parts[0].pairing_rescale()
    }

    fn dim(&self) -> usize {
        self.parts.iter().map(|p| p.dim()).sum()
    }

    fn components(&self) -> usize {
        self.parts.iter().map(|p| p.components()).sum()
    }

    fn domain_radius(&self) -> f64 {
        self.parts.iter().map(|p| p.domain_radius()).fold(f64::INFINITY, f64::min)
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

    fn local(&self, base: &[Component], u: &DVector<f64>) -> Result<LocalData> {
        let dim = self.dim();
        let off = self.dim_offsets();
        let mut form = DMatrix::zeros(dim, dim);
        let mut moment = Vec::new();
        let mut dmoment = Vec::new();
        let mut generators = Vec::new();
        for (k, ((part, b), uk)) in self.parts.iter().zip(self.split(base)).zip(self.split_u(u)).enumerate() {
            let l = part.local(b, &uk)?;
            let d = part.dim();
            form.view_mut((off[k], off[k]), (d, d)).copy_from(&l.form);
            moment.extend(l.moment);
            for a in l.dmoment {
                let mut full = DMatrix::zeros(a.nrows(), dim);
                full.view_mut((0, off[k]), (a.nrows(), d)).copy_from(&a);
                dmoment.push(full);
            }
            for g in l.generators {
                let mut full = DMatrix::zeros(dim, g.ncols());
                full.view_mut((off[k], 0), (d, g.ncols())).copy_from(&g);
                generators.push(full);
            }
        }
        Ok(LocalData {
            form,
            moment,
            dmoment,
            generators,
        })
    }

    fn moment(&self, p: &[Component]) -> Result<Vec<Component>> {
        let mut out = Vec::new();
        for (part, q) in self.parts.iter().zip(self.split(p)) {
            out.extend(part.moment(q)?);
        }
        Ok(out)
    }

    fn act(&self, factor: usize, g: &GroupElement, p: &[Component]) -> Result<Point> {
        let (k, local_factor) = self.locate(factor)?;
        let mut out = Vec::new();
        for (idx, (part, q)) in self.parts.iter().zip(self.split(p)).enumerate() {
            if idx == k {
                out.extend(part.act(local_factor, g, q)?);
            } else {
                out.extend(q.iter().cloned());
            }
        }
        Ok(out)
    }
}

/// Internal fusion of factors `i` and `j` of `inner`.
#[derive(Clone, Debug)]
pub struct InternalFusion {
    inner: StructuredSpace,
    i: usize,
    j: usize,
    name: String,
}

/// Position of the merged factor after removing `j`.
fn merged_index(i: usize, j: usize) -> usize {
    if j < i {
        i - 1
    } else {
        i
    }
}

/// Maps a factor index of the fused space to the inner factor indices it
/// stands for.
fn inner_factors(i: usize, j: usize, factor: usize) -> Vec<usize> {
    let m = merged_index(i, j);
    if factor == m {
        return vec![i, j];
    }
    // Position among the untouched inner factors, which keep their order.
    let k = if factor > m { factor - 1 } else { factor };
    let mut idx = 0usize;
    let mut pos = 0usize;
    loop {
        if idx != i && idx != j {
            if pos == k {
                return vec![idx];
            }
            pos += 1;
        }
        idx += 1;
    }
}

fn check_pair(space: &StructuredSpace, i: usize, j: usize) -> Result<()> {
    let factors = space.factors();
    if i == j || i >= factors.len() || j >= factors.len() {
        return Err(Error::Contract(format!(
            "cannot fuse factors ({i}, {j}) of a space with {} factors",
            factors.len()
        )));
    }
    if factors[i] != factors[j] {
        return Err(Error::Contract(format!(
            "factors {i} ({}) and {j} ({}) use different group models",
            factors[i].name(),
            factors[j].name()
        )));
    }
    Ok(())
}

pub fn internal_fuse_qh(space: &StructuredSpace, factors: (usize, usize)) -> Result<StructuredSpace> {
    if space.flavor() != Flavor::QuasiHamiltonian {
        return Err(Error::Contract(format!("{} is not quasi-Hamiltonian", space.name())));
    }
    internal_fuse(space, factors)
}

pub fn internal_fuse_ham(space: &StructuredSpace, factors: (usize, usize)) -> Result<StructuredSpace> {
    if space.flavor() != Flavor::Hamiltonian {
        return Err(Error::Contract(format!("{} is not Hamiltonian", space.name())));
    }
    internal_fuse(space, factors)
}

/// Internal fusion with the rule matching the space's flavor.
pub fn internal_fuse(space: &StructuredSpace, (i, j): (usize, usize)) -> Result<StructuredSpace> {
    check_pair(space, i, j)?;
    Ok(StructuredSpace::new(InternalFusion {
        inner: space.clone(),
        i,
        j,
        name: format!("fused({})", space.name()),
    }))
}

/// `mu_i mu_j` or `nu_i + nu_j`.
pub(crate) fn merge_moments(model: &GroupModel, a: &Component, b: &Component) -> Result<Component> {
    Ok(match (a, b) {
        (Component::Group(x), Component::Group(y)) => Component::Group(x.mul(y)),
        (Component::Algebra(x), Component::Algebra(y)) => Component::Algebra(x.clone() + y.clone()),
        _ => {
            return Err(Error::Contract(format!(
                "cannot merge moments of different kinds in {}",
                model.name()
            )))
        }
    })
}

/// The fusion correction `1/2 <A_i, Ad_{mu_j} A_j>` wedge, for left-
/// trivialized moment differentials `a_i`, `a_j`.
pub(crate) fn fusion_correction(
    model: &GroupModel,
    rescale: f64,
    a_i: &DMatrix<f64>,
    a_j: &DMatrix<f64>,
    mu_j: &GroupElement,
) -> DMatrix<f64> {
    let a_j_right = model.adjoint_matrix(mu_j) * a_j;
    wedge_pair_matrix(model.pairing_matrix(), a_i, &a_j_right) * (0.5 * rescale)
}

impl InternalFusion {
    fn merge_list<T: Clone>(&self, items: Vec<T>, merged: T) -> Vec<T> {
        let m = merged_index(self.i, self.j);
        let mut rest: Vec<T> = items
            .into_iter()
            .enumerate()
            .filter(|(k, _)| *k != self.i && *k != self.j)
            .map(|(_, x)| x)
            .collect();
        rest.insert(m, merged);
        rest
    }
}

impl SpaceModel for InternalFusion {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn flavor(&self) -> Flavor {
        self.inner.flavor()
    }

    fn factors(&self) -> Vec<GroupModel> {
        let f = self.inner.factors();
        let merged = f[self.i].clone();
        self.merge_list(f, merged)
    }

    fn pairing_rescale(&self) -> f64 {
        self.inner.pairing_rescale()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn components(&self) -> usize {
        self.inner.components()
    }

    fn domain_radius(&self) -> f64 {
        self.inner.domain_radius()
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Result<Point> {
        self.inner.sample_point(rng)
    }

    fn embed(&self, base: &[Component], u: &DVector<f64>) -> Result<Point> {
        self.inner.embed(base, u)
    }

    fn local(&self, base: &[Component], u: &DVector<f64>) -> Result<LocalData> {
        let l = self.inner.local(base, u)?;
        let model = &self.inner.factors()[self.i];
        let (i, j) = (self.i, self.j);
        let (form, dm) = match self.flavor() {
            Flavor::QuasiHamiltonian => {
                let mu_j = l.moment[j].as_group()?;
                let corr = fusion_correction(model, self.pairing_rescale(), &l.dmoment[i], &l.dmoment[j], mu_j);
                let dm = model.adjoint_matrix(&mu_j.inverse()) * &l.dmoment[i] + &l.dmoment[j];
                (&l.form + corr, dm)
            }
            Flavor::Hamiltonian => (l.form.clone(), &l.dmoment[i] + &l.dmoment[j]),
        };
        let merged_moment = merge_moments(model, &l.moment[i], &l.moment[j])?;
        let gens = &l.generators[i] + &l.generators[j];
        Ok(LocalData {
            form,
            moment: self.merge_list(l.moment, merged_moment),
            dmoment: self.merge_list(l.dmoment, dm),
            generators: self.merge_list(l.generators, gens),
        })
    }

    fn moment(&self, p: &[Component]) -> Result<Vec<Component>> {
        let m = self.inner.moment(p)?;
        let model = &self.inner.factors()[self.i];
        let merged = merge_moments(model, &m[self.i], &m[self.j])?;
        Ok(self.merge_list(m, merged))
    }

    fn act(&self, factor: usize, g: &GroupElement, p: &[Component]) -> Result<Point> {
        if factor >= self.factors().len() {
            return Err(Error::Contract(format!("factor index {factor} out of range")));
        }
        let mut q = p.to_vec();
        for k in inner_factors(self.i, self.j, factor) {
            q = self.inner.act(k, g, &q)?;
        }
        Ok(q)
    }
}

/// Product of `s1` and `s2` followed by fusion of factor `shared.0` of
/// `s1` with factor `shared.1` of `s2`.
pub fn external_fuse(s1: &StructuredSpace, s2: &StructuredSpace, shared: (usize, usize)) -> Result<StructuredSpace> {
    if s1.flavor() != s2.flavor() {
        return Err(Error::Contract(format!(
            "flavor mismatch: {} is {}, {} is {}",
            s1.name(),
            s1.flavor(),
            s2.name(),
            s2.flavor()
        )));
    }
    let n1 = s1.factors().len();
    let product = product_space(vec![s1.clone(), s2.clone()])?;
    internal_fuse(&product, (shared.0, n1 + shared.1))
}

/// Fusion order used by the moduli builders, echoed in reports.
pub const MODULI_FUSION_ORDER: &str =
    "boundary pieces then handle pieces, left to right, each fused on factor 0 of the accumulated space";

fn moduli(model: &GroupModel, genus: usize, boundaries: usize, flavor: Flavor) -> Result<StructuredSpace> {
    let (piece, handle) = match flavor {
        Flavor::QuasiHamiltonian => {
            let d = double_space(model);
            let h = internal_fuse_qh(&d, (0, 1))?;
            (d, h)
        }
        Flavor::Hamiltonian => {
            let d = tstar_space(model);
            let h = internal_fuse_ham(&d, (0, 1))?;
            (d, h)
        }
    };
    let pieces: Vec<StructuredSpace> = std::iter::repeat(piece)
        .take(boundaries)
        .chain(std::iter::repeat(handle).take(genus))
        .collect();
    let mut iter = pieces.into_iter();
    let Some(mut acc) = iter.next() else {
        return Ok(point_space(model, flavor));
    };
    for next in iter {
        acc = external_fuse(&acc, &next, (0, 0))?;
    }
    Ok(StructuredSpace::new(Renamed {
        inner: acc,
        name: format!("moduli(genus={genus}, boundaries={boundaries})"),
    }))
}

/// Moduli space of flat connections on a genus-`genus` surface with
/// `boundaries + 1` boundary circles, as fused doubles.
pub fn moduli_qh(model: &GroupModel, genus: usize, boundaries: usize) -> Result<StructuredSpace> {
    moduli(model, genus, boundaries, Flavor::QuasiHamiltonian)
}

/// Its Hamiltonian counterpart built from cotangent bundles.
pub fn moduli_ham(model: &GroupModel, genus: usize, boundaries: usize) -> Result<StructuredSpace> {
    moduli(model, genus, boundaries, Flavor::Hamiltonian)
}

/// A space under a different display name.
#[derive(Clone, Debug)]
struct Renamed {
    inner: StructuredSpace,
    name: String,
}

impl SpaceModel for Renamed {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn flavor(&self) -> Flavor {
        self.inner.flavor()
    }
    fn factors(&self) -> Vec<GroupModel> {
        self.inner.factors()
    }
    fn pairing_rescale(&self) -> f64 {
        self.inner.pairing_rescale()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn components(&self) -> usize {
        self.inner.components()
    }
    fn domain_radius(&self) -> f64 {
        self.inner.domain_radius()
    }
    fn sample_point(&self, rng: &mut dyn RngCore) -> Result<Point> {
        self.inner.sample_point(rng)
    }
    fn embed(&self, base: &[Component], u: &DVector<f64>) -> Result<Point> {
        self.inner.embed(base, u)
    }
    fn local(&self, base: &[Component], u: &DVector<f64>) -> Result<LocalData> {
        self.inner.local(base, u)
    }
    fn moment(&self, p: &[Component]) -> Result<Vec<Component>> {
        self.inner.moment(p)
    }
    fn act(&self, factor: usize, g: &GroupElement, p: &[Component]) -> Result<Point> {
        self.inner.act(factor, g, p)
    }
}
