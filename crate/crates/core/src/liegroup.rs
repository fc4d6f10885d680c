//! Matrix Lie groups: exponential and logarithm, adjoint operators, the
//! invariant pairing, the left-trivialized differential of `exp`, and
//! seeded sampling.
//!
//! Every model stores its matrices with complex entries, including the real
//! groups SO(3) and SL(2,ℝ). Algebra elements can be moved between their
//! matrix form ([`AlgebraVector`]) and their coordinates in the model's
//! basis ([`GroupModel::coords`]); the coordinate form is what the geometry
//! layers use internally, with `ad`, `Ad` and `dexp` represented as real
//! matrices acting on coordinates.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Truncation threshold for the `dexp` power series.
pub const DEXP_TERM_TOL: f64 = 1e-15;
/// Singular-value threshold used by [`GroupModel::dexp_invertible`].
pub const DEXP_SINGULAR_TOL: f64 = 1e-9;

/// An element of a matrix Lie algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraVector {
    pub mat: CMatrix,
}

/// An element of a matrix Lie group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    pub mat: CMatrix,
}

impl AlgebraVector {
    pub fn new(mat: CMatrix) -> Self {
        Self { mat }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            mat: CMatrix::zeros(n, n),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            mat: self.mat.map(|z| z * s),
        }
    }

    /// Frobenius norm of the matrix.
    pub fn norm(&self) -> f64 {
        self.mat.norm()
    }
}

impl Add for AlgebraVector {
    type Output = AlgebraVector;
    fn add(self, rhs: Self) -> Self {
        AlgebraVector::new(self.mat + rhs.mat)
    }
}

impl Sub for AlgebraVector {
    type Output = AlgebraVector;
    fn sub(self, rhs: Self) -> Self {
        AlgebraVector::new(self.mat - rhs.mat)
    }
}

impl Neg for AlgebraVector {
    type Output = AlgebraVector;
    fn neg(self) -> Self {
        AlgebraVector::new(-self.mat)
    }
}

impl Mul<f64> for AlgebraVector {
    type Output = AlgebraVector;
    fn mul(self, s: f64) -> Self {
        self.scale(s)
    }
}

impl GroupElement {
    pub fn new(mat: CMatrix) -> Self {
        Self { mat }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mat: CMatrix::identity(n, n),
        }
    }

    pub fn mul(&self, other: &GroupElement) -> GroupElement {
        GroupElement::new(&self.mat * &other.mat)
    }

    pub fn inverse(&self) -> GroupElement {
        let inv = self
            .mat
            .clone()
            .try_inverse()
            .expect("group elements are invertible");
        GroupElement::new(inv)
    }

    /// Frobenius distance between the two matrices.
    pub fn distance(&self, other: &GroupElement) -> f64 {
        (&self.mat - &other.mat).norm()
    }
}

/// Commutator `[x, y] = xy - yx`.
pub fn ad(x: &AlgebraVector, y: &AlgebraVector) -> AlgebraVector {
    AlgebraVector::new(&x.mat * &y.mat - &y.mat * &x.mat)
}

/// The shipped group models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Su2,
    So3,
    T2,
    Sl2r,
}

impl GroupKind {
    pub const ALL: [GroupKind; 4] = [GroupKind::Su2, GroupKind::So3, GroupKind::T2, GroupKind::Sl2r];

    pub fn name(self) -> &'static str {
        match self {
            GroupKind::Su2 => "su2",
            GroupKind::So3 => "so3",
            GroupKind::T2 => "t2",
            GroupKind::Sl2r => "sl2r",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        GroupKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Usage(format!("unknown group model '{name}' (expected su2, so3, t2 or sl2r)")))
    }
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

struct ModelData {
    kind: GroupKind,
    matrix_size: usize,
    basis: Vec<AlgebraVector>,
    pairing_scale: f64,
    membership_tol: f64,
    log_radius: f64,
    /// Inverse Gram matrix of the basis under Re tr(a^† b), used for projection.
    frobenius_inv: DMatrix<f64>,
    /// Gram matrix of the invariant pairing on the basis.
    pairing: DMatrix<f64>,
    /// `ad` of each basis element, in coordinates.
    structure: Vec<DMatrix<f64>>,
}

/// A concrete matrix Lie group with a basis of its algebra and an invariant
/// pairing `<a, b> = pairing_scale * Re tr(ab)`.
///
/// Cloning is cheap; the model data is shared.
#[derive(Clone)]
pub struct GroupModel(Arc<ModelData>);

impl fmt::Debug for GroupModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupModel")
            .field("name", &self.name())
            .field("pairing_scale", &self.0.pairing_scale)
            .finish()
    }
}

impl PartialEq for GroupModel {
    fn eq(&self, other: &Self) -> bool {
        self.0.kind == other.0.kind && self.0.pairing_scale == other.0.pairing_scale
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cmat(n: usize, entries: &[Complex64]) -> CMatrix {
    CMatrix::from_row_slice(n, n, entries)
}

fn basis_for(kind: GroupKind) -> (usize, Vec<AlgebraVector>) {
    let z = c(0.0, 0.0);
    match kind {
        // e_k = -(i/2) sigma_k, so that [e_1, e_2] = e_3.
        GroupKind::Su2 => {
            let h = 0.5;
            let e1 = cmat(2, &[z, c(0.0, -h), c(0.0, -h), z]);
            let e2 = cmat(2, &[z, c(-h, 0.0), c(h, 0.0), z]);
            let e3 = cmat(2, &[c(0.0, -h), z, z, c(0.0, h)]);
            (2, vec![e1, e2, e3].into_iter().map(AlgebraVector::new).collect())
        }
        GroupKind::So3 => {
            let o = c(1.0, 0.0);
            let m = c(-1.0, 0.0);
            let lx = cmat(3, &[z, z, z, z, z, m, z, o, z]);
            let ly = cmat(3, &[z, z, o, z, z, z, m, z, z]);
            let lz = cmat(3, &[z, m, z, o, z, z, z, z, z]);
            (3, vec![lx, ly, lz].into_iter().map(AlgebraVector::new).collect())
        }
        GroupKind::T2 => {
            let i = c(0.0, 1.0);
            let a = cmat(2, &[i, z, z, z]);
            let b = cmat(2, &[z, z, z, i]);
            (2, vec![a, b].into_iter().map(AlgebraVector::new).collect())
        }
        GroupKind::Sl2r => {
            let o = c(1.0, 0.0);
            let h = cmat(2, &[o, z, z, -o]);
            let e = cmat(2, &[z, o, z, z]);
            let f = cmat(2, &[z, z, o, z]);
            (2, vec![h, e, f].into_iter().map(AlgebraVector::new).collect())
        }
    }
}

fn re_trace(m: &CMatrix) -> f64 {
    m.trace().re
}

impl GroupModel {
    pub fn new(kind: GroupKind) -> Self {
        Self::build(kind, 1.0)
    }

    pub fn su2() -> Self {
        Self::new(GroupKind::Su2)
    }

    pub fn so3() -> Self {
        Self::new(GroupKind::So3)
    }

    pub fn t2() -> Self {
        Self::new(GroupKind::T2)
    }

    pub fn sl2r() -> Self {
        Self::new(GroupKind::Sl2r)
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(Self::new(GroupKind::from_name(name)?))
    }

    /// The same group with the pairing multiplied by `scale`.
    pub fn with_pairing_scale(&self, scale: f64) -> Result<Self> {
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::Contract(format!("pairing_scale must be finite and nonzero, got {scale}")));
        }
        Ok(Self::build(self.0.kind, scale))
    }

    fn build(kind: GroupKind, pairing_scale: f64) -> Self {
        let (n, basis) = basis_for(kind);
        let d = basis.len();
        let frobenius = DMatrix::from_fn(d, d, |i, j| re_trace(&(basis[i].mat.adjoint() * &basis[j].mat)));
        let frobenius_inv = frobenius.try_inverse().expect("basis is linearly independent");
        let pairing = DMatrix::from_fn(d, d, |i, j| pairing_scale * re_trace(&(&basis[i].mat * &basis[j].mat)));
        let mut data = ModelData {
            kind,
            matrix_size: n,
            basis,
            pairing_scale,
            membership_tol: 1e-9,
            log_radius: 1.0,
            frobenius_inv,
            pairing,
            structure: Vec::new(),
        };
        let structure = (0..d)
            .map(|i| {
                let cols: Vec<DVector<f64>> = (0..d)
                    .map(|j| coords_in(&data, &ad(&data.basis[i], &data.basis[j]).mat))
                    .collect();
                DMatrix::from_columns(&cols)
            })
            .collect();
        data.structure = structure;
        GroupModel(Arc::new(data))
    }

    pub fn kind(&self) -> GroupKind {
        self.0.kind
    }

    pub fn name(&self) -> &'static str {
        self.0.kind.name()
    }

    /// Dimension of the Lie algebra.
    pub fn dim(&self) -> usize {
        self.0.basis.len()
    }

    pub fn matrix_size(&self) -> usize {
        self.0.matrix_size
    }

    pub fn basis(&self) -> &[AlgebraVector] {
        &self.0.basis
    }

    pub fn pairing_scale(&self) -> f64 {
        self.0.pairing_scale
    }

    pub fn membership_tol(&self) -> f64 {
        self.0.membership_tol
    }

    pub fn log_radius(&self) -> f64 {
        self.0.log_radius
    }

    /// True when all brackets vanish.
    pub fn is_abelian(&self) -> bool {
        self.0.structure.iter().all(|m| m.iter().all(|v| *v == 0.0))
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement::identity(self.0.matrix_size)
    }

    pub fn zero(&self) -> AlgebraVector {
        AlgebraVector::zeros(self.0.matrix_size)
    }

    // ---- coordinates -------------------------------------------------

    /// Coordinates of `x` in the algebra basis (orthogonal projection under
    /// the Frobenius inner product for matrices off the algebra).
    pub fn coords(&self, x: &AlgebraVector) -> DVector<f64> {
        coords_in(&self.0, &x.mat)
    }

    pub fn from_coords(&self, c: &DVector<f64>) -> AlgebraVector {
        let n = self.0.matrix_size;
        let mut m = CMatrix::zeros(n, n);
        for (ci, b) in c.iter().zip(&self.0.basis) {
            m += b.mat.map(|z| z * *ci);
        }
        AlgebraVector::new(m)
    }

    pub fn project(&self, m: &CMatrix) -> AlgebraVector {
        self.from_coords(&coords_in(&self.0, m))
    }

    // ---- membership --------------------------------------------------

    /// Distance of `x` from the algebra.
    pub fn algebra_residual(&self, x: &AlgebraVector) -> f64 {
        (&x.mat - &self.project(&x.mat).mat).norm()
    }

    /// Residual of the defining relations of the group.
    pub fn group_residual(&self, g: &GroupElement) -> f64 {
        let m = &g.mat;
        let n = self.0.matrix_size;
        let eye = CMatrix::identity(n, n);
        let imag = || m.map(|z| z.im).norm();
        let det1 = || (m.determinant() - c(1.0, 0.0)).norm();
        match self.0.kind {
            GroupKind::Su2 => (m.adjoint() * m - &eye).norm() + det1(),
            GroupKind::So3 => imag() + (m.transpose() * m - &eye).norm() + det1(),
            GroupKind::T2 => {
                let mut r = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            r += (m[(i, i)].norm() - 1.0).abs();
                        } else {
                            r += m[(i, j)].norm();
                        }
                    }
                }
                r
            }
            GroupKind::Sl2r => imag() + det1(),
        }
    }

    pub fn check_group(&self, g: &GroupElement) -> Result<()> {
        let residual = self.group_residual(g);
        let scale = g.mat.norm().max(1.0);
        if residual <= self.0.membership_tol * scale * scale {
            Ok(())
        } else {
            Err(Error::Membership {
                model: self.name().to_string(),
                residual,
            })
        }
    }

    pub fn check_algebra(&self, x: &AlgebraVector) -> Result<()> {
        let residual = self.algebra_residual(x);
        if residual <= self.0.membership_tol * x.norm().max(1.0) {
            Ok(())
        } else {
            Err(Error::Membership {
                model: self.name().to_string(),
                residual,
            })
        }
    }

    // ---- exp / log ---------------------------------------------------

    /// Matrix exponential, checked against the group relations.
    pub fn exp(&self, x: &AlgebraVector) -> Result<GroupElement> {
        let g = GroupElement::new(x.mat.clone().exp());
        self.check_group(&g)?;
        Ok(g)
    }

    pub fn exp_coords(&self, c: &DVector<f64>) -> Result<GroupElement> {
        self.exp(&self.from_coords(c))
    }

    /// Principal logarithm, projected onto the algebra. Requires
    /// `|g - 1| < log_radius` in operator norm.
    pub fn log(&self, g: &GroupElement) -> Result<AlgebraVector> {
        let n = self.0.matrix_size;
        let dist = operator_norm(&(&g.mat - CMatrix::identity(n, n)));
        if dist >= self.0.log_radius {
            return Err(Error::Domain(format!(
                "log: |g - 1| = {dist:.6} exceeds log_radius {}",
                self.0.log_radius
            )));
        }
        Ok(self.project(&principal_log(&g.mat)?))
    }

    pub fn log_coords(&self, g: &GroupElement) -> Result<DVector<f64>> {
        Ok(self.coords(&self.log(g)?))
    }

    // ---- adjoint operators and pairing -------------------------------

    /// `Ad_g x = g x g^{-1}`.
    pub fn adjoint(&self, g: &GroupElement, x: &AlgebraVector) -> AlgebraVector {
        AlgebraVector::new(&g.mat * &x.mat * g.inverse().mat)
    }

    /// Matrix of `Ad_g` in basis coordinates.
    pub fn adjoint_matrix(&self, g: &GroupElement) -> DMatrix<f64> {
        let ginv = g.inverse();
        let cols: Vec<DVector<f64>> = self
            .0
            .basis
            .iter()
            .map(|b| coords_in(&self.0, &(&g.mat * &b.mat * &ginv.mat)))
            .collect();
        DMatrix::from_columns(&cols)
    }

    /// Matrix of `ad_x` in basis coordinates, from the coordinates of `x`.
    pub fn ad_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for (xi, s) in x.iter().zip(&self.0.structure) {
            m += s * *xi;
        }
        m
    }

    /// `<a, b> = pairing_scale * Re tr(ab)`.
    pub fn pair(&self, a: &AlgebraVector, b: &AlgebraVector) -> f64 {
        self.0.pairing_scale * re_trace(&(&a.mat * &b.mat))
    }

    /// Gram matrix `P` of the pairing: `<a, b> = coords(a)^T P coords(b)`.
    pub fn pairing_matrix(&self) -> &DMatrix<f64> {
        &self.0.pairing
    }

    pub fn pair_coords(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a.transpose() * &self.0.pairing * b)[(0, 0)]
    }

    // ---- dexp --------------------------------------------------------

    /// Left-trivialized differential of exp:
    /// `dexp_x(v) = sum_k (-ad_x)^k v / (k+1)!`.
    pub fn dexp(&self, x: &AlgebraVector, v: &AlgebraVector) -> AlgebraVector {
        let m = self.dexp_matrix(&self.coords(x));
        self.from_coords(&(m * self.coords(v)))
    }

    /// Matrix of `dexp_x` in coordinates.
    pub fn dexp_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let neg_ad = -self.ad_matrix(x);
        series_matrix(&neg_ad, |k| 1.0 / factorial(k + 1))
    }

    pub fn dexp_inverse_matrix(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.dexp_matrix(x)
            .try_inverse()
            .ok_or_else(|| Error::Domain("dexp is not invertible at this point".into()))
    }

    /// Whether `dexp_x` is invertible, judged by the smallest singular value
    /// of its matrix.
    pub fn dexp_invertible(&self, x: &AlgebraVector) -> bool {
        let m = self.dexp_matrix(&self.coords(x));
        let sv = m.singular_values();
        sv.min() > DEXP_SINGULAR_TOL
    }

    // ---- sampling ----------------------------------------------------

    /// Coordinates uniform in `[-scale, scale]`.
    pub fn random_coords<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> DVector<f64> {
        if scale <= 0.0 {
            return DVector::zeros(self.dim());
        }
        DVector::from_fn(self.dim(), |_, _| rng.gen_range(-scale..=scale))
    }

    pub fn random_algebra<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> AlgebraVector {
        let c = self.random_coords(rng, scale);
        self.from_coords(&c)
    }

    pub fn random_group<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> Result<GroupElement> {
        let x = self.random_algebra(rng, scale);
        self.exp(&x)
    }

    pub fn sample_algebra(&self, seed: u64, scale: f64) -> AlgebraVector {
        self.random_algebra(&mut ChaCha8Rng::seed_from_u64(seed), scale)
    }

    pub fn sample_group(&self, seed: u64, scale: f64) -> Result<GroupElement> {
        self.random_group(&mut ChaCha8Rng::seed_from_u64(seed), scale)
    }

    // ---- self-checks -------------------------------------------------

    /// Checks the model invariants: nondegenerate pairing, symmetry and
    /// ad-invariance of the pairing, and group membership of `exp` along
    /// each basis direction. Returns the largest invariance residual.
    pub fn validate(&self) -> Result<f64> {
        let p = &self.0.pairing;
        if p.determinant().abs() < 1e-12 {
            return Err(Error::Contract(format!("{}: pairing is degenerate", self.name())));
        }
        let mut worst: f64 = (p - p.transpose()).amax();
        let basis = &self.0.basis;
        for a in basis {
            for b in basis {
                for cc in basis {
                    let r = self.pair(&ad(cc, a), b) + self.pair(a, &ad(cc, b));
                    worst = worst.max(r.abs());
                }
            }
        }
        if worst > 1e-12 {
            return Err(Error::Contract(format!("{}: pairing not ad-invariant ({worst:e})", self.name())));
        }
        for b in basis {
            for s in [-1.3, -0.4, 0.25, 0.9] {
                self.exp(&b.scale(s))?;
            }
        }
        Ok(worst)
    }
}

fn coords_in(data: &ModelData, m: &CMatrix) -> DVector<f64> {
    let rhs = DVector::from_iterator(
        data.basis.len(),
        data.basis.iter().map(|b| re_trace(&(b.mat.adjoint() * m))),
    );
    &data.frobenius_inv * rhs
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

/// `sum_k coeff(k) * m^k`, truncated once a term's norm falls below
/// [`DEXP_TERM_TOL`] (after the first few terms).
pub(crate) fn series_matrix(m: &DMatrix<f64>, coeff: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let d = m.nrows();
    let mut power = DMatrix::identity(d, d);
    let mut sum = DMatrix::identity(d, d) * coeff(0);
    for k in 1..400 {
        power = &power * m;
        let term = &power * coeff(k);
        let small = term.amax() < DEXP_TERM_TOL;
        sum += term;
        if small && k > 2 {
            break;
        }
    }
    sum
}

/// Largest singular value.
pub fn operator_norm(m: &CMatrix) -> f64 {
    m.clone().singular_values().max()
}

fn denman_beavers_sqrt(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = CMatrix::identity(n, n);
    for _ in 0..100 {
        let yi = y
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Domain("matrix square root: singular iterate".into()))?;
        let zi = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Domain("matrix square root: singular iterate".into()))?;
        let y_next = (&y + zi).map(|v| v * 0.5);
        let z_next = (&z + yi).map(|v| v * 0.5);
        let delta = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.norm() {
            return Ok(y);
        }
    }
    Err(Error::Domain("matrix square root did not converge".into()))
}

/// Principal matrix logarithm by inverse scaling and squaring: repeated
/// square roots until the matrix is close to the identity, then the
/// Mercator series.
pub fn principal_log(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let eye = CMatrix::identity(n, n);
    let mut m = a.clone();
    let mut roots = 0u32;
    while (&m - &eye).norm() > 0.05 {
        m = denman_beavers_sqrt(&m)?;
        roots += 1;
        if roots > 60 {
            return Err(Error::Domain("log: no principal branch".into()));
        }
    }
    let x = &m - &eye;
    let mut power = x.clone();
    let mut sum = x.clone();
    for k in 2..80 {
        power = &power * &x;
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        let term = power.map(|v| v * (sign / k as f64));
        let small = term.norm() < 1e-18;
        sum += term;
        if small {
            break;
        }
    }
    let factor = 2f64.powi(roots as i32);
    Ok(sum.map(|v| v * factor))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn models() -> Vec<GroupModel> {
        GroupKind::ALL.into_iter().map(GroupModel::new).collect()
    }

    #[test]
    fn shipped_models_validate() {
        for m in models() {
            m.validate().unwrap();
        }
    }

    #[test]
    fn exp_of_zero_is_identity() {
        for m in models() {
            let g = m.exp(&m.zero()).unwrap();
            assert!(g.distance(&m.identity()) < 1e-15);
        }
    }

    #[test]
    fn torus_exp_is_diagonal_phases() {
        let m = GroupModel::t2();
        let x = m.from_coords(&DVector::from_vec(vec![0.7, -1.9]));
        let g = m.exp(&x).unwrap();
        assert!((g.mat[(0, 0)] - Complex64::new(0.0, 0.7).exp()).norm() < 1e-14);
        assert!((g.mat[(1, 1)] - Complex64::new(0.0, -1.9).exp()).norm() < 1e-14);
        assert!(g.mat[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn log_identity_is_zero() {
        for m in models() {
            assert!(m.log(&m.identity()).unwrap().norm() < 1e-15);
        }
    }

    #[test]
    fn log_rejects_far_elements() {
        let m = GroupModel::so3();
        let g = m.exp(&m.basis()[2].scale(2.5)).unwrap();
        assert!(m.log(&g).unwrap_err().is_domain());
    }

    #[test]
    fn su2_structure_constants() {
        // [e_i, e_j] = eps_ijk e_k with e_k = -(i/2) sigma_k.
        let m = GroupModel::su2();
        let b = m.basis();
        let table = [(0, 1, 2), (1, 2, 0), (2, 0, 1)];
        for (i, j, k) in table {
            let br = ad(&b[i], &b[j]);
            assert!((br.mat - &b[k].mat).norm() < 1e-15);
        }
        for x in b {
            assert!(ad(x, x).norm() == 0.0);
        }
    }

    #[test]
    fn torus_brackets_vanish() {
        let m = GroupModel::t2();
        assert!(m.is_abelian());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = m.random_algebra(&mut rng, 3.0);
        let y = m.random_algebra(&mut rng, 3.0);
        assert_eq!(ad(&x, &y).norm(), 0.0);
    }

    #[test]
    fn su2_gram_matrix_is_nondegenerate() {
        let m = GroupModel::su2();
        // tr(e_i e_j) = -delta_ij / 2
        let p = m.pairing_matrix();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { -0.5 } else { 0.0 };
                assert!((p[(i, j)] - expected).abs() < 1e-15);
            }
        }
        assert!((p.determinant() + 0.125).abs() < 1e-15);
    }

    #[test]
    fn sl2r_pairing_is_indefinite() {
        let m = GroupModel::sl2r();
        let eig = m.pairing_matrix().clone().symmetric_eigenvalues();
        assert!(eig.iter().any(|v| *v > 0.0) && eig.iter().any(|v| *v < 0.0));
    }

    #[test]
    fn adjoint_basics() {
        let m = GroupModel::su2();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = m.random_algebra(&mut rng, 1.0);
        let id = m.identity();
        assert!((m.adjoint(&id, &x).mat - &x.mat).norm() < 1e-15);
        let g = m.exp(&x).unwrap();
        assert!((m.adjoint(&g, &x).mat - &x.mat).norm() < 1e-14);
    }

    #[test]
    fn dexp_at_zero_is_identity_and_abelian_is_identity() {
        let m = GroupModel::su2();
        assert_eq!(m.dexp_matrix(&DVector::zeros(3)), DMatrix::identity(3, 3));
        let t = GroupModel::t2();
        let x = DVector::from_vec(vec![2.0, -3.0]);
        assert_eq!(t.dexp_matrix(&x), DMatrix::identity(2, 2));
    }

    #[test]
    fn dexp_singular_at_two_pi() {
        let m = GroupModel::su2();
        // ad_x has eigenvalues 0, +-i|c|; dexp is singular at |c| = 2 pi.
        let x = m.basis()[0].scale(2.0 * std::f64::consts::PI);
        assert!(!m.dexp_invertible(&x));
        assert!(m.dexp_invertible(&m.basis()[0].scale(6.0)));
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let m = GroupModel::so3();
        assert_eq!(m.sample_algebra(17, 0.4), m.sample_algebra(17, 0.4));
        assert_eq!(m.sample_group(17, 0.4).unwrap(), m.sample_group(17, 0.4).unwrap());
        assert_eq!(m.sample_algebra(3, 0.0).norm(), 0.0);
        assert!(m.sample_group(3, 0.0).unwrap().distance(&m.identity()) < 1e-15);
        for seed in 0..50 {
            let c = m.coords(&m.sample_algebra(seed, 0.4));
            assert!(c.iter().all(|v| v.abs() <= 0.4));
        }
    }

    #[test]
    fn pairing_scale_rescales_pair() {
        let m = GroupModel::su2();
        let m2 = m.with_pairing_scale(-3.0).unwrap();
        let a = m.basis()[0].clone();
        assert!((m2.pair(&a, &a) + 3.0 * m.pair(&a, &a)).abs() < 1e-15);
        assert!(m.with_pairing_scale(0.0).is_err());
    }

    #[test]
    fn broken_element_fails_membership() {
        let m = GroupModel::su2();
        let g = GroupElement::new(m.identity().mat * Complex64::new(1.1, 0.0));
        assert!(matches!(m.check_group(&g), Err(Error::Membership { .. })));
    }
}
