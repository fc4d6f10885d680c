//! Chart-local differential geometry: finite-difference Jacobians, the
//! exterior derivative of a 2-form, Gram ranks, and the pairing-wedge of
//! algebra-valued 1-forms.
//!
//! Forms are always evaluated in the coordinate frame of a chart. Coordinate
//! fields commute, so `d` of a 2-form needs no bracket terms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::liegroup::{AlgebraVector, GroupElement, GroupModel};

/// Default central-difference step on unit-scale coordinates.
pub const DEFAULT_FD_STEP: f64 = 1e-4;
/// Default validity radius of group charts `g0 * exp(sum u_k b_k)`.
pub const GROUP_CHART_RADIUS: f64 = 0.3;

/// A local parameterization `u -> point`, valid for `|u| < domain_radius`.
pub struct Chart<P> {
    pub dim: usize,
    pub domain_radius: f64,
    embed: Box<dyn Fn(&DVector<f64>) -> Result<P> + Send + Sync>,
}

impl<P> Chart<P> {
    pub fn new(
        dim: usize,
        domain_radius: f64,
        embed: impl Fn(&DVector<f64>) -> Result<P> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            domain_radius,
            embed: Box::new(embed),
        }
    }

    pub fn contains(&self, u: &DVector<f64>) -> bool {
        u.len() == self.dim && u.norm() < self.domain_radius
    }

    pub fn embed(&self, u: &DVector<f64>) -> Result<P> {
        check_domain(u, self.domain_radius)?;
        (self.embed)(u)
    }
}

pub(crate) fn check_domain(u: &DVector<f64>, radius: f64) -> Result<()> {
    let r = u.norm();
    if r < radius {
        Ok(())
    } else {
        Err(Error::Domain(format!("chart coordinate |u| = {r:.4} outside radius {radius}")))
    }
}

/// The chart `u -> g0 * exp(sum u_k b_k)` on a group.
pub fn group_chart(model: &GroupModel, base: GroupElement) -> Chart<GroupElement> {
    let m = model.clone();
    Chart::new(model.dim(), GROUP_CHART_RADIUS, move |u| {
        Ok(base.mul(&m.exp_coords(u)?))
    })
}

/// A 2-form in the coordinate frame of a chart.
pub trait TwoForm {
    fn dim(&self) -> usize;

    /// The antisymmetric matrix `omega(d_i, d_j)` at `u`.
    fn matrix(&self, u: &DVector<f64>) -> Result<DMatrix<f64>>;

    fn eval(&self, u: &DVector<f64>, i: usize, j: usize) -> Result<f64> {
        Ok(self.matrix(u)?[(i, j)])
    }
}

/// A [`TwoForm`] backed by a closure.
pub struct FnTwoForm<F> {
    dim: usize,
    f: F,
}

impl<F> FnTwoForm<F>
where
    F: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> TwoForm for FnTwoForm<F>
where
    F: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn matrix(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(antisymmetrize(&(self.f)(u)?))
    }
}

/// `(m - m^T) / 2`, exactly antisymmetric.
pub fn antisymmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else if i < j {
            0.5 * (m[(i, j)] - m[(j, i)])
        } else {
            -0.5 * (m[(j, i)] - m[(i, j)])
        }
    })
}

fn shifted(u: &DVector<f64>, k: usize, delta: f64) -> DVector<f64> {
    let mut v = u.clone();
    v[k] += delta;
    v
}

/// Central-difference Jacobian; column `k` is
/// `(f(u + h e_k) - f(u - h e_k)) / 2h`.
pub fn fd_jacobian<F>(f: F, u: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if step <= 0.0 {
        return Err(Error::Contract("finite-difference step must be positive".into()));
    }
    let m = u.len();
    let mut cols = Vec::with_capacity(m);
    for k in 0..m {
        let plus = f(&shifted(u, k, step))?;
        let minus = f(&shifted(u, k, -step))?;
        cols.push((plus - minus) / (2.0 * step));
    }
    if cols.is_empty() {
        let n = f(u)?.len();
        return Ok(DMatrix::zeros(n, 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// `(d omega)(d_i, d_j, d_k) = d_i omega_jk - d_j omega_ik + d_k omega_ij`
/// by central differences.
pub fn ext_deriv_2form(
    form: &dyn TwoForm,
    u: &DVector<f64>,
    (i, j, k): (usize, usize, usize),
    step: f64,
) -> Result<f64> {
    let partial = |axis: usize, a: usize, b: usize| -> Result<f64> {
        let plus = form.eval(&shifted(u, axis, step), a, b)?;
        let minus = form.eval(&shifted(u, axis, -step), a, b)?;
        Ok((plus - minus) / (2.0 * step))
    };
    Ok(partial(i, j, k)? - partial(j, i, k)? + partial(k, i, j)?)
}

/// The exterior derivative on every increasing triple, from `2 * dim`
/// matrix evaluations. Triples are listed in lexicographic order.
pub fn ext_deriv_all(
    form: &dyn TwoForm,
    u: &DVector<f64>,
    step: f64,
) -> Result<Vec<((usize, usize, usize), f64)>> {
    let n = form.dim();
    let derivs: Vec<DMatrix<f64>> = (0..n)
        .map(|axis| {
            let plus = form.matrix(&shifted(u, axis, step))?;
            let minus = form.matrix(&shifted(u, axis, -step))?;
            Ok((plus - minus) / (2.0 * step))
        })
        .collect::<Result<_>>()?;
    Ok(ext_deriv_from_partials(&derivs))
}

/// Assemble `d omega` from precomputed partial derivatives of the form
/// matrix, `partials[axis] = d_axis omega`.
pub fn ext_deriv_from_partials(partials: &[DMatrix<f64>]) -> Vec<((usize, usize, usize), f64)> {
    let n = partials.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let v = partials[i][(j, k)] - partials[j][(i, k)] + partials[k][(i, j)];
                out.push(((i, j, k), v));
            }
        }
    }
    out
}

/// Rank of an antisymmetric matrix and a basis of its kernel. Singular
/// values below `tol * max(largest singular value, 1 if all are tiny)`
/// count as zero.
pub fn gram_rank_matrix(m: &DMatrix<f64>, tol: f64) -> (usize, Vec<DVector<f64>>) {
    let n = m.nrows();
    if n == 0 {
        return (0, Vec::new());
    }
    let svd = m.clone().svd(false, true);
    let sv = &svd.singular_values;
    let largest = sv.max();
    let reference = if largest < tol { 1.0 } else { largest };
    let v_t = svd.v_t.expect("requested V^T");
    let mut rank = 0;
    let mut kernel = Vec::new();
    for (idx, s) in sv.iter().enumerate() {
        if *s > tol * reference {
            rank += 1;
        } else {
            kernel.push(v_t.row(idx).transpose());
        }
    }
    (rank, kernel)
}

pub fn gram_rank(form: &dyn TwoForm, u: &DVector<f64>, tol: f64) -> Result<(usize, Vec<DVector<f64>>)> {
    Ok(gram_rank_matrix(&form.matrix(u)?, tol))
}

/// `<a1(u), a2(v)> - <a1(v), a2(u)>` for algebra-valued 1-forms given by
/// their values on the tangent pair `(u, v)`. The conventional factor 1/2
/// is left to the caller.
pub fn wedge_pair(
    model: &GroupModel,
    a1_u: &AlgebraVector,
    a1_v: &AlgebraVector,
    a2_u: &AlgebraVector,
    a2_v: &AlgebraVector,
) -> f64 {
    model.pair(a1_u, a2_v) - model.pair(a1_v, a2_u)
}

/// Matrix form of [`wedge_pair`] on a whole frame: columns of `a1`, `a2`
/// are the 1-forms' coordinate values on each frame vector.
pub fn wedge_pair_matrix(pairing: &DMatrix<f64>, a1: &DMatrix<f64>, a2: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a1.transpose() * pairing * a2;
    &m - m.transpose()
}
