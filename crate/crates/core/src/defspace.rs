//! The deformation of a group to its Lie algebra,
//! `(G x R^x) ⊔ (g x {0})`, through its exponential chart
//! `phi(x, t) = (exp(t x), t)` for `t != 0` and `(x, 0)` at `t = 0`.
//!
//! Provides the conjugation action, fiberwise multiplication (group product
//! away from zero, addition on the zero fiber) and the rescaled
//! Maurer–Cartan forms in chart coordinates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::liegroup::{ad, AlgebraVector, GroupElement, GroupModel};

/// Fiberwise equality tolerance for [`DefPoint::approx_eq`].
pub const DEF_POINT_TOL: f64 = 1e-9;

/// A point of the deformation space.
#[derive(Clone, Debug, PartialEq)]
pub enum DefPoint {
    /// `(g, t)` with `t != 0`.
    Group { g: GroupElement, t: f64 },
    /// `(x, 0)` on the zero fiber.
    Algebra { x: AlgebraVector },
}

impl DefPoint {
    pub fn group(g: GroupElement, t: f64) -> Result<Self> {
        if t == 0.0 {
            return Err(Error::Contract("group payload requires t != 0".into()));
        }
        Ok(DefPoint::Group { g, t })
    }

    pub fn algebra(x: AlgebraVector) -> Self {
        DefPoint::Algebra { x }
    }

    pub fn t(&self) -> f64 {
        match self {
            DefPoint::Group { t, .. } => *t,
            DefPoint::Algebra { .. } => 0.0,
        }
    }

    /// Matrix distance between payloads on the same fiber; `None` across
    /// fibers.
    pub fn distance(&self, other: &DefPoint) -> Option<f64> {
        match (self, other) {
            (DefPoint::Group { g: a, t: s }, DefPoint::Group { g: b, t }) if s == t => Some(a.distance(b)),
            (DefPoint::Algebra { x: a }, DefPoint::Algebra { x: b }) => Some((&a.mat - &b.mat).norm()),
            _ => None,
        }
    }

    pub fn approx_eq(&self, other: &DefPoint) -> bool {
        self.distance(other).is_some_and(|d| d <= DEF_POINT_TOL)
    }
}

/// Chart coordinates `(x, t)` of the exponential chart.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartPoint {
    pub x: AlgebraVector,
    pub t: f64,
}

impl ChartPoint {
    pub fn new(x: AlgebraVector, t: f64) -> Self {
        Self { x, t }
    }
}

pub fn phi(model: &GroupModel, c: &ChartPoint) -> Result<DefPoint> {
    if c.t == 0.0 {
        Ok(DefPoint::algebra(c.x.clone()))
    } else {
        DefPoint::group(model.exp(&c.x.scale(c.t))?, c.t)
    }
}

/// Inverse of [`phi`] near the identity: `((1/t) log g, t)`.
pub fn phi_inv(model: &GroupModel, p: &DefPoint) -> Result<ChartPoint> {
    match p {
        DefPoint::Algebra { x } => Ok(ChartPoint::new(x.clone(), 0.0)),
        DefPoint::Group { g, t } => Ok(ChartPoint::new(model.log(g)?.scale(1.0 / t), *t)),
    }
}

/// Conjugation on nonzero fibers, the adjoint action on the zero fiber.
pub fn conj_act(model: &GroupModel, g: &GroupElement, p: &DefPoint) -> DefPoint {
    match p {
        DefPoint::Group { g: a, t } => DefPoint::Group {
            g: g.mul(a).mul(&g.inverse()),
            t: *t,
        },
        DefPoint::Algebra { x } => DefPoint::Algebra { x: model.adjoint(g, x) },
    }
}

/// Fiberwise product: `(ab, t)` for `t != 0`, `(a + b, 0)` at `t = 0`.
pub fn mul(p: &DefPoint, q: &DefPoint) -> Result<DefPoint> {
    match (p, q) {
        (DefPoint::Group { g: a, t: s }, DefPoint::Group { g: b, t }) if s == t => DefPoint::group(a.mul(b), *t),
        (DefPoint::Algebra { x: a }, DefPoint::Algebra { x: b }) => Ok(DefPoint::algebra(a.clone() + b.clone())),
        _ => Err(Error::Contract(format!(
            "mul needs points on one fiber, got t = {} and t = {}",
            p.t(),
            q.t()
        ))),
    }
}

/// The product in chart coordinates: `((1/t) log(exp(tx) exp(ty)), t)`,
/// and `(x + y, 0)` at `t = 0`.
pub fn mul_chart(model: &GroupModel, a: &ChartPoint, b: &ChartPoint) -> Result<ChartPoint> {
    let m = mul_chart_coords(model, &model.coords(&a.x), &model.coords(&b.x), a.t, b.t)?;
    Ok(ChartPoint::new(model.from_coords(&m), a.t))
}

pub(crate) fn mul_chart_coords(
    model: &GroupModel,
    x: &DVector<f64>,
    y: &DVector<f64>,
    s: f64,
    t: f64,
) -> Result<DVector<f64>> {
    if s != t {
        return Err(Error::Contract(format!("mul_chart needs equal t, got {s} and {t}")));
    }
    if t == 0.0 {
        return Ok(x + y);
    }
    let g = model.exp_coords(&(x * t))?.mul(&model.exp_coords(&(y * t))?);
    Ok(model.log_coords(&g)? / t)
}

/// Baker–Campbell–Hausdorff series through degree 4:
/// `x + y + [x,y]/2 + ([x,[x,y]] + [y,[y,x]])/12 - [y,[x,[x,y]]]/24`.
pub fn bch_degree4(x: &AlgebraVector, y: &AlgebraVector) -> AlgebraVector {
    let xy = ad(x, y);
    let x_xy = ad(x, &xy);
    let y_yx = ad(y, &ad(y, x));
    let y_x_xy = ad(y, &x_xy);
    x.clone() + y.clone() + xy.scale(0.5) + (x_xy + y_yx).scale(1.0 / 12.0) - y_x_xy.scale(1.0 / 24.0)
}

/// Which Maurer–Cartan form to rescale.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    L,
    R,
}

/// Rescaled Maurer–Cartan form on a fiber direction `v` at chart point
/// `c`: `dexp_{tx}(v)` for the left form, `Ad_{exp(tx)} dexp_{tx}(v)` for
/// the right one; both are the identity at `t = 0`.
pub fn theta_hat(model: &GroupModel, side: Side, c: &ChartPoint, v: &AlgebraVector) -> Result<AlgebraVector> {
    let m = theta_hat_matrix(model, side, &model.coords(&c.x), c.t)?;
    Ok(model.from_coords(&(m * model.coords(v))))
}

pub(crate) fn theta_hat_matrix(model: &GroupModel, side: Side, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
    let d = model.dim();
    if t == 0.0 {
        return Ok(DMatrix::identity(d, d));
    }
    let tx = x * t;
    let left = model.dexp_matrix(&tx);
    Ok(match side {
        Side::L => left,
        Side::R => model.adjoint_matrix(&model.exp_coords(&tx)?) * left,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::GroupModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn su2() -> GroupModel {
        GroupModel::su2()
    }

    #[test]
    fn phi_on_zero_fiber_and_unit_fiber() {
        let m = su2();
        let x = m.sample_algebra(1, 0.5);
        assert_eq!(phi(&m, &ChartPoint::new(x.clone(), 0.0)).unwrap(), DefPoint::algebra(x.clone()));
        let p = phi(&m, &ChartPoint::new(x.clone(), 1.0)).unwrap();
        assert!(p.approx_eq(&DefPoint::group(m.exp(&x).unwrap(), 1.0).unwrap()));
        let q = phi(&m, &ChartPoint::new(m.zero(), 0.3)).unwrap();
        assert!(q.approx_eq(&DefPoint::group(m.identity(), 0.3).unwrap()));
    }

    #[test]
    fn phi_inv_of_identity_and_roundtrip() {
        let m = su2();
        let c = phi_inv(&m, &DefPoint::group(m.identity(), 0.7).unwrap()).unwrap();
        assert!(c.x.norm() < 1e-15 && c.t == 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = m.random_algebra(&mut rng, 0.8);
            for t in [-0.9, 0.1, 0.5, 1.0] {
                let p = phi(&m, &ChartPoint::new(x.clone(), t)).unwrap();
                let back = phi(&m, &phi_inv(&m, &p).unwrap()).unwrap();
                assert!(back.distance(&p).unwrap() <= 1e-9);
            }
        }
    }

    #[test]
    fn torus_phi_inv_is_exact() {
        let m = GroupModel::t2();
        let x = m.from_coords(&DVector::from_vec(vec![0.25, -0.5]));
        let c = phi_inv(&m, &phi(&m, &ChartPoint::new(x.clone(), 0.5)).unwrap()).unwrap();
        assert!((c.x.mat - x.mat).norm() < 1e-15);
    }

    #[test]
    fn conj_act_identity_and_zero_fiber() {
        let m = su2();
        let x = m.sample_algebra(2, 0.7);
        let g = m.sample_group(3, 1.0).unwrap();
        let p0 = DefPoint::algebra(x.clone());
        assert_eq!(conj_act(&m, &m.identity(), &p0), p0);
        assert!(conj_act(&m, &g, &p0).approx_eq(&DefPoint::algebra(m.adjoint(&g, &x))));
    }

    #[test]
    fn conj_act_is_equivariant_in_the_chart() {
        let m = su2();
        let x = m.sample_algebra(4, 0.5);
        let g = m.sample_group(5, 1.0).unwrap();
        for t in [0.0, 0.25, 1.0] {
            let c = ChartPoint::new(x.clone(), t);
            let moved = phi_inv(&m, &conj_act(&m, &g, &phi(&m, &c).unwrap())).unwrap();
            assert!((moved.x.mat - m.adjoint(&g, &x).mat).norm() <= 1e-9);
        }
    }

    #[test]
    fn mul_on_fibers() {
        let m = su2();
        let x = m.sample_algebra(6, 0.5);
        let y = m.sample_algebra(7, 0.5);
        let s = mul(&DefPoint::algebra(x.clone()), &DefPoint::algebra(y.clone())).unwrap();
        assert!(s.approx_eq(&DefPoint::algebra(x.clone() + y.clone())));
        let a = m.exp(&x).unwrap();
        let b = m.exp(&y).unwrap();
        let p = mul(&DefPoint::group(a.clone(), 1.0).unwrap(), &DefPoint::group(b.clone(), 1.0).unwrap()).unwrap();
        assert!(p.approx_eq(&DefPoint::group(a.mul(&b), 1.0).unwrap()));
        assert!(mul(&DefPoint::group(a, 1.0).unwrap(), &DefPoint::algebra(y)).is_err());
    }

    #[test]
    fn mul_chart_zero_fiber_and_commuting() {
        let m = su2();
        let x = m.sample_algebra(8, 0.5);
        let y = m.sample_algebra(9, 0.5);
        let z = mul_chart(&m, &ChartPoint::new(x.clone(), 0.0), &ChartPoint::new(y.clone(), 0.0)).unwrap();
        assert!((z.x.mat - (x.clone() + y).mat).norm() < 1e-15);
        let x2 = x.scale(-0.6);
        for t in [0.1, 0.5, 1.0] {
            let z = mul_chart(&m, &ChartPoint::new(x.clone(), t), &ChartPoint::new(x2.clone(), t)).unwrap();
            assert!((z.x.mat - x.scale(0.4).mat).norm() < 1e-12);
        }
        assert!(mul_chart(&m, &ChartPoint::new(x.clone(), 0.1), &ChartPoint::new(x, 0.2)).is_err());
    }

    #[test]
    fn torus_mul_chart_is_additive() {
        let m = GroupModel::t2();
        let x = m.from_coords(&DVector::from_vec(vec![0.2, -0.1]));
        let y = m.from_coords(&DVector::from_vec(vec![-0.3, 0.15]));
        for t in [0.0, 0.3, 1.0] {
            let z = mul_chart(&m, &ChartPoint::new(x.clone(), t), &ChartPoint::new(y.clone(), t)).unwrap();
            assert!((z.x.mat - (x.clone() + y.clone()).mat).norm() < 1e-14);
        }
    }

    #[test]
    fn theta_hat_identity_at_zero_and_abelian() {
        let m = su2();
        let x = m.sample_algebra(10, 0.5);
        let v = m.sample_algebra(11, 0.5);
        for side in [Side::L, Side::R] {
            let w = theta_hat(&m, side, &ChartPoint::new(x.clone(), 0.0), &v).unwrap();
            assert_eq!(w, m.from_coords(&m.coords(&v)));
        }
        let t = GroupModel::t2();
        let xt = t.sample_algebra(12, 1.0);
        let vt = t.sample_algebra(13, 1.0);
        for side in [Side::L, Side::R] {
            let w = theta_hat(&t, side, &ChartPoint::new(xt.clone(), 0.8), &vt).unwrap();
            assert!((w.mat - &vt.mat).norm() < 1e-15);
        }
    }

    #[test]
    fn theta_hat_matches_finite_differences() {
        // Left: (1/t) log(exp(tx)^-1 exp(t(x + h v))) / h; right: the same
        // with the factors in the other order.
        let h = 1e-5;
        for m in [GroupModel::su2(), GroupModel::so3(), GroupModel::sl2r()] {
            let mut rng = ChaCha8Rng::seed_from_u64(20);
            for t in [1.0, 0.4, -0.7] {
                let x = m.random_coords(&mut rng, 0.6);
                let v = m.random_coords(&mut rng, 1.0);
                let base = m.exp_coords(&(&x * t)).unwrap();
                let shifted = |s: f64| m.exp_coords(&((&x + &v * s) * t)).unwrap();
                let left = |s: f64| m.log_coords(&base.inverse().mul(&shifted(s))).unwrap() / t;
                let right = |s: f64| m.log_coords(&shifted(s).mul(&base.inverse())).unwrap() / t;
                let fd_l = (left(h) - left(-h)) / (2.0 * h);
                let fd_r = (right(h) - right(-h)) / (2.0 * h);
                let l = theta_hat_matrix(&m, Side::L, &x, t).unwrap() * &v;
                let r = theta_hat_matrix(&m, Side::R, &x, t).unwrap() * &v;
                assert!((fd_l - l).amax() < 1e-7, "{} left at t={t}", m.name());
                assert!((fd_r - r).amax() < 1e-7, "{} right at t={t}", m.name());
            }
        }
    }

    #[test]
    fn bch_truncation_error_is_fifth_order() {
        let m = su2();
        let x = m.sample_algebra(30, 1.0);
        let y = m.sample_algebra(31, 1.0);
        let err = |s: f64| {
            let exact = m.log(&m.exp(&x.scale(s)).unwrap().mul(&m.exp(&y.scale(s)).unwrap())).unwrap();
            (exact.mat - bch_degree4(&x.scale(s), &y.scale(s)).mat).norm()
        };
        let slope = (err(0.1) / err(0.05)).log2();
        assert!((slope - 5.0).abs() < 0.3, "slope {slope}");
    }

    #[test]
    fn mul_chart_converges_to_sum() {
        let m = su2();
        let x = m.sample_algebra(40, 0.8);
        let y = m.sample_algebra(41, 0.8);
        let sum = m.coords(&(x.clone() + y.clone()));
        let gap = |t: f64| (mul_chart_coords(&m, &m.coords(&x), &m.coords(&y), t, t).unwrap() - &sum).norm();
        let ratio = gap(0.02) / gap(0.01);
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }
}
