//! Exponential, logarithm, adjoint action and the left-trivialized dexp on
//! each matrix model.

use nalgebra::DVector;
use qhdef::liegroup::GroupModel;

fn main() -> qhdef::error::Result<()> {
    for model in [GroupModel::su2(), GroupModel::so3(), GroupModel::t2(), GroupModel::sl2r()] {
        let x = model.coords(&model.sample_algebra(1, 0.4));
        let g = model.exp_coords(&x)?;
        let back = model.log_coords(&g)?;
        let v = DVector::from_element(model.dim(), 1.0);
        println!(
            "{:5} dim {}  |log(exp x) - x| = {:.1e}  Ad_g v = {:?}  det dexp_x = {:.4}",
            model.name(),
            model.dim(),
            (back - &x).amax(),
            (model.adjoint_matrix(&g) * &v).as_slice(),
            model.dexp_matrix(&x).determinant()
        );
    }
    Ok(())
}
