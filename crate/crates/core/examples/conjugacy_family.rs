//! The deformation from a conjugacy class to an adjoint orbit, including
//! the admissible t interval and a rejected element.

use nalgebra::DVector;
use qhdef::axioms::{check_family, CheckConfig};
use qhdef::families::conj_family;
use qhdef::liegroup::GroupModel;

fn main() -> qhdef::error::Result<()> {
    let model = GroupModel::su2();
    let x = model.from_coords(&DVector::from_column_slice(&[0.6, 0.4, 0.3464]));
    let family = conj_family(&model, &x)?;
    println!("t domain {:?}", family.t_domain());
    let report = check_family(&family, &[1.0, 0.5, 0.25, 0.0], &CheckConfig { samples: 8, ..Default::default() })?;
    for f in &report.fibers {
        let failing: Vec<&str> = f.report.axioms.iter().filter(|a| !a.pass).map(|a| a.name.as_str()).collect();
        println!("t = {:<5} pass {:<5} failing {:?}", f.t, f.report.pass, failing);
    }

    let far = model.from_coords(&DVector::from_column_slice(&[7.0, 0.0, 0.0]));
    match conj_family(&model, &far) {
        Err(e) => println!("rejected: {e}"),
        Ok(f) => println!("accepted with domain {:?}", f.t_domain()),
    }
    Ok(())
}
