//! Sweep the eight sign conventions on the double and the cotangent bundle
//! and report the one under which both pass.

use qhdef::axioms::{calibrate, CheckConfig};
use qhdef::liegroup::GroupModel;
use qhdef::spaces::{double_space, tstar_space};

fn main() -> qhdef::error::Result<()> {
    let model = GroupModel::su2();
    let cal = calibrate(&[double_space(&model), tstar_space(&model)], &CheckConfig { samples: 8, ..Default::default() })?;
    for (signs, worst) in &cal.scores {
        println!("{signs:?}: worst residual {worst:.2e}");
    }
    println!("chosen: {:?}", cal.chosen);
    Ok(())
}
