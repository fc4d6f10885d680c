//! The deformation from the double to the cotangent bundle: per-t axiom
//! suites, distance to the t = 0 fiber and the fitted convergence order.

use qhdef::axioms::{check_family, CheckConfig};
use qhdef::families::double_family;
use qhdef::liegroup::GroupModel;

fn main() -> qhdef::error::Result<()> {
    let family = double_family(&GroupModel::su2());
    let grid = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.0];
    let report = check_family(&family, &grid, &CheckConfig { samples: 16, ..Default::default() })?;
    for row in report.rows("form_vs_limit") {
        println!("t = {:<7} |omega_t - omega_0| = {:.3e}", row.t, row.max_residual);
    }
    println!("order {:?}, pass {}", report.slope, report.pass);
    Ok(())
}
