//! Axiom suites on the basic spaces, one table per group.

use qhdef::axioms::{check_ham, check_qh, CheckConfig, Report};
use qhdef::liegroup::GroupModel;
use qhdef::spaces::{conj_class_space, double_space, orbit_space, tstar_space};

fn print(r: &Report) {
    println!("  {:<10} pass={:<5} ranks {}..{} of {}", r.space, r.pass, r.ranks.min_rank, r.ranks.max_rank, r.ranks.chart_dim);
    for a in &r.axioms {
        println!("    {:<20} max {:.2e}  mean {:.2e}  {}", a.name, a.max_residual, a.mean_residual, if a.pass { "ok" } else { "FAIL" });
    }
}

fn main() -> qhdef::error::Result<()> {
    let cfg = CheckConfig { samples: 16, ..Default::default() };
    for model in [GroupModel::su2(), GroupModel::so3(), GroupModel::t2(), GroupModel::sl2r()] {
        println!("{}", model.name());
        let x = model.sample_algebra(3, 0.5);
        let f = model.exp(&x)?;
        print(&check_qh(&double_space(&model), &cfg)?);
        print(&check_ham(&tstar_space(&model), &cfg)?);
        print(&check_qh(&conj_class_space(&model, &f)?, &cfg)?);
        print(&check_ham(&orbit_space(&model, &x)?, &cfg)?);
    }
    Ok(())
}
