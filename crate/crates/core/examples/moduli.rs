//! Moduli spaces of flat connections on a surface with boundary, and the
//! family that joins the quasi-Hamiltonian and Hamiltonian versions.

use qhdef::axioms::{check_ham, check_qh, CheckConfig};
use qhdef::families::moduli_family;
use qhdef::fusion::{moduli_ham, moduli_qh};
use qhdef::liegroup::GroupModel;

fn main() -> qhdef::error::Result<()> {
    let model = GroupModel::su2();
    let cfg = CheckConfig { samples: 8, ..Default::default() };
    for (g, r) in [(1, 1), (0, 2), (1, 2)] {
        let qh = check_qh(&moduli_qh(&model, g, r)?, &cfg)?;
        let ham = check_ham(&moduli_ham(&model, g, r)?, &cfg)?;
        println!("{}: dim {}, quasi-Hamiltonian {}, Hamiltonian {}", qh.space, qh.ranks.chart_dim, qh.pass, ham.pass);
    }
    let family = moduli_family(&model, 1, 1)?;
    for t in [1.0, 0.5, 0.0] {
        let fiber = family.fiber(t)?;
        let r = if t == 0.0 { check_ham(&fiber, &cfg)? } else { check_qh(&fiber, &cfg)? };
        println!("fiber t = {t}: pass {}", r.pass);
    }
    Ok(())
}
