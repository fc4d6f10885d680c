//! Internal fusion of a space and of a family, and the check that fusing
//! fibers agrees with the fibers of the fused family.

use qhdef::axioms::{check_qh, fusion_commutation, CheckConfig};
use qhdef::families::double_family;
use qhdef::fusion::{external_fuse, internal_fuse};
use qhdef::liegroup::GroupModel;
use qhdef::spaces::double_space;

fn main() -> qhdef::error::Result<()> {
    let model = GroupModel::su2();
    let cfg = CheckConfig { samples: 8, ..Default::default() };
    let d = double_space(&model);
    let torus = internal_fuse(&d, (0, 1))?;
    let pair = external_fuse(&d, &d, (0, 0))?;
    for s in [&torus, &pair] {
        let r = check_qh(s, &cfg)?;
        println!("{} with {} factors: pass {}", r.space, s.factors().len(), r.pass);
    }
    for (t, gap) in fusion_commutation(&double_family(&model), (0, 1), &[1.0, 0.5, 0.1, 0.0], 8, 4, 0)? {
        println!("t = {t:<4} |fused fiber - fiber fusion| = {gap:.1e}");
    }
    Ok(())
}
