//! Control pairs `sup_y p(t,x,y) ≤ I(x) Ĩ(t)` with their integrability
//! certificates `∫_0^1 Ĩ(s)^{1/q} ds`, plus the volume doubling check.

use katokit::geometry::{canonical_point, ManifoldModel};
use katokit::heat_kernel::HeatKernelEngine;
use katokit::kato::{control_pair_from_on_diag, control_pair_li_yau, volume_doubling_check, KatoControlPair};
use katokit::quadrature::log_space;

fn show(label: &str, pair: &KatoControlPair) {
    println!(
        "{label}: constant {:.4e}, margin {:.3e}, verdict {}",
        pair.empirical_constant, pair.sweep.margin_min, pair.verdict
    );
    for c in &pair.certificates {
        let closed = c.closed_form.map_or(String::new(), |v| format!(" closed form {v:.6}"));
        println!("    q={:<4} admissible={:<5} certificate {:.6}{closed}", c.q, c.admissible, c.value);
    }
}

fn main() -> katokit::Result<()> {
    let e3 = ManifoldModel::euclidean(3);
    show("euclidean:3 on-diagonal", &control_pair_from_on_diag(&HeatKernelEngine::new(&e3), 1e-4, 50)?);

    let h3 = ManifoldModel::Hyperbolic3;
    let engine = HeatKernelEngine::new(&h3);
    let xs = [canonical_point(&h3)];
    show("hyperbolic3 Li-Yau", &control_pair_li_yau(&engine, &log_space(1e-4, 1.0, 50), &xs)?);

    let radii = log_space(0.05, 4.0, 12);
    for model in [e3, h3, ManifoldModel::Sphere2] {
        let rep = volume_doubling_check(&model, &canonical_point(&model), &radii)?;
        println!("doubling on {model}: κ={} pairs={} margin {:.3e} {}", rep.kappa, rep.pairs, rep.margin_min, rep.verdict);
    }
    Ok(())
}
