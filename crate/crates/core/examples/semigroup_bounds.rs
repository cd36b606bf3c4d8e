//! Operator norms `‖e^{-tH^{-w₋}}‖_{q→q} ≤ δ e^{tC(δ)}` on a periodic grid,
//! the domination of a signed semigroup and Riesz-Thorin interpolation.

use katokit::geometry::ManifoldModel;
use katokit::potentials::Potential;
use katokit::semigroup::{bop_bound_check, discretize, riesz_thorin_check, QExponent};

fn main() -> katokit::Result<()> {
    let model = ManifoldModel::Circle;
    let times: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect();
    let qs = [1.0, 2.0, 4.0, f64::INFINITY].map(QExponent::from_f64);
    let spike = "cap:20:radialpower:beta=1:center=1,0";
    for w_minus in ["zero", "const:1", spike] {
        let w = Potential::parse(w_minus, &model)?;
        let op = discretize(&model, 64, &Potential::scale(-1.0, w))?;
        let signed = discretize(&model, 64, &Potential::parse(&format!("sum[pos:cos;scale:-1:{w_minus}]"), &model)?)?;
        let rep = bop_bound_check(&op, Some(&signed), &times, &[1.5, 2.0, 4.0], &qs, 0)?;
        println!("w₋ = {w_minus}: margin {:.4}, {}", rep.margin_min, rep.verdict);
        for b in &rep.bounds {
            let cs: Vec<String> = b.table.iter().map(|d| format!("C({})={:.4}", d.delta, d.c_delta)).collect();
            println!("    q={:<3} {}", b.q.to_string(), cs.join("  "));
        }
    }

    let op = discretize(&model, 64, &Potential::parse(&format!("scale:-1:{spike}"), &model)?)?;
    let rt = riesz_thorin_check(&op, 1.0, &[0.25, 0.5, 0.75], 1e-10)?;
    println!("Riesz-Thorin: ‖T‖₁={:.5} ‖T‖∞={:.5} margin {:.3e} {}", rt.norm_1, rt.norm_inf, rt.margin_min, rt.verdict);
    Ok(())
}
