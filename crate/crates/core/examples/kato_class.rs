//! Kato-class membership through the heat-kernel functional
//! `N(t) = sup_x ∫_0^t ∫ p(s,x,y)|w(y)| dμ(y) ds`, compared with the
//! classical Green-function criterion.

use katokit::geometry::ManifoldModel;
use katokit::heat_kernel::HeatKernelEngine;
use katokit::kato::{classical_kato_verdict, default_start_points, is_kato, KatoOptions};
use katokit::potentials::Potential;

fn main() -> katokit::Result<()> {
    let model = ManifoldModel::euclidean(3);
    let engine = HeatKernelEngine::new(&model);
    let opts = KatoOptions::default();
    for spec in [
        "indicator:ball:center=0,0,0:radius=1",
        "radialpower:beta=1:center=0,0,0",
        "radialpower:beta=1.5:center=0,0,0",
        "radialpower:beta=2:center=0,0,0",
    ] {
        let w = Potential::parse(spec, &model)?;
        let pts = default_start_points(&model, &w);
        let curve = is_kato(&engine, &w, 1.0, 6, &pts, 0.5, &opts)?;
        let classical = classical_kato_verdict(&model, &w, 1.0, 6, &pts)?;
        println!("{spec}");
        for (t, n) in curve.t_values.iter().zip(&curve.values) {
            println!("    N({t:.4}) = {n:.4e}");
        }
        println!(
            "    gamma={:.3} heat-kernel verdict {} ({}), classical verdict {}",
            curve.gamma, curve.verdict, curve.label, classical.verdict
        );
    }
    Ok(())
}
