//! Heat kernel values and consistency residuals on every model manifold.

use katokit::geometry::{canonical_point, ManifoldModel};
use katokit::heat_kernel::{check_consistency, HeatKernelEngine};

fn main() -> katokit::Result<()> {
    let models = ["euclidean:3", "circle", "torus:2:6.2832", "sphere2", "hyperbolic3", "product(euclidean:1,circle)"];
    println!("{:<28} {:>12} {:>12} {:>10} {:>10}", "model", "p(1,x,x)", "bound", "mass", "C-K");
    for spec in models {
        let model: ManifoldModel = spec.parse()?;
        let engine = HeatKernelEngine::new(&model);
        let x = canonical_point(&model);
        let (p, bound) = engine.value(1.0, &x.coords, &x.coords)?;
        let rep = check_consistency(&engine, &[0.1, 0.5], &[x])?;
        println!(
            "{spec:<28} {p:>12.6e} {bound:>12.2e} {:>10.2e} {:>10.2e}",
            rep.mass_defect, rep.ck_residual
        );
    }

    // On the sphere p(t,x,x) tends to 1/(4π) as t grows.
    let sphere = HeatKernelEngine::new(&ManifoldModel::Sphere2);
    let n = canonical_point(&ManifoldModel::Sphere2);
    for t in [0.01, 0.1, 1.0, 10.0] {
        let (p, _) = sphere.value(t, &n.coords, &n.coords)?;
        println!("sphere2 t={t:<5} p={p:.8}  1/(4π)={:.8}", 0.25 / std::f64::consts::PI);
    }
    Ok(())
}
