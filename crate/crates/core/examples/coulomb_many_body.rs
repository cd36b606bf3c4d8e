//! Coulomb potential `V(x,y) = (1/2) ∫_0^∞ p(s,x,y) ds` from the heat kernel,
//! and the many-body potential of a two-electron atom.

use std::f64::consts::PI;

use katokit::geometry::{canonical_point, ManifoldModel, Point};
use katokit::heat_kernel::HeatKernelEngine;
use katokit::potentials::{coulomb, many_body_assemble};

fn main() -> katokit::Result<()> {
    for model in [ManifoldModel::euclidean(3), ManifoldModel::Hyperbolic3] {
        let engine = HeatKernelEngine::new(&model);
        let x = canonical_point(&model);
        let e1 = &model.tangent_frame(&x.coords)[0];
        for r in [0.1, 1.0, 10.0] {
            let y = model.exp_map(&x, &e1.iter().map(|c| c * r).collect::<Vec<_>>())?;
            let v = coulomb(&engine, &x, &y, 1e-6)?;
            let exact = match model {
                ManifoldModel::Hyperbolic3 => (-r).exp() / (4.0 * PI * r.sinh()),
                _ => 1.0 / (4.0 * PI * r),
            };
            println!("{model} r={r:<4} V={:.10} exact={exact:.10} tail≤{:.1e}", v.value, v.tail_bound);
        }
    }

    // Helium: two electrons in R³, one nucleus at the origin.
    let model = ManifoldModel::power(&ManifoldModel::euclidean(3), 2);
    let w = many_body_assemble(&model, 2, &[Point::origin(3)])?;
    println!("many-body potential: {w}");
    let at = [0.5, 0.0, 0.0, -0.5, 0.2, 0.0];
    println!("W({at:?}) = {:.6}", w.eval(&model, &at));
    let v = |r: f64| 1.0 / (4.0 * PI * r);
    let (r1, r2, r12) = (0.5f64, 0.29f64.sqrt(), 1.04f64.sqrt());
    println!("-V(r₁) - V(r₂) + V(r₁₂) = {:.6}", -v(r1) - v(r2) + v(r12));
    Ok(())
}
