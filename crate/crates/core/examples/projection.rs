//! Pulling a potential back along a product projection `π: M × M' → M`
//! does not increase the smoothed potential: equality on complete factors.

use katokit::geometry::{canonical_point, ManifoldModel, Point};
use katokit::potentials::Potential;
use katokit::stochastics::elworthy_projection_check;

fn main() -> katokit::Result<()> {
    let model: ManifoldModel = "product(euclidean:3,euclidean:3)".parse()?;
    let w = Potential::parse("radialpower:beta=1:center=0.3,0,0", &ManifoldModel::euclidean(3))?;
    let x = Point::origin(6);
    for t in [0.1, 0.5] {
        let rep = elworthy_projection_check(&model, 0, &w, t, &x, 4000, 1e-2, 11)?;
        let mc = rep.monte_carlo.map_or(String::new(), |m| format!(", Monte Carlo {m:.5} ± {:.5}", rep.mc_std_error.unwrap_or(0.0)));
        println!("t={t}: lhs {:.8} rhs {:.8} defect {:.2e}{mc} {}", rep.lhs, rep.rhs, rep.equality_defect, rep.verdict);
    }
    // |y₀| on the sphere has a kink on a great circle; the product rule sees it at coarse resolution.
    let sphere_line: ManifoldModel = "product(sphere2,euclidean:1)".parse()?;
    let w = Potential::parse("cos", &ManifoldModel::Sphere2)?;
    let rep = elworthy_projection_check(&sphere_line, 0, &w, 0.5, &canonical_point(&sphere_line), 0, 1e-2, 0)?;
    println!("sphere2 × R: lhs {:.8} rhs {:.8} ± {:.1e} {}", rep.lhs, rep.rhs, rep.quadrature_error, rep.verdict);
    Ok(())
}
