//! Brownian motion by geodesic random walk: law of the endpoint, survival
//! on the hyperbolic space and a CSV dump of a few paths.

use katokit::geometry::{canonical_point, ManifoldModel};
use katokit::stochastics::{circle_chi_square, simulate, stochastic_completeness_probe, WalkConfig};

fn main() -> katokit::Result<()> {
    let circle = ManifoldModel::Circle;
    let ens = simulate(&WalkConfig::new(&circle, canonical_point(&circle), 1.0, 1e-3, 4000, 1), &[0.5, 1.0])?;
    let chi = circle_chi_square(&ens, 1.0, 16)?;
    println!("circle χ²={:.2} dof={} p={:.3} {}", chi.statistic, chi.degrees_of_freedom, chi.p_value, chi.verdict);

    let h3 = ManifoldModel::Hyperbolic3;
    let curve = stochastic_completeness_probe(&WalkConfig::new(&h3, canonical_point(&h3), 2.0, 1e-2, 2000, 2), &[0.5, 1.0, 2.0])?;
    for p in &curve.points {
        println!("hyperbolic3 t={} P(t<ζ)={:.4} quadrature mass {:.6}", p.t, p.survival, p.quadrature_mass);
    }

    let sphere = ManifoldModel::Sphere2;
    let ens = simulate(&WalkConfig::new(&sphere, canonical_point(&sphere), 0.1, 1e-2, 3, 3), &[])?;
    ens.write_paths_csv(std::io::stdout().lock(), 3, 1)?;
    Ok(())
}
