//! Feynman-Kac expectation `E_x[e^{-∫_0^t w(X_s) ds} f(X_t)]` by Brownian
//! paths on the circle, against the spectral value of `e^{-tH} f`.

use katokit::geometry::{canonical_point, ManifoldModel};
use katokit::potentials::Potential;
use katokit::semigroup::semigroup_value;
use katokit::stochastics::{feynman_kac, simulate, WalkConfig};

fn main() -> katokit::Result<()> {
    let model = ManifoldModel::Circle;
    let w = Potential::parse("cos", &model)?;
    let f = Potential::parse("const:1", &model)?;
    let x = canonical_point(&model);
    for t in [0.25, 1.0] {
        let ens = simulate(&WalkConfig::new(&model, x.clone(), t, 1e-3, 5000, 7), &[])?;
        let mc = feynman_kac(&ens, &w, &f)?;
        let exact = semigroup_value(&model, &w, &f, t, &x.coords, 64)?;
        let sigma = mc.std_error.hypot(exact.fine - exact.coarse);
        println!(
            "t={t}: Monte Carlo {:.5} ± {:.5}, spectral {:.8}, z = {:+.2}",
            mc.value,
            mc.std_error,
            exact.extrapolated,
            (mc.value - exact.extrapolated) / sigma
        );
    }
    Ok(())
}
