//! Faber-Krahn inequality `λ₁(U) ≥ a μ(U)^{-2/m}` on Dirichlet test sets, the
//! heat bound it implies, and the control pair built from it.

use katokit::geometry::{canonical_point, ManifoldModel};
use katokit::heat_kernel::HeatKernelEngine;
use katokit::kato::{
    control_pair_from_faber_krahn, dirichlet_ground_energy, faber_krahn_constant, faber_krahn_verify,
    FaberKrahnControlPair, TestSet, J01,
};

fn main() -> katokit::Result<()> {
    let disk = TestSet::Ball { center: vec![0.0, 0.0], radius: 1.0 };
    let e = dirichlet_ground_energy(&disk, 40)?;
    println!("unit disk λ₁ of -Δ/2: {:.6} (j₀₁²/2 = {:.6})", e.extrapolated, 0.5 * J01 * J01);

    let model = ManifoldModel::euclidean(2);
    let a = faber_krahn_constant(2)?;
    let fk = FaberKrahnControlPair { radius: 1.0, a };
    let sets = vec![
        disk,
        TestSet::Ball { center: vec![0.3, 0.0], radius: 0.5 },
        TestSet::Box { lower: vec![-0.5, -0.5], upper: vec![0.5, 0.5] },
        TestSet::Box { lower: vec![-0.6, -0.2], upper: vec![0.6, 0.2] },
    ];
    let rep = faber_krahn_verify(&model, &[0.0, 0.0], &fk, &sets, 40)?;
    println!("a = {a:.6}");
    for r in &rep.results {
        println!(
            "    μ(U)={:.4} λ₁={:.5} bound={:.5} margin={:+.3e} {}",
            r.volume, r.eigenvalue.extrapolated, r.bound, r.margin, r.verdict
        );
    }

    let engine = HeatKernelEngine::new(&model);
    let (pair, heat) = control_pair_from_faber_krahn(&engine, &fk, 1e-3, 40, &[canonical_point(&model)])?;
    println!("Ĉ = {:.5} (doubled sweep {:.5}), control pair {}", heat.c_hat, heat.c_hat_doubled, pair.verdict);
    Ok(())
}
