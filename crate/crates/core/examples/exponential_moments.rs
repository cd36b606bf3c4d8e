//! Monte Carlo `sup_x E_x[e^{∫_0^t w₋(X_s) ds}]` and the fitted constants
//! `C(δ)` for a capped singular well on the plane.

use katokit::geometry::{ManifoldModel, Point};
use katokit::potentials::Potential;
use katokit::stochastics::kato_exponential_estimate;

fn main() -> katokit::Result<()> {
    let model = ManifoldModel::euclidean(2);
    let w = Potential::parse("cap:20:radialpower:beta=1:center=1,0", &model)?;
    let starts = [Point::new(vec![1.0, 0.0]), Point::new(vec![0.0, 0.0])];
    let est = kato_exponential_estimate(&model, &w, &[0.25, 0.5, 1.0, 2.0], &[1.5, 2.0, 4.0], &starts, 1000, 1e-2, 3)?;
    for ((t, e), s) in est.times.iter().zip(&est.expectation).zip(&est.std_error) {
        println!("t={t:<5} E={e:.4} ± {s:.4}");
    }
    for d in &est.table {
        println!("δ={:<4} C(δ)={:.4} margin {:.4}", d.delta, d.c_delta, d.margin);
    }
    println!("{}", est.verdict);
    Ok(())
}
