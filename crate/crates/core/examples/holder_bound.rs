//! The Hölder bound `∫ p(s,x,y)|w(y)| dμ(y) ≤ Ĩ(s)^{1/q} ‖w‖_{q,I}` for a
//! bounded and a singular potential.

use katokit::geometry::{ManifoldModel, Point, Window};
use katokit::heat_kernel::HeatKernelEngine;
use katokit::kato::{control_pair_from_on_diag, holder_bound_check};
use katokit::potentials::Potential;
use katokit::quadrature::log_space;

fn main() -> katokit::Result<()> {
    let model = ManifoldModel::euclidean(3);
    let engine = HeatKernelEngine::new(&model);
    let control = control_pair_from_on_diag(&engine, 1e-4, 50)?;
    let window = Window::ball(Point::origin(3), 3.0);
    let xs = [Point::origin(3), Point::new(vec![0.5, 0.0, 0.0])];
    for (spec, q) in [("indicator:ball:center=0,0,0:radius=1", 2.0), ("radialpower:beta=1:center=0,0,0", 2.0)] {
        let w = Potential::parse(spec, &model)?;
        let rep = holder_bound_check(&engine, &control, &w, q, &log_space(1e-3, 1.0, 6), &xs, &window, 0.1)?;
        println!("{spec} q={q}: ‖w‖ = {:.5}, margin {:.3e}, {}", rep.norm.value, rep.margin_min, rep.verdict);
        for s in rep.samples.iter().filter(|s| s.x == xs[0].coords) {
            println!("    s={:.4e} lhs={:.5e} rhs={:.5e}", s.s, s.lhs, s.rhs);
        }
    }
    Ok(())
}
