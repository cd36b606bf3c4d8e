//! Empirical constant of the parabolic mean value inequality
//! `u(t,x)^q ≤ C a^{-m/2} τ^{-1-m/2} ∫_{t-τ}^t ∫_{B(x,r)} u^q` on the plane.

use katokit::kato::faber_krahn_constant;
use katokit::mvi::{mvi_sweep, MviSweepConfig};

fn main() -> katokit::Result<()> {
    let cfg = MviSweepConfig::standard(2, faber_krahn_constant(2)?);
    let rep = mvi_sweep(&cfg)?;
    println!("C_emp          {:.5}", rep.c_emp);
    println!("with halved τ  {:.5} ({:.2}%)", rep.c_emp_halved, 100.0 * rep.halving_change);
    println!("refined        {:.5} ({:.2}%)", rep.c_emp_refined, 100.0 * rep.refinement_change);
    if let Some(worst) = rep.cells.iter().max_by(|a, b| a.ratio.total_cmp(&b.ratio)) {
        println!("worst cell: τ={} t={} q={} source {:?}", worst.tau, worst.t, worst.q, worst.source);
    }
    println!("{}", rep.verdict);
    Ok(())
}
