use serde::{Deserialize, Serialize};

use super::{HeatKernelEngine, RuleOptions};
use crate::error::{Error, Result};
use crate::geometry::{Point, QuadratureGrid};
use crate::quadrature::log_space;

/// Residuals of the general heat kernel identities on samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelCheckReport {
    pub mass_defect: f64,
    pub ck_residual: f64,
    pub symmetry_residual: f64,
    pub truncation_bound: f64,
    pub min_value: f64,
    /// Largest `p(t,x,y) - sqrt(p(t,x,x) p(t,y,y))` seen (should be ≤ 0).
    pub sqrt_bound_excess: f64,
    pub samples: usize,
}

/// Runs mass, Chapman-Kolmogorov, symmetry and positivity checks.
///
/// Spatial integrals use kernel-centred polar rules; the mass includes the
/// analytic tail outside the rule radius. Chapman-Kolmogorov pairs are
/// `(t_i, t_j)` for all `i <= j`.
pub fn check_consistency(engine: &HeatKernelEngine, t_samples: &[f64], points: &[Point]) -> Result<KernelCheckReport> {
    if t_samples.is_empty() || points.is_empty() {
        return Err(Error::Domain("consistency check needs samples".into()));
    }
    for p in points {
        engine.model.check_point(p)?;
    }
    let mut rep = KernelCheckReport {
        mass_defect: 0.0,
        ck_residual: 0.0,
        symmetry_residual: 0.0,
        truncation_bound: 0.0,
        min_value: f64::INFINITY,
        sqrt_bound_excess: f64::NEG_INFINITY,
        samples: 0,
    };
    for (i, &t) in t_samples.iter().enumerate() {
        for x in points {
            let rule = engine.kernel_rule(t, &x.coords, &RuleOptions::default())?;
            let mass = rule.mass();
            rep.mass_defect = rep.mass_defect.max((mass + rule.tail() - 1.0).abs().min((mass - 1.0).abs()));
            rep.truncation_bound = rep.truncation_bound.max(rule.tail());
            let (pxx, bxx) = engine.value(t, &x.coords, &x.coords)?;
            rep.truncation_bound = rep.truncation_bound.max(bxx);
            for y in points {
                let (pxy, b1) = engine.value(t, &x.coords, &y.coords)?;
                let (pyx, b2) = engine.value(t, &y.coords, &x.coords)?;
                let (pyy, _) = engine.value(t, &y.coords, &y.coords)?;
                rep.truncation_bound = rep.truncation_bound.max(b1).max(b2);
                rep.symmetry_residual = rep.symmetry_residual.max((pxy - pyx).abs());
                rep.min_value = rep.min_value.min(pxy);
                rep.sqrt_bound_excess = rep.sqrt_bound_excess.max(pxy - (pxx * pyy).sqrt());
                rep.samples += 1;
                for &s in &t_samples[i..] {
                    let focused = engine.kernel_rule(t, &x.coords, &RuleOptions::with_focus(vec![y.coords.clone()]))?;
                    let conv = focused.integrate(|z| engine.value(s, z, &y.coords).map(|v| v.0).unwrap_or(f64::NAN));
                    let (direct, b) = engine.value(t + s, &x.coords, &y.coords)?;
                    rep.truncation_bound = rep.truncation_bound.max(b);
                    rep.ck_residual = rep.ck_residual.max((conv - direct).abs());
                }
            }
        }
    }
    Ok(rep)
}

/// Grid maximum of `y ↦ p(t, x, y)` next to the diagonal value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupBound {
    pub grid_max: f64,
    pub diagonal: f64,
    /// `grid_max <= diagonal + tolerance`.
    pub attained_on_diagonal: bool,
}

pub fn sup_bound(engine: &HeatKernelEngine, t: f64, x: &Point, grid: &QuadratureGrid) -> Result<SupBound> {
    let (diagonal, bound) = engine.eval_with_bound(t, x, x)?;
    let mut grid_max: f64 = 0.0;
    for y in &grid.nodes {
        grid_max = grid_max.max(engine.value(t, &x.coords, &y.coords)?.0);
    }
    let tol = 2.0 * bound + 1e-12 * diagonal;
    Ok(SupBound {
        grid_max,
        diagonal,
        attained_on_diagonal: grid_max <= diagonal + tol,
    })
}

/// Empirical on-diagonal constant `C = sup t^{m/2} p(t, x, x)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnDiagonalBound {
    pub constant: f64,
    pub t_at_sup: f64,
    pub t_range: (f64, f64),
    pub samples: usize,
}

/// Sweeps log-spaced and dyadic times in `[t_lo, t_hi]` at a canonical point
/// (every built-in model is homogeneous).
pub fn on_diag_upper(engine: &HeatKernelEngine, t_lo: f64, t_hi: f64, n: usize) -> Result<OnDiagonalBound> {
    if !(t_lo > 0.0 && t_hi >= t_lo) {
        return Err(Error::Domain(format!("bad time range [{t_lo}, {t_hi}]")));
    }
    let x = crate::geometry::canonical_point(&engine.model);
    let mut ts = log_space(t_lo, t_hi, n.max(2));
    let mut d = 1.0;
    while d >= t_lo {
        if d <= t_hi {
            ts.push(d);
        }
        d *= 0.5;
    }
    let m = engine.dim() as f64;
    let mut best = (0.0, t_lo);
    for &t in &ts {
        let v = t.powf(0.5 * m) * engine.value(t, &x.coords, &x.coords)?.0;
        if v > best.0 {
            best = (v, t);
        }
    }
    Ok(OnDiagonalBound {
        constant: best.0,
        t_at_sup: best.1,
        t_range: (t_lo, t_hi),
        samples: ts.len(),
    })
}
