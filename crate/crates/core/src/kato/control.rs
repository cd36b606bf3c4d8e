//! Kato control pairs `(I, Ĩ)` and Faber-Krahn control pairs `(R, a)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{canonical_point, ManifoldModel, Point};
use crate::heat_kernel::{on_diag_upper, HeatKernelEngine};
use crate::quadrature::{log_space, GaussLegendre};
use crate::verdict::Verdict;

/// Empirical constants are inflated by a few ulps so that the defining
/// bound holds exactly in floating point on the sweep that produced them.
fn round_up(c: f64) -> f64 {
    c * (1.0 + 8.0 * f64::EPSILON)
}

/// `q ≥ 1` when `m = 1`, `q > m/2` when `m ≥ 2`.
pub fn admissible_q(m: usize, q: f64) -> bool {
    if m == 1 {
        q >= 1.0
    } else {
        q >= 1.0 && q > 0.5 * m as f64
    }
}

/// The space factor `I` of a control pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControlWeight {
    Constant(f64),
    /// `C₅ / μ(B(x, 1))`.
    InverseBallVolume { c5: f64 },
    /// `Ĉ a^{-m/2} R^{-m}` with constant `R`.
    FaberKrahn { c_hat: f64, a: f64, radius: f64 },
}

impl ControlWeight {
    /// Every built-in model is homogeneous, so `I` does not depend on `x`.
    pub fn eval(&self, model: &ManifoldModel, _x: &[f64]) -> f64 {
        let m = model.dim() as f64;
        match self {
            ControlWeight::Constant(c) => *c,
            ControlWeight::InverseBallVolume { c5 } => c5 / model.ball_volume_at_radius(1.0),
            ControlWeight::FaberKrahn { c_hat, a, radius } => c_hat * a.powf(-0.5 * m) * radius.powf(-m),
        }
    }
}

/// The time factor `Ĩ` of a control pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControlTime {
    /// `t^{-m/2}`.
    Power { m: usize },
    /// `t^{-m/2} sup R^m + 1`.
    PowerPlusOne { m: usize, sup_r_m: f64 },
}

impl ControlTime {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ControlTime::Power { m } => t.powf(-0.5 * *m as f64),
            ControlTime::PowerPlusOne { m, sup_r_m } => t.powf(-0.5 * *m as f64) * sup_r_m + 1.0,
        }
    }

    fn dim(&self) -> usize {
        match self {
            ControlTime::Power { m } | ControlTime::PowerPlusOne { m, .. } => *m,
        }
    }

    /// `∫_0^1 Ĩ(s)^{1/q} ds`.
    ///
    /// With `α = m/(2q) < 1` the substitution `s = v^{1/(1-α)}` removes the
    /// endpoint singularity, after which Gauss-Legendre is exact for pure
    /// powers.
    pub fn certificate(&self, q: f64) -> Certificate {
        let m = self.dim();
        let alpha = 0.5 * m as f64 / q;
        let admissible = admissible_q(m, q);
        if alpha >= 1.0 {
            return Certificate {
                q,
                admissible,
                value: f64::INFINITY,
                closed_form: Some(f64::INFINITY),
            };
        }
        let p = 1.0 / (1.0 - alpha);
        let gl = GaussLegendre::new(40);
        let value = gl.integrate(0.0, 1.0, |v| {
            let s = v.powf(p);
            let ds = p * v.powf(p - 1.0);
            match self {
                // s^{-α} ds = p v^{-αp + p - 1} dv = p dv
                ControlTime::Power { .. } => p,
                ControlTime::PowerPlusOne { .. } => self.eval(s).powf(1.0 / q) * ds,
            }
        });
        let closed_form = match self {
            ControlTime::Power { .. } => Some(1.0 / (1.0 - alpha)),
            ControlTime::PowerPlusOne { .. } => None,
        };
        Certificate {
            q,
            admissible,
            value,
            closed_form,
        }
    }
}

/// `∫_0^1 Ĩ(s)^{1/q} ds` for one `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub q: f64,
    pub admissible: bool,
    pub value: f64,
    pub closed_form: Option<f64>,
}

/// Sweep verifying `sup_y p(t,x,y) ≤ I(x) Ĩ(t)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlSweep {
    pub t_range: (f64, f64),
    pub t_samples: usize,
    pub x_samples: usize,
    /// `min (I Ĩ - sup_y p)`.
    pub margin_min: f64,
    /// `min (I Ĩ / sup_y p) - 1`.
    pub relative_margin_min: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KatoControlPair {
    pub construction: String,
    pub dim: usize,
    pub i: ControlWeight,
    pub i_tilde: ControlTime,
    pub certificates: Vec<Certificate>,
    /// Sweep supremum defining the pair's constant.
    pub empirical_constant: f64,
    pub sweep: ControlSweep,
    pub verdict: Verdict,
}

impl KatoControlPair {
    pub fn bound(&self, model: &ManifoldModel, t: f64, x: &[f64]) -> f64 {
        self.i.eval(model, x) * self.i_tilde.eval(t)
    }
}

/// Default `q` values for certificates: just above the threshold, 2 and 5.
pub fn certificate_qs(m: usize) -> Vec<f64> {
    let lo = if m == 1 { 1.0 } else { 0.5 * m as f64 + 0.1 };
    let mut qs = vec![lo.max(1.0), 2.0, 5.0];
    qs.dedup();
    qs
}

fn sweep_times(t_lo: f64, n: usize) -> Vec<f64> {
    log_space(t_lo, 1.0, n.max(2))
}

// sup_y p(t, x, y) is attained on the diagonal for every built-in model
fn verify(
    engine: &HeatKernelEngine,
    i: &ControlWeight,
    i_tilde: &ControlTime,
    ts: &[f64],
    xs: &[Point],
) -> Result<ControlSweep> {
    let model = &engine.model;
    let mut margin_min = f64::INFINITY;
    let mut rel_min = f64::INFINITY;
    for x in xs {
        model.check_point(x)?;
        let ix = i.eval(model, &x.coords);
        for &t in ts {
            let p = engine.value(t, &x.coords, &x.coords)?.0;
            let b = ix * i_tilde.eval(t);
            margin_min = margin_min.min(b - p);
            rel_min = rel_min.min(b / p - 1.0);
        }
    }
    Ok(ControlSweep {
        t_range: (ts[0], ts[ts.len() - 1]),
        t_samples: ts.len(),
        x_samples: xs.len(),
        margin_min,
        relative_margin_min: rel_min,
    })
}

fn finish(
    engine: &HeatKernelEngine,
    construction: &str,
    i: ControlWeight,
    i_tilde: ControlTime,
    constant: f64,
    ts: &[f64],
    xs: &[Point],
) -> Result<KatoControlPair> {
    let sweep = verify(engine, &i, &i_tilde, ts, xs)?;
    let certificates = certificate_qs(engine.dim()).into_iter().map(|q| i_tilde.certificate(q)).collect();
    let verdict = Verdict::from_bool(sweep.margin_min >= 0.0);
    Ok(KatoControlPair {
        construction: construction.into(),
        dim: engine.dim(),
        i,
        i_tilde,
        certificates,
        empirical_constant: constant,
        sweep,
        verdict,
    })
}

/// `(C, t^{-m/2})` with `C = sup_{t ∈ [t_lo, 1]} t^{m/2} p(t, x, x)`.
pub fn control_pair_from_on_diag(engine: &HeatKernelEngine, t_lo: f64, n: usize) -> Result<KatoControlPair> {
    let diag = on_diag_upper(engine, t_lo, 1.0, n)?;
    let c = round_up(diag.constant);
    let ts = sweep_times(t_lo, n);
    let x = canonical_point(&engine.model);
    finish(
        engine,
        "on-diagonal",
        ControlWeight::Constant(c),
        ControlTime::Power { m: engine.dim() },
        c,
        &ts,
        &[x],
    )
}

/// `(C₅ μ(B(x,1))^{-1}, t^{-m/2})` with the smallest `C₅` valid on the sweep.
pub fn control_pair_li_yau(engine: &HeatKernelEngine, ts: &[f64], xs: &[Point]) -> Result<KatoControlPair> {
    let model = &engine.model;
    if !model.geodesically_complete() {
        return Err(Error::UnsupportedModel(format!("{model} is not geodesically complete")));
    }
    if ts.is_empty() || xs.is_empty() {
        return Err(Error::Domain("Li-Yau sweep needs samples".into()));
    }
    let m = engine.dim() as f64;
    let mut c5: f64 = 0.0;
    for x in xs {
        model.check_point(x)?;
        let vol = model.ball_volume_at_radius(1.0);
        for &t in ts {
            let p = engine.value(t, &x.coords, &x.coords)?.0;
            c5 = c5.max(p * t.powf(0.5 * m) * vol);
        }
    }
    let c5 = round_up(c5);
    finish(
        engine,
        "li-yau",
        ControlWeight::InverseBallVolume { c5 },
        ControlTime::Power { m: engine.dim() },
        c5,
        ts,
        xs,
    )
}

/// Volume doubling `μ(B(x,s)) ≤ μ(B(x,s')) (s/s')^m e^{√((m-1)κ) s}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoublingReport {
    pub kappa: f64,
    pub pairs: usize,
    /// `min (rhs / lhs) - 1`.
    pub margin_min: f64,
    pub verdict: Verdict,
}

pub fn volume_doubling_check(model: &ManifoldModel, x: &Point, radii: &[f64]) -> Result<DoublingReport> {
    let kappa = (-model.ricci_lower_bound()).max(0.0);
    let m = model.dim() as f64;
    let vols = radii.iter().map(|r| model.ball_volume(x, *r)).collect::<Result<Vec<_>>>()?;
    let mut margin_min = f64::INFINITY;
    let mut pairs = 0;
    for (i, &s) in radii.iter().enumerate() {
        for (j, &sp) in radii.iter().enumerate() {
            if sp > s {
                continue;
            }
            let rhs = vols[j] * (s / sp).powf(m) * (((m - 1.0) * kappa).sqrt() * s).exp();
            margin_min = margin_min.min(rhs / vols[i] - 1.0);
            pairs += 1;
        }
    }
    Ok(DoublingReport {
        kappa,
        pairs,
        margin_min,
        verdict: Verdict::from_bool(margin_min >= -1e-12),
    })
}

/// Faber-Krahn control pair with constant radius `R` and constant `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaberKrahnControlPair {
    pub radius: f64,
    pub a: f64,
}

/// `Ĉ = sup p(t,x,x) a^{m/2} min(t, R²)^{m/2}` over a sweep, and its stability
/// when the sweep is doubled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatBoundReport {
    pub c_hat: f64,
    pub c_hat_doubled: f64,
    pub relative_change: f64,
    pub t_range: (f64, f64),
    pub samples: usize,
    pub verdict: Verdict,
}

fn c_hat_on(engine: &HeatKernelEngine, fk: &FaberKrahnControlPair, ts: &[f64], xs: &[Point]) -> Result<f64> {
    let m = engine.dim() as f64;
    let mut c: f64 = 0.0;
    for x in xs {
        engine.model.check_point(x)?;
        for &t in ts {
            let p = engine.value(t, &x.coords, &x.coords)?.0;
            c = c.max(p * fk.a.powf(0.5 * m) * t.min(fk.radius * fk.radius).powf(0.5 * m));
        }
    }
    Ok(c)
}

/// Empirical heat-bound constant; PASS when doubling the sweep (time range
/// widened by 2 on both ends, twice the samples) moves it by at most 10%.
pub fn heat_bound_sweep(
    engine: &HeatKernelEngine,
    fk: &FaberKrahnControlPair,
    t_range: (f64, f64),
    n: usize,
    xs: &[Point],
) -> Result<HeatBoundReport> {
    if !(fk.radius > 0.0 && fk.a > 0.0) {
        return Err(Error::Domain("Faber-Krahn pair needs R > 0 and a > 0".into()));
    }
    if xs.is_empty() {
        return Err(Error::Domain("heat bound sweep needs start points".into()));
    }
    let ts = log_space(t_range.0, t_range.1, n.max(2));
    let ts2 = log_space(0.5 * t_range.0, 2.0 * t_range.1, 2 * n.max(2));
    let c = c_hat_on(engine, fk, &ts, xs)?;
    let c2 = c_hat_on(engine, fk, &ts2, xs)?;
    let relative_change = (c2 - c).abs() / c;
    Ok(HeatBoundReport {
        c_hat: c,
        c_hat_doubled: c2,
        relative_change,
        t_range,
        samples: ts.len() * xs.len(),
        verdict: Verdict::from_bool(c.is_finite() && c > 0.0 && relative_change <= 0.1),
    })
}

/// Control pair `(Ĉ a^{-m/2} R^{-m}, t^{-m/2} R^m + 1)` with `Ĉ` from a
/// sweep over `t ∈ [t_lo, 1]`.
pub fn control_pair_from_faber_krahn(
    engine: &HeatKernelEngine,
    fk: &FaberKrahnControlPair,
    t_lo: f64,
    n: usize,
    xs: &[Point],
) -> Result<(KatoControlPair, HeatBoundReport)> {
    let report = heat_bound_sweep(engine, fk, (t_lo, 1.0), n, xs)?;
    let c_hat = round_up(report.c_hat);
    let m = engine.dim();
    let pair = finish(
        engine,
        "faber-krahn",
        ControlWeight::FaberKrahn {
            c_hat,
            a: fk.a,
            radius: fk.radius,
        },
        ControlTime::PowerPlusOne {
            m,
            sup_r_m: fk.radius.powi(m as i32),
        },
        c_hat,
        &sweep_times(t_lo, n),
        xs,
    )?;
    Ok((pair, report))
}

/// `min(t,R²)^{-m/2} ≤ t^{-m/2} + R^{-m} ≤ R^{-m}(t^{-m/2} sup R^m + 1)`,
/// returned as the three members and whether both inequalities hold.
pub fn heat_bound_chain(m: usize, t: f64, r: f64, sup_r: f64) -> (f64, f64, f64, bool) {
    let h = 0.5 * m as f64;
    let lhs = t.min(r * r).powf(-h);
    let mid = t.powf(-h) + r.powi(-(m as i32));
    let rhs = r.powi(-(m as i32)) * (t.powf(-h) * sup_r.powi(m as i32) + 1.0);
    (lhs, mid, rhs, lhs <= mid && mid <= rhs * (1.0 + 4.0 * f64::EPSILON))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn on_diag_pair_in_three_dimensions() {
        let e = HeatKernelEngine::new(&ManifoldModel::euclidean(3));
        let pair = control_pair_from_on_diag(&e, 1e-4, 20).unwrap();
        let exact = (2.0 * PI).powf(-1.5);
        assert!((pair.empirical_constant / exact - 1.0).abs() < 1e-14);
        assert_eq!(pair.verdict, Verdict::Pass);
        for c in &pair.certificates {
            let cf = c.closed_form.unwrap();
            assert!((c.value - cf).abs() <= 1e-12 * cf, "{c:?}");
        }
    }

    #[test]
    fn m1_certificate_is_two() {
        let c = ControlTime::Power { m: 1 }.certificate(1.0);
        assert!(c.admissible);
        assert!((c.value - 2.0).abs() < 1e-13);
        assert!(!admissible_q(3, 1.5));
        assert!(ControlTime::Power { m: 3 }.certificate(1.5).value.is_infinite());
    }

    #[test]
    fn li_yau_on_hyperbolic_space() {
        let model = ManifoldModel::Hyperbolic3;
        let e = HeatKernelEngine::new(&model);
        let ts = log_space(1e-4, 1.0, 50);
        let xs = [Point::new(vec![0.0, 0.0, 1.0]), Point::new(vec![0.3, -1.0, 2.5])];
        let pair = control_pair_li_yau(&e, &ts, &xs).unwrap();
        assert_eq!(pair.verdict, Verdict::Pass);
        assert!(pair.sweep.margin_min >= 0.0);
        let d = volume_doubling_check(&model, &xs[0], &[0.1, 0.5, 1.0, 2.0]).unwrap();
        assert_eq!(d.kappa, 2.0);
        assert_eq!(d.verdict, Verdict::Pass);
    }

    #[test]
    fn chain_holds() {
        for t in [1e-3, 0.5, 1.0, 4.0] {
            for r in [0.2, 1.0, 3.0] {
                assert!(heat_bound_chain(2, t, r, r).3);
            }
        }
    }
}
