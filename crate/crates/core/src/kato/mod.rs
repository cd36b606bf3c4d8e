//! Kato functional, Kato-class verdicts and the `L^q` criteria.
//!
//! The functional `N(t, x) = ∫_0^t ∫ p(s,x,y) |w(y)| dμ(y) ds` is computed
//! with dyadic time blocks `[t 2^{-k-1}, t 2^{-k}]`, Gauss-Legendre in
//! `log s` inside each block and a kernel-weighted polar rule in space.
//! Below the last block the remainder is bounded with the Hölder estimate
//! of an on-diagonal control pair.

mod control;
mod faber_krahn;

pub use control::{
    admissible_q, control_pair_from_faber_krahn, control_pair_from_on_diag, control_pair_li_yau, heat_bound_chain,
    heat_bound_sweep, volume_doubling_check, Certificate, ControlSweep, ControlTime, ControlWeight,
    DoublingReport, FaberKrahnControlPair, HeatBoundReport, KatoControlPair,
};
pub use faber_krahn::{
    dirichlet_eigenvalue, dirichlet_ground_energy, faber_krahn_constant, faber_krahn_verify, EigenEstimate,
    FkReport, FkSetResult, TestSet, J01,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_grid, ManifoldModel, Point, Window};
use crate::heat_kernel::{on_diag_upper, polar_rule, HeatKernelEngine, RuleOptions};
use crate::potentials::{lq_norm, Potential, WeightedLqNorm};
use crate::quadrature::{linear_fit, GaussLegendre};
use crate::verdict::Verdict;

pub const NUMERICAL_EVIDENCE: &str = "numerical evidence";

#[derive(Debug, Clone)]
pub struct KatoOptions {
    pub rule: RuleOptions,
    /// Gauss-Legendre nodes per dyadic block.
    pub gl_nodes: usize,
    /// Dyadic blocks below the smallest reported time.
    pub depth: usize,
    /// Block decay exponent below which the functional counts as divergent.
    pub divergence_gamma: f64,
}

impl Default for KatoOptions {
    fn default() -> Self {
        Self {
            rule: RuleOptions::default(),
            gl_nodes: 6,
            depth: 16,
            divergence_gamma: 0.05,
        }
    }
}

/// Smallest time at which a model's kernel rule is affordable.
fn time_floor(model: &ManifoldModel) -> f64 {
    match model {
        ManifoldModel::Sphere2 => 1e-6,
        ManifoldModel::Product(l, r) => time_floor(l).max(time_floor(r)),
        _ => 0.0,
    }
}

/// Bound on `∫_0^{s_min} ∫ p |w| dμ ds`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemainderBound {
    pub value: f64,
    /// `sup`, `holder` or `extrapolated`.
    pub method: String,
    pub q: Option<f64>,
}

/// Block contributions of the time integral at one start point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockProfile {
    pub x: Vec<f64>,
    pub t_top: f64,
    pub blocks: Vec<f64>,
    pub s_min: f64,
    /// `∫_0^{s_min}` extrapolated from the block decay.
    pub tail_estimate: f64,
    /// Rigorous bound on the same integral.
    pub remainder: RemainderBound,
    /// Fitted decay `b_k ∝ 2^{-γ k}` over the deeper half of the blocks.
    pub block_gamma: f64,
    pub divergent: bool,
}

impl BlockProfile {
    /// `N(t_top 2^{-j}, x)`.
    pub fn value_at_level(&self, j: usize) -> f64 {
        if self.divergent {
            return f64::INFINITY;
        }
        self.blocks[j..].iter().sum::<f64>() + self.tail_estimate
    }
}

/// `∫ p(s, x, y) |w(y)| dμ(y)`.
pub fn smoothed_abs(engine: &HeatKernelEngine, w: &Potential, s: f64, x: &[f64], rule: &RuleOptions) -> Result<f64> {
    let model = &engine.model;
    let kr = engine.kernel_rule(s, x, &w.rule_options(model, x, rule))?;
    Ok(kr.integrate(|y| w.eval(model, y).abs()))
}

fn decay_exponent(blocks: &[f64]) -> f64 {
    let tail = &blocks[blocks.len() / 2..];
    if tail.iter().all(|b| *b == 0.0) {
        return f64::INFINITY;
    }
    if tail.iter().any(|b| *b <= 0.0) {
        // exact zeros deep down: the potential vanishes near x
        return f64::INFINITY;
    }
    let ks: Vec<f64> = (0..tail.len()).map(|k| k as f64).collect();
    let ls: Vec<f64> = tail.iter().map(|b| b.log2()).collect();
    -linear_fit(&ks, &ls).0
}

fn short_time_remainder(engine: &HeatKernelEngine, w: &Potential, s_min: f64) -> Result<RemainderBound> {
    if let Some(sup) = w.sup_abs() {
        return Ok(RemainderBound {
            value: sup * s_min,
            method: "sup".into(),
            q: None,
        });
    }
    let model = &engine.model;
    let sing = w.singularities();
    if sing.is_empty() || model.dim() > 3 || matches!(model, ManifoldModel::Product(..)) {
        return Ok(RemainderBound {
            value: f64::NAN,
            method: "extrapolated".into(),
            q: None,
        });
    }
    let m = model.dim() as f64;
    let beta = sing.iter().map(|s| s.1).fold(0.0, f64::max);
    let q_lo = if model.dim() == 1 { 1.0 } else { 0.5 * m };
    let q_hi = m / beta;
    if q_hi <= q_lo || (model.dim() > 1 && q_hi <= q_lo) {
        return Ok(RemainderBound {
            value: f64::INFINITY,
            method: "holder".into(),
            q: None,
        });
    }
    let q = if model.dim() == 1 && q_hi > 1.0 {
        1.0
    } else {
        0.5 * (q_lo + q_hi)
    };
    let alpha = m / (2.0 * q);
    let rho = 0.5f64.min(0.25 * model.injectivity_radius());
    let floor = time_floor(model);
    let c = on_diag_upper(engine, (s_min * 1e-3).max(floor), s_min.max(floor), 12)?.constant;
    let mut local = 0.0;
    let mut far: f64 = 0.0;
    let de = RuleOptions {
        reach: 4.0,
        ..RuleOptions::default()
    };
    let coarse = RuleOptions {
        step: 0.5,
        reach: 2.5,
        azimuths: 8,
        ..RuleOptions::default()
    };
    for (center, _) in &sing {
        let ball = polar_rule(
            model,
            center,
            rho,
            &[],
            &|r| crate::heat_kernel::radial_jacobian(model, r),
            &de,
            0.0,
        )?;
        local += ball.integrate(|y| {
            let v = w.eval(model, y).abs().powf(q);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        });
        // |w| off the singular balls is taken from the annulus ρ ≤ d ≤ 2ρ
        let ring = polar_rule(model, center, 2.0 * rho, &[rho], &|r| if r >= rho { 1.0 } else { 0.0 }, &coarse, 0.0)?;
        ring.integrate(|y| {
            far = far.max(w.eval(model, y).abs());
            0.0
        });
    }
    let value = c.powf(1.0 / q) * local.powf(1.0 / q) * s_min.powf(1.0 - alpha) / (1.0 - alpha) + far * s_min;
    Ok(RemainderBound {
        value,
        method: "holder".into(),
        q: Some(q),
    })
}

/// Block contributions from `t_top` down `blocks` dyadic levels.
pub fn block_profile(
    engine: &HeatKernelEngine,
    w: &Potential,
    t_top: f64,
    blocks: usize,
    x: &Point,
    opts: &KatoOptions,
) -> Result<BlockProfile> {
    engine.model.check_point(x)?;
    if !(t_top > 0.0) {
        return Err(Error::Domain(format!("Kato functional needs t > 0, got {t_top}")));
    }
    let floor = time_floor(&engine.model);
    let mut n = blocks.max(2);
    while n > 2 && t_top * 0.5f64.powi(n as i32) < floor {
        n -= 1;
    }
    let gl = GaussLegendre::new(opts.gl_nodes);
    let mut jobs = Vec::new();
    for k in 0..n {
        let hi = t_top * 0.5f64.powi(k as i32);
        let lo = 0.5 * hi;
        for (u, wu) in gl.on(lo.ln(), hi.ln()) {
            jobs.push((k, u.exp(), wu * u.exp()));
        }
    }
    let vals: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(_, s, ws)| smoothed_abs(engine, w, s, &x.coords, &opts.rule).map(|v| v * ws))
        .collect();
    let mut b = vec![0.0; n];
    for (job, v) in jobs.iter().zip(vals) {
        b[job.0] += v?;
    }
    let s_min = t_top * 0.5f64.powi(n as i32);
    let gamma = decay_exponent(&b);
    let mut remainder = short_time_remainder(engine, w, s_min)?;
    let ratio = 0.5f64.powf(gamma);
    let tail_estimate = if gamma.is_infinite() {
        0.0
    } else if gamma > 0.0 {
        b[n - 1] * ratio / (1.0 - ratio)
    } else {
        f64::INFINITY
    };
    if remainder.value.is_nan() {
        remainder.value = tail_estimate;
    }
    let divergent = !(gamma >= opts.divergence_gamma) || !remainder.value.is_finite() || b.iter().any(|v| !v.is_finite());
    Ok(BlockProfile {
        x: x.coords.clone(),
        t_top,
        blocks: b,
        s_min,
        tail_estimate,
        remainder,
        block_gamma: gamma,
        divergent,
    })
}

/// `sup_x N(t, x)` over the given start points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KatoValue {
    pub t: f64,
    pub value: f64,
    pub remainder_bound: f64,
    pub divergent: bool,
    pub argmax: Vec<f64>,
    pub s_min: f64,
}

pub fn kato_functional(
    engine: &HeatKernelEngine,
    w: &Potential,
    t: f64,
    x_points: &[Point],
    opts: &KatoOptions,
) -> Result<KatoValue> {
    let curve = kato_curve(engine, w, t, 0, x_points, opts)?;
    Ok(KatoValue {
        t,
        value: curve.values[0],
        remainder_bound: curve.remainder_bound,
        divergent: curve.divergent,
        argmax: curve.argmax[0].clone(),
        s_min: curve.s_min,
    })
}

/// `t ↦ sup_x N(t, x)` on `t_max 2^{-j}`, `j = 0..=levels`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KatoCurve {
    pub t_values: Vec<f64>,
    pub values: Vec<f64>,
    pub argmax: Vec<Vec<f64>>,
    pub remainder_bound: f64,
    pub s_min: f64,
    /// Fitted `N(t) ≈ c t^γ`.
    pub gamma: f64,
    pub block_gamma: f64,
    pub divergent: bool,
    pub threshold: f64,
    pub verdict: Verdict,
    pub label: String,
}

fn kato_curve(
    engine: &HeatKernelEngine,
    w: &Potential,
    t_max: f64,
    levels: usize,
    x_points: &[Point],
    opts: &KatoOptions,
) -> Result<KatoCurve> {
    if x_points.is_empty() {
        return Err(Error::Domain("Kato functional needs start points".into()));
    }
    let profiles = x_points
        .iter()
        .map(|x| block_profile(engine, w, t_max, levels + opts.depth, x, opts))
        .collect::<Result<Vec<_>>>()?;
    let levels = levels.min(profiles[0].blocks.len() - 1);
    let mut values = Vec::new();
    let mut argmax = Vec::new();
    let mut t_values = Vec::new();
    for j in 0..=levels {
        let (best, x) = profiles
            .iter()
            .map(|p| (p.value_at_level(j), &p.x))
            .fold((f64::NEG_INFINITY, &profiles[0].x), |a, b| if b.0 > a.0 { b } else { a });
        values.push(best);
        argmax.push(x.clone());
        t_values.push(t_max * 0.5f64.powi(j as i32));
    }
    let divergent = profiles.iter().any(|p| p.divergent);
    let gamma = if levels >= 1 && values.iter().all(|v| *v > 0.0 && v.is_finite()) {
        let lt: Vec<f64> = t_values.iter().map(|t| t.ln()).collect();
        let lv: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        linear_fit(&lt, &lv).0
    } else if values.iter().all(|v| *v == 0.0) {
        f64::INFINITY
    } else {
        f64::NAN
    };
    Ok(KatoCurve {
        t_values,
        values,
        argmax,
        remainder_bound: profiles.iter().map(|p| p.remainder.value).fold(0.0, f64::max),
        s_min: profiles[0].s_min,
        gamma,
        block_gamma: profiles.iter().map(|p| p.block_gamma).fold(f64::INFINITY, f64::min),
        divergent,
        threshold: 0.0,
        verdict: Verdict::Inconclusive,
        label: NUMERICAL_EVIDENCE.into(),
    })
}

/// Kato-class verdict from the decay of `sup_x N(t, x)` as `t → 0`.
///
/// PASS when every value is finite, the fitted exponent exceeds the
/// divergence threshold and `N(t_min) < threshold · N(t_max)`.
pub fn is_kato(
    engine: &HeatKernelEngine,
    w: &Potential,
    t_max: f64,
    levels: usize,
    x_points: &[Point],
    threshold: f64,
    opts: &KatoOptions,
) -> Result<KatoCurve> {
    let mut curve = kato_curve(engine, w, t_max, levels.max(1), x_points, opts)?;
    let first = curve.values[0];
    let last = *curve.values.last().expect("at least two levels");
    let ok = !curve.divergent
        && curve.values.iter().all(|v| v.is_finite())
        && (first == 0.0 || (curve.gamma > opts.divergence_gamma && last < threshold * first));
    curve.threshold = threshold;
    curve.verdict = Verdict::from_bool(ok);
    Ok(curve)
}

/// Start points for a sup over `x`: the singular points of `w`, the
/// model's reference point and a few fixed offsets from it.
pub fn default_start_points(model: &ManifoldModel, w: &Potential) -> Vec<Point> {
    let base = crate::geometry::canonical_point(model);
    let mut pts = vec![base.clone()];
    for (c, _) in w.singularities() {
        if model.check_coords(&c).is_ok() {
            pts.push(Point::new(c));
        }
    }
    let frame = model.tangent_frame(&base.coords);
    for (k, r) in [0.37, 1.1].iter().enumerate() {
        let e = &frame[k % frame.len()];
        let v: Vec<f64> = e.iter().map(|c| c * r).collect();
        let mut y = vec![0.0; model.coord_len()];
        model.exp_into(&base.coords, &v, &mut y);
        pts.push(Point::new(y));
    }
    pts.dedup_by(|a, b| a.coords == b.coords);
    pts
}

/// Classical characterization `sup_x ∫_{d(x,y) ≤ r} |w(y)| h_m(d(x,y)) dy`
/// with `h_2 = log⁺(1/d)` and `h_m = d^{2-m}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassicalKato {
    pub radius: f64,
    pub value: f64,
    /// Dyadic shell contributions at the maximizing point.
    pub shells: Vec<f64>,
    pub shell_gamma: f64,
    pub divergent: bool,
    pub argmax: Vec<f64>,
}

pub fn classical_kato_functional(model: &ManifoldModel, w: &Potential, r: f64, x_points: &[Point]) -> Result<ClassicalKato> {
    let m = match model {
        ManifoldModel::Euclidean { dim } => *dim,
        _ => return Err(Error::UnsupportedModel(format!("classical criterion is stated on Euclidean space, not {model}"))),
    };
    if m == 1 {
        return Err(Error::UnsupportedModel(
            "m = 1 uses the uniformly local L^1 criterion (uniform_local_l1)".into(),
        ));
    }
    if m > 3 {
        return Err(Error::UnsupportedModel("classical criterion implemented for m <= 3".into()));
    }
    let weight = move |d: f64| -> f64 {
        let h = if m == 2 { (1.0 / d).ln().max(0.0) } else { d.powi(2 - m as i32) };
        h * d.powi(m as i32 - 1)
    };
    let shells_n = 40;
    let mut best: Option<ClassicalKato> = None;
    for x in x_points {
        model.check_point(x)?;
        let opts = RuleOptions::with_focus(w.focus(&x.coords));
        let mut shells = Vec::with_capacity(shells_n);
        for k in 0..shells_n {
            let hi = r * 0.5f64.powi(k as i32);
            let lo = 0.5 * hi;
            let rule = polar_rule(model, &x.coords, hi, &[lo], &|d| if d >= lo { weight(d) } else { 0.0 }, &opts, 0.0)?;
            shells.push(rule.integrate(|y| w.eval(model, y).abs()));
        }
        let gamma = decay_exponent(&shells);
        let ratio = 0.5f64.powf(gamma);
        let divergent = !(gamma >= 0.05) || shells.iter().any(|s| !s.is_finite());
        let value = if divergent {
            f64::INFINITY
        } else {
            shells.iter().sum::<f64>() + if gamma.is_finite() { shells[shells_n - 1] * ratio / (1.0 - ratio) } else { 0.0 }
        };
        let cand = ClassicalKato {
            radius: r,
            value,
            shells,
            shell_gamma: gamma,
            divergent,
            argmax: x.coords.clone(),
        };
        if best.as_ref().is_none_or(|b| cand.value > b.value) {
            best = Some(cand);
        }
    }
    best.ok_or_else(|| Error::Domain("classical functional needs start points".into()))
}

/// Verdict of the classical criterion: the functional is finite and tends to
/// zero along `r = r_max 2^{-j}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassicalVerdict {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub exponent: f64,
    pub verdict: Verdict,
}

pub fn classical_kato_verdict(
    model: &ManifoldModel,
    w: &Potential,
    r_max: f64,
    levels: usize,
    x_points: &[Point],
) -> Result<ClassicalVerdict> {
    let radii: Vec<f64> = (0..=levels.max(1)).map(|j| r_max * 0.5f64.powi(j as i32)).collect();
    let values = radii
        .iter()
        .map(|r| classical_kato_functional(model, w, *r, x_points).map(|c| c.value))
        .collect::<Result<Vec<_>>>()?;
    let finite = values.iter().all(|v| v.is_finite());
    let exponent = if finite && values.iter().all(|v| *v > 0.0) {
        let lr: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let lv: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        linear_fit(&lr, &lv).0
    } else if finite {
        f64::INFINITY
    } else {
        f64::NAN
    };
    Ok(ClassicalVerdict {
        radii,
        values,
        exponent,
        verdict: Verdict::from_bool(finite && exponent > 0.05),
    })
}

/// `sup_x ∫_{|x-y| ≤ 1} |w|` on a one-dimensional model.
pub fn uniform_local_l1(model: &ManifoldModel, w: &Potential, x_points: &[Point]) -> Result<f64> {
    if model.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: model.dim(),
        });
    }
    let mut best: f64 = 0.0;
    let opts = RuleOptions {
        reach: 4.0,
        ..RuleOptions::default()
    };
    for x in x_points {
        let mut o = opts.clone();
        o.focus = w.focus(&x.coords);
        let rule = polar_rule(model, &x.coords, 1.0, &[], &|_| 1.0, &o, 0.0)?;
        best = best.max(rule.integrate(|y| w.eval(model, y).abs()));
    }
    Ok(best)
}

/// One sample of the Hölder bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolderSample {
    pub s: f64,
    pub x: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolderReport {
    pub inequality: String,
    pub q: f64,
    pub norm: WeightedLqNorm,
    /// `|‖w‖(h) - ‖w‖(2h)|`, the grid error estimate of the norm.
    pub norm_error: f64,
    pub margin_min: f64,
    pub tolerance: f64,
    pub samples: Vec<HolderSample>,
    pub verdict: Verdict,
}

pub const HOLDER_INEQUALITY: &str = "∫ p(s,x,y)|w(y)| dμ(y) ≤ Ĩ(s)^{1/q} (∫ |w|^q I dμ)^{1/q}";

/// Checks `∫ p(s,x,y)|w(y)|dμ(y) ≤ Ĩ(s)^{1/q} ‖w‖_{L^q(I)}` on samples.
///
/// The norm is taken over `window` (the whole model when compact); a
/// truncated window only lowers the right side, so passing is conservative.
#[allow(clippy::too_many_arguments)]
pub fn holder_bound_check(
    engine: &HeatKernelEngine,
    control: &KatoControlPair,
    w: &Potential,
    q: f64,
    s_samples: &[f64],
    x_samples: &[Point],
    window: &Window,
    h: f64,
) -> Result<HolderReport> {
    let model = &engine.model;
    if !admissible_q(model.dim(), q) {
        return Err(Error::Domain(format!("q = {q} is not admissible in dimension {}", model.dim())));
    }
    let norm_at = |h: f64| -> Result<WeightedLqNorm> {
        let grid = build_grid(model, h, window)?;
        match &control.i {
            ControlWeight::Constant(c) => {
                let mut n = lq_norm(w, model, q, None, &grid)?;
                n.value *= c.powf(1.0 / q);
                n.weight = format!("I ≡ {c:e}");
                Ok(n)
            }
            other => {
                let f = |y: &[f64]| other.eval(model, y);
                lq_norm(w, model, q, Some(&f), &grid)
            }
        }
    };
    let norm = norm_at(h)?;
    let coarse = norm_at(2.0 * h)?;
    let norm_error = if norm.value.is_finite() && coarse.value.is_finite() {
        (norm.value - coarse.value).abs()
    } else {
        0.0
    };
    let mut samples = Vec::new();
    for &s in s_samples {
        for x in x_samples {
            model.check_point(x)?;
            let lhs = smoothed_abs(engine, w, s, &x.coords, &RuleOptions::default())?;
            let factor = control.i_tilde.eval(s).powf(1.0 / q);
            let rhs = factor * norm.value;
            let tolerance = factor * norm_error + 1e-9 * lhs;
            samples.push(HolderSample {
                s,
                x: x.coords.clone(),
                lhs,
                rhs,
                margin: rhs - lhs,
                tolerance,
            });
        }
    }
    let worst = samples
        .iter()
        .min_by(|a, b| (a.margin + a.tolerance).total_cmp(&(b.margin + b.tolerance)))
        .ok_or_else(|| Error::Domain("Hölder check needs samples".into()))?;
    let (margin_min, tolerance) = (
        samples.iter().map(|s| s.margin).fold(f64::INFINITY, f64::min),
        worst.tolerance,
    );
    let verdict = Verdict::from_bool(samples.iter().all(|s| s.margin >= -s.tolerance));
    Ok(HolderReport {
        inequality: HOLDER_INEQUALITY.into(),
        q,
        norm,
        norm_error,
        margin_min,
        tolerance,
        samples,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn quick() -> KatoOptions {
        KatoOptions {
            depth: 10,
            ..KatoOptions::default()
        }
    }

    #[test]
    fn constant_potential_gives_ct() {
        let e = HeatKernelEngine::new(&ManifoldModel::Sphere2);
        let w = Potential::Constant(2.0);
        let v = kato_functional(&e, &w, 0.1, &[Point::north_pole()], &quick()).unwrap();
        assert!((v.value - 0.2).abs() < 1e-9, "{}", v.value);
    }

    #[test]
    fn inverse_distance_scales_like_sqrt_t() {
        // N(t) at the singularity = ∫_0^t sqrt(2/(π s)) ds = 2 sqrt(2t/π)
        let e = HeatKernelEngine::new(&ManifoldModel::euclidean(3));
        let w = Potential::RadialPower {
            center: vec![0.0; 3],
            exponent: 1.0,
        };
        let x = [Point::origin(3)];
        for t in [0.01, 0.1] {
            let v = kato_functional(&e, &w, t, &x, &quick()).unwrap();
            let exact = 2.0 * (2.0 * t / PI).sqrt();
            assert!((v.value / exact - 1.0).abs() < 1e-6, "t={t}: {} {exact}", v.value);
        }
    }

    #[test]
    fn inverse_square_is_not_kato() {
        let e = HeatKernelEngine::new(&ManifoldModel::euclidean(3));
        let w = Potential::RadialPower {
            center: vec![0.0; 3],
            exponent: 2.0,
        };
        let c = is_kato(&e, &w, 0.1, 4, &[Point::origin(3)], 0.1, &quick()).unwrap();
        assert_eq!(c.verdict, Verdict::Fail);
        assert!(c.divergent);
    }

    #[test]
    fn classical_examples() {
        let e3 = ManifoldModel::euclidean(3);
        let x = [Point::origin(3)];
        let one = Potential::Constant(1.0);
        let r = 0.5;
        let c = classical_kato_functional(&e3, &one, r, &x).unwrap();
        assert!((c.value - 2.0 * PI * r * r).abs() < 1e-9, "{}", c.value);
        let inv2 = Potential::RadialPower {
            center: vec![0.0; 3],
            exponent: 2.0,
        };
        assert!(classical_kato_functional(&e3, &inv2, r, &x).unwrap().divergent);
    }
}
