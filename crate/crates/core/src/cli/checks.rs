use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde_json::{json, Value};

use super::manifest::*;
use super::PlotSeries;
use crate::error::{Error, Result};
use crate::geometry::{canonical_point, ManifoldModel, Point, Window};
use crate::heat_kernel::{check_consistency, HeatKernelEngine, Method};
use crate::kato::{
    control_pair_from_faber_krahn, control_pair_from_on_diag, control_pair_li_yau, default_start_points,
    faber_krahn_constant, faber_krahn_verify, heat_bound_sweep, holder_bound_check, is_kato, kato_functional,
    FaberKrahnControlPair, KatoOptions, TestSet,
};
use crate::mvi::{mvi_sweep, MviSweepConfig};
use crate::potentials::{coulomb, Potential};
use crate::quadrature::log_space;
use crate::semigroup::{bop_bound_check, discretize, riesz_thorin_check, semigroup_value, QExponent};
use crate::stochastics::{elworthy_projection_check, feynman_kac, kato_exponential_estimate, simulate, WalkConfig};
use crate::verdict::Verdict;

const CONTROL_INEQUALITY: &str = "sup_y p(t,x,y) ≤ I(x) Ĩ(t)";
const KATO_DEFINITION: &str = "N(t) = sup_x ∫_0^t ∫ p(s,x,y)|w(y)| dμ(y) ds → 0 as t → 0";
const FK_INEQUALITY: &str = "λ₁(U) ≥ a μ(U)^{-2/m} for U ⊂ B(x,R)";
const HEAT_BOUND_INEQUALITY: &str = "sup_y p(t,x,y) ≤ Ĉ a^{-m/2} min(t,R²)^{-m/2}";
const EXPONENTIAL_INEQUALITY: &str = "sup_x E_x[1_{t<ζ} e^{∫_0^t w₋(X_s) ds}] ≤ δ e^{t C(δ)}";
const COULOMB_IDENTITY: &str = "V(x,y) = (1/2) ∫_0^∞ p(s,x,y) ds";

/// What one check produced, before it is stamped into the report.
#[derive(Debug, Default)]
pub(crate) struct Outcome {
    pub inequality: Option<String>,
    pub margin_min: Option<f64>,
    pub tolerance: Option<f64>,
    pub sweep: BTreeMap<String, Value>,
    pub constants: BTreeMap<String, f64>,
    pub verdict: Option<Verdict>,
    pub detail: Value,
    pub notes: Vec<String>,
    pub plots: Vec<PlotSeries>,
}

impl Outcome {
    fn sweep(mut self, key: &str, v: Value) -> Self {
        self.sweep.insert(key.into(), v);
        self
    }

    fn constant(mut self, key: &str, v: f64) -> Self {
        self.constants.insert(key.into(), v);
        self
    }
}

pub(crate) struct Context<'a> {
    pub model: ManifoldModel,
    pub engine: HeatKernelEngine,
    pub potential: Option<&'a str>,
    pub seed: u64,
    pub tolerance_scale: f64,
    pub dump_paths: Option<&'a Path>,
    pub index: usize,
}

impl Context<'_> {
    fn potential(&self) -> Result<Potential> {
        self.potential_on(&self.model)
    }

    fn potential_on(&self, model: &ManifoldModel) -> Result<Potential> {
        let p = self
            .potential
            .ok_or_else(|| Error::InvalidManifest("this check needs a potential".into()))?;
        Potential::parse(p, model)
    }
}

fn points(model: &ManifoldModel, given: &Option<Vec<Vec<f64>>>, w: &Potential) -> Result<Vec<Point>> {
    match given {
        Some(list) => list
            .iter()
            .map(|c| {
                model.check_coords(c)?;
                Ok(Point::new(c.clone()))
            })
            .collect(),
        None => Ok(default_start_points(model, w)),
    }
}

fn start(model: &ManifoldModel, given: &Option<Vec<f64>>) -> Result<Point> {
    match given {
        Some(c) => {
            model.check_coords(c)?;
            Ok(Point::new(c.clone()))
        }
        None => Ok(canonical_point(model)),
    }
}

fn euclidean_dim(model: &ManifoldModel, what: &str) -> Result<usize> {
    match model {
        ManifoldModel::Euclidean { dim } => Ok(*dim),
        _ => Err(Error::UnsupportedModel(format!("{what} runs on Euclidean models, not {model}"))),
    }
}

fn closed_form(engine: &HeatKernelEngine) -> bool {
    match &engine.method {
        Method::ClosedForm => true,
        Method::ProductRule(l, r) => closed_form(l) && closed_form(r),
        _ => false,
    }
}

/// Norm window: the whole model where compact, otherwise a ball (or a
/// product of balls) of the given radius around the reference point.
fn norm_window(model: &ManifoldModel, radius: f64) -> Window {
    match model {
        _ if model.is_compact() => Window::Full,
        ManifoldModel::Product(l, r) => Window::product(norm_window(l, radius), norm_window(r, radius)),
        _ => Window::ball(canonical_point(model), radius),
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

pub(crate) fn run_check(check: &Check, ctx: &Context) -> Result<Outcome> {
    match check {
        Check::KernelCheck(p) => kernel_check(p, ctx),
        Check::KatoNorm(p) => kato_norm(p, ctx),
        Check::IsKato(p) => is_kato_check(p, ctx),
        Check::HolderCheck(p) => holder_check(p, ctx),
        Check::ControlPair(p) => control_pair(p, ctx),
        Check::FkVerify(p) => fk_verify(p, ctx),
        Check::MviSweep(p) => mvi(p, ctx),
        Check::HeatBound(p) => heat_bound(p, ctx),
        Check::FeynmanKac(p) => feynman_kac_check(p, ctx),
        Check::ProjectCheck(p) => project_check(p, ctx),
        Check::KatoExponential(p) => kato_exponential(p, ctx),
        Check::SemigroupBound(p) => semigroup_bound(p, ctx),
        Check::RieszThorin(p) => riesz_thorin(p, ctx),
        Check::Coulomb(p) => coulomb_check(p, ctx),
    }
}

fn kernel_check(p: &KernelCheckParams, ctx: &Context) -> Result<Outcome> {
    let pts = points(&ctx.model, &p.points, &Potential::zero())?;
    let rep = check_consistency(&ctx.engine, &p.times, &pts)?;
    let closed = closed_form(&ctx.engine);
    let ck_tol = p.ck_tolerance.unwrap_or(if closed { 1e-6 } else { 1e-4 }) * ctx.tolerance_scale;
    let mass_tol = p.mass_tolerance * ctx.tolerance_scale;
    let trunc = rep.truncation_bound;
    let symmetric = if closed { rep.symmetry_residual == 0.0 } else { rep.symmetry_residual <= 2.0 * trunc };
    let ok = symmetric
        && rep.ck_residual <= ck_tol
        && rep.mass_defect <= mass_tol
        && rep.min_value > 0.0
        && rep.sqrt_bound_excess <= 2.0 * trunc + 1e-14;
    Ok(Outcome {
        inequality: Some("∫ p dμ = 1, ∫ p(t,x,z) p(s,z,y) dμ(z) = p(t+s,x,y), p(t,x,y) = p(t,y,x) > 0".into()),
        margin_min: Some((ck_tol - rep.ck_residual).min(mass_tol - rep.mass_defect)),
        tolerance: Some(ck_tol),
        verdict: Some(Verdict::from_bool(ok)),
        detail: to_value(&rep),
        ..Default::default()
    }
    .sweep("times", json!(p.times))
    .sweep("points", json!(pts.len()))
    .sweep("mass_tolerance", json!(mass_tol))
    .sweep("method", json!(if closed { "closed form" } else { "truncated" })))
}

fn kato_options(depth: usize) -> KatoOptions {
    KatoOptions {
        depth,
        ..KatoOptions::default()
    }
}

fn kato_norm(p: &KatoNormParams, ctx: &Context) -> Result<Outcome> {
    let w = ctx.potential()?;
    let pts = points(&ctx.model, &p.points, &w)?;
    let v = kato_functional(&ctx.engine, &w, p.t, &pts, &kato_options(p.depth))?;
    Ok(Outcome {
        inequality: Some(KATO_DEFINITION.into()),
        verdict: Some(Verdict::from_bool(!v.divergent && v.value.is_finite())),
        detail: to_value(&v),
        ..Default::default()
    }
    .constant("N(t)", v.value)
    .constant("remainder_bound", v.remainder_bound)
    .sweep("t", json!(p.t))
    .sweep("s_min", json!(v.s_min))
    .sweep("points", json!(pts.len())))
}

fn is_kato_check(p: &IsKatoParams, ctx: &Context) -> Result<Outcome> {
    let w = ctx.potential()?;
    let pts = points(&ctx.model, &p.points, &w)?;
    let opts = kato_options(p.depth);
    let curve = is_kato(&ctx.engine, &w, p.t_max, p.levels, &pts, p.threshold, &opts)?;
    let rows = curve.t_values.iter().zip(&curve.values).map(|(t, v)| vec![*t, *v]).collect();
    let mut out = Outcome {
        inequality: Some(KATO_DEFINITION.into()),
        tolerance: Some(opts.divergence_gamma),
        verdict: Some(curve.verdict),
        plots: vec![PlotSeries::new("kato-curve", &["t", "N(t)"], rows)],
        ..Default::default()
    }
    .constant("gamma", curve.gamma)
    .constant("block_gamma", curve.block_gamma)
    .constant("N(t_max)", curve.values[0])
    .constant("N(t_min)", *curve.values.last().unwrap_or(&f64::NAN))
    .sweep("t_range", json!([curve.t_values.last(), p.t_max]))
    .sweep("levels", json!(p.levels))
    .sweep("threshold", json!(p.threshold))
    .sweep("s_min", json!(curve.s_min))
    .sweep("points", json!(pts.len()));
    out.notes.push(curve.label.clone());
    out.detail = to_value(&curve);
    Ok(out)
}

fn holder_check(p: &HolderParams, ctx: &Context) -> Result<Outcome> {
    let w = ctx.potential()?;
    let pts = points(&ctx.model, &p.points, &w)?;
    let control = match p.control.as_str() {
        "on-diag" => control_pair_from_on_diag(&ctx.engine, 1e-4, 50)?,
        "li-yau" => control_pair_li_yau(&ctx.engine, &log_space(1e-4, 1.0, 50), &pts)?,
        other => return Err(Error::InvalidManifest(format!("unknown control `{other}`; expected on-diag or li-yau"))),
    };
    let window = norm_window(&ctx.model, p.window);
    let rep = holder_bound_check(&ctx.engine, &control, &w, p.q, &p.s_values, &pts, &window, p.h)?;
    Ok(Outcome {
        inequality: Some(rep.inequality.clone()),
        margin_min: Some(rep.margin_min),
        tolerance: Some(rep.tolerance),
        verdict: Some(rep.verdict.and(control.verdict)),
        detail: json!({ "control": control, "report": rep }),
        ..Default::default()
    }
    .constant("norm", rep.norm.value)
    .constant("control_constant", control.empirical_constant)
    .sweep("q", json!(p.q))
    .sweep("s_values", json!(p.s_values))
    .sweep("points", json!(pts.len()))
    .sweep("window", json!(window))
    .sweep("h", json!(p.h)))
}

fn control_pair(p: &ControlPairParams, ctx: &Context) -> Result<Outcome> {
    let pts = points(&ctx.model, &None, &Potential::zero())?;
    let (pair, heat) = match p.construction.as_str() {
        "on-diag" => (control_pair_from_on_diag(&ctx.engine, p.t_lo, p.samples)?, None),
        "li-yau" => (control_pair_li_yau(&ctx.engine, &log_space(p.t_lo, 1.0, p.samples), &pts)?, None),
        "faber-krahn" => {
            let a = match p.a {
                Some(a) => a,
                None => faber_krahn_constant(ctx.model.dim())?,
            };
            let fk = FaberKrahnControlPair { radius: p.radius, a };
            let (pair, rep) = control_pair_from_faber_krahn(&ctx.engine, &fk, p.t_lo, p.samples, &pts)?;
            (pair, Some(rep))
        }
        other => {
            return Err(Error::InvalidManifest(format!(
                "unknown construction `{other}`; expected on-diag, li-yau or faber-krahn"
            )))
        }
    };
    let verdict = heat.as_ref().map_or(pair.verdict, |h| pair.verdict.and(h.verdict));
    let mut out = Outcome {
        inequality: Some(CONTROL_INEQUALITY.into()),
        margin_min: Some(pair.sweep.margin_min),
        tolerance: Some(0.0),
        verdict: Some(verdict),
        ..Default::default()
    }
    .constant("empirical_constant", pair.empirical_constant)
    .sweep("t_range", json!(pair.sweep.t_range))
    .sweep("t_samples", json!(pair.sweep.t_samples))
    .sweep("x_samples", json!(pair.sweep.x_samples));
    for c in &pair.certificates {
        out.constants.insert(format!("certificate(q={})", c.q), c.value);
    }
    if let Some(h) = &heat {
        out.constants.insert("c_hat".into(), h.c_hat);
    }
    out.detail = json!({ "pair": pair, "heat_bound": heat });
    Ok(out)
}

fn default_test_sets(m: usize, r: f64) -> Vec<TestSet> {
    let o = vec![0.0; m];
    let shifted = |d: f64| {
        let mut c = o.clone();
        c[0] = d;
        c
    };
    let cube = |half: f64| TestSet::Box {
        lower: vec![-half; m],
        upper: vec![half; m],
    };
    let mut sets = vec![
        TestSet::Ball {
            center: o.clone(),
            radius: r,
        },
        TestSet::Ball {
            center: shifted(0.4 * r),
            radius: 0.5 * r,
        },
        cube(0.5 * r),
    ];
    if m >= 2 {
        let mut upper = vec![0.3 * r; m];
        upper[0] = 0.6 * r;
        sets.push(TestSet::Box {
            lower: upper.iter().map(|u| -u).collect(),
            upper,
        });
    }
    sets
}

fn fk_verify(p: &FkVerifyParams, ctx: &Context) -> Result<Outcome> {
    let m = euclidean_dim(&ctx.model, "fk-verify")?;
    let a = match p.a {
        Some(a) => a,
        None => faber_krahn_constant(m)?,
    };
    let sets = p.sets.clone().unwrap_or_else(|| default_test_sets(m, p.radius));
    let n = p.n.unwrap_or(if m == 3 { 12 } else { 40 });
    let fk = FaberKrahnControlPair { radius: p.radius, a };
    let x = canonical_point(&ctx.model);
    let rep = faber_krahn_verify(&ctx.model, &x.coords, &fk, &sets, n)?;
    let margin_min = rep.results.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let tolerance = rep.results.iter().map(|r| r.tolerance).fold(0.0, f64::max);
    Ok(Outcome {
        inequality: Some(FK_INEQUALITY.into()),
        margin_min: Some(margin_min),
        tolerance: Some(tolerance),
        verdict: Some(rep.verdict),
        detail: to_value(&rep),
        ..Default::default()
    }
    .constant("a", a)
    .constant("worst_relative_margin", rep.worst_relative_margin)
    .sweep("sets", json!(sets.len()))
    .sweep("cells", json!([n, 2 * n]))
    .sweep("radius", json!(p.radius)))
}

fn mvi(p: &MviParams, ctx: &Context) -> Result<Outcome> {
    let m = euclidean_dim(&ctx.model, "mvi-sweep")?;
    let a = match p.a {
        Some(a) => a,
        None => faber_krahn_constant(m)?,
    };
    let mut cfg = MviSweepConfig::standard(m, a);
    cfg.radius = p.radius;
    cfg.taus = p.taus.clone();
    cfg.t_over_tau = p.t_over_tau.clone();
    cfg.qs = p.qs.clone();
    if let Some(s) = &p.sources {
        cfg.sources = s.clone();
    }
    cfg.time_nodes = p.time_nodes;
    cfg.space_step = p.space_step;
    let rep = mvi_sweep(&cfg)?;
    let change = rep.halving_change.max(rep.refinement_change);
    Ok(Outcome {
        inequality: Some(rep.inequality.clone()),
        margin_min: Some(0.1 - change),
        tolerance: Some(0.1),
        verdict: Some(rep.verdict),
        detail: to_value(&rep),
        ..Default::default()
    }
    .constant("c_emp", rep.c_emp)
    .constant("c_emp_halved", rep.c_emp_halved)
    .constant("c_emp_refined", rep.c_emp_refined)
    .sweep("taus", json!(cfg.taus))
    .sweep("t_over_tau", json!(cfg.t_over_tau))
    .sweep("qs", json!(cfg.qs))
    .sweep("sources", json!(cfg.sources)))
}

fn heat_bound(p: &HeatBoundParams, ctx: &Context) -> Result<Outcome> {
    let a = match p.a {
        Some(a) => a,
        None => faber_krahn_constant(ctx.model.dim())?,
    };
    let fk = FaberKrahnControlPair { radius: p.radius, a };
    let pts = match &p.points {
        Some(_) => points(&ctx.model, &p.points, &Potential::zero())?,
        None => vec![canonical_point(&ctx.model)],
    };
    let rep = heat_bound_sweep(&ctx.engine, &fk, p.t_range, p.samples, &pts)?;
    Ok(Outcome {
        inequality: Some(HEAT_BOUND_INEQUALITY.into()),
        margin_min: Some(0.1 - rep.relative_change),
        tolerance: Some(0.1),
        verdict: Some(rep.verdict),
        detail: to_value(&rep),
        ..Default::default()
    }
    .constant("c_hat", rep.c_hat)
    .constant("c_hat_doubled", rep.c_hat_doubled)
    .sweep("t_range", json!(p.t_range))
    .sweep("doubled_t_range", json!([0.5 * p.t_range.0, 2.0 * p.t_range.1]))
    .sweep("samples", json!(rep.samples)))
}

fn spectral_reference(model: &ManifoldModel) -> bool {
    matches!(model, ManifoldModel::Circle) || matches!(model, ManifoldModel::Torus { dim, .. } if *dim <= 2)
}

fn feynman_kac_check(p: &FeynmanKacParams, ctx: &Context) -> Result<Outcome> {
    let w = ctx.potential()?;
    let f = Potential::parse(&p.terminal, &ctx.model)?;
    let x = start(&ctx.model, &p.start)?;
    let config = WalkConfig::new(&ctx.model, x.clone(), p.t, p.step, p.paths, ctx.seed);
    let ens = simulate(&config, &[])?;
    if let Some(dir) = ctx.dump_paths {
        std::fs::create_dir_all(dir)?;
        let file = std::fs::File::create(dir.join(format!("{:02}-feynman-kac-paths.csv", ctx.index + 1)))?;
        ens.write_paths_csv(std::io::BufWriter::new(file), 64, (config.steps() / 200).max(1))?;
    }
    let est = feynman_kac(&ens, &w, &f)?;
    let z_max = p.z_max * ctx.tolerance_scale;
    let mut out = Outcome {
        tolerance: Some(z_max),
        ..Default::default()
    }
    .constant("estimate", est.value)
    .constant("std_error", est.std_error)
    .sweep("t", json!(p.t))
    .sweep("dt", json!(config.dt()))
    .sweep("paths", json!(p.paths))
    .sweep("seed", json!(ctx.seed));
    let reference = if spectral_reference(&ctx.model) {
        Some(semigroup_value(&ctx.model, &w, &f, p.t, &x.coords, p.spectral_n)?)
    } else {
        None
    };
    match &reference {
        Some(r) => {
            let err = (r.fine - r.coarse).abs();
            let sigma = (est.std_error.powi(2) + err.powi(2)).sqrt();
            let z = if sigma > 0.0 { (est.value - r.extrapolated) / sigma } else { 0.0 };
            out.inequality = Some("|E_x[e^{-∫_0^t w(X_s) ds} f(X_t)] - (e^{-tH} f)(x)| ≤ z_max σ".into());
            out.margin_min = Some(z_max - z.abs());
            out.verdict = Some(Verdict::from_bool(z.abs() <= z_max));
            out.constants.insert("spectral".into(), r.extrapolated);
            out.constants.insert("z".into(), z);
        }
        None => {
            out.notes.push("no spectral reference on this model; the verdict only checks that the estimate is finite".into());
            out.verdict = Some(Verdict::from_bool(est.value.is_finite()));
        }
    }
    out.notes.extend(est.warnings.iter().cloned());
    out.detail = json!({ "estimate": est, "spectral": reference, "ensemble": ens.summary() });
    Ok(out)
}

fn project_check(p: &ProjectParams, ctx: &Context) -> Result<Outcome> {
    let (l, r) = ctx
        .model
        .factors()
        .ok_or_else(|| Error::UnsupportedModel(format!("project-check needs a product, not {}", ctx.model)))?;
    let factor = match p.factor {
        1 => 0,
        2 => 1,
        k => return Err(Error::Domain(format!("factor must be 1 or 2, got {k}"))),
    };
    let w = ctx.potential_on(if factor == 0 { l } else { r })?;
    let x = start(&ctx.model, &p.start)?;
    let rep = elworthy_projection_check(&ctx.model, factor, &w, p.t, &x, p.paths, p.step, ctx.seed)?;
    let mut out = Outcome {
        inequality: Some(rep.inequality.clone()),
        margin_min: Some(rep.rhs - rep.lhs),
        tolerance: Some(rep.quadrature_error),
        verdict: Some(rep.verdict),
        detail: to_value(&rep),
        ..Default::default()
    }
    .constant("lhs", rep.lhs)
    .constant("rhs", rep.rhs)
    .constant("equality_defect", rep.equality_defect)
    .sweep("t", json!(p.t))
    .sweep("factor", json!(p.factor))
    .sweep("paths", json!(p.paths));
    if let Some(m) = rep.monte_carlo {
        out.constants.insert("monte_carlo".into(), m);
    }
    Ok(out)
}

fn kato_exponential(p: &KatoExponentialParams, ctx: &Context) -> Result<Outcome> {
    let w = ctx.potential()?;
    let starts = points(&ctx.model, &p.starts, &w)?;
    let est = kato_exponential_estimate(&ctx.model, &w, &p.times, &p.deltas, &starts, p.paths, p.step, ctx.seed)?;
    let rows = est
        .times
        .iter()
        .zip(&est.expectation)
        .zip(&est.std_error)
        .map(|((t, e), s)| vec![*t, *e, *s])
        .collect();
    let mut out = Outcome {
        inequality: Some(EXPONENTIAL_INEQUALITY.into()),
        margin_min: Some(est.table.iter().map(|d| d.margin).fold(f64::INFINITY, f64::min)),
        tolerance: Some(0.0),
        verdict: Some(est.verdict),
        plots: vec![PlotSeries::new("exponential", &["t", "expectation", "std_error"], rows)],
        ..Default::default()
    }
    .sweep("times", json!(p.times))
    .sweep("deltas", json!(p.deltas))
    .sweep("starts", json!(starts.len()))
    .sweep("paths", json!(p.paths));
    for d in &est.table {
        out.constants.insert(format!("C(delta={})", d.delta), d.c_delta);
    }
    out.detail = to_value(&est);
    Ok(out)
}

fn semigroup_bound(p: &SemigroupBoundParams, ctx: &Context) -> Result<Outcome> {
    let w_minus = ctx.potential()?;
    let op = discretize(&ctx.model, p.n, &Potential::scale(-1.0, w_minus))?;
    let signed = match &p.signed {
        Some(s) => Some(discretize(&ctx.model, p.n, &Potential::parse(s, &ctx.model)?)?),
        None => None,
    };
    let qs: Vec<QExponent> = p.qs.iter().map(|q| QExponent::from_f64(*q)).collect();
    let rep = bop_bound_check(&op, signed.as_ref(), &p.times, &p.deltas, &qs, ctx.seed)?;
    let mut out = Outcome {
        inequality: Some(rep.inequality.clone()),
        margin_min: Some(rep.margin_min),
        tolerance: Some(1e-10),
        verdict: Some(rep.verdict),
        ..Default::default()
    }
    .sweep("times", json!(p.times))
    .sweep("deltas", json!(p.deltas))
    .sweep("qs", json!(qs.iter().map(|q| q.to_string()).collect::<Vec<_>>()))
    .sweep("n", json!(p.n));
    for b in &rep.bounds {
        let rows = b.times.iter().zip(&b.norms).map(|(t, n)| vec![*t, *n]).collect();
        out.plots.push(PlotSeries::new(&format!("norm-q{}", b.q), &["t", "norm"], rows));
        for d in &b.table {
            out.constants.insert(format!("C(q={},delta={})", b.q, d.delta), d.c_delta);
        }
    }
    if let Some(e) = rep.domination_excess {
        out.constants.insert("domination_excess".into(), e);
    }
    out.detail = to_value(&rep);
    Ok(out)
}

fn riesz_thorin(p: &RieszThorinParams, ctx: &Context) -> Result<Outcome> {
    let w = ctx.potential()?;
    let op = discretize(&ctx.model, p.n, &w)?;
    let rep = riesz_thorin_check(&op, p.t, &p.rs, p.tolerance * ctx.tolerance_scale)?;
    Ok(Outcome {
        inequality: Some(rep.inequality.clone()),
        margin_min: Some(rep.margin_min),
        tolerance: Some(rep.tolerance),
        verdict: Some(rep.verdict),
        detail: to_value(&rep),
        ..Default::default()
    }
    .constant("norm_1", rep.norm_1)
    .constant("norm_inf", rep.norm_inf)
    .sweep("t", json!(p.t))
    .sweep("rs", json!(p.rs))
    .sweep("n", json!(p.n)))
}

/// Closed-form `V(x,y)` where one is known.
fn coulomb_exact(model: &ManifoldModel, r: f64) -> Option<f64> {
    match model {
        ManifoldModel::Hyperbolic3 => Some((-r).exp() / (4.0 * PI * r.sinh())),
        _ if model.is_flat() && model.dim() == 3 && !model.is_compact() => Some(1.0 / (4.0 * PI * r)),
        _ => None,
    }
}

fn coulomb_check(p: &CoulombParams, ctx: &Context) -> Result<Outcome> {
    let model = &ctx.model;
    let x = canonical_point(model);
    let e1 = &model.tangent_frame(&x.coords)[0];
    let tol = p.tolerance * ctx.tolerance_scale;
    let mut rows = Vec::new();
    let mut values = Vec::new();
    let mut ok = true;
    let mut margin = f64::INFINITY;
    for &r in &p.radii {
        let v: Vec<f64> = e1.iter().map(|c| c * r).collect();
        let y = model.exp_map(&x, &v)?;
        let d = model.distance(&x, &y)?;
        let c = coulomb(&ctx.engine, &x, &y, tol)?;
        let exact = coulomb_exact(model, d);
        let rel = exact.map(|e| (c.value - e).abs() / e);
        if let Some(rel) = rel {
            ok &= rel <= tol;
            margin = margin.min(tol - rel);
        }
        rows.push(vec![d, c.value, exact.unwrap_or(f64::NAN)]);
        values.push(json!({ "r": d, "value": c, "exact": exact, "relative_error": rel }));
    }
    let mut out = Outcome {
        inequality: Some(COULOMB_IDENTITY.into()),
        margin_min: margin.is_finite().then_some(margin),
        tolerance: Some(tol),
        plots: vec![PlotSeries::new("coulomb", &["r", "V", "exact"], rows)],
        ..Default::default()
    }
    .sweep("radii", json!(p.radii));
    let curve = if p.kato {
        let csv: Vec<String> = x.coords.iter().map(|c| c.to_string()).collect();
        let w = Potential::parse(&format!("coulomb:center={}", csv.join(",")), model)?;
        let pts = default_start_points(model, &w);
        let curve = is_kato(&ctx.engine, &w, p.t_max, p.levels, &pts, 0.5, &KatoOptions::default())?;
        ok &= curve.verdict.is_pass() && (curve.gamma - 0.5).abs() <= 0.1;
        out.constants.insert("gamma".into(), curve.gamma);
        out.sweep.insert("kato_t_range".into(), json!([curve.t_values.last(), p.t_max]));
        Some(curve)
    } else {
        None
    };
    out.verdict = Some(Verdict::from_bool(ok));
    out.detail = json!({ "values": values, "kato": curve });
    Ok(out)
}
