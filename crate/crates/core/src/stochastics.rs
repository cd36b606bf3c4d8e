//! Brownian motion on the model manifolds by geodesic random walks, with
//! Feynman-Kac estimators and Monte Carlo checks of kernel identities.
//!
//! Every path draws from its own ChaCha8 stream `(seed, path index)`, and
//! ensemble averages are reduced pairwise in path order, so results do not
//! depend on the number of worker threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::geometry::{ManifoldModel, Point};
use crate::heat_kernel::{HeatKernelEngine, KernelRule, RuleOptions};
use crate::potentials::Potential;
use crate::quadrature::{pairwise_sum, GaussLegendre};
use crate::verdict::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Gaussian tangent step followed by the exponential map.
    GeodesicWalk,
    /// Gaussian increments in the chart; flat models only.
    ChartEuler,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geodesic" | "geodesic-walk" => Ok(Scheme::GeodesicWalk),
            "euler" | "chart-euler" => Ok(Scheme::ChartEuler),
            _ => Err(Error::spec(s, "expected `geodesic` or `euler`")),
        }
    }
}

/// Parameters that determine every path of an ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WalkConfig {
    pub model: ManifoldModel,
    pub start: Point,
    pub horizon: f64,
    /// Requested step; the walk uses `horizon / steps`.
    pub step: f64,
    pub paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Paths leaving `B(start, window)` are stopped there (synthetic lifetime).
    pub window: Option<f64>,
}

impl WalkConfig {
    pub fn new(model: &ManifoldModel, start: Point, horizon: f64, step: f64, paths: usize, seed: u64) -> Self {
        Self {
            model: model.clone(),
            start,
            horizon,
            step,
            paths,
            seed,
            scheme: Scheme::GeodesicWalk,
            window: None,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step).ceil().max(1.0) as usize
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    fn validate(&self) -> Result<Vec<String>> {
        self.model.check_point(&self.start)?;
        if !(self.horizon > 0.0) || !(self.step > 0.0) || self.step > self.horizon {
            return Err(Error::Domain(format!(
                "need 0 < h <= t, got h = {}, t = {}",
                self.step, self.horizon
            )));
        }
        if self.paths == 0 {
            return Err(Error::Domain("need at least one path".into()));
        }
        if self.scheme == Scheme::ChartEuler && !self.model.is_flat() {
            return Err(Error::UnsupportedModel(format!("chart Euler steps need a flat model, not {}", self.model)));
        }
        let mut warnings = Vec::new();
        if curved(&self.model) && self.dt() > 0.01 {
            warnings.push(format!("step {} exceeds 0.01 on a curved model", self.dt()));
        }
        Ok(warnings)
    }

    fn rng(&self, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        rng
    }

    /// Replays path `path`, calling `visit(step, point)` for step 0 (the
    /// start) through the last step. Returns the lifetime (`∞` if the path
    /// survives the horizon) and whether it ended by leaving the window.
    pub fn walk<F: FnMut(usize, &[f64])>(&self, path: usize, mut visit: F) -> (f64, bool) {
        let mut rng = self.rng(path);
        let sh = self.dt().sqrt();
        let mut x = self.start.coords.clone();
        let mut tmp = vec![0.0; x.len()];
        visit(0, &x);
        for k in 1..=self.steps() {
            advance(&self.model, &mut x, sh, &mut rng, &mut tmp);
            if self.model.check_coords(&x).is_err() {
                return (k as f64 * self.dt(), false);
            }
            if self.window.is_some_and(|r| self.model.dist(&self.start.coords, &x) > r) {
                return (k as f64 * self.dt(), true);
            }
            visit(k, &x);
        }
        (f64::INFINITY, false)
    }
}

fn curved(model: &ManifoldModel) -> bool {
    match model {
        ManifoldModel::Sphere2 | ManifoldModel::Hyperbolic3 => true,
        ManifoldModel::Product(l, r) => curved(l) || curved(r),
        _ => false,
    }
}

fn advance(model: &ManifoldModel, x: &mut [f64], sh: f64, rng: &mut ChaCha8Rng, tmp: &mut [f64]) {
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    match model {
        ManifoldModel::Euclidean { .. } => x.iter_mut().for_each(|c| *c += sh * normal()),
        ManifoldModel::Torus { side, .. } => x.iter_mut().for_each(|c| *c = (*c + sh * normal()).rem_euclid(*side)),
        ManifoldModel::Circle => {
            let v = [sh * normal()];
            model.exp_into(x, &v, tmp);
            x.copy_from_slice(tmp);
        }
        ManifoldModel::Sphere2 => {
            // the exponential map drops the normal component
            let v = [sh * normal(), sh * normal(), sh * normal()];
            model.exp_into(x, &v, tmp);
            x.copy_from_slice(tmp);
        }
        ManifoldModel::Hyperbolic3 => {
            let z = x[2];
            let v = [sh * z * normal(), sh * z * normal(), sh * z * normal()];
            model.exp_into(x, &v, tmp);
            x.copy_from_slice(tmp);
        }
        ManifoldModel::Product(l, r) => {
            let n = l.coord_len();
            let (xl, xr) = x.split_at_mut(n);
            let (tl, tr) = tmp.split_at_mut(n);
            advance(l, xl, sh, rng, tl);
            advance(r, xr, sh, rng, tr);
        }
    }
}

/// Snapshots of an ensemble at recorded times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub config: WalkConfig,
    pub record_times: Vec<f64>,
    /// `snapshots[j]` holds the positions at `record_times[j]`, path-major.
    pub snapshots: Vec<Vec<f64>>,
    pub lifetimes: Vec<f64>,
    /// Whether each finite lifetime came from leaving the window.
    pub window_exits: Vec<bool>,
    pub warnings: Vec<String>,
}

/// Ensemble summary for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub model: String,
    pub start: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub survived: usize,
    pub record_times: Vec<f64>,
    /// Mean chart coordinates at each recorded time.
    pub mean: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Simulates `config.paths` paths, recording positions at `record` (each
/// rounded to the nearest step; the horizon is always recorded).
pub fn simulate(config: &WalkConfig, record: &[f64]) -> Result<PathEnsemble> {
    let warnings = config.validate()?;
    let dt = config.dt();
    let mut idx: Vec<usize> = record
        .iter()
        .map(|t| {
            if !(0.0..=config.horizon * (1.0 + 1e-12)).contains(t) {
                Err(Error::Domain(format!("record time {t} outside [0, {}]", config.horizon)))
            } else {
                Ok((t / dt).round() as usize)
            }
        })
        .collect::<Result<_>>()?;
    idx.push(config.steps());
    idx.sort_unstable();
    idx.dedup();
    let stride = config.model.coord_len();
    let per_path: Vec<(Vec<f64>, (f64, bool))> = (0..config.paths)
        .into_par_iter()
        .map(|i| {
            let mut snap = vec![f64::NAN; idx.len() * stride];
            let mut next = 0;
            let life = config.walk(i, |k, x| {
                while next < idx.len() && idx[next] == k {
                    snap[next * stride..(next + 1) * stride].copy_from_slice(x);
                    next += 1;
                }
            });
            (snap, life)
        })
        .collect();
    let mut snapshots = vec![Vec::with_capacity(config.paths * stride); idx.len()];
    let mut lifetimes = Vec::with_capacity(config.paths);
    let mut window_exits = Vec::with_capacity(config.paths);
    for (snap, (life, exit)) in per_path {
        for (j, s) in snapshots.iter_mut().enumerate() {
            s.extend_from_slice(&snap[j * stride..(j + 1) * stride]);
        }
        lifetimes.push(life);
        window_exits.push(exit);
    }
    Ok(PathEnsemble {
        config: config.clone(),
        record_times: idx.iter().map(|k| *k as f64 * dt).collect(),
        snapshots,
        lifetimes,
        window_exits,
        warnings,
    })
}

impl PathEnsemble {
    pub fn model(&self) -> &ManifoldModel {
        &self.config.model
    }

    pub fn len(&self) -> usize {
        self.lifetimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lifetimes.is_empty()
    }

    /// Index of the recorded time closest to `t`, within half a step.
    pub fn record_index(&self, t: f64) -> Result<usize> {
        let dt = self.config.dt();
        self.record_times
            .iter()
            .position(|r| (r - t).abs() <= 0.5 * dt)
            .ok_or_else(|| Error::Domain(format!("time {t} was not recorded")))
    }

    /// Position of `path` at recorded time index `j`, or `None` if the path
    /// died before.
    pub fn position(&self, j: usize, path: usize) -> Option<&[f64]> {
        let stride = self.model().coord_len();
        (self.lifetimes[path] > self.record_times[j]).then(|| &self.snapshots[j][path * stride..(path + 1) * stride])
    }

    /// The ensemble seen through the projection onto factor `index` (0 or 1)
    /// of a product model.
    pub fn project(&self, index: usize) -> Result<PathEnsemble> {
        let (l, r) = self
            .model()
            .factors()
            .ok_or_else(|| Error::UnsupportedModel(format!("{} is not a product", self.model())))?;
        let n = l.coord_len();
        let (factor, range) = match index {
            0 => (l.clone(), 0..n),
            1 => (r.clone(), n..n + r.coord_len()),
            _ => return Err(Error::Domain(format!("projection index {index} out of range"))),
        };
        let stride = self.model().coord_len();
        let snapshots = self
            .snapshots
            .iter()
            .map(|s| s.chunks(stride).flat_map(|c| c[range.clone()].to_vec()).collect())
            .collect();
        let mut config = self.config.clone();
        config.start = Point::new(self.config.start.coords[range.clone()].to_vec());
        config.model = factor;
        Ok(PathEnsemble {
            config,
            record_times: self.record_times.clone(),
            snapshots,
            lifetimes: self.lifetimes.clone(),
            window_exits: self.window_exits.clone(),
            warnings: self.warnings.clone(),
        })
    }

    pub fn summary(&self) -> EnsembleSummary {
        let stride = self.model().coord_len();
        let mean = (0..self.record_times.len())
            .map(|j| {
                (0..stride)
                    .map(|c| {
                        let vals: Vec<f64> = (0..self.len())
                            .filter_map(|i| self.position(j, i).map(|x| x[c]))
                            .collect();
                        pairwise_sum(&vals) / vals.len().max(1) as f64
                    })
                    .collect()
            })
            .collect();
        EnsembleSummary {
            model: self.model().to_string(),
            start: self.config.start.coords.clone(),
            horizon: self.config.horizon,
            dt: self.config.dt(),
            paths: self.len(),
            seed: self.config.seed,
            scheme: self.config.scheme,
            survived: self.lifetimes.iter().filter(|l| l.is_infinite()).count(),
            record_times: self.record_times.clone(),
            mean,
            warnings: self.warnings.clone(),
        }
    }

    /// Writes `path,t,coords…` rows for the first `max_paths` paths, every
    /// `every` steps.
    pub fn write_paths_csv<W: Write>(&self, out: W, max_paths: usize, every: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["path".to_string(), "t".to_string()];
        header.extend((0..self.model().coord_len()).map(|i| format!("x{i}")));
        w.write_record(&header).map_err(csv_err)?;
        let dt = self.config.dt();
        let every = every.max(1);
        for i in 0..max_paths.min(self.len()) {
            let mut rows = Vec::new();
            self.config.walk(i, |k, x| {
                if k % every == 0 || k == self.config.steps() {
                    let mut row = vec![i.to_string(), format!("{}", k as f64 * dt)];
                    row.extend(x.iter().map(|c| format!("{c}")));
                    rows.push(row);
                }
            });
            for row in rows {
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Mean and standard error of per-path values, reduced pairwise.
fn mean_and_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = if values.len() > 1 { pairwise_sum(&dev) / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

fn z_score(mc: f64, se: f64, exact: f64) -> f64 {
    let diff = mc - exact;
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-12 * exact.abs().max(1.0) {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Monte Carlo against quadrature for `E[f₁(X_{t₁}) ⋯ f_l(X_{t_l})]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FddReport {
    pub times: Vec<f64>,
    pub functions: Vec<String>,
    pub monte_carlo: f64,
    pub std_error: f64,
    pub quadrature: f64,
    pub quadrature_tail: f64,
    pub z: f64,
    pub verdict: Verdict,
}

/// Nested kernel quadrature of `∫ p(t₁,x,y₁)f₁(y₁) ∫ p(t₂-t₁,y₁,y₂)f₂(y₂) ⋯`.
pub fn fdd_quadrature(engine: &HeatKernelEngine, x: &[f64], times: &[f64], fs: &[Potential]) -> Result<(f64, f64)> {
    fn level(
        engine: &HeatKernelEngine,
        x: &[f64],
        t_prev: f64,
        times: &[f64],
        fs: &[Potential],
        first: bool,
    ) -> Result<(f64, f64)> {
        let model = &engine.model;
        let base = if first { RuleOptions::default() } else { RuleOptions::default().coarse() };
        let rule = engine.kernel_rule(times[0] - t_prev, x, &fs[0].rule_options(model, x, &base))?;
        let tail = rule.tail() * fs[0].sup_abs().unwrap_or(1.0);
        if fs.len() == 1 {
            return Ok((rule.integrate(|y| fs[0].eval(model, y)), tail));
        }
        let mut err = None;
        let mut inner_tail: f64 = 0.0;
        let v = rule.integrate(|y| {
            let f = fs[0].eval(model, y);
            if f == 0.0 || err.is_some() {
                return 0.0;
            }
            match level(engine, y, times[0], &times[1..], &fs[1..], false) {
                Ok((v, t)) => {
                    inner_tail = inner_tail.max(t);
                    f * v
                }
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        Ok((v, tail + inner_tail))
    }
    if times.is_empty() || times.len() != fs.len() {
        return Err(Error::Domain("need one test function per time".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) || times[0] <= 0.0 {
        return Err(Error::Domain("times must be positive and increasing".into()));
    }
    level(engine, x, 0.0, times, fs, true)
}

pub fn fdd_check(ensemble: &PathEnsemble, engine: &HeatKernelEngine, times: &[f64], fs: &[Potential]) -> Result<FddReport> {
    let model = ensemble.model();
    let idx = times.iter().map(|t| ensemble.record_index(*t)).collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = (0..ensemble.len())
        .map(|i| {
            idx.iter()
                .zip(fs)
                .map(|(&j, f)| ensemble.position(j, i).map_or(0.0, |x| f.eval(model, x)))
                .product()
        })
        .collect();
    let (mc, se) = mean_and_error(&values);
    let recorded: Vec<f64> = idx.iter().map(|j| ensemble.record_times[*j]).collect();
    let (quad, tail) = fdd_quadrature(engine, &ensemble.config.start.coords, &recorded, fs)?;
    let z = z_score(mc, se, quad);
    Ok(FddReport {
        times: recorded,
        functions: fs.iter().map(|f| f.to_string()).collect(),
        monte_carlo: mc,
        std_error: se,
        quadrature: quad,
        quadrature_tail: tail,
        z,
        verdict: Verdict::from_bool(z.abs() < 4.0),
    })
}

/// Pearson χ² test of an ensemble's positions at `t` against the kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub verdict: Verdict,
}

fn chi_square(counts: &[f64], probs: &[f64], n: f64) -> ChiSquareReport {
    let statistic: f64 = counts.iter().zip(probs).map(|(c, p)| (c - n * p).powi(2) / (n * p)).sum();
    let dof = counts.len() - 1;
    let p_value = ChiSquared::new(dof as f64).map_or(f64::NAN, |d| 1.0 - d.cdf(statistic));
    ChiSquareReport {
        statistic,
        degrees_of_freedom: dof,
        p_value,
        verdict: Verdict::from_bool(p_value >= 0.01),
    }
}

/// Angle histogram on the circle against bin masses of the wrapped Gaussian.
pub fn circle_chi_square(ensemble: &PathEnsemble, t: f64, bins: usize) -> Result<ChiSquareReport> {
    if *ensemble.model() != ManifoldModel::Circle {
        return Err(Error::UnsupportedModel("angle histogram needs the circle".into()));
    }
    let j = ensemble.record_index(t)?;
    let t = ensemble.record_times[j];
    let engine = HeatKernelEngine::new(&ManifoldModel::Circle);
    let x0 = &ensemble.config.start.coords;
    let width = 2.0 * std::f64::consts::PI / bins as f64;
    let gl = GaussLegendre::new(16);
    let mut probs = Vec::with_capacity(bins);
    for b in 0..bins {
        let lo = -std::f64::consts::PI + b as f64 * width;
        let mut err = None;
        let p = gl.integrate(lo, lo + width, |a| {
            engine.value(t, x0, &[a.cos(), a.sin()]).map_or_else(
                |e| {
                    err = Some(e);
                    0.0
                },
                |v| v.0,
            )
        });
        if let Some(e) = err {
            return Err(e);
        }
        probs.push(p);
    }
    let mut counts = vec![0.0; bins];
    let mut n = 0.0;
    for i in 0..ensemble.len() {
        if let Some(x) = ensemble.position(j, i) {
            let a = x[1].atan2(x[0]);
            let b = (((a + std::f64::consts::PI) / width) as usize).min(bins - 1);
            counts[b] += 1.0;
            n += 1.0;
        }
    }
    Ok(chi_square(&counts, &probs, n))
}

/// Histogram of `d(x₀, X_t)²/t` on Euclidean models against the χ²_m law,
/// with equiprobable bins.
pub fn euclidean_distance_chi_square(ensemble: &PathEnsemble, t: f64, bins: usize) -> Result<ChiSquareReport> {
    let m = match ensemble.model() {
        ManifoldModel::Euclidean { dim } => *dim,
        other => return Err(Error::UnsupportedModel(format!("distance law check needs Euclidean space, not {other}"))),
    };
    let j = ensemble.record_index(t)?;
    let t = ensemble.record_times[j];
    let law = ChiSquared::new(m as f64).map_err(|e| Error::Domain(e.to_string()))?;
    let edges: Vec<f64> = (1..bins).map(|k| law.inverse_cdf(k as f64 / bins as f64)).collect();
    let mut counts = vec![0.0; bins];
    let mut n = 0.0;
    let x0 = &ensemble.config.start.coords;
    for i in 0..ensemble.len() {
        if let Some(x) = ensemble.position(j, i) {
            let u = x.iter().zip(x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / t;
            counts[edges.partition_point(|e| *e < u)] += 1.0;
            n += 1.0;
        }
    }
    Ok(chi_square(&counts, &vec![1.0 / bins as f64; bins], n))
}

/// `E[1_{t<ζ} e^{-∫_0^t w(X_s) ds} f(X_t)]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeynmanKacEstimate {
    pub value: f64,
    pub std_error: f64,
    pub paths: usize,
    pub potential: String,
    pub terminal: String,
    pub time_rule: String,
    /// `|w|` cap applied within `√h` of a singular point.
    pub cap: Option<f64>,
    pub capped_fraction: f64,
    pub warnings: Vec<String>,
}

/// Cap for `|w|` near its singular points: the largest `|w|` at distance
/// `ε` from any of them.
fn singular_cap(model: &ManifoldModel, w: &Potential, eps: f64) -> Option<f64> {
    let sing = w.singularities();
    if sing.is_empty() {
        return None;
    }
    let mut cap: f64 = 0.0;
    let mut y = vec![0.0; model.coord_len()];
    for (c, _) in &sing {
        for e in model.tangent_frame(c) {
            let v: Vec<f64> = e.iter().map(|a| a * eps).collect();
            model.exp_into(c, &v, &mut y);
            cap = cap.max(w.eval(model, &y).abs());
        }
    }
    Some(cap)
}

/// Per-path `∫_0^T w(X_s) ds` by the trapezoidal rule, sampled at the
/// requested step indices.
struct PathIntegral {
    /// `(∫_0^{t_j} w, capped)` at each requested index.
    values: Vec<f64>,
    capped: bool,
    lifetime: f64,
    terminal: Vec<f64>,
}

fn integrate_path(config: &WalkConfig, path: usize, w: &Potential, cap: Option<f64>, eps: f64, at: &[usize]) -> PathIntegral {
    let model = &config.model;
    let dt = config.dt();
    let sing: Vec<Vec<f64>> = if cap.is_some() { w.singularities().into_iter().map(|s| s.0).collect() } else { Vec::new() };
    let mut capped = false;
    let mut acc = 0.0;
    let mut prev = 0.0;
    let mut values = Vec::with_capacity(at.len());
    let mut terminal = Vec::new();
    let mut next = 0;
    let (lifetime, _) = config.walk(path, |k, x| {
        let mut v = w.eval(model, x);
        if let Some(c) = cap {
            if !v.is_finite() || sing.iter().any(|s| model.dist(s, x) < eps) {
                v = v.clamp(-c, c);
                capped = true;
            }
        }
        if k > 0 {
            acc += 0.5 * dt * (prev + v);
        }
        prev = v;
        while next < at.len() && at[next] == k {
            values.push(acc);
            next += 1;
        }
        if k == config.steps() {
            terminal = x.to_vec();
        }
    });
    PathIntegral {
        values,
        capped,
        lifetime,
        terminal,
    }
}

/// Feynman-Kac estimate over the ensemble's paths (replayed from their
/// streams) with the trapezoidal rule in time.
pub fn feynman_kac(ensemble: &PathEnsemble, w: &Potential, f: &Potential) -> Result<FeynmanKacEstimate> {
    let config = &ensemble.config;
    let model = &config.model;
    let eps = config.dt().sqrt();
    let cap = singular_cap(model, w, eps);
    let end = [config.steps()];
    let per_path: Vec<(f64, bool)> = (0..config.paths)
        .into_par_iter()
        .map(|i| {
            let p = integrate_path(config, i, w, cap, eps, &end);
            if p.lifetime.is_finite() {
                (0.0, p.capped)
            } else {
                ((-p.values[0]).exp() * f.eval(model, &p.terminal), p.capped)
            }
        })
        .collect();
    let values: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let (value, std_error) = mean_and_error(&values);
    let capped_fraction = per_path.iter().filter(|p| p.1).count() as f64 / values.len() as f64;
    let mut warnings = ensemble.warnings.clone();
    if capped_fraction > 0.01 {
        warnings.push(format!("{:.2}% of paths were capped near a singularity", 100.0 * capped_fraction));
    }
    if !value.is_finite() {
        warnings.push("estimate overflowed".into());
    }
    Ok(FeynmanKacEstimate {
        value,
        std_error,
        paths: values.len(),
        potential: w.to_string(),
        terminal: f.to_string(),
        time_rule: format!("trapezoid, dt = {}", config.dt()),
        cap,
        capped_fraction,
        warnings,
    })
}

/// `sup_x E[1_{t<ζ} e^{∫_0^t w₋(X_s) ds}]` on a time grid and the fitted
/// `C(δ)` with `E(t) ≤ δ e^{t C(δ)}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentialEstimate {
    pub times: Vec<f64>,
    pub expectation: Vec<f64>,
    pub std_error: Vec<f64>,
    pub table: Vec<DeltaFit>,
    pub diverged: bool,
    pub capped_fraction: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaFit {
    pub delta: f64,
    pub c_delta: f64,
    /// `min_t [log(δ e^{t C}) - log E(t)]`.
    pub margin: f64,
}

/// `C(δ) = max(sup_t (log E(t) - log δ)/t, log E(t_max)/t_max, 0)`: the
/// smallest constant valid on the grid, raised to the large-time growth
/// rate so that `C` does not fall below it as the grid is extended.
pub fn fit_delta_constants(times: &[f64], values: &[f64], deltas: &[f64]) -> Vec<DeltaFit> {
    let (t_max, v_max) = times
        .iter()
        .zip(values)
        .max_by(|a, b| a.0.total_cmp(b.0))
        .map(|(t, v)| (*t, *v))
        .unwrap_or((1.0, 1.0));
    let growth = if t_max > 0.0 { v_max.ln() / t_max } else { 0.0 };
    deltas
        .iter()
        .map(|&delta| {
            let fit = times
                .iter()
                .zip(values)
                .filter(|(t, _)| **t > 0.0)
                .map(|(t, v)| (v.ln() - delta.ln()) / t)
                .fold(0.0, f64::max);
            let c = fit.max(growth).max(0.0);
            let margin = times
                .iter()
                .zip(values)
                .map(|(t, v)| delta.ln() + t * c - v.ln())
                .fold(f64::INFINITY, f64::min);
            DeltaFit {
                delta,
                c_delta: c,
                margin,
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn kato_exponential_estimate(
    model: &ManifoldModel,
    w_minus: &Potential,
    times: &[f64],
    deltas: &[f64],
    starts: &[Point],
    paths: usize,
    step: f64,
    seed: u64,
) -> Result<ExponentialEstimate> {
    if deltas.iter().any(|d| !(*d > 1.0)) {
        return Err(Error::Domain("δ must exceed 1".into()));
    }
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    if starts.is_empty() || !(t_max > 0.0) {
        return Err(Error::Domain("need start points and a positive time".into()));
    }
    let mut expectation = vec![f64::NEG_INFINITY; times.len()];
    let mut std_error = vec![0.0; times.len()];
    let mut capped = 0usize;
    for (s, x) in starts.iter().enumerate() {
        let config = WalkConfig::new(model, x.clone(), t_max, step.min(t_max), paths, seed.wrapping_add(s as u64));
        config.validate()?;
        let dt = config.dt();
        let at: Vec<usize> = times.iter().map(|t| (t / dt).round() as usize).collect();
        let mut order: Vec<usize> = (0..at.len()).collect();
        order.sort_by_key(|i| at[*i]);
        let sorted: Vec<usize> = order.iter().map(|i| at[*i]).collect();
        let eps = dt.sqrt();
        let cap = singular_cap(model, w_minus, eps);
        let neg = Potential::scale(-1.0, w_minus.clone());
        let per_path: Vec<(Vec<f64>, bool)> = (0..paths)
            .into_par_iter()
            .map(|i| {
                let p = integrate_path(&config, i, &neg, cap, eps, &sorted);
                let vals = sorted
                    .iter()
                    .zip(p.values.iter().chain(std::iter::repeat(&f64::NAN)))
                    .map(|(k, v)| if (*k as f64) * dt < p.lifetime { (-v).exp() } else { 0.0 })
                    .collect();
                (vals, p.capped)
            })
            .collect();
        capped += per_path.iter().filter(|p| p.1).count();
        for (pos, &orig) in order.iter().enumerate() {
            let col: Vec<f64> = per_path.iter().map(|p| p.0[pos]).collect();
            let (m, se) = mean_and_error(&col);
            if m > expectation[orig] {
                expectation[orig] = m;
                std_error[orig] = se;
            }
        }
    }
    let diverged = expectation.iter().any(|v| !v.is_finite());
    let table = if diverged { Vec::new() } else { fit_delta_constants(times, &expectation, deltas) };
    Ok(ExponentialEstimate {
        times: times.to_vec(),
        expectation,
        std_error,
        verdict: Verdict::from_bool(!diverged && table.iter().all(|d| d.margin >= 0.0)),
        table,
        diverged,
        capped_fraction: capped as f64 / (paths * starts.len()) as f64,
    })
}

/// Two sides of `∫_M p(t,x,y)|w(π y)| dμ(y) ≤ ∫_{M'} p'(t,π x,z)|w(z)| dμ'(z)`
/// for a product projection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub inequality: String,
    pub factor: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub quadrature_error: f64,
    pub monte_carlo: Option<f64>,
    pub mc_std_error: Option<f64>,
    /// `|lhs - rhs|`; zero up to error when both factors are complete.
    pub equality_defect: f64,
    pub verdict: Verdict,
}

pub const PROJECTION_INEQUALITY: &str = "∫_M p(t,x,y)|w(π(y))| dμ(y) ≤ ∫_{M'} p'(t,π(x),z)|w(z)| dμ'(z)";

fn rule_error(rule: &KernelRule, sup: f64) -> f64 {
    (rule.tail() + (rule.mass() - 1.0).abs()) * sup
}

/// Quadrature on both sides, plus Monte Carlo of the left side when
/// `paths > 0`. PASS iff `lhs ≤ rhs + tol` and, for complete factors, the
/// defect is within three combined error bars.
#[allow(clippy::too_many_arguments)]
pub fn elworthy_projection_check(
    model: &ManifoldModel,
    factor: usize,
    w: &Potential,
    t: f64,
    x: &Point,
    paths: usize,
    step: f64,
    seed: u64,
) -> Result<ProjectionReport> {
    let (l, r) = model
        .factors()
        .ok_or_else(|| Error::UnsupportedModel(format!("projection check needs a product, not {model}")))?;
    model.check_point(x)?;
    let n = l.coord_len();
    let (base, range) = match factor {
        0 => (l.clone(), 0..n),
        1 => (r.clone(), n..model.coord_len()),
        _ => return Err(Error::Domain(format!("factor index {factor} out of range"))),
    };
    let eval_lifted = |y: &[f64]| w.eval(&base, &y[range.clone()]).abs();
    let sup = w.sup_abs().unwrap_or(1.0);
    let engine = HeatKernelEngine::new(model);
    let mut opts = RuleOptions::default();
    let xf = &x.coords[range.clone()];
    for c in w.focus(xf) {
        let mut p = x.coords.clone();
        p[range.clone()].copy_from_slice(&c);
        opts.focus.push(p);
    }
    opts.radii = w.jumps(&base, xf);
    let lrule = engine.kernel_rule(t, &x.coords, &opts)?;
    let lhs = lrule.integrate(eval_lifted);
    let fengine = HeatKernelEngine::new(&base);
    let rrule = fengine.kernel_rule(t, xf, &w.rule_options(&base, xf, &RuleOptions::default()))?;
    let rhs = rrule.integrate(|z| w.eval(&base, z).abs());
    // the product rule resolves each factor at coarse resolution
    let coarse = fengine.kernel_rule(t, xf, &w.rule_options(&base, xf, &RuleOptions::default().coarse()))?;
    let resolution = (coarse.integrate(|z| w.eval(&base, z).abs()) - rhs).abs();
    let quadrature_error = rule_error(&lrule, sup) + rule_error(&rrule, sup) + resolution + 1e-9 * rhs;
    let (monte_carlo, mc_std_error) = if paths > 0 {
        let config = WalkConfig::new(model, x.clone(), t, step.min(t), paths, seed);
        let ens = simulate(&config, &[])?;
        let j = ens.record_times.len() - 1;
        let vals: Vec<f64> = (0..ens.len())
            .map(|i| ens.position(j, i).map_or(0.0, eval_lifted))
            .collect();
        let (m, se) = mean_and_error(&vals);
        (Some(m), Some(se))
    } else {
        (None, None)
    };
    let equality_defect = (lhs - rhs).abs();
    let band = 3.0 * (quadrature_error + mc_std_error.unwrap_or(0.0));
    let mc_ok = monte_carlo.is_none_or(|m| (m - rhs).abs() <= 4.0 * mc_std_error.unwrap_or(0.0) + quadrature_error);
    let complete = l.stochastically_complete() && r.stochastically_complete();
    let ok = lhs <= rhs + quadrature_error && (!complete || equality_defect <= band) && mc_ok;
    Ok(ProjectionReport {
        inequality: PROJECTION_INEQUALITY.into(),
        factor,
        lhs,
        rhs,
        quadrature_error,
        monte_carlo,
        mc_std_error,
        equality_defect,
        verdict: Verdict::from_bool(ok),
    })
}

/// `P(t < ζ)` by Monte Carlo against the quadrature mass `∫ p dμ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MassPoint {
    pub t: f64,
    pub survival: f64,
    pub std_error: f64,
    pub quadrature_mass: f64,
    /// Fraction of paths stopped by the window rather than by explosion.
    pub window_exit: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MassCurve {
    pub points: Vec<MassPoint>,
    pub verdict: Verdict,
}

/// Survival curve `t ↦ P(t < ζ)`. Window exits are counted as survivals:
/// they are a truncation of the simulation, not an explosion.
pub fn stochastic_completeness_probe(config: &WalkConfig, times: &[f64]) -> Result<MassCurve> {
    let ens = simulate(config, times)?;
    let engine = HeatKernelEngine::new(&config.model);
    let mut points = Vec::new();
    let mut ok = true;
    for &t in times {
        let j = ens.record_index(t)?;
        let tj = ens.record_times[j];
        let alive: Vec<f64> = (0..ens.len())
            .map(|i| if ens.lifetimes[i] > tj || ens.window_exits[i] { 1.0 } else { 0.0 })
            .collect();
        let window_exit = (0..ens.len())
            .filter(|&i| ens.window_exits[i] && ens.lifetimes[i] <= tj)
            .count() as f64
            / ens.len() as f64;
        let (survival, std_error) = mean_and_error(&alive);
        let quadrature_mass = if tj > 0.0 {
            engine.kernel_rule(tj, &config.start.coords, &RuleOptions::default())?.mass()
        } else {
            1.0
        };
        ok &= (survival - quadrature_mass).abs() <= 4.0 * std_error + 1e-6;
        points.push(MassPoint {
            t: tj,
            survival,
            std_error,
            quadrature_mass,
            window_exit,
        });
    }
    Ok(MassCurve {
        points,
        verdict: Verdict::from_bool(ok),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let c = WalkConfig::new(&ManifoldModel::Sphere2, Point::north_pole(), 0.1, 0.01, 8, 7);
        let a = simulate(&c, &[0.05]).unwrap();
        let b = simulate(&c, &[0.05]).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
        let other = simulate(&WalkConfig { seed: 8, ..c }, &[0.05]).unwrap();
        assert_ne!(a.snapshots, other.snapshots);
    }

    #[test]
    fn euclidean_line_moments() {
        let n = 20_000;
        let c = WalkConfig::new(&ManifoldModel::euclidean(1), Point::origin(1), 1.0, 0.05, n, 3);
        let e = simulate(&c, &[]).unwrap();
        let xs = &e.snapshots[0];
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64 - mean * mean;
        let band = 4.0 / (n as f64).sqrt();
        assert!(mean.abs() < band, "{mean}");
        assert!((var - 1.0).abs() < 4.0 * band, "{var}");
    }

    #[test]
    fn constant_potential_is_deterministic() {
        let c = WalkConfig::new(&ManifoldModel::Circle, Point::on_circle(0.0), 0.5, 0.01, 200, 1);
        let e = simulate(&c, &[]).unwrap();
        let fk = feynman_kac(&e, &Potential::Constant(2.0), &Potential::Constant(1.0)).unwrap();
        assert!((fk.value - (-1.0f64).exp()).abs() < 1e-12);
        assert!(fk.std_error < 1e-12);
    }

    #[test]
    fn delta_fit_for_constant_growth() {
        let ts = [0.0, 0.5, 1.0, 2.0];
        let vs: Vec<f64> = ts.iter().map(|t: &f64| (1.5 * t).exp()).collect();
        for d in fit_delta_constants(&ts, &vs, &[1.5, 2.0, 4.0]) {
            assert!((d.c_delta - 1.5).abs() < 1e-12);
            assert!((d.margin - d.delta.ln()).abs() < 1e-12);
        }
    }
}
