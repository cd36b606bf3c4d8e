//! Kernel-weighted quadrature around a point.
//!
//! `KernelRule` approximates `f ↦ ∫ p(t, x, y) f(y) dμ(y)` with nodes in
//! geodesic polar coordinates centred at `x`. Radii use tanh-sinh pieces
//! split at the distances of declared singular points ("focus" points) and
//! the angular rule is oriented toward the nearest focus, so integrands like
//! `|y - c|^-β` are resolved without a fine grid.

use std::f64::consts::PI;

use statrs::function::gamma::gamma_ur;

use super::HeatKernelEngine;
use crate::error::{Error, Result};
use crate::geometry::ManifoldModel;
use crate::quadrature::TanhSinh;

#[derive(Debug, Clone)]
pub struct RuleOptions {
    /// Points where the integrand may be singular.
    pub focus: Vec<Vec<f64>>,
    /// Distances from the centre where the integrand may jump.
    pub radii: Vec<f64>,
    pub step: f64,
    pub reach: f64,
    /// Azimuth count for 3-dimensional angular rules.
    pub azimuths: usize,
    /// Radial cutoff in units of `sqrt(t)`.
    pub sigmas: f64,
}

impl Default for RuleOptions {
    fn default() -> Self {
        Self {
            focus: Vec::new(),
            radii: Vec::new(),
            step: 0.15,
            reach: 3.0,
            azimuths: 16,
            sigmas: 9.5,
        }
    }
}

impl RuleOptions {
    pub fn with_focus(focus: Vec<Vec<f64>>) -> Self {
        Self {
            focus,
            ..Self::default()
        }
    }

    /// Cheaper variant for tensor products.
    pub fn coarse(&self) -> Self {
        Self {
            focus: self.focus.clone(),
            radii: self.radii.clone(),
            step: 0.17,
            reach: 3.0,
            azimuths: 8,
            sigmas: 8.0,
        }
    }
}

/// Nodes and weights; tensor products are kept factored.
#[derive(Debug, Clone)]
pub enum KernelRule {
    Nodes {
        stride: usize,
        coords: Vec<f64>,
        weights: Vec<f64>,
        /// Bound on the kernel mass outside the covered region.
        tail: f64,
    },
    Tensor(Box<KernelRule>, Box<KernelRule>),
}

impl KernelRule {
    pub fn len(&self) -> usize {
        match self {
            KernelRule::Nodes { weights, .. } => weights.len(),
            KernelRule::Tensor(l, r) => l.len() * r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tail(&self) -> f64 {
        match self {
            KernelRule::Nodes { tail, .. } => *tail,
            KernelRule::Tensor(l, r) => l.tail() + r.tail(),
        }
    }

    fn coord_len(&self) -> usize {
        match self {
            KernelRule::Nodes { stride, .. } => *stride,
            KernelRule::Tensor(l, r) => l.coord_len() + r.coord_len(),
        }
    }

    /// `∑ w_i f(y_i)`.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        let mut buf = vec![0.0; self.coord_len()];
        self.accumulate(&mut buf, 0, 1.0, &mut f)
    }

    pub fn mass(&self) -> f64 {
        self.integrate(|_| 1.0)
    }

    fn accumulate(&self, buf: &mut [f64], offset: usize, scale: f64, f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
        match self {
            KernelRule::Nodes {
                stride,
                coords,
                weights,
                ..
            } => {
                let mut sum = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    buf[offset..offset + stride].copy_from_slice(&coords[i * stride..(i + 1) * stride]);
                    sum += w * f(buf);
                }
                scale * sum
            }
            KernelRule::Tensor(l, r) => {
                let nl = l.coord_len();
                match l.as_ref() {
                    KernelRule::Nodes {
                        stride, coords, weights, ..
                    } => {
                        let mut sum = 0.0;
                        for (i, w) in weights.iter().enumerate() {
                            buf[offset..offset + stride].copy_from_slice(&coords[i * stride..(i + 1) * stride]);
                            sum += r.accumulate(buf, offset + nl, *w, f);
                        }
                        scale * sum
                    }
                    KernelRule::Tensor(..) => {
                        // flatten nested left factors on the fly
                        let flat = l.flatten();
                        KernelRule::Tensor(Box::new(flat), r.clone()).accumulate(buf, offset, scale, f)
                    }
                }
            }
        }
    }

    /// Explicit node list (expands tensor products).
    pub fn flatten(&self) -> KernelRule {
        match self {
            KernelRule::Nodes { .. } => self.clone(),
            KernelRule::Tensor(l, r) => {
                let (l, r) = (l.flatten(), r.flatten());
                let (KernelRule::Nodes { stride: sl, coords: cl, weights: wl, tail: tl },
                     KernelRule::Nodes { stride: sr, coords: cr, weights: wr, tail: tr }) = (l, r)
                else {
                    unreachable!("flatten returns nodes")
                };
                let mut coords = Vec::with_capacity(wl.len() * wr.len() * (sl + sr));
                let mut weights = Vec::with_capacity(wl.len() * wr.len());
                for i in 0..wl.len() {
                    for j in 0..wr.len() {
                        coords.extend_from_slice(&cl[i * sl..(i + 1) * sl]);
                        coords.extend_from_slice(&cr[j * sr..(j + 1) * sr]);
                        weights.push(wl[i] * wr[j]);
                    }
                }
                KernelRule::Nodes {
                    stride: sl + sr,
                    coords,
                    weights,
                    tail: tl + tr,
                }
            }
        }
    }
}

impl HeatKernelEngine {
    /// Rule for `∫ p(t, x, y) f(y) dμ(y)`.
    pub fn kernel_rule(&self, t: f64, x: &[f64], opts: &RuleOptions) -> Result<KernelRule> {
        super::check_time(t)?;
        let model = &self.model;
        match model {
            ManifoldModel::Product(l, _) => {
                let n = l.coord_len();
                let (le, re) = match &self.method {
                    super::Method::ProductRule(a, b) => (a, b),
                    _ => unreachable!("products use the product rule"),
                };
                let split = |lo: usize, hi: usize| RuleOptions {
                    focus: opts.focus.iter().map(|f| f[lo..hi].to_vec()).collect(),
                    ..opts.coarse()
                };
                let lr = le.kernel_rule(t, &x[..n], &split(0, n))?;
                let rr = re.kernel_rule(t, &x[n..], &split(n, model.coord_len()))?;
                Ok(KernelRule::Tensor(Box::new(lr), Box::new(rr)))
            }
            ManifoldModel::Euclidean { dim } | ManifoldModel::Torus { dim, .. } if *dim > 3 => {
                let one = match model {
                    ManifoldModel::Torus { side, .. } => ManifoldModel::torus(1, *side),
                    _ => ManifoldModel::euclidean(1),
                };
                let rest = match model {
                    ManifoldModel::Torus { side, .. } => ManifoldModel::torus(dim - 1, *side),
                    _ => ManifoldModel::euclidean(dim - 1),
                };
                let split = |lo: usize, hi: usize| RuleOptions {
                    focus: opts.focus.iter().map(|f| f[lo..hi].to_vec()).collect(),
                    ..opts.coarse()
                };
                let a = HeatKernelEngine::new(&one).kernel_rule(t, &x[..1], &split(0, 1))?;
                let b = HeatKernelEngine::new(&rest).kernel_rule(t, &x[1..], &split(1, *dim))?;
                Ok(KernelRule::Tensor(Box::new(a), Box::new(b)))
            }
            _ => {
                let m = model.dim();
                let sq = t.sqrt();
                let (radius, tail) = match model {
                    ManifoldModel::Sphere2 => {
                        let r = (opts.sigmas * sq).min(PI);
                        (r, if r >= PI { 0.0 } else { gamma_ur(1.0, r * r / (2.0 * t)) })
                    }
                    ManifoldModel::Hyperbolic3 => {
                        let r = t + opts.sigmas * sq;
                        (r, gamma_ur(1.5, (opts.sigmas * sq).powi(2) / (2.0 * t)))
                    }
                    _ => {
                        let r = opts.sigmas * sq;
                        (r, gamma_ur(0.5 * m as f64, r * r / (2.0 * t)))
                    }
                };
                let mut breaks = vec![3.0 * sq];
                breaks.extend(&opts.radii);
                if matches!(model, ManifoldModel::Hyperbolic3) {
                    breaks.push(t);
                    breaks.push(t + 3.0 * sq);
                }
                let density = |r: f64| self.radial_profile(t, r).map(|p| p * radial_jacobian(model, r));
                // validate once so the closure below can unwrap
                density(0.5 * radius)?;
                polar_rule(
                    model,
                    x,
                    radius,
                    &breaks,
                    &|r| density(r).unwrap_or(0.0),
                    opts,
                    tail,
                )
            }
        }
    }
}

/// `S(r) / |S^{m-1}|`: polar Jacobian relative to the unit sphere.
pub(crate) fn radial_jacobian(model: &ManifoldModel, r: f64) -> f64 {
    match model {
        ManifoldModel::Sphere2 => r.sin(),
        ManifoldModel::Hyperbolic3 => r.sinh().powi(2),
        ManifoldModel::Circle => 1.0,
        _ => r.powi(model.dim() as i32 - 1),
    }
}

/// Polar rule on `B(x, radius)` for `∫ ρ(d(x,y)) f(y) dμ(y)`, where
/// `radial(r)` returns `ρ(r)·S(r)/|S^{m-1}|`. On the circle and tori the
/// ball lives on the universal cover and is wrapped by the exponential map.
pub fn polar_rule(
    model: &ManifoldModel,
    x: &[f64],
    radius: f64,
    extra_breaks: &[f64],
    radial: &dyn Fn(f64) -> f64,
    opts: &RuleOptions,
    tail: f64,
) -> Result<KernelRule> {
    let m = model.dim();
    if m > 3 || matches!(model, ManifoldModel::Product(..)) {
        return Err(Error::UnsupportedModel(format!("polar rules need dimension <= 3, got {model}")));
    }
    if matches!(model, ManifoldModel::Sphere2) && radius > PI {
        return Err(Error::Domain("sphere polar radius exceeds pi".into()));
    }
    let de = TanhSinh::new(opts.step, opts.reach);

    // nearest focus orients the angular rule; every focus image within the
    // radius becomes a radial breakpoint
    let mut breaks: Vec<f64> = extra_breaks.to_vec();
    let mut axis: Option<(f64, Vec<f64>)> = None;
    for f in &opts.focus {
        let v = model.log_coords(x, f);
        let d = model.inner(x, &v, &v).sqrt();
        breaks.push(d);
        if let ManifoldModel::Circle | ManifoldModel::Torus { .. } = model {
            let side = match model {
                ManifoldModel::Torus { side, .. } => *side,
                _ => 2.0 * PI,
            };
            let mut k = 1.0;
            while k * side - d < radius {
                breaks.push(k * side - d);
                breaks.push(k * side + d);
                k += 1.0;
            }
        }
        if d > 0.0 && axis.as_ref().is_none_or(|(best, _)| d < *best) {
            axis = Some((d, v));
        }
    }
    breaks.push(0.0);
    breaks.push(radius);
    breaks.retain(|b| (0.0..=radius).contains(b));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * radius.max(1e-300));

    let frame = match &axis {
        Some((_, v)) => model.oriented_frame(x, v),
        None => model.tangent_frame(x),
    };
    let dirs = directions(m, &de, opts.azimuths);
    let tangent: Vec<Vec<f64>> = dirs
        .iter()
        .map(|(c, _)| {
            let mut v = vec![0.0; model.tangent_len()];
            for (ck, e) in c.iter().zip(&frame) {
                v.iter_mut().zip(e).for_each(|(a, b)| *a += ck * b);
            }
            v
        })
        .collect();

    let stride = model.coord_len();
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    let mut v = vec![0.0; model.tangent_len()];
    let mut y = vec![0.0; stride];
    for piece in breaks.windows(2) {
        for (r, _, _, wr) in de.on_with_gaps(piece[0], piece[1]) {
            let rho = radial(r);
            if !(rho > 0.0) || !rho.is_finite() {
                continue;
            }
            for (dir, (_, wa)) in tangent.iter().zip(&dirs) {
                v.iter_mut().zip(dir).for_each(|(a, b)| *a = r * b);
                model.exp_into(x, &v, &mut y);
                coords.extend_from_slice(&y);
                weights.push(wr * wa * rho);
            }
        }
    }
    Ok(KernelRule::Nodes {
        stride,
        coords,
        weights,
        tail,
    })
}

/// Angular rule in frame coefficients; weights sum to `|S^{m-1}|`.
fn directions(m: usize, de: &TanhSinh, azimuths: usize) -> Vec<(Vec<f64>, f64)> {
    match m {
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => {
            let mut out = Vec::new();
            for (_, lo, hi, w) in de.on_with_gaps(0.0, PI) {
                let (c, s) = if lo < hi { (lo.cos(), lo.sin()) } else { (-hi.cos(), hi.sin()) };
                out.push((vec![c, s], w));
                out.push((vec![c, -s], w));
            }
            out
        }
        _ => {
            let mut out = Vec::new();
            for (u, lo, hi, w) in de.on_with_gaps(-1.0, 1.0) {
                let s = (lo * hi).sqrt();
                for j in 0..azimuths {
                    let phi = 2.0 * PI * (j as f64 + 0.5) / azimuths as f64;
                    out.push((vec![u, s * phi.cos(), s * phi.sin()], w * 2.0 * PI / azimuths as f64));
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn mass(model: &ManifoldModel, t: f64, x: &[f64]) -> f64 {
        let e = HeatKernelEngine::new(model);
        e.kernel_rule(t, x, &RuleOptions::default()).unwrap().mass()
    }

    #[test]
    fn kernel_rules_carry_unit_mass() {
        let cases: Vec<(ManifoldModel, Vec<f64>)> = vec![
            (ManifoldModel::euclidean(1), vec![0.3]),
            (ManifoldModel::euclidean(2), vec![0.3, 1.0]),
            (ManifoldModel::euclidean(3), vec![0.0; 3]),
            (ManifoldModel::Circle, Point::on_circle(1.0).coords),
            (ManifoldModel::torus(2, 1.0), vec![0.2, 0.9]),
            (ManifoldModel::Sphere2, Point::north_pole().coords),
            (ManifoldModel::Hyperbolic3, vec![0.0, 0.0, 1.0]),
        ];
        for (model, x) in cases {
            for t in [1e-4, 0.1, 1.0, 5.0] {
                let m = mass(&model, t, &x);
                assert!((m - 1.0).abs() < 1e-10, "{model} t={t}: {m}");
            }
        }
    }

    #[test]
    fn product_rule_factorizes() {
        let p = ManifoldModel::product(ManifoldModel::euclidean(1), ManifoldModel::euclidean(2));
        let p = HeatKernelEngine::new(&p);
        let rule = p.kernel_rule(0.3, &[0.0; 3], &RuleOptions::default()).unwrap();
        assert!((rule.mass() - 1.0).abs() < 1e-9, "{}", rule.mass());
        // second moment of the first coordinate is t
        let v = rule.integrate(|y| y[0] * y[0]);
        assert!((v - 0.3).abs() < 1e-9, "{v}");
    }

    #[test]
    fn focused_rule_resolves_inverse_distance() {
        // E|x + B_t|^{-1} at x = 0 equals sqrt(2/(pi t))
        let e = HeatKernelEngine::new(&ManifoldModel::euclidean(3));
        let t = 0.01;
        let rule = e
            .kernel_rule(t, &[0.0; 3], &RuleOptions::with_focus(vec![vec![0.0; 3]]))
            .unwrap();
        let v = rule.integrate(|y| 1.0 / (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt());
        let exact = (2.0 / (PI * t)).sqrt();
        assert!((v / exact - 1.0).abs() < 1e-9, "{v} {exact}");
    }

    #[test]
    fn off_centre_singularity() {
        // E|x + B_t - c|^{-1} = erf(d / sqrt(2t)) / d with d = |x - c|
        let e = HeatKernelEngine::new(&ManifoldModel::euclidean(3));
        let t = 0.05;
        let c = vec![0.2, 0.1, -0.1];
        let rule = e.kernel_rule(t, &[0.0; 3], &RuleOptions::with_focus(vec![c.clone()])).unwrap();
        let v = rule.integrate(|y| {
            let d2: f64 = y.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            1.0 / d2.sqrt()
        });
        let d = (0.06f64).sqrt();
        let exact = statrs::function::erf::erf(d / (2.0 * t).sqrt()) / d;
        assert!((v / exact - 1.0).abs() < 1e-6, "{v} {exact}");
    }
}
