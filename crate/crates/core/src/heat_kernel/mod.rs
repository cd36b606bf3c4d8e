//! Minimal heat kernel `p(t, x, y)` of `(1/2) Δ` on the model manifolds.
//!
//! Euclidean space and hyperbolic 3-space use closed forms, the sphere a
//! Legendre series, the circle and tori lattice image sums (or their Fourier
//! duals), and products the pointwise product of the factor kernels. Every
//! truncated method carries an analytic bound on the discarded tail.

mod checks;
mod rule;

pub use checks::{check_consistency, on_diag_upper, sup_bound, KernelCheckReport, OnDiagonalBound, SupBound};
pub use rule::{polar_rule, KernelRule, RuleOptions};
pub(crate) use rule::radial_jacobian;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{torus_offset, ManifoldModel, Point};

/// Hard cap on the sphere series degree.
pub const SPHERE_DEGREE_CAP: usize = 20_000;
/// Default absolute tolerance for series and image-sum tails.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;

/// User-facing method selection (`kernel.method` in manifests).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelMethod {
    Auto,
    /// Spectral series truncated at a fixed index.
    Series(usize),
    /// Lattice image sum with a fixed radius.
    ImageSum(usize),
}

impl FromStr for KernelMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t == "auto" {
            return Ok(KernelMethod::Auto);
        }
        let (kind, arg) = t.split_once(':').ok_or_else(|| Error::spec(s, "expected auto, series:N or imagesum:K"))?;
        let n: usize = arg.parse().map_err(|_| Error::spec(s, "bad truncation index"))?;
        match kind {
            "series" => Ok(KernelMethod::Series(n)),
            "imagesum" => Ok(KernelMethod::ImageSum(n)),
            _ => Err(Error::spec(s, "unknown kernel method")),
        }
    }
}

impl fmt::Display for KernelMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelMethod::Auto => write!(f, "auto"),
            KernelMethod::Series(n) => write!(f, "series:{n}"),
            KernelMethod::ImageSum(k) => write!(f, "imagesum:{k}"),
        }
    }
}

/// Resolved evaluation method of an engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Method {
    ClosedForm,
    /// Sphere: Legendre degree; circle/torus: Fourier modes. `None` picks
    /// the truncation from the tail bound.
    SpectralSeries { max_index: Option<usize> },
    ImageSum { radius: Option<usize> },
    ProductRule(Box<HeatKernelEngine>, Box<HeatKernelEngine>),
}

/// Heat kernel evaluator for one model. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelEngine {
    pub model: ManifoldModel,
    pub method: Method,
    pub tail_tolerance: f64,
}

impl HeatKernelEngine {
    /// Engine with the automatic method for the model.
    pub fn new(model: &ManifoldModel) -> Self {
        Self::with_method(model, KernelMethod::Auto).expect("auto is valid for every model")
    }

    pub fn with_method(model: &ManifoldModel, choice: KernelMethod) -> Result<Self> {
        let method = match (model, choice) {
            (ManifoldModel::Product(l, r), KernelMethod::Auto) => {
                Method::ProductRule(Box::new(Self::new(l)), Box::new(Self::new(r)))
            }
            (ManifoldModel::Product(l, r), c) => Method::ProductRule(
                Box::new(Self::with_method(l, c)?),
                Box::new(Self::with_method(r, c)?),
            ),
            (ManifoldModel::Euclidean { .. } | ManifoldModel::Hyperbolic3, KernelMethod::Auto) => Method::ClosedForm,
            (ManifoldModel::Euclidean { .. } | ManifoldModel::Hyperbolic3, c) => {
                return Err(Error::UnsupportedModel(format!("{model} only has a closed form, not {c}")))
            }
            (ManifoldModel::Sphere2, KernelMethod::Auto) => Method::SpectralSeries { max_index: None },
            (ManifoldModel::Sphere2, KernelMethod::Series(n)) => Method::SpectralSeries { max_index: Some(n) },
            (ManifoldModel::Sphere2, KernelMethod::ImageSum(_)) => {
                return Err(Error::UnsupportedModel("the sphere has no image-sum kernel".into()))
            }
            (_, KernelMethod::Auto) => Method::ImageSum { radius: None },
            (_, KernelMethod::Series(n)) => Method::SpectralSeries { max_index: Some(n) },
            (_, KernelMethod::ImageSum(k)) => Method::ImageSum { radius: Some(k) },
        };
        Ok(Self {
            model: model.clone(),
            method,
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
        })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// `p(t, x, y)`.
    pub fn eval(&self, t: f64, x: &Point, y: &Point) -> Result<f64> {
        Ok(self.eval_with_bound(t, x, y)?.0)
    }

    /// `p(t, x, y)` together with the analytic truncation bound.
    pub fn eval_with_bound(&self, t: f64, x: &Point, y: &Point) -> Result<(f64, f64)> {
        check_time(t)?;
        self.model.check_point(x)?;
        self.model.check_point(y)?;
        self.value(t, &x.coords, &y.coords)
    }

    /// Unchecked evaluation on raw chart coordinates.
    pub fn value(&self, t: f64, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
        match (&self.model, &self.method) {
            (ManifoldModel::Euclidean { dim }, _) => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                Ok((gaussian(*dim, t, d2), 0.0))
            }
            (ManifoldModel::Hyperbolic3, _) => Ok((hyperbolic_radial(t, self.model.dist(x, y)), 0.0)),
            (ManifoldModel::Sphere2, Method::SpectralSeries { max_index }) => {
                let d = self.model.dist(x, y);
                self.sphere_series(t, d.cos(), *max_index)
            }
            (ManifoldModel::Circle, _) => self.periodic(t, &[self.model.dist(x, y)], 2.0 * PI),
            (ManifoldModel::Torus { side, .. }, _) => {
                let offsets: Vec<f64> = x
                    .iter()
                    .zip(y)
                    .map(|(a, b)| torus_offset((a - b).abs(), *side).abs())
                    .collect();
                self.periodic(t, &offsets, *side)
            }
            (ManifoldModel::Product(..), Method::ProductRule(l, r)) => {
                let n = l.model.coord_len();
                let (vl, bl) = l.value(t, &x[..n], &y[..n])?;
                let (vr, br) = r.value(t, &x[n..], &y[n..])?;
                Ok((vl * vr, bl * vr + br * vl + bl * br))
            }
            _ => Err(Error::UnsupportedModel(format!(
                "method {:?} on {}",
                self.method, self.model
            ))),
        }
    }

    /// Kernel as a function of the geodesic distance, for models whose kernel
    /// is radial. For the circle and tori this is the kernel of the universal
    /// cover (Euclidean), which is what polar quadrature on the cover needs.
    pub fn radial_profile(&self, t: f64, r: f64) -> Result<f64> {
        match &self.model {
            ManifoldModel::Euclidean { dim } | ManifoldModel::Torus { dim, .. } => Ok(gaussian(*dim, t, r * r)),
            ManifoldModel::Circle => Ok(gaussian(1, t, r * r)),
            ManifoldModel::Hyperbolic3 => Ok(hyperbolic_radial(t, r)),
            ManifoldModel::Sphere2 => {
                let cap = match &self.method {
                    Method::SpectralSeries { max_index } => *max_index,
                    _ => None,
                };
                Ok(self.sphere_series(t, r.cos(), cap)?.0)
            }
            ManifoldModel::Product(..) => Err(Error::UnsupportedModel("product kernels are not radial".into())),
        }
    }

    /// Legendre degree needed for the sphere series tail to drop below the
    /// engine tolerance, and the resulting bound.
    pub fn sphere_degree(&self, t: f64) -> (usize, f64) {
        // tail <= exp(-L(L+1)t/2) / (2 pi t), valid once L >= 1/sqrt(t)
        let target = self.tail_tolerance;
        let need = (2.0 / t) * (1.0 / (2.0 * PI * t * target)).ln().max(0.0);
        let mut l = ((-1.0 + (1.0 + 4.0 * need).sqrt()) / 2.0).ceil() as usize;
        l = l.max((1.0 / t.sqrt()).ceil() as usize).max(2);
        if l > SPHERE_DEGREE_CAP {
            l = SPHERE_DEGREE_CAP;
        }
        (l, sphere_tail_bound(t, l))
    }

    fn sphere_series(&self, t: f64, z: f64, cap: Option<usize>) -> Result<(f64, f64)> {
        let (degree, bound) = match cap {
            Some(l) => (l, sphere_tail_bound(t, l)),
            None => self.sphere_degree(t),
        };
        if bound > self.tail_tolerance && cap.is_none() {
            return Err(Error::Truncation {
                bound,
                tolerance: self.tail_tolerance,
            });
        }
        let z = z.clamp(-1.0, 1.0);
        let mut p_prev = 1.0;
        let mut p = z;
        let mut sum = 1.0;
        let mut magnitude = 1.0;
        if degree >= 1 {
            sum += 3.0 * (-t).exp() * z;
            magnitude += 3.0 * (-t).exp();
        }
        for l in 2..=degree {
            let lf = l as f64;
            let next = ((2.0 * lf - 1.0) * z * p - (lf - 1.0) * p_prev) / lf;
            p_prev = p;
            p = next;
            let decay = (-0.5 * lf * (lf + 1.0) * t).exp();
            if decay == 0.0 {
                break;
            }
            sum += (2.0 * lf + 1.0) * decay * p;
            magnitude += (2.0 * lf + 1.0) * decay;
        }
        // cancellation can leave rounding noise of either sign where the
        // kernel is tiny; the true value is positive
        let rounding = (degree + 1) as f64 * f64::EPSILON * magnitude / (4.0 * PI);
        Ok((sum.max(0.0) / (4.0 * PI), bound + rounding))
    }

    fn periodic(&self, t: f64, offsets: &[f64], side: f64) -> Result<(f64, f64)> {
        let mut value = 1.0;
        let mut rel_bound = 0.0;
        for &d in offsets {
            let (g, b) = match &self.method {
                Method::SpectralSeries { max_index } => fourier_1d(t, d, side, *max_index, self.tail_tolerance),
                Method::ImageSum { radius } => image_sum_1d(t, d, side, *radius, self.tail_tolerance),
                _ => unreachable!("periodic models use series or image sums"),
            };
            value *= g;
            rel_bound += b / g.max(f64::MIN_POSITIVE);
        }
        Ok((value, value * rel_bound))
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("heat kernel time must be positive, got {t}")))
    }
}

/// `(2 pi t)^(-m/2) exp(-d^2 / (2t))`.
pub fn gaussian(m: usize, t: f64, d2: f64) -> f64 {
    (2.0 * PI * t).powf(-0.5 * m as f64) * (-d2 / (2.0 * t)).exp()
}

/// Hyperbolic 3-space kernel at distance `d`.
pub fn hyperbolic_radial(t: f64, d: f64) -> f64 {
    let ratio = if d < 1e-6 { 1.0 - d * d / 6.0 } else { d / d.sinh() };
    (2.0 * PI * t).powf(-1.5) * ratio * (-d * d / (2.0 * t) - 0.5 * t).exp()
}

/// Bound on `sum_{l > L} (2l+1) exp(-l(l+1)t/2) / (4 pi)`.
pub fn sphere_tail_bound(t: f64, degree: usize) -> f64 {
    let l = degree as f64;
    if l < 1.0 / t.sqrt() {
        // the integral comparison needs a decreasing summand; fall back to
        // the crude bound from the maximum term times the remaining count
        let lstar = (1.0 / t.sqrt()).ceil();
        let head: f64 = (degree + 1..=lstar as usize)
            .map(|k| {
                let kf = k as f64;
                (2.0 * kf + 1.0) * (-0.5 * kf * (kf + 1.0) * t).exp()
            })
            .sum();
        return head / (4.0 * PI) + (-0.5 * lstar * (lstar + 1.0) * t).exp() / (2.0 * PI * t);
    }
    (-0.5 * l * (l + 1.0) * t).exp() / (2.0 * PI * t)
}

fn image_sum_1d(t: f64, d: f64, side: f64, radius: Option<usize>, tol: f64) -> (f64, f64) {
    let norm = (2.0 * PI * t).powf(-0.5);
    let tail = |k: usize| {
        // sum_{|j| > k} phi(d + jL) with |d + jL| >= (|j| - 1/2) L
        let a = (k as f64 + 0.5) * side;
        let q = (-a * side / t).exp();
        2.0 * norm * (-a * a / (2.0 * t)).exp() / (1.0 - q).max(1e-300)
    };
    let k = match radius {
        Some(k) => k,
        None => {
            let mut k = 0;
            while tail(k) > tol && k < 10_000 {
                k += 1;
            }
            k
        }
    };
    let mut sum = norm * (-d * d / (2.0 * t)).exp();
    for j in 1..=k {
        let jl = j as f64 * side;
        sum += norm * ((-(d + jl).powi(2) / (2.0 * t)).exp() + (-(d - jl).powi(2) / (2.0 * t)).exp());
    }
    (sum, tail(k))
}

fn fourier_1d(t: f64, d: f64, side: f64, modes: Option<usize>, tol: f64) -> (f64, f64) {
    let c = 2.0 * PI * PI * t / (side * side);
    let tail = |n: usize| {
        let nf = n as f64 + 1.0;
        (2.0 / side) * (-c * nf * nf).exp() / (1.0 - (-c * (2.0 * nf + 1.0)).exp()).max(1e-300)
    };
    let n = match modes {
        Some(n) => n,
        None => {
            let mut n = 0;
            while tail(n) > tol && n < 1_000_000 {
                n += 1;
            }
            n
        }
    };
    let mut sum = 1.0;
    for k in 1..=n {
        let kf = k as f64;
        sum += 2.0 * (-c * kf * kf).exp() * (2.0 * PI * kf * d / side).cos();
    }
    (sum / side, tail(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_on_diagonal_value() {
        let e = HeatKernelEngine::new(&ManifoldModel::euclidean(3));
        let x = Point::new(vec![0.3, -1.0, 2.0]);
        let v = e.eval(1.0, &x, &x).unwrap();
        assert!((v - (2.0 * PI).powf(-1.5)).abs() < 1e-17);
        assert!((v - 0.063494).abs() < 1e-6);
    }

    #[test]
    fn product_of_lines_is_the_plane() {
        let line = ManifoldModel::euclidean(1);
        let p = HeatKernelEngine::new(&ManifoldModel::product(line.clone(), line));
        let e2 = HeatKernelEngine::new(&ManifoldModel::euclidean(2));
        let x = Point::new(vec![0.1, 0.4]);
        let y = Point::new(vec![-0.7, 1.3]);
        for t in [0.01, 0.5, 3.0] {
            let a = p.eval(t, &x, &y).unwrap();
            let b = e2.eval(t, &x, &y).unwrap();
            assert!((a - b).abs() <= 1e-13 * b, "{a} {b}");
        }
    }

    #[test]
    fn sphere_long_time_limit() {
        let s = HeatKernelEngine::new(&ManifoldModel::Sphere2);
        let v = s.eval(50.0, &Point::north_pole(), &Point::on_sphere(2.0, 1.0)).unwrap();
        assert!((v - 1.0 / (4.0 * PI)).abs() < 1e-10);
    }

    #[test]
    fn non_positive_time_is_a_domain_error() {
        let e = HeatKernelEngine::new(&ManifoldModel::euclidean(1));
        let x = Point::origin(1);
        assert!(matches!(e.eval(0.0, &x, &x), Err(Error::Domain(_))));
        assert!(matches!(e.eval(-1.0, &x, &x), Err(Error::Domain(_))));
    }

    #[test]
    fn fixed_sphere_truncation_reports_its_bound() {
        let s = HeatKernelEngine::with_method(&ManifoldModel::Sphere2, KernelMethod::Series(5)).unwrap();
        let (_, bound) = s.eval_with_bound(0.01, &Point::north_pole(), &Point::north_pole()).unwrap();
        assert!(bound > 1.0);
    }

    #[test]
    fn sphere_degree_cap_raises_truncation_error() {
        let s = HeatKernelEngine::new(&ManifoldModel::Sphere2);
        let r = s.eval(1e-9, &Point::north_pole(), &Point::north_pole());
        assert!(matches!(r, Err(Error::Truncation { .. })));
    }

    #[test]
    fn image_sum_and_fourier_agree_on_the_circle() {
        let c = ManifoldModel::Circle;
        let img = HeatKernelEngine::new(&c);
        let four = HeatKernelEngine::with_method(&c, KernelMethod::Series(200)).unwrap();
        for t in [0.05, 0.7, 4.0] {
            for th in [0.0, 1.0, 3.0] {
                let x = Point::on_circle(0.2);
                let y = Point::on_circle(0.2 + th);
                let a = img.eval(t, &x, &y).unwrap();
                let b = four.eval(t, &x, &y).unwrap();
                assert!((a - b).abs() < 1e-12, "t={t} th={th}: {a} {b}");
            }
        }
    }

    #[test]
    fn hyperbolic_diagonal_limit() {
        let h = HeatKernelEngine::new(&ManifoldModel::Hyperbolic3);
        let x = Point::new(vec![0.0, 0.0, 1.0]);
        let y = Point::new(vec![0.0, 0.0, (1e-8f64).exp()]);
        let t = 0.7;
        let expect = (2.0 * PI * t).powf(-1.5) * (-t / 2.0).exp();
        assert!((h.eval(t, &x, &y).unwrap() - expect).abs() < 1e-12);
        assert!((h.eval(t, &x, &x).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn method_strings() {
        assert_eq!("auto".parse::<KernelMethod>().unwrap(), KernelMethod::Auto);
        assert_eq!("series:40".parse::<KernelMethod>().unwrap(), KernelMethod::Series(40));
        assert_eq!("imagesum:3".parse::<KernelMethod>().unwrap(), KernelMethod::ImageSum(3));
        assert!("series".parse::<KernelMethod>().is_err());
        assert!(HeatKernelEngine::with_method(&ManifoldModel::euclidean(2), KernelMethod::Series(3)).is_err());
    }
}
