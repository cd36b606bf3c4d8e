//! Model manifolds: points, geodesic distance, ball volumes, exponential
//! and logarithm maps, and quadrature grids for the volume measure.

mod grid;

pub use grid::{build_grid, QuadratureGrid, Window};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive;

const UNIT_TOL: f64 = 1e-9;

/// A point in the model's canonical chart.
///
/// Euclidean and torus points carry Cartesian coordinates, the circle and
/// the sphere use their unit-vector embedding, hyperbolic space uses the
/// upper half-space `(u1, u2, h)` with `h > 0`, and product points are the
/// concatenation of the factor coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    /// Point on the unit circle at angle `theta`.
    pub fn on_circle(theta: f64) -> Self {
        Self::new(vec![theta.cos(), theta.sin()])
    }

    /// Point on the unit sphere from polar angle and azimuth.
    pub fn on_sphere(polar: f64, azimuth: f64) -> Self {
        let s = polar.sin();
        Self::new(vec![s * azimuth.cos(), s * azimuth.sin(), polar.cos()])
    }

    pub fn north_pole() -> Self {
        Self::new(vec![0.0, 0.0, 1.0])
    }

    pub fn origin(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    /// Concatenation of two factor points.
    pub fn pair(left: &Point, right: &Point) -> Self {
        let mut coords = left.coords.clone();
        coords.extend_from_slice(&right.coords);
        Self::new(coords)
    }

    /// Angle of a circle point in `(-pi, pi]`.
    pub fn angle(&self) -> f64 {
        self.coords[1].atan2(self.coords[0])
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords.iter().map(|c| format!("{c}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// The built-in model geometries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ManifoldModel {
    Euclidean { dim: usize },
    /// The cube `[0, side)^dim` with opposite faces identified.
    Torus { dim: usize, side: f64 },
    /// Unit circle.
    Circle,
    /// Unit round 2-sphere.
    Sphere2,
    /// Hyperbolic 3-space of curvature -1, upper half-space chart.
    Hyperbolic3,
    Product(Box<ManifoldModel>, Box<ManifoldModel>),
}

impl ManifoldModel {
    pub fn euclidean(dim: usize) -> Self {
        ManifoldModel::Euclidean { dim }
    }

    pub fn torus(dim: usize, side: f64) -> Self {
        ManifoldModel::Torus { dim, side }
    }

    pub fn product(left: ManifoldModel, right: ManifoldModel) -> Self {
        ManifoldModel::Product(Box::new(left), Box::new(right))
    }

    /// `count`-fold right-nested product `base x (base x (...))`.
    pub fn power(base: &ManifoldModel, count: usize) -> Self {
        assert!(count >= 1);
        let mut model = base.clone();
        for _ in 1..count {
            model = ManifoldModel::product(base.clone(), model);
        }
        model
    }

    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match self {
            ManifoldModel::Euclidean { dim } | ManifoldModel::Torus { dim, .. } => *dim,
            ManifoldModel::Circle => 1,
            ManifoldModel::Sphere2 => 2,
            ManifoldModel::Hyperbolic3 => 3,
            ManifoldModel::Product(l, r) => l.dim() + r.dim(),
        }
    }

    /// Number of chart coordinates of a point.
    pub fn coord_len(&self) -> usize {
        match self {
            ManifoldModel::Euclidean { dim } | ManifoldModel::Torus { dim, .. } => *dim,
            ManifoldModel::Circle => 2,
            ManifoldModel::Sphere2 | ManifoldModel::Hyperbolic3 => 3,
            ManifoldModel::Product(l, r) => l.coord_len() + r.coord_len(),
        }
    }

    /// Number of coordinates of a tangent vector in the chart.
    pub fn tangent_len(&self) -> usize {
        match self {
            ManifoldModel::Euclidean { dim } | ManifoldModel::Torus { dim, .. } => *dim,
            ManifoldModel::Circle => 1,
            ManifoldModel::Sphere2 | ManifoldModel::Hyperbolic3 => 3,
            ManifoldModel::Product(l, r) => l.tangent_len() + r.tangent_len(),
        }
    }

    /// Lower bound `k'` with `Ric >= k'`.
    pub fn ricci_lower_bound(&self) -> f64 {
        match self {
            ManifoldModel::Hyperbolic3 => -2.0,
            ManifoldModel::Product(l, r) => l.ricci_lower_bound().min(r.ricci_lower_bound()),
            _ => 0.0,
        }
    }

    pub fn geodesically_complete(&self) -> bool {
        true
    }

    pub fn stochastically_complete(&self) -> bool {
        true
    }

    pub fn is_compact(&self) -> bool {
        match self {
            ManifoldModel::Euclidean { .. } | ManifoldModel::Hyperbolic3 => false,
            ManifoldModel::Torus { .. } | ManifoldModel::Circle | ManifoldModel::Sphere2 => true,
            ManifoldModel::Product(l, r) => l.is_compact() && r.is_compact(),
        }
    }

    /// Total volume of a compact model.
    pub fn total_volume(&self) -> Option<f64> {
        match self {
            ManifoldModel::Torus { dim, side } => Some(side.powi(*dim as i32)),
            ManifoldModel::Circle => Some(2.0 * PI),
            ManifoldModel::Sphere2 => Some(4.0 * PI),
            ManifoldModel::Product(l, r) => Some(l.total_volume()? * r.total_volume()?),
            _ => None,
        }
    }

    /// True for flat models, where the heat kernel is Gaussian on a cover.
    pub fn is_flat(&self) -> bool {
        match self {
            ManifoldModel::Euclidean { .. } | ManifoldModel::Torus { .. } | ManifoldModel::Circle => true,
            ManifoldModel::Product(l, r) => l.is_flat() && r.is_flat(),
            _ => false,
        }
    }

    /// Factor models of a product, `None` otherwise.
    pub fn factors(&self) -> Option<(&ManifoldModel, &ManifoldModel)> {
        match self {
            ManifoldModel::Product(l, r) => Some((l, r)),
            _ => None,
        }
    }

    /// Splits product coordinates into factor coordinates.
    pub fn split<'a>(&self, coords: &'a [f64]) -> Option<(&'a [f64], &'a [f64])> {
        let (l, _) = self.factors()?;
        Some(coords.split_at(l.coord_len()))
    }

    /// Coordinate ranges of the factors of a `count`-fold right-nested
    /// product, together with the base model.
    pub fn power_factors(&self, count: usize) -> Result<(ManifoldModel, Vec<std::ops::Range<usize>>)> {
        let mut ranges = Vec::with_capacity(count);
        let mut offset = 0;
        let mut current = self;
        let mut base: Option<&ManifoldModel> = None;
        for i in 0..count {
            let factor = if i + 1 == count {
                current
            } else {
                match current {
                    ManifoldModel::Product(l, r) => {
                        current = r;
                        l.as_ref()
                    }
                    _ => {
                        return Err(Error::UnsupportedModel(format!(
                            "{self} is not a {count}-fold product"
                        )))
                    }
                }
            };
            check_base(&mut base, factor)?;
            let len = factor.coord_len();
            ranges.push(offset..offset + len);
            offset += len;
        }
        Ok((base.expect("count >= 1").clone(), ranges))
    }

    /// Checks the chart constraint of a point.
    pub fn check_point(&self, x: &Point) -> Result<()> {
        self.check_coords(&x.coords)
    }

    pub fn check_coords(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.coord_len() {
            return Err(Error::DimensionMismatch {
                expected: self.coord_len(),
                found: x.len(),
            });
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint(format!("non-finite coordinates {x:?}")));
        }
        match self {
            ManifoldModel::Circle | ManifoldModel::Sphere2 => {
                let n = norm(x);
                if (n - 1.0).abs() > UNIT_TOL {
                    return Err(Error::InvalidPoint(format!("{x:?} is not a unit vector (norm {n})")));
                }
            }
            ManifoldModel::Hyperbolic3 => {
                if x[2] <= 0.0 {
                    return Err(Error::InvalidPoint(format!("{x:?} has non-positive height")));
                }
            }
            ManifoldModel::Product(l, r) => {
                let (a, b) = x.split_at(l.coord_len());
                l.check_coords(a)?;
                r.check_coords(b)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Geodesic distance.
    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.dist(&x.coords, &y.coords))
    }

    /// Geodesic distance without validation.
    pub fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            ManifoldModel::Euclidean { .. } => {
                x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            }
            ManifoldModel::Torus { side, .. } => x
                .iter()
                .zip(y)
                .map(|(a, b)| {
                    let d = torus_offset(a - b, *side).abs();
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            ManifoldModel::Circle => {
                let cross = x[0] * y[1] - x[1] * y[0];
                let dot = x[0] * y[0] + x[1] * y[1];
                cross.atan2(dot).abs()
            }
            ManifoldModel::Sphere2 => {
                let c = cross3(x, y);
                norm(&c).atan2(dot(x, y))
            }
            ManifoldModel::Hyperbolic3 => {
                let e = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                2.0 * (e / (2.0 * (x[2] * y[2]).sqrt())).asinh()
            }
            ManifoldModel::Product(l, r) => {
                let n = l.coord_len();
                let dl = l.dist(&x[..n], &y[..n]);
                let dr = r.dist(&x[n..], &y[n..]);
                (dl * dl + dr * dr).sqrt()
            }
        }
    }

    /// Volume of the geodesic ball `B(x, r)`.
    pub fn ball_volume(&self, x: &Point, r: f64) -> Result<f64> {
        self.check_point(x)?;
        if !(r > 0.0) {
            return Err(Error::Domain(format!("ball radius must be positive, got {r}")));
        }
        Ok(self.ball_volume_at_radius(r))
    }

    /// Ball volume as a function of the radius; all built-ins are homogeneous.
    pub fn ball_volume_at_radius(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            ManifoldModel::Euclidean { dim } => unit_ball_volume(*dim) * r.powi(*dim as i32),
            ManifoldModel::Torus { dim, side } => clipped_ball_volume(*dim, r, 0.5 * side),
            ManifoldModel::Circle => (2.0 * r).min(2.0 * PI),
            ManifoldModel::Sphere2 => 2.0 * PI * (1.0 - r.min(PI).cos()),
            ManifoldModel::Hyperbolic3 => PI * ((2.0 * r).sinh() - 2.0 * r),
            ManifoldModel::Product(l, rr) => {
                // Stieltjes sum of V_r(sqrt(r^2 - rho^2)) dV_l(rho)
                let n = 4000;
                let mut total = 0.0;
                let mut prev = 0.0;
                for k in 1..=n {
                    let rho = r * k as f64 / n as f64;
                    let vol = l.ball_volume_at_radius(rho);
                    let mid = r * (k as f64 - 0.5) / n as f64;
                    total += (vol - prev) * rr.ball_volume_at_radius((r * r - mid * mid).max(0.0).sqrt());
                    prev = vol;
                }
                total
            }
        }
    }

    /// Surface density of geodesic spheres in polar coordinates
    /// (`d/dr` of the ball volume for radii below the injectivity radius).
    pub fn sphere_area_at_radius(&self, r: f64) -> Option<f64> {
        match self {
            ManifoldModel::Euclidean { dim } | ManifoldModel::Torus { dim, .. } => {
                Some(*dim as f64 * unit_ball_volume(*dim) * r.powi(*dim as i32 - 1))
            }
            ManifoldModel::Circle => Some(2.0),
            ManifoldModel::Sphere2 => Some(2.0 * PI * r.sin()),
            ManifoldModel::Hyperbolic3 => Some(4.0 * PI * r.sinh().powi(2)),
            ManifoldModel::Product(..) => None,
        }
    }

    /// Radius up to which geodesic polar coordinates around any point are
    /// injective.
    pub fn injectivity_radius(&self) -> f64 {
        match self {
            ManifoldModel::Euclidean { .. } | ManifoldModel::Hyperbolic3 => f64::INFINITY,
            ManifoldModel::Torus { side, .. } => 0.5 * side,
            ManifoldModel::Circle | ManifoldModel::Sphere2 => PI,
            ManifoldModel::Product(l, r) => l.injectivity_radius().min(r.injectivity_radius()),
        }
    }

    /// Point at unit time along the geodesic from `x` with velocity `v`.
    pub fn exp_map(&self, x: &Point, v: &[f64]) -> Result<Point> {
        self.check_point(x)?;
        if v.len() != self.tangent_len() {
            return Err(Error::DimensionMismatch {
                expected: self.tangent_len(),
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.coord_len()];
        self.exp_into(&x.coords, v, &mut out);
        Ok(Point::new(out))
    }

    /// Unchecked exponential map writing into `out`.
    pub fn exp_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            ManifoldModel::Euclidean { .. } => {
                for i in 0..x.len() {
                    out[i] = x[i] + v[i];
                }
            }
            ManifoldModel::Torus { side, .. } => {
                for i in 0..x.len() {
                    out[i] = (x[i] + v[i]).rem_euclid(*side);
                }
            }
            ManifoldModel::Circle => {
                let (s, c) = v[0].sin_cos();
                let a = c * x[0] - s * x[1];
                let b = s * x[0] + c * x[1];
                let n = a.hypot(b);
                out[0] = a / n;
                out[1] = b / n;
            }
            ManifoldModel::Sphere2 => {
                let vx = dot(v, x);
                let t = [v[0] - vx * x[0], v[1] - vx * x[1], v[2] - vx * x[2]];
                let len = norm(&t);
                if len == 0.0 {
                    out.copy_from_slice(x);
                    return;
                }
                let (s, c) = len.sin_cos();
                let mut y = [0.0; 3];
                for i in 0..3 {
                    y[i] = c * x[i] + s * t[i] / len;
                }
                let n = norm(&y);
                for i in 0..3 {
                    out[i] = y[i] / n;
                }
            }
            ManifoldModel::Hyperbolic3 => hyperbolic_exp(x, v, out),
            ManifoldModel::Product(l, r) => {
                let (nc, nt) = (l.coord_len(), l.tangent_len());
                let (ol, or) = out.split_at_mut(nc);
                l.exp_into(&x[..nc], &v[..nt], ol);
                r.exp_into(&x[nc..], &v[nt..], or);
            }
        }
    }

    /// Initial velocity of a minimizing geodesic from `x` to `y`.
    pub fn log_map(&self, x: &Point, y: &Point) -> Result<Vec<f64>> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.log_coords(&x.coords, &y.coords))
    }

    pub fn log_coords(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        match self {
            ManifoldModel::Euclidean { .. } => y.iter().zip(x).map(|(b, a)| b - a).collect(),
            ManifoldModel::Torus { side, .. } => {
                y.iter().zip(x).map(|(b, a)| torus_offset(b - a, *side)).collect()
            }
            ManifoldModel::Circle => {
                let cross = x[0] * y[1] - x[1] * y[0];
                let dot = x[0] * y[0] + x[1] * y[1];
                vec![cross.atan2(dot)]
            }
            ManifoldModel::Sphere2 => {
                let d = self.dist(x, y);
                let c = dot(x, y);
                let t = [y[0] - c * x[0], y[1] - c * x[1], y[2] - c * x[2]];
                let n = norm(&t);
                if n == 0.0 {
                    if d == 0.0 {
                        return vec![0.0; 3];
                    }
                    // antipodal: any direction
                    let e = self.tangent_frame(x);
                    return e[0].iter().map(|v| v * d).collect();
                }
                t.iter().map(|v| v * d / n).collect()
            }
            ManifoldModel::Hyperbolic3 => hyperbolic_log(x, y),
            ManifoldModel::Product(l, r) => {
                let n = l.coord_len();
                let mut v = l.log_coords(&x[..n], &y[..n]);
                v.extend(r.log_coords(&x[n..], &y[n..]));
                v
            }
        }
    }

    /// Riemannian inner product of chart tangent vectors at `x`.
    pub fn inner(&self, x: &[f64], v: &[f64], w: &[f64]) -> f64 {
        match self {
            ManifoldModel::Hyperbolic3 => dot(v, w) / (x[2] * x[2]),
            ManifoldModel::Product(l, r) => {
                let (nc, nt) = (l.coord_len(), l.tangent_len());
                l.inner(&x[..nc], &v[..nt], &w[..nt]) + r.inner(&x[nc..], &v[nt..], &w[nt..])
            }
            _ => dot(v, w),
        }
    }

    /// Orthonormal frame of the tangent space at `x`, as chart vectors.
    pub fn tangent_frame(&self, x: &[f64]) -> Vec<Vec<f64>> {
        match self {
            ManifoldModel::Euclidean { dim } | ManifoldModel::Torus { dim, .. } => (0..*dim)
                .map(|i| {
                    let mut e = vec![0.0; *dim];
                    e[i] = 1.0;
                    e
                })
                .collect(),
            ManifoldModel::Circle => vec![vec![1.0]],
            ManifoldModel::Sphere2 => {
                // Gram-Schmidt against the axis least aligned with x.
                let k = (0..3)
                    .min_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()))
                    .expect("three axes");
                let mut a = [0.0; 3];
                a[k] = 1.0;
                let p = dot(&a, x);
                let mut e1 = [a[0] - p * x[0], a[1] - p * x[1], a[2] - p * x[2]];
                let n = norm(&e1);
                e1.iter_mut().for_each(|v| *v /= n);
                let e2 = cross3(x, &e1);
                vec![e1.to_vec(), e2.to_vec()]
            }
            ManifoldModel::Hyperbolic3 => (0..3)
                .map(|i| {
                    let mut e = vec![0.0; 3];
                    e[i] = x[2];
                    e
                })
                .collect(),
            ManifoldModel::Product(l, r) => {
                let (nc, nt, mt) = (l.coord_len(), l.tangent_len(), self.tangent_len());
                let mut frame = Vec::new();
                for e in l.tangent_frame(&x[..nc]) {
                    let mut v = vec![0.0; mt];
                    v[..nt].copy_from_slice(&e);
                    frame.push(v);
                }
                for e in r.tangent_frame(&x[nc..]) {
                    let mut v = vec![0.0; mt];
                    v[nt..].copy_from_slice(&e);
                    frame.push(v);
                }
                frame
            }
        }
    }

    /// Orthonormal frame at `x` whose first vector points along `axis`
    /// (falls back to the standard frame when `axis` vanishes).
    pub fn oriented_frame(&self, x: &[f64], axis: &[f64]) -> Vec<Vec<f64>> {
        let base = self.tangent_frame(x);
        let len = self.inner(x, axis, axis).sqrt();
        if !(len > 0.0) {
            return base;
        }
        let mut frame: Vec<Vec<f64>> = vec![axis.iter().map(|v| v / len).collect()];
        for cand in base {
            if frame.len() == self.dim() {
                break;
            }
            let mut v = cand.clone();
            for e in &frame {
                let p = self.inner(x, &v, e);
                v.iter_mut().zip(e).for_each(|(a, b)| *a -= p * b);
            }
            let n = self.inner(x, &v, &v).sqrt();
            if n > 1e-8 {
                v.iter_mut().for_each(|a| *a /= n);
                frame.push(v);
            }
        }
        frame
    }
}

fn check_base<'a>(base: &mut Option<&'a ManifoldModel>, factor: &'a ManifoldModel) -> Result<()> {
    match base {
        None => {
            *base = Some(factor);
            Ok(())
        }
        Some(b) if *b == factor => Ok(()),
        Some(b) => Err(Error::UnsupportedModel(format!(
            "factors differ: {b} versus {factor}"
        ))),
    }
}

/// Reference point of a model: the origin, the north pole, `(0, 0, 1)` in
/// the half-space, or the pair of factor reference points.
pub fn canonical_point(model: &ManifoldModel) -> Point {
    match model {
        ManifoldModel::Euclidean { dim } | ManifoldModel::Torus { dim, .. } => Point::origin(*dim),
        ManifoldModel::Circle => Point::on_circle(0.0),
        ManifoldModel::Sphere2 => Point::north_pole(),
        ManifoldModel::Hyperbolic3 => Point::new(vec![0.0, 0.0, 1.0]),
        ManifoldModel::Product(l, r) => Point::pair(&canonical_point(l), &canonical_point(r)),
    }
}

/// Signed offset in `[-side/2, side/2)` congruent to `d`.
pub(crate) fn torus_offset(d: f64, side: f64) -> f64 {
    let r = d.rem_euclid(side);
    if r >= 0.5 * side {
        r - side
    } else {
        r
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn cross3(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Volume of the unit ball in `R^m`.
pub fn unit_ball_volume(m: usize) -> f64 {
    match m {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(m - 2) * 2.0 * PI / m as f64,
    }
}

/// Volume of `B(0, r) ∩ [-a, a]^m`.
fn clipped_ball_volume(m: usize, r: f64, a: f64) -> f64 {
    if r <= a {
        return unit_ball_volume(m) * r.powi(m as i32);
    }
    if r * r >= m as f64 * a * a {
        return (2.0 * a).powi(m as i32);
    }
    match m {
        1 => 2.0 * r.min(a),
        _ => {
            let z = r.min(a);
            let slice = |s: f64| clipped_ball_volume(m - 1, (r * r - s * s).max(0.0).sqrt(), a);
            2.0 * adaptive(slice, 0.0, z, 1e-13, 1e-12).value
        }
    }
}

// Upper half-space <-> hyperboloid {-X0^2 + X1^2 + X2^2 + X3^2 = -1}.
fn to_hyperboloid(x: &[f64]) -> [f64; 4] {
    let (u1, u2, h) = (x[0], x[1], x[2]);
    let a = h * h + u1 * u1 + u2 * u2;
    [(a + 1.0) / (2.0 * h), u1 / h, u2 / h, (a - 1.0) / (2.0 * h)]
}

fn from_hyperboloid(p: &[f64; 4]) -> [f64; 3] {
    let h = 1.0 / (p[0] - p[3]);
    [p[1] * h, p[2] * h, h]
}

fn chart_to_hyperboloid_tangent(x: &[f64], v: &[f64]) -> [f64; 4] {
    let (u1, u2, h) = (x[0], x[1], x[2]);
    let (du1, du2, dh) = (v[0], v[1], v[2]);
    let udu = u1 * du1 + u2 * du2;
    let uu = u1 * u1 + u2 * u2;
    [
        udu / h + dh * (0.5 - (uu + 1.0) / (2.0 * h * h)),
        du1 / h - u1 * dh / (h * h),
        du2 / h - u2 * dh / (h * h),
        udu / h + dh * (0.5 - (uu - 1.0) / (2.0 * h * h)),
    ]
}

fn hyperboloid_to_chart_tangent(p: &[f64; 4], dp: &[f64; 4]) -> [f64; 3] {
    let h = 1.0 / (p[0] - p[3]);
    let dh = -h * h * (dp[0] - dp[3]);
    [h * dp[1] + p[1] * dh, h * dp[2] + p[2] * dh, dh]
}

fn minkowski(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    -a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

fn hyperbolic_exp(x: &[f64], v: &[f64], out: &mut [f64]) {
    let speed = (dot(v, v)).sqrt() / x[2];
    if speed == 0.0 {
        out.copy_from_slice(x);
        return;
    }
    let p = to_hyperboloid(x);
    let dp = chart_to_hyperboloid_tangent(x, v);
    let (c, s) = (speed.cosh(), speed.sinh());
    let mut q = [0.0; 4];
    for i in 0..4 {
        q[i] = c * p[i] + s * dp[i] / speed;
    }
    let y = from_hyperboloid(&q);
    out.copy_from_slice(&y);
}

fn hyperbolic_log(x: &[f64], y: &[f64]) -> Vec<f64> {
    let d = ManifoldModel::Hyperbolic3.dist(x, y);
    if d == 0.0 {
        return vec![0.0; 3];
    }
    let p = to_hyperboloid(x);
    let q = to_hyperboloid(y);
    let c = -minkowski(&p, &q);
    let mut u = [0.0; 4];
    for i in 0..4 {
        u[i] = q[i] - c * p[i];
    }
    let n = minkowski(&u, &u).max(0.0).sqrt();
    if n == 0.0 {
        return vec![0.0; 3];
    }
    for v in u.iter_mut() {
        *v *= d / n;
    }
    hyperboloid_to_chart_tangent(&p, &u).to_vec()
}

impl fmt::Display for ManifoldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldModel::Euclidean { dim } => write!(f, "euclidean:{dim}"),
            ManifoldModel::Torus { dim, side } => write!(f, "torus:{dim}:{side}"),
            ManifoldModel::Circle => write!(f, "circle"),
            ManifoldModel::Sphere2 => write!(f, "sphere2"),
            ManifoldModel::Hyperbolic3 => write!(f, "hyperbolic3"),
            ManifoldModel::Product(l, r) => write!(f, "product({l},{r})"),
        }
    }
}

impl FromStr for ManifoldModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Some(inner) = t.strip_prefix("product(").and_then(|r| r.strip_suffix(')')) {
            let split = split_top_level(inner, ',');
            if split.len() != 2 {
                return Err(Error::spec(s, "product needs exactly two factors"));
            }
            return Ok(ManifoldModel::product(split[0].parse()?, split[1].parse()?));
        }
        let parts: Vec<&str> = t.split(':').collect();
        let num = |i: usize| -> Result<&str> {
            parts.get(i).copied().ok_or_else(|| Error::spec(s, "missing field"))
        };
        match parts[0] {
            "euclidean" => {
                let dim: usize = num(1)?.parse().map_err(|_| Error::spec(s, "bad dimension"))?;
                if dim == 0 {
                    return Err(Error::spec(s, "dimension must be positive"));
                }
                Ok(ManifoldModel::euclidean(dim))
            }
            "torus" => {
                let dim: usize = num(1)?.parse().map_err(|_| Error::spec(s, "bad dimension"))?;
                let side: f64 = num(2)?.parse().map_err(|_| Error::spec(s, "bad side length"))?;
                if dim == 0 || !(side > 0.0) {
                    return Err(Error::spec(s, "torus needs positive dimension and side"));
                }
                Ok(ManifoldModel::torus(dim, side))
            }
            "circle" => Ok(ManifoldModel::Circle),
            "sphere2" => Ok(ManifoldModel::Sphere2),
            "hyperbolic3" => Ok(ManifoldModel::Hyperbolic3),
            _ => Err(Error::spec(s, "unknown manifold")),
        }
    }
}

/// Splits on `sep` outside of parentheses and brackets.
pub(crate) fn split_top_level(s: &str, sep: char) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            _ => {}
        }
        if c == sep && depth == 0 {
            out.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
    }
    out.push(cur);
    out.into_iter().map(|p| p.trim().to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_examples() {
        let e2 = ManifoldModel::euclidean(2);
        let d = e2.distance(&Point::new(vec![0.0, 0.0]), &Point::new(vec![3.0, 4.0])).unwrap();
        assert_eq!(d, 5.0);
        let s = ManifoldModel::Sphere2;
        let d = s
            .distance(&Point::north_pole(), &Point::new(vec![0.0, 0.0, -1.0]))
            .unwrap();
        assert!((d - PI).abs() < 1e-15);
        let h = ManifoldModel::Hyperbolic3;
        let d = h
            .distance(&Point::new(vec![0.0, 0.0, 1.0]), &Point::new(vec![0.0, 0.0, 1f64.exp()]))
            .unwrap();
        assert!((d - 1.0).abs() < 1e-14);
    }

    #[test]
    fn invalid_points_are_rejected() {
        let s = ManifoldModel::Sphere2;
        assert!(matches!(
            s.distance(&Point::new(vec![1.0, 1.0, 0.0]), &Point::north_pole()),
            Err(Error::InvalidPoint(_))
        ));
        let h = ManifoldModel::Hyperbolic3;
        assert!(h.check_point(&Point::new(vec![0.0, 0.0, -1.0])).is_err());
        assert!(matches!(
            ManifoldModel::euclidean(2).check_point(&Point::origin(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ball_volume_examples() {
        let x = Point::origin(2);
        assert!((ManifoldModel::euclidean(2).ball_volume(&x, 1.0).unwrap() - PI).abs() < 1e-15);
        let v = ManifoldModel::Sphere2.ball_volume(&Point::north_pole(), PI).unwrap();
        assert!((v - 4.0 * PI).abs() < 1e-13);
        let v = ManifoldModel::Hyperbolic3
            .ball_volume(&Point::new(vec![0.0, 0.0, 1.0]), 1.0)
            .unwrap();
        assert!((v - 5.1109).abs() < 1e-4);
        assert!(ManifoldModel::Circle.ball_volume(&Point::on_circle(0.0), 0.0).is_err());
    }

    #[test]
    fn torus_ball_volume_saturates() {
        let t = ManifoldModel::torus(2, 2.0);
        assert!((t.ball_volume_at_radius(0.5) - PI * 0.25).abs() < 1e-14);
        assert!((t.ball_volume_at_radius(1.5) - 4.0).abs() < 1e-14);
        let mid = t.ball_volume_at_radius(1.2);
        // disk of radius 1.2 clipped to [-1,1]^2: pi r^2 - 4 segments
        let seg = 1.2f64 * 1.2 * (1.0f64 / 1.2).acos() - (1.2f64 * 1.2 - 1.0).sqrt();
        assert!((mid - (PI * 1.44 - 4.0 * seg)).abs() < 1e-9, "{mid}");
    }

    #[test]
    fn exp_map_examples() {
        let e = ManifoldModel::euclidean(3);
        let y = e.exp_map(&Point::new(vec![1.0, 2.0, 3.0]), &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(y.coords, vec![1.5, 2.5, 3.5]);
        let c = ManifoldModel::Circle;
        let y = c.exp_map(&Point::on_circle(0.3), &[1.0]).unwrap();
        assert!((y.angle() - 1.3).abs() < 1e-14);
        let s = ManifoldModel::Sphere2;
        let y = s.exp_map(&Point::north_pole(), &[PI, 0.0, 0.0]).unwrap();
        assert!((y.coords[2] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn hyperbolic_exp_and_log_are_inverse() {
        let h = ManifoldModel::Hyperbolic3;
        let x = Point::new(vec![0.3, -0.2, 0.7]);
        let v = [0.2, 0.5, -0.3];
        let y = h.exp_map(&x, &v).unwrap();
        let speed = h.inner(&x.coords, &v, &v).sqrt();
        assert!((h.distance(&x, &y).unwrap() - speed).abs() < 1e-12);
        let back = h.log_map(&x, &y).unwrap();
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-10, "{back:?}");
        }
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in ["euclidean:3", "torus:2:6.2832", "sphere2", "hyperbolic3", "circle", "product(euclidean:3,euclidean:3)"] {
            let m: ManifoldModel = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("moebius".parse::<ManifoldModel>().is_err());
        let p: ManifoldModel = "product(euclidean:3,euclidean:3)".parse().unwrap();
        assert_eq!(p.dim(), 6);
        assert_eq!(ManifoldModel::product(ManifoldModel::Hyperbolic3, ManifoldModel::Circle).ricci_lower_bound(), -2.0);
    }

    #[test]
    fn power_factor_ranges() {
        let m = ManifoldModel::power(&ManifoldModel::euclidean(3), 3);
        let (base, ranges) = m.power_factors(3).unwrap();
        assert_eq!(base, ManifoldModel::euclidean(3));
        assert_eq!(ranges, vec![0..3, 3..6, 6..9]);
        assert!(ManifoldModel::euclidean(3).power_factors(2).is_err());
    }
}
