use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{ManifoldModel, Point};
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Region covered by a quadrature grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Window {
    /// The whole (compact) model.
    Full,
    /// Coordinate box in the chart, `lower[i] <= x[i] <= upper[i]`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Geodesic ball, discretized in geodesic polar coordinates.
    Ball { center: Point, radius: f64 },
    /// Tensor product of factor windows.
    Product(std::boxed::Box<Window>, std::boxed::Box<Window>),
}

impl Window {
    pub fn cube(center: &[f64], half_width: f64) -> Self {
        Window::Box {
            lower: center.iter().map(|c| c - half_width).collect(),
            upper: center.iter().map(|c| c + half_width).collect(),
        }
    }

    pub fn ball(center: Point, radius: f64) -> Self {
        Window::Ball { center, radius }
    }

    pub fn product(left: Window, right: Window) -> Self {
        Window::Product(std::boxed::Box::new(left), std::boxed::Box::new(right))
    }
}

/// Nodes and positive weights approximating the volume measure on a window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    pub window: Window,
    pub resolution: f64,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum_i w_i f(x_i)`.
    pub fn integrate<F: FnMut(&Point) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

/// Builds a deterministic quadrature grid with characteristic spacing `h`.
///
/// Box windows use the midpoint rule; full compact models, balls and the
/// sphere use Gauss-Legendre in the radial or polar direction, so smooth
/// integrands converge at least at second order.
pub fn build_grid(model: &ManifoldModel, h: f64, window: &Window) -> Result<QuadratureGrid> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("grid spacing must be positive, got {h}")));
    }
    let (nodes, weights) = build(model, h, window)?;
    if nodes.is_empty() {
        return Err(Error::EmptyWindow);
    }
    Ok(QuadratureGrid {
        nodes,
        weights,
        window: window.clone(),
        resolution: h,
    })
}

type Rule = (Vec<Point>, Vec<f64>);

fn build(model: &ManifoldModel, h: f64, window: &Window) -> Result<Rule> {
    match (model, window) {
        (ManifoldModel::Product(l, r), Window::Full) => {
            tensor(build(l, h, &Window::Full)?, build(r, h, &Window::Full)?)
        }
        (ManifoldModel::Product(l, r), Window::Product(wl, wr)) => tensor(build(l, h, wl)?, build(r, h, wr)?),
        (_, Window::Product(..)) => Err(Error::UnsupportedModel(format!(
            "product window on non-product model {model}"
        ))),
        (ManifoldModel::Product(..), _) => Err(Error::UnsupportedModel(
            "product models need a product (or full) window".into(),
        )),
        (_, Window::Full) => full(model, h),
        (_, Window::Box { lower, upper }) => chart_box(model, h, lower, upper),
        (_, Window::Ball { center, radius }) => ball(model, h, center, *radius),
    }
}

fn tensor(left: Rule, right: Rule) -> Result<Rule> {
    let mut nodes = Vec::with_capacity(left.0.len() * right.0.len());
    let mut weights = Vec::with_capacity(nodes.capacity());
    for (xl, wl) in left.0.iter().zip(&left.1) {
        for (xr, wr) in right.0.iter().zip(&right.1) {
            nodes.push(Point::pair(xl, xr));
            weights.push(wl * wr);
        }
    }
    Ok((nodes, weights))
}

fn full(model: &ManifoldModel, h: f64) -> Result<Rule> {
    match model {
        ManifoldModel::Circle => {
            let n = (2.0 * PI / h).ceil().max(1.0) as usize;
            let w = 2.0 * PI / n as f64;
            Ok((
                (0..n).map(|i| Point::on_circle(w * i as f64)).collect(),
                vec![w; n],
            ))
        }
        ManifoldModel::Torus { dim, side } => {
            let lower = vec![0.0; *dim];
            let upper = vec![*side; *dim];
            chart_box(model, h, &lower, &upper)
        }
        ManifoldModel::Sphere2 => {
            let n_polar = (PI / h).ceil().max(2.0) as usize;
            let n_az = 2 * n_polar;
            let gl = GaussLegendre::new(n_polar);
            let mut nodes = Vec::with_capacity(n_polar * n_az);
            let mut weights = Vec::with_capacity(n_polar * n_az);
            for (z, wz) in gl.on(-1.0, 1.0) {
                let s = (1.0 - z * z).sqrt();
                for j in 0..n_az {
                    let phi = 2.0 * PI * (j as f64 + 0.5) / n_az as f64;
                    nodes.push(Point::new(vec![s * phi.cos(), s * phi.sin(), z]));
                    weights.push(wz * 2.0 * PI / n_az as f64);
                }
            }
            Ok((nodes, weights))
        }
        _ => Err(Error::UnsupportedModel(format!(
            "{model} is not compact; use a box or ball window"
        ))),
    }
}

fn chart_box(model: &ManifoldModel, h: f64, lower: &[f64], upper: &[f64]) -> Result<Rule> {
    let dim = match model {
        ManifoldModel::Euclidean { dim } | ManifoldModel::Torus { dim, .. } => *dim,
        ManifoldModel::Hyperbolic3 => 3,
        _ => {
            return Err(Error::UnsupportedModel(format!(
                "box windows are not available on {model}"
            )))
        }
    };
    if lower.len() != dim || upper.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: lower.len().min(upper.len()),
        });
    }
    if lower.iter().zip(upper).any(|(a, b)| !(b > a)) {
        return Err(Error::EmptyWindow);
    }
    if matches!(model, ManifoldModel::Hyperbolic3) && lower[2] <= 0.0 {
        return Err(Error::InvalidPoint("hyperbolic box must have positive heights".into()));
    }
    let counts: Vec<usize> = lower
        .iter()
        .zip(upper)
        .map(|(a, b)| ((b - a) / h).round().max(1.0) as usize)
        .collect();
    let steps: Vec<f64> = lower
        .iter()
        .zip(upper)
        .zip(&counts)
        .map(|((a, b), n)| (b - a) / *n as f64)
        .collect();
    let cell: f64 = steps.iter().product();
    let total: usize = counts.iter().product();
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        let mut c: Vec<f64> = (0..dim)
            .map(|i| lower[i] + (idx[i] as f64 + 0.5) * steps[i])
            .collect();
        let w = match model {
            ManifoldModel::Hyperbolic3 => cell / c[2].powi(3),
            ManifoldModel::Torus { side, .. } => {
                c.iter_mut().for_each(|v| *v = v.rem_euclid(*side));
                cell
            }
            _ => cell,
        };
        nodes.push(Point::new(c));
        weights.push(w);
        for i in 0..dim {
            idx[i] += 1;
            if idx[i] < counts[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    Ok((nodes, weights))
}

fn ball(model: &ManifoldModel, h: f64, center: &Point, radius: f64) -> Result<Rule> {
    model.check_point(center)?;
    if !(radius > 0.0) {
        return Err(Error::EmptyWindow);
    }
    if radius > model.injectivity_radius() + 1e-12 {
        return Err(Error::Domain(format!(
            "ball radius {radius} exceeds the injectivity radius of {model}"
        )));
    }
    let dim = model.dim();
    if dim > 3 {
        return Err(Error::UnsupportedModel(format!("ball windows need dimension <= 3, got {model}")));
    }
    let area = |r: f64| model.sphere_area_at_radius(r).expect("non-product model");
    let n_r = (radius / h).ceil().max(4.0) as usize;
    let radial = GaussLegendre::new(n_r);
    let frame = model.tangent_frame(&center.coords);
    let dirs = directions(dim, &frame, h, radius);
    let mut nodes = Vec::with_capacity(n_r * dirs.len());
    let mut weights = Vec::with_capacity(n_r * dirs.len());
    let mut v = vec![0.0; model.tangent_len()];
    let mut out = vec![0.0; model.coord_len()];
    for (r, wr) in radial.on(0.0, radius) {
        let shell = wr * area(r);
        for (dir, wd) in &dirs {
            for (vi, di) in v.iter_mut().zip(dir) {
                *vi = r * di;
            }
            model.exp_into(&center.coords, &v, &mut out);
            nodes.push(Point::new(out.clone()));
            weights.push(shell * wd);
        }
    }
    Ok((nodes, weights))
}

/// Unit directions with weights summing to one.
fn directions(dim: usize, frame: &[Vec<f64>], h: f64, radius: f64) -> Vec<(Vec<f64>, f64)> {
    let combine = |coef: &[f64]| -> Vec<f64> {
        let mut v = vec![0.0; frame[0].len()];
        for (c, e) in coef.iter().zip(frame) {
            v.iter_mut().zip(e).for_each(|(a, b)| *a += c * b);
        }
        v
    };
    match dim {
        1 => vec![(combine(&[1.0]), 0.5), (combine(&[-1.0]), 0.5)],
        2 => {
            let n = (2.0 * PI * radius / h).ceil().max(8.0) as usize;
            (0..n)
                .map(|j| {
                    let phi = 2.0 * PI * (j as f64 + 0.5) / n as f64;
                    (combine(&[phi.cos(), phi.sin()]), 1.0 / n as f64)
                })
                .collect()
        }
        _ => {
            let n_u = (PI * radius / h).ceil().max(4.0) as usize;
            let n_phi = 2 * n_u;
            let gl = GaussLegendre::new(n_u);
            let mut out = Vec::with_capacity(n_u * n_phi);
            for (u, wu) in gl.on(-1.0, 1.0) {
                let s = (1.0 - u * u).sqrt();
                for j in 0..n_phi {
                    let phi = 2.0 * PI * (j as f64 + 0.5) / n_phi as f64;
                    out.push((
                        combine(&[u, s * phi.cos(), s * phi.sin()]),
                        0.5 * wu / n_phi as f64,
                    ));
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_grid_is_uniform() {
        let n = 12;
        let g = build_grid(&ManifoldModel::Circle, 2.0 * PI / n as f64, &Window::Full).unwrap();
        assert_eq!(g.len(), n);
        assert!(g.weights.iter().all(|w| (w - 2.0 * PI / n as f64).abs() < 1e-15));
    }

    #[test]
    fn sphere_grid_total_area() {
        let g = build_grid(&ManifoldModel::Sphere2, 0.2, &Window::Full).unwrap();
        assert!((g.total_weight() - 4.0 * PI).abs() < 1e-12);
        // z^2 integrates to 4 pi / 3
        let v = g.integrate(|p| p.coords[2] * p.coords[2]);
        assert!((v - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unit_interval_box() {
        let g = build_grid(
            &ManifoldModel::euclidean(1),
            0.25,
            &Window::Box {
                lower: vec![0.0],
                upper: vec![1.0],
            },
        )
        .unwrap();
        assert_eq!(g.len(), 4);
        assert!((g.total_weight() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_windows_are_errors() {
        let e = ManifoldModel::euclidean(1);
        let w = Window::Box {
            lower: vec![1.0],
            upper: vec![1.0],
        };
        assert!(matches!(build_grid(&e, 0.1, &w), Err(Error::EmptyWindow)));
        assert!(build_grid(&e, 0.1, &Window::Full).is_err());
        assert!(build_grid(&e, 0.0, &Window::cube(&[0.0], 1.0)).is_err());
    }

    #[test]
    fn ball_windows_match_ball_volume() {
        let cases = [
            (ManifoldModel::euclidean(3), Point::origin(3), 1.3),
            (ManifoldModel::Hyperbolic3, Point::new(vec![0.2, 0.1, 0.5]), 1.0),
            (ManifoldModel::Sphere2, Point::on_sphere(0.4, 1.0), 2.0),
            (ManifoldModel::euclidean(2), Point::origin(2), 0.7),
        ];
        for (m, c, r) in cases {
            let g = build_grid(&m, 0.1, &Window::ball(c.clone(), r)).unwrap();
            let exact = m.ball_volume(&c, r).unwrap();
            assert!((g.total_weight() - exact).abs() < 1e-10 * exact, "{m}");
            for x in &g.nodes {
                assert!(m.dist(&x.coords, &c.coords) <= r + 1e-9);
            }
        }
    }

    #[test]
    fn hyperbolic_box_weights_use_the_metric_density() {
        let w = Window::Box {
            lower: vec![0.0, 0.0, 1.0],
            upper: vec![1.0, 1.0, 2.0],
        };
        let g = build_grid(&ManifoldModel::Hyperbolic3, 0.01, &w).unwrap();
        // int_1^2 h^-3 dh = 3/8
        assert!((g.total_weight() - 0.375).abs() < 1e-4);
    }
}
