//! Schrödinger semigroups `e^{-tH}` with `H = -½Δ + w` on the circle and
//! flat tori, discretized by the periodic second-difference stencil.
//!
//! Grid `L^q` norms use the cell volume as weight; with uniform weights the
//! operator norms reduce to matrix `ℓ^q` norms.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ManifoldModel;
use crate::potentials::Potential;
use crate::stochastics::{fit_delta_constants, DeltaFit};
use crate::verdict::Verdict;

/// Largest matrix handled by dense eigendecomposition; larger operators use
/// scaling and squaring.
pub const EIGEN_LIMIT: usize = 1024;

pub struct DiscretizedOperator {
    pub model: ManifoldModel,
    /// Nodes per axis.
    pub n: usize,
    pub spacing: f64,
    pub cell: f64,
    pub matrix: DMatrix<f64>,
    pub potential: String,
    /// Nodes where `w` was infinite and replaced by the largest finite value.
    pub capped: usize,
    nodes: Vec<Vec<f64>>,
    eigen: OnceLock<SymmetricEigen<f64, nalgebra::Dyn>>,
}

impl std::fmt::Debug for DiscretizedOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscretizedOperator")
            .field("model", &self.model)
            .field("n", &self.n)
            .field("potential", &self.potential)
            .finish()
    }
}

/// `-½Δ_h + diag(w)` on the periodic grid.
pub fn discretize(model: &ManifoldModel, n: usize, w: &Potential) -> Result<DiscretizedOperator> {
    if n < 8 {
        return Err(Error::Domain(format!("need n >= 8 grid nodes per axis, got {n}")));
    }
    let (dim, side) = match model {
        ManifoldModel::Circle => (1, 2.0 * std::f64::consts::PI),
        ManifoldModel::Torus { dim, side } if *dim <= 2 => (*dim, *side),
        _ => {
            return Err(Error::UnsupportedModel(format!(
                "semigroups are discretized on the circle and tori of dimension <= 2, not {model}"
            )))
        }
    };
    let h = side / n as f64;
    let size = n.pow(dim as u32);
    let nodes: Vec<Vec<f64>> = (0..size)
        .map(|k| match model {
            ManifoldModel::Circle => {
                let a = k as f64 * h;
                vec![a.cos(), a.sin()]
            }
            _ => (0..dim).map(|d| ((k / n.pow(d as u32)) % n) as f64 * h).collect(),
        })
        .collect();
    let mut values: Vec<f64> = nodes.iter().map(|y| w.eval(model, y)).collect();
    let finite_max = values.iter().filter(|v| v.is_finite()).fold(0.0f64, |a, v| a.max(v.abs()));
    let mut capped = 0;
    for v in values.iter_mut().filter(|v| !v.is_finite()) {
        *v = v.signum() * finite_max;
        capped += 1;
    }
    let c = 0.5 / (h * h);
    let mut m = DMatrix::<f64>::zeros(size, size);
    for k in 0..size {
        m[(k, k)] = 2.0 * c * dim as f64 + values[k];
        for d in 0..dim {
            let stride = n.pow(d as u32);
            let i = (k / stride) % n;
            let up = k - i * stride + ((i + 1) % n) * stride;
            let down = k - i * stride + ((i + n - 1) % n) * stride;
            m[(k, up)] -= c;
            m[(k, down)] -= c;
        }
    }
    Ok(DiscretizedOperator {
        model: model.clone(),
        n,
        spacing: h,
        cell: h.powi(dim as i32),
        matrix: m,
        potential: w.to_string(),
        capped,
        nodes,
        eigen: OnceLock::new(),
    })
}

impl DiscretizedOperator {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    fn eigen(&self) -> &SymmetricEigen<f64, nalgebra::Dyn> {
        self.eigen.get_or_init(|| SymmetricEigen::new(self.matrix.clone()))
    }

    /// Eigenvalues in increasing order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.eigen().eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// The matrix `e^{-tH}`.
    pub fn propagator(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("semigroup time must be >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(DMatrix::identity(self.size(), self.size()));
        }
        if self.size() > EIGEN_LIMIT {
            return Ok(expm(&(-t * &self.matrix)));
        }
        let e = self.eigen();
        let decay = e.eigenvalues.map(|l| (-t * l).exp());
        let scaled = &e.eigenvectors * DMatrix::from_diagonal(&decay);
        Ok(scaled * e.eigenvectors.transpose())
    }

    /// `e^{-tH} f`.
    pub fn apply(&self, t: f64, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.size() {
            return Err(Error::DimensionMismatch {
                expected: self.size(),
                found: f.len(),
            });
        }
        if t == 0.0 {
            return Ok(f.to_vec());
        }
        let v = DVector::from_column_slice(f);
        if self.size() > EIGEN_LIMIT {
            return Ok((self.propagator(t)? * v).iter().copied().collect());
        }
        let e = self.eigen();
        let mut c = e.eigenvectors.tr_mul(&v);
        for (ci, l) in c.iter_mut().zip(e.eigenvalues.iter()) {
            *ci *= (-t * l).exp();
        }
        Ok((&e.eigenvectors * c).iter().copied().collect())
    }

    /// Index of the node nearest to `x`.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        (0..self.size())
            .min_by(|a, b| self.model.dist(&self.nodes[*a], x).total_cmp(&self.model.dist(&self.nodes[*b], x)))
            .expect("non-empty grid")
    }

    /// Weighted inner product `Σ f g · cell`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() * self.cell
    }
}

/// Scaling and squaring with a degree-18 Taylor polynomial.
fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = (0..a.ncols()).map(|j| a.column(j).abs().sum()).fold(0.0, f64::max);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(s);
    let n = a.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=18 {
        term = &term * &scaled / k as f64;
        result += &term;
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

/// `q` in `[1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QExponent {
    Finite(f64),
    Infinity,
}

impl QExponent {
    pub fn value(self) -> f64 {
        match self {
            QExponent::Finite(q) => q,
            QExponent::Infinity => f64::INFINITY,
        }
    }

    pub fn from_f64(q: f64) -> Self {
        if q.is_infinite() {
            QExponent::Infinity
        } else {
            QExponent::Finite(q)
        }
    }
}

impl std::fmt::Display for QExponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QExponent::Finite(q) => write!(f, "{q}"),
            QExponent::Infinity => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for QExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(QExponent::Infinity),
            other => {
                let q: f64 = other.parse().map_err(|_| Error::spec(s, "expected a number or `inf`"))?;
                if q >= 1.0 {
                    Ok(QExponent::Finite(q))
                } else {
                    Err(Error::spec(s, "q must be at least 1"))
                }
            }
        }
    }
}

/// Operator norm of `p` on `ℓ^q` (uniform weights cancel).
///
/// `q = 1, 2, ∞` are exact (column sums, largest singular value, row sums).
/// Other `q` use Boyd's power iteration, which converges to the norm for
/// entrywise nonnegative matrices such as positivity-preserving semigroups.
pub fn q_norm(p: &DMatrix<f64>, q: QExponent) -> f64 {
    match q {
        QExponent::Infinity => (0..p.nrows()).map(|i| p.row(i).abs().sum()).fold(0.0, f64::max),
        QExponent::Finite(1.0) => (0..p.ncols()).map(|j| p.column(j).abs().sum()).fold(0.0, f64::max),
        QExponent::Finite(2.0) => {
            let sym = (p - p.transpose()).abs().max() <= 1e-12 * p.abs().max();
            if sym {
                SymmetricEigen::new(p.clone()).eigenvalues.abs().max()
            } else {
                p.clone().svd(false, false).singular_values.max()
            }
        }
        QExponent::Finite(q) => boyd_norm(p, q),
    }
}

fn lq(v: &DVector<f64>, q: f64) -> f64 {
    v.iter().map(|x| x.abs().powf(q)).sum::<f64>().powf(1.0 / q)
}

fn boyd_norm(p: &DMatrix<f64>, q: f64) -> f64 {
    let qd = q / (q - 1.0);
    let mut x = DVector::from_element(p.ncols(), 1.0);
    x /= lq(&x, q);
    let mut best = 0.0;
    for _ in 0..500 {
        let y = p * &x;
        let value = lq(&y, q);
        let dual = y.map(|v| v.signum() * v.abs().powf(q - 1.0));
        let z = p.tr_mul(&dual);
        let next = z.map(|v| v.signum() * v.abs().powf(qd - 1.0));
        let nn = lq(&next, q);
        if nn == 0.0 {
            return value;
        }
        let done = (value - best).abs() <= 1e-14 * value;
        best = value;
        x = next / nn;
        if done {
            break;
        }
    }
    best
}

/// Measured `‖e^{-tH}‖_{q→q}` on a time grid with fitted `(δ, C(δ))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QNormBound {
    pub q: QExponent,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub table: Vec<DeltaFit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BopReport {
    pub inequality: String,
    pub potential: String,
    pub bounds: Vec<QNormBound>,
    /// Smallest `log(δ e^{tC}) - log‖e^{-tH}‖` over all `q`, `δ`, `t`.
    pub margin_min: f64,
    /// `max (|e^{-tH^w}f| - e^{-tH^{-w₋}}|f|)` over random `f`; absent
    /// when no signed operator was supplied.
    pub domination_excess: Option<f64>,
    pub verdict: Verdict,
}

pub const BOP_INEQUALITY: &str = "‖e^{-tH^{-w₋}}‖_{q→q} ≤ δ e^{t C(w₋,δ)}";

/// Verifies `‖e^{-tH^{-w₋}}‖_{q→q} ≤ δ e^{tC(δ)}` on the grid, with `C(δ)`
/// fitted per `q` as in [`fit_delta_constants`]. When `signed` (the
/// operator for `w = w₊ - w₋`) is given, also checks the domination
/// `|e^{-tH^w}f| ≤ e^{-tH^{-w₋}}|f|` on seeded random `f`.
pub fn bop_bound_check(
    op: &DiscretizedOperator,
    signed: Option<&DiscretizedOperator>,
    times: &[f64],
    deltas: &[f64],
    qs: &[QExponent],
    seed: u64,
) -> Result<BopReport> {
    if deltas.iter().any(|d| !(*d > 1.0)) {
        return Err(Error::Domain("δ must exceed 1".into()));
    }
    let props = times.iter().map(|t| op.propagator(*t)).collect::<Result<Vec<_>>>()?;
    let mut bounds = Vec::new();
    let mut margin_min = f64::INFINITY;
    for &q in qs {
        let norms: Vec<f64> = props.iter().map(|p| q_norm(p, q)).collect();
        let table = fit_delta_constants(times, &norms, deltas);
        margin_min = table.iter().map(|d| d.margin).fold(margin_min, f64::min);
        bounds.push(QNormBound {
            q,
            times: times.to_vec(),
            norms,
            table,
        });
    }
    let domination_excess = match signed {
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut worst = f64::NEG_INFINITY;
            for (t, p) in times.iter().zip(&props) {
                let ps = s.propagator(*t)?;
                for _ in 0..8 {
                    let f = DVector::from_fn(op.size(), |_, _| rng.random_range(-1.0..1.0));
                    let lhs = &ps * &f;
                    let rhs = p * f.abs();
                    let scale = rhs.abs().max().max(1.0);
                    let excess = lhs.abs().iter().zip(rhs.iter()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
                    worst = worst.max(excess / scale);
                }
            }
            Some(worst)
        }
        None => None,
    };
    let ok = margin_min >= -1e-10 && domination_excess.is_none_or(|e| e <= 1e-10);
    Ok(BopReport {
        inequality: BOP_INEQUALITY.into(),
        potential: op.potential.clone(),
        bounds,
        margin_min,
        domination_excess,
        verdict: Verdict::from_bool(ok),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterpolationSample {
    pub r: f64,
    pub q: f64,
    pub norm: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RieszThorinReport {
    pub inequality: String,
    pub t: f64,
    pub norm_1: f64,
    pub norm_inf: f64,
    pub samples: Vec<InterpolationSample>,
    pub margin_min: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

pub const RIESZ_THORIN_INEQUALITY: &str = "‖T‖_{q_r→q_r} ≤ ‖T‖_{1→1}^{1-r} ‖T‖_{∞→∞}^r, q_r = 1/(1-r)";

/// Checks `‖e^{-tH}‖_{q_r} ≤ ‖e^{-tH}‖_1^{1-r} ‖e^{-tH}‖_∞^r` for `q_r = 1/(1-r)`.
pub fn riesz_thorin_check(op: &DiscretizedOperator, t: f64, rs: &[f64], tolerance: f64) -> Result<RieszThorinReport> {
    if rs.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(Error::Domain("interpolation parameters must lie in [0, 1)".into()));
    }
    let p = op.propagator(t)?;
    let n1 = q_norm(&p, QExponent::Finite(1.0));
    let ni = q_norm(&p, QExponent::Infinity);
    let samples: Vec<InterpolationSample> = rs
        .iter()
        .map(|&r| {
            let q = 1.0 / (1.0 - r);
            let norm = q_norm(&p, QExponent::Finite(q));
            let bound = n1.powf(1.0 - r) * ni.powf(r);
            InterpolationSample {
                r,
                q,
                norm,
                bound,
                margin: bound - norm,
            }
        })
        .collect();
    let margin_min = samples.iter().map(|s| s.margin).fold(f64::INFINITY, f64::min);
    Ok(RieszThorinReport {
        inequality: RIESZ_THORIN_INEQUALITY.into(),
        t,
        norm_1: n1,
        norm_inf: ni,
        samples,
        margin_min,
        tolerance,
        verdict: Verdict::from_bool(margin_min >= -tolerance),
    })
}

/// `(e^{-tH} f)(x)` at `n` and `2n` nodes per axis with the second-order
/// extrapolation `(4 u_{2n} - u_n)/3`. `x` must be a node of both grids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RichardsonValue {
    pub coarse: f64,
    pub fine: f64,
    pub extrapolated: f64,
}

pub fn semigroup_value(model: &ManifoldModel, w: &Potential, f: &Potential, t: f64, x: &[f64], n: usize) -> Result<RichardsonValue> {
    let at = |n: usize| -> Result<f64> {
        let op = discretize(model, n, w)?;
        let k = op.nearest_node(x);
        if model.dist(&op.nodes[k], x) > 1e-9 {
            return Err(Error::Domain(format!("{x:?} is not a node of the {n}-point grid")));
        }
        let fv: Vec<f64> = op.nodes.iter().map(|y| f.eval(model, y)).collect();
        Ok(op.apply(t, &fv)?[k])
    };
    let coarse = at(n)?;
    let fine = at(2 * n)?;
    Ok(RichardsonValue {
        coarse,
        fine,
        extrapolated: (4.0 * fine - coarse) / 3.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat_kernel::HeatKernelEngine;

    fn circle_op(n: usize, w: &Potential) -> DiscretizedOperator {
        discretize(&ManifoldModel::Circle, n, w).unwrap()
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let op = circle_op(32, &Potential::zero());
        for i in 0..op.size() {
            assert!(op.matrix.row(i).sum().abs() < 1e-9);
        }
        assert!(op.ground_energy().abs() < 1e-10);
        let torus = discretize(&ManifoldModel::torus(2, 1.0), 8, &Potential::zero()).unwrap();
        assert_eq!(torus.size(), 64);
        assert!((&torus.matrix - torus.matrix.transpose()).abs().max() == 0.0);
    }

    #[test]
    fn constant_shift() {
        let a = circle_op(16, &Potential::zero()).eigenvalues();
        let b = circle_op(16, &Potential::Constant(0.7)).eigenvalues();
        for (x, y) in a.iter().zip(&b) {
            assert!((y - x - 0.7).abs() < 1e-10);
        }
    }

    #[test]
    fn heat_column_matches_kernel() {
        let n = 256;
        let op = circle_op(n, &Potential::zero());
        let mut delta = vec![0.0; n];
        delta[0] = 1.0 / op.cell;
        let u = op.apply(0.3, &delta).unwrap();
        let e = HeatKernelEngine::new(&ManifoldModel::Circle);
        for k in [0, 10, 60] {
            let p = e.value(0.3, &op.nodes()[0], &op.nodes()[k]).unwrap().0;
            assert!((u[k] - p).abs() < 1e-3 * p.max(1e-3), "{k}: {} {p}", u[k]);
        }
    }

    #[test]
    fn norms_of_constant_potential() {
        let op = circle_op(16, &Potential::Constant(-1.0));
        let p = op.propagator(0.5).unwrap();
        for q in [1.0, 2.0, 4.0] {
            assert!((q_norm(&p, QExponent::Finite(q)) - 0.5f64.exp()).abs() < 1e-10);
        }
        assert!((q_norm(&p, QExponent::Infinity) - 0.5f64.exp()).abs() < 1e-10);
    }

    #[test]
    fn semigroup_and_symmetry() {
        let op = circle_op(32, &Potential::Coordinate(0));
        let a = op.propagator(0.2).unwrap();
        let b = op.propagator(0.3).unwrap();
        let c = op.propagator(0.5).unwrap();
        assert!((&a * &b - &c).abs().max() < 1e-10);
        let f: Vec<f64> = (0..32).map(|i| (i as f64).sin()).collect();
        let g: Vec<f64> = (0..32).map(|i| (i as f64 * 0.3).cos()).collect();
        let lhs = op.inner(&op.apply(0.4, &f).unwrap(), &g);
        let rhs = op.inner(&f, &op.apply(0.4, &g).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn scaling_and_squaring_agrees_with_eigen() {
        let op = circle_op(24, &Potential::Coordinate(0));
        let a = op.propagator(0.7).unwrap();
        let b = expm(&(-0.7 * &op.matrix));
        assert!((a - b).abs().max() < 1e-11);
    }
}
