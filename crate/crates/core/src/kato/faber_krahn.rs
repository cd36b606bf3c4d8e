//! Dirichlet ground energies of `-½Δ` on Euclidean balls and boxes, and the
//! Faber-Krahn inequality `λ₁(U) ≥ a μ(U)^{-2/m}` for `U ⊂ B(x, R)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::control::FaberKrahnControlPair;
use crate::error::{Error, Result};
use crate::geometry::{dot, unit_ball_volume, ManifoldModel};
use crate::verdict::Verdict;

/// First zero of the Bessel function `J₀`.
pub const J01: f64 = 2.404_825_557_695_773;

/// `a_m = λ₁(B₁) |B₁|^{2/m}`, the value for which balls are extremal.
pub fn faber_krahn_constant(m: usize) -> Result<f64> {
    let lambda = match m {
        1 => 0.5 * (0.5 * PI).powi(2),
        2 => 0.5 * J01 * J01,
        3 => 0.5 * PI * PI,
        _ => return Err(Error::UnsupportedModel(format!("Faber-Krahn constant for m = {m}"))),
    };
    Ok(lambda * unit_ball_volume(m).powf(2.0 / m as f64))
}

/// Open test set in Euclidean coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TestSet {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl TestSet {
    pub fn dim(&self) -> usize {
        match self {
            TestSet::Ball { center, .. } => center.len(),
            TestSet::Box { lower, .. } => lower.len(),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            TestSet::Ball { center, radius } => unit_ball_volume(center.len()) * radius.powi(center.len() as i32),
            TestSet::Box { lower, upper } => lower.iter().zip(upper).map(|(l, u)| u - l).product(),
        }
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            TestSet::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            TestSet::Box { lower, upper } => (lower.clone(), upper.clone()),
        }
    }

    /// Smallest half-width, the length scale of the grid.
    fn scale(&self) -> f64 {
        match self {
            TestSet::Ball { radius, .. } => *radius,
            TestSet::Box { lower, upper } => lower.iter().zip(upper).map(|(l, u)| 0.5 * (u - l)).fold(f64::INFINITY, f64::min),
        }
    }

    /// Distances from `p` to the boundary along `-e_k` and `+e_k`, or `None`
    /// when `p` is outside.
    fn axis_gaps(&self, p: &[f64], k: usize) -> Option<(f64, f64)> {
        match self {
            TestSet::Ball { center, radius } => {
                let off: Vec<f64> = p.iter().zip(center).map(|(a, b)| a - b).collect();
                let rest = dot(&off, &off) - off[k] * off[k];
                let chord = radius * radius - rest;
                if chord <= 0.0 {
                    return None;
                }
                let half = chord.sqrt();
                let (minus, plus) = (half + off[k], half - off[k]);
                (minus > 0.0 && plus > 0.0).then_some((minus, plus))
            }
            TestSet::Box { lower, upper } => {
                let (minus, plus) = (p[k] - lower[k], upper[k] - p[k]);
                (minus > 0.0 && plus > 0.0).then_some((minus, plus))
            }
        }
    }

    /// Whether the set lies in the closed ball `B(x, r)`.
    pub fn inside_ball(&self, x: &[f64], r: f64) -> bool {
        let slack = r * (1.0 + 1e-12);
        match self {
            TestSet::Ball { center, radius } => {
                let d: f64 = center.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                d + radius <= slack
            }
            TestSet::Box { lower, upper } => {
                let far: f64 = lower
                    .iter()
                    .zip(upper)
                    .zip(x)
                    .map(|((l, u), c)| (l - c).abs().max((u - c).abs()).powi(2))
                    .sum();
                far.sqrt() <= slack
            }
        }
    }
}

/// Shortley-Weller discretization of `-½Δ` with Dirichlet data, in
/// compressed rows.
struct Operator {
    diag: Vec<f64>,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Operator {
    fn len(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.len() {
            let mut s = self.diag[i] * x[i];
            for e in self.offsets[i]..self.offsets[i + 1] {
                s += self.vals[e] * x[self.cols[e]];
            }
            y[i] = s;
        }
    }
}

fn assemble(set: &TestSet, n: usize) -> Result<Operator> {
    let m = set.dim();
    if !(1..=3).contains(&m) {
        return Err(Error::UnsupportedModel(format!("finite differences in dimension {m}")));
    }
    let (lo, hi) = set.bounds();
    let h0 = set.scale() / n as f64;
    let counts: Vec<usize> = (0..m).map(|k| ((hi[k] - lo[k]) / h0).round().max(2.0) as usize).collect();
    let steps: Vec<f64> = (0..m).map(|k| (hi[k] - lo[k]) / counts[k] as f64).collect();
    let inner: Vec<usize> = counts.iter().map(|c| c - 1).collect();
    let total: usize = inner.iter().product();

    // nodes closer than 1% of a step to the boundary are treated as boundary
    let near = 0.01;
    let coords = |idx: usize, out: &mut [f64]| {
        let mut r = idx;
        for k in 0..m {
            out[k] = lo[k] + (r % inner[k] + 1) as f64 * steps[k];
            r /= inner[k];
        }
    };
    let mut number = vec![usize::MAX; total];
    let mut p = vec![0.0; m];
    let mut unknowns = 0;
    for (idx, slot) in number.iter_mut().enumerate() {
        coords(idx, &mut p);
        if (0..m).all(|k| set.axis_gaps(&p, k).is_some_and(|(a, b)| a.min(b) > near * steps[k])) {
            *slot = unknowns;
            unknowns += 1;
        }
    }
    if unknowns == 0 {
        return Err(Error::EmptyWindow);
    }
    let stride: Vec<usize> = (0..m).map(|k| inner[..k].iter().product()).collect();
    let mut op = Operator {
        diag: Vec::with_capacity(unknowns),
        offsets: vec![0],
        cols: Vec::new(),
        vals: Vec::new(),
    };
    for idx in 0..total {
        if number[idx] == usize::MAX {
            continue;
        }
        coords(idx, &mut p);
        let mut diag = 0.0;
        let mut r = idx;
        for k in 0..m {
            let ik = r % inner[k];
            r /= inner[k];
            let (gm, gp) = set.axis_gaps(&p, k).expect("interior node");
            let h = steps[k];
            let neighbour = |forward: bool| -> Option<usize> {
                let j = if forward {
                    (ik + 1 < inner[k]).then(|| idx + stride[k])?
                } else {
                    (ik > 0).then(|| idx - stride[k])?
                };
                (number[j] != usize::MAX).then_some(number[j])
            };
            let (left, right) = (neighbour(false), neighbour(true));
            let hm = if left.is_some() { h } else { gm.min(h) };
            let hp = if right.is_some() { h } else { gp.min(h) };
            let c = 1.0 / (hm + hp);
            diag += c * (1.0 / hm + 1.0 / hp);
            if let Some(j) = left {
                op.cols.push(j);
                op.vals.push(-c / hm);
            }
            if let Some(j) = right {
                op.cols.push(j);
                op.vals.push(-c / hp);
            }
        }
        op.diag.push(diag);
        op.offsets.push(op.cols.len());
    }
    Ok(op)
}

/// Jacobi-preconditioned BiCGSTAB for `A x = b`, warm-started from `x`.
fn bicgstab(a: &Operator, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> bool {
    let n = a.len();
    let pre = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = v[i] / a.diag[i];
        }
    };
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let bnorm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    if dot(&r, &r).sqrt() <= tol * bnorm {
        return true;
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            return false;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pre(&p, &mut y);
        a.apply(&y, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if dot(&s, &s).sqrt() <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return true;
        }
        pre(&s, &mut z);
        a.apply(&z, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return true;
        }
    }
    false
}

/// Smallest Dirichlet eigenvalue of `-½Δ` on `set` with `n` grid cells per
/// smallest half-width, by inverse iteration.
pub fn dirichlet_eigenvalue(set: &TestSet, n: usize) -> Result<f64> {
    let op = assemble(set, n.max(2))?;
    let len = op.len();
    let mut x = vec![1.0 / (len as f64).sqrt(); len];
    let mut y = vec![0.0; len];
    let mut lambda = f64::NAN;
    for it in 0..200 {
        // warm start: y ≈ x / λ once the iteration has settled
        let guess = if lambda.is_finite() { 1.0 / lambda } else { 0.0 };
        for i in 0..len {
            y[i] = guess * x[i];
        }
        if !bicgstab(&op, &x, &mut y, 1e-12, 20_000) {
            return Err(Error::Domain(format!("linear solver stalled in inverse iteration step {it}")));
        }
        let next = dot(&x, &x) / dot(&x, &y);
        let ny = dot(&y, &y).sqrt();
        for i in 0..len {
            x[i] = y[i] / ny;
        }
        let done = (next - lambda).abs() <= 1e-11 * next;
        lambda = next;
        if done {
            return Ok(lambda);
        }
    }
    Ok(lambda)
}

/// Ground energy at two resolutions with second-order extrapolation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenEstimate {
    pub coarse: f64,
    pub fine: f64,
    pub extrapolated: f64,
    pub cells: (usize, usize),
    /// `|fine - coarse| / fine`.
    pub relative_change: f64,
    /// Refinements agree within 5%.
    pub converged: bool,
}

pub fn dirichlet_ground_energy(set: &TestSet, n: usize) -> Result<EigenEstimate> {
    let coarse = dirichlet_eigenvalue(set, n)?;
    let fine = dirichlet_eigenvalue(set, 2 * n)?;
    let relative_change = (fine - coarse).abs() / fine;
    Ok(EigenEstimate {
        coarse,
        fine,
        extrapolated: fine + (fine - coarse) / 3.0,
        cells: (n, 2 * n),
        relative_change,
        converged: relative_change <= 0.05,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FkSetResult {
    pub set: TestSet,
    pub volume: f64,
    pub eigenvalue: EigenEstimate,
    /// `a μ(U)^{-2/m}`.
    pub bound: f64,
    /// `λ₁ - a μ(U)^{-2/m}` from the extrapolated eigenvalue.
    pub margin: f64,
    /// Discretization tolerance `|fine - coarse|`.
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FkReport {
    pub radius: f64,
    pub a: f64,
    pub results: Vec<FkSetResult>,
    /// Smallest margin relative to its bound.
    pub worst_relative_margin: f64,
    pub verdict: Verdict,
}

/// Checks `λ₁(U) ≥ a μ(U)^{-2/m}` on test sets inside `B(x, R)`.
///
/// A set passes when its margin is at least minus the discretization
/// tolerance; unconverged refinements make the result inconclusive.
pub fn faber_krahn_verify(
    model: &ManifoldModel,
    x: &[f64],
    fk: &FaberKrahnControlPair,
    sets: &[TestSet],
    n: usize,
) -> Result<FkReport> {
    let m = match model {
        ManifoldModel::Euclidean { dim } if *dim <= 3 => *dim,
        _ => return Err(Error::UnsupportedModel(format!("Faber-Krahn checks run on Euclidean(1..=3), not {model}"))),
    };
    model.check_coords(x)?;
    let mut results = Vec::with_capacity(sets.len());
    for set in sets {
        if set.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: set.dim(),
            });
        }
        if !set.inside_ball(x, fk.radius) {
            return Err(Error::Domain(format!("test set {set:?} leaves B(x, {})", fk.radius)));
        }
        let volume = set.volume();
        let eigenvalue = dirichlet_ground_energy(set, n)?;
        let bound = fk.a * volume.powf(-2.0 / m as f64);
        let margin = eigenvalue.extrapolated - bound;
        let tolerance = (eigenvalue.fine - eigenvalue.coarse).abs();
        let verdict = if !eigenvalue.converged {
            Verdict::Inconclusive
        } else {
            Verdict::from_bool(margin >= -tolerance)
        };
        results.push(FkSetResult {
            set: set.clone(),
            volume,
            eigenvalue,
            bound,
            margin,
            tolerance,
            verdict,
        });
    }
    let worst_relative_margin = results.iter().map(|r| r.margin / r.bound).fold(f64::INFINITY, f64::min);
    let verdict = results.iter().fold(Verdict::Pass, |v, r| v.and(r.verdict));
    Ok(FkReport {
        radius: fk.radius,
        a: fk.a,
        results,
        worst_relative_margin,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_matches_separable_value() {
        let set = TestSet::Box {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 2.0],
        };
        let exact = 0.5 * PI * PI * (1.0 + 0.25);
        let lam = dirichlet_eigenvalue(&set, 16).unwrap();
        assert!((lam / exact - 1.0).abs() < 5e-3, "{lam} {exact}");
    }

    #[test]
    fn disk_eigenvalue() {
        let disk = TestSet::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let est = dirichlet_ground_energy(&disk, 20).unwrap();
        let exact = 0.5 * J01 * J01;
        assert!((est.extrapolated / exact - 1.0).abs() < 5e-3, "{est:?}");
        assert!(est.converged);
    }

    #[test]
    fn constants_make_balls_extremal() {
        let a2 = faber_krahn_constant(2).unwrap();
        assert!((a2 - 0.5 * J01 * J01 * PI).abs() < 1e-12);
        let a3 = faber_krahn_constant(3).unwrap();
        assert!((a3 - 0.5 * PI * PI * (4.0 * PI / 3.0).powf(2.0 / 3.0)).abs() < 1e-12);
    }
}
