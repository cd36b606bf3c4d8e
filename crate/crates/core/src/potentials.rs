//! Potentials `w`, their Coulomb building blocks and weighted `L^q` norms.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::geometry::{split_top_level, unit_ball_volume, ManifoldModel, Point, QuadratureGrid};
use crate::heat_kernel::{polar_rule, radial_jacobian, HeatKernelEngine, RuleOptions};
use crate::quadrature::adaptive;

/// Region used by indicators and restrictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `{y : <normal, y> <= offset}` in chart coordinates.
    HalfSpace { normal: Vec<f64>, offset: f64 },
}

impl Region {
    pub fn contains(&self, model: &ManifoldModel, y: &[f64]) -> bool {
        match self {
            Region::Ball { center, radius } => model.dist(center, y) <= *radius,
            Region::Box { lower, upper } => y
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (a, b))| *a <= *v && *v <= *b),
            Region::HalfSpace { normal, offset } => normal.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() <= *offset,
        }
    }
}

/// Canonical projection of a power `B^of` onto one factor or a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Projection {
    Factor { index: usize, of: usize },
    Pair { i: usize, j: usize, of: usize },
}

/// `d ↦ V(d)` for the Coulomb potential of a radial heat kernel, tabulated
/// as `log(d·V(d))` on a logarithmic grid.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub model: ManifoldModel,
    log_lo: f64,
    log_step: f64,
    scaled: Vec<f64>,
    /// Largest analytic tail bound among the tabulated integrals.
    pub tail_bound: f64,
}

const PROFILE_LO: f64 = 1e-4;
const PROFILE_HI: f64 = 50.0;
const PROFILE_POINTS: usize = 1000;

impl RadialProfile {
    pub fn build(engine: &HeatKernelEngine) -> Result<Self> {
        let x = crate::geometry::canonical_point(&engine.model);
        let frame = engine.model.tangent_frame(&x.coords);
        let log_lo = PROFILE_LO.ln();
        let log_step = (PROFILE_HI.ln() - log_lo) / (PROFILE_POINTS - 1) as f64;
        let mut scaled = Vec::with_capacity(PROFILE_POINTS);
        let mut tail_bound: f64 = 0.0;
        let mut y = vec![0.0; engine.model.coord_len()];
        for k in 0..PROFILE_POINTS {
            let d = (log_lo + log_step * k as f64).exp();
            if let ManifoldModel::Hyperbolic3 = engine.model {
                // vertical geodesic: exact distance without the hyperboloid round trip
                y.copy_from_slice(&[0.0, 0.0, d.exp()]);
            } else {
                let v: Vec<f64> = frame[0].iter().map(|e| e * d).collect();
                engine.model.exp_into(&x.coords, &v, &mut y);
            }
            let c = coulomb(engine, &x, &Point::new(y.clone()), 1e-10)?;
            tail_bound = tail_bound.max(c.tail_bound);
            scaled.push((d * c.value).ln());
        }
        Ok(Self {
            model: engine.model.clone(),
            log_lo,
            log_step,
            scaled,
            tail_bound,
        })
    }

    /// `V(d)`, `+∞` at `d = 0`.
    pub fn eval(&self, d: f64) -> f64 {
        if d <= 0.0 {
            return f64::INFINITY;
        }
        let n = self.scaled.len();
        let u = (d.ln() - self.log_lo) / self.log_step;
        let node = |k: usize| (self.log_lo + self.log_step * k as f64).exp();
        let g = if u <= 0.0 {
            let (g0, g1) = (self.scaled[0].exp(), self.scaled[1].exp());
            return (g0 + (g1 - g0) / (node(1) - node(0)) * (d - node(0))) / d;
        } else if u >= (n - 1) as f64 {
            // fit log V = a + b d + c log d through the last three nodes
            let idx = [n - 41, n - 21, n - 1];
            let ds = idx.map(node);
            let m = nalgebra::Matrix3::from_fn(|r, k| [1.0, ds[r], ds[r].ln()][k]);
            let rhs = nalgebra::Vector3::from_fn(|r, _| self.scaled[idx[r]] - ds[r].ln());
            let Some(coef) = m.lu().solve(&rhs) else {
                return self.scaled[n - 1].exp() / d;
            };
            return (coef[0] + coef[1] * d + coef[2] * d.ln()).exp();
        } else {
            let i = (u.floor() as usize).min(n - 2);
            let f = u - i as f64;
            let p = |k: isize| self.scaled[(i as isize + k).clamp(0, n as isize - 1) as usize];
            let (p0, p1, p2, p3) = (p(-1), p(0), p(1), p(2));
            // Catmull-Rom
            p1 + 0.5 * f * (p2 - p0 + f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + f * (3.0 * (p1 - p2) + p3 - p0)))
        };
        g.exp() / d
    }
}

/// Scalar field on a model.
#[derive(Debug, Clone)]
pub enum Potential {
    Constant(f64),
    /// `d(y, center)^(-exponent)`.
    RadialPower { center: Vec<f64>, exponent: f64 },
    Indicator(Region),
    /// `V(y, center)`.
    Coulomb { center: Vec<f64>, profile: Arc<RadialProfile> },
    /// `V(y_1, y_2)` on `B × B`.
    Interaction { profile: Arc<RadialProfile> },
    /// `inner ∘ π` where `base` is the factor model.
    Pullback {
        projection: Projection,
        base: ManifoldModel,
        inner: Box<Potential>,
    },
    Sum(Vec<Potential>),
    Scale(f64, Box<Potential>),
    /// `1_region · inner`.
    Restrict { region: Region, inner: Box<Potential> },
    /// `inner` clipped to `[-cap, cap]`.
    Cap { cap: f64, inner: Box<Potential> },
    /// A chart coordinate, e.g. `cos θ` on the circle.
    Coordinate(usize),
    PositivePart(Box<Potential>),
    NegativePart(Box<Potential>),
}

impl Potential {
    pub fn zero() -> Self {
        Potential::Constant(0.0)
    }

    pub fn scale(c: f64, w: Potential) -> Self {
        Potential::Scale(c, Box::new(w))
    }

    pub fn cap(cap: f64, w: Potential) -> Self {
        Potential::Cap { cap, inner: Box::new(w) }
    }

    pub fn positive_part(self) -> Self {
        Potential::PositivePart(Box::new(self))
    }

    pub fn negative_part(self) -> Self {
        Potential::NegativePart(Box::new(self))
    }

    pub fn restrict(self, region: Region) -> Self {
        Potential::Restrict {
            region,
            inner: Box::new(self),
        }
    }

    /// `w(y)`; singular centres give `+∞` (or `-∞` under negative scaling).
    pub fn eval(&self, model: &ManifoldModel, y: &[f64]) -> f64 {
        match self {
            Potential::Constant(c) => *c,
            Potential::RadialPower { center, exponent } => {
                let d = model.dist(center, y);
                if d == 0.0 {
                    f64::INFINITY
                } else {
                    d.powf(-exponent)
                }
            }
            Potential::Indicator(region) => {
                if region.contains(model, y) {
                    1.0
                } else {
                    0.0
                }
            }
            Potential::Coulomb { center, profile } => profile.eval(profile.model.dist(center, y)),
            Potential::Interaction { profile } => {
                let n = profile.model.coord_len();
                profile.eval(profile.model.dist(&y[..n], &y[n..]))
            }
            Potential::Pullback {
                projection,
                base,
                inner,
            } => {
                let n = base.coord_len();
                match projection {
                    Projection::Factor { index, .. } => inner.eval(base, &y[index * n..(index + 1) * n]),
                    Projection::Pair { i, j, .. } => {
                        let mut pair = Vec::with_capacity(2 * n);
                        pair.extend_from_slice(&y[i * n..(i + 1) * n]);
                        pair.extend_from_slice(&y[j * n..(j + 1) * n]);
                        inner.eval(base, &pair)
                    }
                }
            }
            Potential::Sum(terms) => terms.iter().map(|w| w.eval(model, y)).sum(),
            Potential::Scale(c, inner) => {
                if *c == 0.0 {
                    0.0
                } else {
                    c * inner.eval(model, y)
                }
            }
            Potential::Restrict { region, inner } => {
                if region.contains(model, y) {
                    inner.eval(model, y)
                } else {
                    0.0
                }
            }
            Potential::Cap { cap, inner } => inner.eval(model, y).clamp(-cap, *cap),
            Potential::Coordinate(i) => y[*i],
            Potential::PositivePart(inner) => inner.eval(model, y).max(0.0),
            Potential::NegativePart(inner) => (-inner.eval(model, y)).max(0.0),
        }
    }

    pub fn eval_point(&self, model: &ManifoldModel, y: &Point) -> Result<f64> {
        model.check_point(y)?;
        Ok(self.eval(model, &y.coords))
    }

    /// Isolated singular points with their local blow-up exponent `β`
    /// (`|w| ~ d^-β`). Pullbacks have fibre singularities and report none.
    pub fn singularities(&self) -> Vec<(Vec<f64>, f64)> {
        let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
        let merge = |c: Vec<f64>, b: f64, out: &mut Vec<(Vec<f64>, f64)>| {
            if let Some(e) = out.iter_mut().find(|e| e.0 == c) {
                e.1 = e.1.max(b);
            } else {
                out.push((c, b));
            }
        };
        match self {
            Potential::RadialPower { center, exponent } => merge(center.clone(), *exponent, &mut out),
            Potential::Coulomb { center, .. } => merge(center.clone(), 1.0, &mut out),
            Potential::Sum(terms) => {
                for t in terms {
                    for (c, b) in t.singularities() {
                        merge(c, b, &mut out);
                    }
                }
            }
            Potential::Scale(c, inner) if *c != 0.0 => return inner.singularities(),
            Potential::Restrict { inner, .. } | Potential::PositivePart(inner) | Potential::NegativePart(inner) => {
                return inner.singularities()
            }
            _ => {}
        }
        out
    }

    /// Points that a quadrature rule centred at `x` should resolve. Factor
    /// singularities of pullbacks are lifted using the other coordinates of
    /// `x`.
    pub fn focus(&self, x: &[f64]) -> Vec<Vec<f64>> {
        match self {
            Potential::Pullback {
                projection: Projection::Factor { index, .. },
                base,
                inner,
            } => {
                let n = base.coord_len();
                inner
                    .focus(&x[index * n..(index + 1) * n])
                    .into_iter()
                    .map(|c| {
                        let mut p = x.to_vec();
                        p[index * n..(index + 1) * n].copy_from_slice(&c);
                        p
                    })
                    .collect()
            }
            Potential::Sum(terms) => terms.iter().flat_map(|t| t.focus(x)).collect(),
            Potential::Scale(_, inner)
            | Potential::Restrict { inner, .. }
            | Potential::PositivePart(inner)
            | Potential::NegativePart(inner)
            | Potential::Cap { inner, .. } => inner.focus(x),
            _ => self.singularities().into_iter().map(|(c, _)| c).collect(),
        }
    }

    /// Distances from `x` of jump surfaces that are spheres (ball indicators).
    pub fn jumps(&self, model: &ManifoldModel, x: &[f64]) -> Vec<f64> {
        let ball = |region: &Region| match region {
            Region::Ball { center, radius } => {
                let d = model.dist(x, center);
                vec![(d - radius).abs(), d + radius]
            }
            _ => Vec::new(),
        };
        match self {
            Potential::Indicator(region) => ball(region),
            Potential::Restrict { region, inner } => {
                let mut out = ball(region);
                out.extend(inner.jumps(model, x));
                out
            }
            Potential::Pullback {
                projection: Projection::Factor { index, .. },
                base,
                inner,
            } => {
                let n = base.coord_len();
                inner.jumps(base, &x[index * n..(index + 1) * n])
            }
            Potential::Sum(terms) => terms.iter().flat_map(|t| t.jumps(model, x)).collect(),
            Potential::Scale(_, inner)
            | Potential::PositivePart(inner)
            | Potential::NegativePart(inner)
            | Potential::Cap { inner, .. } => inner.jumps(model, x),
            _ => Vec::new(),
        }
    }

    /// `base` extended with the focus points and jump radii of `w` seen from `x`.
    pub fn rule_options(&self, model: &ManifoldModel, x: &[f64], base: &RuleOptions) -> RuleOptions {
        let mut opts = base.clone();
        opts.focus.extend(self.focus(x));
        opts.radii.extend(self.jumps(model, x));
        opts
    }

    /// Upper bound of `|w|` when one is known cheaply.
    pub fn sup_abs(&self) -> Option<f64> {
        match self {
            Potential::Constant(c) => Some(c.abs()),
            Potential::Indicator(_) => Some(1.0),
            Potential::Cap { cap, inner } => Some(inner.sup_abs().map_or(*cap, |s| s.min(*cap))),
            Potential::Scale(c, inner) => inner.sup_abs().map(|s| c.abs() * s),
            Potential::Sum(terms) => terms.iter().map(|t| t.sup_abs()).sum(),
            Potential::Restrict { inner, .. }
            | Potential::PositivePart(inner)
            | Potential::NegativePart(inner)
            | Potential::Pullback { inner, .. } => inner.sup_abs(),
            Potential::Coordinate(_) => None,
            _ => None,
        }
    }

    /// Parses the manifest syntax (see the crate README for the grammar).
    pub fn parse(input: &str, model: &ManifoldModel) -> Result<Self> {
        parse_potential(input.trim(), model)
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let csv = |v: &[f64]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        match self {
            Potential::Constant(c) => write!(f, "const:{c}"),
            Potential::RadialPower { center, exponent } => {
                write!(f, "radialpower:beta={exponent}:center={}", csv(center))
            }
            Potential::Indicator(Region::Ball { center, radius }) => {
                write!(f, "indicator:ball:center={}:radius={radius}", csv(center))
            }
            Potential::Indicator(Region::Box { lower, upper }) => {
                write!(f, "indicator:box:lower={}:upper={}", csv(lower), csv(upper))
            }
            Potential::Indicator(Region::HalfSpace { normal, offset }) => {
                write!(f, "indicator:halfspace:normal={}:offset={offset}", csv(normal))
            }
            Potential::Coulomb { center, .. } => write!(f, "coulomb:center={}", csv(center)),
            Potential::Interaction { .. } => write!(f, "interaction"),
            Potential::Pullback {
                projection: Projection::Factor { index, .. },
                inner,
                ..
            } => write!(f, "pullback:{}:{inner}", index + 1),
            Potential::Pullback {
                projection: Projection::Pair { i, j, .. },
                inner,
                ..
            } => write!(f, "pairpullback:{},{}:{inner}", i + 1, j + 1),
            Potential::Sum(terms) => {
                let parts: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
                write!(f, "sum[{}]", parts.join(";"))
            }
            Potential::Scale(c, inner) => write!(f, "scale:{c}:{inner}"),
            Potential::Restrict { region, inner } => {
                let r = Potential::Indicator(region.clone()).to_string();
                write!(f, "restrict[{};{inner}]", r.trim_start_matches("indicator:"))
            }
            Potential::Cap { cap, inner } => write!(f, "cap:{cap}:{inner}"),
            Potential::Coordinate(i) => write!(f, "coord:{i}"),
            Potential::PositivePart(inner) => write!(f, "pos:{inner}"),
            Potential::NegativePart(inner) => write!(f, "neg:{inner}"),
        }
    }
}

fn parse_csv(input: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| Error::spec(input, format!("bad number `{c}`"))))
        .collect()
}

fn parse_num(input: &str, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::spec(input, format!("bad number `{s}`")))
}

fn key<'a>(input: &str, part: &'a str, name: &str) -> Result<&'a str> {
    part.strip_prefix(name)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::spec(input, format!("expected `{name}=`")))
}

fn parse_region(input: &str, parts: &[&str]) -> Result<Region> {
    match parts {
        ["ball", c, r] => Ok(Region::Ball {
            center: parse_csv(input, key(input, c, "center")?)?,
            radius: parse_num(input, key(input, r, "radius")?)?,
        }),
        ["box", l, u] => Ok(Region::Box {
            lower: parse_csv(input, key(input, l, "lower")?)?,
            upper: parse_csv(input, key(input, u, "upper")?)?,
        }),
        ["halfspace", n, o] => Ok(Region::HalfSpace {
            normal: parse_csv(input, key(input, n, "normal")?)?,
            offset: parse_num(input, key(input, o, "offset")?)?,
        }),
        _ => Err(Error::spec(input, "regions are ball:center=..:radius=.., box:lower=..:upper=.. or halfspace:normal=..:offset=..")),
    }
}

/// Splits a right-nested power `B × (B × ...)` into `(B, count)`.
pub fn power_decomposition(model: &ManifoldModel) -> Option<(ManifoldModel, usize)> {
    let mut factors = Vec::new();
    let mut cur = model;
    while let ManifoldModel::Product(l, r) = cur {
        factors.push(l.as_ref());
        cur = r;
    }
    factors.push(cur);
    let base = factors[0];
    factors.iter().all(|f| *f == base).then(|| (base.clone(), factors.len()))
}

fn parse_potential(s: &str, model: &ManifoldModel) -> Result<Potential> {
    let check_len = |v: &Vec<f64>| {
        if v.len() == model.coord_len() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: model.coord_len(),
                found: v.len(),
            })
        }
    };
    if s == "zero" {
        return Ok(Potential::zero());
    }
    if s == "cos" {
        return Ok(Potential::Coordinate(0));
    }
    if let Some(body) = s.strip_prefix("sum[").and_then(|b| b.strip_suffix(']')) {
        let terms = split_top_level(body, ';')
            .iter()
            .filter(|t| !t.is_empty())
            .map(|t| parse_potential(t, model))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Potential::Sum(terms));
    }
    if let Some(body) = s.strip_prefix("restrict[").and_then(|b| b.strip_suffix(']')) {
        let parts = split_top_level(body, ';');
        if parts.len() != 2 {
            return Err(Error::spec(s, "restrict[<region>;<potential>]"));
        }
        let rp: Vec<&str> = parts[0].split(':').collect();
        return Ok(parse_potential(&parts[1], model)?.restrict(parse_region(s, &rp)?));
    }
    let (head, rest) = s.split_once(':').unwrap_or((s, ""));
    match head {
        "const" | "constant" => Ok(Potential::Constant(parse_num(s, rest)?)),
        "coord" => rest
            .parse()
            .map(Potential::Coordinate)
            .map_err(|_| Error::spec(s, "bad coordinate index")),
        "radialpower" => {
            let parts: Vec<&str> = rest.split(':').collect();
            let [b, c] = parts.as_slice() else {
                return Err(Error::spec(s, "radialpower:beta=<b>:center=<coords>"));
            };
            let exponent = parse_num(s, key(s, b, "beta")?)?;
            if !(exponent > 0.0) {
                return Err(Error::spec(s, "beta must be positive"));
            }
            let center = parse_csv(s, key(s, c, "center")?)?;
            check_len(&center)?;
            model.check_coords(&center)?;
            Ok(Potential::RadialPower { center, exponent })
        }
        "coulomb" => {
            let center = parse_csv(s, key(s, rest, "center")?)?;
            check_len(&center)?;
            model.check_coords(&center)?;
            let profile = Arc::new(RadialProfile::build(&HeatKernelEngine::new(model))?);
            Ok(Potential::Coulomb { center, profile })
        }
        "indicator" => {
            let parts: Vec<&str> = rest.split(':').collect();
            Ok(Potential::Indicator(parse_region(s, &parts)?))
        }
        "scale" | "cap" => {
            let (c, inner) = rest.split_once(':').ok_or_else(|| Error::spec(s, "expected <c>:<potential>"))?;
            let c = parse_num(s, c)?;
            let inner = parse_potential(inner, model)?;
            Ok(if head == "scale" { Potential::scale(c, inner) } else { Potential::cap(c, inner) })
        }
        "pos" => Ok(parse_potential(rest, model)?.positive_part()),
        "neg" => Ok(parse_potential(rest, model)?.negative_part()),
        "pullback" => {
            let (k, inner) = rest.split_once(':').ok_or_else(|| Error::spec(s, "pullback:<factor>:<potential>"))?;
            let (base, count) = power_decomposition(model)
                .filter(|(_, c)| *c >= 2)
                .ok_or_else(|| Error::spec(s, "pullback needs a product of identical factors"))?;
            let k: usize = k.parse().map_err(|_| Error::spec(s, "bad factor index"))?;
            if k == 0 || k > count {
                return Err(Error::spec(s, format!("factor index must lie in 1..={count}")));
            }
            let inner = parse_potential(inner, &base)?;
            Ok(Potential::Pullback {
                projection: Projection::Factor { index: k - 1, of: count },
                base,
                inner: Box::new(inner),
            })
        }
        "manybody" => {
            let parts: Vec<&str> = rest.split(':').collect();
            let electrons: usize = key(s, parts.first().copied().unwrap_or(""), "electrons")?
                .parse()
                .map_err(|_| Error::spec(s, "bad electron count"))?;
            let nuclei = match parts.get(1) {
                Some(p) => key(s, p, "nuclei")?
                    .split('|')
                    .filter(|c| !c.is_empty())
                    .map(|c| parse_csv(s, c).map(Point::new))
                    .collect::<Result<Vec<_>>>()?,
                None => Vec::new(),
            };
            many_body_assemble(model, electrons, &nuclei)
        }
        _ => Err(Error::spec(s, format!("unknown potential `{head}`"))),
    }
}

/// Result of [`coulomb`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoulombValue {
    pub value: f64,
    pub quadrature_error: f64,
    pub tail_bound: f64,
    pub s_max: f64,
}

fn coulomb_supported(model: &ManifoldModel) -> bool {
    fn flat_open(m: &ManifoldModel) -> bool {
        match m {
            ManifoldModel::Euclidean { .. } => true,
            ManifoldModel::Product(l, r) => flat_open(l) && flat_open(r),
            _ => false,
        }
    }
    model.dim() == 3 && (matches!(model, ManifoldModel::Hyperbolic3) || flat_open(model))
}

/// `V(x, y) = (1/2) ∫_0^∞ p(s, x, y) ds` by adaptive quadrature in `log s`.
///
/// The returned value omits the two analytic tails, whose combined bound is
/// reported; `s_max` grows until that bound is below `tol·value`.
pub fn coulomb(engine: &HeatKernelEngine, x: &Point, y: &Point, tol: f64) -> Result<CoulombValue> {
    let model = &engine.model;
    if !coulomb_supported(model) {
        return Err(Error::UnsupportedModel(format!(
            "{model}: the Coulomb integral needs p(t,x,x) <= C t^(-3/2) for all t"
        )));
    }
    let d = model.distance(x, y)?;
    if d == 0.0 {
        return Err(Error::Singularity("Coulomb potential at x = y".into()));
    }
    let c = (2.0 * PI).powf(-1.5);
    let decay = if matches!(model, ManifoldModel::Hyperbolic3) { 0.5 } else { 0.0 };
    let b = 0.5 * d * d;
    // radial factor of the kernel in front of the Gaussian: d/sinh d on H^3
    let ratio = if decay > 0.0 { d / d.sinh() } else { 1.0 };
    // s^(-3/2) e^(-b/s) integrates to b^(-1/2) Γ(1/2, b/s) on (0, s)
    let lower_tail = |s: f64| 0.5 * c * ratio * gamma(0.5) * gamma_ur(0.5, b / s) / b.sqrt();
    let upper_tail = |s: f64| {
        let plain = c / s.sqrt();
        if decay > 0.0 {
            plain.min(0.5 * c * s.powf(-1.5) * (-decay * s).exp() / decay)
        } else {
            plain
        }
    };
    let integrand = |u: f64| {
        let s = u.exp();
        0.5 * s * engine.value(s, &x.coords, &y.coords).map(|v| v.0).unwrap_or(f64::NAN)
    };
    let mut s_lo = b / 40.0;
    let mut s_hi = (100.0 * d * d).max(10.0);
    let first = adaptive(integrand, s_lo.ln(), s_hi.ln(), 1e-300, 0.01 * tol);
    let (mut value, mut error) = (first.value, first.error);
    while lower_tail(s_lo) > tol * value && s_lo > 1e-300 {
        let next = 0.25 * s_lo;
        let piece = adaptive(integrand, next.ln(), s_lo.ln(), 1e-300, 0.01 * tol);
        value += piece.value;
        error += piece.error;
        s_lo = next;
    }
    while upper_tail(s_hi) > tol * value && s_hi < 1e300 {
        let next = s_hi * 1e4;
        let piece = adaptive(integrand, s_hi.ln(), next.ln(), 1e-300, 0.01 * tol);
        value += piece.value;
        error += piece.error;
        s_hi = next;
    }
    if !value.is_finite() {
        return Err(Error::Domain("Coulomb quadrature did not converge".into()));
    }
    Ok(CoulombValue {
        value,
        quadrature_error: error,
        tail_bound: lower_tail(s_lo) + upper_tail(s_hi),
        s_max: s_hi,
    })
}

/// Assembles the many-body potential on `B^electrons`: attraction `-V` to
/// each nucleus for every electron and repulsion `+V` for every pair.
pub fn many_body_assemble(model: &ManifoldModel, electrons: usize, nuclei: &[Point]) -> Result<Potential> {
    if electrons == 0 {
        return Err(Error::Domain("need at least one electron".into()));
    }
    let (base, count) = power_decomposition(model).ok_or_else(|| {
        Error::UnsupportedModel(format!("{model} is not a power of a single factor"))
    })?;
    let base = if count == electrons {
        base
    } else if electrons == 1 {
        model.clone()
    } else {
        return Err(Error::DimensionMismatch {
            expected: electrons,
            found: count,
        });
    };
    if base.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: base.dim(),
        });
    }
    for n in nuclei {
        base.check_point(n)?;
    }
    let mut terms = Vec::new();
    if !nuclei.is_empty() || electrons > 1 {
        let profile = Arc::new(RadialProfile::build(&HeatKernelEngine::new(&base))?);
        for i in 0..electrons {
            for n in nuclei {
                let attract = Potential::scale(
                    -1.0,
                    Potential::Coulomb {
                        center: n.coords.clone(),
                        profile: profile.clone(),
                    },
                );
                terms.push(Potential::Pullback {
                    projection: Projection::Factor { index: i, of: electrons },
                    base: base.clone(),
                    inner: Box::new(attract),
                });
            }
        }
        for i in 0..electrons {
            for j in i + 1..electrons {
                terms.push(Potential::Pullback {
                    projection: Projection::Pair { i, j, of: electrons },
                    base: base.clone(),
                    inner: Box::new(Potential::Interaction {
                        profile: profile.clone(),
                    }),
                });
            }
        }
    }
    Ok(Potential::Sum(terms))
}

/// `(∫ |w|^q I dμ)^(1/q)` over a grid window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedLqNorm {
    pub q: f64,
    pub value: f64,
    pub diverges: bool,
    /// Description of the weight `I`.
    pub weight: String,
    pub grid_nodes: usize,
    pub resolution: f64,
    pub excision_radius: f64,
    /// Contribution of the excised balls to `∫ |w|^q I dμ`.
    pub excised: f64,
}

/// Pointwise weight `I(y)`.
pub type Weight<'a> = &'a dyn Fn(&[f64]) -> f64;

/// Weighted `L^q` norm on a grid.
///
/// Balls of radius `2h` around singular points are removed from the grid
/// and integrated separately: in closed form for a bare radial power on a
/// flat model with `I ≡ 1`, otherwise by a polar tanh-sinh rule.
pub fn lq_norm(
    w: &Potential,
    model: &ManifoldModel,
    q: f64,
    weight: Option<Weight>,
    grid: &QuadratureGrid,
) -> Result<WeightedLqNorm> {
    if !(q >= 1.0) {
        return Err(Error::Domain(format!("L^q needs q >= 1, got {q}")));
    }
    let m = model.dim() as f64;
    let eps = 2.0 * grid.resolution;
    let sing: Vec<(Vec<f64>, f64)> = w
        .singularities()
        .into_iter()
        .filter(|(c, _)| grid.nodes.iter().any(|y| model.dist(c, &y.coords) <= eps))
        .collect();
    let weight_at = |y: &[f64]| weight.map_or(1.0, |f| f(y));
    let mut out = WeightedLqNorm {
        q,
        value: 0.0,
        diverges: false,
        weight: if weight.is_some() { "I".into() } else { "1".into() },
        grid_nodes: grid.len(),
        resolution: grid.resolution,
        excision_radius: if sing.is_empty() { 0.0 } else { eps },
        excised: 0.0,
    };
    if sing.iter().any(|(_, b)| b * q >= m) {
        out.diverges = true;
        out.value = f64::INFINITY;
        return Ok(out);
    }
    let mut sum = 0.0;
    for (y, wt) in grid.nodes.iter().zip(&grid.weights) {
        if sing.iter().any(|(c, _)| model.dist(c, &y.coords) < eps) {
            continue;
        }
        sum += wt * w.eval(model, &y.coords).abs().powf(q) * weight_at(&y.coords);
    }
    for (c, _) in &sing {
        let closed = match w {
            Potential::RadialPower { exponent, .. } if weight.is_none() && model.is_flat() && model.dim() <= 3 => {
                Some(exponent)
            }
            _ => None,
        };
        let part = if let Some(exponent) = closed {
            let k = m - exponent * q;
            m * unit_ball_volume(model.dim()) * eps.powf(k) / k
        } else {
            let opts = RuleOptions {
                reach: 4.0,
                ..RuleOptions::default()
            };
            let rule = polar_rule(model, c, eps, &[], &|r| radial_jacobian(model, r), &opts, 0.0)?;
            rule.integrate(|y| {
                let v = w.eval(model, y).abs().powf(q) * weight_at(y);
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            })
        };
        out.excised += part;
        sum += part;
    }
    out.value = sum.powf(1.0 / q);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Window};

    #[test]
    fn evaluation_examples() {
        let e3 = ManifoldModel::euclidean(3);
        assert_eq!(Potential::Constant(5.0).eval(&e3, &[1.0, 2.0, 3.0]), 5.0);
        let w = Potential::RadialPower {
            center: vec![0.0; 3],
            exponent: 1.0,
        };
        assert_eq!(w.eval(&e3, &[2.0, 0.0, 0.0]), 0.5);
        assert_eq!(w.eval(&e3, &[0.0; 3]), f64::INFINITY);
    }

    #[test]
    fn pullback_reads_one_factor() {
        let e3 = ManifoldModel::euclidean(3);
        let p = ManifoldModel::power(&e3, 2);
        let w = Potential::parse("pullback:1:radialpower:beta=1:center=0,0,0", &p).unwrap();
        let a = w.eval(&p, &[2.0, 0.0, 0.0, 5.0, 5.0, 5.0]);
        let b = w.eval(&p, &[2.0, 0.0, 0.0, -1.0, 0.3, 9.0]);
        assert_eq!(a, 0.5);
        assert_eq!(a, b);
    }

    #[test]
    fn parse_round_trip() {
        let e3 = ManifoldModel::euclidean(3);
        for s in [
            "const:2.5",
            "radialpower:beta=1.5:center=0,0,0",
            "indicator:ball:center=0,0,0:radius=1",
            "sum[const:1;scale:-2:indicator:box:lower=0,0,0:upper=1,1,1]",
            "cap:10:radialpower:beta=2:center=1,0,0",
            "neg:const:-3",
        ] {
            let w = Potential::parse(s, &e3).unwrap();
            assert_eq!(w.to_string(), s);
        }
        assert!(Potential::parse("radialpower:beta=1:center=0,0", &e3).is_err());
        assert!(Potential::parse("wobble", &e3).is_err());
    }

    #[test]
    fn lq_norm_of_inverse_distance() {
        // ∫_{B_1} |y|^{-2} dy = 4π
        let e3 = ManifoldModel::euclidean(3);
        let grid = build_grid(&e3, 0.05, &Window::ball(Point::origin(3), 1.0)).unwrap();
        let w = Potential::RadialPower {
            center: vec![0.0; 3],
            exponent: 1.0,
        };
        let n = lq_norm(&w, &e3, 2.0, None, &grid).unwrap();
        assert!((n.value - (4.0 * PI).sqrt()).abs() < 0.02 * (4.0 * PI).sqrt(), "{}", n.value);
        let w2 = Potential::RadialPower {
            center: vec![0.0; 3],
            exponent: 2.0,
        };
        assert!(lq_norm(&w2, &e3, 2.0, None, &grid).unwrap().diverges);
        assert_eq!(lq_norm(&Potential::zero(), &e3, 2.0, None, &grid).unwrap().value, 0.0);
    }

    #[test]
    fn coulomb_closed_forms() {
        let e = HeatKernelEngine::new(&ManifoldModel::euclidean(3));
        let x = Point::origin(3);
        for r in [0.1, 1.0, 10.0] {
            let y = Point::new(vec![0.0, r, 0.0]);
            let v = coulomb(&e, &x, &y, 1e-10).unwrap();
            let exact = 1.0 / (4.0 * PI * r);
            assert!((v.value / exact - 1.0).abs() < 1e-8, "r={r}: {} {exact}", v.value);
        }
        let h = HeatKernelEngine::new(&ManifoldModel::Hyperbolic3);
        let x = Point::new(vec![0.0, 0.0, 1.0]);
        let y = Point::new(vec![0.0, 0.0, 1f64.exp()]);
        let v = coulomb(&h, &x, &y, 1e-10).unwrap();
        let exact = (-1f64).exp() / (4.0 * PI * 1f64.sinh());
        assert!((v.value / exact - 1.0).abs() < 1e-8, "{} {exact}", v.value);
        assert!(matches!(coulomb(&e, &x_e(), &x_e(), 1e-10), Err(Error::Singularity(_))));
        let s = HeatKernelEngine::new(&ManifoldModel::Sphere2);
        assert!(matches!(
            coulomb(&s, &Point::north_pole(), &Point::on_sphere(1.0, 0.0), 1e-10),
            Err(Error::UnsupportedModel(_))
        ));
    }

    fn x_e() -> Point {
        Point::origin(3)
    }

    #[test]
    fn profile_interpolates_the_quadrature() {
        let h = HeatKernelEngine::new(&ManifoldModel::Hyperbolic3);
        let prof = RadialProfile::build(&h).unwrap();
        for d in [1e-5f64, 0.003, 0.5, 2.2, 7.0, 60.0] {
            let exact = (-d).exp() / (4.0 * PI * d.sinh());
            assert!((prof.eval(d) / exact - 1.0).abs() < 1e-6, "d={d}: {} {exact}", prof.eval(d));
        }
    }

    #[test]
    fn many_body_examples() {
        let e3 = ManifoldModel::euclidean(3);
        let one = many_body_assemble(&e3, 1, &[Point::origin(3)]).unwrap();
        let v = one.eval(&e3, &[0.0, 0.0, 2.0]);
        assert!((v + 1.0 / (8.0 * PI)).abs() < 1e-9);
        let p2 = ManifoldModel::power(&e3, 2);
        let pair = many_body_assemble(&p2, 2, &[]).unwrap();
        let v = pair.eval(&p2, &[0.0, 0.0, 0.0, 0.0, 0.5, 0.0]);
        assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-9);
        let empty = many_body_assemble(&e3, 1, &[]).unwrap();
        assert_eq!(empty.eval(&e3, &[1.0, 1.0, 1.0]), 0.0);
        assert!(many_body_assemble(&p2, 3, &[]).is_err());
    }
}
