//! Property tests for kernel, geometry, verdict, fitting and manifest invariants.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use proptest::prelude::*;

use katokit::cli::ExperimentManifest;
use katokit::geometry::{ManifoldModel, Point};
use katokit::heat_kernel::HeatKernelEngine;
use katokit::kato::{heat_bound_chain, ControlTime};
use katokit::potentials::Potential;
use katokit::semigroup::{q_norm, QExponent};
use katokit::stochastics::{fit_delta_constants, simulate, WalkConfig};
use katokit::Verdict;

fn sphere_point(polar: f64, azimuth: f64) -> Point {
    Point::on_sphere(polar, azimuth)
}

fn h3_point(x: f64, y: f64, z: f64) -> Point {
    Point::new(vec![x, y, z])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn euclidean_kernel_is_the_gaussian(t in 0.01f64..5.0, x in prop::array::uniform3(-2.0f64..2.0), y in prop::array::uniform3(-2.0f64..2.0)) {
        let engine = HeatKernelEngine::new(&ManifoldModel::euclidean(3));
        let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
        let exact = (2.0 * PI * t).powf(-1.5) * (-d2 / (2.0 * t)).exp();
        let (p, _) = engine.value(t, &x, &y).unwrap();
        prop_assert!((p - exact).abs() <= 1e-13 * exact.max(1e-300));
        prop_assert_eq!(p, engine.value(t, &y, &x).unwrap().0);
    }

    #[test]
    fn hyperbolic_kernel_matches_the_radial_formula(t in 0.01f64..4.0, a in prop::array::uniform3(-1.0f64..1.0), b in prop::array::uniform3(-1.0f64..1.0)) {
        let model = ManifoldModel::Hyperbolic3;
        let x = h3_point(a[0], a[1], 1.5 + a[2]);
        let y = h3_point(b[0], b[1], 1.5 + b[2]);
        // upper half-space distance
        let e2: f64 = (0..3).map(|i| (x.coords[i] - y.coords[i]).powi(2)).sum();
        let r = (1.0 + e2 / (2.0 * x.coords[2] * y.coords[2])).acosh();
        let shape = if r < 1e-8 { 1.0 } else { r / r.sinh() };
        let exact = (2.0 * PI * t).powf(-1.5) * shape * (-0.5 * t - r * r / (2.0 * t)).exp();
        let engine = HeatKernelEngine::new(&model);
        let (p, _) = engine.value(t, &x.coords, &y.coords).unwrap();
        prop_assert!((p - exact).abs() <= 1e-10 * exact, "p={p} exact={exact}");
        prop_assert_eq!(p, engine.value(t, &y.coords, &x.coords).unwrap().0);
    }

    #[test]
    fn circle_images_agree_with_fourier_series(t in 0.05f64..3.0, a in 0.0f64..TAU, b in 0.0f64..TAU) {
        let engine = HeatKernelEngine::new(&ManifoldModel::Circle);
        let (p, bound) = engine.value(t, &Point::on_circle(a).coords, &Point::on_circle(b).coords).unwrap();
        let fourier = (1.0 + 2.0 * (1..200).map(|k| (-(k * k) as f64 * t / 2.0).exp() * (k as f64 * (a - b)).cos()).sum::<f64>()) / (2.0 * PI);
        prop_assert!((p - fourier).abs() <= 1e-12 + bound, "p={p} fourier={fourier}");
        prop_assert!(p > 0.0);
    }

    #[test]
    fn sphere_kernel_is_positive_and_symmetric(t in 0.02f64..3.0, p1 in 0.0f64..PI, a1 in 0.0f64..TAU, p2 in 0.0f64..PI, a2 in 0.0f64..TAU) {
        let engine = HeatKernelEngine::new(&ManifoldModel::Sphere2);
        let (x, y) = (sphere_point(p1, a1), sphere_point(p2, a2));
        let (pxy, bound) = engine.value(t, &x.coords, &y.coords).unwrap();
        let (pyx, _) = engine.value(t, &y.coords, &x.coords).unwrap();
        prop_assert!(pxy > 0.0 || pxy <= bound);
        prop_assert!(pxy >= 0.0);
        prop_assert!((pxy - pyx).abs() <= bound + 1e-14 * pxy);
        // p(t,x,y) ≤ p(t,x,x) on a homogeneous space
        let (pxx, _) = engine.value(t, &x.coords, &x.coords).unwrap();
        prop_assert!(pxy <= pxx * (1.0 + 1e-12) + 2.0 * bound);
    }

    #[test]
    fn product_kernel_factorises(t in 0.05f64..2.0, s in -1.0f64..1.0, u in -1.0f64..1.0, a in 0.0f64..TAU, b in 0.0f64..TAU) {
        let model: ManifoldModel = "product(euclidean:1,circle)".parse().unwrap();
        let engine = HeatKernelEngine::new(&model);
        let (ca, cb) = (Point::on_circle(a).coords, Point::on_circle(b).coords);
        let x = [s, ca[0], ca[1]];
        let y = [u, cb[0], cb[1]];
        let line = (2.0 * PI * t).powf(-0.5) * (-(s - u).powi(2) / (2.0 * t)).exp();
        let circle = HeatKernelEngine::new(&ManifoldModel::Circle).value(t, &ca, &cb).unwrap().0;
        let (p, _) = engine.value(t, &x, &y).unwrap();
        prop_assert!((p - line * circle).abs() <= 1e-13 * p);
    }

    #[test]
    fn geodesic_distance_is_a_metric(p in prop::array::uniform3(0.0f64..PI), a in prop::array::uniform3(0.0f64..TAU)) {
        let model = ManifoldModel::Sphere2;
        let pts: Vec<Point> = (0..3).map(|i| sphere_point(p[i], a[i])).collect();
        let d = |i: usize, j: usize| model.distance(&pts[i], &pts[j]).unwrap();
        prop_assert!((d(0, 1) - d(1, 0)).abs() <= 1e-14);
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
        prop_assert!(d(0, 1) <= PI + 1e-12);
    }

    #[test]
    fn exp_inverts_log(a in prop::array::uniform3(-1.0f64..1.0), b in prop::array::uniform3(-1.0f64..1.0)) {
        let model = ManifoldModel::Hyperbolic3;
        let x = h3_point(a[0], a[1], 1.5 + a[2]);
        let y = h3_point(b[0], b[1], 1.5 + b[2]);
        let v = model.log_map(&x, &y).unwrap();
        let back = model.exp_map(&x, &v).unwrap();
        for (c, e) in back.coords.iter().zip(&y.coords) {
            prop_assert!((c - e).abs() <= 1e-9, "{:?} vs {:?}", back.coords, y.coords);
        }
        prop_assert!((model.inner(&x.coords, &v, &v).sqrt() - model.distance(&x, &y).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn certificates_match_the_closed_form(m in 1usize..=3, extra in 0.01f64..20.0) {
        let q = (0.5 * m as f64).max(1.0) + extra;
        let c = ControlTime::Power { m }.certificate(q);
        let exact = 1.0 / (1.0 - m as f64 / (2.0 * q));
        prop_assert!(c.admissible);
        prop_assert!((c.value - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn heat_bound_chain_holds(m in 1usize..=3, t in 1e-4f64..10.0, r in 0.05f64..3.0, extra in 0.0f64..2.0) {
        let (lhs, mid, rhs, ok) = heat_bound_chain(m, t, r, r + extra);
        prop_assert!(ok, "{lhs} ≤ {mid} ≤ {rhs}");
    }

    #[test]
    fn fitted_constants_bound_every_sample(mut values in prop::collection::vec(0.5f64..50.0, 2..12), delta in 1.01f64..8.0) {
        // every semigroup starts at the identity
        values[0] = 1.0;
        let times: Vec<f64> = (0..values.len()).map(|k| 0.2 * k as f64).collect();
        for fit in fit_delta_constants(&times, &values, &[delta]) {
            prop_assert!(fit.c_delta >= 0.0);
            prop_assert!(fit.margin >= -1e-12);
            for (t, v) in times.iter().zip(&values) {
                prop_assert!(*v <= delta * (t * fit.c_delta).exp() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn q_norms_interpolate(entries in prop::collection::vec(0.0f64..1.0, 36), r in 0.05f64..0.95) {
        let p = DMatrix::from_vec(6, 6, entries);
        let n1 = q_norm(&p, QExponent::Finite(1.0));
        let ninf = q_norm(&p, QExponent::Infinity);
        let nq = q_norm(&p, QExponent::Finite(1.0 / (1.0 - r)));
        prop_assert!(nq <= n1.powf(1.0 - r) * ninf.powf(r) * (1.0 + 1e-9) + 1e-12);
        prop_assert!(q_norm(&p, QExponent::Finite(2.0)) <= (n1 * ninf).sqrt() * (1.0 + 1e-12));
    }

    #[test]
    fn verdict_conjunction_is_a_lattice_meet(a in 0usize..3, b in 0usize..3, c in 0usize..3) {
        let v = [Verdict::Pass, Verdict::Fail, Verdict::Inconclusive];
        let (a, b, c) = (v[a], v[b], v[c]);
        prop_assert_eq!(a.and(b), b.and(a));
        prop_assert_eq!(a.and(b).and(c), a.and(b.and(c)));
        prop_assert_eq!(Verdict::Pass.and(a), a);
        prop_assert_eq!(Verdict::Fail.and(a), Verdict::Fail);
        prop_assert_eq!(a.and(a), a);
    }

    #[test]
    fn potentials_print_what_they_parse(beta in 0.1f64..2.5, c in -3.0f64..3.0, r in 0.1f64..2.0, cap in 1.0f64..50.0) {
        let model = ManifoldModel::euclidean(3);
        let spec = format!(
            "sum[scale:{c}:radialpower:beta={beta}:center=0,0.5,0;cap:{cap}:coulomb:center=1,0,0;restrict[ball:center=0,0,0:radius={r};const:2]]"
        );
        let w = Potential::parse(&spec, &model).unwrap();
        let again = Potential::parse(&w.to_string(), &model).unwrap();
        prop_assert_eq!(w.to_string(), again.to_string());
        let y = [0.3, -0.2, 0.9];
        prop_assert_eq!(w.eval(&model, &y), again.eval(&model, &y));
    }

    #[test]
    fn manifests_survive_a_round_trip(seed in any::<u64>(), t in 0.01f64..2.0, paths in 1usize..100_000) {
        let text = format!(
            "manifold = \"circle\"\nseed = {seed}\npotential = \"cos\"\n[[check]]\nkind = \"feynman-kac\"\nt = {t}\npaths = {paths}\n[[check]]\nkind = \"kernel-check\"\nname = \"k\"\nexpect = \"PASS\"\n"
        );
        let m = ExperimentManifest::parse(&text).unwrap();
        let again = ExperimentManifest::parse(&m.to_toml().unwrap()).unwrap();
        prop_assert_eq!(m.to_toml().unwrap(), again.to_toml().unwrap());
        prop_assert_eq!(again.seed, seed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn paths_replay_independently_of_ensemble_size(seed in any::<u64>(), extra in 1usize..20) {
        let model = ManifoldModel::Sphere2;
        let small = simulate(&WalkConfig::new(&model, Point::north_pole(), 0.2, 1e-2, 5, seed), &[0.1, 0.2]).unwrap();
        let large = simulate(&WalkConfig::new(&model, Point::north_pole(), 0.2, 1e-2, 5 + extra, seed), &[0.1, 0.2]).unwrap();
        for j in 0..2 {
            for i in 0..5 {
                prop_assert_eq!(small.position(j, i), large.position(j, i));
                let x = small.position(j, i).unwrap();
                let norm: f64 = x.iter().map(|c| c * c).sum();
                prop_assert!((norm - 1.0).abs() <= 1e-12);
            }
        }
    }
}
