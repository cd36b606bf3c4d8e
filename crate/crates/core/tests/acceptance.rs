//! Acceptance suite: one function per criterion, each printing a single
//! PASS/FAIL line with its measured figures and runtime budget.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use katokit::geometry::{canonical_point, ManifoldModel, Point, Window};
use katokit::heat_kernel::{check_consistency, HeatKernelEngine, Method};
use katokit::kato::{
    classical_kato_verdict, control_pair_from_faber_krahn, control_pair_from_on_diag, control_pair_li_yau,
    default_start_points, dirichlet_ground_energy, faber_krahn_constant, faber_krahn_verify, heat_bound_sweep,
    holder_bound_check, is_kato, FaberKrahnControlPair, KatoOptions, TestSet,
};
use katokit::mvi::{mvi_sweep, MviSweepConfig};
use katokit::potentials::{coulomb, Potential};
use katokit::quadrature::log_space;
use katokit::semigroup::{bop_bound_check, discretize, riesz_thorin_check, semigroup_value, QExponent};
use katokit::stochastics::{elworthy_projection_check, fdd_check, feynman_kac, simulate, WalkConfig};

const J01: f64 = 2.404_825_557_695_773;

type Criterion = (&'static str, fn() -> Outcome, u64);

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn csv(x: &[f64]) -> String {
    x.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

fn closed_form(engine: &HeatKernelEngine) -> bool {
    match &engine.method {
        Method::ClosedForm => true,
        Method::ProductRule(l, r) => closed_form(l) && closed_form(r),
        _ => false,
    }
}

fn kernel_consistency() -> Outcome {
    let models = ["euclidean:3", "circle", "torus:2:6.2832", "sphere2", "hyperbolic3", "product(euclidean:1,circle)"];
    let mut ok = true;
    let mut worst = (0.0f64, 0.0f64);
    for spec in models {
        let model: ManifoldModel = spec.parse().unwrap();
        let engine = HeatKernelEngine::new(&model);
        let x = canonical_point(&model);
        let pts = default_start_points(&model, &Potential::zero());
        let rep = check_consistency(&engine, &[0.1, 0.5, 1.0], &pts).unwrap();
        let closed = closed_form(&engine);
        let ck_tol = if closed { 1e-6 } else { 1e-4 };
        let symmetric = if closed { rep.symmetry_residual == 0.0 } else { rep.symmetry_residual <= rep.truncation_bound };
        let fine = symmetric && rep.ck_residual < ck_tol && rep.mass_defect <= 1e-6 && rep.min_value > 0.0;
        if !fine {
            eprintln!("  {spec} at {:?}: {rep:?}", x.coords);
        }
        ok &= fine;
        worst = (worst.0.max(rep.ck_residual), worst.1.max(rep.mass_defect));
    }
    outcome(ok, format!("6 models, worst C-K residual {:.1e}, worst mass defect {:.1e}", worst.0, worst.1))
}

fn control_pairs() -> Outcome {
    let e3 = HeatKernelEngine::new(&ManifoldModel::euclidean(3));
    let pair = control_pair_from_on_diag(&e3, 1e-4, 50).unwrap();
    let c = (2.0 * PI).powf(-1.5);
    let c_ok = (pair.empirical_constant - c).abs() <= 1e-12 * c;

    let h3 = ManifoldModel::Hyperbolic3;
    let engine = HeatKernelEngine::new(&h3);
    let xs = [canonical_point(&h3), Point::new(vec![0.7, -0.2, 2.5])];
    let ly = control_pair_li_yau(&engine, &log_space(1e-4, 1.0, 50), &xs).unwrap();
    let ly_ok = ly.sweep.margin_min >= 0.0 && ly.sweep.t_samples >= 50;

    // ∫_0^1 s^{-m/(2q)} ds = 1/(1 - m/(2q))
    let mut cert_err: f64 = 0.0;
    for p in [&pair, &ly] {
        for cert in p.certificates.iter().filter(|c| c.admissible) {
            let exact = 1.0 / (1.0 - 3.0 / (2.0 * cert.q));
            cert_err = cert_err.max((cert.value - exact).abs());
        }
    }
    outcome(
        c_ok && ly_ok && cert_err <= 1e-12,
        format!(
            "C = {:.15e}, Li-Yau margin {:.2e}, certificate error {:.1e}",
            pair.empirical_constant, ly.sweep.margin_min, cert_err
        ),
    )
}

fn holder_battery() -> Outcome {
    let mut runs = 0;
    let mut ok = true;
    let mut worst = f64::INFINITY;
    for spec in ["euclidean:3", "sphere2", "hyperbolic3"] {
        let model: ManifoldModel = spec.parse().unwrap();
        let engine = HeatKernelEngine::new(&model);
        let control = control_pair_from_on_diag(&engine, 1e-4, 50).unwrap();
        let x0 = canonical_point(&model);
        let e1 = &model.tangent_frame(&x0.coords)[0];
        let x1 = model.exp_map(&x0, &e1.iter().map(|c| 0.5 * c).collect::<Vec<_>>()).unwrap();
        let (c0, c1) = (csv(&x0.coords), csv(&x1.coords));
        let potentials = [
            "const:1".to_string(),
            format!("indicator:ball:center={c0}:radius=1"),
            format!("radialpower:beta=1:center={c0}"),
            format!("radialpower:beta=0.5:center={c1}"),
            format!("cap:5:radialpower:beta=1.5:center={c1}"),
            format!("sum[const:0.5;scale:-2:indicator:ball:center={c1}:radius=0.5]"),
        ];
        let window = if model.is_compact() { Window::Full } else { Window::ball(x0.clone(), 3.0) };
        let xs = [x0.clone(), x1.clone()];
        for p in &potentials {
            let w = Potential::parse(p, &model).unwrap();
            for q in [0.5 * model.dim() as f64 + 0.1, 2.0, 5.0] {
                let rep = holder_bound_check(&engine, &control, &w, q, &log_space(1e-3, 1.0, 10), &xs, &window, 0.1).unwrap();
                runs += 1;
                worst = worst.min(rep.margin_min);
                let pass = rep.margin_min >= -rep.tolerance && rep.samples.len() == 20;
                if !pass {
                    eprintln!("  {spec} {p} q={q}: margin {} tol {}", rep.margin_min, rep.tolerance);
                }
                ok &= pass;
            }
        }
    }
    outcome(ok && runs >= 45, format!("{runs} potential/model/q cases × 10 s-values, worst margin {worst:.3e}"))
}

fn faber_krahn() -> Outcome {
    let disk = TestSet::Ball { center: vec![0.0, 0.0], radius: 1.0 };
    let exact = 0.5 * J01 * J01;
    let e = dirichlet_ground_energy(&disk, 40).unwrap();
    let rel = |v: f64| (v - exact).abs() / exact;
    let disk_ok = rel(e.coarse) <= 5e-3 && rel(e.fine) <= 5e-3;

    let model = ManifoldModel::euclidean(2);
    let fk = FaberKrahnControlPair { radius: 1.0, a: faber_krahn_constant(2).unwrap() };
    let ball = |x: f64, y: f64, r: f64| TestSet::Ball { center: vec![x, y], radius: r };
    let rect = |a: f64, b: f64| TestSet::Box { lower: vec![-a, -b], upper: vec![a, b] };
    let sets = vec![
        ball(0.0, 0.0, 1.0),
        ball(0.0, 0.0, 0.5),
        ball(0.4, 0.0, 0.5),
        ball(-0.3, 0.3, 0.25),
        rect(0.5, 0.5),
        rect(0.6, 0.3),
        rect(0.7, 0.1),
        rect(0.35, 0.35),
        TestSet::Box { lower: vec![0.1, -0.2], upper: vec![0.6, 0.4] },
        TestSet::Box { lower: vec![-0.6, 0.0], upper: vec![0.0, 0.6] },
    ];
    let rep = faber_krahn_verify(&model, &[0.0, 0.0], &fk, &sets, 40).unwrap();
    let fk_ok = rep.results.len() == 10 && rep.results.iter().all(|r| r.margin >= -r.tolerance && r.eigenvalue.converged);
    let worst = rep.results.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);

    let engine = HeatKernelEngine::new(&model);
    let heat = heat_bound_sweep(&engine, &fk, (1e-3, 10.0), 40, &[canonical_point(&model)]).unwrap();
    let (_, pair_heat) = control_pair_from_faber_krahn(&engine, &fk, 1e-3, 40, &[canonical_point(&model)]).unwrap();
    let heat_ok = heat.relative_change <= 0.1 && pair_heat.relative_change <= 0.1;
    outcome(
        disk_ok && fk_ok && heat_ok,
        format!(
            "disk λ₁ {:.6}/{:.6} vs {exact:.6}, 10 sets worst margin {worst:.2e}, Ĉ change {:.2e}",
            e.coarse, e.fine, heat.relative_change
        ),
    )
}

fn kato_verdicts() -> Outcome {
    let opts = KatoOptions::default();
    let cases: [(usize, &str, bool); 9] = [
        (3, "const:2", true),
        (3, "indicator:ball:center=0,0,0:radius=1", true),
        (3, "coulomb:center=0,0,0", true),
        (3, "radialpower:beta=0.5:center=0,0,0", true),
        (3, "radialpower:beta=1:center=0.5,0,0", true),
        (3, "radialpower:beta=1.5:center=0,0,0", true),
        (3, "radialpower:beta=2:center=0,0,0", false),
        (2, "radialpower:beta=1:center=0,0", true),
        (2, "radialpower:beta=2:center=0,0", false),
    ];
    let mut ok = true;
    let mut agree = 0;
    let mut gamma_coulomb = f64::NAN;
    for (m, spec, expected) in cases {
        let model = ManifoldModel::euclidean(m);
        let engine = HeatKernelEngine::new(&model);
        let w = Potential::parse(spec, &model).unwrap();
        let pts = default_start_points(&model, &w);
        let curve = is_kato(&engine, &w, 1.0, 6, &pts, 0.5, &opts).unwrap();
        let classical = classical_kato_verdict(&model, &w, 1.0, 6, &pts).unwrap();
        let pass = curve.verdict.is_pass();
        if spec.starts_with("coulomb") {
            gamma_coulomb = curve.gamma;
            ok &= (curve.gamma - 0.5).abs() <= 0.1;
        }
        if pass == classical.verdict.is_pass() {
            agree += 1;
        }
        if pass != expected {
            eprintln!("  E{m} {spec}: verdict {} γ={}", curve.verdict, curve.gamma);
        }
        ok &= pass == expected && curve.label == katokit::kato::NUMERICAL_EVIDENCE;
    }
    outcome(
        ok && agree == cases.len(),
        format!("{} verdicts as expected, classical agreement {agree}/{}, Coulomb γ = {gamma_coulomb:.3}", cases.len(), cases.len()),
    )
}

fn stochastics() -> Outcome {
    let n = 100_000;
    let mut zs = Vec::new();

    let circle = ManifoldModel::Circle;
    let ens = simulate(&WalkConfig::new(&circle, Point::on_circle(0.3), 1.0, 1e-3, n, 12), &[0.5, 1.0]).unwrap();
    let engine = HeatKernelEngine::new(&circle);
    zs.push(fdd_check(&ens, &engine, &[0.5, 1.0], &[Potential::Coordinate(0), Potential::Coordinate(1)]).unwrap().z);

    let sphere = ManifoldModel::Sphere2;
    let ens = simulate(&WalkConfig::new(&sphere, Point::north_pole(), 1.0, 1e-3, n, 11), &[0.5, 1.0]).unwrap();
    let engine = HeatKernelEngine::new(&sphere);
    zs.push(fdd_check(&ens, &engine, &[0.5, 1.0], &[Potential::Coordinate(2), Potential::Coordinate(2)]).unwrap().z);
    // from the north pole cos d(X_t, x₀) is the third coordinate, E = e^{-t}
    let cos_d = fdd_check(&ens, &engine, &[1.0], &[Potential::Coordinate(2)]).unwrap();
    let z_sphere = (cos_d.monte_carlo - (-1.0f64).exp()) / cos_d.std_error;

    let e3 = ManifoldModel::euclidean(3);
    let ens = simulate(&WalkConfig::new(&e3, Point::origin(3), 1.0, 1e-3, n, 13), &[0.5, 1.0]).unwrap();
    let engine = HeatKernelEngine::new(&e3);
    let ball = Potential::parse("indicator:ball:center=0,0,0:radius=1", &e3).unwrap();
    zs.push(fdd_check(&ens, &engine, &[0.5, 1.0], &[Potential::Coordinate(0), Potential::Coordinate(0)]).unwrap().z);
    zs.push(fdd_check(&ens, &engine, &[0.5, 1.0], &[ball.clone(), ball]).unwrap().z);

    let product = ManifoldModel::product(e3.clone(), e3.clone());
    let w = Potential::parse("indicator:ball:center=0,0,0:radius=1", &e3).unwrap();
    let proj = elworthy_projection_check(&product, 0, &w, 0.5, &Point::origin(6), n, 1e-3, 5).unwrap();
    let band = 3.0 * (proj.mc_std_error.unwrap() + proj.quadrature_error);
    let mc_defect = (proj.monte_carlo.unwrap() - proj.rhs).abs();

    let z_max = zs.iter().fold(0.0f64, |a, z| a.max(z.abs()));
    outcome(
        z_max < 4.0 && z_sphere.abs() < 4.0 && proj.equality_defect < band && mc_defect < band,
        format!(
            "fdd |z| ≤ {z_max:.2}, sphere E[cos d] z = {z_sphere:.2}, projection defect {:.1e} (MC {mc_defect:.1e}) < {band:.1e}",
            proj.equality_defect
        ),
    )
}

fn feynman_kac_spectral() -> Outcome {
    let model = ManifoldModel::Circle;
    let w = Potential::parse("cos", &model).unwrap();
    let one = Potential::parse("const:1", &model).unwrap();
    let x = canonical_point(&model);
    let mut ok = true;
    let mut z_max: f64 = 0.0;
    let mut refine: f64 = 0.0;
    for (k, t) in [0.25, 0.5, 1.0].into_iter().enumerate() {
        let ens = simulate(&WalkConfig::new(&model, x.clone(), t, 1e-3, 100_000, 40 + k as u64), &[]).unwrap();
        let mc = feynman_kac(&ens, &w, &one).unwrap();
        let s = semigroup_value(&model, &w, &one, t, &x.coords, 256).unwrap();
        let z = (mc.value - s.fine) / mc.std_error;
        z_max = z_max.max(z.abs());
        refine = refine.max((s.fine - s.coarse).abs());
        ok &= z.abs() < 4.0 && (s.fine - s.coarse).abs() < 1e-6;
    }
    outcome(ok, format!("|z| ≤ {z_max:.2}, n-doubling change {refine:.1e}"))
}

fn appendix_bound() -> Outcome {
    let model = ManifoldModel::Circle;
    let times: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect();
    let deltas = [1.5, 2.0, 4.0];
    let qs = [1.0, 2.0, 4.0, f64::INFINITY].map(QExponent::from_f64);
    let spike = "cap:20:radialpower:beta=1:center=1,0";
    let mut ok = true;
    let mut constant_err: f64 = 0.0;
    let mut rt_worst = f64::INFINITY;
    let mut worst = f64::INFINITY;
    for w_minus in ["zero", "const:1", spike] {
        let w = Potential::parse(w_minus, &model).unwrap();
        let op = discretize(&model, 64, &Potential::scale(-1.0, w)).unwrap();
        let rep = bop_bound_check(&op, None, &times, &deltas, &qs, 0).unwrap();
        ok &= rep.margin_min >= -1e-10 && rep.bounds.len() == 4;
        worst = worst.min(rep.margin_min);
        if w_minus != spike {
            for b in &rep.bounds {
                for d in &b.table {
                    constant_err = constant_err.max((d.margin - d.delta.ln()).abs());
                }
            }
        }
        let rt = riesz_thorin_check(&op, 1.0, &[0.25, 0.5, 0.75], 1e-10).unwrap();
        rt_worst = rt_worst.min(rt.margin_min);
    }
    outcome(
        ok && constant_err <= 1e-10 && rt_worst >= -1e-10,
        format!("worst margin {worst:.3e}, constant-case |margin - ln δ| {constant_err:.1e}, Riesz-Thorin margin {rt_worst:.3e}"),
    )
}

fn mean_value() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for m in [2, 3] {
        let cfg = MviSweepConfig::standard(m, faber_krahn_constant(m).unwrap());
        assert_eq!(cfg.qs, vec![1.0, 1.5, 2.0]);
        let rep = mvi_sweep(&cfg).unwrap();
        ok &= rep.c_emp.is_finite() && rep.c_emp > 0.0 && rep.halving_change <= 0.1 && rep.refinement_change <= 0.1;
        detail.push(format!(
            "m={m}: C_emp {:.4}, τ-halving {:.1e}, refinement {:.1e}",
            rep.c_emp, rep.halving_change, rep.refinement_change
        ));
    }
    outcome(ok, detail.join("; "))
}

fn coulomb_potential() -> Outcome {
    let model = ManifoldModel::euclidean(3);
    let engine = HeatKernelEngine::new(&model);
    let x = Point::origin(3);
    let mut worst: f64 = 0.0;
    for r in [0.1, 1.0, 10.0] {
        let y = Point::new(vec![r, 0.0, 0.0]);
        let v = coulomb(&engine, &x, &y, 1e-7).unwrap();
        worst = worst.max((v.value - 1.0 / (4.0 * PI * r)).abs() * 4.0 * PI * r);
    }
    let w = Potential::parse("coulomb:center=0,0,0", &model).unwrap();
    let curve = is_kato(&engine, &w, 1.0, 6, &default_start_points(&model, &w), 0.5, &KatoOptions::default()).unwrap();
    outcome(
        worst <= 1e-6 && curve.verdict.is_pass() && (curve.gamma - 0.5).abs() <= 0.1,
        format!("relative error {worst:.1e}, is_kato {} with γ = {:.3}", curve.verdict, curve.gamma),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        ("kernel consistency", kernel_consistency, 30),
        ("control pairs", control_pairs, 60),
        ("Hölder L^q criterion", holder_battery, 300),
        ("Faber-Krahn", faber_krahn, 300),
        ("Kato verdicts", kato_verdicts, 300),
        ("stochastics", stochastics, 600),
        ("Feynman-Kac vs spectral", feynman_kac_spectral, 300),
        ("semigroup L^q bound", appendix_bound, 120),
        ("mean value inequality", mean_value, 300),
        ("Coulomb potential", coulomb_potential, 60),
    ];
    let mut failed = Vec::new();
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let o = run();
        let elapsed = started.elapsed();
        let ok = o.ok && elapsed < Duration::from_secs(*budget);
        println!(
            "criterion {:>2} {:<24} {}  {} [{:.1} s of {budget} s]",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
        if !ok {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
