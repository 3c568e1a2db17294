//! Desk-scale acceptance suite. Prints one line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use lfslab::busemann::{
    busemann_scenario, busemann_truncated, default_grid, linear_grid, verify_laplacian_comparison,
    Ray,
};
use lfslab::congruence::raychaudhuri_scenario;
use lfslab::connection::{berwald_audit, connection_at};
use lfslab::curvature::{epsilon_admissible, NEff};
use lfslab::geodesic::{exponential_map_tol, integrate_geodesic, integrate_jacobi, local_distance};
use lfslab::legendre::legendre_suite;
use lfslab::model::{audit_model, build_model, SpacetimeModel, Weight, MODEL_NAMES};
use lfslab::sampling;
use lfslab::splitting::splitting_certificate;
use lfslab::Error;

fn model(name: &str, dim: usize) -> SpacetimeModel {
    build_model(name, dim, &BTreeMap::new()).expect("built-in model")
}

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn euler_homogeneity() -> Outcome {
    let mut worst = 0.0f64;
    let mut failing = Vec::new();
    for name in MODEL_NAMES {
        let r = audit_model(&model(name, 4), 10_000, 11);
        for c in [
            "homogeneity",
            "euler-g(v,v)-2L",
            "g-0-homogeneity",
            "signature-violations",
            "evaluation-errors",
        ] {
            let rec = r.check(c).expect("audit check present");
            worst = worst.max(if c.ends_with("s") { 0.0 } else { rec.value });
            if !rec.passed {
                failing.push(format!("{name}:{c}"));
            }
        }
    }
    outcome(
        failing.is_empty(),
        format!("max residual {worst:.2e} (tol 1e-12) {failing:?}"),
    )
}

fn connection_correctness() -> Outcome {
    let mut worst = 0.0f64;
    let mut r = sampling::rng(5);
    let mink = model("minkowski", 4);
    for _ in 0..20 {
        let x = sampling::box_point(&mut r, 4, 1.0);
        let v = sampling::cone_vector(&mut r, 4, 0.8);
        let c = connection_at(&mink, &x, &v).unwrap();
        worst = worst.max(
            c.gamma
                .iter()
                .chain(&c.chern)
                .fold(0.0, |a, b| a.max(b.abs())),
        );
    }
    // FLRW-like: g = diag(-1, e^{2Hx0}, ...), H = 1.
    let flrw = model("flrw", 4);
    for _ in 0..20 {
        let x = sampling::box_point(&mut r, 4, 1.0);
        let v = sampling::cone_vector(&mut r, 4, 0.5);
        let c = connection_at(&flrw, &x, &v).unwrap();
        let a2 = (2.0 * x[0]).exp();
        for a in 0..4 {
            for b in 0..4 {
                for d in 0..4 {
                    let want = match (a, b, d) {
                        (0, i, j) if i == j && i > 0 => a2,
                        (i, 0, j) | (i, j, 0) if i == j && i > 0 => 1.0,
                        _ => 0.0,
                    };
                    let scale = want.abs().max(1.0);
                    worst = worst.max((c.gamma(a, b, d) - want).abs() / scale);
                    worst = worst.max((c.chern(a, b, d) - want).abs() / scale);
                }
            }
        }
    }
    let mut misclassified = Vec::new();
    for name in MODEL_NAMES {
        let m = model(name, 3);
        let mut r = sampling::rng(2);
        let xs: Vec<Vec<f64>> = (0..6)
            .map(|_| sampling::box_point(&mut r, 3, 0.8))
            .collect();
        if !berwald_audit(&m, &xs, 6, 1).passed() {
            misclassified.push(name);
        }
    }
    outcome(
        worst <= 1e-10 && misclassified.is_empty(),
        format!("christoffel error {worst:.2e} (tol 1e-10), misclassified {misclassified:?}"),
    )
}

fn geodesic_jacobi() -> Outcome {
    let mut drift = 0.0f64;
    let mut r = sampling::rng(3);
    for name in MODEL_NAMES {
        let m = model(name, 3);
        for _ in 0..4 {
            let x = sampling::box_point(&mut r, 3, 0.3);
            let v = sampling::cone_vector(&mut r, 3, 0.6);
            let seg = integrate_geodesic(&m, &x, &v, (0.0, 1.0), 1e-11).unwrap();
            drift = drift.max(seg.drift_rate());
        }
    }
    // Jacobi field against the variation s -> exp_x(t(v + s w)) on FLRW.
    let m = model("flrw", 3);
    let (x, v, w) = ([0.1, 0.2, -0.1], [1.0, 0.3, 0.1], [0.2, -0.4, 0.5]);
    let seg = integrate_geodesic(&m, &x, &v, (0.0, 1.0), 1e-12).unwrap();
    let jac = integrate_jacobi(&m, &seg, &[0.0; 3], &w, 1e-12).unwrap();
    let mut jac_err = 0.0f64;
    for t in [0.25, 0.5, 1.0] {
        let h = 1e-5;
        let shoot = |s: f64| {
            let u: Vec<f64> = (0..3).map(|i| t * (v[i] + s * w[i])).collect();
            exponential_map_tol(&m, &x, &u, 1e-13).unwrap()
        };
        let (p, q) = (shoot(h), shoot(-h));
        let fd: Vec<f64> = (0..3).map(|i| (p[i] - q[i]) / (2.0 * h)).collect();
        let j = jac.value(t);
        let num: f64 = fd
            .iter()
            .zip(&j)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = j.iter().map(|a| a * a).sum::<f64>().sqrt();
        jac_err = jac_err.max(num / den);
    }
    // local_distance(x, exp_x(v)) = F(v).
    let mut bvp = 0.0f64;
    for name in MODEL_NAMES {
        let m = model(name, 3);
        let x = [0.05, -0.1, 0.1];
        let v = [0.6, 0.2, -0.1];
        let y = exponential_map_tol(&m, &x, &v, 1e-13).unwrap();
        let d = local_distance(&m, &x, &y).unwrap();
        bvp = bvp.max((d - m.finsler_f(&x, &v).unwrap()).abs());
    }
    outcome(
        drift <= 1e-8 && jac_err <= 1e-4 && bvp <= 1e-8,
        format!("L drift {drift:.2e}/unit time (tol 1e-8), jacobi rel err {jac_err:.2e} (tol 1e-4), bvp {bvp:.2e} (tol 1e-8)"),
    )
}

fn legendre() -> Outcome {
    let mut failing = Vec::new();
    let mut rt = 0.0f64;
    let mut sym = 0.0f64;
    let mut berw = 0.0f64;
    for (name, pairs) in [
        ("minkowski", 10_000),
        ("flat-quartic", 10_000),
        ("product-berwald", 10_000),
        ("flrw", 10_000),
        ("nonberwald-quartic", 10_000),
    ] {
        let r = legendre_suite(&model(name, 4), pairs, 21);
        rt = rt.max(r.check("roundtrip").unwrap().value);
        sym = sym.max(r.check("hessian-symmetry").unwrap().value);
        if let Some(c) = r.check("berwald-second-derivative") {
            if name != "nonberwald-quartic" {
                berw = berw.max(c.value);
            }
        }
        for c in r.failed_checks() {
            failing.push(format!("{name}:{}", c.name));
        }
    }
    outcome(
        failing.is_empty(),
        format!("roundtrip {rt:.2e} (tol 1e-9), hessian symmetry {sym:.2e} (tol 1e-8), berwald law {berw:.2e} (tol 1e-7) {failing:?}"),
    )
}

fn raychaudhuri() -> Outcome {
    let n = 3usize;
    let mut ran = 0;
    let mut rejected = 0;
    let mut worst = 0.0f64;
    let mut problems = Vec::new();
    for name in ["minkowski", "weighted-minkowski", "flrw"] {
        let m = model(name, 4);
        for nv in [n as f64, 2.0 * n as f64, f64::INFINITY, -1.0] {
            for eps in [0.0, 0.5, 1.0] {
                let admissible = epsilon_admissible(nv, eps, n).unwrap().admissible;
                match raychaudhuri_scenario(&m, NEff::from_value(nv, n), eps, 5.0, 25) {
                    Ok((rep, _)) => {
                        ran += 1;
                        worst = worst.max(rep.check("raychaudhuri-residual").unwrap().value);
                        if !admissible || !rep.passed() {
                            problems.push(format!("{name} N={nv} eps={eps}"));
                        }
                    }
                    Err(Error::Parameter(_)) if !admissible => rejected += 1,
                    Err(e) => problems.push(format!("{name} N={nv} eps={eps}: {e}")),
                }
            }
        }
    }
    outcome(
        problems.is_empty(),
        format!(
            "{ran} runs, {rejected} rejected, max residual {worst:.2e} (tol 1e-6) {problems:?}"
        ),
    )
}

fn laplacian_comparison() -> Outcome {
    let grid = linear_grid(0.5, 5.0, 10);
    let mut problems = Vec::new();
    let mut eq = f64::NAN;
    let mut min_margin = f64::INFINITY;
    for (m, label) in [
        (model("minkowski", 4), "minkowski"),
        (model("weighted-minkowski", 4), "weighted a=-0.5"),
        (
            model("minkowski", 4).with_weight(Weight::time_linear(-1.5)),
            "weighted a=-1.5",
        ),
    ] {
        let z = vec![0.0; 4];
        let v = m.orientation(&z);
        let (rep, _) = verify_laplacian_comparison(&m, &z, &v, NEff::Infinite, 0.0, &grid).unwrap();
        for c in &rep.checks {
            if c.name.ends_with(".margin") {
                min_margin = min_margin.min(c.value);
            }
            if label == "minkowski" && c.name.ends_with(".equality") {
                eq = if eq.is_nan() {
                    c.value
                } else {
                    eq.max(c.value)
                };
            }
        }
        if !rep.passed() || rep.check("precondition-ric-n").map_or(true, |c| !c.passed) {
            problems.push(label);
        }
    }
    outcome(
        problems.is_empty() && eq <= 1e-9,
        format!("min margin {min_margin:.2e} (tol -1e-6), minkowski equality {eq:.2e} (tol 1e-9) {problems:?}"),
    )
}

fn busemann() -> Outcome {
    let m = model("minkowski", 4);
    let o = vec![0.0; 4];
    let eta = Ray::line(&m, &o, &m.orientation(&o), 4010.0).unwrap();
    let mut r = sampling::rng(9);
    let mut err = 0.0f64;
    let mut mono = 0;
    for _ in 0..16 {
        let x = sampling::box_point(&mut r, 4, 1.0);
        let b = busemann_truncated(&m, &eta, &x, &default_grid(1e3)).unwrap();
        err = err.max((b.limit - x[0]).abs());
        mono += b.monotonicity_violations;
    }
    let mut problems = Vec::new();
    for name in ["minkowski", "flat-quartic", "product-berwald"] {
        let (rep, _) = busemann_scenario(&model(name, 4), 8, 3, 1e3).unwrap();
        if !rep.passed() {
            problems.push(format!(
                "{name}: {:?}",
                rep.failed_checks()
                    .iter()
                    .map(|c| &c.name)
                    .collect::<Vec<_>>()
            ));
        }
        if rep
            .check("b-plus-reverse-b-equality")
            .map_or(true, |c| c.value > 2e-3)
        {
            problems.push(format!("{name}: b + reverse b equality"));
        }
    }
    outcome(
        err <= 2e-3 && mono == 0 && problems.is_empty(),
        format!("|b - x0| {err:.2e} (tol 2e-3), monotonicity violations {mono} {problems:?}"),
    )
}

fn splitting() -> Outcome {
    let failed = |m: &SpacetimeModel| -> Vec<String> {
        let (c, _) = splitting_certificate(m, 4, 1).unwrap();
        c.checks()
            .into_iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect()
    };
    let mink = failed(&model("minkowski", 4));
    let quartic = failed(&model("flat-quartic", 4));
    let nonb = failed(&model("nonberwald-quartic", 4));
    let weighted = failed(&model("minkowski", 4).with_weight(Weight::time_linear(-0.5)));
    let ok = mink.is_empty()
        && quartic.is_empty()
        && nonb == ["translation-drift"]
        && weighted == ["psi-drift"];
    outcome(
        ok,
        format!("failures: minkowski {mink:?}, flat-quartic {quartic:?}, nonberwald-quartic {nonb:?}, time-linear weight {weighted:?}"),
    )
}

fn epsilon_gate() -> Outcome {
    let n = 3usize;
    let nf = n as f64;
    // Independent truth table for n = 3: bound sqrt(N/(N-n)) = sqrt(2) at N = 2n.
    let eps = [0.0, 0.5, -0.5, 1.0, -1.0, 1.5, -1.5];
    let expected: [(f64, [bool; 7]); 4] = [
        (0.0, [true, false, false, false, false, false, false]),
        (nf, [true; 7]),
        (2.0 * nf, [true, true, true, true, true, false, false]),
        (
            f64::INFINITY,
            [true, true, true, false, false, false, false],
        ),
    ];
    let mut mismatches = Vec::new();
    for (nv, row) in expected {
        for (e, want) in eps.iter().zip(row) {
            let got = epsilon_admissible(nv, *e, n).unwrap().admissible;
            if got != want {
                mismatches.push(format!("N={nv} eps={e}"));
            }
        }
    }
    let c = |nv: f64, e: f64| epsilon_admissible(nv, e, n).unwrap().c;
    let c_ok = (c(0.0, 0.0) - 1.0 / nf).abs() < 1e-15
        && (c(2.0 * nf, 1.0) - 1.0 / (2.0 * nf)).abs() < 1e-15
        && (c(f64::INFINITY, 0.5) - 0.75 / nf).abs() < 1e-15;
    let interior = epsilon_admissible(2.0, 0.0, n).is_err();
    outcome(
        mismatches.is_empty() && c_ok && interior,
        format!("mismatches {mismatches:?}, c values ok {c_ok}, N in (0,n) rejected {interior}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 9] = [
        ("euler/homogeneity", euler_homogeneity, 10),
        ("connection correctness", connection_correctness, 30),
        ("geodesic/jacobi", geodesic_jacobi, 60),
        ("legendre", legendre, 60),
        ("weighted raychaudhuri", raychaudhuri, 120),
        ("laplacian comparison", laplacian_comparison, 60),
        ("busemann", busemann, 120),
        ("splitting certificate", splitting, 120),
        ("epsilon-range gate", epsilon_gate, 1),
    ];
    let mut all = true;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        let el = t.elapsed();
        let in_time = el <= Duration::from_secs(*limit);
        let ok = o.ok && in_time;
        all &= ok;
        println!(
            "criterion {}: {} {name}: {} [{:.2}s, limit {limit}s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            o.detail,
            el.as_secs_f64()
        );
    }
    if !all {
        std::process::exit(1);
    }
}
