//! Rays and lines, truncated and reverse Busemann functions, upper support
//! functions, and the Laplacian comparison verifier.

use nalgebra::DMatrix;
use rand::Rng;

use crate::congruence::{distance_congruence, unit_timelike};
use crate::curvature::{curvature_at, require_admissible, weighted_ricci_from, NEff};
use crate::error::{Error, Result};
use crate::geodesic::{causal_connector, integrate_geodesic, GeodesicSegment};
use crate::model::SpacetimeModel;
use crate::quadrature;
use crate::report::{CheckRecord, ScenarioReport, Table};
use crate::sampling;

const RAY_TOL: f64 = 1e-12;

/// Long-range distances are only attempted where geodesics connect globally.
pub fn require_global(m: &SpacetimeModel) -> Result<()> {
    if m.convexity_radius.is_finite() {
        return Err(Error::Scope(format!(
            "{} has convexity radius {}; long-range distances would need global maximization",
            m.name, m.convexity_radius
        )));
    }
    Ok(())
}

/// `d(x, y)` by a single shooting solve from `x` (0 without a future causal
/// connector). Models with a finite convexity radius are refused.
pub fn long_distance(m: &SpacetimeModel, x: &[f64], y: &[f64]) -> Result<f64> {
    require_global(m)?;
    match causal_connector(m, x, y, 1e-13)? {
        Some(sol) => m.finsler_f(x, &sol.initial_vector),
        None => Ok(0.0),
    }
}

/// A unit-speed timelike geodesic on `[−t_back, t_max]`; a ray when
/// `t_back = 0`, a line otherwise.
#[derive(Debug, Clone)]
pub struct Ray {
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub t_max: f64,
    pub t_back: f64,
    forward: GeodesicSegment,
    backward: Option<GeodesicSegment>,
}

impl Ray {
    pub fn new(m: &SpacetimeModel, x: &[f64], v: &[f64], t_max: f64) -> Result<Ray> {
        Self::build(m, x, v, t_max, 0.0)
    }

    pub fn line(m: &SpacetimeModel, x: &[f64], v: &[f64], t_max: f64) -> Result<Ray> {
        Self::build(m, x, v, t_max, t_max)
    }

    fn build(m: &SpacetimeModel, x: &[f64], v: &[f64], t_max: f64, t_back: f64) -> Result<Ray> {
        let u = unit_timelike(m, x, v)?;
        let seg = |t: f64| -> Result<GeodesicSegment> {
            let s = integrate_geodesic(m, x, &u, (0.0, t), RAY_TOL)?;
            if let Some(e) = &s.exit {
                return Err(Error::Integration {
                    t: e.t,
                    reason: e.reason.clone(),
                });
            }
            Ok(s)
        };
        let forward = seg(t_max)?;
        let backward = if t_back > 0.0 {
            Some(seg(-t_back)?)
        } else {
            None
        };
        Ok(Ray {
            x0: x.to_vec(),
            v0: u,
            t_max,
            t_back,
            forward,
            backward,
        })
    }

    pub fn point(&self, t: f64) -> Vec<f64> {
        match (&self.backward, t < 0.0) {
            (Some(b), true) => b.point(t),
            _ => self.forward.point(t),
        }
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        match (&self.backward, t < 0.0) {
            (Some(b), true) => b.velocity(t),
            _ => self.forward.velocity(t),
        }
    }

    /// `max |F(η̇) − 1|` over sampled parameters.
    pub fn unit_speed_residual(&self, m: &SpacetimeModel, samples: usize) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for k in 0..samples {
            let t =
                -self.t_back + (self.t_max + self.t_back) * k as f64 / (samples.max(2) - 1) as f64;
            worst = worst.max((m.finsler_f(&self.point(t), &self.velocity(t))? - 1.0).abs());
        }
        Ok(worst)
    }

    /// `max |(b − a) − d(η(a), η(b))|` over the windows.
    pub fn straightness(&self, m: &SpacetimeModel, windows: &[(f64, f64)]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &(a, b) in windows {
            let d = long_distance(m, &self.point(a), &self.point(b))?;
            worst = worst.max(((b - a) - d).abs());
        }
        Ok(worst)
    }
}

/// Truncated Busemann samples and their extrapolated limit.
#[derive(Debug, Clone)]
pub struct BusemannEvaluation {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    pub limit: f64,
    pub uncertainty: f64,
    /// Number of increases `b_{t_{k+1}} > b_{t_k}` beyond rounding.
    pub monotonicity_violations: usize,
    pub dropped: usize,
}

/// Fits `b_t = b∞ + β/t + γ/t²` through the last three samples; the
/// uncertainty is the spread against the two-parameter least-squares fit.
pub fn extrapolate(t: &[f64], b: &[f64]) -> (f64, f64) {
    let k = t.len();
    match k {
        0 => (f64::NAN, f64::INFINITY),
        1 => (b[0], f64::INFINITY),
        2 => {
            let (u0, u1) = (1.0 / t[0], 1.0 / t[1]);
            let beta = (b[1] - b[0]) / (u1 - u0);
            let lim = b[1] - beta * u1;
            (lim, (lim - b[1]).abs())
        }
        _ => {
            let ts = &t[k - 3..];
            let bs = &b[k - 3..];
            let a = DMatrix::from_fn(3, 3, |i, j| ts[i].powi(-(j as i32)));
            let rhs = nalgebra::DVector::from_column_slice(bs);
            let three = a.clone().lu().solve(&rhs).map(|s| s[0]).unwrap_or(f64::NAN);
            let a2 = a.columns(0, 2).into_owned();
            let two = (a2.transpose() * &a2)
                .lu()
                .solve(&(a2.transpose() * &rhs))
                .map(|s| s[0])
                .unwrap_or(f64::NAN);
            (three, (three - two).abs())
        }
    }
}

fn evaluate(
    x: &[f64],
    grid: &[f64],
    mut sample: impl FnMut(f64) -> Result<f64>,
) -> Result<BusemannEvaluation> {
    let mut ts = Vec::new();
    let mut vals = Vec::new();
    let mut dropped = 0;
    for &t in grid {
        match sample(t) {
            Ok(b) => {
                ts.push(t);
                vals.push(b);
            }
            Err(e @ Error::Scope(_)) => return Err(e),
            Err(_) => dropped += 1,
        }
    }
    if ts.is_empty() {
        return Err(Error::Numerical(format!(
            "all Busemann samples at {x:?} were unreachable"
        )));
    }
    let violations = vals
        .windows(2)
        .filter(|w| w[1] > w[0] + 1e-9 * w[0].abs().max(1.0))
        .count();
    let (limit, uncertainty) = extrapolate(&ts, &vals);
    Ok(BusemannEvaluation {
        x: x.to_vec(),
        t: ts,
        values: vals,
        limit,
        uncertainty,
        monotonicity_violations: violations,
        dropped,
    })
}

/// `b_t(x) = t − d(x, η(t))` on `grid`.
pub fn busemann_truncated(
    m: &SpacetimeModel,
    eta: &Ray,
    x: &[f64],
    grid: &[f64],
) -> Result<BusemannEvaluation> {
    evaluate(x, grid, |t| Ok(t - long_distance(m, x, &eta.point(t))?))
}

/// `b̄_t(x) = t − d(η(−t), x)` on `grid`.
pub fn reverse_busemann(
    m: &SpacetimeModel,
    eta: &Ray,
    x: &[f64],
    grid: &[f64],
) -> Result<BusemannEvaluation> {
    if eta.t_back <= 0.0 {
        return Err(Error::Config(
            "the reverse Busemann function needs a line".into(),
        ));
    }
    evaluate(x, grid, |t| Ok(t - long_distance(m, &eta.point(-t), x)?))
}

/// The upper support function `ρ(x) = b(z) + t − d(x, ζ(t))` at `z = ζ(0)`.
#[derive(Debug, Clone)]
pub struct SupportFunction {
    pub z: Vec<f64>,
    pub t: f64,
    pub b_z: f64,
    target: Vec<f64>,
}

impl SupportFunction {
    pub fn eval(&self, m: &SpacetimeModel, x: &[f64]) -> Result<f64> {
        Ok(self.b_z + self.t - long_distance(m, x, &self.target)?)
    }
}

pub fn support_function(zeta: &Ray, t: f64, b_z: f64) -> SupportFunction {
    SupportFunction {
        z: zeta.x0.clone(),
        t,
        b_z,
        target: zeta.point(t),
    }
}

/// `(ρ(z) − b(z), min over samples of ρ(x) − b_{t'}(x))`.
pub fn verify_support(
    m: &SpacetimeModel,
    eta: &Ray,
    rho: &SupportFunction,
    samples: &[Vec<f64>],
    t_far: f64,
) -> Result<(f64, f64)> {
    let at_z = rho.eval(m, &rho.z)? - rho.b_z;
    let mut margin = f64::INFINITY;
    for x in samples {
        let b = t_far - long_distance(m, x, &eta.point(t_far))?;
        margin = margin.min(rho.eval(m, x)? - b);
    }
    Ok((at_z, margin))
}

/// CSV rows: `x0.., t, b_t, limit, uncertainty`.
pub fn busemann_table(dim: usize, evals: &[BusemannEvaluation]) -> Table {
    let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    header.extend(["t", "b_t", "limit", "uncertainty"].map(String::from));
    let mut t = Table::new(header);
    for e in evals {
        for (tk, bk) in e.t.iter().zip(&e.values) {
            let mut row = e.x.clone();
            row.extend([*tk, *bk, e.limit, e.uncertainty]);
            t.push(row);
        }
    }
    t
}

/// Whether the model is flat along the line and Berwald, so that `b + b̄ = 0`
/// is expected rather than only `≥ 0`.
fn flat_along(m: &SpacetimeModel, eta: &Ray) -> bool {
    m.berwald == Some(true)
        && [-2.0, 0.0, 2.0].iter().all(|&t| {
            curvature_at(m, &eta.point(t), &eta.velocity(t))
                .map(|c| c.r.amax() < 1e-12)
                .unwrap_or(false)
        })
}

/// Grid `{t₀, 2t₀, 4t₀}` used for extrapolation.
pub fn default_grid(t0: f64) -> Vec<f64> {
    vec![t0, 2.0 * t0, 4.0 * t0]
}

/// The Busemann scenario along the orientation line through the origin.
pub fn busemann_scenario(
    m: &SpacetimeModel,
    samples: usize,
    seed: u64,
    t0: f64,
) -> Result<(ScenarioReport, Table)> {
    require_global(m)?;
    let d = m.dim;
    let mut rep = ScenarioReport::new("busemann");
    rep.config.insert("model".into(), m.name.clone());
    rep.config.insert("dim".into(), d.to_string());
    rep.config.insert("samples".into(), samples.to_string());
    rep.config.insert("seed".into(), seed.to_string());
    let origin = vec![0.0; d];
    let grid = default_grid(t0);
    let t_far = 1e6;
    let eta = Ray::line(m, &origin, &m.orientation(&origin), t_far)?;
    rep.push(CheckRecord::at_most(
        "unit-speed",
        eta.unit_speed_residual(m, 50)?,
        1e-9,
    ));
    let windows = [
        (0.0, 1.0),
        (0.0, 5.0),
        (2.0, 10.0),
        (-5.0, 5.0),
        (0.0, 100.0),
    ];
    rep.push(CheckRecord::at_most(
        "ray-straightness",
        eta.straightness(m, &windows)?,
        1e-7,
    ));

    let mut r = sampling::rng(seed);
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut x = vec![r.gen_range(-0.5..=0.5)];
        let sp = sampling::ball_point(&mut r, d - 1);
        x.extend(sp.iter().map(|c| 0.5 * c));
        xs.push(x);
    }
    let on_ray = eta.point(1.0);
    let b_on = busemann_truncated(m, &eta, &on_ray, &grid)?;
    let bb_on = reverse_busemann(m, &eta, &on_ray, &grid)?;
    let on_err = b_on
        .values
        .iter()
        .map(|b| (b - 1.0).abs())
        .fold(0.0, f64::max);
    rep.push(CheckRecord::at_most("b-on-ray", on_err, 1e-9).with_note("b_t(eta(1)) = 1"));
    rep.push(CheckRecord::at_most(
        "reverse-b-on-ray",
        (bb_on.limit + 1.0).abs(),
        1e-9,
    ));

    let mut evals = Vec::new();
    let mut sum_min = f64::INFINITY;
    let mut sum_abs: f64 = 0.0;
    let mut unc: f64 = 0.0;
    let mut mono = 0;
    let mut dropped = 0;
    for x in &xs {
        let b = busemann_truncated(m, &eta, x, &grid)?;
        let bb = reverse_busemann(m, &eta, x, &grid)?;
        let s = b.limit + bb.limit;
        sum_min = sum_min.min(s);
        sum_abs = sum_abs.max(s.abs());
        unc = unc.max(b.uncertainty).max(bb.uncertainty);
        mono += b.monotonicity_violations + bb.monotonicity_violations;
        dropped += b.dropped + bb.dropped;
        evals.push(b);
    }
    rep.push(CheckRecord::at_most(
        "monotonicity-violations",
        mono as f64,
        0.0,
    ));
    rep.push(CheckRecord::at_most("dropped-samples", dropped as f64, 0.0));
    rep.push(CheckRecord::at_most("extrapolation-uncertainty", unc, 1e-3));
    rep.push(CheckRecord::margin("b-plus-reverse-b", sum_min, 2e-3));
    if flat_along(m, &eta) {
        rep.push(CheckRecord::at_most(
            "b-plus-reverse-b-equality",
            sum_abs,
            2e-3,
        ));
    } else {
        rep.push(
            CheckRecord::info("b-plus-reverse-b-equality", sum_abs)
                .with_note("equality not expected"),
        );
    }

    // Reverse triangle inequality b(y) ≥ b(x) + d(x, y).
    let mut tri = f64::INFINITY;
    for (x, bx) in xs.iter().zip(&evals).take(20) {
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, c)| c + if i == 0 { 0.3 } else { 0.05 })
            .collect();
        let by = busemann_truncated(m, &eta, &y, &grid)?;
        let dxy = long_distance(m, x, &y)?;
        tri = tri.min(by.limit - bx.limit - dxy);
    }
    rep.push(CheckRecord::margin("reverse-triangle", tri, 1e-6));

    // Upper support function at an off-axis z along the asymptote through z.
    let mut z = vec![0.0; d];
    z[1] = 0.3;
    let bz = busemann_truncated(m, &eta, &z, &grid)?.limit;
    let zeta = Ray::new(m, &z, &eta.velocity(0.0), 10.0)?;
    let rho = support_function(&zeta, 5.0, bz);
    let near: Vec<Vec<f64>> = (0..100)
        .map(|_| {
            let p = sampling::ball_point(&mut r, d);
            z.iter().zip(&p).map(|(a, b)| a + 0.2 * b).collect()
        })
        .collect();
    let (at_z, margin) = verify_support(m, &eta, &rho, &near, t_far)?;
    rep.push(CheckRecord::at_most("support-at-z", at_z.abs(), 1e-9));
    rep.push(CheckRecord::margin("support-upper-bound", margin, 1e-6));
    Ok((rep, busemann_table(d, &evals)))
}

// ------------------------------------------------------ Laplacian comparison

/// One grid row of the comparison.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonRow {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `(RHS − LHS)·t`.
    pub margin: f64,
}

fn comparison_rows(
    m: &SpacetimeModel,
    z: &[f64],
    v: &[f64],
    c: f64,
    epsilon: f64,
    grid: &[f64],
) -> Result<Vec<ComparisonRow>> {
    let n = m.n() as f64;
    let t_max = grid.iter().copied().fold(0.0, f64::max);
    let cong = distance_congruence(m, z, v, (0.0, t_max * 1.05), 1e-11)?;
    let k = 2.0 * (epsilon - 1.0) / n;
    let mut rows = Vec::with_capacity(grid.len());
    for &t in grid {
        if t > cong.t1 {
            return Err(Error::Numerical(format!("conjugate point before t = {t}")));
        }
        let p = cong.at(t);
        let b = cong.shape_operator(t)?;
        let psi1: f64 = if m.weight.is_zero() {
            0.0
        } else {
            m.weight
                .gradient(&p.x)?
                .iter()
                .zip(&p.v)
                .map(|(a, b)| a * b)
                .sum()
        };
        let lhs = b.trace() - psi1;
        let panels = (t.ceil() as usize).clamp(2, 64);
        let integral =
            quadrature::integrate(|s| (k * m.weight.eval(&cong.at(s).x)).exp(), 0.0, t, panels);
        let rhs = (k * m.weight.eval(&p.x)).exp() / (c * integral);
        rows.push(ComparisonRow {
            t,
            lhs,
            rhs,
            margin: (rhs - lhs) * t,
        });
    }
    Ok(rows)
}

/// Samples `Ric_N` at `η̇(t)` and nearby timelike directions along `η`.
fn ric_n_minimum(
    m: &SpacetimeModel,
    z: &[f64],
    v: &[f64],
    n_eff: NEff,
    grid: &[f64],
) -> Result<f64> {
    let t_max = grid.iter().copied().fold(0.0, f64::max);
    let seg = integrate_geodesic(m, z, v, (0.0, t_max), 1e-11)?;
    let mut worst = f64::INFINITY;
    let mut r = sampling::rng(17);
    for &t in grid.iter().step_by((grid.len() / 10).max(1)) {
        let x = seg.point(t);
        let mut dirs = vec![seg.velocity(t)];
        for _ in 0..4 {
            dirs.push(sampling::cone_vector(&mut r, m.dim, 0.5));
        }
        for w in dirs {
            let cd = curvature_at(m, &x, &w)?;
            let (p1, p2) = m.weight.along_geodesic(&x, &w, &cd.spray)?;
            let val = weighted_ricci_from(cd.ric, p1, p2, n_eff, m.n())?;
            worst = worst.min(val / crate::model::norm2(&w));
        }
    }
    Ok(worst)
}

/// Checks `Δ^Ψ(−u)(η(t)) ≤ e^{kΨ(η(t))}/(c∫₀ᵗ e^{kΨ(η(s))}ds)`, `k = 2(ε−1)/n`,
/// for `u = d(z, ·)` along `η(t) = exp_z(tv)`, and the reverse statement on
/// the reverse structure. Gated by the sampled `Ric_N ≥ 0` precondition.
pub fn verify_laplacian_comparison(
    m: &SpacetimeModel,
    z: &[f64],
    v: &[f64],
    n_eff: NEff,
    epsilon: f64,
    grid: &[f64],
) -> Result<(ScenarioReport, Table)> {
    let n = m.n();
    let nv = n_eff.value(n);
    let range = require_admissible(nv, epsilon, n)?;
    let mut rep = ScenarioReport::new("laplacian-comparison");
    rep.config.insert("model".into(), m.name.clone());
    rep.config.insert("dim".into(), m.dim.to_string());
    rep.config.insert("N".into(), n_eff.label(n));
    rep.config.insert("epsilon".into(), epsilon.to_string());
    rep.config.insert("c".into(), range.c.to_string());
    let u = unit_timelike(m, z, v)?;
    let rev = m.reversed();
    let u_rev: Vec<f64> = u.iter().map(|c| -c).collect();
    let pre_f = ric_n_minimum(m, z, &u, n_eff, grid)?;
    let pre_r = ric_n_minimum(&rev, z, &u_rev, n_eff, grid)?;
    let pre = pre_f.min(pre_r);
    rep.push(
        CheckRecord::margin("precondition-ric-n", pre, 1e-10)
            .with_note("min sampled Ric_N / |v|^2 along eta"),
    );
    let mut table = Table::new(["direction", "t", "lhs", "rhs", "margin"]);
    if pre < -1e-10 {
        rep.note("precondition Ric_N >= 0 fails on samples: the comparison is not applicable, no verdict");
        return Ok((rep, table));
    }
    let equality_expected = m.weight.is_zero() && (epsilon == 0.0 || matches!(n_eff, NEff::LimitN));
    for (label, model, dir, sign) in [("forward", m, &u, 1.0), ("reverse", &rev, &u_rev, -1.0)] {
        let rows = comparison_rows(model, z, dir, range.c, epsilon, grid)?;
        let worst = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
        rep.push(CheckRecord::margin(format!("{label}.margin"), worst, 1e-6));
        let gap = rows.iter().map(|r| r.margin.abs()).fold(0.0, f64::max);
        if equality_expected {
            rep.push(CheckRecord::at_most(format!("{label}.equality"), gap, 1e-9));
        } else {
            rep.push(CheckRecord::info(format!("{label}.equality"), gap));
        }
        for r in rows {
            table.push(vec![sign, r.t, r.lhs, r.rhs, r.margin]);
        }
    }
    Ok((rep, table))
}

/// Uniform grid on `[a, b]`.
pub fn linear_grid(a: f64, b: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| a + (b - a) * k as f64 / (points.max(2) - 1) as f64)
        .collect()
}
