//! Polar cone, dual structure, Legendre transform, and the gradient,
//! Hessian and Laplacians of temporal functions.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::connection::{checked_inverse, spray, spray_and_nonlinear};
use crate::error::{Error, Result};
use crate::geodesic::integrate_geodesic_with_stops;
use crate::jet::{lift_point, Jet};
use crate::model::{CausalKind, Orientation, SpacetimeModel};
use crate::report::{CheckRecord, ScenarioReport};
use crate::sampling;

/// Stationarity tolerance of the inner Newton solve.
pub const LEGENDRE_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 60;
/// Spatial directions used to locate the null boundary.
const BOUNDARY_DIRECTIONS: usize = 64;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Null-boundary vectors `X + s·(0, u)` of the future cone at `x`, one per
/// spatial direction `u`, found by bisection on `L`.
pub fn null_boundary(m: &SpacetimeModel, x: &[f64], directions: usize) -> Vec<Vec<f64>> {
    let d = m.dim;
    let xo = m.orientation(x);
    let inside = |s: f64, u: &[f64]| -> bool {
        let v: Vec<f64> = (0..d)
            .map(|a| xo[a] + if a == 0 { 0.0 } else { s * u[a - 1] })
            .collect();
        m.in_domain(&v) && matches!(m.eval_l(x, &v), Ok(l) if l < 0.0)
    };
    let mut out = Vec::new();
    for u in sampling::sphere_directions(d - 1, directions) {
        let mut hi = 1.0;
        while inside(hi, &u) && hi < 1e8 {
            hi *= 2.0;
        }
        if hi >= 1e8 {
            continue;
        }
        let mut lo = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if inside(mid, &u) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(
            (0..d)
                .map(|a| xo[a] + if a == 0 { 0.0 } else { lo * u[a - 1] })
                .collect(),
        );
    }
    out
}

/// Sampled polar-cone test: `ω(X) < 0` and `ω < 0` on the null boundary.
pub fn in_polar_cone(m: &SpacetimeModel, x: &[f64], omega: &[f64]) -> bool {
    let xo = m.orientation(x);
    if !(dot(omega, &xo) < 0.0) {
        return false;
    }
    null_boundary(m, x, BOUNDARY_DIRECTIONS)
        .iter()
        .all(|v| dot(omega, v) < 0.0)
}

fn residual(
    m: &SpacetimeModel,
    x: &[f64],
    v: &[f64],
    omega: &[f64],
) -> Option<(DVector<f64>, f64)> {
    if !m.in_domain(v) {
        return None;
    }
    let l = m.eval_l(x, v).ok()?;
    if l >= 0.0 || dot(omega, v) >= 0.0 {
        return None;
    }
    let dl = m.dl_dv(x, v).ok()?;
    let r = DVector::from_fn(m.dim, |i, _| omega[i] - dl[i]);
    let n = r.amax();
    Some((r, n))
}

/// `ℒ*(ω)`: the future timelike `v` with `g_v(v, ·) = ω`.
///
/// A converged future-directed solution certifies `ω ∈ Ω*` (the image of
/// the future cone), so the boundary scan only runs when Newton fails.
pub fn legendre_transform(m: &SpacetimeModel, x: &[f64], omega: &[f64]) -> Result<Vec<f64>> {
    let d = m.dim;
    if omega.iter().all(|&c| c == 0.0) {
        return Ok(vec![0.0; d]);
    }
    let attempt = newton_legendre(m, x, omega).and_then(|v| {
        let xo = m.orientation(x);
        let future = dot(m.dl_dv(x, &xo)?.as_slice(), &v) < 0.0;
        if future {
            Ok(v)
        } else {
            Err(Error::Numerical(format!(
                "Legendre transform of {omega:?} at {x:?} converged to a past-directed vector"
            )))
        }
    });
    match attempt {
        Ok(v) => Ok(v),
        Err(_) if !in_polar_cone(m, x, omega) => Err(Error::Domain(format!(
            "covector {omega:?} at {x:?} is not in the polar cone"
        ))),
        Err(e) => Err(e),
    }
}

fn newton_legendre(m: &SpacetimeModel, x: &[f64], omega: &[f64]) -> Result<Vec<f64>> {
    let d = m.dim;
    let scale = omega.iter().map(|c| c.abs()).fold(0.0, f64::max);
    let tol = LEGENDRE_TOL * scale.max(1.0);
    // Warm start: index raising by g at the orientation vector.
    let xo = m.orientation(x);
    let mut v: Vec<f64> = match m
        .fundamental_tensor(x, &xo)
        .and_then(|g| checked_inverse(&g))
    {
        Ok(gi) => (gi * DVector::from_column_slice(omega))
            .iter()
            .copied()
            .collect(),
        Err(_) => vec![f64::NAN; d],
    };
    let mut state = residual(m, x, &v, omega);
    if state.is_none() {
        let lx = m.eval_l(x, &xo)?;
        let c = dot(omega, &xo) / (2.0 * lx);
        v = xo.iter().map(|a| c * a).collect();
        state = residual(m, x, &v, omega);
    }
    let Some((mut r, mut rn)) = state else {
        return Err(Error::Numerical(format!(
            "Legendre transform of {omega:?} at {x:?}: no admissible starting vector"
        )));
    };
    let mut iter = 0;
    while rn > tol {
        iter += 1;
        if iter > MAX_NEWTON {
            return Err(Error::Numerical(format!(
                "Legendre transform of {omega:?} at {x:?} did not converge: residual {rn:e} after {MAX_NEWTON} iterations"
            )));
        }
        let g = m.g_raw(x, &v)?;
        let Some(step) = g.lu().solve(&r) else {
            return Err(Error::Numerical(format!(
                "singular fundamental tensor at v = {v:?}"
            )));
        };
        let mut lambda = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = (0..d).map(|i| v[i] + lambda * step[i]).collect();
            if let Some((rt, rtn)) = residual(m, x, &trial, omega) {
                if rtn < rn || rtn <= tol {
                    v = trial;
                    r = rt;
                    rn = rtn;
                    moved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !moved {
            return Err(Error::Numerical(format!(
                "Legendre transform of {omega:?} at {x:?} stalled at residual {rn:e}"
            )));
        }
    }
    Ok(v)
}

/// `L*(ω) = ω(ℒ*ω)/2`, the value of `−½ (sup ω over the unit indicatrix)²`.
pub fn dual_l(m: &SpacetimeModel, x: &[f64], omega: &[f64]) -> Result<f64> {
    let v = legendre_transform(m, x, omega)?;
    Ok(0.5 * dot(omega, &v))
}

/// `¼ω(v)² − L*(ω)L(v)`, nonnegative by the reverse Cauchy–Schwarz inequality.
pub fn reverse_cauchy_schwarz_gap(
    m: &SpacetimeModel,
    x: &[f64],
    v: &[f64],
    omega: &[f64],
) -> Result<f64> {
    let ls = dual_l(m, x, omega)?;
    let l = m.eval_l(x, v)?;
    let w = dot(omega, v);
    Ok(0.25 * w * w - ls * l)
}

// ------------------------------------------------------- temporal functions

type ScalarFn = Arc<dyn Fn(&[Jet]) -> Jet + Send + Sync>;

/// A jet-evaluable scalar function intended to be temporal (`−df ∈ Ω*`).
#[derive(Clone)]
pub struct TemporalFunction {
    pub name: String,
    f: ScalarFn,
}

impl std::fmt::Debug for TemporalFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TemporalFunction({})", self.name)
    }
}

impl TemporalFunction {
    pub fn new(name: impl Into<String>, f: impl Fn(&[Jet]) -> Jet + Send + Sync + 'static) -> Self {
        TemporalFunction {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// `f = x⁰`.
    pub fn time() -> Self {
        Self::new("x0", |x| x[0].clone())
    }

    /// `f = Σ c_α x^α`.
    pub fn linear(c: Vec<f64>) -> Self {
        Self::new(format!("linear{c:?}"), move |x| {
            let mut s = Jet::constant(0.0);
            for (xi, ci) in x.iter().zip(&c) {
                s = s + xi * *ci;
            }
            s
        })
    }

    /// Minkowski distance from the vertex `z`: `sqrt((x⁰−z⁰)² − |x̄ − z̄|²)`.
    pub fn minkowski_distance(z: Vec<f64>) -> Self {
        Self::new(format!("d({z:?}, .)"), move |x| {
            let w0 = &x[0] - z[0];
            let mut s = &w0 * &w0;
            for i in 1..x.len() {
                let wi = &x[i] - z[i];
                s = s - &wi * &wi;
            }
            s.sqrt()
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let xs: Vec<Jet> = x.iter().map(|&c| Jet::constant(c)).collect();
        (self.f)(&xs).value()
    }

    /// `df` and `Hess f` in coordinates.
    pub fn derivatives(&self, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let d = x.len();
        let j = lift_point(&*self.f, x, 2)?;
        let mut df = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        for a in 0..d {
            df[a] = j.partial(&[], &[a])?;
            for b in 0..d {
                h[(a, b)] = j.partial(&[], &[a, b])?;
            }
        }
        Ok((df, h))
    }

    pub fn differential(&self, x: &[f64]) -> Result<DVector<f64>> {
        let j = lift_point(&*self.f, x, 1)?;
        (0..x.len())
            .map(|a| j.partial(&[], &[a]))
            .collect::<Result<Vec<_>>>()
            .map(DVector::from_vec)
    }
}

/// `∇(−f)(x) = ℒ*(−df(x))`.
pub fn gradient(m: &SpacetimeModel, f: &TemporalFunction, x: &[f64]) -> Result<Vec<f64>> {
    let omega: Vec<f64> = f.differential(x)?.iter().map(|c| -c).collect();
    covector_gradient(m, x, &omega)
}

/// `ℒ*(ω)` with a not-temporal error when `ω ∉ Ω*`.
pub fn covector_gradient(m: &SpacetimeModel, x: &[f64], omega: &[f64]) -> Result<Vec<f64>> {
    match legendre_transform(m, x, omega) {
        Err(Error::Domain(_)) => Err(Error::NotTemporal {
            x: x.to_vec(),
            covector: omega.to_vec(),
        }),
        other => other,
    }
}

/// Gradient and Hessian of `−f` at one point.
#[derive(Debug, Clone)]
pub struct HessianData {
    pub x: Vec<f64>,
    /// `V = ∇(−f)(x)`.
    pub gradient: Vec<f64>,
    /// `g_V`.
    pub g: DMatrix<f64>,
    /// `∇²(−f)` as a matrix: `v ↦ D^V_v V`.
    pub h: DMatrix<f64>,
}

impl HessianData {
    pub fn laplacian(&self) -> f64 {
        self.h.trace()
    }

    /// `g_V(∇²(−f)(v), w)`.
    pub fn form(&self, v: &[f64], w: &[f64]) -> f64 {
        let hv = &self.h * DVector::from_column_slice(v);
        (DVector::from_column_slice(w).transpose() * &self.g * hv)[(0, 0)]
    }

    /// Relative asymmetry of `g_V ∘ ∇²(−f)`.
    pub fn symmetry_residual(&self) -> f64 {
        let s = &self.g * &self.h;
        let scale = s.amax().max(1.0);
        (&s - s.transpose()).amax() / scale
    }
}

/// `∇²(−f)(v) = D^V_v V` with `V = ∇(−f)`: `∂V/∂x` follows from
/// differentiating `∂L/∂v(x, V(x)) = −df(x)`, then `H = ∂V + N(V)`.
pub fn hessian(m: &SpacetimeModel, f: &TemporalFunction, x: &[f64]) -> Result<HessianData> {
    let d = m.dim;
    let (df, hf) = f.derivatives(x)?;
    let omega: Vec<f64> = df.iter().map(|c| -c).collect();
    let v = covector_gradient(m, x, &omega)?;
    let lj = m.l_jet(x, &v, 2, 1)?;
    let mut g = DMatrix::zeros(d, d);
    let mut lvx = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            g[(a, b)] = lj.partial(&[a, b], &[])?;
            lvx[(a, b)] = lj.partial(&[a], &[b])?;
        }
    }
    let gi = checked_inverse(&g)?;
    let dv = gi * (-hf - lvx);
    let (_, n) = spray_and_nonlinear(m, x, &v)?;
    Ok(HessianData {
        x: x.to_vec(),
        gradient: v,
        g,
        h: dv + n,
    })
}

/// `Δ(−f) = tr ∇²(−f)`.
pub fn laplacian(m: &SpacetimeModel, f: &TemporalFunction, x: &[f64]) -> Result<f64> {
    Ok(hessian(m, f, x)?.laplacian())
}

/// `Δ^Ψ(−f) = Δ(−f) − dΨ(∇(−f))`.
pub fn weighted_laplacian(m: &SpacetimeModel, f: &TemporalFunction, x: &[f64]) -> Result<f64> {
    let h = hessian(m, f, x)?;
    let dpsi = m.weight.gradient(x)?;
    Ok(h.laplacian() - dot(dpsi.as_slice(), &h.gradient))
}

/// `(−f∘ξ)''(0)` along the geodesic `ξ` with `ξ(0) = x`, `ξ̇(0) = v`, from
/// Richardson-extrapolated second differences of the integrated geodesic.
pub fn second_derivative_along_geodesic(
    m: &SpacetimeModel,
    f: &TemporalFunction,
    x: &[f64],
    v: &[f64],
    h: f64,
) -> Result<f64> {
    let h = h / v.iter().map(|c| c.abs()).fold(1.0, f64::max);
    let fwd = integrate_geodesic_with_stops(m, x, v, (0.0, h), 1e-13, &[0.25 * h, 0.5 * h])?;
    let bwd = integrate_geodesic_with_stops(m, x, v, (0.0, -h), 1e-13, &[-0.25 * h, -0.5 * h])?;
    let phi = |s: f64| -> f64 {
        let p = if s >= 0.0 { fwd.point(s) } else { bwd.point(s) };
        -f.eval(&p)
    };
    let p0 = phi(0.0);
    let d2 = |s: f64| (phi(s) - 2.0 * p0 + phi(-s)) / (s * s);
    let (a, b, c) = (d2(h), d2(0.5 * h), d2(0.25 * h));
    let r1 = (4.0 * b - a) / 3.0;
    let r2 = (4.0 * c - b) / 3.0;
    Ok((16.0 * r2 - r1) / 15.0)
}

/// `(−f∘ξ)''(0)` from jets: `−Hess f(v, v) + 2 df(G(v))`.
pub fn second_derivative_exact(
    m: &SpacetimeModel,
    f: &TemporalFunction,
    x: &[f64],
    v: &[f64],
) -> Result<f64> {
    let (df, hf) = f.derivatives(x)?;
    let g = spray(m, x, v)?;
    let vv = DVector::from_column_slice(v);
    Ok(-(vv.transpose() * hf * &vv)[(0, 0)] + 2.0 * dot(df.as_slice(), &g))
}

// ------------------------------------------------------------------- suite

/// Round trip, reverse Cauchy–Schwarz, Hessian symmetry and (on Berwald
/// models) the second-derivative law on sampled points.
pub fn legendre_suite(m: &SpacetimeModel, pairs: usize, seed: u64) -> ScenarioReport {
    let mut rep = ScenarioReport::new("legendre-roundtrip");
    rep.config.insert("model".into(), m.name.clone());
    rep.config.insert("dim".into(), m.dim.to_string());
    rep.config.insert("pairs".into(), pairs.to_string());
    rep.config.insert("seed".into(), seed.to_string());
    let d = m.dim;
    let ap = m.audit_aperture;

    // Round trip and reverse Cauchy–Schwarz on random cone pairs.
    struct Pair {
        roundtrip: f64,
        rcs_margin: f64,
        equality: f64,
        failed: bool,
    }
    let results: Vec<Pair> = (0..pairs)
        .into_par_iter()
        .map(|k| {
            let mut r = sampling::rng(seed.wrapping_add(k as u64));
            let x = sampling::box_point(&mut r, d, m.audit_box);
            let v = sample_future_timelike(m, &x, &mut r, ap);
            let w = sample_future_timelike(m, &x, &mut r, ap);
            let scale = r.gen_range(0.25..4.0);
            let run = || -> Result<Pair> {
                let (v, w) = (v?, w?);
                let omega: Vec<f64> = m.dl_dv(&x, &w)?.iter().map(|c| c * scale).collect();
                let t = legendre_transform(m, &x, &omega)?;
                let back = m.dl_dv(&x, &t)?;
                let oscale = omega.iter().map(|c| c.abs()).fold(1e-300, f64::max);
                let roundtrip = (0..d)
                    .map(|i| (back[i] - omega[i]).abs())
                    .fold(0.0, f64::max)
                    / oscale;
                let ls = 0.5 * dot(&omega, &t);
                let l = m.eval_l(&x, &v)?;
                let wv = dot(&omega, &v);
                let rcs_margin = (0.25 * wv * wv - ls * l) / (0.25 * wv * wv);
                let lt = m.eval_l(&x, &t)?;
                let wt = dot(&omega, &t);
                let equality = (0.25 * wt * wt - ls * lt).abs() / (0.25 * wt * wt);
                Ok(Pair {
                    roundtrip,
                    rcs_margin,
                    equality,
                    failed: false,
                })
            };
            run().unwrap_or(Pair {
                roundtrip: f64::INFINITY,
                rcs_margin: f64::NEG_INFINITY,
                equality: f64::INFINITY,
                failed: true,
            })
        })
        .collect();
    let failures = results.iter().filter(|p| p.failed).count();
    let rt = results.iter().map(|p| p.roundtrip).fold(0.0, f64::max);
    let rcs = results
        .iter()
        .map(|p| p.rcs_margin)
        .fold(f64::INFINITY, f64::min);
    let eq = results.iter().map(|p| p.equality).fold(0.0, f64::max);
    rep.push(CheckRecord::at_most("roundtrip", rt, 1e-9));
    rep.push(
        CheckRecord::margin("reverse-cauchy-schwarz", rcs, 1e-12)
            .with_note("min over pairs of (w(v)^2/4 - L*(w) L(v)) / (w(v)^2/4)"),
    );
    rep.push(CheckRecord::at_most(
        "reverse-cauchy-schwarz-equality",
        eq,
        1e-9,
    ));
    rep.push(CheckRecord::at_most(
        "solver-failures",
        failures as f64,
        0.0,
    ));

    // Hessian symmetry and the second-derivative law.
    let points = 24;
    let functions = |x: &[f64]| -> Vec<TemporalFunction> {
        let mut z = x.to_vec();
        z[0] -= 1.5;
        if d > 1 {
            z[1] += 0.2;
        }
        vec![
            TemporalFunction::minkowski_distance(z),
            TemporalFunction::new("x0 + 0.1 sin(x1) + 0.05 x0^2", |y| {
                &y[0] + y[1].sin() * 0.1 + &y[0] * &y[0] * 0.05
            }),
        ]
    };
    let mut sym: f64 = 0.0;
    let mut law: f64 = 0.0;
    let mut hess_fail = 0usize;
    let mut r = sampling::rng(seed ^ 0x5eed);
    for _ in 0..points {
        let x = sampling::box_point(&mut r, d, 0.5 * m.audit_box);
        let v = sampling::cone_vector(&mut r, d, 0.5 * ap);
        for f in functions(&x) {
            match hessian(m, &f, &x) {
                Ok(h) => {
                    sym = sym.max(h.symmetry_residual());
                    if m.berwald == Some(true) {
                        match second_derivative_along_geodesic(m, &f, &x, &v, 0.05) {
                            Ok(fd) => law = law.max((fd - h.form(&v, &v)).abs()),
                            Err(_) => hess_fail += 1,
                        }
                    }
                }
                Err(_) => hess_fail += 1,
            }
        }
    }
    rep.push(CheckRecord::at_most("hessian-symmetry", sym, 1e-8));
    if m.berwald == Some(true) {
        rep.push(CheckRecord::at_most("berwald-second-derivative", law, 1e-7));
    } else {
        rep.push(
            CheckRecord::info("berwald-second-derivative", law).with_note("model is not Berwald"),
        );
    }
    rep.push(CheckRecord::at_most(
        "hessian-failures",
        hess_fail as f64,
        0.0,
    ));
    rep
}

/// `|ω|` scaled sample helper for tests and the CLI: `−dL/dv(w)`-type
/// covectors lie in the polar cone.
pub fn sample_polar_covector(
    m: &SpacetimeModel,
    x: &[f64],
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let w = sample_future_timelike(m, x, rng, m.audit_aperture)?;
    Ok(m.dl_dv(x, &w)?.iter().copied().collect())
}

/// A future timelike vector at `x`: coordinate-cone samples, narrowed until
/// the model's own cone accepts one.
pub fn sample_future_timelike(
    m: &SpacetimeModel,
    x: &[f64],
    rng: &mut impl Rng,
    aperture: f64,
) -> Result<Vec<f64>> {
    let mut ap = aperture;
    for _ in 0..200 {
        let v = sampling::cone_vector(rng, m.dim, ap);
        let c = m.classify(x, &v)?;
        if c.kind == CausalKind::Timelike && c.orientation == Orientation::Future {
            return Ok(v);
        }
        ap *= 0.9;
    }
    Err(Error::Domain(format!(
        "no future timelike sample found at {x:?}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, Weight};
    use std::collections::BTreeMap;

    fn model(name: &str, dim: usize) -> SpacetimeModel {
        build_model(name, dim, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn minkowski_examples() {
        let m = model("minkowski", 3);
        let x = [0.0; 3];
        assert!((dual_l(&m, &x, &[-1.0, 0.0, 0.0]).unwrap() + 0.5).abs() < 1e-14);
        assert!((dual_l(&m, &x, &[-2.0, 0.0, 0.0]).unwrap() + 2.0).abs() < 1e-13);
        assert!(matches!(
            dual_l(&m, &x, &[0.0, 1.0, 0.0]),
            Err(Error::Domain(_))
        ));
        let v = legendre_transform(&m, &x, &[-1.0, 0.5, 0.0]).unwrap();
        for (a, b) in v.iter().zip([1.0, 0.5, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(legendre_transform(&m, &x, &[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn dual_matches_indicatrix_sampling() {
        // sup of ω(v) over the unit hyperboloid, by dense sampling.
        let m = model("minkowski", 2);
        let omega = [-1.0, 0.3];
        let mut best = f64::NEG_INFINITY;
        for k in 0..200001 {
            let s = -6.0 + 12.0 * k as f64 / 200000.0;
            let v = [s.cosh(), s.sinh()];
            best = best.max(omega[0] * v[0] + omega[1] * v[1]);
        }
        let oracle = -0.5 * best * best;
        assert!((dual_l(&m, &[0.0, 0.0], &omega).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn quartic_roundtrip_and_homogeneity() {
        for name in [
            "flat-quartic",
            "product-berwald",
            "nonberwald-quartic",
            "flrw",
        ] {
            let m = model(name, 4);
            let x = [0.1, 0.2, -0.1, 0.3];
            let omega = m.dl_dv(&x, &[1.0, 0.4, -0.3, 0.2]).unwrap();
            let o: Vec<f64> = omega.iter().copied().collect();
            let v = legendre_transform(&m, &x, &o).unwrap();
            for (a, b) in v.iter().zip([1.0, 0.4, -0.3, 0.2]) {
                assert!((a - b).abs() < 1e-10, "{name}");
            }
            let o3: Vec<f64> = o.iter().map(|c| 3.0 * c).collect();
            let v3 = legendre_transform(&m, &x, &o3).unwrap();
            for (a, b) in v3.iter().zip(&v) {
                assert!((a - 3.0 * b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gradient_examples() {
        let m = model("minkowski", 3);
        let x = [0.3, 0.1, 0.0];
        let g = gradient(&m, &TemporalFunction::time(), &x).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12 && g[1].abs() < 1e-12);
        let g = gradient(&m, &TemporalFunction::linear(vec![1.0, -0.5, 0.0]), &x).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12 && (g[1] - 0.5).abs() < 1e-12);
        let bad = gradient(&m, &TemporalFunction::linear(vec![0.0, 1.0, 0.0]), &x);
        assert!(matches!(bad, Err(Error::NotTemporal { .. })));
    }

    #[test]
    fn laplacian_examples() {
        let m = model("minkowski", 4);
        assert!(
            laplacian(&m, &TemporalFunction::time(), &[0.0; 4])
                .unwrap()
                .abs()
                < 1e-14
        );
        let u = TemporalFunction::minkowski_distance(vec![0.0; 4]);
        for t in [0.5, 1.0, 2.0] {
            let h = hessian(&m, &u, &[t, 0.0, 0.0, 0.0]).unwrap();
            assert!((h.laplacian() - 3.0 / t).abs() < 1e-12);
            assert!(h.h.column(0).amax() < 1e-12);
        }
        let w = model("minkowski", 4).with_weight(Weight::time_linear(-0.5));
        let l = weighted_laplacian(&w, &TemporalFunction::time(), &[0.2, 0.0, 0.0, 0.0]).unwrap();
        assert!((l - 0.5).abs() < 1e-14);
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let m = model("flrw", 3);
        let f = TemporalFunction::minkowski_distance(vec![-1.5, 0.2, 0.0]);
        let x = [0.1, 0.1, -0.2];
        let h = hessian(&m, &f, &x).unwrap();
        let (_, n) = spray_and_nonlinear(&m, &x, &h.gradient).unwrap();
        let eps = 1e-5;
        for b in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[b] += eps;
            xm[b] -= eps;
            let gp = gradient(&m, &f, &xp).unwrap();
            let gm = gradient(&m, &f, &xm).unwrap();
            for a in 0..3 {
                let fd = (gp[a] - gm[a]) / (2.0 * eps) + n[(a, b)];
                assert!((fd - h.h[(a, b)]).abs() < 1e-7);
            }
        }
        assert!(h.symmetry_residual() < 1e-10);
    }

    #[test]
    fn second_derivative_law() {
        let m = model("flrw", 3);
        let f = TemporalFunction::minkowski_distance(vec![-1.5, 0.2, 0.0]);
        let x = [0.1, 0.1, -0.2];
        let v = [1.0, 0.3, 0.1];
        let h = hessian(&m, &f, &x).unwrap();
        let exact = second_derivative_exact(&m, &f, &x, &v).unwrap();
        let fd = second_derivative_along_geodesic(&m, &f, &x, &v, 0.05).unwrap();
        assert!((exact - fd).abs() < 1e-8);
        assert!((h.form(&v, &v) - exact).abs() < 1e-10);
    }

    #[test]
    fn suite_passes_on_quartic() {
        let rep = legendre_suite(&model("flat-quartic", 3), 200, 3);
        assert!(rep.passed(), "{}", rep.to_text());
    }
}
