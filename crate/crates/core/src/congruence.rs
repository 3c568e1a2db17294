//! Lagrange tensors along unit-speed timelike geodesics, the Riccati shape
//! operator, ε-weighted expansion and shear, and the weighted Raychaudhuri
//! identity.

use nalgebra::DMatrix;

use crate::curvature::{curvature_at, require_admissible, weighted_ricci_from, NEff, LIMIT_N_TOL};
use crate::error::{Error, Result};
use crate::geodesic::{integrate_frame, FrameSolution};
use crate::model::SpacetimeModel;
use crate::quadrature;
use crate::report::{CheckRecord, ScenarioReport, Table};

/// Tolerance on `F(ζ̇) = 1`.
pub const UNIT_SPEED_TOL: f64 = 1e-9;

/// `v / F(v)`.
pub fn unit_timelike(m: &SpacetimeModel, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let f = m.finsler_f(x, v)?;
    if f <= 0.0 {
        return Err(Error::Domain(format!("{v:?} is not timelike at {x:?}")));
    }
    Ok(v.iter().map(|c| c / f).collect())
}

/// Columns `(ζ̇, e₁, …, eₙ)` with the `eᵢ` a `g_ζ̇`-orthonormal basis of the
/// `g_ζ̇`-orthogonal complement of `ζ̇` (Gram–Schmidt on coordinate axes).
pub fn adapted_frame(m: &SpacetimeModel, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
    let d = m.dim;
    let g = m.fundamental_tensor(x, v)?;
    let ip = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += a[i] * g[(i, j)] * b[j];
            }
        }
        s
    };
    let mut cols: Vec<Vec<f64>> = vec![v.to_vec()];
    let vv = ip(v, v);
    for axis in 0..d {
        if cols.len() == d {
            break;
        }
        let mut w = vec![0.0; d];
        w[axis] = 1.0;
        // Remove the ζ̇ component (g(ζ̇, ζ̇) < 0) and earlier spatial vectors.
        let c0 = ip(&w, v) / vv;
        for i in 0..d {
            w[i] -= c0 * v[i];
        }
        for e in &cols[1..] {
            let c = ip(&w, e);
            for i in 0..d {
                w[i] -= c * e[i];
            }
        }
        let nn = ip(&w, &w);
        if nn > 1e-8 {
            let s = nn.sqrt();
            cols.push(w.iter().map(|c| c / s).collect());
        }
    }
    if cols.len() != d {
        return Err(Error::Numerical(
            "could not complete an orthonormal frame".into(),
        ));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| cols[j][i]))
}

/// A Lagrange tensor field `J` along `ζ`, stored as frame coefficients.
#[derive(Debug, Clone)]
pub struct Congruence {
    pub dim: usize,
    pub n: usize,
    pub t0: f64,
    /// End of the usable interval (the first conjugate point, if any).
    pub t1: f64,
    pub conjugate_point: Option<f64>,
    pub frame: FrameSolution,
}

/// Everything at one parameter value.
#[derive(Debug, Clone)]
pub struct CongruencePoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Transported frame `(ζ̇, e₁, …, eₙ)`.
    pub e: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub jp: DMatrix<f64>,
    /// `B = J'J⁻¹` in the orthonormal normal frame; `None` at conjugate points.
    pub b: Option<DMatrix<f64>>,
}

impl Congruence {
    pub fn at(&self, t: f64) -> CongruencePoint {
        let (x, v, e, a, ap) = self.frame.state(t);
        let n = self.n;
        let j = a.view((1, 0), (n, n)).into_owned();
        let jp = ap.view((1, 0), (n, n)).into_owned();
        let b = j.clone().try_inverse().map(|ji| &jp * ji);
        CongruencePoint {
            t,
            x,
            v,
            e,
            j,
            jp,
            b,
        }
    }

    pub fn shape_operator(&self, t: f64) -> Result<DMatrix<f64>> {
        self.at(t)
            .b
            .ok_or_else(|| Error::Numerical(format!("J is singular at t = {t}")))
    }

    /// `B` acting on coordinate vectors of `N_ζ(t)`.
    pub fn shape_operator_coordinates(&self, t: f64) -> Result<DMatrix<f64>> {
        let p = self.at(t);
        let b =
            p.b.ok_or_else(|| Error::Numerical(format!("J is singular at t = {t}")))?;
        let n = self.n;
        let en = p.e.view((0, 1), (self.dim, n)).into_owned();
        let ei =
            p.e.clone()
                .try_inverse()
                .ok_or(Error::Numerical("singular frame".into()))?;
        let proj = ei.view((1, 0), (n, self.dim)).into_owned();
        Ok(en * b * proj)
    }
}

/// Integrates `J'' + R J = 0` along the geodesic with `ζ(t₀) = x`,
/// `ζ̇(t₀) = v` (unit speed) from `J(t₀) = J₀`, `J'(t₀) = J₀'` given in the
/// adapted frame at `t₀`. Stops usefulness at the first conjugate point.
pub fn evolve_lagrange(
    m: &SpacetimeModel,
    x: &[f64],
    v: &[f64],
    t_span: (f64, f64),
    j0: &DMatrix<f64>,
    j0p: &DMatrix<f64>,
    tol: f64,
) -> Result<Congruence> {
    let d = m.dim;
    let n = d - 1;
    let f = m.finsler_f(x, v)?;
    if (f - 1.0).abs() > UNIT_SPEED_TOL {
        return Err(Error::Domain(format!("ζ̇ must have unit speed, F = {f}")));
    }
    let e0 = adapted_frame(m, x, v)?;
    let mut a0 = DMatrix::zeros(d, n);
    let mut a0p = DMatrix::zeros(d, n);
    a0.view_mut((1, 0), (n, n)).copy_from(j0);
    a0p.view_mut((1, 0), (n, n)).copy_from(j0p);
    let frame = integrate_frame(m, x, v, t_span, &e0, &a0, &a0p, tol, &[])?;
    let mut c = Congruence {
        dim: d,
        n,
        t0: t_span.0,
        t1: frame.t_end(),
        conjugate_point: None,
        frame,
    };
    // Scan for the first zero of det J after t₀: sign changes of det J, or
    // near-vanishing local minima of the smallest singular value.
    let steps = 2000;
    let (a, b) = (c.t0, c.t1);
    let grid = |k: usize| a + (b - a) * k as f64 / steps as f64;
    let det = |t: f64| c.at(t).j.determinant();
    let smin = |t: f64| {
        let sv = c.at(t).j.singular_values();
        sv.min() / sv.max().max(1.0)
    };
    let mut found = None;
    let mut prev = (det(grid(1)), smin(grid(1)));
    let mut before = f64::INFINITY;
    for k in 2..=steps {
        let t = grid(k);
        let cur = (det(t), smin(t));
        if cur.0 == 0.0 || cur.0.signum() != prev.0.signum() {
            let sign = prev.0.signum();
            let (mut lo, mut hi) = (grid(k - 1), t);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if det(mid).signum() == sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            found = Some((0.5 * (lo + hi), lo));
            break;
        }
        if before.is_finite() && prev.1 < before && prev.1 <= cur.1 {
            // Golden-section refinement of the local minimum.
            let (mut lo, mut hi) = (grid(k - 2), t);
            let r = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let m1 = hi - r * (hi - lo);
                let m2 = lo + r * (hi - lo);
                if smin(m1) < smin(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let tm = 0.5 * (lo + hi);
            if smin(tm) < 1e-6 {
                found = Some((tm, tm - (b - a) / steps as f64));
                break;
            }
        }
        before = prev.1;
        prev = cur;
    }
    if let Some((tc, usable)) = found {
        c.conjugate_point = Some(tc);
        c.t1 = usable;
    }
    Ok(c)
}

/// The distance congruence: `J(t₀) = 0`, `J'(t₀) = I`.
pub fn distance_congruence(
    m: &SpacetimeModel,
    x: &[f64],
    v: &[f64],
    t_span: (f64, f64),
    tol: f64,
) -> Result<Congruence> {
    let n = m.dim - 1;
    evolve_lagrange(
        m,
        x,
        v,
        t_span,
        &DMatrix::zeros(n, n),
        &DMatrix::identity(n, n),
        tol,
    )
}

/// ε-weighted quantities at one parameter value.
#[derive(Debug, Clone)]
pub struct WeightedPoint {
    pub t: f64,
    /// `e^{(2(1−ε)/n)Ψ(ζ(t))}`.
    pub factor: f64,
    pub psi: f64,
    pub psi1: f64,
    pub b_eps: DMatrix<f64>,
    pub theta: f64,
    pub sigma: DMatrix<f64>,
}

impl WeightedPoint {
    pub fn trace_sigma2(&self) -> f64 {
        (&self.sigma * &self.sigma).trace()
    }
}

fn weight_along(m: &SpacetimeModel, x: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    let psi = m.weight.eval(x);
    let psi1 = if m.weight.is_zero() {
        0.0
    } else {
        m.weight
            .gradient(x)?
            .iter()
            .zip(v)
            .map(|(a, b)| a * b)
            .sum()
    };
    Ok((psi, psi1))
}

/// `B_ε`, `θ_ε`, `σ_ε` at `t`.
pub fn weighted_quantities(
    m: &SpacetimeModel,
    c: &Congruence,
    t: f64,
    epsilon: f64,
) -> Result<WeightedPoint> {
    let p = c.at(t);
    let b =
        p.b.ok_or_else(|| Error::Numerical(format!("J is singular at t = {t}")))?;
    let n = c.n as f64;
    let (psi, psi1) = weight_along(m, &p.x, &p.v)?;
    let factor = (2.0 * (1.0 - epsilon) / n * psi).exp();
    let id = DMatrix::<f64>::identity(c.n, c.n);
    let b_eps = (&b - &id * (psi1 / n)) * factor;
    let theta = b_eps.trace();
    let sigma = &b_eps - &id * (theta / n);
    Ok(WeightedPoint {
        t,
        factor,
        psi,
        psi1,
        b_eps,
        theta,
        sigma,
    })
}

/// `φ_ζ(t) = ∫_{t₀}^t e^{(2(ε−1)/n)Ψ(ζ(s))} ds`.
pub fn phi(m: &SpacetimeModel, c: &Congruence, t: f64, epsilon: f64) -> f64 {
    let k = 2.0 * (epsilon - 1.0) / c.n as f64;
    let panels = (((t - c.t0).abs()).ceil() as usize).clamp(1, 200);
    quadrature::integrate(|s| (k * m.weight.eval(&c.at(s).x)).exp(), c.t0, t, panels)
}

/// Five-point central difference of a scalar along the congruence.
fn derivative5(f: impl Fn(f64) -> Result<f64>, t: f64, h: f64) -> Result<f64> {
    Ok((f(t - 2.0 * h)? - 8.0 * f(t - h)? + 8.0 * f(t + h)? - f(t + 2.0 * h)?) / (12.0 * h))
}

/// One row of the Raychaudhuri trajectory.
#[derive(Debug, Clone)]
pub struct RaychaudhuriRow {
    pub t: f64,
    pub theta: f64,
    pub theta_star: f64,
    pub c_term: f64,
    pub middle: f64,
    pub trace_sigma2: f64,
    pub ric_n_star: f64,
    /// `|sum of terms| / max |term|`.
    pub residual: f64,
    /// Skipped because `N = n` and `(Ψ∘ζ)' ≠ 0`.
    pub skipped: bool,
}

/// Evaluates the weighted Raychaudhuri identity on `grid`.
pub fn raychaudhuri_residual(
    m: &SpacetimeModel,
    c: &Congruence,
    grid: &[f64],
    n_eff: NEff,
    epsilon: f64,
) -> Result<Vec<RaychaudhuriRow>> {
    let n = c.n;
    let nf = n as f64;
    let nv = n_eff.value(n);
    if nv == 0.0 || (nv > 0.0 && nv < nf) {
        return Err(Error::Parameter(format!(
            "the weighted Raychaudhuri equation needs N in (-inf, 0) ∪ [n, inf], got N = {nv}"
        )));
    }
    let range = require_admissible(nv, epsilon, n)?;
    let theta_at = |s: f64| weighted_quantities(m, c, s, epsilon).map(|w| w.theta);
    let mut rows = Vec::with_capacity(grid.len());
    for &t in grid {
        if t <= c.t0 || t > c.t1 {
            return Err(Error::Numerical(format!(
                "t = {t} outside the usable interval ({}, {}]",
                c.t0, c.t1
            )));
        }
        let w = weighted_quantities(m, c, t, epsilon)?;
        let h = 0.01 * (t - c.t0);
        let dtheta = derivative5(theta_at, t, h)?;
        let p = c.at(t);
        let cd = curvature_at(m, &p.x, &p.v)?;
        let (psi1, psi2) = m.weight.along_geodesic(&p.x, &p.v, &cd.spray)?;
        let e = w.factor;
        let theta_star = e * dtheta;
        let psi_star = e * psi1;
        let c_term = range.c * w.theta * w.theta;
        let (middle, skipped) = match n_eff {
            NEff::Infinite => ((epsilon * w.theta + psi_star).powi(2) / nf, false),
            NEff::LimitN => {
                if psi1.abs() <= LIMIT_N_TOL {
                    (0.0, false)
                } else {
                    (0.0, true)
                }
            }
            NEff::Finite(nn) => {
                let inner = epsilon * w.theta / nn + psi_star / (nn - nf);
                (nn * (nn - nf) / nf * inner * inner, false)
            }
        };
        let ric_n = weighted_ricci_from(cd.ric, psi1, psi2, n_eff, n)?;
        let ric_n_star = e * e * ric_n;
        let ts2 = w.trace_sigma2();
        let terms = [theta_star, c_term, middle, ts2, ric_n_star];
        let scale = terms.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let sum: f64 = terms.iter().sum();
        let residual = if skipped {
            0.0
        } else if scale > 0.0 {
            sum.abs() / scale
        } else {
            0.0
        };
        rows.push(RaychaudhuriRow {
            t,
            theta: w.theta,
            theta_star,
            c_term,
            middle,
            trace_sigma2: ts2,
            ric_n_star,
            residual,
            skipped,
        });
    }
    Ok(rows)
}

/// `|B' + B² + R| / max(|B'|, |B²|, |R|)` at `t`, with `B'` by finite
/// differences of the integrated tensor.
pub fn riccati_residual(m: &SpacetimeModel, c: &Congruence, t: f64) -> Result<f64> {
    let n = c.n;
    let h = 0.01 * (t - c.t0);
    let b = |s: f64| c.shape_operator(s);
    let db = (b(t - 2.0 * h)? - b(t - h)? * 8.0 + b(t + h)? * 8.0 - b(t + 2.0 * h)?) / (12.0 * h);
    let p = c.at(t);
    let bt =
        p.b.clone()
            .ok_or_else(|| Error::Numerical("singular J".into()))?;
    let cd = curvature_at(m, &p.x, &p.v)?;
    let ei =
        p.e.clone()
            .try_inverse()
            .ok_or(Error::Numerical("singular frame".into()))?;
    let rf = ei * cd.r * &p.e;
    let rn = rf.view((1, 1), (n, n)).into_owned();
    let b2 = &bt * &bt;
    let scale = db.amax().max(b2.amax()).max(rn.amax());
    let res = (&db + &b2 + &rn).amax();
    Ok(if scale > 0.0 { res / scale } else { res })
}

/// `max |Eᵀ g_ζ̇ E − diag(−1, 1, …, 1)|` at `t`.
pub fn frame_orthonormality(m: &SpacetimeModel, c: &Congruence, t: f64) -> Result<f64> {
    let p = c.at(t);
    let g = m.g_raw(&p.x, &p.v)?;
    let mut gram = p.e.transpose() * g * &p.e;
    gram[(0, 0)] += 1.0;
    for i in 1..c.dim {
        gram[(i, i)] -= 1.0;
    }
    Ok(gram.amax())
}

/// Largest increase of `g_ζ̇(Bˢ(0)w, w)` between consecutive `s`, for the
/// distance congruences with vertices `ζ(−s)`; `≤ 0` means non-increasing.
pub fn hessian_monotonicity(
    m: &SpacetimeModel,
    z: &[f64],
    v: &[f64],
    s_values: &[f64],
    directions: &[Vec<f64>],
    tol: f64,
) -> Result<f64> {
    use crate::geodesic::integrate_geodesic;
    let d = m.dim;
    let g = m.fundamental_tensor(z, v)?;
    let forms: Vec<Vec<f64>> = s_values
        .iter()
        .map(|&s| -> Result<Vec<f64>> {
            let back = integrate_geodesic(m, z, v, (0.0, -s), tol)?;
            let start = back.end_point();
            let vs = back.end_velocity();
            let c = distance_congruence(m, &start, &vs, (-s, 0.0), tol)?;
            let bc = c.shape_operator_coordinates(0.0)?;
            Ok(directions
                .iter()
                .map(|w| {
                    // project w onto N_ζ(0)
                    let gv: f64 = (0..d)
                        .map(|i| (0..d).map(|j| w[i] * g[(i, j)] * v[j]).sum::<f64>())
                        .sum();
                    let gvv: f64 = (0..d)
                        .map(|i| (0..d).map(|j| v[i] * g[(i, j)] * v[j]).sum::<f64>())
                        .sum();
                    let wn = nalgebra::DVector::from_fn(d, |i, _| w[i] - gv / gvv * v[i]);
                    (wn.transpose() * &g * (&bc * &wn))[(0, 0)]
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut worst = f64::NEG_INFINITY;
    for pair in forms.windows(2) {
        for (a, b) in pair[0].iter().zip(&pair[1]) {
            worst = worst.max(b - a);
        }
    }
    Ok(worst)
}

/// Trajectory table: `t, theta, theta_star, trace_sigma2, ric_n_star, residual`.
pub fn raychaudhuri_table(rows: &[RaychaudhuriRow]) -> Table {
    let mut t = Table::new([
        "t",
        "theta",
        "theta_star",
        "c_theta2",
        "middle",
        "trace_sigma2",
        "ric_n_star",
        "residual",
    ]);
    for r in rows {
        t.push(vec![
            r.t,
            r.theta,
            r.theta_star,
            r.c_term,
            r.middle,
            r.trace_sigma2,
            r.ric_n_star,
            r.residual,
        ]);
    }
    t
}

/// Default geodesic for the congruence scenarios: from the origin along a
/// slightly tilted unit timelike direction.
pub fn default_geodesic(m: &SpacetimeModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = m.dim;
    let x = vec![0.0; d];
    let mut v = vec![0.0; d];
    v[0] = 1.0;
    v[1] = 0.2;
    if d > 2 {
        v[2] = 0.1;
    }
    Ok((x.clone(), unit_timelike(m, &x, &v)?))
}

/// The Raychaudhuri scenario on the distance congruence from the default
/// geodesic, together with the Riccati, frame and shear invariants.
pub fn raychaudhuri_scenario(
    m: &SpacetimeModel,
    n_eff: NEff,
    epsilon: f64,
    t_max: f64,
    points: usize,
) -> Result<(ScenarioReport, Table)> {
    let mut rep = ScenarioReport::new("raychaudhuri");
    rep.config.insert("model".into(), m.name.clone());
    rep.config.insert("dim".into(), m.dim.to_string());
    rep.config.insert("N".into(), n_eff.label(m.n()));
    rep.config.insert("epsilon".into(), epsilon.to_string());
    let (x, v) = default_geodesic(m)?;
    let c = distance_congruence(m, &x, &v, (0.0, t_max * 1.05), 1e-11)?;
    let grid: Vec<f64> = (0..points)
        .map(|k| 0.1 + (t_max - 0.1) * k as f64 / (points.max(2) - 1) as f64)
        .filter(|&t| t < c.t1)
        .collect();
    if let Some(tc) = c.conjugate_point {
        rep.note(format!("conjugate point at t = {tc}; grid truncated"));
    }
    let rows = raychaudhuri_residual(m, &c, &grid, n_eff, epsilon)?;
    let skipped = rows.iter().filter(|r| r.skipped).count();
    let worst = rows
        .iter()
        .filter(|r| !r.skipped)
        .map(|r| r.residual)
        .fold(0.0, f64::max);
    rep.push(CheckRecord::at_most("raychaudhuri-residual", worst, 1e-6));
    if skipped > 0 {
        rep.push(
            CheckRecord::info("raychaudhuri-skipped", skipped as f64)
                .with_note("N = n with (Psi∘ζ)' != 0: Ric_n = -inf, identity not evaluated"),
        );
    }
    let mut ric: f64 = 0.0;
    let mut orth: f64 = 0.0;
    let mut tr_sigma: f64 = 0.0;
    let mut sym: f64 = 0.0;
    for &t in &grid {
        ric = ric.max(riccati_residual(m, &c, t)?);
        orth = orth.max(frame_orthonormality(m, &c, t)?);
        let w = weighted_quantities(m, &c, t, epsilon)?;
        tr_sigma = tr_sigma.max(w.sigma.trace().abs() / w.theta.abs().max(1.0));
        let b = c.shape_operator(t)?;
        sym = sym.max((&b - b.transpose()).amax() / b.amax().max(1.0));
    }
    rep.push(CheckRecord::at_most("riccati-residual", ric, 1e-7));
    rep.push(CheckRecord::at_most("frame-orthonormality", orth, 1e-9));
    rep.push(CheckRecord::at_most("trace-sigma", tr_sigma, 1e-12));
    rep.push(CheckRecord::at_most("b-symmetry", sym, 1e-8));
    let t_end = *grid.last().unwrap_or(&0.1);
    rep.push(
        CheckRecord::info("phi-at-end", phi(m, &c, t_end, epsilon))
            .with_note(format!("phi_zeta({t_end})")),
    );
    rep.push(CheckRecord::info("grid-points", grid.len() as f64));
    Ok((rep, raychaudhuri_table(&rows)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::{hessian, TemporalFunction};
    use crate::model::build_model;
    use std::collections::BTreeMap;

    fn model(name: &str, dim: usize) -> SpacetimeModel {
        build_model(name, dim, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn minkowski_flat_jacobi() {
        let m = model("minkowski", 4);
        let c =
            distance_congruence(&m, &[0.0; 4], &[1.0, 0.0, 0.0, 0.0], (0.0, 3.0), 1e-11).unwrap();
        assert!(c.conjugate_point.is_none());
        for t in [0.5, 1.0, 2.5] {
            let p = c.at(t);
            assert!((&p.j - DMatrix::<f64>::identity(3, 3) * t).amax() < 1e-12);
            let b = p.b.unwrap();
            assert!((b.trace() - 3.0 / t).abs() < 1e-11);
        }
    }

    #[test]
    fn trace_b_matches_laplacian_of_distance() {
        let m = model("minkowski", 4);
        let v = unit_timelike(&m, &[0.0; 4], &[1.0, 0.3, 0.0, 0.1]).unwrap();
        let c = distance_congruence(&m, &[0.0; 4], &v, (0.0, 2.0), 1e-11).unwrap();
        let u = TemporalFunction::minkowski_distance(vec![0.0; 4]);
        for t in [0.5, 1.5] {
            let x = c.at(t).x;
            let lap = hessian(&m, &u, &x).unwrap().laplacian();
            assert!((c.shape_operator(t).unwrap().trace() - lap).abs() < 1e-7);
        }
    }

    #[test]
    fn weighted_theta_closed_form() {
        let a = -0.5;
        let m = model("weighted-minkowski", 4);
        let c =
            distance_congruence(&m, &[0.0; 4], &[1.0, 0.0, 0.0, 0.0], (0.0, 5.0), 1e-11).unwrap();
        for eps in [0.0, 0.5, 1.0] {
            for t in [0.3, 2.0, 4.0] {
                let w = weighted_quantities(&m, &c, t, eps).unwrap();
                let expect = (2.0 * (1.0 - eps) / 3.0 * a * t).exp() * (3.0 / t - a);
                assert!((w.theta - expect).abs() < 1e-9 * expect.abs().max(1.0));
                assert!(w.sigma.trace().abs() < 1e-12 * w.theta.abs().max(1.0));
            }
        }
        let w = weighted_quantities(&model("minkowski", 4), &c, 2.0, 1.0).unwrap();
        assert!((w.b_eps.trace() - 1.5).abs() < 1e-10);
        assert!((phi(&model("minkowski", 4), &c, 2.0, 1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn raychaudhuri_examples() {
        let grid: Vec<f64> = (0..12).map(|k| 0.1 + 4.9 * k as f64 / 11.0).collect();
        let mk = model("minkowski", 4);
        let c =
            distance_congruence(&mk, &[0.0; 4], &[1.0, 0.0, 0.0, 0.0], (0.0, 5.5), 1e-11).unwrap();
        for (n_eff, eps) in [
            (NEff::Finite(6.0), 0.5),
            (NEff::Infinite, 0.3),
            (NEff::LimitN, 2.0),
            (NEff::Finite(-1.0), 0.2),
        ] {
            let rows = raychaudhuri_residual(&mk, &c, &grid, n_eff, eps).unwrap();
            assert!(rows.iter().all(|r| r.residual < 1e-7), "{n_eff:?}");
        }
        let w = model("weighted-minkowski", 4);
        let rows = raychaudhuri_residual(&w, &c, &grid, NEff::Finite(6.0), 0.0).unwrap();
        assert!(rows.iter().all(|r| r.residual < 1e-6));
        let rows = raychaudhuri_residual(&w, &c, &grid, NEff::LimitN, 0.0).unwrap();
        assert!(rows.iter().all(|r| r.skipped));
        assert!(matches!(
            raychaudhuri_residual(&w, &c, &grid, NEff::Finite(0.0), 0.0),
            Err(Error::Parameter(_))
        ));
        let f = model("flrw", 3);
        let (x, v) = default_geodesic(&f).unwrap();
        let c = distance_congruence(&f, &x, &v, (0.0, 3.2), 1e-11).unwrap();
        let grid: Vec<f64> = (0..8).map(|k| 0.1 + 2.9 * k as f64 / 7.0).collect();
        let rows = raychaudhuri_residual(&f, &c, &grid, NEff::LimitN, 1.0).unwrap();
        assert!(rows.iter().all(|r| r.residual < 1e-6));
        for &t in &grid {
            assert!(riccati_residual(&f, &c, t).unwrap() < 1e-7);
            assert!(frame_orthonormality(&f, &c, t).unwrap() < 1e-9);
        }
    }

    #[test]
    fn conjugate_point_detected() {
        // A negative J'(0) focuses the flat congruence at t = 1.
        let m = model("minkowski", 3);
        let c = evolve_lagrange(
            &m,
            &[0.0; 3],
            &[1.0, 0.0, 0.0],
            (0.0, 2.0),
            &DMatrix::identity(2, 2),
            &(-DMatrix::<f64>::identity(2, 2)),
            1e-11,
        )
        .unwrap();
        assert!((c.conjugate_point.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hessian_monotone_in_vertex_distance() {
        let dirs = vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.6, -0.8],
            vec![0.2, 0.0, 1.0],
        ];
        for name in ["minkowski", "flrw"] {
            let m = model(name, 3);
            let worst = hessian_monotonicity(
                &m,
                &[0.0; 3],
                &[1.0, 0.0, 0.0],
                &[1.0, 2.0, 4.0, 8.0],
                &dirs,
                1e-11,
            )
            .unwrap();
            assert!(worst <= 1e-9, "{name}: {worst}");
        }
    }
}
