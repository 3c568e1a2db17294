//! Numerical consequences of the splitting theorem on candidate product
//! spacetimes: Busemann-gradient lines, product-metric reconstruction,
//! translation isometries and weight constancy.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::busemann::{busemann_truncated, default_grid, require_global, reverse_busemann, Ray};
use crate::connection::berwald_audit;
use crate::error::{Error, Result};
use crate::geodesic::{integrate_geodesic, parallel_transport, GeodesicSegment};
use crate::legendre::covector_gradient;
use crate::model::SpacetimeModel;
use crate::report::{CheckRecord, ScenarioReport, Table};
use crate::sampling;

/// Stencil radius of the local quadratic fit of `b̄`.
pub const FIT_RADIUS: f64 = 0.1;

/// Residual tolerances of the certificate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SplittingTolerances {
    pub b_plus_reverse_b: f64,
    pub gradient_parallelism: f64,
    pub affinity: f64,
    pub hessian: f64,
    pub unit_speed: f64,
    pub metric_drift: f64,
    pub translation_drift: f64,
    pub psi_drift: f64,
}

impl Default for SplittingTolerances {
    fn default() -> Self {
        SplittingTolerances {
            b_plus_reverse_b: 2e-3,
            gradient_parallelism: 1e-5,
            affinity: 2e-3,
            hessian: 1e-4,
            unit_speed: 1e-9,
            metric_drift: 1e-7,
            translation_drift: 1e-7,
            psi_drift: 1e-8,
        }
    }
}

/// Local quadratic model of a scalar function around a centre.
#[derive(Debug, Clone)]
pub struct QuadraticFit {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    /// RMS misfit of the stencil values.
    pub misfit: f64,
}

/// Stencil: the centre, `±r eᵢ`, and `(±eᵢ ± eⱼ) r/√2` — `2D² + 1` points.
pub fn fit_stencil(dim: usize, r: f64) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]];
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut p = vec![0.0; dim];
            p[i] = s * r;
            pts.push(p);
        }
    }
    let q = r / 2f64.sqrt();
    for i in 0..dim {
        for j in i + 1..dim {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut p = vec![0.0; dim];
                p[i] = si * q;
                p[j] = sj * q;
                pts.push(p);
            }
        }
    }
    pts
}

/// Least-squares quadratic through `(offsets, values)`, solved by QR in
/// coordinates scaled to the stencil radius.
pub fn fit_quadratic(offsets: &[Vec<f64>], values: &[f64]) -> Result<QuadraticFit> {
    let d = offsets[0].len();
    let r = offsets
        .iter()
        .flat_map(|p| p.iter().map(|c| c.abs()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let cols = 1 + d + d * (d + 1) / 2;
    let rows = offsets.len();
    let mut a = DMatrix::zeros(rows, cols);
    for (k, p) in offsets.iter().enumerate() {
        let q: Vec<f64> = p.iter().map(|c| c / r).collect();
        a[(k, 0)] = 1.0;
        for i in 0..d {
            a[(k, 1 + i)] = q[i];
        }
        let mut c = 1 + d;
        for i in 0..d {
            for j in i..d {
                a[(k, c)] = if i == j {
                    0.5 * q[i] * q[i]
                } else {
                    q[i] * q[j]
                };
                c += 1;
            }
        }
    }
    let qr = a.clone().qr();
    let rm = qr.r();
    let diag = rm.diagonal().map(f64::abs);
    if rows < cols || diag.min() < 1e-10 * diag.max() {
        return Err(Error::Numerical(
            "ill-conditioned quadratic fit of the reverse Busemann function".into(),
        ));
    }
    let y = DVector::from_column_slice(values);
    let qty = qr.q().transpose() * &y;
    let coef = rm
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("singular quadratic fit".into()))?;
    let mut h = DMatrix::zeros(d, d);
    let mut c = 1 + d;
    for i in 0..d {
        for j in i..d {
            h[(i, j)] = coef[c] / (r * r);
            h[(j, i)] = h[(i, j)];
            c += 1;
        }
    }
    let misfit = ((&a * &coef - &y).norm_squared() / rows as f64).sqrt();
    Ok(QuadraticFit {
        value: coef[0],
        gradient: DVector::from_fn(d, |i, _| coef[1 + i] / r),
        hessian: h,
        misfit,
    })
}

/// Per-sample output of the gradient-line check.
#[derive(Debug, Clone)]
pub struct GradientLine {
    pub x: Vec<f64>,
    /// `∇b̄(x) = ℒ*(db̄)` from the fitted differential.
    pub gradient: Vec<f64>,
    /// Fitted `db̄(x)` and its analytic counterpart `∂L/∂v(η̇)` (product models).
    pub db_fit: Vec<f64>,
    pub db_analytic: Vec<f64>,
    pub hessian_norm: f64,
    pub b_plus_reverse_b: f64,
    /// `max |ζ_x − reference line|` over the flow interval, plus the
    /// fitted-vs-analytic gradient gap.
    pub deviation: f64,
    /// `|b(ζ_x(1)) − b(x) − 1|`.
    pub affinity: f64,
    pub line: GeodesicSegment,
}

/// Integrates the flow of `∇b̄` from each fiber sample and compares with the
/// line through `x` parallel to `η`.
pub fn check_busemann_gradient_lines(
    m: &SpacetimeModel,
    eta: &Ray,
    samples: &[Vec<f64>],
    t0: f64,
    flow_time: f64,
) -> Result<Vec<GradientLine>> {
    let d = m.dim;
    let grid = default_grid(t0);
    let stencil = fit_stencil(d, FIT_RADIUS);
    let eta_dot = eta.velocity(0.0);
    samples
        .par_iter()
        .map(|x| -> Result<GradientLine> {
            let mut vals = Vec::with_capacity(stencil.len());
            for off in &stencil {
                let p: Vec<f64> = x.iter().zip(off).map(|(a, b)| a + b).collect();
                vals.push(reverse_busemann(m, eta, &p, &grid)?.limit);
            }
            let fit = fit_quadratic(&stencil, &vals)?;
            let db: Vec<f64> = fit.gradient.iter().copied().collect();
            let grad = covector_gradient(m, x, &db)?;
            let db_analytic: Vec<f64> = m.dl_dv(x, &eta_dot)?.iter().copied().collect();
            let line = integrate_geodesic(m, x, &grad, (0.0, flow_time), 1e-12)?;
            let reference = integrate_geodesic(m, x, &eta_dot, (0.0, flow_time), 1e-12)?;
            let mut dev: f64 = db
                .iter()
                .zip(&db_analytic)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            for k in 0..=20 {
                let t = flow_time * k as f64 / 20.0;
                let (p, q) = (line.point(t), reference.point(t));
                dev = dev.max(
                    p.iter()
                        .zip(&q)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max),
                );
            }
            let b_x = busemann_truncated(m, eta, x, &grid)?.limit;
            let b_1 = busemann_truncated(m, eta, &line.point(1.0), &grid)?.limit;
            Ok(GradientLine {
                x: x.clone(),
                gradient: grad,
                db_fit: db,
                db_analytic,
                hessian_norm: fit.hessian.amax(),
                b_plus_reverse_b: (b_x + fit.value).abs(),
                deviation: dev,
                affinity: (b_1 - b_x - 1.0).abs(),
                line,
            })
        })
        .collect()
}

/// Product-metric residuals along one gradient line.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricResiduals {
    /// `max |g_V(V, V) + 1|`.
    pub unit: f64,
    /// `max |g_V(V, ∂ᵢ)|` over fiber directions.
    pub orthogonality: f64,
    /// `max |h(t) − h(0)|` of the fiber block.
    pub drift: f64,
}

/// Evaluates `g_V`, `V = ζ̇_x`, along each line in the chart `(t, x̄)`.
pub fn reconstruct_product_metric(
    m: &SpacetimeModel,
    lines: &[GradientLine],
) -> Result<Vec<MetricResiduals>> {
    let d = m.dim;
    lines
        .iter()
        .map(|gl| {
            let mut res = MetricResiduals {
                unit: 0.0,
                orthogonality: 0.0,
                drift: 0.0,
            };
            let mut h0: Option<DMatrix<f64>> = None;
            let t_end = gl.line.t_end();
            for k in 0..=20 {
                let t = t_end * k as f64 / 20.0;
                let (p, v) = (gl.line.point(t), gl.line.velocity(t));
                let g = m.fundamental_tensor(&p, &v)?;
                let vv = DVector::from_column_slice(&v);
                res.unit = res
                    .unit
                    .max(((vv.transpose() * &g * &vv)[(0, 0)] + 1.0).abs());
                let gv = &g * &vv;
                for i in 1..d {
                    res.orthogonality = res.orthogonality.max(gv[i].abs());
                }
                let h = g.view((1, 1), (d - 1, d - 1)).into_owned();
                match &h0 {
                    None => h0 = Some(h),
                    Some(h0) => res.drift = res.drift.max((&h - h0).amax()),
                }
            }
            Ok(res)
        })
        .collect()
}

/// Tangent samples for the translation check, with sizable `v¹`.
pub fn translation_vectors(dim: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut a = vec![0.0; dim];
    a[0] = 1.0;
    a[1] = 0.6;
    out.push(a);
    let mut b = vec![0.0; dim];
    b[0] = 1.5;
    b[1] = -0.7;
    if dim > 2 {
        b[2] = 0.4;
    }
    out.push(b);
    let mut c = vec![0.0; dim];
    c[0] = 2.0;
    c[1] = 0.5;
    if dim > 3 {
        c[3] = -0.9;
    }
    out.push(c);
    out
}

/// `max |L(V(t)) − L(v)|` for parallel `V` along the lines, and
/// `max |L(ζ_x(t), v) − L(x, v)|` for the chart translation.
pub fn check_translation_isometry(
    m: &SpacetimeModel,
    lines: &[GradientLine],
    vectors: &[Vec<f64>],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for gl in lines {
        for v in vectors {
            let l0 = m.eval_l(&gl.x, v)?;
            let pt = parallel_transport(m, &gl.line, v, 1e-12)?;
            worst = worst.max(pt.l_drift(m)?);
            for k in 1..=10 {
                let t = gl.line.t_end() * k as f64 / 10.0;
                worst = worst.max((m.eval_l(&gl.line.point(t), v)? - l0).abs());
            }
        }
    }
    Ok(worst)
}

/// `max |dΨ(ζ̇)|` along the lines.
pub fn check_weight_constancy(m: &SpacetimeModel, lines: &[GradientLine]) -> Result<f64> {
    if m.weight.is_zero() {
        return Ok(0.0);
    }
    let mut worst: f64 = 0.0;
    for gl in lines {
        for k in 0..=20 {
            let t = gl.line.t_end() * k as f64 / 20.0;
            let (p, v) = (gl.line.point(t), gl.line.velocity(t));
            let dpsi = m.weight.gradient(&p)?;
            worst = worst.max(dpsi.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().abs());
        }
    }
    Ok(worst)
}

/// The assembled certificate.
#[derive(Debug, Clone, Serialize)]
pub struct SplittingCertificate {
    pub model: String,
    pub line_origin: Vec<f64>,
    pub line_direction: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    pub tolerances: SplittingTolerances,
    pub b_plus_reverse_b: f64,
    pub gradient_parallelism: f64,
    pub affinity: f64,
    pub hessian_reverse_b: f64,
    pub metric_unit: f64,
    pub metric_orthogonality: f64,
    pub metric_drift: f64,
    pub translation_drift: f64,
    pub psi_drift: f64,
    pub berwald_deviation: f64,
    pub notes: Vec<String>,
}

impl SplittingCertificate {
    pub fn checks(&self) -> Vec<CheckRecord> {
        let t = &self.tolerances;
        let mut psi = CheckRecord::at_most("psi-drift", self.psi_drift, t.psi_drift);
        if !psi.passed {
            psi = psi.with_note(
                "weight varies along the lines: Ric_N >= 0 cannot hold for finite N > n",
            );
        }
        vec![
            CheckRecord::at_most(
                "b-plus-reverse-b",
                self.b_plus_reverse_b,
                t.b_plus_reverse_b,
            ),
            CheckRecord::at_most(
                "gradient-parallelism",
                self.gradient_parallelism,
                t.gradient_parallelism,
            ),
            CheckRecord::at_most("affinity", self.affinity, t.affinity),
            CheckRecord::at_most("hessian-reverse-b", self.hessian_reverse_b, t.hessian),
            CheckRecord::at_most("metric-unit", self.metric_unit, t.unit_speed),
            CheckRecord::at_most(
                "metric-orthogonality",
                self.metric_orthogonality,
                t.metric_drift,
            ),
            CheckRecord::at_most("metric-drift", self.metric_drift, t.metric_drift),
            CheckRecord::at_most(
                "translation-drift",
                self.translation_drift,
                t.translation_drift,
            ),
            psi,
            CheckRecord::info("berwald-deviation", self.berwald_deviation)
                .with_note("hypothesis: the model is Berwald"),
        ]
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|c| c.passed)
    }

    pub fn report(&self) -> ScenarioReport {
        let mut rep = ScenarioReport::new("splitting");
        rep.config.insert("model".into(), self.model.clone());
        rep.config
            .insert("samples".into(), self.samples.len().to_string());
        for c in self.checks() {
            rep.push(c);
        }
        for n in &self.notes {
            rep.note(n.clone());
        }
        rep
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

/// Fiber samples `(0, x̄)` with `|x̄| ≤ 0.5`.
pub fn fiber_samples(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = sampling::rng(seed);
    let mut out = vec![vec![0.0; dim]];
    while out.len() < count {
        let p = sampling::ball_point(&mut r, dim - 1);
        let mut x = vec![0.0];
        x.extend(p.iter().map(|c| 0.5 * c));
        out.push(x);
    }
    out
}

/// Runs every check along the orientation line through the origin.
pub fn splitting_certificate(
    m: &SpacetimeModel,
    samples: usize,
    seed: u64,
) -> Result<(SplittingCertificate, Table)> {
    require_global(m)?;
    let d = m.dim;
    let origin = vec![0.0; d];
    let t0 = 1e3;
    let eta = Ray::line(m, &origin, &m.orientation(&origin), 4.0 * t0 + 10.0)?;
    let xs = fiber_samples(d, samples, seed);
    let lines = check_busemann_gradient_lines(m, &eta, &xs, t0, 2.0)?;
    let metric = reconstruct_product_metric(m, &lines)?;
    let translation = check_translation_isometry(m, &lines, &translation_vectors(d))?;
    let psi = check_weight_constancy(m, &lines)?;
    let berwald = berwald_audit(m, &xs[..xs.len().min(4)], 8, seed);
    let bdev = berwald.checks.first().map(|c| c.value).unwrap_or(0.0);
    let mx = |f: &dyn Fn(&GradientLine) -> f64| lines.iter().map(f).fold(0.0, f64::max);
    let mm = |f: &dyn Fn(&MetricResiduals) -> f64| metric.iter().map(f).fold(0.0, f64::max);
    let mut notes = vec!["the universal-cover hypothesis is assumed, not checked".to_string()];
    if m.berwald != Some(true) {
        notes.push(format!(
            "{} is not Berwald: the theorem does not apply",
            m.name
        ));
    }
    let cert = SplittingCertificate {
        model: m.name.clone(),
        line_origin: origin,
        line_direction: eta.v0.clone(),
        samples: xs,
        tolerances: SplittingTolerances::default(),
        b_plus_reverse_b: mx(&|g| g.b_plus_reverse_b),
        gradient_parallelism: mx(&|g| g.deviation),
        affinity: mx(&|g| g.affinity),
        hessian_reverse_b: mx(&|g| g.hessian_norm),
        metric_unit: mm(&|r| r.unit),
        metric_orthogonality: mm(&|r| r.orthogonality),
        metric_drift: mm(&|r| r.drift),
        translation_drift: translation,
        psi_drift: psi,
        berwald_deviation: bdev,
        notes,
    };
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.extend((0..d).map(|i| format!("grad{i}")));
    header.extend(
        [
            "b_plus_reverse_b",
            "deviation",
            "affinity",
            "hessian",
            "metric_unit",
            "metric_orthogonality",
            "metric_drift",
        ]
        .map(String::from),
    );
    let mut table = Table::new(header);
    for (g, r) in lines.iter().zip(&metric) {
        let mut row = g.x.clone();
        row.extend(&g.gradient);
        row.extend([
            g.b_plus_reverse_b,
            g.deviation,
            g.affinity,
            g.hessian_norm,
            r.unit,
            r.orthogonality,
            r.drift,
        ]);
        table.push(row);
    }
    Ok((cert, table))
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
    fn quadratic_fit_recovers_polynomial() {
        let st = fit_stencil(3, 0.1);
        assert_eq!(st.len(), 19);
        let f = |p: &[f64]| 1.0 + 2.0 * p[0] - p[2] + 0.5 * 3.0 * p[1] * p[1] + 0.7 * p[0] * p[2];
        let vals: Vec<f64> = st.iter().map(|p| f(p)).collect();
        let fit = fit_quadratic(&st, &vals).unwrap();
        assert!((fit.value - 1.0).abs() < 1e-12);
        assert!((fit.gradient[0] - 2.0).abs() < 1e-10 && (fit.gradient[2] + 1.0).abs() < 1e-10);
        assert!(
            (fit.hessian[(1, 1)] - 3.0).abs() < 1e-8 && (fit.hessian[(0, 2)] - 0.7).abs() < 1e-8,
            "{}",
            fit.hessian
        );
    }

    #[test]
    fn minkowski_certificate_passes() {
        let (c, _) = splitting_certificate(&model("minkowski", 3), 4, 1).unwrap();
        assert!(c.passed(), "{}", c.report().to_text());
        assert!(c.gradient_parallelism < 1e-6);
    }

    #[test]
    fn negative_controls() {
        let p: BTreeMap<String, String> = BTreeMap::new();
        let nb = build_model("nonberwald-quartic", 3, &p).unwrap();
        let (c, _) = splitting_certificate(&nb, 4, 1).unwrap();
        let failed: Vec<String> = c
            .checks()
            .into_iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect();
        assert_eq!(
            failed,
            vec!["translation-drift".to_string()],
            "{}",
            c.report().to_text()
        );
        assert!(c.translation_drift > 1e-3);
        let w = model("minkowski", 3).with_weight(Weight::time_linear(-0.5));
        let (c, _) = splitting_certificate(&w, 4, 1).unwrap();
        let failed: Vec<String> = c
            .checks()
            .into_iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect();
        assert_eq!(failed, vec!["psi-drift".to_string()]);
        let f = model("minkowski", 3).with_weight(Weight::fiber_linear(0.3));
        let (c, _) = splitting_certificate(&f, 4, 1).unwrap();
        assert!(c.psi_drift <= 1e-9 && c.passed());
    }
}
