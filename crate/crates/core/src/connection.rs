//! Formal Christoffel symbols, geodesic spray, nonlinear connection, Chern
//! connection, covariant derivative and the Berwald audit.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jet::{Jet, JetShape};
use crate::model::{hessian_v, SpacetimeModel};
use crate::report::{CheckRecord, ScenarioReport};
use crate::sampling;

/// Condition number above which `g_v` is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Default Berwald threshold on nondimensionalized `Γ` differences.
pub const TAU_BERWALD: f64 = 1e-8;

pub(crate) fn condition_number(g: &DMatrix<f64>) -> f64 {
    let sv = g.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `g⁻¹` with a conditioning check.
pub fn checked_inverse(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let condition = condition_number(g);
    if !(condition < MAX_CONDITION) {
        return Err(Error::Degenerate { condition });
    }
    g.clone()
        .try_inverse()
        .ok_or(Error::Degenerate { condition })
}

/// Inverse of a matrix of jets by the terminating Neumann series around its
/// value.
pub fn jet_matrix_inverse(m: &[Vec<Jet>]) -> Result<Vec<Vec<Jet>>> {
    let d = m.len();
    let g0 = DMatrix::from_fn(d, d, |a, b| m[a][b].value());
    let a0 = checked_inverse(&g0)?;
    let Some(shape) = m.iter().flatten().find_map(|j| j.shape().cloned()) else {
        return Ok((0..d)
            .map(|a| (0..d).map(|b| Jet::constant(a0[(a, b)])).collect())
            .collect());
    };
    let order = shape.v_order() + shape.x_order();
    // P = −A0·δ, δ = m − g0.
    let delta: Vec<Vec<Jet>> = m
        .iter()
        .enumerate()
        .map(|(a, row)| {
            row.iter()
                .enumerate()
                .map(|(b, j)| j - g0[(a, b)])
                .collect()
        })
        .collect();
    let p: Vec<Vec<Jet>> = (0..d)
        .map(|a| {
            (0..d)
                .map(|b| {
                    let mut s = Jet::zeros(&shape);
                    for c in 0..d {
                        if a0[(a, c)] != 0.0 {
                            s = s - &delta[c][b] * a0[(a, c)];
                        }
                    }
                    s
                })
                .collect()
        })
        .collect();
    let mut term: Vec<Vec<Jet>> = (0..d)
        .map(|a| {
            (0..d)
                .map(|b| Jet::constant(a0[(a, b)]).broadcast_like(&p[0][0]))
                .collect()
        })
        .collect();
    let mut sum = term.clone();
    for _ in 0..order {
        let next: Vec<Vec<Jet>> = (0..d)
            .map(|a| {
                (0..d)
                    .map(|b| {
                        let mut s = Jet::zeros(&shape);
                        for c in 0..d {
                            s += &(&p[a][c] * &term[c][b]);
                        }
                        s
                    })
                    .collect()
            })
            .collect();
        term = next;
        for a in 0..d {
            for b in 0..d {
                sum[a][b] += &term[a][b];
            }
        }
    }
    Ok(sum)
}

/// Jets of the spray `G^α` at `(x, v)` with caps `(v_order, x_order)`,
/// built from a jet of `L` with caps at least `(v_order + 2, x_order + 1)`:
/// `G^α = ½ g^{αλ} (∂²L/∂v^λ∂x^δ v^δ − ∂L/∂x^λ)`.
pub fn spray_from_l(l: &Jet, v: &[f64], v_order: usize, x_order: usize) -> Result<Vec<Jet>> {
    let d = v.len();
    let target = JetShape::get(d, v_order, x_order);
    let mut g = vec![Vec::with_capacity(d); d];
    let mut rhs = Vec::with_capacity(d);
    let vjet: Vec<Jet> = (0..d)
        .map(|i| Jet::vector_variable(&target, i, v[i]))
        .collect();
    for lam in 0..d {
        let lv = l.d_vector(lam)?;
        for mu in 0..d {
            g[lam].push(lv.d_vector(mu)?.truncate(v_order, x_order));
        }
        let mut r = -l.d_point(lam)?.truncate(v_order, x_order);
        for (delta, vd) in vjet.iter().enumerate() {
            r += &(&lv.d_point(delta)?.truncate(v_order, x_order) * vd);
        }
        rhs.push(r);
    }
    let g_inv = jet_matrix_inverse(&g)?;
    Ok((0..d)
        .map(|a| {
            let mut s = Jet::zeros(&target);
            for lam in 0..d {
                s += &(&g_inv[a][lam] * &rhs[lam]);
            }
            s * 0.5
        })
        .collect())
}

/// Spray jets straight from the model.
pub fn spray_jets(
    m: &SpacetimeModel,
    x: &[f64],
    v: &[f64],
    v_order: usize,
    x_order: usize,
) -> Result<Vec<Jet>> {
    let l = m.l_jet(x, v, v_order + 2, x_order + 1)?;
    spray_from_l(&l, v, v_order, x_order)
}

/// Spray value `G(v)`.
pub fn spray(m: &SpacetimeModel, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    Ok(spray_jets(m, x, v, 0, 0)?.iter().map(Jet::value).collect())
}

/// Spray value and nonlinear connection `N^α_β = ∂G^α/∂v^β`.
pub fn spray_and_nonlinear(
    m: &SpacetimeModel,
    x: &[f64],
    v: &[f64],
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let gj = spray_jets(m, x, v, 1, 0)?;
    let d = m.dim;
    let mut n = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            n[(a, b)] = gj[a].partial(&[b], &[])?;
        }
    }
    Ok((gj.iter().map(Jet::value).collect(), n))
}

/// Connection coefficients at `(x, v)`.
#[derive(Debug, Clone)]
pub struct ConnectionData {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    /// `γ^α_{βδ}` at index `(α·d + β)·d + δ`.
    pub gamma: Vec<f64>,
    pub spray: Vec<f64>,
    pub nonlinear: DMatrix<f64>,
    /// `Γ^α_{βδ}`, same layout as `gamma`.
    pub chern: Vec<f64>,
}

impl ConnectionData {
    fn idx(&self, a: usize, b: usize, c: usize) -> usize {
        let d = self.v.len();
        (a * d + b) * d + c
    }

    pub fn gamma(&self, a: usize, b: usize, c: usize) -> f64 {
        self.gamma[self.idx(a, b, c)]
    }

    pub fn chern(&self, a: usize, b: usize, c: usize) -> f64 {
        self.chern[self.idx(a, b, c)]
    }

    /// Largest `|Γ^α_{βδ} − Γ^α_{δβ}|`.
    pub fn chern_asymmetry(&self) -> f64 {
        let d = self.v.len();
        let mut worst: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    worst = worst.max((self.chern(a, b, c) - self.chern(a, c, b)).abs());
                }
            }
        }
        worst
    }
}

/// All connection coefficients at `(x, v)` from one jet of `L`.
pub fn connection_at(m: &SpacetimeModel, x: &[f64], v: &[f64]) -> Result<ConnectionData> {
    let d = m.dim;
    let l = m.l_jet(x, v, 3, 1)?;
    let g = hessian_v(&l, d)?;
    let g_inv = checked_inverse(&g)?;
    let i3 = |a: usize, b: usize, c: usize| (a * d + b) * d + c;

    // ∂_β g_{λδ} at [λ][δ][β], ∂_{v^μ} g_{λδ} at [λ][δ][μ].
    let mut dxg = vec![0.0; d * d * d];
    let mut dvg = vec![0.0; d * d * d];
    for lam in 0..d {
        for del in lam..d {
            for k in 0..d {
                let px = l.partial(&[lam, del], &[k])?;
                let pv = l.partial(&[lam, del, k], &[])?;
                dxg[i3(lam, del, k)] = px;
                dxg[i3(del, lam, k)] = px;
                dvg[i3(lam, del, k)] = pv;
                dvg[i3(del, lam, k)] = pv;
            }
        }
    }

    let mut gamma = vec![0.0; d * d * d];
    for a in 0..d {
        for b in 0..d {
            for c in b..d {
                let mut s = 0.0;
                for lam in 0..d {
                    let gi = g_inv[(a, lam)];
                    if gi != 0.0 {
                        s += gi * (dxg[i3(lam, c, b)] + dxg[i3(b, lam, c)] - dxg[i3(b, c, lam)]);
                    }
                }
                gamma[i3(a, b, c)] = 0.5 * s;
                gamma[i3(a, c, b)] = 0.5 * s;
            }
        }
    }

    let gj = spray_from_l(&l, v, 1, 0)?;
    let spray: Vec<f64> = gj.iter().map(Jet::value).collect();
    let mut n = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            n[(a, b)] = gj[a].partial(&[b], &[])?;
        }
    }

    let mut chern = gamma.clone();
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                let mut s = 0.0;
                for lam in 0..d {
                    let gi = g_inv[(a, lam)];
                    if gi == 0.0 {
                        continue;
                    }
                    let mut t = 0.0;
                    for mu in 0..d {
                        t += dvg[i3(lam, c, mu)] * n[(mu, b)] + dvg[i3(b, lam, mu)] * n[(mu, c)]
                            - dvg[i3(b, c, mu)] * n[(mu, lam)];
                    }
                    s += gi * t;
                }
                chern[i3(a, b, c)] -= 0.5 * s;
            }
        }
    }

    Ok(ConnectionData {
        x: x.to_vec(),
        v: v.to_vec(),
        g,
        g_inv,
        gamma,
        spray,
        nonlinear: n,
        chern,
    })
}

/// `D_v^w V = v^β ∂_β V + Γ(w)^α_{βδ} v^β V^δ` for a vector field given as a
/// jet-evaluable map of the point.
pub fn covariant_derivative(
    m: &SpacetimeModel,
    x: &[f64],
    field: &(dyn Fn(&[Jet]) -> Vec<Jet> + Sync),
    direction: &[f64],
    reference: &[f64],
) -> Result<Vec<f64>> {
    let d = m.dim;
    if reference.iter().all(|&c| c == 0.0) {
        return Err(Error::Domain("reference vector must be nonzero".into()));
    }
    let conn = connection_at(m, x, reference)?;
    let shape = JetShape::get(d, 0, 1);
    let xs: Vec<Jet> = (0..d)
        .map(|i| Jet::point_variable(&shape, i, x[i]))
        .collect();
    let vf = field(&xs);
    let mut out = vec![0.0; d];
    for a in 0..d {
        let va = vf[a].clone().broadcast_like(&xs[0]);
        for b in 0..d {
            out[a] += direction[b] * va.partial(&[], &[b])?;
            for c in 0..d {
                out[a] += conn.chern(a, b, c) * direction[b] * vf[c].value();
            }
        }
    }
    Ok(out)
}

/// Sample directions for the Berwald audit: `X(x)` plus Halton points of
/// the audit patch.
pub fn audit_directions(m: &SpacetimeModel, x: &[f64], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = m.n();
    let mut out = vec![m.orientation(x)];
    let mut k = seed * 7919;
    while out.len() < count.max(2) {
        let h = sampling::halton(k, n.max(1));
        k += 1;
        let u: Vec<f64> = h.iter().take(n).map(|c| 2.0 * c - 1.0).collect();
        if u.iter().map(|c| c * c).sum::<f64>() > 1.0 {
            continue;
        }
        let mut v = vec![1.0];
        v.extend(u.iter().map(|c| c * m.audit_aperture));
        out.push(v);
    }
    out
}

/// Largest nondimensionalized entry spread of `Γ` over the directions.
pub fn berwald_deviation(m: &SpacetimeModel, x: &[f64], directions: &[Vec<f64>]) -> Result<f64> {
    let conns: Vec<ConnectionData> = directions
        .iter()
        .map(|v| connection_at(m, x, v))
        .collect::<Result<_>>()?;
    let scale = conns.iter().map(|c| c.g.abs().max()).fold(1.0, f64::max);
    let len = conns[0].chern.len();
    let mut worst: f64 = 0.0;
    for k in 0..len {
        let (lo, hi) = conns
            .iter()
            .map(|c| c.chern[k])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| {
                (lo.min(g), hi.max(g))
            });
        worst = worst.max(hi - lo);
    }
    Ok(worst / scale)
}

/// Berwald audit over sampled points. The verdict is checked against the
/// model's claimed status when it has one.
pub fn berwald_audit(
    m: &SpacetimeModel,
    x_samples: &[Vec<f64>],
    v_samples_per_x: usize,
    seed: u64,
) -> ScenarioReport {
    let mut report = ScenarioReport::new("berwald");
    report.config.insert("model".into(), m.name.clone());
    report.config.insert("seed".into(), seed.to_string());
    report
        .config
        .insert("points".into(), x_samples.len().to_string());
    report
        .config
        .insert("directions_per_point".into(), v_samples_per_x.to_string());
    let devs: Vec<Result<f64>> = x_samples
        .par_iter()
        .map(|x| {
            let dirs = audit_directions(m, x, v_samples_per_x, seed);
            berwald_deviation(m, x, &dirs)
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut errors = 0;
    for d in &devs {
        match d {
            Ok(v) => worst = worst.max(*v),
            Err(_) => errors += 1,
        }
    }
    let is_berwald = worst <= TAU_BERWALD;
    let verdict = if is_berwald { "Berwald" } else { "non-Berwald" };
    let rec = match m.berwald {
        Some(true) => CheckRecord::at_most("berwald-deviation", worst, TAU_BERWALD),
        Some(false) => CheckRecord::new(
            "berwald-deviation",
            worst,
            TAU_BERWALD,
            crate::report::Relation::Exceeds,
        ),
        None => CheckRecord::info("berwald-deviation", worst),
    };
    report.push(rec.with_note(format!("classified {verdict}")));
    report.push(CheckRecord::at_most(
        "evaluation-errors",
        errors as f64,
        0.0,
    ));
    report
}

/// Contraction `Γ(w)^α_{βδ} a^β b^δ`.
pub fn contract(conn: &ConnectionData, a: &[f64], b: &[f64]) -> DVector<f64> {
    let d = a.len();
    DVector::from_fn(d, |al, _| {
        let mut s = 0.0;
        for be in 0..d {
            for de in 0..d {
                s += conn.chern(al, be, de) * a[be] * b[de];
            }
        }
        s
    })
}
