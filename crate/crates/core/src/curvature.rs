//! Curvature endomorphism, Ricci curvature, weighted Ricci curvature and the
//! ε-range.

use nalgebra::{DMatrix, DVector};

use crate::connection::spray_jets;
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::model::SpacetimeModel;

/// Spray, nonlinear connection and curvature at one `(x, v)`.
#[derive(Debug, Clone)]
pub struct CurvatureData {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub spray: Vec<f64>,
    pub nonlinear: DMatrix<f64>,
    /// `R^α_β(v)`.
    pub r: DMatrix<f64>,
    pub ric: f64,
}

/// Everything second-order along the spray from one jet of `L` (caps (4, 2)).
pub fn curvature_at(m: &SpacetimeModel, x: &[f64], v: &[f64]) -> Result<CurvatureData> {
    let d = m.dim;
    let gj: Vec<Jet> = spray_jets(m, x, v, 2, 1)?;
    let spray: Vec<f64> = gj.iter().map(Jet::value).collect();
    let mut n = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            n[(a, b)] = gj[a].partial(&[b], &[])?;
        }
    }
    let mut r = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let mut s = 2.0 * gj[a].partial(&[], &[b])?;
            for k in 0..d {
                s -= gj[a].partial(&[b], &[k])? * v[k];
                s += 2.0 * gj[a].partial(&[b, k], &[])? * spray[k];
                s -= n[(a, k)] * n[(k, b)];
            }
            r[(a, b)] = s;
        }
    }
    let ric = r.trace();
    Ok(CurvatureData {
        x: x.to_vec(),
        v: v.to_vec(),
        spray,
        nonlinear: n,
        r,
        ric,
    })
}

pub fn curvature_endomorphism(m: &SpacetimeModel, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
    Ok(curvature_at(m, x, v)?.r)
}

pub fn ricci(m: &SpacetimeModel, x: &[f64], v: &[f64]) -> Result<f64> {
    Ok(curvature_at(m, x, v)?.ric)
}

/// `|R_v(v)|`, which vanishes for any spray.
pub fn flag_identity_residual(c: &CurvatureData) -> f64 {
    (&c.r * DVector::from_column_slice(&c.v)).abs().max()
}

/// The effective dimension `N` of the weighted Ricci curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NEff {
    Finite(f64),
    Infinite,
    /// The monotone limit `N ↓ n`.
    LimitN,
}

impl NEff {
    /// Reads `inf`/`infinity`, or a number; a value equal to `n` becomes the
    /// limit at `n`.
    pub fn parse(s: &str, n: usize) -> Result<NEff> {
        match crate::model::parse_real(s) {
            Some(x) if x == f64::INFINITY => Ok(NEff::Infinite),
            Some(x) if x.is_finite() => Ok(NEff::from_value(x, n)),
            _ => Err(Error::Config(format!("cannot parse N = '{s}'"))),
        }
    }

    pub fn from_value(x: f64, n: usize) -> NEff {
        if x == f64::INFINITY {
            NEff::Infinite
        } else if x == n as f64 {
            NEff::LimitN
        } else {
            NEff::Finite(x)
        }
    }

    pub fn value(&self, n: usize) -> f64 {
        match *self {
            NEff::Finite(x) => x,
            NEff::Infinite => f64::INFINITY,
            NEff::LimitN => n as f64,
        }
    }

    pub fn label(&self, n: usize) -> String {
        match *self {
            NEff::Finite(x) => format!("{x}"),
            NEff::Infinite => "inf".into(),
            NEff::LimitN => format!("{n}"),
        }
    }
}

/// Tolerance below which `(Ψ∘η)'` counts as zero for the `N = n` limit.
pub const LIMIT_N_TOL: f64 = 1e-12;

/// `Ric_N(v) = Ric(v) + (Ψ∘η)'' − (Ψ∘η)'²/(N − n)` from precomputed pieces.
pub fn weighted_ricci_from(ric: f64, psi1: f64, psi2: f64, n_eff: NEff, n: usize) -> Result<f64> {
    match n_eff {
        NEff::Infinite => Ok(ric + psi2),
        NEff::LimitN => {
            if psi1.abs() <= LIMIT_N_TOL {
                Ok(ric + psi2)
            } else {
                Ok(f64::NEG_INFINITY)
            }
        }
        NEff::Finite(nv) => {
            if nv == n as f64 {
                return Err(Error::Parameter(format!(
                    "N = n = {n} requires the limit flag"
                )));
            }
            if nv.is_nan() || nv == f64::NEG_INFINITY {
                return Err(Error::Parameter(format!("N = {nv} is not a valid value")));
            }
            Ok(ric + psi2 - psi1 * psi1 / (nv - n as f64))
        }
    }
}

/// Weighted Ricci curvature along the geodesic with initial velocity `v`.
/// The limit at `N = n` is `−∞` whenever `(Ψ∘η)'(0) ≠ 0`.
pub fn weighted_ricci(m: &SpacetimeModel, x: &[f64], v: &[f64], n_eff: NEff) -> Result<f64> {
    let c = curvature_at(m, x, v)?;
    let (psi1, psi2) = m.weight.along_geodesic(x, v, &c.spray)?;
    weighted_ricci_from(c.ric, psi1, psi2, n_eff, m.n())
}

/// Outcome of the ε-range test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonRange {
    pub n_eff: f64,
    pub epsilon: f64,
    pub n: usize,
    pub admissible: bool,
    /// `c(N, ε)`; positive exactly when admissible (away from `N = 0`).
    pub c: f64,
}

/// The ε-range test and `c(N, ε)`. `N` may be `+∞`; `N ∈ (0, n)` and `N = −∞`
/// are parameter errors.
pub fn epsilon_admissible(n_eff: f64, epsilon: f64, n: usize) -> Result<EpsilonRange> {
    let nf = n as f64;
    if n == 0 {
        return Err(Error::Parameter(
            "spatial dimension n must be positive".into(),
        ));
    }
    if n_eff.is_nan() || n_eff == f64::NEG_INFINITY {
        return Err(Error::Parameter(format!(
            "N = {n_eff} is not a valid value"
        )));
    }
    if n_eff > 0.0 && n_eff < nf {
        return Err(Error::Parameter(format!(
            "N = {n_eff} lies in (0, n) = (0, {n}), outside the admissible range (-inf, 0] ∪ [n, +inf]"
        )));
    }
    if !epsilon.is_finite() {
        return Err(Error::Parameter(format!(
            "epsilon = {epsilon} is not finite"
        )));
    }
    let (admissible, c) = if n_eff == 0.0 {
        (epsilon == 0.0, 1.0 / nf)
    } else if n_eff == nf {
        (true, 1.0 / nf)
    } else if n_eff == f64::INFINITY {
        (epsilon.abs() < 1.0, (1.0 - epsilon * epsilon) / nf)
    } else {
        let bound = (n_eff / (n_eff - nf)).sqrt();
        (
            epsilon.abs() < bound,
            (1.0 - epsilon * epsilon * (n_eff - nf) / n_eff) / nf,
        )
    };
    Ok(EpsilonRange {
        n_eff,
        epsilon,
        n,
        admissible,
        c,
    })
}

/// As [`epsilon_admissible`] but rejecting inadmissible ε.
pub fn require_admissible(n_eff: f64, epsilon: f64, n: usize) -> Result<EpsilonRange> {
    let r = epsilon_admissible(n_eff, epsilon, n)?;
    if !r.admissible {
        return Err(Error::Parameter(format!(
            "epsilon = {epsilon} is outside the epsilon-range for N = {n_eff}, n = {n}"
        )));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_model;
    use std::collections::BTreeMap;

    fn model(name: &str, dim: usize) -> SpacetimeModel {
        build_model(name, dim, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn flat_models_have_zero_curvature() {
        for name in ["minkowski", "flat-quartic", "product-berwald"] {
            let c = curvature_at(&model(name, 3), &[0.1, 0.2, 0.3], &[1.0, 0.3, -0.2]).unwrap();
            assert!(c.r.abs().max() < 1e-13, "{name}");
        }
    }

    #[test]
    fn flrw_curvature_oracle() {
        let m = model("flrw", 2);
        let c = curvature_at(&m, &[0.3, 0.0], &[1.0, 0.0]).unwrap();
        assert!((c.r[(1, 1)] + 1.0).abs() < 1e-12);
        assert!((c.ric + 1.0).abs() < 1e-12);
        let c = curvature_at(&m, &[0.3, 0.1], &[1.2, 0.4]).unwrap();
        assert!(flag_identity_residual(&c) < 1e-11);
        let r2 = ricci(&m, &[0.3, 0.1], &[2.4, 0.8]).unwrap();
        assert!((r2 - 4.0 * c.ric).abs() < 1e-11);
    }

    #[test]
    fn nonberwald_flag_identity() {
        let m = model("nonberwald-quartic", 3);
        let c = curvature_at(&m, &[0.2, 0.3, -0.1], &[1.0, 0.4, 0.2]).unwrap();
        assert!(flag_identity_residual(&c) < 1e-10);
    }

    #[test]
    fn weighted_minkowski_ricci() {
        let m = model("weighted-minkowski", 4);
        let a: f64 = -0.5;
        let e0 = [1.0, 0.0, 0.0, 0.0];
        let x = [0.0; 4];
        for nv in [6.0, 10.0, -1.0] {
            let r = weighted_ricci(&m, &x, &e0, NEff::Finite(nv)).unwrap();
            assert!((r + a * a / (nv - 3.0)).abs() < 1e-14);
        }
        assert_eq!(weighted_ricci(&m, &x, &e0, NEff::Infinite).unwrap(), 0.0);
        assert_eq!(
            weighted_ricci(&m, &x, &e0, NEff::LimitN).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(matches!(
            weighted_ricci(&m, &x, &e0, NEff::Finite(3.0)),
            Err(Error::Parameter(_))
        ));
        // Monotone in N on [n, ∞) and Ric_{N<0} ≥ Ric_∞.
        let mut prev = f64::NEG_INFINITY;
        for nv in [3.5, 4.0, 8.0, 100.0] {
            let r = weighted_ricci(&m, &x, &e0, NEff::Finite(nv)).unwrap();
            assert!(r >= prev);
            prev = r;
        }
        assert!(prev <= weighted_ricci(&m, &x, &e0, NEff::Infinite).unwrap());
        assert!(weighted_ricci(&m, &x, &e0, NEff::Finite(-2.0)).unwrap() >= 0.0);
    }

    #[test]
    fn epsilon_range_examples() {
        let r = epsilon_admissible(0.0, 0.0, 3).unwrap();
        assert!(r.admissible && r.c == 1.0 / 3.0);
        let r = epsilon_admissible(3.0, 5.0, 3).unwrap();
        assert!(r.admissible && r.c == 1.0 / 3.0);
        let r = epsilon_admissible(6.0, 2f64.sqrt(), 3).unwrap();
        assert!(!r.admissible);
        assert!(matches!(
            epsilon_admissible(2.0, 0.0, 3),
            Err(Error::Parameter(_))
        ));
        assert!(
            !epsilon_admissible(f64::INFINITY, 1.0, 3)
                .unwrap()
                .admissible
        );
        assert!(
            epsilon_admissible(f64::INFINITY, 0.99, 3)
                .unwrap()
                .admissible
        );
    }

    #[test]
    fn parse_n() {
        assert_eq!(NEff::parse("inf", 3).unwrap(), NEff::Infinite);
        assert_eq!(NEff::parse("3", 3).unwrap(), NEff::LimitN);
        assert_eq!(NEff::parse("-1", 3).unwrap(), NEff::Finite(-1.0));
        assert!(NEff::parse("x", 3).is_err());
    }
}
