//! Weighted Finsler spacetime models: the structure `L`, the weight `Ψ`,
//! the time orientation `X`, causal classification and validity audits.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jet::{fd_lift, lift, lift_point, Jet, PointVectorFn};
use crate::report::{CheckRecord, ScenarioReport};
use crate::sampling;

pub type WeightFn = Arc<dyn Fn(&[Jet]) -> Jet + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Default relative width of the lightlike band `|L| ≤ τ·|v|²`.
pub const TAU_NULL: f64 = 1e-9;

/// How derivatives of `L` are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffMode {
    Jet,
    /// Central differences of plain evaluations; cross-validation only.
    FiniteDifference,
}

/// Where `L` is defined and smooth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cone {
    /// All of `TM∖0`.
    Whole,
    /// The open double cone `(v⁰)² > |v̄|²` of the flat comparison metric.
    Minkowski,
}

impl Cone {
    pub fn contains(&self, v: &[f64]) -> bool {
        match self {
            Cone::Whole => v.iter().any(|&c| c != 0.0),
            Cone::Minkowski => {
                let sp: f64 = v[1..].iter().map(|c| c * c).sum();
                v[0] * v[0] > sp
            }
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            Cone::Whole => "all of TM minus the zero section",
            Cone::Minkowski => "open cone (v0)^2 > |vbar|^2 (both time orientations)",
        }
    }
}

/// A weight function `Ψ` of the point.
#[derive(Clone)]
pub struct Weight {
    pub name: String,
    pub formula: String,
    f: WeightFn,
    zero: bool,
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Weight({}: {})", self.name, self.formula)
    }
}

impl Weight {
    pub fn new(
        name: impl Into<String>,
        formula: impl Into<String>,
        f: impl Fn(&[Jet]) -> Jet + Send + Sync + 'static,
    ) -> Self {
        Weight {
            name: name.into(),
            formula: formula.into(),
            f: Arc::new(f),
            zero: false,
        }
    }

    pub fn zero() -> Self {
        Weight {
            name: "zero".into(),
            formula: "Psi = 0".into(),
            f: Arc::new(|_| Jet::constant(0.0)),
            zero: true,
        }
    }

    pub fn constant(c: f64) -> Self {
        Weight::new("constant", format!("Psi = {c}"), move |_| Jet::constant(c))
    }

    /// `Ψ = a·x⁰`.
    pub fn time_linear(a: f64) -> Self {
        Weight::new("time-linear", format!("Psi = {a}*x0"), move |x| &x[0] * a)
    }

    /// `Ψ = a·x¹`, constant along the time axis.
    pub fn fiber_linear(a: f64) -> Self {
        Weight::new("fiber-linear", format!("Psi = {a}*x1"), move |x| &x[1] * a)
    }

    /// `Ψ = a·|x̄|²`.
    pub fn fiber_quadratic(a: f64) -> Self {
        Weight::new("fiber-quadratic", format!("Psi = {a}*|xbar|^2"), move |x| {
            let mut s = Jet::constant(0.0);
            for xi in &x[1..] {
                s = s + xi * xi;
            }
            s * a
        })
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let xs: Vec<Jet> = x.iter().map(|&c| Jet::constant(c)).collect();
        (self.f)(&xs).value()
    }

    pub fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        lift_point(&*self.f, x, order)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        let j = self.jet(x, 1)?;
        (0..x.len())
            .map(|i| j.partial(&[], &[i]))
            .collect::<Result<Vec<_>>>()
            .map(DVector::from_vec)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let j = self.jet(x, 2)?;
        let d = x.len();
        let mut h = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                h[(a, b)] = j.partial(&[], &[a, b])?;
            }
        }
        Ok(h)
    }

    /// `(Ψ∘η)'` and `(Ψ∘η)''` at `η(0)=x`, `η̇(0)=v`, given the spray value
    /// `G(v)` (so `η̈ = −2G`).
    pub fn along_geodesic(&self, x: &[f64], v: &[f64], spray: &[f64]) -> Result<(f64, f64)> {
        if self.zero {
            return Ok((0.0, 0.0));
        }
        let j = self.jet(x, 2)?;
        let d = x.len();
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for a in 0..d {
            let pa = j.partial(&[], &[a])?;
            d1 += pa * v[a];
            d2 -= 2.0 * pa * spray[a];
            for b in 0..d {
                d2 += j.partial(&[], &[a, b])? * v[a] * v[b];
            }
        }
        Ok((d1, d2))
    }
}

/// Causal character of a vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CausalKind {
    Timelike,
    Lightlike,
    Spacelike,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Future,
    Past,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CausalClass {
    pub kind: CausalKind,
    pub orientation: Orientation,
    /// `L` lies inside the lightlike band without being exactly zero.
    pub tie_band: bool,
}

/// A weighted Lorentz–Finsler spacetime in a single chart.
#[derive(Clone)]
pub struct SpacetimeModel {
    pub name: String,
    pub dim: usize,
    pub params: BTreeMap<String, String>,
    l: Arc<dyn PointVectorFn>,
    pub weight: Weight,
    orientation: FieldFn,
    pub cone: Cone,
    /// Aperture `a` of the sampled cone patch `|v̄| ≤ a·|v⁰|` used by audits.
    pub audit_aperture: f64,
    /// Half-width of the coordinate box sampled by audits.
    pub audit_box: f64,
    pub reversible: bool,
    /// `L` is a quadratic form in `v` (a Lorentzian metric).
    pub quadratic: bool,
    /// Chart radius within which BVP connectors are taken to be maximizing.
    pub convexity_radius: f64,
    /// Claimed Berwald status, checked by the Berwald audit when known.
    pub berwald: Option<bool>,
    pub diff_mode: DiffMode,
    pub tau_null: f64,
    pub formula: String,
    pub facts: Vec<String>,
    pub reversed: bool,
}

impl fmt::Debug for SpacetimeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpacetimeModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("params", &self.params)
            .field("weight", &self.weight)
            .finish()
    }
}

impl SpacetimeModel {
    /// A model from a jet-evaluable `L`; orientation `∂₀`, zero weight,
    /// defined on the whole slit bundle.
    pub fn custom(
        name: impl Into<String>,
        dim: usize,
        l: impl Fn(&[Jet], &[Jet]) -> Jet + Send + Sync + 'static,
    ) -> Self {
        SpacetimeModel {
            name: name.into(),
            dim,
            params: BTreeMap::new(),
            l: Arc::new(l),
            weight: Weight::zero(),
            orientation: Arc::new(move |_: &[f64]| unit(dim, 0)),
            cone: Cone::Whole,
            audit_aperture: 0.8,
            audit_box: 1.0,
            reversible: false,
            quadratic: false,
            convexity_radius: f64::INFINITY,
            berwald: None,
            diff_mode: DiffMode::Jet,
            tau_null: TAU_NULL,
            formula: String::from("user supplied"),
            facts: Vec::new(),
            reversed: false,
        }
    }

    /// Spatial dimension `n`.
    pub fn n(&self) -> usize {
        self.dim - 1
    }

    pub fn with_weight(mut self, w: Weight) -> Self {
        self.weight = w;
        self
    }

    pub fn with_diff_mode(mut self, mode: DiffMode) -> Self {
        self.diff_mode = mode;
        self
    }

    pub fn with_cone(mut self, cone: Cone) -> Self {
        self.cone = cone;
        self
    }

    pub fn with_orientation(
        mut self,
        x: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.orientation = Arc::new(x);
        self
    }

    /// The reverse structure `L̄(x, v) = L(x, −v)` with orientation `−X`.
    pub fn reversed(&self) -> SpacetimeModel {
        let l = self.l.clone();
        let x = self.orientation.clone();
        let mut m = self.clone();
        m.l = Arc::new(move |xs: &[Jet], vs: &[Jet]| {
            let neg: Vec<Jet> = vs.iter().map(|j| -j.clone()).collect();
            l.eval(xs, &neg)
        });
        m.orientation = Arc::new(move |p: &[f64]| x(p).into_iter().map(|c| -c).collect());
        m.reversed = !self.reversed;
        m.name = if self.reversed {
            self.name.trim_end_matches(" (reversed)").to_string()
        } else {
            format!("{} (reversed)", self.name)
        };
        m
    }

    fn check_dims(&self, x: &[f64], v: &[f64]) -> Result<()> {
        if x.len() != self.dim || v.len() != self.dim {
            return Err(Error::Config(format!(
                "model {} has dimension {}, got point of length {} and vector of length {}",
                self.name,
                self.dim,
                x.len(),
                v.len()
            )));
        }
        Ok(())
    }

    pub fn in_domain(&self, v: &[f64]) -> bool {
        v.iter().all(|c| c.is_finite()) && self.cone.contains(v)
    }

    fn check_domain(&self, x: &[f64], v: &[f64]) -> Result<()> {
        self.check_dims(x, v)?;
        if !self.in_domain(v) {
            return Err(Error::Domain(format!(
                "vector {v:?} at {x:?} lies outside the domain of {} ({})",
                self.name,
                self.cone.describe()
            )));
        }
        Ok(())
    }

    /// Jet of `L` at `(x, v)`.
    pub fn l_jet(&self, x: &[f64], v: &[f64], v_order: usize, x_order: usize) -> Result<Jet> {
        self.check_domain(x, v)?;
        match self.diff_mode {
            DiffMode::Jet => lift(&*self.l, x, v, v_order, x_order),
            DiffMode::FiniteDifference => {
                let l = self.l.clone();
                let plain = move |p: &[f64], w: &[f64]| {
                    let ps: Vec<Jet> = p.iter().map(|&c| Jet::constant(c)).collect();
                    let ws: Vec<Jet> = w.iter().map(|&c| Jet::constant(c)).collect();
                    l.eval(&ps, &ws).value()
                };
                let scale = v.iter().map(|c| c.abs()).fold(1.0, f64::max);
                fd_lift(&plain, x, v, v_order, x_order, scale)
            }
        }
    }

    /// `L(x, v)`.
    pub fn eval_l(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        self.check_domain(x, v)?;
        let xs: Vec<Jet> = x.iter().map(|&c| Jet::constant(c)).collect();
        let vs: Vec<Jet> = v.iter().map(|&c| Jet::constant(c)).collect();
        Ok(self.l.eval(&xs, &vs).value())
    }

    /// `∂L/∂v^α` at `(x, v)`, the covector `g_v(v, ·)`.
    pub fn dl_dv(&self, x: &[f64], v: &[f64]) -> Result<DVector<f64>> {
        let j = self.l_jet(x, v, 1, 0)?;
        (0..self.dim)
            .map(|a| j.partial(&[a], &[]))
            .collect::<Result<Vec<_>>>()
            .map(DVector::from_vec)
    }

    /// `g_v` without the signature check.
    pub fn g_raw(&self, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
        let j = self.l_jet(x, v, 2, 0)?;
        hessian_v(&j, self.dim)
    }

    /// The fundamental tensor `g_v = ∂²L/∂v∂v`, required to have signature
    /// `(−,+,…,+)`.
    pub fn fundamental_tensor(&self, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.g_raw(x, v)?;
        let (ok, eig) = lorentzian_signature(&g);
        if !ok {
            return Err(Error::ModelValidity {
                x: x.to_vec(),
                v: v.to_vec(),
                eigenvalues: eig,
            });
        }
        Ok(g)
    }

    /// `F = sqrt(−2L)` for causal vectors.
    pub fn finsler_f(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        let l = self.eval_l(x, v)?;
        let band = self.tau_null * norm2(v);
        if l > band {
            return Err(Error::Domain(format!(
                "F is defined for causal vectors only; L = {l:e} > 0 at v = {v:?}"
            )));
        }
        Ok((-2.0 * l).max(0.0).sqrt())
    }

    /// Time-orientation vector field `X(x)`.
    pub fn orientation(&self, x: &[f64]) -> Vec<f64> {
        (self.orientation)(x)
    }

    /// Causal character and time orientation of `v` at `x`.
    pub fn classify(&self, x: &[f64], v: &[f64]) -> Result<CausalClass> {
        self.check_dims(x, v)?;
        let vv = norm2(v);
        if vv == 0.0 {
            return Ok(CausalClass {
                kind: CausalKind::Zero,
                orientation: Orientation::None,
                tie_band: false,
            });
        }
        let band = self.tau_null * vv;
        let (kind, tie_band) = if self.in_domain(v) {
            let l = self.eval_l(x, v)?;
            if l.abs() <= band {
                (CausalKind::Lightlike, l != 0.0)
            } else if l < 0.0 {
                (CausalKind::Timelike, false)
            } else {
                (CausalKind::Spacelike, false)
            }
        } else {
            // Outside the declared cone the built-in structures are spacelike,
            // except on its boundary where the fiber term vanishes.
            let lm = 0.5 * (vv - 2.0 * v[0] * v[0]);
            if lm.abs() <= band && self.eval_l_limit(x, v).is_some_and(|l| l.abs() <= band) {
                (CausalKind::Lightlike, true)
            } else {
                (CausalKind::Spacelike, false)
            }
        };
        let orientation = match kind {
            CausalKind::Timelike | CausalKind::Lightlike => {
                let w = self.orientation(x);
                let gw = self.g_raw(x, &w)?;
                let p = (gw * DVector::from_column_slice(v)).dot(&DVector::from_vec(w));
                if p < 0.0 {
                    Orientation::Future
                } else {
                    Orientation::Past
                }
            }
            _ => Orientation::None,
        };
        Ok(CausalClass {
            kind,
            orientation,
            tie_band,
        })
    }

    /// `L` approached from inside the cone along the ray through `v`.
    fn eval_l_limit(&self, x: &[f64], v: &[f64]) -> Option<f64> {
        let mut w = v.to_vec();
        w[0] *= 1.0 + 1e-12;
        self.eval_l(x, &w).ok()
    }

    /// Registry-style description with the formula, cone and known facts.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("model: {}\n", self.name));
        s.push_str(&format!("dim: {} (n = {})\n", self.dim, self.n()));
        for (k, v) in &self.params {
            s.push_str(&format!("param.{k}: {v}\n"));
        }
        s.push_str(&format!("L: {}\n", self.formula));
        s.push_str(&format!("weight: {}\n", self.weight.formula));
        s.push_str("orientation: X = d/dx0\n");
        s.push_str(&format!("cone: {}\n", self.cone.describe()));
        s.push_str(&format!(
            "audit patch: |vbar| <= {} |v0|, |x^i| <= {}\n",
            self.audit_aperture, self.audit_box
        ));
        s.push_str(&format!("reversible: {}\n", self.reversible));
        s.push_str(&format!("convexity radius: {}\n", self.convexity_radius));
        for f in &self.facts {
            s.push_str(&format!("fact: {f}\n"));
        }
        s
    }
}

fn unit(dim: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[i] = 1.0;
    e
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum()
}

/// `∂²/∂v∂v` of a jet as a matrix.
pub(crate) fn hessian_v(j: &Jet, dim: usize) -> Result<DMatrix<f64>> {
    let mut g = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        for b in a..dim {
            let val = j.partial(&[a, b], &[])?;
            g[(a, b)] = val;
            g[(b, a)] = val;
        }
    }
    Ok(g)
}

/// Whether a symmetric matrix has exactly one negative eigenvalue and no
/// (numerically) zero ones; also returns the sorted eigenvalues.
pub fn lorentzian_signature(g: &DMatrix<f64>) -> (bool, Vec<f64>) {
    let eig = g.clone().symmetric_eigenvalues();
    let mut e: Vec<f64> = eig.iter().copied().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scale = e.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
    let ok = e.iter().all(|x| x.is_finite())
        && e[0] < -1e-12 * scale
        && e[1..].iter().all(|&x| x > 1e-12 * scale);
    (ok, e)
}

// ---------------------------------------------------------------- registry

pub const MODEL_NAMES: [&str; 6] = [
    "minkowski",
    "weighted-minkowski",
    "flrw",
    "flat-quartic",
    "nonberwald-quartic",
    "product-berwald",
];

/// One-line summaries for `list`.
pub fn model_summaries() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "minkowski",
            "flat Lorentzian metric, L = (-(v0)^2 + |vbar|^2)/2",
        ),
        ("weighted-minkowski", "Minkowski with weight Psi = a*x0"),
        ("flrw", "L = (-(v0)^2 + exp(2 H x0) |vbar|^2)/2"),
        (
            "flat-quartic",
            "L = L_M + eps (v1)^4 / (2 F_M^2), x-independent Berwald",
        ),
        (
            "nonberwald-quartic",
            "L = L_M + eps b(x) (v1)^4 / (2 F_M^2), non-Berwald",
        ),
        (
            "product-berwald",
            "L = L_M + eps (v1)^4 / (2 ((v0)^2 + |vbar|^2)), smooth on TM\\0",
        ),
    ]
}

/// Typed reader for a string parameter map; every key must be consumed.
pub struct Params<'a> {
    model: &'a str,
    map: &'a BTreeMap<String, String>,
    used: Vec<String>,
    echo: BTreeMap<String, String>,
}

impl<'a> Params<'a> {
    pub fn new(model: &'a str, map: &'a BTreeMap<String, String>) -> Self {
        Params {
            model,
            map,
            used: Vec::new(),
            echo: BTreeMap::new(),
        }
    }

    pub fn real(&mut self, key: &str, default: f64) -> Result<f64> {
        self.used.push(key.to_string());
        let v = match self.map.get(key) {
            None => default,
            Some(s) => parse_real(s).ok_or_else(|| {
                Error::Config(format!(
                    "model.{key} for {}: cannot parse '{s}' as a number",
                    self.model
                ))
            })?,
        };
        self.echo.insert(key.into(), v.to_string());
        Ok(v)
    }

    pub fn text(&mut self, key: &str, default: &str) -> String {
        self.used.push(key.to_string());
        let v = self
            .map
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string());
        self.echo.insert(key.into(), v.clone());
        v
    }

    pub fn finish(self) -> Result<BTreeMap<String, String>> {
        for k in self.map.keys() {
            if !self.used.contains(k) {
                return Err(Error::Config(format!(
                    "unknown parameter model.{k} for model {}",
                    self.model
                )));
            }
        }
        Ok(self.echo)
    }
}

/// Parses reals including `inf`, `+inf`, `-inf`, `infinity`.
pub fn parse_real(s: &str) -> Option<f64> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        t => t.parse().ok().filter(|x: &f64| !x.is_nan()),
    }
}

fn minkowski_l(v: &[Jet]) -> Jet {
    let mut s = -(&v[0] * &v[0]);
    for vi in &v[1..] {
        s = s + vi * vi;
    }
    s * 0.5
}

/// `F_M² = (v⁰)² − |v̄|²`.
fn minkowski_f2(v: &[Jet]) -> Jet {
    minkowski_l(v) * -2.0
}

/// Builds a registry model. Unknown names and parameters are configuration
/// errors naming the offending key.
pub fn build_model(
    name: &str,
    dim: usize,
    params: &BTreeMap<String, String>,
) -> Result<SpacetimeModel> {
    if dim < 2 {
        return Err(Error::Config(format!(
            "model.dim must be at least 2, got {dim}"
        )));
    }
    if dim > 8 {
        return Err(Error::Config(format!(
            "model.dim is capped at 8, got {dim}"
        )));
    }
    let mut p = Params::new(name, params);
    let mut m = match name {
        "minkowski" => {
            let mut m = SpacetimeModel::custom(name, dim, |_, v| minkowski_l(v));
            m.formula = "L = (-(v0)^2 + sum_i (vi)^2)/2".into();
            m.facts = vec![
                "g = diag(-1, 1, ..., 1) for every v".into(),
                "gamma = G = N = Γ = 0 (constant metric)".into(),
                "R = 0, Ric = 0; Berwald".into(),
                "d(x, y) = sqrt(-(y-x)·(y-x)) for y in the chronological future of x".into(),
                "Busemann function of t -> (t, 0, ..., 0): b = x0, reverse b = -x0".into(),
            ];
            m
        }
        "weighted-minkowski" => {
            let a = p.real("a", -0.5)?;
            let mut m = SpacetimeModel::custom(name, dim, |_, v| minkowski_l(v))
                .with_weight(Weight::time_linear(a));
            m.formula = "L = (-(v0)^2 + sum_i (vi)^2)/2".into();
            m.facts = vec![
                "Γ = 0, R = 0; Berwald".into(),
                format!("Psi = {a} x0: (Psi∘η)' = {a}, (Psi∘η)'' = 0 along t -> (t, 0, ..., 0)"),
                format!(
                    "Ric_N(d/dx0) = -a^2/(N - n) = {} / (N - n) for finite N != n",
                    -a * a
                ),
                "Ric_inf = 0".into(),
            ];
            m
        }
        "flrw" => {
            let h = p.real("H", 1.0)?;
            let radius = p.real("radius", 1.0)?;
            let mut m = SpacetimeModel::custom(name, dim, move |x, v| {
                let s2 = (&x[0] * (2.0 * h)).exp();
                let mut sp = Jet::constant(0.0);
                for vi in &v[1..] {
                    sp = sp + vi * vi;
                }
                (s2 * sp - &v[0] * &v[0]) * 0.5
            });
            m.formula = format!("L = (-(v0)^2 + exp(2*{h}*x0) sum_i (vi)^2)/2");
            m.convexity_radius = radius;
            m.facts = vec![
                format!("gamma^0_ii = {h} exp(2 {h} x0), gamma^i_0i = {h}; Γ = gamma (Lorentzian)"),
                format!("R^i_i(d/dx0) = -{h}^2 for each spatial i; Ric(d/dx0) = -n {h}^2 < 0"),
                "Berwald (quadratic L)".into(),
            ];
            m
        }
        "flat-quartic" => {
            let eps = p.real("eps", 0.1)?;
            let mut m = SpacetimeModel::custom(name, dim, move |_, v| {
                let v1sq = &v[1] * &v[1];
                minkowski_l(v) + (&v1sq * &v1sq) * minkowski_f2(v).recip() * (0.5 * eps)
            })
            .with_cone(Cone::Minkowski);
            m.formula = format!("L = L_M + {eps} (v1)^4 / (2 F_M^2), F_M^2 = (v0)^2 - |vbar|^2");
            m.facts = vec![
                "x-independent: gamma = G = N = Γ = 0, R = 0; Berwald".into(),
                "geodesics are affine lines; d(x, y) = F(y - x)".into(),
                "g at v = d/dx0 is diag(-1, 1, ..., 1)".into(),
                "signature holds on the patch |vbar| <= 0.8 v0 for small eps and fails for eps = 10".into(),
            ];
            m
        }
        "nonberwald-quartic" => {
            let eps = p.real("eps", 0.1)?;
            let profile = p.text("profile", "time");
            let (bf, bdesc, radius): (Arc<dyn Fn(&[Jet]) -> Jet + Send + Sync>, &str, f64) =
                match profile.as_str() {
                    "time" => (Arc::new(|x: &[Jet]| x[0].tanh() + 1.0), "1 + tanh(x0)", f64::INFINITY),
                    "x1" => (Arc::new(|x: &[Jet]| x[1].clone()), "x1", 1.0),
                    other => {
                        return Err(Error::Config(format!(
                            "unknown model.profile '{other}' for nonberwald-quartic (expected time or x1)"
                        )))
                    }
                };
            let mut m = SpacetimeModel::custom(name, dim, move |x, v| {
                let v1sq = &v[1] * &v[1];
                minkowski_l(v) + bf(x) * (&v1sq * &v1sq) * minkowski_f2(v).recip() * (0.5 * eps)
            })
            .with_cone(Cone::Minkowski);
            m.formula = format!("L = L_M + {eps} b(x) (v1)^4 / (2 F_M^2), b(x) = {bdesc}");
            m.convexity_radius = radius;
            m.facts = vec![
                "Γ depends on v where db != 0: not Berwald".into(),
                "G(d/dx0) = N(d/dx0) = 0, so the lines t -> x + t d/dx0 with x1 fixed are geodesics".into(),
                "translations along d/dx0 are not isometries when b depends on x0".into(),
            ];
            m
        }
        "product-berwald" => {
            let eps = p.real("eps", 0.1)?;
            let mut m = SpacetimeModel::custom(name, dim, move |_, v| {
                let mut e2 = Jet::constant(0.0);
                for vi in v {
                    e2 = e2 + vi * vi;
                }
                let v1sq = &v[1] * &v[1];
                minkowski_l(v) + (&v1sq * &v1sq) * e2.recip() * (0.5 * eps)
            });
            m.formula = format!("L = L_M + {eps} (v1)^4 / (2 ((v0)^2 + |vbar|^2))");
            m.facts = vec![
                "x-independent: Γ = 0, R = 0; Berwald".into(),
                "smooth on all of TM minus the zero section".into(),
                "g at v = d/dx0 is diag(-1, 1, ..., 1): product -dt^2 + h along the x0 lines"
                    .into(),
            ];
            m
        }
        other => {
            return Err(Error::Config(format!(
                "unknown model '{other}' (known: {})",
                MODEL_NAMES.join(", ")
            )))
        }
    };
    m.reversible = true;
    m.berwald = Some(name != "nonberwald-quartic");
    m.quadratic = matches!(name, "minkowski" | "weighted-minkowski" | "flrw");
    m.params = p.finish()?;
    Ok(m)
}

/// Builds a weight by name.
pub fn build_weight(name: &str, a: f64) -> Result<Weight> {
    match name {
        "zero" => Ok(Weight::zero()),
        "constant" => Ok(Weight::constant(a)),
        "time-linear" => Ok(Weight::time_linear(a)),
        "fiber-linear" => Ok(Weight::fiber_linear(a)),
        "fiber-quadratic" => Ok(Weight::fiber_quadratic(a)),
        other => Err(Error::Config(format!(
            "unknown weight '{other}' (known: zero, constant, time-linear, fiber-linear, fiber-quadratic)"
        ))),
    }
}

// ------------------------------------------------------------------- audit

struct AuditSample {
    homogeneity: f64,
    euler: f64,
    euler_grad: f64,
    g_homogeneity: f64,
    signature_ok: bool,
    reversibility: f64,
}

/// Samples `(x, v)` pairs on the audit patch and reports the worst Euler
/// and homogeneity residuals, signature failures, orientation and
/// reversibility.
pub fn audit_model(m: &SpacetimeModel, sample_budget: usize, seed: u64) -> ScenarioReport {
    let mut report = ScenarioReport::new("audit");
    report.config.insert("model".into(), m.name.clone());
    report.config.insert("seed".into(), seed.to_string());
    report
        .config
        .insert("samples".into(), sample_budget.to_string());

    let mut rng = sampling::rng(seed);
    let samples: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..sample_budget)
        .map(|k| {
            let x = sampling::box_point(&mut rng, m.dim, m.audit_box);
            let mut v = sampling::cone_vector(&mut rng, m.dim, m.audit_aperture);
            if k % 2 == 1 {
                v.iter_mut().for_each(|c| *c = -*c);
            }
            let c: f64 = rand::Rng::gen_range(&mut rng, 0.25..4.0);
            (x, v, c)
        })
        .collect();

    let results: Vec<Result<AuditSample>> = samples
        .par_iter()
        .map(|(x, v, c)| audit_one(m, x, v, *c))
        .collect();

    let mut worst = AuditSample {
        homogeneity: 0.0,
        euler: 0.0,
        euler_grad: 0.0,
        g_homogeneity: 0.0,
        signature_ok: true,
        reversibility: 0.0,
    };
    let mut violations = 0usize;
    let mut errors = 0usize;
    let mut first_violation = None;
    for (r, s) in results.iter().zip(&samples) {
        match r {
            Ok(a) => {
                worst.homogeneity = worst.homogeneity.max(a.homogeneity);
                worst.euler = worst.euler.max(a.euler);
                worst.euler_grad = worst.euler_grad.max(a.euler_grad);
                worst.g_homogeneity = worst.g_homogeneity.max(a.g_homogeneity);
                worst.reversibility = worst.reversibility.max(a.reversibility);
                if !a.signature_ok {
                    violations += 1;
                    first_violation.get_or_insert_with(|| (s.0.clone(), s.1.clone()));
                }
            }
            Err(_) => errors += 1,
        }
    }
    report.push(CheckRecord::at_most(
        "homogeneity",
        worst.homogeneity,
        1e-12,
    ));
    report.push(CheckRecord::at_most("euler-g(v,v)-2L", worst.euler, 1e-12));
    report.push(CheckRecord::at_most(
        "euler-g(v)-dL",
        worst.euler_grad,
        1e-12,
    ));
    report.push(CheckRecord::at_most(
        "g-0-homogeneity",
        worst.g_homogeneity,
        1e-12,
    ));
    let mut sig = CheckRecord::at_most("signature-violations", violations as f64, 0.0);
    if let Some((x, v)) = first_violation {
        sig = sig.with_note(format!("first at x={x:?}, v={v:?}"));
    }
    report.push(sig);
    report.push(CheckRecord::at_most(
        "evaluation-errors",
        errors as f64,
        0.0,
    ));
    if m.reversible {
        report.push(CheckRecord::at_most(
            "reversibility",
            worst.reversibility,
            1e-12,
        ));
    } else {
        report.push(CheckRecord::info("reversibility", worst.reversibility));
    }

    // Orientation field timelike on the sampled points.
    let mut worst_lx = f64::NEG_INFINITY;
    for (x, _, _) in samples.iter().take(1000) {
        let w = m.orientation(x);
        let lx = m
            .eval_l(x, &w)
            .map(|l| l / norm2(&w))
            .unwrap_or(f64::INFINITY);
        worst_lx = worst_lx.max(lx);
    }
    report.push(
        CheckRecord::flag("orientation-timelike", worst_lx < 0.0)
            .with_note(format!("max L(X)/|X|^2 = {worst_lx:e}")),
    );

    if m.quadratic {
        let mut dev: f64 = 0.0;
        for chunk in samples.chunks(2).take(500) {
            if let [a, b] = chunk {
                if let (Ok(g1), Ok(g2)) = (m.g_raw(&a.0, &a.1), m.g_raw(&a.0, &b.1)) {
                    dev = dev.max((g1 - g2).abs().max());
                }
            }
        }
        report.push(CheckRecord::at_most("g-v-independence", dev, 1e-13));
    }
    report
}

fn audit_one(m: &SpacetimeModel, x: &[f64], v: &[f64], c: f64) -> Result<AuditSample> {
    let jet = m.l_jet(x, v, 2, 0)?;
    let l = jet.value();
    let g = hessian_v(&jet, m.dim)?;
    let vv = norm2(v);
    let vd = DVector::from_column_slice(v);
    let gv = &g * &vd;
    let dl: Vec<f64> = (0..m.dim)
        .map(|a| jet.partial(&[a], &[]))
        .collect::<Result<_>>()?;
    let euler = (gv.dot(&vd) - 2.0 * l).abs() / vv;
    let euler_grad = (0..m.dim)
        .map(|a| (gv[a] - dl[a]).abs())
        .fold(0.0, f64::max)
        / vv.sqrt();
    let cv: Vec<f64> = v.iter().map(|a| c * a).collect();
    let lc = m.eval_l(x, &cv)?;
    let homogeneity = (lc - c * c * l).abs() / (c * c * vv);
    let gc = m.g_raw(x, &cv)?;
    let scale = g.abs().max().max(1.0);
    let g_homogeneity = (&gc - &g).abs().max() / scale;
    let (signature_ok, _) = lorentzian_signature(&g);
    let neg: Vec<f64> = v.iter().map(|a| -a).collect();
    let reversibility = m
        .eval_l(x, &neg)
        .map(|ln| (ln - l).abs() / vv)
        .unwrap_or(f64::INFINITY);
    Ok(AuditSample {
        homogeneity,
        euler,
        euler_grad,
        g_homogeneity,
        signature_ok,
        reversibility,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(name: &str, dim: usize) -> SpacetimeModel {
        build_model(name, dim, &BTreeMap::new()).unwrap()
    }

    fn with(name: &str, dim: usize, kv: &[(&str, &str)]) -> SpacetimeModel {
        let p = kv
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        build_model(name, dim, &p).unwrap()
    }

    #[test]
    fn minkowski_values() {
        let m = model("minkowski", 4);
        let x = [0.0; 4];
        assert_eq!(m.eval_l(&x, &[1.0, 0.0, 0.0, 0.0]).unwrap(), -0.5);
        assert_eq!(m.eval_l(&x, &[1.0, 1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(m.finsler_f(&x, &[1.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(m.finsler_f(&x, &[2.0, 0.0, 0.0, 0.0]).unwrap(), 2.0);
        assert_eq!(m.finsler_f(&x, &[1.0, 1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            m.finsler_f(&x, &[0.0, 1.0, 0.0, 0.0]),
            Err(Error::Domain(_))
        ));
        let g = m.fundamental_tensor(&x, &[1.0, 0.3, 0.0, 0.1]).unwrap();
        assert_eq!(
            g,
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, 1.0, 1.0]))
        );
    }

    #[test]
    fn flat_quartic_axis() {
        let m = model("flat-quartic", 2);
        let x = [0.3, -0.2];
        assert_eq!(m.eval_l(&x, &[1.0, 0.0]).unwrap(), -0.5);
        let g = m.fundamental_tensor(&x, &[1.0, 0.0]).unwrap();
        assert!(
            (g - DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]))
                .abs()
                .max()
                < 1e-15
        );
        assert!(matches!(m.eval_l(&x, &[0.0, 1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn flat_quartic_off_axis_oracle() {
        // g_11 at (1, s): L = (s^2 - 1)/2 + eps s^4 / (2 (1 - s^2));
        // d2/ds2 of eps s^4/(2(1-s^2)) = eps (6 s^2 - 4 s^4 + 2 s^6)/(1-s^2)^3 ... checked numerically.
        let eps = 0.1;
        let m = with("flat-quartic", 2, &[("eps", "0.1")]);
        let s: f64 = 0.4;
        let g = m.g_raw(&[0.0, 0.0], &[1.0, s]).unwrap();
        let q = |s: f64| eps * s.powi(4) / (2.0 * (1.0 - s * s));
        let h = 1e-4;
        let fd = (q(s + h) - 2.0 * q(s) + q(s - h)) / (h * h);
        assert!((g[(1, 1)] - (1.0 + fd)).abs() < 1e-6);
    }

    #[test]
    fn classification() {
        let m = model("minkowski", 4);
        let x = [0.0; 4];
        let c = m.classify(&x, &[1.0, 0.5, 0.0, 0.0]).unwrap();
        assert_eq!(
            (c.kind, c.orientation),
            (CausalKind::Timelike, Orientation::Future)
        );
        let c = m.classify(&x, &[-1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            (c.kind, c.orientation),
            (CausalKind::Timelike, Orientation::Past)
        );
        let c = m.classify(&x, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            (c.kind, c.orientation),
            (CausalKind::Spacelike, Orientation::None)
        );
        let c = m.classify(&x, &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            (c.kind, c.orientation),
            (CausalKind::Lightlike, Orientation::Future)
        );
        assert_eq!(m.classify(&x, &[0.0; 4]).unwrap().kind, CausalKind::Zero);
        let q = model("flat-quartic", 3);
        assert_eq!(
            q.classify(&[0.0; 3], &[0.0, 1.0, 0.0]).unwrap().kind,
            CausalKind::Spacelike
        );
        let c = q.classify(&[0.0; 3], &[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(c.kind, CausalKind::Lightlike);
    }

    #[test]
    fn reversed_structure() {
        let m = model("flrw", 2).reversed();
        assert!(m.reversed);
        assert_eq!(m.orientation(&[0.0, 0.0]), vec![-1.0, 0.0]);
        let c = m.classify(&[0.0, 0.0], &[-1.0, 0.0]).unwrap();
        assert_eq!(c.orientation, Orientation::Future);
        assert_eq!(m.reversed().name, "flrw");
    }

    #[test]
    fn audits() {
        let r = audit_model(&model("minkowski", 4), 500, 1);
        assert!(r.passed(), "{}", r.to_text());
        let r = audit_model(&model("flat-quartic", 4), 2000, 2);
        assert!(r.passed(), "{}", r.to_text());
        let r = audit_model(&with("flat-quartic", 4, &[("eps", "10")]), 2000, 3);
        assert!(r.check("signature-violations").unwrap().value > 0.0);
        assert!(!r.passed());
    }

    #[test]
    fn registry_errors() {
        assert!(matches!(
            build_model("nope", 3, &BTreeMap::new()),
            Err(Error::Config(_))
        ));
        let p = [("bogus".to_string(), "1".to_string())]
            .into_iter()
            .collect();
        let e = build_model("minkowski", 3, &p).unwrap_err();
        assert!(e.to_string().contains("model.bogus"));
        assert!(model("minkowski", 3).describe().contains("Γ = 0"));
        assert!(model("flat-quartic", 3)
            .describe()
            .contains("cone: open cone"));
    }

    #[test]
    fn finite_difference_mode_agrees() {
        let m = model("flat-quartic", 3);
        let fd = m.clone().with_diff_mode(DiffMode::FiniteDifference);
        let x = [0.1, 0.2, -0.3];
        let v = [1.0, 0.3, -0.2];
        let d = (m.g_raw(&x, &v).unwrap() - fd.g_raw(&x, &v).unwrap())
            .abs()
            .max();
        assert!(d < 1e-6, "{d}");
    }
}
