//! Truncated multivariate Taylor arithmetic over the slots `(x^0..x^n, v^0..v^n)`.
//!
//! A [`Jet`] stores the Taylor coefficients `f_(a,b) = ∂^a_v ∂^b_x f / (a! b!)` of a
//! scalar function for every monomial whose v-degree is at most the shape's
//! v-order and whose x-degree is at most its x-order. One evaluation of a
//! Lorentz-Finsler function on jets yields every mixed partial derivative the
//! connection and curvature formulas need at a point.
//!
//! Monomials are enumerated graded (degree 0, then 1, ...) with a fixed order
//! inside each degree, so the table of a lower-order shape is a prefix of the
//! table of a higher-order one. Differentiation and truncation rely on this.

use std::collections::HashMap;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Largest supported derivative order in the vector slots.
pub const MAX_V_ORDER: usize = 4;
/// Largest supported derivative order in the point slots.
pub const MAX_X_ORDER: usize = 2;

/// Graded monomial basis in `vars` variables up to `max_degree`.
#[derive(Debug)]
struct MonomialBasis {
    exps: Vec<Vec<u8>>,
    degree: Vec<usize>,
    /// `count[d]` = number of monomials of degree <= d.
    count: Vec<usize>,
    /// `up[j][i]` = index of `exps[j] + e_i` if its degree is <= max_degree.
    up: Vec<Vec<Option<usize>>>,
    index: HashMap<Vec<u8>, usize>,
}

impl MonomialBasis {
    fn new(vars: usize, max_degree: usize) -> Self {
        let mut exps: Vec<Vec<u8>> = Vec::new();
        let mut degree = Vec::new();
        let mut count = Vec::new();
        for d in 0..=max_degree {
            let mut cur = vec![0u8; vars];
            push_degree(&mut exps, &mut cur, 0, d);
            while degree.len() < exps.len() {
                degree.push(d);
            }
            count.push(exps.len());
        }
        let index: HashMap<Vec<u8>, usize> = exps
            .iter()
            .enumerate()
            .map(|(k, e)| (e.clone(), k))
            .collect();
        let up = exps
            .iter()
            .map(|e| {
                (0..vars)
                    .map(|i| {
                        let mut f = e.clone();
                        f[i] += 1;
                        index.get(&f).copied()
                    })
                    .collect()
            })
            .collect();
        Self {
            exps,
            degree,
            count,
            up,
            index,
        }
    }

    fn mul_table(&self, cap: usize) -> Vec<(u32, u32, u32)> {
        let n = self.count[cap];
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if self.degree[i] + self.degree[j] > cap {
                    continue;
                }
                let sum: Vec<u8> = self.exps[i]
                    .iter()
                    .zip(&self.exps[j])
                    .map(|(a, b)| a + b)
                    .collect();
                let k = self.index[&sum];
                out.push((i as u32, j as u32, k as u32));
            }
        }
        out
    }
}

fn push_degree(out: &mut Vec<Vec<u8>>, cur: &mut Vec<u8>, slot: usize, remaining: usize) {
    if slot + 1 == cur.len() {
        cur[slot] = remaining as u8;
        out.push(cur.clone());
        cur[slot] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        cur[slot] = k as u8;
        push_degree(out, cur, slot + 1, remaining - k);
    }
    cur[slot] = 0;
}

/// Shared index tables for jets over a fixed dimension and order caps.
#[derive(Debug)]
pub struct JetShape {
    dim: usize,
    v_order: usize,
    x_order: usize,
    n_v: usize,
    n_x: usize,
    v_basis: Arc<MonomialBasis>,
    x_basis: Arc<MonomialBasis>,
    v_mul: Vec<(u32, u32, u32)>,
    x_mul: Vec<(u32, u32, u32)>,
}

impl JetShape {
    /// Returns the cached shape for `dim` point/vector slots each.
    pub fn get(dim: usize, v_order: usize, x_order: usize) -> Arc<JetShape> {
        static SHAPES: OnceLock<Mutex<HashMap<(usize, usize, usize), Arc<JetShape>>>> =
            OnceLock::new();
        static BASES: OnceLock<Mutex<HashMap<(usize, usize), Arc<MonomialBasis>>>> =
            OnceLock::new();
        let shapes = SHAPES.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(s) = shapes.lock().unwrap().get(&(dim, v_order, x_order)) {
            return s.clone();
        }
        let bases = BASES.get_or_init(|| Mutex::new(HashMap::new()));
        let basis = |deg: usize| {
            bases
                .lock()
                .unwrap()
                .entry((dim, deg))
                .or_insert_with(|| Arc::new(MonomialBasis::new(dim, deg)))
                .clone()
        };
        let v_basis = basis(MAX_V_ORDER);
        let x_basis = basis(MAX_X_ORDER);
        let n_v = v_basis.count[v_order];
        let n_x = x_basis.count[x_order];
        let shape = Arc::new(JetShape {
            dim,
            v_order,
            x_order,
            n_v,
            n_x,
            v_mul: v_basis.mul_table(v_order),
            x_mul: x_basis.mul_table(x_order),
            v_basis,
            x_basis,
        });
        shapes
            .lock()
            .unwrap()
            .insert((dim, v_order, x_order), shape.clone());
        shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn v_order(&self) -> usize {
        self.v_order
    }

    pub fn x_order(&self) -> usize {
        self.x_order
    }

    pub fn len(&self) -> usize {
        self.n_v * self.n_x
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn total_order(&self) -> usize {
        self.v_order + self.x_order
    }
}

/// Truncated Taylor expansion of a scalar function of `(x, v)`.
///
/// Jets without a shape are exact constants and combine with any shaped jet.
#[derive(Debug, Clone)]
pub struct Jet {
    shape: Option<Arc<JetShape>>,
    coeffs: Vec<f64>,
}

impl Jet {
    pub fn constant(value: f64) -> Self {
        Jet {
            shape: None,
            coeffs: vec![value],
        }
    }

    pub fn zeros(shape: &Arc<JetShape>) -> Self {
        Jet {
            shape: Some(shape.clone()),
            coeffs: vec![0.0; shape.len()],
        }
    }

    /// The coordinate function `x^i` expanded around `value`.
    pub fn point_variable(shape: &Arc<JetShape>, i: usize, value: f64) -> Self {
        let mut j = Jet::zeros(shape);
        j.coeffs[0] = value;
        if shape.x_order >= 1 {
            j.coeffs[1 + i] = 1.0;
        }
        j
    }

    /// The fiber coordinate `v^i` expanded around `value`.
    pub fn vector_variable(shape: &Arc<JetShape>, i: usize, value: f64) -> Self {
        let mut j = Jet::zeros(shape);
        j.coeffs[0] = value;
        if shape.v_order >= 1 {
            j.coeffs[(1 + i) * shape.n_x] = 1.0;
        }
        j
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn shape(&self) -> Option<&Arc<JetShape>> {
        self.shape.as_ref()
    }

    pub fn is_constant(&self) -> bool {
        self.shape.is_none()
    }

    /// Mixed partial derivative. `v_slots` / `x_slots` list the differentiation
    /// slots with repetition, e.g. `partial(&[0, 0, 1], &[2])` is
    /// `∂⁴f / ∂v⁰∂v⁰∂v¹∂x²`.
    pub fn partial(&self, v_slots: &[usize], x_slots: &[usize]) -> Result<f64> {
        let Some(shape) = &self.shape else {
            return Ok(if v_slots.is_empty() && x_slots.is_empty() {
                self.coeffs[0]
            } else {
                0.0
            });
        };
        if v_slots.len() > shape.v_order {
            return Err(Error::OrderCap {
                group: "v",
                requested: v_slots.len(),
                cap: shape.v_order,
            });
        }
        if x_slots.len() > shape.x_order {
            return Err(Error::OrderCap {
                group: "x",
                requested: x_slots.len(),
                cap: shape.x_order,
            });
        }
        let mut ve = vec![0u8; shape.dim];
        for &s in v_slots {
            ve[s] += 1;
        }
        let mut xe = vec![0u8; shape.dim];
        for &s in x_slots {
            xe[s] += 1;
        }
        let vi = shape.v_basis.index[&ve];
        let xi = shape.x_basis.index[&xe];
        let fact: f64 = ve
            .iter()
            .chain(xe.iter())
            .map(|&k| factorial(k as usize))
            .product();
        Ok(self.coeffs[vi * shape.n_x + xi] * fact)
    }

    /// `∂/∂v^i`, one v-order lower.
    pub fn d_vector(&self, i: usize) -> Result<Jet> {
        let Some(shape) = &self.shape else {
            return Ok(Jet::constant(0.0));
        };
        if shape.v_order == 0 {
            return Err(Error::OrderCap {
                group: "v",
                requested: 1,
                cap: 0,
            });
        }
        let target = JetShape::get(shape.dim, shape.v_order - 1, shape.x_order);
        let mut out = Jet::zeros(&target);
        let nx = shape.n_x;
        for a in 0..target.n_v {
            let src = shape.v_basis.up[a][i].expect("graded prefix");
            let k = (shape.v_basis.exps[a][i] + 1) as f64;
            for b in 0..nx {
                out.coeffs[a * nx + b] = k * self.coeffs[src * nx + b];
            }
        }
        Ok(out)
    }

    /// `∂/∂x^i`, one x-order lower.
    pub fn d_point(&self, i: usize) -> Result<Jet> {
        let Some(shape) = &self.shape else {
            return Ok(Jet::constant(0.0));
        };
        if shape.x_order == 0 {
            return Err(Error::OrderCap {
                group: "x",
                requested: 1,
                cap: 0,
            });
        }
        let target = JetShape::get(shape.dim, shape.v_order, shape.x_order - 1);
        let mut out = Jet::zeros(&target);
        for a in 0..target.n_v {
            for b in 0..target.n_x {
                let src = shape.x_basis.up[b][i].expect("graded prefix");
                let k = (shape.x_basis.exps[b][i] + 1) as f64;
                out.coeffs[a * target.n_x + b] = k * self.coeffs[a * shape.n_x + src];
            }
        }
        Ok(out)
    }

    /// Drops all coefficients above the given caps.
    pub fn truncate(&self, v_order: usize, x_order: usize) -> Jet {
        let Some(shape) = &self.shape else {
            return self.clone();
        };
        let v_order = v_order.min(shape.v_order);
        let x_order = x_order.min(shape.x_order);
        let target = JetShape::get(shape.dim, v_order, x_order);
        let mut out = Jet::zeros(&target);
        for a in 0..target.n_v {
            for b in 0..target.n_x {
                out.coeffs[a * target.n_x + b] = self.coeffs[a * shape.n_x + b];
            }
        }
        out
    }

    fn broadcast_shape(&self, other: &Jet) -> Option<Arc<JetShape>> {
        match (&self.shape, &other.shape) {
            (None, None) => None,
            (Some(s), None) | (None, Some(s)) => Some(s.clone()),
            (Some(a), Some(b)) => {
                assert!(
                    Arc::ptr_eq(a, b),
                    "jet shape mismatch: ({},{},{}) vs ({},{},{})",
                    a.dim,
                    a.v_order,
                    a.x_order,
                    b.dim,
                    b.v_order,
                    b.x_order
                );
                Some(a.clone())
            }
        }
    }

    /// Applies a scalar function given its Taylor coefficients
    /// `series[k] = f^(k)(a)/k!` at `a = self.value()`.
    fn compose(&self, series: &[f64]) -> Jet {
        let Some(shape) = &self.shape else {
            return Jet::constant(series[0]);
        };
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        let k_max = shape.total_order().min(series.len() - 1);
        let mut out = Jet::constant(series[k_max]);
        for k in (0..k_max).rev() {
            out = &out * &h;
            out += series[k];
        }
        if out.shape.is_none() {
            let mut z = Jet::zeros(shape);
            z.coeffs[0] = out.coeffs[0];
            return z;
        }
        out
    }

    fn series_len(&self) -> usize {
        self.shape.as_ref().map_or(0, |s| s.total_order()) + 1
    }

    pub fn recip(&self) -> Jet {
        let a = self.value();
        let series: Vec<f64> = (0..self.series_len())
            .map(|k| (-1f64).powi(k as i32) / a.powi(k as i32 + 1))
            .collect();
        self.compose(&series)
    }

    pub fn powf(&self, p: f64) -> Jet {
        let a = self.value();
        let mut series = Vec::with_capacity(self.series_len());
        let mut binom = 1.0;
        for k in 0..self.series_len() {
            series.push(binom * a.powf(p - k as f64));
            binom *= (p - k as f64) / (k as f64 + 1.0);
        }
        self.compose(&series)
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    pub fn powi(&self, p: i32) -> Jet {
        match p {
            0 => Jet::constant(1.0).broadcast_like(self),
            1 => self.clone(),
            2 => self * self,
            p if p > 0 => {
                let mut out = self.clone();
                for _ in 1..p {
                    out = &out * self;
                }
                out
            }
            p => self.powi(-p).recip(),
        }
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let mut fact = 1.0;
        let series: Vec<f64> = (0..self.series_len())
            .map(|k| {
                if k > 0 {
                    fact *= k as f64;
                }
                e / fact
            })
            .collect();
        self.compose(&series)
    }

    pub fn ln(&self) -> Jet {
        let a = self.value();
        let series: Vec<f64> = (0..self.series_len())
            .map(|k| {
                if k == 0 {
                    a.ln()
                } else {
                    (-1f64).powi(k as i32 + 1) / (k as f64 * a.powi(k as i32))
                }
            })
            .collect();
        self.compose(&series)
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let mut fact = 1.0;
        let series: Vec<f64> = (0..self.series_len())
            .map(|k| {
                if k > 0 {
                    fact *= k as f64;
                }
                cycle[k % 4] / fact
            })
            .collect();
        self.compose(&series)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let mut fact = 1.0;
        let series: Vec<f64> = (0..self.series_len())
            .map(|k| {
                if k > 0 {
                    fact *= k as f64;
                }
                cycle[k % 4] / fact
            })
            .collect();
        self.compose(&series)
    }

    pub fn tanh(&self) -> Jet {
        // exp of a non-positive argument only, so large |x| cannot overflow
        let s = if self.value() >= 0.0 { -2.0 } else { 2.0 };
        let e = (self * s).exp();
        let num = &e - 1.0;
        let den = &e + 1.0;
        &(&num / &den) * (s / 2.0)
    }

    /// Gives a constant jet the shape of `other` (no-op for shaped jets).
    pub fn broadcast_like(self, other: &Jet) -> Jet {
        match (&self.shape, &other.shape) {
            (None, Some(s)) => {
                let mut z = Jet::zeros(s);
                z.coeffs[0] = self.coeffs[0];
                z
            }
            _ => self,
        }
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn mul_into(shape: &JetShape, a: &[f64], b: &[f64], out: &mut [f64]) {
    let nx = shape.n_x;
    let row_nonzero = |c: &[f64], r: usize| c[r * nx..(r + 1) * nx].iter().any(|&t| t != 0.0);
    let a_rows: Vec<bool> = (0..shape.n_v).map(|r| row_nonzero(a, r)).collect();
    let b_rows: Vec<bool> = (0..shape.n_v).map(|r| row_nonzero(b, r)).collect();
    for &(vi, vj, vk) in &shape.v_mul {
        let (vi, vj, vk) = (vi as usize, vj as usize, vk as usize);
        if !a_rows[vi] || !b_rows[vj] {
            continue;
        }
        let ar = &a[vi * nx..(vi + 1) * nx];
        let br = &b[vj * nx..(vj + 1) * nx];
        let or = &mut out[vk * nx..(vk + 1) * nx];
        for &(xi, xj, xk) in &shape.x_mul {
            or[xk as usize] += ar[xi as usize] * br[xj as usize];
        }
    }
}

impl<'a> Mul<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn mul(self, rhs: &'a Jet) -> Jet {
        match (&self.shape, &rhs.shape) {
            (None, _) => rhs * self.coeffs[0],
            (_, None) => self * rhs.coeffs[0],
            _ => {
                let shape = self.broadcast_shape(rhs).unwrap();
                let mut out = vec![0.0; shape.len()];
                mul_into(&shape, &self.coeffs, &rhs.coeffs, &mut out);
                Jet {
                    shape: Some(shape),
                    coeffs: out,
                }
            }
        }
    }
}

impl<'a> Add<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn add(self, rhs: &'a Jet) -> Jet {
        match (&self.shape, &rhs.shape) {
            (None, _) => rhs + self.coeffs[0],
            (_, None) => self + rhs.coeffs[0],
            _ => {
                let shape = self.broadcast_shape(rhs);
                Jet {
                    shape,
                    coeffs: self
                        .coeffs
                        .iter()
                        .zip(&rhs.coeffs)
                        .map(|(a, b)| a + b)
                        .collect(),
                }
            }
        }
    }
}

impl<'a> Sub<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn sub(self, rhs: &'a Jet) -> Jet {
        self + &(-rhs)
    }
}

impl<'a> Div<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn div(self, rhs: &'a Jet) -> Jet {
        if rhs.is_constant() {
            return self * (1.0 / rhs.coeffs[0]);
        }
        self * &rhs.recip()
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet {
            shape: self.shape.clone(),
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        self.coeffs.iter_mut().for_each(|c| *c = -*c);
        self
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        Jet {
            shape: self.shape.clone(),
            coeffs: self.coeffs.iter().map(|c| c * rhs).collect(),
        }
    }
}

impl Add<f64> for &Jet {
    type Output = Jet;
    fn add(self, rhs: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += rhs;
        out
    }
}

impl Sub<f64> for &Jet {
    type Output = Jet;
    fn sub(self, rhs: f64) -> Jet {
        self + (-rhs)
    }
}

impl Div<f64> for &Jet {
    type Output = Jet;
    fn div(self, rhs: f64) -> Jet {
        self * (1.0 / rhs)
    }
}

impl AddAssign<f64> for Jet {
    fn add_assign(&mut self, rhs: f64) {
        self.coeffs[0] += rhs;
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        if self.shape.is_none() && rhs.shape.is_some() {
            let c = self.coeffs[0];
            *self = rhs.clone();
            self.coeffs[0] += c;
            return;
        }
        if rhs.shape.is_none() {
            self.coeffs[0] += rhs.coeffs[0];
            return;
        }
        self.broadcast_shape(rhs);
        self.coeffs
            .iter_mut()
            .zip(&rhs.coeffs)
            .for_each(|(a, b)| *a += b);
    }
}

impl SubAssign<&Jet> for Jet {
    fn sub_assign(&mut self, rhs: &Jet) {
        *self += &(-rhs);
    }
}

impl MulAssign<f64> for Jet {
    fn mul_assign(&mut self, rhs: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= rhs);
    }
}

// Owned-operand conveniences so model formulas read naturally.
macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $f(self, rhs: Jet) -> Jet {
                (&self).$f(&rhs)
            }
        }
        impl<'a> $tr<&'a Jet> for Jet {
            type Output = Jet;
            fn $f(self, rhs: &'a Jet) -> Jet {
                (&self).$f(rhs)
            }
        }
        impl<'a> $tr<Jet> for &'a Jet {
            type Output = Jet;
            fn $f(self, rhs: Jet) -> Jet {
                self.$f(&rhs)
            }
        }
        impl $tr<f64> for Jet {
            type Output = Jet;
            fn $f(self, rhs: f64) -> Jet {
                (&self).$f(rhs)
            }
        }
        impl $tr<Jet> for f64 {
            type Output = Jet;
            fn $f(self, rhs: Jet) -> Jet {
                (&Jet::constant(self)).$f(&rhs)
            }
        }
        impl<'a> $tr<&'a Jet> for f64 {
            type Output = Jet;
            fn $f(self, rhs: &'a Jet) -> Jet {
                (&Jet::constant(self)).$f(rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

/// A scalar function of `(point, vector)` evaluable on jets.
pub trait PointVectorFn: Send + Sync {
    fn eval(&self, x: &[Jet], v: &[Jet]) -> Jet;
}

impl<F> PointVectorFn for F
where
    F: Fn(&[Jet], &[Jet]) -> Jet + Send + Sync,
{
    fn eval(&self, x: &[Jet], v: &[Jet]) -> Jet {
        self(x, v)
    }
}

fn check_caps(v_order: usize, x_order: usize) -> Result<()> {
    if v_order > MAX_V_ORDER {
        return Err(Error::Config(format!(
            "v-order {v_order} exceeds the supported cap {MAX_V_ORDER}"
        )));
    }
    if x_order > MAX_X_ORDER {
        return Err(Error::Config(format!(
            "x-order {x_order} exceeds the supported cap {MAX_X_ORDER}"
        )));
    }
    Ok(())
}

/// Expands `f` around `(x, v)` to the requested orders.
pub fn lift(
    f: &dyn PointVectorFn,
    x: &[f64],
    v: &[f64],
    v_order: usize,
    x_order: usize,
) -> Result<Jet> {
    check_caps(v_order, x_order)?;
    if x.len() != v.len() {
        return Err(Error::Config(format!(
            "point has {} coordinates but vector has {}",
            x.len(),
            v.len()
        )));
    }
    let shape = JetShape::get(x.len(), v_order, x_order);
    let xs: Vec<Jet> = x
        .iter()
        .enumerate()
        .map(|(i, &xi)| Jet::point_variable(&shape, i, xi))
        .collect();
    let vs: Vec<Jet> = v
        .iter()
        .enumerate()
        .map(|(i, &vi)| Jet::vector_variable(&shape, i, vi))
        .collect();
    Ok(f.eval(&xs, &vs).broadcast_like(&Jet::zeros(&shape)))
}

/// Expands a function of the point alone (weights, temporal functions).
pub fn lift_point(f: &(dyn Fn(&[Jet]) -> Jet + Sync), x: &[f64], x_order: usize) -> Result<Jet> {
    let g = |xs: &[Jet], _: &[Jet]| f(xs);
    lift(&g, x, &vec![0.0; x.len()], 0, x_order)
}

/// Builds the same jet as [`lift`] from finite differences of plain
/// evaluations. Central stencils with step `eps^(1/(k+2))·scale` for a
/// derivative of total order `k` (cube root of machine epsilon for first
/// derivatives). Only intended for cross-validation.
pub fn fd_lift(
    f: &dyn Fn(&[f64], &[f64]) -> f64,
    x: &[f64],
    v: &[f64],
    v_order: usize,
    x_order: usize,
    scale: f64,
) -> Result<Jet> {
    check_caps(v_order, x_order)?;
    let dim = x.len();
    let shape = JetShape::get(dim, v_order, x_order);
    let mut out = Jet::zeros(&shape);
    let mut point = x.to_vec();
    let mut vector = v.to_vec();
    for a in 0..shape.n_v {
        for b in 0..shape.n_x {
            let ve = &shape.v_basis.exps[a];
            let xe = &shape.x_basis.exps[b];
            let order = shape.v_basis.degree[a] + shape.x_basis.degree[b];
            let h = f64::EPSILON.powf(1.0 / (order as f64 + 2.0)) * scale;
            // Tensor-product stencil over the active slots.
            let mut slots: Vec<(bool, usize, u8)> = Vec::new();
            for (i, &k) in ve.iter().enumerate() {
                if k > 0 {
                    slots.push((true, i, k));
                }
            }
            for (i, &k) in xe.iter().enumerate() {
                if k > 0 {
                    slots.push((false, i, k));
                }
            }
            let mut acc = 0.0;
            let stencils: Vec<&[(f64, f64)]> = slots.iter().map(|s| stencil(s.2)).collect();
            let mut idx = vec![0usize; slots.len()];
            loop {
                let mut w = 1.0;
                for (s, (&(is_v, i, _), st)) in slots.iter().zip(&stencils).enumerate() {
                    let (off, weight) = st[idx[s]];
                    w *= weight;
                    if is_v {
                        vector[i] = v[i] + off * h;
                    } else {
                        point[i] = x[i] + off * h;
                    }
                }
                acc += w * f(&point, &vector);
                // Advance the mixed-radix counter.
                let mut s = 0;
                while s < slots.len() {
                    idx[s] += 1;
                    if idx[s] < stencils[s].len() {
                        break;
                    }
                    idx[s] = 0;
                    s += 1;
                }
                if s == slots.len() {
                    break;
                }
            }
            point.copy_from_slice(x);
            vector.copy_from_slice(v);
            let fact: f64 = ve
                .iter()
                .chain(xe.iter())
                .map(|&k| factorial(k as usize))
                .product();
            out.coeffs[a * shape.n_x + b] = acc / h.powi(order as i32) / fact;
        }
    }
    Ok(out)
}

/// Central-difference stencils `(offset, weight)` for derivative orders 1..=4
/// with the `1/h^k` factor removed.
fn stencil(k: u8) -> &'static [(f64, f64)] {
    const S1: [(f64, f64); 2] = [(1.0, 0.5), (-1.0, -0.5)];
    const S2: [(f64, f64); 3] = [(1.0, 1.0), (0.0, -2.0), (-1.0, 1.0)];
    const S3: [(f64, f64); 4] = [(2.0, 0.5), (1.0, -1.0), (-1.0, 1.0), (-2.0, -0.5)];
    const S4: [(f64, f64); 5] = [
        (2.0, 1.0),
        (1.0, -4.0),
        (0.0, 6.0),
        (-1.0, -4.0),
        (-2.0, 1.0),
    ];
    match k {
        1 => &S1,
        2 => &S2,
        3 => &S3,
        4 => &S4,
        _ => unreachable!("order caps keep per-slot orders <= 4"),
    }
}
