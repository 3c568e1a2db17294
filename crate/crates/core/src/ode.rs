//! Adaptive Dormand-Prince 5(4) integration with continuous (dense) output.
//!
//! Works in either time direction. Steps are clipped to land exactly on
//! requested stop times, so values there carry full step accuracy rather
//! than interpolation error.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step magnitude; chosen automatically when `None`.
    pub h_init: Option<f64>,
    /// Largest step magnitude.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 200_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

/// Why integration ended before the requested final time.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStop {
    pub t: f64,
    pub reason: String,
}

/// Continuous-extension data of one accepted step.
#[derive(Debug, Clone)]
struct DenseStep {
    t: f64,
    h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseStep {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let theta = (t - self.t) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
    }
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    /// Accepted step boundaries (including the initial time).
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    steps: Vec<DenseStep>,
    pub n_eval: usize,
    pub n_accept: usize,
    pub n_reject: usize,
    pub early_stop: Option<EarlyStop>,
}

impl OdeSolution {
    pub fn t_start(&self) -> f64 {
        self.t[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn y_end(&self) -> &[f64] {
        self.y.last().unwrap()
    }

    /// Dense-output evaluation; `t` is clamped to the integrated span.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.y[0].len()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        if self.steps.is_empty() {
            out.copy_from_slice(&self.y[0]);
            return;
        }
        let forward = self.t_end() >= self.t_start();
        // Exact node hit.
        let k = if forward {
            self.t.partition_point(|&s| s < t)
        } else {
            self.t.partition_point(|&s| s > t)
        };
        if k < self.t.len() && self.t[k] == t {
            out.copy_from_slice(&self.y[k]);
            return;
        }
        let step = k.saturating_sub(1).min(self.steps.len() - 1);
        let s = &self.steps[step];
        let tc = if forward {
            t.clamp(self.t_start(), self.t_end())
        } else {
            t.clamp(self.t_end(), self.t_start())
        };
        s.eval(tc, out);
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrates `y' = f(t, y)` from `t0` to `t1`.
///
/// `stops` are times the integrator must step onto exactly. `guard` is
/// checked on every accepted state; returning `Some(reason)` ends the
/// integration early with the last good state kept.
pub fn integrate<F, G>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: &OdeOptions,
    stops: &[f64],
    mut guard: G,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    G: FnMut(f64, &[f64]) -> Option<String>,
{
    let n = y0.len();
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut sol = OdeSolution {
        t: vec![t0],
        y: vec![y0.to_vec()],
        steps: Vec::new(),
        n_eval: 0,
        n_accept: 0,
        n_reject: 0,
        early_stop: None,
    };
    if t1 == t0 {
        return Ok(sol);
    }
    let mut stop_list: Vec<f64> = stops
        .iter()
        .copied()
        .filter(|&s| dir * (s - t0) > 0.0 && dir * (t1 - s) > 0.0)
        .collect();
    stop_list.push(t1);
    stop_list.sort_by(|a, b| (dir * a).partial_cmp(&(dir * b)).unwrap());
    stop_list.dedup();
    let mut next_stop = 0;

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut yt = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    f(t, &y, &mut k1)?;
    sol.n_eval += 1;

    let span = (t1 - t0).abs();
    let mut h = match opts.h_init {
        Some(h) => h.abs(),
        None => initial_step(&y, &k1, opts, span),
    }
    .min(opts.h_max)
    .min(span);
    let h_floor = 1e-14 * span.max(t0.abs()).max(1.0);

    let mut fac_old: f64 = 1e-4;
    for _ in 0..opts.max_steps {
        let target = stop_list[next_stop];
        let mut hit_stop = false;
        if h >= (target - t).abs() * (1.0 - 1e-12) {
            h = (target - t).abs();
            hit_stop = true;
        }
        if h < h_floor {
            return Err(Error::Integration {
                t,
                reason: format!("step size collapsed to {h:e}"),
            });
        }
        let hs = dir * h;

        for i in 0..n {
            yt[i] = y[i] + hs * A21 * k1[i];
        }
        f(t + C2 * hs, &yt, &mut k2)?;
        for i in 0..n {
            yt[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * hs, &yt, &mut k3)?;
        for i in 0..n {
            yt[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * hs, &yt, &mut k4)?;
        for i in 0..n {
            yt[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * hs, &yt, &mut k5)?;
        for i in 0..n {
            yt[i] =
                y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + hs, &yt, &mut k6)?;
        for i in 0..n {
            y_new[i] =
                y[i] + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + hs, &y_new, &mut k7)?;
        sol.n_eval += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e =
                hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            sol.n_reject += 1;
            h *= 0.2;
            continue;
        }

        if err <= 1.0 {
            // Lund stabilisation as in Hairer's DOPRI5.
            let fac11 = err.powf(0.2 - 0.04 * 0.75);
            let fac = (fac11 / fac_old.powf(0.04) / 0.9).clamp(0.1, 5.0);
            fac_old = err.max(1e-4);

            let mut rc = [
                y.clone(),
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
            ];
            for i in 0..n {
                let ydiff = y_new[i] - y[i];
                let bspl = hs * k1[i] - ydiff;
                rc[1][i] = ydiff;
                rc[2][i] = bspl;
                rc[3][i] = ydiff - hs * k7[i] - bspl;
                rc[4][i] = hs
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let t_new = if hit_stop { target } else { t + hs };
            if let Some(reason) = guard(t_new, &y_new) {
                sol.early_stop = Some(EarlyStop { t: t_new, reason });
                return Ok(sol);
            }
            sol.steps.push(DenseStep {
                t,
                h: t_new - t,
                rcont: rc,
            });
            t = t_new;
            y.copy_from_slice(&y_new);
            k1.copy_from_slice(&k7);
            sol.t.push(t);
            sol.y.push(y.clone());
            sol.n_accept += 1;
            if hit_stop {
                next_stop += 1;
                if next_stop == stop_list.len() {
                    return Ok(sol);
                }
            }
            h = (h / fac).min(opts.h_max);
        } else {
            sol.n_reject += 1;
            let fac = (err.powf(0.17) / 0.9).min(10.0);
            h /= fac;
        }
    }
    Err(Error::Integration {
        t,
        reason: format!("exceeded {} steps", opts.max_steps),
    })
}

fn initial_step(y: &[f64], f0: &[f64], opts: &OdeOptions, span: f64) -> f64 {
    let n = y.len() as f64;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..y.len() {
        let sc = opts.atol + opts.rtol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (f0[i] / sc).powi(2);
    }
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    // A cheap heuristic; the controller corrects it within a few steps.
    h.min(span * 0.1).max(1e-10 * span)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_dense_output() {
        let f = |_: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        };
        let opts = OdeOptions::with_tol(1e-11);
        let sol = integrate(f, 0.0, &[0.0, 1.0], 10.0, &opts, &[2.5], |_, _| None).unwrap();
        assert!((sol.y_end()[0] - 10f64.sin()).abs() < 1e-8);
        assert!(sol.t.contains(&2.5));
        for k in 0..200 {
            let t = 0.05 * k as f64;
            let y = sol.eval(t);
            assert!((y[0] - t.sin()).abs() < 1e-8, "t={t}: {}", y[0] - t.sin());
        }
    }

    #[test]
    fn backward_integration() {
        let f = |_: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[0];
            Ok(())
        };
        let sol = integrate(f, 1.0, &[1.0], -1.0, &OdeOptions::default(), &[], |_, _| {
            None
        })
        .unwrap();
        assert!((sol.y_end()[0] - (-2f64).exp()).abs() < 1e-9);
        assert!((sol.eval(0.0)[0] - (-1f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn guard_truncates() {
        let f = |_: f64, _: &[f64], dy: &mut [f64]| {
            dy[0] = 1.0;
            Ok(())
        };
        let sol = integrate(
            f,
            0.0,
            &[0.0],
            10.0,
            &OdeOptions::default(),
            &[1.0, 2.0, 3.0],
            |_, y| (y[0] > 2.5).then(|| "left".to_string()),
        )
        .unwrap();
        let stop = sol.early_stop.clone().unwrap();
        assert_eq!(stop.reason, "left");
        assert!(sol.t_end() <= 2.5);
    }
}
