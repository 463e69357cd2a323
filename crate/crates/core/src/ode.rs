//! Explicit Runge–Kutta integrators.
//!
//! [`Dopri5`] is the Dormand–Prince 5(4) pair with Hairer's 4th-order
//! continuous extension; it is the only adaptive integrator in the crate.
//! [`rk4_fixed`] is a classical fixed-step RK4 kept as an independent check.

use crate::error::{Error, Result};

/// Right-hand side of `y' = f(t, y)`.
pub trait Rhs {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

impl<F> Rhs for (usize, F)
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn dim(&self) -> usize {
        self.0
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        (self.1)(t, y, dy)
    }
}

/// Called after every accepted step. May modify the state in place (e.g. a
/// projection); returns true when it did so.
pub type StepHook<'a> = dyn FnMut(f64, &mut [f64]) -> Result<bool> + 'a;

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

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// States with any component beyond this magnitude count as blow-up.
    pub blowup: f64,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Dopri5::with_tol(1e-10)
    }
}

/// One accepted step's continuous extension.
#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    h: f64,
    // five coefficient rows of length n, row-major
    coeffs: Vec<f64>,
}

/// Accepted step grid plus dense output over `[t_start, t_end]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    segments: Vec<Segment>,
    pub rejected: usize,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn has_dense(&self) -> bool {
        !self.segments.is_empty() || self.times.len() == 1
    }

    /// Dense output at `t`, clamped to the integrated interval.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        if self.segments.is_empty() {
            out.copy_from_slice(&self.states[0]);
            return;
        }
        let t = t.clamp(self.t_start(), self.t_end());
        if t == self.t_end() {
            out.copy_from_slice(self.final_state());
            return;
        }
        let idx = match self
            .segments
            .binary_search_by(|s| s.t0.partial_cmp(&t).unwrap())
        {
            Ok(i) => {
                out.copy_from_slice(&self.states[i]);
                return;
            }
            Err(0) => 0,
            Err(i) => i - 1,
        };
        let seg = &self.segments[idx];
        let n = self.dim;
        let theta = (t - seg.t0) / seg.h;
        let theta1 = 1.0 - theta;
        let c = &seg.coeffs;
        for i in 0..n {
            out[i] = c[i]
                + theta
                    * (c[n + i]
                        + theta1 * (c[2 * n + i] + theta * (c[3 * n + i] + theta1 * c[4 * n + i])));
        }
    }
}

fn err_norm(y0: &[f64], y1: &[f64], err: &[f64], atol: f64, rtol: f64) -> f64 {
    let n = y0.len() as f64;
    let s: f64 = y0
        .iter()
        .zip(y1)
        .zip(err)
        .map(|((a, b), e)| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

impl Dopri5 {
    pub fn with_tol(tol: f64) -> Self {
        Dopri5 {
            rtol: tol,
            atol: tol,
            max_steps: 2_000_000,
            blowup: 1e12,
        }
    }

    fn initial_step<R: Rhs + ?Sized>(&self, rhs: &R, t0: f64, y0: &[f64], f0: &[f64], span: f64) -> Result<f64> {
        let n = y0.len();
        let sc: Vec<f64> = y0.iter().map(|y| self.atol + self.rtol * y.abs()).collect();
        let norm = |v: &[f64]| -> f64 {
            (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt()
        };
        let d0 = norm(y0);
        let d1 = norm(f0);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(span);
        let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
        let mut f1 = vec![0.0; n];
        rhs.eval(t0 + h0, &y1, &mut f1)?;
        let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = norm(&diff) / h0;
        let m = d1.max(d2);
        let h1 = if m <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / m).powf(0.2)
        };
        Ok((100.0 * h0).min(h1).min(span))
    }

    /// Integrate from `t0` to `t1 > t0`. Dense output is always stored.
    pub fn integrate<R: Rhs + ?Sized>(
        &self,
        rhs: &R,
        t0: f64,
        y0: &[f64],
        t1: f64,
        mut hook: Option<&mut StepHook<'_>>,
    ) -> Result<Trajectory> {
        let n = rhs.dim();
        assert_eq!(y0.len(), n, "initial state has wrong dimension");
        if !(t1 > t0) {
            return Err(Error::Invalid(format!("integration interval [{t0}, {t1}] is empty")));
        }
        let mut traj = Trajectory {
            dim: n,
            times: vec![t0],
            states: vec![y0.to_vec()],
            segments: Vec::new(),
            rejected: 0,
        };
        let mut t = t0;
        let mut y = y0.to_vec();
        let mut k1 = vec![0.0; n];
        rhs.eval(t, &y, &mut k1)?;
        let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
        );
        let mut ytmp = vec![0.0; n];
        let mut ynew = vec![0.0; n];
        let mut yerr = vec![0.0; n];
        let span = t1 - t0;
        let mut h = self.initial_step(rhs, t0, &y, &k1, span)?;
        let mut facold: f64 = 1e-4;
        let beta = 0.04;
        let expo1 = 0.2 - beta * 0.75;
        let safe = 0.9;
        let mut last_rejected = false;
        let mut steps = 0usize;

        loop {
            if t >= t1 {
                break;
            }
            if steps >= self.max_steps {
                return Err(Error::Integration {
                    t,
                    reason: format!("exceeded {} steps", self.max_steps),
                });
            }
            if t + 1.01 * h >= t1 {
                h = t1 - t;
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Integration {
                    t,
                    reason: format!("step size underflow (h = {h:e})"),
                });
            }
            steps += 1;

            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            rhs.eval(t + C2 * h, &ytmp, &mut k2)?;
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            rhs.eval(t + C3 * h, &ytmp, &mut k3)?;
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            rhs.eval(t + C4 * h, &ytmp, &mut k4)?;
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            rhs.eval(t + C5 * h, &ytmp, &mut k5)?;
            for i in 0..n {
                ytmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            rhs.eval(t + h, &ytmp, &mut k6)?;
            for i in 0..n {
                ynew[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            rhs.eval(t + h, &ynew, &mut k7)?;
            for i in 0..n {
                yerr[i] = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            }
            let err = err_norm(&y, &ynew, &yerr, self.atol, self.rtol);
            if !err.is_finite() {
                h *= 0.1;
                last_rejected = true;
                traj.rejected += 1;
                continue;
            }
            let fac11 = err.powf(expo1);
            let fac = (fac11 / facold.powf(beta) / safe).clamp(0.2, 10.0);
            let hnew = h / fac;

            if err <= 1.0 {
                facold = err.max(1e-4);
                if ynew.iter().any(|v| !v.is_finite() || v.abs() > self.blowup) {
                    return Err(Error::BlowUp { t: t + h });
                }
                let mut coeffs = vec![0.0; 5 * n];
                for i in 0..n {
                    let ydiff = ynew[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    coeffs[i] = y[i];
                    coeffs[n + i] = ydiff;
                    coeffs[2 * n + i] = bspl;
                    coeffs[3 * n + i] = ydiff - h * k7[i] - bspl;
                    coeffs[4 * n + i] = h
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                traj.segments.push(Segment { t0: t, h, coeffs });
                t = if t + h >= t1 || (t1 - (t + h)).abs() < 1e-15 * t1.abs().max(1.0) {
                    t1
                } else {
                    t + h
                };
                y.copy_from_slice(&ynew);
                let mut modified = false;
                if let Some(hook) = hook.as_deref_mut() {
                    modified = hook(t, &mut y)?;
                }
                if modified {
                    rhs.eval(t, &y, &mut k1)?;
                } else {
                    k1.copy_from_slice(&k7);
                }
                traj.times.push(t);
                traj.states.push(y.clone());
                h = if last_rejected { hnew.min(h) } else { hnew };
                last_rejected = false;
            } else {
                h /= (fac11 / safe).min(5.0);
                last_rejected = true;
                traj.rejected += 1;
            }
        }
        Ok(traj)
    }
}

/// Classical RK4 with `steps` equal steps, optionally projecting after each.
pub fn rk4_fixed<R: Rhs + ?Sized>(
    rhs: &R,
    t0: f64,
    y0: &[f64],
    t1: f64,
    steps: usize,
    mut hook: Option<&mut StepHook<'_>>,
) -> Result<Vec<f64>> {
    let n = rhs.dim();
    let h = (t1 - t0) / steps as f64;
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        rhs.eval(t, &y, &mut k1)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        rhs.eval(t + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        rhs.eval(t + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        rhs.eval(t + h, &tmp, &mut k4)?;
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { t: t + h });
        }
        if let Some(hook) = hook.as_deref_mut() {
            hook(t + h, &mut y)?;
        }
    }
    Ok(y)
}
