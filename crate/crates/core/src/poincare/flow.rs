//! Scaled flow of the coupled system.
//!
//! With `y = q + lambda * eta` the system becomes
//!
//! ```text
//! x'   = A(t) x + c(t) + lambda f1(t, x, q + lambda eta, lambda)
//! eta' = f2(t, x, q + lambda eta, lambda),        eta(0) = 0
//! ```
//!
//! which is regular at `lambda = 0`. The variational matrix
//! `S = d(x, eta) / d(p, q, lambda)` is optionally integrated alongside.

use crate::error::{Error, Result};
use crate::linear::PeriodicTrajectory;
use crate::ode::{rk4_fixed, Dopri5, Rhs, StepHook, Trajectory};
use crate::system::{Part, PerturbedCoupledSystem};
use nalgebra::DMatrix;
use std::cell::Cell;

/// Drift above this triggers a projection back onto `M`.
const PROJECT_ABOVE: f64 = 1e-13;

/// The full system, or its decoupled variant with `f1 = 0` and `f2` frozen
/// along `x̂`.
#[derive(Debug, Clone, Copy)]
pub enum Model<'a> {
    Full(&'a PerturbedCoupledSystem),
    Decoupled {
        sys: &'a PerturbedCoupledSystem,
        xhat: &'a PeriodicTrajectory,
    },
}

impl<'a> Model<'a> {
    pub fn sys(&self) -> &'a PerturbedCoupledSystem {
        match self {
            Model::Full(sys) | Model::Decoupled { sys, .. } => sys,
        }
    }

    /// `f1`, `f2` and their Jacobians (row-major, columns `[x, y, lambda]`).
    fn perturbations(
        &self,
        t: f64,
        x: &[f64],
        y: &[f64],
        lambda: f64,
        f1: &mut [f64],
        j1: &mut [f64],
        f2: &mut [f64],
        j2: &mut [f64],
    ) -> Result<()> {
        match self {
            Model::Full(sys) => {
                sys.eval_part_grad(Part::F1, t, x, y, lambda, f1, j1)?;
                sys.eval_part_grad(Part::F2, t, x, y, lambda, f2, j2)
            }
            Model::Decoupled { sys, xhat } => {
                f1.fill(0.0);
                j1.fill(0.0);
                let xh = xhat.eval(t);
                sys.eval_part_grad(Part::F2, t, &xh, y, lambda, f2, j2)?;
                let cols = sys.k + sys.s + 1;
                for row in j2.chunks_mut(cols) {
                    row[..sys.k].fill(0.0);
                }
                Ok(())
            }
        }
    }

    fn unscaled_rhs(&self, lambda: f64, t: f64, z: &[f64], dz: &mut [f64]) -> Result<()> {
        let sys = self.sys();
        let (k, s) = (sys.k, sys.s);
        let (x, y) = z.split_at(k);
        let mut f1 = vec![0.0; k];
        let mut f2 = vec![0.0; s];
        match self {
            Model::Full(_) => {
                sys.eval_part(Part::F1, t, x, y, lambda, &mut f1)?;
                sys.eval_part(Part::F2, t, x, y, lambda, &mut f2)?;
            }
            Model::Decoupled { xhat, .. } => {
                sys.eval_part(Part::F2, t, &xhat.eval(t), y, lambda, &mut f2)?;
            }
        }
        sys.linear_rhs(t, x, &mut dz[..k])?;
        for i in 0..k {
            dz[i] += lambda * f1[i];
        }
        for i in 0..s {
            dz[k + i] = lambda * f2[i];
        }
        Ok(())
    }
}

struct ScaledRhs<'a> {
    model: Model<'a>,
    lambda: f64,
    q: Vec<f64>,
    variational: bool,
}

impl ScaledRhs<'_> {
    fn n(&self) -> usize {
        let sys = self.model.sys();
        sys.k + sys.s
    }
}

impl Rhs for ScaledRhs<'_> {
    fn dim(&self) -> usize {
        let n = self.n();
        if self.variational {
            n + n * (n + 1)
        } else {
            n
        }
    }

    fn eval(&self, t: f64, z: &[f64], dz: &mut [f64]) -> Result<()> {
        let sys = self.model.sys();
        let (k, s) = (sys.k, sys.s);
        let n = k + s;
        let lam = self.lambda;
        let x = &z[..k];
        let eta = &z[k..n];
        let y: Vec<f64> = self.q.iter().zip(eta).map(|(q, e)| q + lam * e).collect();
        let cols = n + 1;
        let mut f1 = vec![0.0; k];
        let mut f2 = vec![0.0; s];
        let mut j1 = vec![0.0; k * cols];
        let mut j2 = vec![0.0; s * cols];
        if self.variational {
            self.model
                .perturbations(t, x, &y, lam, &mut f1, &mut j1, &mut f2, &mut j2)?;
        } else {
            match self.model {
                Model::Full(_) => {
                    sys.eval_part(Part::F1, t, x, &y, lam, &mut f1)?;
                    sys.eval_part(Part::F2, t, x, &y, lam, &mut f2)?;
                }
                Model::Decoupled { xhat, .. } => {
                    sys.eval_part(Part::F2, t, &xhat.eval(t), &y, lam, &mut f2)?;
                }
            }
        }
        sys.linear_rhs(t, x, &mut dz[..k])?;
        for i in 0..k {
            dz[i] += lam * f1[i];
        }
        dz[k..n].copy_from_slice(&f2);
        if !self.variational {
            return Ok(());
        }

        let a = sys.a_matrix(t)?;
        // M = d(rhs)/d(x, eta); D = direct dependence on (p, q, lambda)
        let mut m = DMatrix::zeros(n, n);
        let mut d = DMatrix::zeros(n, n + 1);
        for i in 0..k {
            let row = &j1[i * cols..(i + 1) * cols];
            for j in 0..k {
                m[(i, j)] = a[(i, j)] + lam * row[j];
            }
            let mut dl = f1[i] + lam * row[n];
            for j in 0..s {
                m[(i, k + j)] = lam * lam * row[k + j];
                d[(i, k + j)] = lam * row[k + j];
                dl += lam * row[k + j] * eta[j];
            }
            d[(i, n)] = dl;
        }
        for i in 0..s {
            let row = &j2[i * cols..(i + 1) * cols];
            for j in 0..k {
                m[(k + i, j)] = row[j];
            }
            let mut dl = row[n];
            for j in 0..s {
                m[(k + i, k + j)] = lam * row[k + j];
                d[(k + i, k + j)] = row[k + j];
                dl += row[k + j] * eta[j];
            }
            d[(k + i, n)] = dl;
        }
        let smat = DMatrix::from_column_slice(n, n + 1, &z[n..]);
        let ds = m * smat + d;
        dz[n..].copy_from_slice(ds.as_slice());
        Ok(())
    }
}

/// One integration of the scaled system over `[0, t_final]`.
#[derive(Debug, Clone)]
pub struct FlowResult {
    pub lambda: f64,
    /// Base point `q` of the scaling `y = q + lambda eta`.
    pub base: Vec<f64>,
    /// `(x(t_final), y(t_final))`.
    pub final_state: Vec<f64>,
    pub eta_final: Vec<f64>,
    /// Largest constraint violation seen before projection.
    pub constraint_drift: f64,
    pub steps: usize,
    /// `S(t_final)` as `(k+s) x (k+s+1)`, when requested.
    pub variational: Option<DMatrix<f64>>,
    k: usize,
    traj: Trajectory,
}

impl FlowResult {
    /// `(x(t), y(t))` from the dense output.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let z = self.traj.eval(t);
        let n = self.k + self.base.len();
        let mut out = z[..n].to_vec();
        for (i, q) in self.base.iter().enumerate() {
            out[self.k + i] = q + self.lambda * z[self.k + i];
        }
        out
    }

    pub fn x_final(&self) -> &[f64] {
        &self.final_state[..self.k]
    }

    pub fn y_final(&self) -> &[f64] {
        &self.final_state[self.k..]
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }
}

pub(crate) fn integrate_scaled(
    model: Model<'_>,
    lambda: f64,
    p: &[f64],
    q: &[f64],
    t_final: f64,
    tol: f64,
    variational: bool,
) -> Result<FlowResult> {
    let sys = model.sys();
    let (k, s) = (sys.k, sys.s);
    let n = k + s;
    if lambda < 0.0 {
        return Err(Error::Invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    let rhs = ScaledRhs {
        model,
        lambda,
        q: q.to_vec(),
        variational,
    };
    let mut z0 = vec![0.0; rhs.dim()];
    z0[..k].copy_from_slice(p);
    if variational {
        for i in 0..k {
            z0[n + i * n + i] = 1.0;
        }
    }
    let drift = Cell::new(0.0f64);
    let mut project = |_t: f64, z: &mut [f64]| -> Result<bool> {
        let y: Vec<f64> = q.iter().zip(&z[k..n]).map(|(q, e)| q + lambda * e).collect();
        let viol = sys.constraint_violation(&y)?;
        drift.set(drift.get().max(viol));
        if viol <= PROJECT_ABOVE {
            return Ok(false);
        }
        let yp = sys.project(&y)?;
        for i in 0..s {
            z[k + i] = (yp[i] - q[i]) / lambda;
        }
        Ok(true)
    };
    let hook: Option<&mut StepHook<'_>> = if sys.is_constrained() && lambda > 0.0 {
        Some(&mut project)
    } else {
        None
    };
    let traj = Dopri5::with_tol(tol).integrate(&rhs, 0.0, &z0, t_final, hook)?;
    let end = traj.final_state();
    let eta_final = end[k..n].to_vec();
    let mut final_state = end[..n].to_vec();
    for i in 0..s {
        final_state[k + i] = q[i] + lambda * eta_final[i];
    }
    let variational = variational.then(|| DMatrix::from_column_slice(n, n + 1, &end[n..]));
    Ok(FlowResult {
        lambda,
        base: q.to_vec(),
        final_state,
        eta_final,
        constraint_drift: drift.get(),
        steps: traj.steps(),
        variational,
        k,
        traj,
    })
}

fn check_start(sys: &PerturbedCoupledSystem, p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != sys.k || q.len() != sys.s {
        return Err(Error::Invalid(format!(
            "initial point has dimensions ({}, {}), system has ({}, {})",
            p.len(),
            q.len(),
            sys.k,
            sys.s
        )));
    }
    let viol = sys.constraint_violation(q)?;
    if viol >= 1e-9 {
        return Err(Error::Invalid(format!("initial q violates the constraints by {viol:e}")));
    }
    Ok(())
}

/// The `t_final`-translation of `(p, q)` at parameter `lambda`.
pub fn flow(
    sys: &PerturbedCoupledSystem,
    lambda: f64,
    p: &[f64],
    q: &[f64],
    t_final: f64,
    tol: f64,
) -> Result<FlowResult> {
    check_start(sys, p, q)?;
    if !(t_final > 0.0 && t_final <= sys.period * (1.0 + 1e-12)) {
        return Err(Error::Invalid(format!(
            "flow time must lie in (0, T]; compose for longer horizons (got {t_final})"
        )));
    }
    integrate_scaled(Model::Full(sys), lambda, p, q, t_final, tol, false)
}

/// `P(p, q)` by classical RK4 on the unscaled system with `steps` equal
/// steps over one period, projecting `y` after every step.
pub fn poincare_rk4(model: Model<'_>, lambda: f64, p: &[f64], q: &[f64], steps: usize) -> Result<Vec<f64>> {
    let sys = model.sys();
    let n = sys.k + sys.s;
    let rhs = (n, |t: f64, z: &[f64], dz: &mut [f64]| model.unscaled_rhs(lambda, t, z, dz));
    let mut z0 = p.to_vec();
    z0.extend_from_slice(q);
    let k = sys.k;
    let mut project = |_t: f64, z: &mut [f64]| -> Result<bool> {
        let yp = sys.project(&z[k..])?;
        z[k..].copy_from_slice(&yp);
        Ok(true)
    };
    let hook: Option<&mut StepHook<'_>> = if sys.is_constrained() {
        Some(&mut project)
    } else {
        None
    };
    rk4_fixed(&rhs, 0.0, &z0, sys.period, steps, hook)
}

/// Unscaled orbit from `(p, q)` over one period with dense output, `y`
/// projected back onto `M` after every accepted step.
pub(crate) fn integrate_unscaled(model: Model<'_>, lambda: f64, p: &[f64], q: &[f64], tol: f64) -> Result<Trajectory> {
    let sys = model.sys();
    let n = sys.k + sys.s;
    let k = sys.k;
    let rhs = (n, |t: f64, z: &[f64], dz: &mut [f64]| model.unscaled_rhs(lambda, t, z, dz));
    let mut z0 = p.to_vec();
    z0.extend_from_slice(q);
    let mut project = |_t: f64, z: &mut [f64]| -> Result<bool> {
        if sys.constraint_violation(&z[k..])? <= PROJECT_ABOVE {
            return Ok(false);
        }
        let yp = sys.project(&z[k..])?;
        z[k..].copy_from_slice(&yp);
        Ok(true)
    };
    let hook: Option<&mut StepHook<'_>> = if sys.is_constrained() && lambda > 0.0 {
        Some(&mut project)
    } else {
        None
    };
    Dopri5::with_tol(tol).integrate(&rhs, 0.0, &z0, sys.period, hook)
}

/// `max |P(z) - z|` by [`poincare_rk4`] with `h = 1e-4 T`.
pub fn rk4_residual(model: Model<'_>, lambda: f64, p: &[f64], q: &[f64]) -> Result<f64> {
    let end = poincare_rk4(model, lambda, p, q, 10_000)?;
    Ok(end
        .iter()
        .zip(p.iter().chain(q))
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}
