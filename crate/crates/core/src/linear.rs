//! The unperturbed equation `x' = A(t) x + c(t)`: principal fundamental
//! matrix, non-resonance, and the unique `T`-periodic solution `x̂`.

use crate::error::{Error, Result};
use crate::ode::{Dopri5, Trajectory};
use crate::system::PerturbedCoupledSystem;
use nalgebra::{DMatrix, DVector};

/// `Φ(t)` on `[0, T]` with `Φ' = A(t) Φ`, `Φ(0) = I`.
#[derive(Debug, Clone)]
pub struct Monodromy {
    pub k: usize,
    pub period: f64,
    pub phi_t: DMatrix<f64>,
    pub det_i_minus_phi_t: f64,
    pub integrator_tol: f64,
    /// `∫_0^T tr A(s) ds`, integrated alongside `Φ`.
    pub trace_integral: f64,
    dense: Trajectory,
}

impl Monodromy {
    /// Dense `Φ(t)` for `t ∈ [0, T]` (clamped outside).
    pub fn phi(&self, t: f64) -> DMatrix<f64> {
        let v = self.dense.eval(t);
        DMatrix::from_column_slice(self.k, self.k, &v[..self.k * self.k])
    }

    pub fn det_phi_t(&self) -> f64 {
        self.phi_t.determinant()
    }

    /// `|det Φ(T) - exp(∫ tr A)|`.
    pub fn liouville_residual(&self) -> f64 {
        (self.det_phi_t() - self.trace_integral.exp()).abs()
    }

    pub fn steps(&self) -> usize {
        self.dense.steps()
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

pub fn fundamental_matrix(sys: &PerturbedCoupledSystem, tol: f64) -> Result<Monodromy> {
    check_tol(tol)?;
    let k = sys.k;
    let n = k * k + 1;
    let rhs = (n, |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let a = sys.a_matrix(t)?;
        let phi = DMatrix::from_column_slice(k, k, &y[..k * k]);
        dy[..k * k].copy_from_slice((a.clone() * phi).as_slice());
        dy[k * k] = a.trace();
        Ok(())
    });
    let mut y0 = vec![0.0; n];
    for i in 0..k {
        y0[i * k + i] = 1.0;
    }
    let dense = Dopri5::with_tol(tol).integrate(&rhs, 0.0, &y0, sys.period, None)?;
    let end = dense.final_state();
    let phi_t = DMatrix::from_column_slice(k, k, &end[..k * k]);
    let det = (DMatrix::identity(k, k) - &phi_t).determinant();
    Ok(Monodromy {
        k,
        period: sys.period,
        trace_integral: end[k * k],
        phi_t,
        det_i_minus_phi_t: det,
        integrator_tol: tol,
        dense,
    })
}

/// `|det(I - Φ(T))|`; zero means resonance.
pub fn check_nonresonance(m: &Monodromy) -> f64 {
    m.det_i_minus_phi_t.abs()
}

/// Error with [`Error::Resonance`] when `|det(I - Φ(T))| < threshold`.
pub fn require_nonresonant(m: &Monodromy, threshold: f64) -> Result<f64> {
    let v = check_nonresonance(m);
    if v < threshold {
        return Err(Error::Resonance(v));
    }
    Ok(v)
}

/// A `T`-periodic dense orbit, evaluated by wrap-around outside `[0, T]`.
#[derive(Debug, Clone)]
pub struct PeriodicTrajectory {
    pub period: f64,
    /// `|value(T) - value(0)|` (max norm).
    pub residual: f64,
    traj: Trajectory,
}

impl PeriodicTrajectory {
    pub fn new(traj: Trajectory, period: f64) -> Self {
        let residual = traj
            .final_state()
            .iter()
            .zip(&traj.states[0])
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        PeriodicTrajectory { period, residual, traj }
    }

    pub fn dim(&self) -> usize {
        self.traj.dim()
    }

    pub fn initial_value(&self) -> &[f64] {
        &self.traj.states[0]
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let tau = if (0.0..=self.period).contains(&t) {
            t
        } else {
            t.rem_euclid(self.period)
        };
        self.traj.eval_into(tau, out);
    }

    /// Accepted integrator steps `(t, value)`.
    pub fn samples(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.traj.times.iter().copied().zip(self.traj.states.iter().map(Vec::as_slice))
    }

    /// `n + 1` equally spaced samples on `[0, T]`.
    pub fn sample_uniform(&self, n: usize) -> Vec<(f64, Vec<f64>)> {
        (0..=n)
            .map(|i| {
                let t = if i == n { self.period } else { self.period * i as f64 / n as f64 };
                (t, self.eval(t))
            })
            .collect()
    }
}

/// `Φ(t)^{-1} c` by explicit inverse for `k ≤ 2`, LU otherwise.
fn solve_phi(phi: &DMatrix<f64>, c: &DVector<f64>) -> Option<DVector<f64>> {
    let k = phi.nrows();
    match k {
        1 => Some(DVector::from_element(1, c[0] / phi[(0, 0)])),
        2 => {
            let det = phi[(0, 0)] * phi[(1, 1)] - phi[(0, 1)] * phi[(1, 0)];
            if det == 0.0 {
                return None;
            }
            Some(DVector::from_vec(vec![
                (phi[(1, 1)] * c[0] - phi[(0, 1)] * c[1]) / det,
                (-phi[(1, 0)] * c[0] + phi[(0, 0)] * c[1]) / det,
            ]))
        }
        _ => phi.clone().lu().solve(c),
    }
}

/// `x̂` from `x0 = (I - Φ(T))^{-1} Φ(T) ∫_0^T Φ(s)^{-1} c(s) ds`, then the
/// initial value problem from `x0`, cross-checked against
/// `x̂(t) = Φ(t) (x0 + ∫_0^t Φ^{-1} c)`.
pub fn periodic_solution_linear(sys: &PerturbedCoupledSystem, m: &Monodromy, tol: f64) -> Result<PeriodicTrajectory> {
    check_tol(tol)?;
    require_nonresonant(m, 1e-10)?;
    let k = sys.k;
    let kk = k * k;
    // (Φ, v) with v' = Φ^{-1} c, v(0) = 0
    let aug = (kk + k, |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let a = sys.a_matrix(t)?;
        let phi = DMatrix::from_column_slice(k, k, &y[..kk]);
        dy[..kk].copy_from_slice((&a * &phi).as_slice());
        let c = sys.c_vector(t)?;
        let v = solve_phi(&phi, &c).ok_or_else(|| Error::Integration {
            t,
            reason: "fundamental matrix became singular".into(),
        })?;
        dy[kk..].copy_from_slice(v.as_slice());
        Ok(())
    });
    let mut y0 = vec![0.0; kk + k];
    for i in 0..k {
        y0[i * k + i] = 1.0;
    }
    let quad = Dopri5::with_tol(tol).integrate(&aug, 0.0, &y0, sys.period, None)?;
    let end = quad.final_state();
    let phi_t = DMatrix::from_column_slice(k, k, &end[..kk]);
    let v_t = DVector::from_column_slice(&end[kk..]);
    let lhs = DMatrix::identity(k, k) - &phi_t;
    let x0 = lhs
        .lu()
        .solve(&(&phi_t * &v_t))
        .ok_or(Error::Resonance(m.det_i_minus_phi_t.abs()))?;

    let ivp = (k, |t: f64, x: &[f64], dx: &mut [f64]| sys.linear_rhs(t, x, dx));
    let orbit = Dopri5::with_tol(tol).integrate(&ivp, 0.0, x0.as_slice(), sys.period, None)?;
    let traj = PeriodicTrajectory::new(orbit, sys.period);
    let scale = x0.amax().max(1.0);
    if traj.residual > 10.0 * tol * scale.max(10.0) {
        return Err(Error::Integration {
            t: sys.period,
            reason: format!("periodic solution does not close (residual {:e})", traj.residual),
        });
    }

    // closed formula at the quadrature's own step points
    // both sides carry errors amplified by the size of Φ(t)(x0 + v)
    let mut worst = 0.0f64;
    let mut growth = scale;
    let mut x = vec![0.0; k];
    for (t, state) in quad.times.iter().zip(&quad.states) {
        let phi = DMatrix::from_column_slice(k, k, &state[..kk]);
        let v = DVector::from_column_slice(&state[kk..]);
        let inner = &x0 + v;
        growth = growth.max(phi.amax() * inner.amax());
        let formula = phi * inner;
        traj.eval_into(*t, &mut x);
        for i in 0..k {
            worst = worst.max((formula[i] - x[i]).abs());
        }
    }
    if worst > 1e3 * tol * growth {
        return Err(Error::Integration {
            t: 0.0,
            reason: format!("closed formula and re-integrated orbit disagree by {worst:e}"),
        });
    }
    Ok(traj)
}

/// `F_T(p) = Φ(T) p + Φ(T) ∫_0^T Φ^{-1} c`, the time-`T` map of the linear
/// equation, given `Φ(T)` and the forced response from zero.
#[derive(Debug, Clone)]
pub struct LinearTimeMap {
    pub phi_t: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl LinearTimeMap {
    pub fn new(sys: &PerturbedCoupledSystem, m: &Monodromy, tol: f64) -> Result<Self> {
        let ivp = (sys.k, |t: f64, x: &[f64], dx: &mut [f64]| sys.linear_rhs(t, x, dx));
        let from_zero = Dopri5::with_tol(tol).integrate(&ivp, 0.0, &vec![0.0; sys.k], sys.period, None)?;
        Ok(LinearTimeMap {
            phi_t: m.phi_t.clone(),
            offset: DVector::from_column_slice(from_zero.final_state()),
        })
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        (&self.phi_t * DVector::from_column_slice(p) + &self.offset)
            .iter()
            .copied()
            .collect()
    }

    /// `sign det(I - Φ(T))`, the index of the unique fixed point.
    pub fn fixed_point_sign(&self) -> i32 {
        let k = self.phi_t.nrows();
        let det = (DMatrix::identity(k, k) - &self.phi_t).determinant();
        if det > 0.0 {
            1
        } else if det < 0.0 {
            -1
        } else {
            0
        }
    }

    /// Fixed point index on the box `lo..hi`: the sign above when the unique
    /// fixed point lies inside, zero when outside; error if on the boundary.
    pub fn index_on_box(&self, lo: &[f64], hi: &[f64]) -> Result<i32> {
        let k = self.phi_t.nrows();
        let fixed = (DMatrix::identity(k, k) - &self.phi_t)
            .lu()
            .solve(&self.offset)
            .ok_or(Error::Resonance(0.0))?;
        let mut inside = true;
        for i in 0..k {
            let x = fixed[i];
            let margin = 1e-9 * (1.0 + x.abs());
            if (x - lo[i]).abs() < margin || (x - hi[i]).abs() < margin {
                return Err(Error::BoundaryFixedPoint {
                    point: fixed.iter().copied().collect(),
                });
            }
            inside &= x > lo[i] && x < hi[i];
        }
        Ok(if inside { self.fixed_point_sign() } else { 0 })
    }
}
