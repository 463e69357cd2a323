use super::fixed::dp_from_variational;
use super::flow::{integrate_scaled, Model};
use crate::error::{Error, Result};
use crate::system::{transport_basis, PerturbedCoupledSystem};
use nalgebra::{DMatrix, DVector};

/// Above this relative Frobenius discrepancy the variational result is
/// rejected.
pub const REJECT_ABOVE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct JacobianCheck {
    pub variational: DMatrix<f64>,
    pub finite_difference: DMatrix<f64>,
    /// `|J_var - J_fd|_F / max(1, |J_var|_F)`.
    pub discrepancy: f64,
}

/// `DP` in the product chart by the variational equations.
pub fn variational_jacobian(model: Model<'_>, lambda: f64, p: &[f64], q: &[f64], tol: f64) -> Result<DMatrix<f64>> {
    let sys = model.sys();
    let basis = sys.tangent_basis(q)?;
    let run = integrate_scaled(model, lambda, p, q, sys.period, tol, true)?;
    let image_basis = transport_basis(sys, run.y_final(), &basis)?;
    Ok(dp_from_variational(
        run.variational.as_ref().unwrap(),
        sys.k,
        lambda,
        &basis,
        &image_basis,
    ))
}

/// `DP` in the same chart by central differences of the flow, step `h`
/// (scaled by `max(1, |p_j|)` in the Euclidean directions).
pub fn finite_difference_jacobian(
    model: Model<'_>,
    lambda: f64,
    p: &[f64],
    q: &[f64],
    tol: f64,
    h: f64,
) -> Result<DMatrix<f64>> {
    let sys = model.sys();
    let (k, s) = (sys.k, sys.s);
    let basis = sys.tangent_basis(q)?;
    let d = basis.ncols();
    let centre = integrate_scaled(model, lambda, p, q, sys.period, tol, false)?;
    let image_basis = transport_basis(sys, centre.y_final(), &basis)?;
    let ct = image_basis.transpose();
    let mut jac = DMatrix::zeros(k + d, k + d);
    let image = |pp: &[f64], qq: &[f64]| -> Result<Vec<f64>> {
        Ok(integrate_scaled(model, lambda, pp, qq, sys.period, tol, false)?.final_state)
    };
    let mut fill = |col: usize, plus: Vec<f64>, minus: Vec<f64>, step: f64| {
        for i in 0..k {
            jac[(i, col)] = (plus[i] - minus[i]) / (2.0 * step);
        }
        let dy = DVector::from_iterator(s, (0..s).map(|i| (plus[k + i] - minus[k + i]) / (2.0 * step)));
        let coords = &ct * dy;
        for i in 0..d {
            jac[(k + i, col)] = coords[i];
        }
    };
    for j in 0..k {
        let step = h * p[j].abs().max(1.0);
        let mut pp = p.to_vec();
        pp[j] = p[j] + step;
        let plus = image(&pp, q)?;
        pp[j] = p[j] - step;
        let minus = image(&pp, q)?;
        fill(j, plus, minus, step);
    }
    for j in 0..d {
        let b = basis.column(j);
        let qp: Vec<f64> = q.iter().zip(b.iter()).map(|(a, v)| a + h * v).collect();
        let qm: Vec<f64> = q.iter().zip(b.iter()).map(|(a, v)| a - h * v).collect();
        let plus = image(p, &sys.project(&qp)?)?;
        let minus = image(p, &sys.project(&qm)?)?;
        fill(k + j, plus, minus, h);
    }
    Ok(jac)
}

pub fn jacobian_discrepancy(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(1.0)
}

/// Both Jacobians and their discrepancy, without rejecting.
pub fn check_jacobian(model: Model<'_>, lambda: f64, p: &[f64], q: &[f64], tol: f64) -> Result<JacobianCheck> {
    let variational = variational_jacobian(model, lambda, p, q, tol)?;
    let finite_difference = finite_difference_jacobian(model, lambda, p, q, tol, 1e-4)?;
    let discrepancy = jacobian_discrepancy(&variational, &finite_difference);
    Ok(JacobianCheck {
        variational,
        finite_difference,
        discrepancy,
    })
}

/// `DP^lambda(p, q)` in the product chart, rejected when the finite
/// difference cross-check disagrees by more than [`REJECT_ABOVE`].
pub fn poincare_jacobian(sys: &PerturbedCoupledSystem, lambda: f64, p: &[f64], q: &[f64], tol: f64) -> Result<DMatrix<f64>> {
    let check = check_jacobian(Model::Full(sys), lambda, p, q, tol)?;
    if check.discrepancy > REJECT_ABOVE {
        return Err(Error::JacobianMismatch(check.discrepancy));
    }
    Ok(check.variational)
}
