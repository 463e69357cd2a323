use super::PerturbedCoupledSystem;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PROJECTION_TOL: f64 = 1e-14;
const RANK_TOL: f64 = 1e-8;

pub(super) fn project(sys: &PerturbedCoupledSystem, y: &[f64]) -> Result<Vec<f64>> {
    if !sys.is_constrained() {
        return Ok(y.to_vec());
    }
    let mut y = DVector::from_column_slice(y);
    for _ in 0..60 {
        let g = DVector::from_vec(sys.constraint_values(y.as_slice())?);
        let scale = y.amax().max(1.0);
        if g.amax() <= PROJECTION_TOL * scale {
            return Ok(y.iter().copied().collect());
        }
        let jac = sys.constraint_jacobian(y.as_slice())?;
        let jjt = &jac * jac.transpose();
        let mu = jjt
            .lu()
            .solve(&g)
            .ok_or_else(|| Error::Projection(format!("rank-deficient constraint Jacobian at {:?}", y.as_slice())))?;
        let step = jac.transpose() * mu;
        y -= &step;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Projection("iteration diverged".into()));
        }
        if step.amax() <= 1e-16 * scale {
            let g = DVector::from_vec(sys.constraint_values(y.as_slice())?);
            if g.amax() <= 1e-12 * scale {
                return Ok(y.iter().copied().collect());
            }
        }
    }
    let g = sys.constraint_violation(y.as_slice())?;
    if g <= 1e-12 * y.amax().max(1.0) {
        return Ok(y.iter().copied().collect());
    }
    Err(Error::Projection(format!(
        "no convergence from {:?} (|g| = {g:e})",
        y.as_slice()
    )))
}

pub(super) fn tangent_basis(sys: &PerturbedCoupledSystem, q: &[f64]) -> Result<DMatrix<f64>> {
    let s = sys.s;
    if !sys.is_constrained() {
        return Ok(DMatrix::identity(s, s));
    }
    let d = sys.manifold_dim();
    let jac = sys.constraint_jacobian(q)?;
    let gram = jac.transpose() * &jac;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut basis = DMatrix::zeros(s, d);
    for (col, &idx) in order.iter().take(d).enumerate() {
        let mut v = eig.eigenvectors.column(idx).clone_owned();
        // deterministic orientation: largest component positive
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v = -v;
        }
        basis.set_column(col, &v);
    }
    Ok(basis)
}

/// Re-orthonormalize `prev` (an orthonormal basis at a nearby point) against
/// the tangent space at `q`, keeping its orientation.
pub fn transport_basis(sys: &PerturbedCoupledSystem, q: &[f64], prev: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let projected = tangent_projector(sys, q)? * prev;
    let qr = projected.qr();
    let mut qm = qr.q();
    let r = qr.r();
    for j in 0..qm.ncols() {
        if r[(j, j)] < 0.0 {
            let col = -qm.column(j);
            qm.set_column(j, &col);
        }
    }
    Ok(qm)
}

pub fn tangent_projector(sys: &PerturbedCoupledSystem, q: &[f64]) -> Result<DMatrix<f64>> {
    let s = sys.s;
    if !sys.is_constrained() {
        return Ok(DMatrix::identity(s, s));
    }
    let jac = sys.constraint_jacobian(q)?;
    let jjt = &jac * jac.transpose();
    let inv = jjt
        .try_inverse()
        .ok_or_else(|| Error::Projection(format!("rank-deficient constraint Jacobian at {q:?}")))?;
    Ok(DMatrix::identity(s, s) - jac.transpose() * inv * jac)
}

pub(super) fn normal_component(sys: &PerturbedCoupledSystem, q: &[f64], v: &[f64]) -> Result<f64> {
    if !sys.is_constrained() {
        return Ok(0.0);
    }
    let p = tangent_projector(sys, q)?;
    let v = DVector::from_column_slice(v);
    Ok((&v - p * &v).norm())
}

pub(super) fn constraint_rank(sys: &PerturbedCoupledSystem, q: &[f64]) -> Result<usize> {
    if !sys.is_constrained() {
        return Ok(0);
    }
    let jac = sys.constraint_jacobian(q)?;
    let sv = jac.singular_values();
    let top = sv.amax().max(1.0);
    Ok(sv.iter().filter(|v| **v > RANK_TOL * top).count())
}

pub(super) fn probe_points(sys: &PerturbedCoupledSystem, count: usize) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut out = Vec::with_capacity(count);
    if let Some(chart) = sys.charts.first() {
        for _ in 0..count {
            let theta: Vec<f64> = chart.domain.iter().map(|(lo, hi)| rng.gen_range(*lo..*hi)).collect();
            out.push(chart.eval(&theta)?);
        }
        return Ok(out);
    }
    for _ in 0..count {
        let y: Vec<f64> = (0..sys.s).map(|_| rng.gen_range(-1.5..1.5)).collect();
        out.push(project(sys, &y)?);
    }
    Ok(out)
}
