use super::flow::{integrate_scaled, FlowResult, Model};
use crate::error::{Error, Result};
use crate::system::transport_basis;
use nalgebra::{DMatrix, DVector};

/// Eigenvalues of `DP` closer than this to 1 leave the index undefined.
pub const EIGEN_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Newton stops once the scaled residual is below this.
    pub tol: f64,
    /// Integrator tolerance for every flow.
    pub flow_tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tol: 1e-10,
            flow_tol: 1e-12,
            max_iter: 25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointRecord {
    pub lambda: f64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// `max |P(p, q) - (p, q)|`.
    pub residual: f64,
    /// `DP` in the product chart (Euclidean coordinates plus an orthonormal
    /// tangent basis at `q`).
    pub jacobian: DMatrix<f64>,
    pub basis: DMatrix<f64>,
    pub index: Option<i32>,
    /// `min |1 - mu|` over eigenvalues `mu` of `DP`.
    pub eigen_margin: f64,
    /// Set at `lambda = 0`, where every `(x̂(0), q)` is fixed.
    pub non_isolated: bool,
    pub iterations: usize,
}

/// Scaled residual `G = (x(T) - p, Bᵀ eta(T))` and its derivative with
/// respect to `(p, xi, lambda)`, where `q = retract(q0 + B xi)`.
#[derive(Debug, Clone)]
pub(crate) struct ScaledEval {
    pub g: DVector<f64>,
    /// `(k+d) x (k+d+1)`, columns `[p, xi, lambda]`.
    pub dg: Option<DMatrix<f64>>,
    pub flow: FlowResult,
}

impl ScaledEval {
    pub fn norm(&self) -> f64 {
        self.g.amax()
    }
}

pub(crate) fn scaled_eval(
    model: Model<'_>,
    lambda: f64,
    p: &[f64],
    q: &[f64],
    basis: &DMatrix<f64>,
    flow_tol: f64,
    with_jac: bool,
) -> Result<ScaledEval> {
    let sys = model.sys();
    let (k, s) = (sys.k, sys.s);
    let d = basis.ncols();
    let flow = integrate_scaled(model, lambda, p, q, sys.period, flow_tol, with_jac)?;
    let mut g = DVector::zeros(k + d);
    for i in 0..k {
        g[i] = flow.final_state[i] - p[i];
    }
    let eta = DVector::from_column_slice(&flow.eta_final);
    let gt = basis.transpose() * eta;
    for i in 0..d {
        g[k + i] = gt[i];
    }
    let dg = flow.variational.as_ref().map(|smat| {
        let n = k + s;
        let mut dg = DMatrix::zeros(k + d, k + d + 1);
        let sxp = smat.view((0, 0), (k, k));
        let sxq = smat.view((0, k), (k, s));
        let sep = smat.view((k, 0), (s, k));
        let seq = smat.view((k, k), (s, s));
        let bt = basis.transpose();
        dg.view_mut((0, 0), (k, k)).copy_from(&(sxp - DMatrix::identity(k, k)));
        dg.view_mut((0, k), (k, d)).copy_from(&(sxq * basis));
        dg.view_mut((k, 0), (d, k)).copy_from(&(&bt * sep));
        dg.view_mut((k, k), (d, d)).copy_from(&(&bt * seq * basis));
        for i in 0..k {
            dg[(i, k + d)] = smat[(i, n)];
        }
        let sel = smat.view((k, n), (s, 1));
        let col = &bt * sel;
        for i in 0..d {
            dg[(k + i, k + d)] = col[i];
        }
        dg
    });
    Ok(ScaledEval { g, dg, flow })
}

/// `DP` in the product chart from the variational matrix, with the tangent
/// basis `image_basis` at the image point.
pub(crate) fn dp_from_variational(
    smat: &DMatrix<f64>,
    k: usize,
    lambda: f64,
    basis: &DMatrix<f64>,
    image_basis: &DMatrix<f64>,
) -> DMatrix<f64> {
    let s = basis.nrows();
    let d = basis.ncols();
    let mut dp = DMatrix::zeros(k + d, k + d);
    let sxp = smat.view((0, 0), (k, k));
    let sxq = smat.view((0, k), (k, s));
    let sep = smat.view((k, 0), (s, k));
    let seq = smat.view((k, k), (s, s));
    let ct = image_basis.transpose();
    dp.view_mut((0, 0), (k, k)).copy_from(&sxp);
    dp.view_mut((0, k), (k, d)).copy_from(&(sxq * basis));
    dp.view_mut((k, 0), (d, k)).copy_from(&(&ct * sep * lambda));
    let yq = basis + seq * basis * lambda;
    dp.view_mut((k, k), (d, d)).copy_from(&(&ct * yq));
    dp
}

pub(crate) fn eigen_margin(dp: &DMatrix<f64>) -> f64 {
    dp.clone()
        .complex_eigenvalues()
        .iter()
        .map(|mu| (mu - nalgebra::Complex::new(1.0, 0.0)).norm())
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn index_of(dp: &DMatrix<f64>, margin: f64) -> Option<i32> {
    if margin <= EIGEN_MARGIN {
        return None;
    }
    let n = dp.nrows();
    let det = (DMatrix::identity(n, n) - dp).determinant();
    Some(if det > 0.0 { 1 } else { -1 })
}

/// Residual, `DP`, index and margin at a converged point.
pub(crate) fn finish_record(
    model: Model<'_>,
    lambda: f64,
    p: Vec<f64>,
    q: Vec<f64>,
    basis: DMatrix<f64>,
    ev: &ScaledEval,
    iterations: usize,
) -> Result<FixedPointRecord> {
    let sys = model.sys();
    let k = sys.k;
    let smat = ev
        .flow
        .variational
        .as_ref()
        .expect("finish_record needs the variational matrix");
    let image_basis = transport_basis(sys, ev.flow.y_final(), &basis)?;
    let jacobian = dp_from_variational(smat, k, lambda, &basis, &image_basis);
    let residual = ev
        .flow
        .final_state
        .iter()
        .zip(p.iter().chain(&q))
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let margin = eigen_margin(&jacobian);
    let non_isolated = lambda == 0.0;
    let index = if non_isolated { None } else { index_of(&jacobian, margin) };
    Ok(FixedPointRecord {
        lambda,
        p,
        q,
        residual,
        jacobian,
        basis,
        index,
        eigen_margin: margin,
        non_isolated,
        iterations,
    })
}

/// Newton on the scaled residual in `(p, xi)` at fixed `lambda`.
pub(crate) fn newton_fixed(
    model: Model<'_>,
    lambda: f64,
    p0: &[f64],
    q0: &[f64],
    opts: &FixedPointOptions,
) -> Result<FixedPointRecord> {
    let sys = model.sys();
    let k = sys.k;
    let mut p = p0.to_vec();
    let mut q = sys.project(q0)?;
    let mut basis = sys.tangent_basis(&q)?;
    let d = basis.ncols();
    let mut last = f64::INFINITY;
    for it in 0..=opts.max_iter {
        let ev = scaled_eval(model, lambda, &p, &q, &basis, opts.flow_tol, true)?;
        last = ev.norm();
        if last < opts.tol {
            return finish_record(model, lambda, p, q, basis, &ev, it);
        }
        if it == opts.max_iter {
            break;
        }
        let dg = ev.dg.as_ref().unwrap();
        let square = dg.columns(0, k + d).into_owned();
        let step = square.lu().solve(&(-&ev.g)).ok_or(Error::NewtonStagnation {
            iterations: it,
            residual: last,
        })?;
        for i in 0..k {
            p[i] += step[i];
        }
        let xi = step.rows(k, d).into_owned();
        let moved: Vec<f64> = (DVector::from_column_slice(&q) + &basis * xi).iter().copied().collect();
        q = sys.project(&moved)?;
        basis = transport_basis(sys, &q, &basis)?;
    }
    Err(Error::NewtonStagnation {
        iterations: opts.max_iter,
        residual: last,
    })
}

/// Fixed point of `P^lambda` near `(p, q)`.
///
/// At `lambda = 0` with constraints every `(x̂(0), q)` is fixed, so only `p`
/// is solved for and the projected `q` is returned flagged non-isolated.
pub fn find_fixed_point(
    sys: &crate::system::PerturbedCoupledSystem,
    lambda: f64,
    p: &[f64],
    q: &[f64],
    opts: &FixedPointOptions,
) -> Result<FixedPointRecord> {
    if lambda < 0.0 {
        return Err(Error::Invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    let model = Model::Full(sys);
    if lambda == 0.0 && sys.is_constrained() {
        let q = sys.project(q)?;
        let basis = sys.tangent_basis(&q)?;
        let mut p = p.to_vec();
        let k = sys.k;
        // the x-block is affine in p at lambda = 0: one Newton step is exact
        for it in 0..3 {
            let ev = scaled_eval(model, 0.0, &p, &q, &basis, opts.flow_tol, true)?;
            let gx = ev.g.rows(0, k).into_owned();
            if gx.amax() < opts.tol {
                return finish_record(model, 0.0, p, q, basis, &ev, it);
            }
            let dg = ev.dg.as_ref().unwrap();
            let step = dg
                .view((0, 0), (k, k))
                .into_owned()
                .lu()
                .solve(&(-gx))
                .ok_or(Error::Resonance(0.0))?;
            p.iter_mut().zip(step.iter()).for_each(|(a, s)| *a += s);
        }
        return Err(Error::NewtonStagnation {
            iterations: 3,
            residual: f64::NAN,
        });
    }
    newton_fixed(model, lambda, p, q, opts)
}
