use super::degree::VectorField;
use crate::error::{Error, Result};
use crate::linear::PeriodicTrajectory;
use crate::system::{Chart, Part, PerturbedCoupledSystem};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REFINE_TOL: f64 = 1e-10;
const MAX_NODES: usize = 1 << 16;

/// `w(q) = (1/T) ∫_0^T f2(t, x̂(t), q, 0) dt`, by the periodic trapezoid rule
/// on a node count fixed at construction.
#[derive(Debug, Clone)]
pub struct AveragedField<'a> {
    sys: &'a PerturbedCoupledSystem,
    times: Vec<f64>,
    xs: Vec<Vec<f64>>,
}

impl<'a> AveragedField<'a> {
    /// Fixed node count, no refinement.
    pub fn with_nodes(sys: &'a PerturbedCoupledSystem, xhat: &PeriodicTrajectory, nodes: usize) -> Self {
        let times: Vec<f64> = (0..nodes).map(|j| sys.period * j as f64 / nodes as f64).collect();
        let xs = times.iter().map(|t| xhat.eval(*t)).collect();
        AveragedField { sys, times, xs }
    }

    pub fn system(&self) -> &'a PerturbedCoupledSystem {
        self.sys
    }

    pub fn nodes(&self) -> usize {
        self.times.len()
    }

    pub fn dim(&self) -> usize {
        self.sys.s
    }

    pub fn eval(&self, q: &[f64]) -> Result<Vec<f64>> {
        let s = self.sys.s;
        let mut acc = vec![0.0; s];
        let mut f = vec![0.0; s];
        for (t, x) in self.times.iter().zip(&self.xs) {
            self.sys.eval_part(Part::F2, *t, x, q, 0.0, &mut f)?;
            acc.iter_mut().zip(&f).for_each(|(a, v)| *a += v);
        }
        let n = self.times.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }

    /// Ambient `s x s` Jacobian by central differences.
    pub fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        central_jacobian(self.sys.s, q, |u| self.eval(u))
    }

    /// Max normal component of `w` over `samples` manifold probe points.
    pub fn max_normal_component(&self, samples: usize) -> Result<f64> {
        if !self.sys.is_constrained() {
            return Ok(0.0);
        }
        let mut worst = 0.0f64;
        for q in self.sys.probe_points(samples)? {
            let w = self.eval(&q)?;
            worst = worst.max(self.sys.normal_component(&q, &w)?);
        }
        Ok(worst)
    }

    /// The field pulled back to chart coordinates: `J⁺(θ) w(map(θ))`.
    pub fn in_chart(&self, chart: &'a Chart) -> ChartField<'_, 'a> {
        ChartField { w: self, chart }
    }
}

/// Build `w` with node doubling from `nodes` (at least 16) until two
/// successive rules differ by less than `1e-10` at every probe point.
pub fn averaged_field<'a>(
    sys: &'a PerturbedCoupledSystem,
    xhat: &PeriodicTrajectory,
    nodes: usize,
) -> Result<AveragedField<'a>> {
    if nodes < 16 {
        return Err(Error::Invalid(format!("averaging needs at least 16 nodes, got {nodes}")));
    }
    let probes = probe_points(sys)?;
    let mut n = nodes;
    let mut field = AveragedField::with_nodes(sys, xhat, n);
    let mut prev: Vec<Vec<f64>> = probes.iter().map(|q| field.eval(q)).collect::<Result<_>>()?;
    loop {
        n *= 2;
        if n > MAX_NODES {
            return Err(Error::Invalid(format!(
                "averaging quadrature did not settle below {REFINE_TOL:e} with {MAX_NODES} nodes"
            )));
        }
        let finer = AveragedField::with_nodes(sys, xhat, n);
        let next: Vec<Vec<f64>> = probes.iter().map(|q| finer.eval(q)).collect::<Result<_>>()?;
        let diff = prev
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0f64, f64::max);
        field = finer;
        if diff < REFINE_TOL {
            return Ok(field);
        }
        prev = next;
    }
}

fn probe_points(sys: &PerturbedCoupledSystem) -> Result<Vec<Vec<f64>>> {
    if sys.is_constrained() {
        return sys.probe_points(8);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xa7e_0003);
    let mut out = vec![vec![0.0; sys.s]];
    for _ in 0..7 {
        out.push((0..sys.s).map(|_| rng.gen_range(-2.0..2.0)).collect());
    }
    Ok(out)
}

/// Central differences with step `1e-6 max(1, |u_j|)`.
pub fn central_jacobian<F>(n: usize, u: &[f64], f: F) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let m = f(u)?.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut v = u.to_vec();
    for j in 0..n {
        let h = 1e-6 * u[j].abs().max(1.0);
        v[j] = u[j] + h;
        let fp = f(&v)?;
        v[j] = u[j] - h;
        let fm = f(&v)?;
        v[j] = u[j];
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Field on an unconstrained `q` space.
impl VectorField for AveragedField<'_> {
    fn dim(&self) -> usize {
        self.sys.s
    }

    fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        AveragedField::eval(self, u)
    }

    fn point(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(u.to_vec())
    }
}

/// `w` in the coordinates of a chart.
#[derive(Debug, Clone, Copy)]
pub struct ChartField<'w, 'a> {
    w: &'w AveragedField<'a>,
    chart: &'a Chart,
}

impl VectorField for ChartField<'_, '_> {
    fn dim(&self) -> usize {
        self.chart.dim()
    }

    fn eval(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let q = self.chart.eval(theta)?;
        let w = self.w.eval(&q)?;
        self.chart.tangent_coords(theta, &w)
    }

    fn point(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.chart.eval(theta)
    }
}
