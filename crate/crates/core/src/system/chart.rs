use crate::error::{Error, Result};
use crate::expr::{ExprAst, Layout, Program};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// A parametrization `theta -> map(theta) ∈ M ⊆ R^s` over a parameter box.
#[derive(Debug, Clone)]
pub struct Chart {
    pub name: String,
    pub params: Vec<String>,
    pub map: Vec<ExprAst>,
    pub domain: Vec<(f64, f64)>,
    compiled: Vec<Program>,
}

impl Chart {
    /// Build a chart without compiling; [`Chart::with_constants`] finishes it.
    pub fn new(name: String, params: Vec<String>, map: Vec<ExprAst>, domain: Vec<(f64, f64)>) -> Self {
        Chart {
            name,
            params,
            map,
            domain,
            compiled: Vec::new(),
        }
    }

    pub(crate) fn with_constants(mut self, constants: &BTreeMap<String, f64>) -> Result<Self> {
        let layout = Layout::new(self.params.iter().cloned()).with_constants(constants);
        self.compiled = self
            .map
            .iter()
            .enumerate()
            .map(|(i, e)| {
                e.compile(&layout).map_err(|err| {
                    Error::scenario(format!(".charts[{}].map[{i}]", self.name), err.to_string())
                })
            })
            .collect::<Result<_>>()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.map.len()
    }

    pub fn eval(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .compiled
            .iter()
            .map(|p| p.eval(theta))
            .collect::<Result<Vec<_>, _>>()?)
    }

    /// `s x d` Jacobian of the map.
    pub fn jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let mut jac = DMatrix::zeros(self.ambient_dim(), d);
        let mut g = vec![0.0; d];
        for (i, p) in self.compiled.iter().enumerate() {
            p.eval_grad(theta, &mut g)?;
            for j in 0..d {
                jac[(i, j)] = g[j];
            }
        }
        Ok(jac)
    }

    /// Coordinates of a tangent vector `v` in the chart basis `∂map/∂theta`
    /// (least squares).
    pub fn tangent_coords(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let jac = self.jacobian(theta)?;
        let jtj = jac.transpose() * &jac;
        let rhs = jac.transpose() * DVector::from_column_slice(v);
        let sol = jtj
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Invalid(format!("chart `{}` is singular at {theta:?}", self.name)))?;
        Ok(sol.iter().copied().collect())
    }

    /// Parameter of the point of `domain` whose image is `q`: nearest node of
    /// a coarse grid followed by Gauss–Newton.
    pub fn locate(&self, q: &[f64], domain: &[(f64, f64)]) -> Result<Vec<f64>> {
        let d = self.dim();
        let per_axis: usize = if d == 1 { 256 } else { 48 };
        let mut best = (f64::INFINITY, vec![0.0; d]);
        let total = per_axis.pow(d as u32);
        let mut theta = vec![0.0; d];
        for idx in 0..total {
            let mut rem = idx;
            for (j, (lo, hi)) in domain.iter().enumerate() {
                let i = rem % per_axis;
                rem /= per_axis;
                theta[j] = lo + (hi - lo) * (i as f64 + 0.5) / per_axis as f64;
            }
            let p = self.eval(&theta)?;
            let dist: f64 = p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum();
            if dist < best.0 {
                best = (dist, theta.clone());
            }
        }
        let mut theta = best.1;
        for _ in 0..50 {
            let p = self.eval(&theta)?;
            let r: Vec<f64> = q.iter().zip(&p).map(|(a, b)| a - b).collect();
            let step = self.tangent_coords(&theta, &r)?;
            let norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
            theta.iter_mut().zip(&step).for_each(|(t, s)| *t += s);
            if norm < 1e-15 {
                break;
            }
        }
        Ok(theta)
    }
}
