//! The coupled system
//!
//! ```text
//! x' = A(t) x + c(t) + lambda f1(t, x, y, lambda),   x in R^k
//! y' = lambda f2(t, x, y, lambda),                   y in M ⊆ R^s
//! ```
//!
//! with `M = {y : g(y) = 0}` given by constraint expressions, plus the
//! scenario file format and the built-in examples.

mod builtin;
mod chart;
mod manifold;
mod scenario;
mod tangency;

pub use builtin::{builtin_names, builtin_scenario};
pub use chart::Chart;
pub use manifold::{tangent_projector, transport_basis};
pub use scenario::{emit_scenario, load_scenario, load_scenario_file, load_scenario_with, resolve_scenario, resolve_scenario_with, scenario_hash};
pub use tangency::{check_tangency, TangencyReport};

use crate::error::{Error, Result};
use crate::expr::{ExprAst, Layout, Program};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// Which perturbation vector to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    F1,
    F2,
}

#[derive(Debug, Clone)]
struct Compiled {
    a: Vec<Program>,
    c: Vec<Program>,
    f1: Vec<Program>,
    f2: Vec<Program>,
    g: Vec<Program>,
    derived: Vec<(String, Program)>,
}

/// Full problem datum: dimensions, period, `A`, `c`, `f1`, `f2`, and `M`.
#[derive(Debug, Clone)]
pub struct PerturbedCoupledSystem {
    pub name: String,
    pub description: Option<String>,
    pub k: usize,
    pub s: usize,
    pub period: f64,
    pub(crate) period_is_two_pi: bool,
    pub a: Vec<Vec<ExprAst>>,
    pub c: Vec<ExprAst>,
    pub f1: Vec<ExprAst>,
    pub f2: Vec<ExprAst>,
    pub constraints: Vec<ExprAst>,
    pub charts: Vec<Chart>,
    pub constants: BTreeMap<String, f64>,
    /// Extra output columns as functions of `lambda` (e.g. `mu = lambda^2`).
    pub derived: Vec<(String, ExprAst)>,
    /// Default region for degree and branch seeding, in CLI region syntax.
    pub region: Option<String>,
    compiled: Compiled,
}

/// Variable names in slot order: `t, x1..xk, y1..ys, lambda`.
pub fn variable_names(k: usize, s: usize) -> Vec<String> {
    let mut names = vec!["t".to_string()];
    names.extend((1..=k).map(|i| format!("x{i}")));
    names.extend((1..=s).map(|i| format!("y{i}")));
    names.push("lambda".into());
    names
}

impl PerturbedCoupledSystem {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        name: String,
        description: Option<String>,
        period: f64,
        period_is_two_pi: bool,
        a: Vec<Vec<ExprAst>>,
        c: Vec<ExprAst>,
        f1: Vec<ExprAst>,
        f2: Vec<ExprAst>,
        constraints: Vec<ExprAst>,
        charts: Vec<Chart>,
        constants: BTreeMap<String, f64>,
        derived: Vec<(String, ExprAst)>,
        region: Option<String>,
    ) -> Result<Self> {
        let k = c.len();
        let s = f2.len();
        let layout = Layout::new(variable_names(k, s)).with_constants(&constants);
        let compile_all = |exprs: &[ExprAst], path: &str| -> Result<Vec<Program>> {
            exprs
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    e.compile(&layout)
                        .map_err(|err| Error::scenario(format!(".{path}[{i}]"), err.to_string()))
                })
                .collect()
        };
        let mut a_prog = Vec::with_capacity(k * k);
        for (i, row) in a.iter().enumerate() {
            a_prog.extend(compile_all(row, &format!("A[{i}]"))?);
        }
        let compiled = Compiled {
            a: a_prog,
            c: compile_all(&c, "c")?,
            f1: compile_all(&f1, "f1")?,
            f2: compile_all(&f2, "f2")?,
            g: compile_all(&constraints, "constraints")?,
            derived: derived
                .iter()
                .map(|(n, e)| {
                    e.compile(&layout)
                        .map(|p| (n.clone(), p))
                        .map_err(|err| Error::scenario(format!(".derived.{n}"), err.to_string()))
                })
                .collect::<Result<_>>()?,
        };
        let charts = charts
            .into_iter()
            .map(|ch| ch.with_constants(&constants))
            .collect::<Result<Vec<_>>>()?;
        Ok(PerturbedCoupledSystem {
            name,
            description,
            k,
            s,
            period,
            period_is_two_pi,
            a,
            c,
            f1,
            f2,
            constraints,
            charts,
            constants,
            derived,
            region,
            compiled,
        })
    }

    /// Intrinsic dimension `d` of `M`.
    pub fn manifold_dim(&self) -> usize {
        self.s - self.constraints.len()
    }

    pub fn is_constrained(&self) -> bool {
        !self.constraints.is_empty()
    }

    /// Number of expression slots: `t`, `x`, `y`, `lambda`.
    pub fn n_vars(&self) -> usize {
        self.k + self.s + 2
    }

    fn fill_vars(&self, t: f64, x: &[f64], y: &[f64], lambda: f64, vars: &mut [f64]) {
        vars[0] = t;
        vars[1..=self.k].copy_from_slice(x);
        vars[1 + self.k..1 + self.k + self.s].copy_from_slice(y);
        vars[1 + self.k + self.s] = lambda;
    }

    fn vars(&self, t: f64, x: &[f64], y: &[f64], lambda: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_vars()];
        self.fill_vars(t, x, y, lambda, &mut v);
        v
    }

    pub fn a_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        let mut vars = vec![0.0; self.n_vars()];
        vars[0] = t;
        let k = self.k;
        let mut m = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                m[(i, j)] = self.compiled.a[i * k + j].eval(&vars)?;
            }
        }
        Ok(m)
    }

    pub fn c_vector(&self, t: f64) -> Result<DVector<f64>> {
        let mut vars = vec![0.0; self.n_vars()];
        vars[0] = t;
        let v = self
            .compiled
            .c
            .iter()
            .map(|p| p.eval(&vars))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DVector::from_vec(v))
    }

    /// Writes `A(t) x + c(t)` into `out`.
    pub fn linear_rhs(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let mut vars = vec![0.0; self.n_vars()];
        vars[0] = t;
        let k = self.k;
        for i in 0..k {
            let mut acc = self.compiled.c[i].eval(&vars)?;
            for j in 0..k {
                acc += self.compiled.a[i * k + j].eval(&vars)? * x[j];
            }
            out[i] = acc;
        }
        Ok(())
    }

    fn programs(&self, part: Part) -> &[Program] {
        match part {
            Part::F1 => &self.compiled.f1,
            Part::F2 => &self.compiled.f2,
        }
    }

    pub fn eval_part(&self, part: Part, t: f64, x: &[f64], y: &[f64], lambda: f64, out: &mut [f64]) -> Result<()> {
        let vars = self.vars(t, x, y, lambda);
        for (o, p) in out.iter_mut().zip(self.programs(part)) {
            *o = p.eval(&vars)?;
        }
        Ok(())
    }

    /// Values and gradients of `f1` or `f2`. `jac` is row-major with one
    /// row per component and columns `[x (k), y (s), lambda]`.
    pub fn eval_part_grad(
        &self,
        part: Part,
        t: f64,
        x: &[f64],
        y: &[f64],
        lambda: f64,
        out: &mut [f64],
        jac: &mut [f64],
    ) -> Result<()> {
        let vars = self.vars(t, x, y, lambda);
        let n = self.n_vars();
        let cols = self.k + self.s + 1;
        let mut g = vec![0.0; n];
        for (i, p) in self.programs(part).iter().enumerate() {
            out[i] = p.eval_grad(&vars, &mut g)?;
            jac[i * cols..(i + 1) * cols].copy_from_slice(&g[1..]);
        }
        Ok(())
    }

    pub fn constraint_values(&self, y: &[f64]) -> Result<Vec<f64>> {
        let vars = self.vars(0.0, &vec![0.0; self.k], y, 0.0);
        Ok(self
            .compiled
            .g
            .iter()
            .map(|p| p.eval(&vars))
            .collect::<Result<Vec<_>, _>>()?)
    }

    /// `(s - d) x s` Jacobian of the constraints.
    pub fn constraint_jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let vars = self.vars(0.0, &vec![0.0; self.k], y, 0.0);
        let m = self.constraints.len();
        let mut jac = DMatrix::zeros(m, self.s);
        let mut g = vec![0.0; self.n_vars()];
        for (i, p) in self.compiled.g.iter().enumerate() {
            p.eval_grad(&vars, &mut g)?;
            for j in 0..self.s {
                jac[(i, j)] = g[1 + self.k + j];
            }
        }
        Ok(jac)
    }

    /// Max-norm constraint violation `|g(y)|`.
    pub fn constraint_violation(&self, y: &[f64]) -> Result<f64> {
        Ok(self
            .constraint_values(y)?
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs())))
    }

    pub fn derived_values(&self, lambda: f64) -> Result<Vec<(String, f64)>> {
        let mut vars = vec![0.0; self.n_vars()];
        vars[self.n_vars() - 1] = lambda;
        self.compiled
            .derived
            .iter()
            .map(|(n, p)| Ok((n.clone(), p.eval(&vars)?)))
            .collect()
    }

    pub fn chart(&self, name: &str) -> Option<&Chart> {
        self.charts.iter().find(|c| c.name == name)
    }

    /// Project an ambient point onto `M` (identity when unconstrained).
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        manifold::project(self, y)
    }

    /// Orthonormal basis of `T_qM` as columns of an `s x d` matrix.
    pub fn tangent_basis(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        manifold::tangent_basis(self, q)
    }

    /// Euclidean norm of the component of `v` normal to `M` at `q`.
    pub fn normal_component(&self, q: &[f64], v: &[f64]) -> Result<f64> {
        manifold::normal_component(self, q, v)
    }

    /// Numerical rank of the constraint Jacobian at `q`.
    pub fn constraint_rank(&self, q: &[f64]) -> Result<usize> {
        manifold::constraint_rank(self, q)
    }

    /// A deterministic sample of manifold points used as validation probes.
    pub fn probe_points(&self, count: usize) -> Result<Vec<Vec<f64>>> {
        manifold::probe_points(self, count)
    }
}
