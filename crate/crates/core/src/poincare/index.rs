//! Fixed point index of the translation operator against the degree of the
//! averaged field, plus the factorwise checks for the decoupled operator.

use super::fixed::{eigen_margin, index_of, newton_fixed, scaled_eval, FixedPointOptions, FixedPointRecord};
use super::flow::Model;
use crate::average::{averaged_field, brouwer_degree, degree_signed, Region};
use crate::error::{Error, Result};
use crate::linear::{fundamental_matrix, periodic_solution_linear, LinearTimeMap, PeriodicTrajectory};
use crate::system::{transport_basis, PerturbedCoupledSystem};
use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexOptions {
    pub fixed: FixedPointOptions,
    /// Newton seeds per axis of `U`.
    pub seeds_u: usize,
    /// Newton seeds per axis of `V`.
    pub seeds_v: usize,
    pub linear_tol: f64,
    pub nodes: usize,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions {
            fixed: FixedPointOptions::default(),
            seeds_u: 4,
            seeds_v: 8,
            linear_tol: 1e-12,
            nodes: 16,
        }
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64).collect()
}

fn grid(lo: &[f64], hi: &[f64], n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for (a, b) in lo.iter().zip(hi) {
        let vals = axis(*a, *b, n);
        out = out
            .into_iter()
            .flat_map(|prefix| {
                vals.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Coordinates of `q` in `region` (chart coordinates for chart regions), or
/// `None` when `q` is not in the image of the region's box.
pub(crate) fn region_coords(sys: &PerturbedCoupledSystem, region: &Region, q: &[f64]) -> Result<Option<Vec<f64>>> {
    match region {
        Region::Box { .. } => Ok(Some(q.to_vec())),
        Region::Chart { name, lo, hi } => {
            let chart = sys
                .chart(name)
                .ok_or_else(|| Error::Invalid(format!("no chart `{name}`")))?;
            let bounds: Vec<(f64, f64)> = lo.iter().copied().zip(hi.iter().copied()).collect();
            let theta = chart.locate(q, &bounds)?;
            let img = chart.eval(&theta)?;
            let dist = img.iter().zip(q).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            Ok((dist < 1e-8).then_some(theta))
        }
    }
}

fn region_seeds(sys: &PerturbedCoupledSystem, region: &Region, n: usize) -> Result<Vec<Vec<f64>>> {
    let pts = grid(region.lo(), region.hi(), n);
    match region {
        Region::Box { .. } => {
            if sys.is_constrained() {
                return Err(Error::Invalid("constrained systems need a chart region for V".into()));
            }
            if region.dim() != sys.s {
                return Err(Error::Invalid(format!("V has dimension {}, expected {}", region.dim(), sys.s)));
            }
            Ok(pts)
        }
        Region::Chart { name, .. } => {
            let chart = sys
                .chart(name)
                .ok_or_else(|| Error::Invalid(format!("no chart `{name}`")))?;
            pts.iter().map(|t| chart.eval(t)).collect()
        }
    }
}

fn inside_box(lo: &[f64], hi: &[f64], u: &[f64]) -> (bool, f64) {
    let mut inside = true;
    let mut dist = f64::INFINITY;
    for ((x, a), b) in u.iter().zip(lo).zip(hi) {
        inside &= x > a && x < b;
        dist = dist.min((x - a).abs()).min((b - x).abs());
    }
    (inside, dist)
}

fn same_point(a: &FixedPointRecord, p: &[f64], q: &[f64]) -> bool {
    a.p.iter().chain(&a.q).zip(p.iter().chain(q)).all(|(x, y)| (x - y).abs() < 1e-6)
}

/// Fixed points of `P^lambda` (or of the decoupled operator) in `U x V`,
/// found by Newton from a seed grid. Failed seeds are skipped.
pub fn enumerate_fixed_points(
    model: Model<'_>,
    lambda: f64,
    u_lo: &[f64],
    u_hi: &[f64],
    v: &Region,
    opts: &IndexOptions,
) -> Result<Vec<FixedPointRecord>> {
    let sys = model.sys();
    if lambda <= 0.0 {
        return Err(Error::Invalid("fixed points are isolated only for lambda > 0".into()));
    }
    if u_lo.len() != sys.k {
        return Err(Error::Invalid(format!("U has dimension {}, expected {}", u_lo.len(), sys.k)));
    }
    let q_seeds = region_seeds(sys, v, opts.seeds_v)?;
    let p_seeds = grid(u_lo, u_hi, opts.seeds_u);
    let mut found: Vec<FixedPointRecord> = Vec::new();
    for p0 in &p_seeds {
        for q0 in &q_seeds {
            let Ok(rec) = newton_fixed(model, lambda, p0, q0, &opts.fixed) else { continue };
            if found.iter().any(|f| same_point(f, &rec.p, &rec.q)) {
                continue;
            }
            let (in_u, du) = inside_box(u_lo, u_hi, &rec.p);
            let Some(coords) = region_coords(sys, v, &rec.q)? else { continue };
            let (in_v, dv) = inside_box(v.lo(), v.hi(), &coords);
            if du.min(dv) < 1e-9 {
                let mut point = rec.p.clone();
                point.extend_from_slice(&rec.q);
                return Err(Error::BoundaryFixedPoint { point });
            }
            if !(in_u && in_v) {
                continue;
            }
            if rec.index.is_none() {
                let mut point = rec.p.clone();
                point.extend_from_slice(&rec.q);
                return Err(Error::DegenerateFixedPoint {
                    point,
                    margin: rec.eigen_margin,
                });
            }
            found.push(rec);
        }
    }
    found.sort_by(|a, b| {
        a.p.iter()
            .chain(&a.q)
            .zip(b.p.iter().chain(&b.q))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(found)
}

#[derive(Debug, Clone)]
pub struct IndexRow {
    pub lambda: f64,
    pub fixed_points: Vec<FixedPointRecord>,
    /// Signed sum of indices over `U x V`.
    pub index_sum: i32,
    /// `|index_sum|`.
    pub lhs: i32,
    /// `1_U(x̂(0)) |deg(w, V)|`.
    pub rhs: i32,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct IndexReport {
    pub xhat0: Vec<f64>,
    pub xhat0_in_u: bool,
    /// Signed `deg(w, V)`.
    pub degree: i32,
    pub rows: Vec<IndexRow>,
}

impl IndexReport {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

pub(crate) fn linear_setup(sys: &PerturbedCoupledSystem, tol: f64) -> Result<(crate::linear::Monodromy, PeriodicTrajectory)> {
    let m = fundamental_matrix(sys, tol)?;
    crate::linear::require_nonresonant(&m, 1e-8)?;
    let xhat = periodic_solution_linear(sys, &m, tol)?;
    Ok((m, xhat))
}

/// `|ind(P^lambda, U x V)|` against `1_U(x̂(0)) |deg(w, V)|` per lambda.
pub fn index_formula_check(
    sys: &PerturbedCoupledSystem,
    u_lo: &[f64],
    u_hi: &[f64],
    v: &Region,
    lambdas: &[f64],
    opts: &IndexOptions,
) -> Result<IndexReport> {
    let (_, xhat) = linear_setup(sys, opts.linear_tol)?;
    let xhat0 = xhat.initial_value().to_vec();
    let (in_u, du) = inside_box(u_lo, u_hi, &xhat0);
    if du < 1e-9 {
        return Err(Error::BoundaryFixedPoint { point: xhat0 });
    }
    let w = averaged_field(sys, &xhat, opts.nodes)?;
    let degree = brouwer_degree(&w, v, None, 1e-10)?.value;
    let rhs = if in_u { degree.abs() } else { 0 };
    let mut lams = lambdas.to_vec();
    lams.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    for lambda in lams {
        let fixed_points = enumerate_fixed_points(Model::Full(sys), lambda, u_lo, u_hi, v, opts)?;
        let index_sum: i32 = fixed_points.iter().map(|r| r.index.unwrap()).sum();
        rows.push(IndexRow {
            lambda,
            fixed_points,
            index_sum,
            lhs: index_sum.abs(),
            rhs,
            holds: index_sum.abs() == rhs,
        });
    }
    Ok(IndexReport {
        xhat0,
        xhat0_in_u: in_u,
        degree,
        rows,
    })
}

/// A fixed point of the averaged factor `Q_phi^lambda` on `M`.
#[derive(Debug, Clone)]
pub struct FactorFixedPoint {
    pub q: Vec<f64>,
    pub residual: f64,
    pub index: i32,
}

/// Fixed points of `y -> y(T)` for `y' = lambda f2(t, x̂(t), y, lambda)` in
/// `V`, found by Newton in the tangent chart, with their indices.
pub fn averaged_factor_fixed_points(
    sys: &PerturbedCoupledSystem,
    xhat: &PeriodicTrajectory,
    lambda: f64,
    v: &Region,
    opts: &IndexOptions,
) -> Result<Vec<FactorFixedPoint>> {
    if lambda <= 0.0 {
        return Err(Error::Invalid("fixed points are isolated only for lambda > 0".into()));
    }
    let model = Model::Decoupled { sys, xhat };
    let p = xhat.initial_value().to_vec();
    let k = sys.k;
    let mut found: Vec<FactorFixedPoint> = Vec::new();
    'seeds: for q0 in region_seeds(sys, v, opts.seeds_v)? {
        let mut q = sys.project(&q0)?;
        let mut basis = sys.tangent_basis(&q)?;
        let d = basis.ncols();
        for _ in 0..=opts.fixed.max_iter {
            let Ok(ev) = scaled_eval(model, lambda, &p, &q, &basis, opts.fixed.flow_tol, true) else {
                continue 'seeds;
            };
            let gq = ev.g.rows(k, d).into_owned();
            if gq.amax() < opts.fixed.tol {
                if found.iter().any(|f| f.q.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-6)) {
                    continue 'seeds;
                }
                let Some(coords) = region_coords(sys, v, &q)? else { continue 'seeds };
                let (inside, dist) = inside_box(v.lo(), v.hi(), &coords);
                if dist < 1e-9 {
                    return Err(Error::BoundaryFixedPoint { point: q });
                }
                if !inside {
                    continue 'seeds;
                }
                let smat = ev.flow.variational.as_ref().unwrap();
                let image_basis = transport_basis(sys, ev.flow.y_final(), &basis)?;
                let seq = smat.view((k, k), (sys.s, sys.s));
                let dq = image_basis.transpose() * (&basis + seq * &basis * lambda);
                let margin = eigen_margin(&dq);
                let index = index_of(&dq, margin).ok_or_else(|| Error::DegenerateFixedPoint {
                    point: q.clone(),
                    margin,
                })?;
                let residual = ev
                    .flow
                    .y_final()
                    .iter()
                    .zip(&q)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                found.push(FactorFixedPoint { q, residual, index });
                continue 'seeds;
            }
            let dg = ev.dg.as_ref().unwrap();
            let block = dg.view((k, k), (d, d)).into_owned();
            let Some(xi) = block.lu().solve(&(-gq)) else { continue 'seeds };
            let moved: Vec<f64> = (DVector::from_column_slice(&q) + &basis * xi).iter().copied().collect();
            let Ok(next) = sys.project(&moved) else { continue 'seeds };
            q = next;
            basis = transport_basis(sys, &q, &basis)?;
        }
    }
    found.sort_by(|a, b| {
        a.q.iter()
            .zip(&b.q)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(found)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductRow {
    pub lambda: f64,
    /// `ind(Q^lambda, U x V)` from the fixed points of the full decoupled map.
    pub direct: i32,
    /// `ind(F_T, U)`.
    pub linear_factor: i32,
    /// `ind(Q_phi^lambda, V)`.
    pub averaged_factor: i32,
    pub holds: bool,
}

/// Product law for the decoupled operator: the index computed directly on
/// `U x V` against the product of the two factor indices.
pub fn product_law_check(
    sys: &PerturbedCoupledSystem,
    u_lo: &[f64],
    u_hi: &[f64],
    v: &Region,
    lambdas: &[f64],
    opts: &IndexOptions,
) -> Result<Vec<ProductRow>> {
    let (m, xhat) = linear_setup(sys, opts.linear_tol)?;
    let linear_factor = LinearTimeMap::new(sys, &m, opts.linear_tol)?.index_on_box(u_lo, u_hi)?;
    let model = Model::Decoupled { sys, xhat: &xhat };
    let mut rows = Vec::new();
    for &lambda in lambdas {
        let direct: i32 = enumerate_fixed_points(model, lambda, u_lo, u_hi, v, opts)?
            .iter()
            .map(|r| r.index.unwrap())
            .sum();
        let averaged_factor: i32 = averaged_factor_fixed_points(sys, &xhat, lambda, v, opts)?
            .iter()
            .map(|f| f.index)
            .sum();
        rows.push(ProductRow {
            lambda,
            direct,
            linear_factor,
            averaged_factor,
            holds: direct == linear_factor * averaged_factor,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedFactorRow {
    pub lambda: f64,
    pub factor_index: i32,
    /// `deg(-w, V)`, computed on the negated field.
    pub degree_minus_w: i32,
    pub holds: bool,
}

/// `ind(Q_phi^lambda, V) = deg(-w, V)` per lambda.
pub fn averaged_factor_check(
    sys: &PerturbedCoupledSystem,
    v: &Region,
    lambdas: &[f64],
    opts: &IndexOptions,
) -> Result<Vec<AveragedFactorRow>> {
    let (_, xhat) = linear_setup(sys, opts.linear_tol)?;
    let w = averaged_field(sys, &xhat, opts.nodes)?;
    let degree_minus_w = degree_signed(&w, v, None, 1e-10, true)?.value;
    lambdas
        .iter()
        .map(|&lambda| {
            let factor_index = averaged_factor_fixed_points(sys, &xhat, lambda, v, opts)?
                .iter()
                .map(|f| f.index)
                .sum();
            Ok(AveragedFactorRow {
                lambda,
                factor_index,
                degree_minus_w,
                holds: factor_index == degree_minus_w,
            })
        })
        .collect()
}

/// `ind(F_T, U)`: the sign at `x̂(0)` when it lies in `U`, else 0.
pub fn linear_index_on_box(sys: &PerturbedCoupledSystem, u_lo: &[f64], u_hi: &[f64], tol: f64) -> Result<i32> {
    let (m, _) = linear_setup(sys, tol)?;
    LinearTimeMap::new(sys, &m, tol)?.index_on_box(u_lo, u_hi)
}
