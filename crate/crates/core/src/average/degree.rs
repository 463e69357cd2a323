//! Zeros and Brouwer degree of vector fields on coordinate boxes.

use super::field::{central_jacobian, AveragedField};
use super::region::Region;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

/// Zeros closer than this (in the ambient point) are the same zero.
const DEDUP: f64 = 1e-6;
/// `|det Dw|` at or below this makes a zero degenerate.
pub const DEGENERACY: f64 = 1e-8;

/// A field `R^d -> R^d` over coordinates `u`, with the ambient point
/// `point(u)` used to identify zeros.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, u: &[f64]) -> Result<Vec<f64>>;
    fn point(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(u.to_vec())
    }
}

impl<F: VectorField + ?Sized> VectorField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        (**self).eval(u)
    }

    fn point(&self, u: &[f64]) -> Result<Vec<f64>> {
        (**self).point(u)
    }
}

/// A closure field, mostly for tests and randomized checks.
pub struct FnField<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok((self.f)(u))
    }
}

/// `-F`.
pub struct Negated<F>(pub F);

impl<F: VectorField> VectorField for Negated<F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.eval(u)?.into_iter().map(|v| -v).collect())
    }

    fn point(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.0.point(u)
    }
}

#[derive(Debug, Clone)]
pub struct ZeroRecord {
    /// Ambient point `q`.
    pub location: Vec<f64>,
    /// Box or chart coordinates.
    pub coords: Vec<f64>,
    pub residual: f64,
    /// `d x d` Jacobian of the field in `coords`.
    pub jacobian: DMatrix<f64>,
    pub sign: i32,
    pub regularity_margin: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeMethod {
    SignSum,
    Endpoint,
    Winding,
}

impl DegreeMethod {
    pub fn name(self) -> &'static str {
        match self {
            DegreeMethod::SignSum => "sign-sum",
            DegreeMethod::Endpoint => "endpoint-oracle",
            DegreeMethod::Winding => "winding-oracle",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DegreeResult {
    pub value: i32,
    pub zeros: Vec<ZeroRecord>,
    pub region: String,
    pub method: DegreeMethod,
    /// Independent oracle value when one applies (`d = 1` or `d = 2`).
    pub oracle: Option<(DegreeMethod, i32)>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn default_grid(d: usize) -> usize {
    match d {
        1 => 200,
        2 => 40,
        3 => 12,
        _ => 6,
    }
}

fn newton<F: VectorField + ?Sized>(field: &F, start: &[f64], tol: f64) -> Option<(Vec<f64>, f64)> {
    let d = field.dim();
    let mut u = start.to_vec();
    let mut fu = field.eval(&u).ok()?;
    let mut res = max_abs(&fu);
    for _ in 0..60 {
        if res < 1e-14 {
            break;
        }
        let jac = central_jacobian(d, &u, |v| field.eval(v)).ok()?;
        let step = jac.lu().solve(&DVector::from_column_slice(&fu))?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, s)| a - alpha * s).collect();
            if let Ok(ft) = field.eval(&trial) {
                let r = max_abs(&ft);
                if r.is_finite() && r < res * (1.0 - 1e-4 * alpha) || r < 1e-14 {
                    u = trial;
                    fu = ft;
                    res = r;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        if alpha * step.amax() < 1e-15 * max_abs(&u).max(1.0) {
            break;
        }
    }
    (res < tol).then_some((u, res))
}

fn classify<F: VectorField + ?Sized>(field: &F, u: Vec<f64>, residual: f64) -> Result<ZeroRecord> {
    let d = field.dim();
    let jacobian = central_jacobian(d, &u, |v| field.eval(v))?;
    let det = jacobian.determinant();
    let margin = det.abs();
    Ok(ZeroRecord {
        location: field.point(&u)?,
        coords: u,
        residual,
        jacobian,
        sign: if det > 0.0 { 1 } else if det < 0.0 { -1 } else { 0 },
        regularity_margin: margin,
        degenerate: margin <= DEGENERACY,
    })
}

/// Grid scan plus Newton on a box. A zero within `max(tol, 1e-9)` of the
/// boundary is an error.
pub fn find_zeros_in<F: VectorField + ?Sized>(
    field: &F,
    lo: &[f64],
    hi: &[f64],
    grid: usize,
    tol: f64,
) -> Result<Vec<ZeroRecord>> {
    let d = field.dim();
    if lo.len() != d || hi.len() != d {
        return Err(Error::Invalid(format!(
            "region has dimension {}, field has dimension {d}",
            lo.len()
        )));
    }
    if grid < 2 {
        return Err(Error::Invalid("grid needs at least 2 points per axis".into()));
    }
    let n = grid;
    let total = n.pow(d as u32);
    let node = |idx: usize| -> Vec<f64> {
        let mut rem = idx;
        (0..d)
            .map(|j| {
                let i = rem % n;
                rem /= n;
                lo[j] + (hi[j] - lo[j]) * i as f64 / (n - 1) as f64
            })
            .collect()
    };
    let values: Vec<Option<Vec<f64>>> = (0..total).map(|i| field.eval(&node(i)).ok()).collect();

    // seeds: cells where every component brackets zero
    let mut seeds = Vec::new();
    let cells = (n - 1).pow(d as u32);
    for c in 0..cells {
        let mut base = vec![0usize; d];
        let mut rem = c;
        for b in base.iter_mut() {
            *b = rem % (n - 1);
            rem /= n - 1;
        }
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        let mut ok = true;
        for corner in 0..(1usize << d) {
            let mut idx = 0;
            let mut stride = 1;
            for (j, b) in base.iter().enumerate() {
                idx += (b + ((corner >> j) & 1)) * stride;
                stride *= n;
            }
            match &values[idx] {
                Some(v) => {
                    for i in 0..d {
                        min[i] = min[i].min(v[i]);
                        max[i] = max[i].max(v[i]);
                    }
                }
                None => ok = false,
            }
        }
        if ok && (0..d).all(|i| min[i] <= 0.0 && max[i] >= 0.0) {
            let center: Vec<f64> = (0..d)
                .map(|j| lo[j] + (hi[j] - lo[j]) * (base[j] as f64 + 0.5) / (n - 1) as f64)
                .collect();
            seeds.push(center);
        }
    }

    let btol = tol.max(1e-9);
    let mut zeros: Vec<ZeroRecord> = Vec::new();
    for seed in seeds {
        let Some((u, res)) = newton(field, &seed, tol) else { continue };
        let dist = u
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(x, (a, b))| (x - a).min(b - x))
            .fold(f64::INFINITY, f64::min);
        if dist < -btol {
            continue;
        }
        let point = field.point(&u)?;
        if zeros.iter().any(|z| {
            z.location
                .iter()
                .zip(&point)
                .all(|(a, b)| (a - b).abs() < DEDUP)
        }) {
            continue;
        }
        if dist.abs() <= btol * (1.0 + max_abs(&u)) {
            return Err(Error::BoundaryZero { location: point });
        }
        zeros.push(classify(field, u, res)?);
    }
    zeros.sort_by(|a, b| {
        a.location
            .iter()
            .zip(&b.location)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(zeros)
}

fn sign(v: f64) -> i32 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// `[sign F(b) - sign F(a)] / 2` on an interval.
pub fn endpoint_degree<F: VectorField + ?Sized>(field: &F, a: f64, b: f64) -> Result<i32> {
    let fa = field.eval(&[a])?[0];
    let fb = field.eval(&[b])?[0];
    if fa == 0.0 {
        return Err(Error::BoundaryZero { location: field.point(&[a])? });
    }
    if fb == 0.0 {
        return Err(Error::BoundaryZero { location: field.point(&[b])? });
    }
    Ok((sign(fb) - sign(fa)) / 2)
}

/// Winding number of `F` along the counterclockwise boundary of a 2-box.
pub fn winding_degree<F: VectorField + ?Sized>(field: &F, lo: &[f64], hi: &[f64]) -> Result<i32> {
    let corners = [
        [lo[0], lo[1]],
        [hi[0], lo[1]],
        [hi[0], hi[1]],
        [lo[0], hi[1]],
    ];
    let scale = {
        let mut m = 0.0f64;
        for c in &corners {
            m = m.max(max_abs(&field.eval(c)?));
        }
        m.max(1e-300)
    };
    let mut total = 0.0;
    for e in 0..4 {
        let a = corners[e];
        let b = corners[(e + 1) % 4];
        let pt = |s: f64| [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
        let angle_at = |s: f64| -> Result<f64> {
            let p = pt(s);
            let v = field.eval(&p)?;
            if v[0].hypot(v[1]) < 1e-12 * scale {
                return Err(Error::BoundaryZero { location: field.point(&p)? });
            }
            Ok(v[1].atan2(v[0]))
        };
        let segments = 64;
        let mut stack = Vec::new();
        for i in (0..segments).rev() {
            let s0 = i as f64 / segments as f64;
            let s1 = (i + 1) as f64 / segments as f64;
            stack.push((s0, s1, 0usize));
        }
        while let Some((s0, s1, depth)) = stack.pop() {
            let d = wrap(angle_at(s1)? - angle_at(s0)?);
            if d.abs() > 0.5 && depth < 40 {
                let mid = 0.5 * (s0 + s1);
                stack.push((mid, s1, depth + 1));
                stack.push((s0, mid, depth + 1));
            } else {
                total += d;
            }
        }
    }
    Ok((total / (2.0 * PI)).round() as i32)
}

fn wrap(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    a
}

/// Sign-sum degree with the endpoint (`d = 1`) or winding (`d = 2`) oracle.
pub fn degree_in<F: VectorField + ?Sized>(
    field: &F,
    lo: &[f64],
    hi: &[f64],
    grid: usize,
    tol: f64,
    label: String,
) -> Result<DegreeResult> {
    let zeros = find_zeros_in(field, lo, hi, grid, tol)?;
    if let Some(z) = zeros.iter().find(|z| z.degenerate) {
        return Err(Error::DegenerateZero {
            location: z.location.clone(),
            margin: z.regularity_margin,
        });
    }
    let value: i32 = zeros.iter().map(|z| z.sign).sum();
    let oracle = match field.dim() {
        1 => Some((DegreeMethod::Endpoint, endpoint_degree(field, lo[0], hi[0])?)),
        2 => Some((DegreeMethod::Winding, winding_degree(field, lo, hi)?)),
        _ => None,
    };
    if let Some((_, o)) = oracle {
        if o != value {
            return Err(Error::DegreeMismatch { sign_sum: value, oracle: o });
        }
    }
    Ok(DegreeResult {
        value,
        zeros,
        region: label,
        method: DegreeMethod::SignSum,
        oracle,
    })
}

/// Zeros of `w` in a Euclidean box (unconstrained) or a chart box.
pub fn find_zeros(w: &AveragedField<'_>, region: &Region, grid: Option<usize>, tol: f64) -> Result<Vec<ZeroRecord>> {
    let grid = grid.unwrap_or_else(|| default_grid(region.dim()));
    match region {
        Region::Box { lo, hi } => {
            if w.system().is_constrained() {
                return Err(Error::Invalid(
                    "constrained systems need a chart region (chart:<name>:lo:hi)".into(),
                ));
            }
            find_zeros_in(w, lo, hi, grid, tol)
        }
        Region::Chart { name, lo, hi } => {
            let chart = chart_for(w, name)?;
            find_zeros_in(&w.in_chart(chart), lo, hi, grid, tol)
        }
    }
}

pub fn brouwer_degree(w: &AveragedField<'_>, region: &Region, grid: Option<usize>, tol: f64) -> Result<DegreeResult> {
    degree_signed(w, region, grid, tol, false)
}

/// Degree of `w` or, with `negate`, of `-w`.
pub fn degree_signed(
    w: &AveragedField<'_>,
    region: &Region,
    grid: Option<usize>,
    tol: f64,
    negate: bool,
) -> Result<DegreeResult> {
    let grid = grid.unwrap_or_else(|| default_grid(region.dim()));
    let label = region.to_string();
    match region {
        Region::Box { lo, hi } => {
            if w.system().is_constrained() {
                return Err(Error::Invalid(
                    "constrained systems need a chart region (chart:<name>:lo:hi)".into(),
                ));
            }
            if negate {
                degree_in(&Negated(w), lo, hi, grid, tol, label)
            } else {
                degree_in(w, lo, hi, grid, tol, label)
            }
        }
        Region::Chart { name, lo, hi } => {
            let chart = chart_for(w, name)?;
            if negate {
                degree_in(&Negated(w.in_chart(chart)), lo, hi, grid, tol, label)
            } else {
                degree_in(&w.in_chart(chart), lo, hi, grid, tol, label)
            }
        }
    }
}

fn chart_for<'a>(w: &AveragedField<'a>, name: &str) -> Result<&'a crate::system::Chart> {
    let sys = w.system();
    let chart = sys.chart(name).ok_or_else(|| {
        Error::Invalid(format!(
            "scenario `{}` has no chart `{name}` (charts: {})",
            sys.name,
            sys.charts.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(", ")
        ))
    })?;
    Ok(chart)
}
