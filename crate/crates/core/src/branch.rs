//! Branches of nontrivial starting triples `(lambda, p, q)` emanating from
//! the trivial points `(0, x̂(0), q*)` with `w(q*) = 0`, traced by
//! pseudo-arclength continuation, and their lift to full periodic orbits.

use crate::average::{brouwer_degree, find_zeros, AveragedField, Region, ZeroRecord};
use crate::error::{Error, Result};
use crate::linear::PeriodicTrajectory;
use crate::poincare::{
    finish_record, integrate_unscaled, newton_fixed, region_coords, rk4_residual, scaled_eval, FixedPointOptions,
    FixedPointRecord, Model,
};
use crate::system::{transport_basis, PerturbedCoupledSystem};
use nalgebra::{DMatrix, DVector};
use std::fmt;

/// Points whose state exceeds this are treated as having left every compact set.
const BLOW_UP_NORM: f64 = 1e8;
/// Independent fixed-step re-verification must reach this.
pub const RK4_ACCEPT: f64 = 1e-6;
/// Steps adapt so that the distance between predictor and corrected point
/// stays near this.
const PREDICTOR_TARGET: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct BranchSeed {
    pub id: usize,
    pub zero: ZeroRecord,
    /// `x̂(0)`.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Unit tangent `(lambda, p, q)` with `q` in ambient coordinates
    /// (tangent to `M`); the lambda component is positive.
    pub tangent: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SeedSet {
    pub seeds: Vec<BranchSeed>,
    /// `deg(w, region)` when defined.
    pub degree: Option<i32>,
    /// Set when the degree is zero or undefined, so no branch is guaranteed.
    pub guarantee_void: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    LambdaMaxReached,
    LeftRegion,
    StepFailure,
    BlowUp,
    ClosedLoop,
    /// Came back to `lambda = 0` away from the seed.
    TrivialPointReached,
    MaxPointsReached,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::LambdaMaxReached => "lambda_max_reached",
            Termination::LeftRegion => "left_region",
            Termination::StepFailure => "step_failure",
            Termination::BlowUp => "blow_up",
            Termination::ClosedLoop => "closed_loop",
            Termination::TrivialPointReached => "trivial_point_reached",
            Termination::MaxPointsReached => "max_points_reached",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub record: FixedPointRecord,
    /// Arclength from the seed.
    pub arclength: f64,
    /// `max |P(z) - z|` by fixed-step RK4 with `h = 1e-4 T`.
    pub rk4_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub seed: BranchSeed,
    /// The seed first, then points with `lambda > 0`.
    pub points: Vec<BranchPoint>,
    pub termination: Termination,
    pub arclength: f64,
    /// The second trivial point when the branch returns to `lambda = 0`.
    pub trivial_end: Option<FixedPointRecord>,
    pub warnings: Vec<String>,
}

impl Branch {
    pub fn max_residual(&self) -> f64 {
        self.points.iter().map(|p| p.record.residual).fold(0.0, f64::max)
    }

    pub fn max_rk4_residual(&self) -> f64 {
        self.points.iter().map(|p| p.rk4_residual).fold(0.0, f64::max)
    }

    pub fn lambda_range(&self) -> (f64, f64) {
        self.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.record.lambda), b.max(p.record.lambda))
        })
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationOptions {
    pub lambda_max: f64,
    pub step0: f64,
    pub step_min: f64,
    pub step_max: f64,
    pub max_points: usize,
    /// Corrector tolerance on the scaled residual.
    pub tol: f64,
    pub flow_tol: f64,
    pub max_corrector_iter: usize,
    /// Branch stops once `q` leaves this region.
    pub region: Option<Region>,
    /// Branch stops once `p` leaves this box.
    pub p_bounds: Option<(Vec<f64>, Vec<f64>)>,
    /// Skip the RK4 re-verification (it dominates the cost on large systems).
    pub verify_rk4: bool,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            lambda_max: 1.0,
            step0: 1e-2,
            step_min: 1e-6,
            step_max: 0.1,
            max_points: 10_000,
            tol: 1e-10,
            flow_tol: 1e-12,
            max_corrector_iter: 8,
            region: None,
            p_bounds: None,
            verify_rk4: true,
        }
    }
}

impl ContinuationOptions {
    fn fixed(&self) -> FixedPointOptions {
        FixedPointOptions {
            tol: self.tol,
            flow_tol: self.flow_tol,
            max_iter: 25,
        }
    }
}

/// `[dG/dlambda | dG/d(p, xi)]`, the extended Jacobian in `(lambda, p, xi)` order.
fn extended_jacobian(dg: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = dg.shape();
    let mut out = DMatrix::zeros(rows, cols);
    out.set_column(0, &dg.column(cols - 1));
    out.view_mut((0, 1), (rows, cols - 1)).copy_from(&dg.columns(0, cols - 1));
    out
}

/// Solve `[K; b^T] t = [0; 1]`, normalized.
fn bordered_tangent(k: &DMatrix<f64>, border: &DVector<f64>) -> Option<DVector<f64>> {
    let n = k.ncols();
    let mut m = DMatrix::zeros(n, n);
    m.view_mut((0, 0), (n - 1, n)).copy_from(k);
    m.set_row(n - 1, &border.transpose());
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let t = m.lu().solve(&rhs)?;
    let norm = t.norm();
    (norm.is_finite() && norm > 0.0).then(|| t / norm)
}

/// Chart tangent `(lambda, p, xi)` to ambient `(lambda, p, q)`.
fn to_ambient(t: &DVector<f64>, k: usize, basis: &DMatrix<f64>) -> Vec<f64> {
    let d = basis.ncols();
    let tq = basis * t.rows(1 + k, d);
    t.rows(0, 1 + k).iter().chain(tq.iter()).copied().collect()
}

/// Ambient tangent to chart coordinates at `basis`, normalized.
fn to_chart(t: &[f64], k: usize, basis: &DMatrix<f64>) -> DVector<f64> {
    let d = basis.ncols();
    let tq = DVector::from_column_slice(&t[1 + k..]);
    let xi = basis.transpose() * tq;
    let mut v = DVector::zeros(1 + k + d);
    for i in 0..1 + k {
        v[i] = t[i];
    }
    for i in 0..d {
        v[1 + k + i] = xi[i];
    }
    let n = v.norm();
    v / n
}

fn seed_tangent(sys: &PerturbedCoupledSystem, p: &[f64], q: &[f64], flow_tol: f64) -> Result<Vec<f64>> {
    let basis = sys.tangent_basis(q)?;
    let ev = scaled_eval(Model::Full(sys), 0.0, p, q, &basis, flow_tol, true)?;
    let kx = extended_jacobian(ev.dg.as_ref().unwrap());
    let mut e = DVector::zeros(kx.ncols());
    e[0] = 1.0;
    let t = bordered_tangent(&kx, &e).ok_or_else(|| Error::DegenerateZero {
        location: q.to_vec(),
        margin: 0.0,
    })?;
    Ok(to_ambient(&t, sys.k, &basis))
}

/// One seed per regular zero of `w` in `region`; degenerate zeros are
/// skipped with a warning and a zero or undefined degree voids the guarantee.
pub fn seed_branches(
    sys: &PerturbedCoupledSystem,
    region: &Region,
    xhat: &PeriodicTrajectory,
    w: &AveragedField<'_>,
) -> Result<SeedSet> {
    let mut warnings = Vec::new();
    let degree = match brouwer_degree(w, region, None, 1e-12) {
        Ok(d) => Some(d.value),
        Err(e @ (Error::DegenerateZero { .. } | Error::DegreeMismatch { .. } | Error::BoundaryZero { .. })) => {
            warnings.push(format!("degree undefined: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    if degree == Some(0) {
        warnings.push(format!("deg(w, {region}) = 0: no branch is guaranteed"));
    }
    let zeros = match find_zeros(w, region, None, 1e-12) {
        Ok(z) => z,
        Err(Error::BoundaryZero { location }) => {
            warnings.push(format!("zero at {location:?} lies on the region boundary"));
            return Ok(SeedSet {
                seeds: Vec::new(),
                degree,
                guarantee_void: true,
                warnings,
            });
        }
        Err(e) => return Err(e),
    };
    let p = xhat.initial_value().to_vec();
    let mut seeds = Vec::new();
    for zero in zeros {
        if zero.degenerate {
            warnings.push(format!("degenerate zero at {:?} skipped", zero.location));
            continue;
        }
        let q = zero.location.clone();
        let tangent = seed_tangent(sys, &p, &q, 1e-12)?;
        seeds.push(BranchSeed {
            id: seeds.len(),
            zero,
            p: p.clone(),
            q,
            tangent,
        });
    }
    Ok(SeedSet {
        seeds,
        degree,
        guarantee_void: !matches!(degree, Some(d) if d != 0),
        warnings,
    })
}

/// A converged corrector step.
struct Corrected {
    record: FixedPointRecord,
    /// Next tangent, ambient.
    tangent: Vec<f64>,
    /// Distance from the predicted to the corrected point.
    correction: f64,
}

enum StepOutcome {
    Done(Corrected),
    Rejected,
    BlowUp,
}

fn distance(a_lambda: f64, a_p: &[f64], a_q: &[f64], b: &FixedPointRecord) -> f64 {
    let mut s = (a_lambda - b.lambda).powi(2);
    for (x, y) in a_p.iter().zip(&b.p).chain(a_q.iter().zip(&b.q)) {
        s += (x - y).powi(2);
    }
    s.sqrt()
}

fn is_blow_up(e: &Error) -> bool {
    matches!(e, Error::BlowUp { .. })
}

/// Predictor along `tangent` by `h`, then Newton in `(lambda, p, xi)` with
/// corrections orthogonal to the tangent.
fn predictor_corrector(
    model: Model<'_>,
    from: &FixedPointRecord,
    tangent: &[f64],
    h: f64,
    opts: &ContinuationOptions,
) -> Result<StepOutcome> {
    let sys = model.sys();
    let k = sys.k;
    let mut lambda = from.lambda + h * tangent[0];
    let mut p: Vec<f64> = from.p.iter().zip(&tangent[1..1 + k]).map(|(a, t)| a + h * t).collect();
    let moved: Vec<f64> = from.q.iter().zip(&tangent[1 + k..]).map(|(a, t)| a + h * t).collect();
    let Ok(mut q) = sys.project(&moved) else { return Ok(StepOutcome::Rejected) };
    let mut basis = transport_basis(sys, &q, &from.basis)?;
    let d = basis.ncols();
    let (lambda0, p0, q0) = (lambda, p.clone(), q.clone());
    let tau = to_chart(tangent, k, &basis);
    let mut last = f64::INFINITY;
    for it in 0..=opts.max_corrector_iter {
        let ev = match scaled_eval(model, lambda, &p, &q, &basis, opts.flow_tol, true) {
            Ok(ev) => ev,
            Err(e) if is_blow_up(&e) => return Ok(StepOutcome::BlowUp),
            Err(Error::Integration { .. } | Error::Projection(_)) => return Ok(StepOutcome::Rejected),
            Err(e) => return Err(e),
        };
        let norm = ev.norm();
        if !norm.is_finite() || (it > 1 && norm > last) {
            return Ok(StepOutcome::Rejected);
        }
        last = norm;
        let kx = extended_jacobian(ev.dg.as_ref().unwrap());
        if norm < opts.tol {
            let Some(t) = bordered_tangent(&kx, &to_chart(tangent, k, &basis)) else {
                return Ok(StepOutcome::Rejected);
            };
            let next = to_ambient(&t, k, &basis);
            let record = finish_record(model, lambda, p, q, basis, &ev, it)?;
            let correction = distance(lambda0, &p0, &q0, &record);
            return Ok(StepOutcome::Done(Corrected {
                record,
                tangent: next,
                correction,
            }));
        }
        if it == opts.max_corrector_iter {
            break;
        }
        let n = 1 + k + d;
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (n - 1, n)).copy_from(&kx);
        m.set_row(n - 1, &tau.transpose());
        let mut rhs = DVector::zeros(n);
        rhs.rows_mut(0, n - 1).copy_from(&(-&ev.g));
        let Some(delta) = m.lu().solve(&rhs) else { return Ok(StepOutcome::Rejected) };
        lambda += delta[0];
        for i in 0..k {
            p[i] += delta[1 + i];
        }
        let xi = delta.rows(1 + k, d).into_owned();
        let moved: Vec<f64> = (DVector::from_column_slice(&q) + &basis * xi).iter().copied().collect();
        match sys.project(&moved) {
            Ok(next) => q = next,
            Err(_) => return Ok(StepOutcome::Rejected),
        }
        basis = transport_basis(sys, &q, &basis)?;
        if lambda < -h {
            return Ok(StepOutcome::Rejected);
        }
        if p.iter().chain(&q).any(|v| !v.is_finite() || v.abs() > BLOW_UP_NORM) {
            return Ok(StepOutcome::BlowUp);
        }
    }
    Ok(StepOutcome::Rejected)
}

fn outside(sys: &PerturbedCoupledSystem, rec: &FixedPointRecord, opts: &ContinuationOptions) -> Result<bool> {
    if let Some((lo, hi)) = &opts.p_bounds {
        if rec.p.iter().zip(lo.iter().zip(hi)).any(|(x, (a, b))| x < a || x > b) {
            return Ok(true);
        }
    }
    if let Some(region) = &opts.region {
        match region_coords(sys, region, &rec.q)? {
            Some(c) => {
                if !region.contains(&c) {
                    return Ok(true);
                }
            }
            None => return Ok(true),
        }
    }
    Ok(false)
}

fn verify_point(model: Model<'_>, rec: &FixedPointRecord, opts: &ContinuationOptions) -> Result<f64> {
    if !opts.verify_rk4 {
        return Ok(f64::NAN);
    }
    rk4_residual(model, rec.lambda, &rec.p, &rec.q)
}

/// Trace the branch from `seed` until one of the termination conditions.
pub fn continue_branch(sys: &PerturbedCoupledSystem, seed: &BranchSeed, opts: &ContinuationOptions) -> Result<Branch> {
    if !(opts.step_min > 0.0 && opts.step_min <= opts.step0 && opts.step0 <= opts.step_max) {
        return Err(Error::Invalid(format!(
            "steps must satisfy 0 < step_min <= step0 <= step_max (got {}, {}, {})",
            opts.step_min, opts.step0, opts.step_max
        )));
    }
    if opts.lambda_max < 0.0 {
        return Err(Error::Invalid("lambda_max must be non-negative".into()));
    }
    let model = Model::Full(sys);
    let basis = sys.tangent_basis(&seed.q)?;
    let ev = scaled_eval(model, 0.0, &seed.p, &seed.q, &basis, opts.flow_tol, true)?;
    let seed_record = finish_record(model, 0.0, seed.p.clone(), seed.q.clone(), basis, &ev, 0)?;
    let seed_rk4 = verify_point(model, &seed_record, opts)?;
    let mut points = vec![BranchPoint {
        record: seed_record,
        arclength: 0.0,
        rk4_residual: seed_rk4,
    }];
    let mut warnings = Vec::new();
    let mut tangent = seed.tangent.clone();
    let mut h = opts.step0;
    let mut s = 0.0;
    let mut trivial_end = None;

    let termination = loop {
        let current = &points.last().unwrap().record;
        if current.lambda >= opts.lambda_max - 1e-14 {
            break Termination::LambdaMaxReached;
        }
        if points.len() >= opts.max_points {
            break Termination::MaxPointsReached;
        }
        if h < opts.step_min {
            break Termination::StepFailure;
        }
        let step = match predictor_corrector(model, current, &tangent, h, opts)? {
            StepOutcome::BlowUp => break Termination::BlowUp,
            StepOutcome::Rejected => {
                h *= 0.5;
                continue;
            }
            StepOutcome::Done(c) => c,
        };
        let rec = &step.record;
        let jump = distance(rec.lambda, &rec.p, &rec.q, current);
        let aligned: f64 = tangent.iter().zip(&step.tangent).map(|(a, b)| a * b).sum();
        if jump > 2.0 * h || aligned < 0.5 {
            h *= 0.5;
            continue;
        }
        if rec.lambda <= 0.0 {
            // back at lambda = 0: solve for the trivial point there
            let end = newton_fixed(model, 0.0, &rec.p, &rec.q, &opts.fixed())?;
            trivial_end = Some(end);
            break Termination::TrivialPointReached;
        }
        if rec.lambda > opts.lambda_max {
            // land exactly on lambda_max between the last two points
            let frac = (opts.lambda_max - current.lambda) / (rec.lambda - current.lambda);
            let p0: Vec<f64> = current.p.iter().zip(&rec.p).map(|(a, b)| a + frac * (b - a)).collect();
            let q0: Vec<f64> = current.q.iter().zip(&rec.q).map(|(a, b)| a + frac * (b - a)).collect();
            let landed = match newton_fixed(model, opts.lambda_max, &p0, &q0, &opts.fixed()) {
                Ok(r) => r,
                Err(_) => {
                    h *= 0.5;
                    continue;
                }
            };
            let rk4 = verify_point(model, &landed, opts)?;
            if rk4 >= RK4_ACCEPT {
                h *= 0.5;
                continue;
            }
            s += distance(landed.lambda, &landed.p, &landed.q, current);
            points.push(BranchPoint {
                record: landed,
                arclength: s,
                rk4_residual: rk4,
            });
            break Termination::LambdaMaxReached;
        }
        let rk4 = match verify_point(model, rec, opts) {
            Ok(r) => r,
            Err(e) if is_blow_up(&e) => break Termination::BlowUp,
            Err(e) => return Err(e),
        };
        if rk4 >= RK4_ACCEPT {
            h *= 0.5;
            continue;
        }
        if outside(sys, rec, opts)? {
            break Termination::LeftRegion;
        }
        if rec.index.is_none() {
            warnings.push(format!("index undefined at lambda = {} (eigenvalue near 1)", rec.lambda));
        }
        s += jump;
        let closes = points.len() > 3 && distance(rec.lambda, &rec.p, &rec.q, &points[1].record) < 0.5 * h;
        let Corrected {
            record,
            tangent: next,
            correction,
        } = step;
        points.push(BranchPoint {
            record,
            arclength: s,
            rk4_residual: rk4,
        });
        tangent = next;
        if closes {
            warnings.push("branch closed on itself".into());
            break Termination::ClosedLoop;
        }
        let factor = (PREDICTOR_TARGET / correction.max(1e-300)).sqrt().clamp(0.5, 2.0);
        h = (h * factor).clamp(opts.step_min, opts.step_max);
    };
    Ok(Branch {
        seed: seed.clone(),
        points,
        termination,
        arclength: s,
        trivial_end,
        warnings,
    })
}

/// [`continue_branch`] for every seed, concurrently, in seed order.
pub fn continue_all(sys: &PerturbedCoupledSystem, seeds: &[BranchSeed], opts: &ContinuationOptions) -> Result<Vec<Branch>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|seed| scope.spawn(move || continue_branch(sys, seed, opts)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Invalid("continuation thread panicked".into()))))
            .collect()
    })
}

/// A periodic solution `(lambda, x, y)`.
#[derive(Debug, Clone)]
pub struct TTriple {
    pub lambda: f64,
    pub orbit: PeriodicTrajectory,
    /// `max |orbit(T) - orbit(0)|`.
    pub residual: f64,
    /// `max |g(y(t))|` over the integrator's steps.
    pub max_constraint_violation: f64,
}

impl TTriple {
    pub fn sample(&self, n: usize) -> Vec<(f64, Vec<f64>)> {
        self.orbit.sample_uniform(n)
    }
}

/// Integrate the starting triple `(lambda, p, q)` over one period.
pub fn lift_starting_triple(sys: &PerturbedCoupledSystem, lambda: f64, p: &[f64], q: &[f64], tol: f64) -> Result<TTriple> {
    let traj = integrate_unscaled(Model::Full(sys), lambda, p, q, tol)?;
    let k = sys.k;
    let mut max_violation = 0.0f64;
    if sys.is_constrained() {
        for z in &traj.states {
            max_violation = max_violation.max(sys.constraint_violation(&z[k..])?);
        }
    }
    let end = traj.final_state();
    let residual = end
        .iter()
        .zip(p.iter().chain(q))
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let mut orbit = PeriodicTrajectory::new(traj, sys.period);
    orbit.residual = residual;
    Ok(TTriple {
        lambda,
        orbit,
        residual,
        max_constraint_violation: max_violation,
    })
}

/// Every `stride`-th point of the branch lifted to a periodic orbit.
pub fn branch_to_triples(sys: &PerturbedCoupledSystem, branch: &Branch, stride: usize) -> Result<Vec<TTriple>> {
    if branch.points.is_empty() {
        return Err(Error::Invalid("branch has no points".into()));
    }
    if stride == 0 {
        return Err(Error::Invalid("stride must be positive".into()));
    }
    branch
        .points
        .iter()
        .step_by(stride)
        .map(|pt| lift_starting_triple(sys, pt.record.lambda, &pt.record.p, &pt.record.q, 1e-12))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::average::averaged_field;
    use crate::linear::{fundamental_matrix, periodic_solution_linear};
    use crate::system::builtin_scenario;

    fn seeds_for(sys: &PerturbedCoupledSystem, region: &str) -> (SeedSet, PeriodicTrajectory) {
        let m = fundamental_matrix(sys, 1e-12).unwrap();
        let xhat = periodic_solution_linear(sys, &m, 1e-12).unwrap();
        let w = averaged_field(sys, &xhat, 16).unwrap();
        let set = seed_branches(sys, &region.parse().unwrap(), &xhat, &w).unwrap();
        (set, xhat)
    }

    #[test]
    fn nicexa_single_seed() {
        let sys = builtin_scenario("nicexa").unwrap();
        let (set, _) = seeds_for(&sys, "-2:2");
        assert_eq!(set.seeds.len(), 1);
        let s = &set.seeds[0];
        assert!((s.p[0] - 0.95).abs() < 1e-8 && (s.q[0] + 0.55).abs() < 1e-8);
        assert!(s.tangent[0] > 0.0);
        assert!(!set.guarantee_void);
        let (set, _) = seeds_for(&sys, "0:1");
        assert!(set.seeds.is_empty());
    }

    #[test]
    fn circle_two_seeds_degree_zero() {
        let sys = builtin_scenario("circle").unwrap();
        let (set, _) = seeds_for(&sys, "chart:theta:0:2pi");
        assert_eq!(set.seeds.len(), 2);
        assert_eq!(set.degree, Some(0));
        assert!(set.guarantee_void);
    }

    #[test]
    fn zero_lambda_max_gives_seed_only() {
        let sys = builtin_scenario("nicexa").unwrap();
        let (set, xhat) = seeds_for(&sys, "-2:2");
        let opts = ContinuationOptions {
            lambda_max: 0.0,
            ..Default::default()
        };
        let b = continue_branch(&sys, &set.seeds[0], &opts).unwrap();
        assert_eq!(b.points.len(), 1);
        assert_eq!(b.termination, Termination::LambdaMaxReached);
        let triples = branch_to_triples(&sys, &b, 1).unwrap();
        assert_eq!(triples.len(), 1);
        for (t, z) in triples[0].sample(50) {
            assert!((z[0] - xhat.eval(t)[0]).abs() < 1e-8);
            assert_eq!(z[1], b.seed.q[0]);
        }
    }

    #[test]
    fn nicexa_branch_short() {
        let sys = builtin_scenario("nicexa").unwrap();
        let (set, _) = seeds_for(&sys, "-2:2");
        let opts = ContinuationOptions {
            lambda_max: 0.2,
            ..Default::default()
        };
        let b = continue_branch(&sys, &set.seeds[0], &opts).unwrap();
        assert_eq!(b.termination, Termination::LambdaMaxReached);
        assert!((b.points.last().unwrap().record.lambda - 0.2).abs() < 1e-12);
        assert!(b.max_residual() < 1e-8 && b.max_rk4_residual() < RK4_ACCEPT);
        let first = &b.points[1].record;
        assert!(distance(0.0, &[0.95], &[-0.55], first) < 0.02);
    }

    #[test]
    fn circle_branch_stays_on_circle() {
        let sys = builtin_scenario("circle").unwrap();
        let (set, _) = seeds_for(&sys, "chart:theta:-1.5:4.6");
        assert_eq!(set.seeds.len(), 1);
        let opts = ContinuationOptions {
            lambda_max: 0.3,
            ..Default::default()
        };
        let b = continue_branch(&sys, &set.seeds[0], &opts).unwrap();
        assert_eq!(b.termination, Termination::LambdaMaxReached);
        for pt in &b.points {
            assert!((pt.record.q[0].hypot(pt.record.q[1]) - 1.0).abs() < 1e-8);
        }
        for tr in branch_to_triples(&sys, &b, 3).unwrap() {
            assert!(tr.max_constraint_violation < 1e-8);
            for (_, z) in tr.sample(100) {
                assert!((z[1].hypot(z[2]) - 1.0).abs() < 1e-8);
            }
        }
    }
}
