//! Fixed points of the translation operator and the index identity.

use harmonic::average::Region;
use harmonic::poincare::{find_fixed_point, index_formula_check, FixedPointOptions, IndexOptions};
use harmonic::system::builtin_scenario;

fn main() -> harmonic::Result<()> {
    let sys = builtin_scenario("nicexa")?;
    let r = find_fixed_point(&sys, 0.05, &[0.95], &[-0.55], &FixedPointOptions::default())?;
    println!(
        "lambda 0.05: p={:?} q={:?} residual {:.1e} index {:?}",
        r.p, r.q, r.residual, r.index
    );
    let v: Region = "-2:2".parse()?;
    for (lo, hi) in [(0.0, 2.0), (2.0, 3.0)] {
        let rep = index_formula_check(&sys, &[lo], &[hi], &v, &[0.01, 0.05, 0.1], &IndexOptions::default())?;
        for row in &rep.rows {
            println!(
                "U=[{lo},{hi}] lambda {:.2}: |sum ind| = {}  1_U(x̂(0)) |deg w| = {}  {}",
                row.lambda,
                row.lhs,
                row.rhs,
                if row.holds { "ok" } else { "MISMATCH" }
            );
        }
    }
    Ok(())
}
