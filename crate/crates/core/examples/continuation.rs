//! Trace the branch of periodic solutions emanating from the zero of `w`.

use harmonic::average::averaged_field;
use harmonic::branch::{continue_all, seed_branches, ContinuationOptions};
use harmonic::linear::{fundamental_matrix, periodic_solution_linear};
use harmonic::system::builtin_scenario;

fn main() -> harmonic::Result<()> {
    let sys = builtin_scenario("nicexa")?;
    let m = fundamental_matrix(&sys, 1e-12)?;
    let xhat = periodic_solution_linear(&sys, &m, 1e-12)?;
    let w = averaged_field(&sys, &xhat, 16)?;
    let set = seed_branches(&sys, &"-2:2".parse()?, &xhat, &w)?;
    println!("degree {:?}, {} seed(s)", set.degree, set.seeds.len());
    let opts = ContinuationOptions {
        lambda_max: 0.75,
        ..Default::default()
    };
    for b in continue_all(&sys, &set.seeds, &opts)? {
        println!(
            "seed {}: {} points, {} , max residual {:.1e}, rk4 {:.1e}",
            b.seed.id,
            b.points.len(),
            b.termination,
            b.max_residual(),
            b.max_rk4_residual()
        );
        for pt in b.points.iter().step_by(10) {
            let r = &pt.record;
            println!("  lambda {:.4}  p {:.6}  q {:.6}  index {:?}", r.lambda, r.p[0], r.q[0], r.index);
        }
    }
    Ok(())
}
