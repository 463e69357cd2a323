//! Monodromy, non-resonance and the periodic solution of the linear part.

use harmonic::linear::{check_nonresonance, fundamental_matrix, periodic_solution_linear};
use harmonic::system::builtin_scenario;

fn main() -> harmonic::Result<()> {
    let sys = builtin_scenario("nicexa")?;
    let m = fundamental_matrix(&sys, 1e-12)?;
    println!("Phi(T) = {}", m.phi_t[(0, 0)]);
    println!("det(I - Phi(T)) = {:.6}  margin {:.3e}", m.det_i_minus_phi_t, check_nonresonance(&m));
    println!("Liouville residual {:.1e}", m.liouville_residual());
    let xhat = periodic_solution_linear(&sys, &m, 1e-12)?;
    for (t, x) in xhat.sample_uniform(8) {
        let exact = (t.sin() - t.cos()) / 20.0 + 1.0;
        println!("t={t:.4}  x̂={:.12}  closed form {exact:.12}", x[0]);
    }
    Ok(())
}
