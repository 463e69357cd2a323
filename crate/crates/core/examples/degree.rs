//! Averaged field on the circle, its zeros and degrees on chart boxes.

use harmonic::average::{averaged_field, brouwer_degree, Region};
use harmonic::linear::{fundamental_matrix, periodic_solution_linear};
use harmonic::system::builtin_scenario;

fn main() -> harmonic::Result<()> {
    let sys = builtin_scenario("circle")?;
    let m = fundamental_matrix(&sys, 1e-12)?;
    let xhat = periodic_solution_linear(&sys, &m, 1e-12)?;
    let w = averaged_field(&sys, &xhat, 16)?;
    println!("w(0.6, 0.8) = {:?}", w.eval(&[0.6, 0.8])?);
    for region in ["chart:theta:-1.5:4.6", "chart:theta:1.6:7.8", "chart:theta:0:2pi"] {
        let region: Region = region.parse()?;
        let d = brouwer_degree(&w, &region, None, 1e-12)?;
        let zeros: Vec<_> = d.zeros.iter().map(|z| (z.location.clone(), z.sign)).collect();
        println!("deg(w, {region}) = {:2}   oracle {:?}   zeros {zeros:?}", d.value, d.oracle);
    }
    Ok(())
}
