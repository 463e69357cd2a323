//! Lift branch points to periodic orbits and plot one of them as SVG.

use harmonic::average::averaged_field;
use harmonic::branch::{branch_to_triples, continue_branch, seed_branches, ContinuationOptions};
use harmonic::io::{render_svg, Table, PlotSpec};
use harmonic::linear::{fundamental_matrix, periodic_solution_linear};
use harmonic::system::builtin_scenario;

fn main() -> harmonic::Result<()> {
    let sys = builtin_scenario("nicexa")?;
    let m = fundamental_matrix(&sys, 1e-12)?;
    let xhat = periodic_solution_linear(&sys, &m, 1e-12)?;
    let w = averaged_field(&sys, &xhat, 16)?;
    let set = seed_branches(&sys, &"-2:2".parse()?, &xhat, &w)?;
    let opts = ContinuationOptions {
        lambda_max: 0.3,
        ..Default::default()
    };
    let branch = continue_branch(&sys, &set.seeds[0], &opts)?;
    let triples = branch_to_triples(&sys, &branch, 10)?;
    let mut table = Table::new(["point_index", "t", "x1", "y1"]);
    for (i, tr) in triples.iter().enumerate() {
        println!("lambda {:.4}: closure residual {:.1e}", tr.lambda, tr.residual);
        for (t, z) in tr.sample(64) {
            table.push(vec![i as f64, t, z[0], z[1]]);
        }
    }
    let mut spec = PlotSpec::new("x1", "y1");
    spec.group = Some("point_index".into());
    spec.title = Some("orbits along the branch".into());
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("orbits.svg");
    harmonic::io::atomic_write(&path, render_svg(&table, &spec)?.as_bytes())?;
    println!("wrote {} ({} rows)", path.display(), table.rows.len());
    Ok(())
}
