//! Every invariant check on each built-in scenario, as `harmonic verify` runs them.

use harmonic::cli::verify_scenario;
use harmonic::system::{builtin_names, builtin_scenario};

fn main() -> harmonic::Result<()> {
    for name in builtin_names() {
        println!("{name}");
        for c in verify_scenario(&builtin_scenario(name)?)? {
            let status = if c.skipped { "skip" } else if c.pass { "ok" } else { "FAIL" };
            println!("  {status:4} {:24} {}", c.name, c.detail);
        }
    }
    Ok(())
}
