//! Built-in scenarios and a user scenario loaded from JSON.

use harmonic::system::{builtin_names, builtin_scenario, emit_scenario, load_scenario, scenario_hash};

fn main() -> harmonic::Result<()> {
    for name in builtin_names() {
        let sys = builtin_scenario(name)?;
        println!(
            "{name:14} k={} s={} dim M={} T={:.4} region={}",
            sys.k,
            sys.s,
            sys.manifold_dim(),
            sys.period,
            sys.region.as_deref().unwrap_or("-")
        );
    }
    let sys = load_scenario(
        r#"{"name": "forced", "T": "2pi", "k": 1, "s": 1,
            "defaults": {"a": 2},
            "A": [["-a"]], "c": ["cos(t)"], "f1": ["0"], "f2": ["x1 - y1^3"]}"#,
    )?;
    println!("{}", serde_json::to_string_pretty(&emit_scenario(&sys))?);
    println!("sha256 {}", scenario_hash(&sys));
    Ok(())
}
