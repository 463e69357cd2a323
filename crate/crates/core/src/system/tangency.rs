use super::{Part, PerturbedCoupledSystem};
use crate::error::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangencyReport {
    pub samples: usize,
    pub max_normal_component: f64,
    pub pass: bool,
}

/// Sample `(t, x, q, lambda)` with `q` on `M` and measure how far `f2`
/// leaves the tangent space. Unconstrained systems pass trivially.
pub fn check_tangency(sys: &PerturbedCoupledSystem, n_samples: usize, tol: f64) -> Result<TangencyReport> {
    let mut worst = 0.0f64;
    if sys.is_constrained() {
        let points = sys.probe_points(n_samples)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0x7a6e_0002);
        let mut f2 = vec![0.0; sys.s];
        for q in points {
            let t = rng.gen_range(0.0..sys.period);
            let x: Vec<f64> = (0..sys.k).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let lambda = rng.gen_range(0.0..1.0);
            sys.eval_part(Part::F2, t, &x, &q, lambda, &mut f2)?;
            worst = worst.max(sys.normal_component(&q, &f2)?);
        }
    }
    Ok(TangencyReport {
        samples: n_samples,
        max_normal_component: worst,
        pass: worst < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{builtin_scenario, load_scenario, emit_scenario};

    #[test]
    fn builtins_are_tangent() {
        for name in crate::system::builtin_names() {
            let sys = builtin_scenario(name).unwrap();
            let rep = check_tangency(&sys, 100, 1e-6).unwrap();
            assert!(rep.pass, "{name}: {rep:?}");
        }
        let circle = builtin_scenario("circle").unwrap();
        assert!(check_tangency(&circle, 100, 1e-8).unwrap().pass);
    }

    #[test]
    fn radial_field_fails() {
        let sys = builtin_scenario("circle").unwrap();
        let mut doc = emit_scenario(&sys);
        doc["f2"] = serde_json::json!(["y1", "y2"]);
        let bad = load_scenario(&doc.to_string()).unwrap();
        let rep = check_tangency(&bad, 100, 1e-8).unwrap();
        assert!(!rep.pass);
        assert!((rep.max_normal_component - 1.0).abs() < 1e-12);
    }
}
