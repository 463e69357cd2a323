use super::{scenario, PerturbedCoupledSystem};
use crate::error::{Error, Result};

const SOURCES: [(&str, &str); 5] = [
    ("nicexa", include_str!("../../scenarios/nicexa.json")),
    ("circle", include_str!("../../scenarios/circle.json")),
    ("dae-pendulum", include_str!("../../scenarios/dae-pendulum.json")),
    ("delay", include_str!("../../scenarios/delay.json")),
    ("springs", include_str!("../../scenarios/springs.json")),
];

pub fn builtin_names() -> Vec<&'static str> {
    SOURCES.iter().map(|(n, _)| *n).collect()
}

pub(crate) fn builtin_source(name: &str) -> Option<&'static str> {
    SOURCES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn builtin_scenario(name: &str) -> Result<PerturbedCoupledSystem> {
    let src = builtin_source(name).ok_or_else(|| {
        Error::Invalid(format!(
            "unknown scenario `{name}`; available: {}",
            builtin_names().join(", ")
        ))
    })?;
    scenario::load_scenario(src)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::Part;

    #[test]
    fn all_builtins_load() {
        for name in builtin_names() {
            let sys = builtin_scenario(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(sys.name, name);
        }
    }

    #[test]
    fn nicexa_shape() {
        let sys = builtin_scenario("nicexa").unwrap();
        assert_eq!((sys.k, sys.s), (1, 1));
        assert!(!sys.is_constrained());
        assert_eq!(sys.period, 2.0 * std::f64::consts::PI);
        assert_eq!(sys.a[0][0].to_string(), "-1.0");
        assert_eq!(sys.f1[0].to_string(), "-abs(y1 - x1)");
    }

    #[test]
    fn dae_pendulum_shape() {
        let sys = builtin_scenario("dae-pendulum").unwrap();
        assert_eq!((sys.k, sys.s, sys.manifold_dim()), (2, 5, 2));
        let q = [0.6, 0.8, -0.8 * 0.3, 0.6 * 0.3, 0.09];
        assert!(sys.constraint_violation(&q).unwrap() < 1e-15);
        assert_eq!(sys.constraint_rank(&q).unwrap(), 3);
        assert_eq!(sys.derived_values(0.5).unwrap(), vec![("mu".to_string(), 0.25)]);
    }

    #[test]
    fn springs_matrix() {
        let sys = builtin_scenario("springs").unwrap();
        let a = sys.a_matrix(0.3).unwrap();
        assert_eq!(a[(1, 0)], -1.0);
        assert_eq!(a[(1, 1)], -0.5);
        let mut out = [0.0; 2];
        sys.eval_part(Part::F2, 0.0, &[1.0, 0.0], &[0.0, 2.0], 0.0, &mut out).unwrap();
        assert_eq!(out, [2.0, 2.0]);
    }

    #[test]
    fn unknown_lists_names() {
        let err = builtin_scenario("pendulum").unwrap_err().to_string();
        assert!(err.contains("nicexa") && err.contains("springs"));
    }
}
