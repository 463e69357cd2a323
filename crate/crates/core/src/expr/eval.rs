use super::ast::{BinOp, ExprAst, Func, Node};
use std::collections::{BTreeMap, HashMap};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    UnboundVariable(String),
    /// An operation left its domain (log of a non-positive number, division
    /// by zero, overflow to infinity, ...).
    Domain { op: &'static str, detail: String },
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::UnboundVariable(name) => write!(f, "unbound variable `{name}`"),
            EvalError::Domain { op, detail } => write!(f, "domain error in {op}: {detail}"),
        }
    }
}

impl std::error::Error for EvalError {}

/// Variable lookup used by [`ExprAst::eval`].
pub trait Env {
    fn lookup(&self, name: &str) -> Option<f64>;
}

impl<S: std::borrow::Borrow<str> + std::hash::Hash + Eq> Env for HashMap<S, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl<S: std::borrow::Borrow<str> + Ord> Env for BTreeMap<S, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Env for [(&str, f64)] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

impl<const N: usize> Env for [(&str, f64); N] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.as_slice().lookup(name)
    }
}

fn finite(op: &'static str, value: f64, args: &[f64]) -> Result<f64, EvalError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EvalError::Domain {
            op,
            detail: format!("arguments {args:?} give {value}"),
        })
    }
}

pub(crate) fn apply_binary(op: BinOp, a: f64, b: f64) -> Result<f64, EvalError> {
    match op {
        BinOp::Add => finite("+", a + b, &[a, b]),
        BinOp::Sub => finite("-", a - b, &[a, b]),
        BinOp::Mul => finite("*", a * b, &[a, b]),
        BinOp::Div => {
            if b == 0.0 {
                return Err(EvalError::Domain {
                    op: "/",
                    detail: format!("division of {a} by zero"),
                });
            }
            finite("/", a / b, &[a, b])
        }
        BinOp::Pow => finite("^", a.powf(b), &[a, b]),
    }
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn apply_unary(func: Func, a: f64) -> Result<f64, EvalError> {
    let name = func.name();
    match func {
        Func::Sin => finite(name, a.sin(), &[a]),
        Func::Cos => finite(name, a.cos(), &[a]),
        Func::Tan => finite(name, a.tan(), &[a]),
        Func::Exp => finite(name, a.exp(), &[a]),
        Func::Log => {
            if a <= 0.0 {
                return Err(EvalError::Domain {
                    op: name,
                    detail: format!("log of non-positive {a}"),
                });
            }
            finite(name, a.ln(), &[a])
        }
        Func::Sqrt => {
            if a < 0.0 {
                return Err(EvalError::Domain {
                    op: name,
                    detail: format!("sqrt of negative {a}"),
                });
            }
            finite(name, a.sqrt(), &[a])
        }
        Func::Abs => finite(name, a.abs(), &[a]),
        Func::Sign => finite(name, sign(a), &[a]),
        Func::Pow | Func::Atan2 => unreachable!("binary function applied to one argument"),
    }
}

pub(crate) fn apply_binary_func(func: Func, a: f64, b: f64) -> Result<f64, EvalError> {
    match func {
        Func::Pow => finite("pow", a.powf(b), &[a, b]),
        Func::Atan2 => finite("atan2", a.atan2(b), &[a, b]),
        _ => unreachable!("unary function applied to two arguments"),
    }
}

fn eval_node<E: Env + ?Sized>(node: &Node, env: &E) -> Result<f64, EvalError> {
    match node {
        Node::Num(v) => Ok(*v),
        Node::Const(c) => Ok(c.value()),
        Node::Var(name) => env
            .lookup(name)
            .ok_or_else(|| EvalError::UnboundVariable(name.clone())),
        Node::Neg(inner) => Ok(-eval_node(inner, env)?),
        Node::Binary(op, l, r) => {
            let a = eval_node(l, env)?;
            let b = eval_node(r, env)?;
            apply_binary(*op, a, b)
        }
        Node::Call(func, args) => match args.as_slice() {
            [a] => apply_unary(*func, eval_node(a, env)?),
            [a, b] => {
                let a = eval_node(a, env)?;
                let b = eval_node(b, env)?;
                apply_binary_func(*func, a, b)
            }
            _ => unreachable!("parser enforces arity"),
        },
    }
}

impl ExprAst {
    /// Evaluate against a name → value environment.
    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> Result<f64, EvalError> {
        eval_node(self.root(), env)
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::parse_expression;
    use std::f64::consts::PI;

    #[test]
    fn precedence_forced_value() {
        let ast = parse_expression("2+3*4").unwrap();
        assert_eq!(ast.eval(&[]).unwrap(), 14.0);
    }

    #[test]
    fn product_with_sine() {
        let ast = parse_expression("sin(t)*x1").unwrap();
        assert_eq!(ast.eval(&[("t", PI / 2.0), ("x1", 2.0)]).unwrap(), 2.0);
    }

    #[test]
    fn circle_field_component_at_north() {
        let ast = parse_expression("z*y").unwrap();
        assert_eq!(ast.eval(&[("z", 0.0), ("y", 1.0)]).unwrap(), 0.0);
    }

    #[test]
    fn exp_log_inverse() {
        let ast = parse_expression("exp(log(x))").unwrap();
        let v = ast.eval(&[("x", 3.7)]).unwrap();
        assert!((v - 3.7).abs() <= 1e-15 * 3.7 + 1e-15);
    }

    #[test]
    fn unbound_variable_is_named() {
        let ast = parse_expression("a + b").unwrap();
        let err = ast.eval(&[("a", 1.0)]).unwrap_err();
        assert_eq!(err, super::EvalError::UnboundVariable("b".into()));
    }

    #[test]
    fn domain_errors_are_reported() {
        for src in ["log(0)", "log(-1)", "sqrt(-2)", "1/0", "(-8)^(1/3)", "exp(1000)", "0^(-1)"] {
            let ast = parse_expression(src).unwrap();
            assert!(
                matches!(ast.eval(&[]), Err(super::EvalError::Domain { .. })),
                "{src} should fail"
            );
        }
    }

    #[test]
    fn sign_of_zero_is_zero() {
        let ast = parse_expression("sign(x)").unwrap();
        assert_eq!(ast.eval(&[("x", 0.0)]).unwrap(), 0.0);
        assert_eq!(ast.eval(&[("x", -3.0)]).unwrap(), -1.0);
    }

    #[test]
    fn nicexa_integrand_variables() {
        let ast = parse_expression("-(1/2 + q + 2*xh*sin(t))").unwrap();
        let vars: Vec<_> = ast.variables().into_iter().collect();
        assert_eq!(vars, ["q", "t", "xh"]);
        let v = ast.eval(&[("q", -0.55), ("xh", 0.0), ("t", 0.0)]).unwrap();
        assert!((v - 0.05).abs() < 1e-15);
    }
}
