//! Randomized invariants: expression round trips and evaluation order,
//! scenario round trips, Liouville's formula, and degree oracles.

use harmonic::average::{endpoint_degree, find_zeros_in, winding_degree, FnField};
use harmonic::expr::{parse_expression, BinOp, Func, Layout, Node};
use harmonic::linear::{fundamental_matrix, periodic_solution_linear, LinearTimeMap};
use harmonic::system::{builtin_names, builtin_scenario, check_tangency, emit_scenario, load_scenario, Part};
use harmonic::Error;
use proptest::prelude::*;
use std::f64::consts::PI;

const VARS: [&str; 3] = ["a", "b", "t"];

fn leaf() -> impl Strategy<Value = Node> {
    prop_oneof![
        prop::sample::select(vec![0.5, 1.0, 2.0, 3.25, 0.001, 10.0, 1e-7]).prop_map(Node::Num),
        prop::sample::select(VARS.to_vec()).prop_map(|v| Node::Var(v.to_string())),
        Just(Node::Const(harmonic::expr::Constant::Pi)),
    ]
}

fn node() -> impl Strategy<Value = Node> {
    leaf().prop_recursive(5, 40, 3, |inner| {
        let ops = prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow]);
        let unary = prop::sample::select(vec![
            Func::Sin,
            Func::Cos,
            Func::Tan,
            Func::Exp,
            Func::Log,
            Func::Sqrt,
            Func::Abs,
            Func::Sign,
        ]);
        let binary = prop::sample::select(vec![Func::Pow, Func::Atan2]);
        prop_oneof![
            (ops, inner.clone(), inner.clone()).prop_map(|(op, l, r)| Node::Binary(op, Box::new(l), Box::new(r))),
            inner.clone().prop_map(|n| Node::Neg(Box::new(n))),
            (unary, inner.clone()).prop_map(|(f, a)| Node::Call(f, vec![a])),
            (binary, inner.clone(), inner).prop_map(|(f, a, b)| Node::Call(f, vec![a, b])),
        ]
    })
}

/// Independent evaluator working on the source text. `None` when any
/// intermediate value leaves the finite doubles.
struct Reference<'s> {
    src: &'s [u8],
    pos: usize,
    env: [(&'static str, f64); 3],
}

impl Reference<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos] == b' ' {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn ok(v: f64) -> Option<f64> {
        v.is_finite().then_some(v)
    }

    fn expr(&mut self) -> Option<Option<f64>> {
        let mut acc = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let r = self.term()?;
            acc = match (acc, r) {
                (Some(a), Some(b)) => Self::ok(if c == b'+' { a + b } else { a - b }),
                _ => None,
            };
        }
        Some(acc)
    }

    fn term(&mut self) -> Option<Option<f64>> {
        let mut acc = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let r = self.unary()?;
            acc = match (acc, r) {
                (Some(a), Some(b)) => {
                    if c == b'*' {
                        Self::ok(a * b)
                    } else if b == 0.0 {
                        None
                    } else {
                        Self::ok(a / b)
                    }
                }
                _ => None,
            };
        }
        Some(acc)
    }

    fn unary(&mut self) -> Option<Option<f64>> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Some(self.unary()?.map(|v| -v));
        }
        self.power()
    }

    fn power(&mut self) -> Option<Option<f64>> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Some(match (base, exp) {
                (Some(a), Some(b)) => Self::ok(a.powf(b)),
                _ => None,
            });
        }
        Some(base)
    }

    fn primary(&mut self) -> Option<Option<f64>> {
        let c = self.peek()?;
        if c == b'(' {
            self.pos += 1;
            let v = self.expr()?;
            self.peek();
            self.pos += 1;
            return Some(v);
        }
        if c.is_ascii_digit() || c == b'.' {
            let start = self.pos;
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_digit()
                    || self.src[self.pos] == b'.'
                    || self.src[self.pos] == b'e'
                    || (self.src[self.pos] == b'-' && self.src[self.pos - 1] == b'e'))
            {
                self.pos += 1;
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            return Some(Some(text.parse().unwrap()));
        }
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let mut args = vec![self.expr()?];
            while self.peek() == Some(b',') {
                self.pos += 1;
                args.push(self.expr()?);
            }
            self.peek();
            self.pos += 1;
            let args: Option<Vec<f64>> = args.into_iter().collect();
            let Some(args) = args else { return Some(None) };
            let a = args[0];
            let v = match name.as_str() {
                "sin" => a.sin(),
                "cos" => a.cos(),
                "tan" => a.tan(),
                "exp" => a.exp(),
                "log" if a > 0.0 => a.ln(),
                "log" => f64::NAN,
                "sqrt" if a >= 0.0 => a.sqrt(),
                "sqrt" => f64::NAN,
                "abs" => a.abs(),
                "sign" => {
                    if a > 0.0 {
                        1.0
                    } else if a < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
                "pow" => a.powf(args[1]),
                "atan2" => a.atan2(args[1]),
                other => panic!("unknown function {other}"),
            };
            return Some(Self::ok(v));
        }
        Some(match name.as_str() {
            "pi" => Some(PI),
            "e" => Some(std::f64::consts::E),
            v => self.env.iter().find(|(n, _)| *n == v).map(|(_, x)| *x),
        })
    }
}

fn reference_eval(src: &str, env: [(&'static str, f64); 3]) -> Option<f64> {
    let mut r = Reference {
        src: src.as_bytes(),
        pos: 0,
        env,
    };
    r.expr().flatten()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn parse_print_parse(n in node()) {
        let ast = harmonic::expr::ExprAst::new(n);
        let printed = ast.to_string();
        let reparsed = parse_expression(&printed).unwrap();
        prop_assert_eq!(&reparsed, &ast, "printed as {}", printed);
        prop_assert_eq!(reparsed.to_string(), printed);
    }

    #[test]
    fn evaluation_matches_reference(n in node(), a in -3.0f64..3.0, b in -3.0f64..3.0, t in 0.0f64..7.0) {
        let ast = harmonic::expr::ExprAst::new(n);
        let src = ast.to_string();
        let env = [("a", a), ("b", b), ("t", t)];
        let expected = reference_eval(&src, env);
        let direct = ast.eval(&env);
        let program = ast.compile(&Layout::new(VARS)).unwrap();
        let compiled = program.eval(&[a, b, t]);
        match expected {
            Some(v) => {
                prop_assert_eq!(direct.clone().unwrap().to_bits(), v.to_bits(), "{}", src);
                prop_assert_eq!(compiled.unwrap().to_bits(), v.to_bits(), "{}", src);
            }
            None => {
                prop_assert!(direct.is_err(), "{} gave {:?}", src, direct);
                prop_assert!(compiled.is_err());
            }
        }
    }

    #[test]
    fn subtraction_is_left_associative(a in -1e3f64..1e3, b in -1e3f64..1e3, c in -1e3f64..1e3) {
        let v = parse_expression("a-b-c").unwrap().eval(&[("a", a), ("b", b), ("c", c)]).unwrap();
        prop_assert_eq!(v.to_bits(), ((a - b) - c).to_bits());
    }

    #[test]
    fn power_is_right_associative(a in 0.1f64..3.0, b in 0.1f64..2.0, c in -2.0f64..2.0) {
        let v = parse_expression("a^b^c").unwrap().eval(&[("a", a), ("b", b), ("c", c)]).unwrap();
        prop_assert_eq!(v.to_bits(), a.powf(b.powf(c)).to_bits());
    }

    #[test]
    fn scenario_round_trip(
        which in 0usize..5,
        t in 0.0f64..6.3,
        vals in prop::collection::vec(-1.5f64..1.5, 7),
        lambda in 0.0f64..1.0,
    ) {
        let name = builtin_names()[which];
        let sys = builtin_scenario(name).unwrap();
        let again = load_scenario(&emit_scenario(&sys).to_string()).unwrap();
        prop_assert_eq!(emit_scenario(&again), emit_scenario(&sys));
        let x = &vals[..sys.k];
        let y: Vec<f64> = vals.iter().cycle().skip(2).take(sys.s).copied().collect();
        for part in [Part::F1, Part::F2] {
            let mut o1 = vec![0.0; part_len(&sys, part)];
            let mut o2 = o1.clone();
            let r1 = sys.eval_part(part, t, x, &y, lambda.max(1e-3), &mut o1);
            let r2 = again.eval_part(part, t, x, &y, lambda.max(1e-3), &mut o2);
            prop_assert_eq!(r1.is_ok(), r2.is_ok());
            for (u, v) in o1.iter().zip(&o2) {
                prop_assert_eq!(u.to_bits(), v.to_bits());
            }
        }
        let (a1, a2) = (sys.a_matrix(t).unwrap(), again.a_matrix(t).unwrap());
        prop_assert_eq!(a1, a2);
        prop_assert_eq!(sys.c_vector(t).unwrap(), again.c_vector(t).unwrap());
        if sys.is_constrained() {
            prop_assert_eq!(sys.constraint_values(&y).unwrap(), again.constraint_values(&y).unwrap());
        }
    }
}

fn part_len(sys: &harmonic::system::PerturbedCoupledSystem, part: Part) -> usize {
    match part {
        Part::F1 => sys.k,
        _ => sys.s,
    }
}

/// Periodic `A(t)` with trigonometric-polynomial entries and forcing `c(t)`.
fn periodic_scenario(k: usize, coef: &[f64]) -> (String, f64) {
    let mut it = coef.iter();
    let mut trace_mean = 0.0;
    let mut rows = Vec::new();
    for i in 0..k {
        let mut row = Vec::new();
        for j in 0..k {
            let (a0, a1, b1, a2) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
            if i == j {
                trace_mean += a0;
            }
            row.push(format!("\"{a0} + {a1}*cos(t) + {b1}*sin(t) + {a2}*cos(2*t)\""));
        }
        rows.push(format!("[{}]", row.join(", ")));
    }
    let c: Vec<String> = (0..k).map(|i| format!("\"{} + sin(t + {i})\"", coef[coef.len() - 1 - i])).collect();
    let zeros = vec!["\"0\""; k].join(", ");
    let text = format!(
        r#"{{"name": "random", "T": "2pi", "k": {k}, "s": 1, "A": [{}], "c": [{}], "f1": [{zeros}], "f2": ["-y1"]}}"#,
        rows.join(", "),
        c.join(", ")
    );
    (text, 2.0 * PI * trace_mean)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn liouville_on_random_periodic_a(k in 1usize..=3, coef in prop::collection::vec(-0.4f64..0.4, 40)) {
        let (text, trace_integral) = periodic_scenario(k, &coef);
        let sys = load_scenario(&text).unwrap();
        let m = fundamental_matrix(&sys, 1e-12).unwrap();
        // the trace integral of a trigonometric polynomial is T times its mean
        let exact = trace_integral.exp();
        prop_assert!((m.phi_t.determinant() - exact).abs() < 1e-6, "{} vs {}", m.phi_t.determinant(), exact);
        prop_assert!(m.phi_t.determinant() > 0.0);
        prop_assert!((m.trace_integral - trace_integral).abs() < 1e-8);
        prop_assume!(m.det_i_minus_phi_t.abs() > 1e-3);
        let xhat = periodic_solution_linear(&sys, &m, 1e-12).unwrap();
        let f = LinearTimeMap::new(&sys, &m, 1e-12).unwrap();
        let image = f.apply(xhat.initial_value());
        for (a, b) in image.iter().zip(xhat.initial_value()) {
            prop_assert!((a - b).abs() < 1e-8);
        }
        for t in [0.3, 2.0, 5.5] {
            let (u, v) = (xhat.eval(t), xhat.eval(t + sys.period));
            for (a, b) in u.iter().zip(&v) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sign_sum_matches_oracles_1d(c0 in -0.9f64..0.9, c1 in -2.0f64..2.0, c2 in -1.0f64..1.0, c3 in -1.0f64..1.0) {
        let f = move |u: &[f64]| vec![c0 + c1 * u[0] + c2 * u[0] * u[0] + c3 * u[0].powi(3)];
        let field = FnField { dim: 1, f };
        match find_zeros_in(&field, &[-1.0], &[1.0], 400, 1e-12) {
            Ok(zeros) => {
                prop_assume!(zeros.iter().all(|z| !z.degenerate));
                let sum: i32 = zeros.iter().map(|z| z.sign).sum();
                prop_assert_eq!(sum, endpoint_degree(&field, -1.0, 1.0).unwrap());
            }
            Err(Error::BoundaryZero { .. } | Error::DegenerateZero { .. }) => prop_assume!(false),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn sign_sum_matches_winding_2d(
        a in prop::collection::vec(-2.0f64..2.0, 4),
        b in prop::collection::vec(-0.5f64..0.5, 2),
        cubic in prop::collection::vec(-0.6f64..0.6, 2),
    ) {
        let f = move |u: &[f64]| {
            vec![
                a[0] * u[0] + a[1] * u[1] + b[0] + cubic[0] * u[0].powi(3),
                a[2] * u[0] + a[3] * u[1] + b[1] + cubic[1] * u[1].powi(3) - 0.3 * u[0] * u[0] * u[1],
            ]
        };
        let field = FnField { dim: 2, f };
        let (lo, hi) = ([-1.0, -1.0], [1.0, 1.0]);
        match find_zeros_in(&field, &lo, &hi, 60, 1e-12) {
            Ok(zeros) => {
                prop_assume!(zeros.iter().all(|z| !z.degenerate && z.regularity_margin > 1e-6));
                let sum: i32 = zeros.iter().map(|z| z.sign).sum();
                match winding_degree(&field, &lo, &hi) {
                    Ok(w) => prop_assert_eq!(sum, w),
                    Err(_) => prop_assume!(false),
                }
            }
            Err(Error::BoundaryZero { .. }) => prop_assume!(false),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn excision_adds_up(c0 in -0.9f64..0.9, c1 in -2.0f64..2.0, c3 in -1.0f64..1.0, cut in -0.8f64..0.8) {
        let f = move |u: &[f64]| vec![c0 + c1 * u[0] + c3 * u[0].powi(3)];
        let field = FnField { dim: 1, f };
        prop_assume!(f(&[cut])[0].abs() > 1e-6);
        let whole = harmonic::average::degree_in(&field, &[-1.0], &[1.0], 400, 1e-12, "whole".into());
        let left = harmonic::average::degree_in(&field, &[-1.0], &[cut], 400, 1e-12, "left".into());
        let right = harmonic::average::degree_in(&field, &[cut], &[1.0], 400, 1e-12, "right".into());
        let mut values = Vec::new();
        for r in [whole, left, right] {
            match r {
                Ok(d) => values.push(d.value),
                Err(Error::BoundaryZero { .. } | Error::DegenerateZero { .. }) => prop_assume!(false),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
        prop_assert_eq!(values[0], values[1] + values[2]);
    }
}

#[test]
fn builtins_are_tangent() {
    for name in builtin_names() {
        let sys = builtin_scenario(name).unwrap();
        let rep = check_tangency(&sys, 200, 1e-6).unwrap();
        assert!(rep.pass && rep.max_normal_component < 1e-6, "{name}: {}", rep.max_normal_component);
    }
}
