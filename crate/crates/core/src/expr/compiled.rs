//! Slot-resolved stack programs for hot-loop evaluation.
//!
//! An [`ExprAst`] is late-bound by name; compiling it against a fixed variable
//! layout resolves each name to a slot once, so the integrators can evaluate
//! right-hand sides without hashing. Evaluation order matches the tree walk
//! exactly, so results agree bit for bit.

use super::ast::{BinOp, ExprAst, Func, Node};
use super::eval::{apply_binary, apply_binary_func, apply_unary, sign, EvalError};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Load(usize),
    Neg,
    Bin(BinOp),
    Call1(Func),
    Call2(Func),
}

/// Maps variable names to slots; named constants are folded in at compile time.
#[derive(Debug, Clone, Default)]
pub struct Layout {
    slots: BTreeMap<String, usize>,
    constants: BTreeMap<String, f64>,
    len: usize,
}

impl Layout {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut slots = BTreeMap::new();
        let mut len = 0;
        for (i, n) in names.into_iter().enumerate() {
            slots.insert(n.into(), i);
            len = i + 1;
        }
        Layout {
            slots,
            constants: BTreeMap::new(),
            len,
        }
    }

    pub fn with_constants(mut self, constants: &BTreeMap<String, f64>) -> Self {
        self.constants = constants.clone();
        self
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.slots.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    code: Vec<Op>,
    depth: usize,
    arity: usize,
}

fn emit(node: &Node, layout: &Layout, code: &mut Vec<Op>) -> Result<(), EvalError> {
    match node {
        Node::Num(v) => code.push(Op::Const(*v)),
        Node::Const(c) => code.push(Op::Const(c.value())),
        Node::Var(name) => {
            if let Some(slot) = layout.slot(name) {
                code.push(Op::Load(slot));
            } else if let Some(v) = layout.constants.get(name) {
                code.push(Op::Const(*v));
            } else {
                return Err(EvalError::UnboundVariable(name.clone()));
            }
        }
        Node::Neg(inner) => {
            emit(inner, layout, code)?;
            code.push(Op::Neg);
        }
        Node::Binary(op, l, r) => {
            emit(l, layout, code)?;
            emit(r, layout, code)?;
            code.push(Op::Bin(*op));
        }
        Node::Call(func, args) => {
            for a in args {
                emit(a, layout, code)?;
            }
            code.push(if args.len() == 2 { Op::Call2(*func) } else { Op::Call1(*func) });
        }
    }
    Ok(())
}

impl ExprAst {
    /// Resolve every variable against `layout`. Unknown names fail here.
    pub fn compile(&self, layout: &Layout) -> Result<Program, EvalError> {
        let mut code = Vec::new();
        emit(self.root(), layout, &mut code)?;
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &code {
            match op {
                Op::Const(_) | Op::Load(_) => depth += 1,
                Op::Bin(_) | Op::Call2(_) => depth -= 1,
                Op::Neg | Op::Call1(_) => {}
            }
            max_depth = max_depth.max(depth);
        }
        Ok(Program {
            code,
            depth: max_depth,
            arity: layout.len(),
        })
    }
}

impl Program {
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn eval(&self, vars: &[f64]) -> Result<f64, EvalError> {
        debug_assert!(vars.len() >= self.arity);
        let mut buf = [0.0f64; 64];
        let mut heap;
        let stack: &mut [f64] = if self.depth <= buf.len() {
            &mut buf
        } else {
            heap = vec![0.0; self.depth];
            &mut heap
        };
        let mut sp = 0usize;
        for op in &self.code {
            match *op {
                Op::Const(v) => {
                    stack[sp] = v;
                    sp += 1;
                }
                Op::Load(i) => {
                    stack[sp] = vars[i];
                    sp += 1;
                }
                Op::Neg => stack[sp - 1] = -stack[sp - 1],
                Op::Bin(b) => {
                    sp -= 1;
                    stack[sp - 1] = apply_binary(b, stack[sp - 1], stack[sp])?;
                }
                Op::Call1(f) => stack[sp - 1] = apply_unary(f, stack[sp - 1])?,
                Op::Call2(f) => {
                    sp -= 1;
                    stack[sp - 1] = apply_binary_func(f, stack[sp - 1], stack[sp])?;
                }
            }
        }
        Ok(stack[0])
    }

    /// Value and gradient with respect to every slot (forward mode).
    pub fn eval_grad(&self, vars: &[f64], grad: &mut [f64]) -> Result<f64, EvalError> {
        let n = vars.len();
        debug_assert_eq!(grad.len(), n);
        let mut vals = vec![0.0f64; self.depth];
        let mut ders = vec![0.0f64; self.depth * n];
        let mut sp = 0usize;
        for op in &self.code {
            match *op {
                Op::Const(v) => {
                    vals[sp] = v;
                    ders[sp * n..(sp + 1) * n].fill(0.0);
                    sp += 1;
                }
                Op::Load(i) => {
                    vals[sp] = vars[i];
                    let g = &mut ders[sp * n..(sp + 1) * n];
                    g.fill(0.0);
                    g[i] = 1.0;
                    sp += 1;
                }
                Op::Neg => {
                    vals[sp - 1] = -vals[sp - 1];
                    ders[(sp - 1) * n..sp * n].iter_mut().for_each(|d| *d = -*d);
                }
                Op::Bin(b) => {
                    sp -= 1;
                    let (a, c) = (vals[sp - 1], vals[sp]);
                    let v = apply_binary(b, a, c)?;
                    let (lo, hi) = ders.split_at_mut(sp * n);
                    let ga = &mut lo[(sp - 1) * n..];
                    let gc = &hi[..n];
                    match b {
                        BinOp::Add => ga.iter_mut().zip(gc).for_each(|(x, y)| *x += y),
                        BinOp::Sub => ga.iter_mut().zip(gc).for_each(|(x, y)| *x -= y),
                        BinOp::Mul => ga.iter_mut().zip(gc).for_each(|(x, y)| *x = *x * c + a * y),
                        BinOp::Div => ga
                            .iter_mut()
                            .zip(gc)
                            .for_each(|(x, y)| *x = (*x * c - a * y) / (c * c)),
                        BinOp::Pow => pow_grad(a, c, v, ga, gc)?,
                    }
                    vals[sp - 1] = v;
                }
                Op::Call1(f) => {
                    let a = vals[sp - 1];
                    let v = apply_unary(f, a)?;
                    let scale = match f {
                        Func::Sin => a.cos(),
                        Func::Cos => -a.sin(),
                        Func::Tan => 1.0 + v * v,
                        Func::Exp => v,
                        Func::Log => 1.0 / a,
                        Func::Sqrt => {
                            if v == 0.0 {
                                return Err(EvalError::Domain {
                                    op: "sqrt",
                                    detail: "derivative at zero".into(),
                                });
                            }
                            0.5 / v
                        }
                        Func::Abs => sign(a),
                        Func::Sign => 0.0,
                        Func::Pow | Func::Atan2 => unreachable!(),
                    };
                    ders[(sp - 1) * n..sp * n].iter_mut().for_each(|d| *d *= scale);
                    vals[sp - 1] = v;
                }
                Op::Call2(f) => {
                    sp -= 1;
                    let (a, c) = (vals[sp - 1], vals[sp]);
                    let v = apply_binary_func(f, a, c)?;
                    let (lo, hi) = ders.split_at_mut(sp * n);
                    let ga = &mut lo[(sp - 1) * n..];
                    let gc = &hi[..n];
                    match f {
                        Func::Pow => pow_grad(a, c, v, ga, gc)?,
                        Func::Atan2 => {
                            // d atan2(a, c) = (c da - a dc) / (a^2 + c^2)
                            let r2 = a * a + c * c;
                            ga.iter_mut().zip(gc).for_each(|(x, y)| *x = (c * *x - a * y) / r2);
                        }
                        _ => unreachable!(),
                    }
                    vals[sp - 1] = v;
                }
            }
        }
        grad.copy_from_slice(&ders[..n]);
        Ok(vals[0])
    }
}

fn pow_grad(a: f64, c: f64, v: f64, ga: &mut [f64], gc: &[f64]) -> Result<(), EvalError> {
    let base_term = if c == 0.0 { 0.0 } else { c * a.powf(c - 1.0) };
    let exp_varies = gc.iter().any(|d| *d != 0.0);
    let log_term = if exp_varies {
        if a <= 0.0 {
            return Err(EvalError::Domain {
                op: "^",
                detail: format!("variable exponent on non-positive base {a}"),
            });
        }
        v * a.ln()
    } else {
        0.0
    };
    ga.iter_mut()
        .zip(gc)
        .for_each(|(x, y)| *x = base_term * *x + log_term * y);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    #[test]
    fn compiled_matches_tree_walk() {
        let ast = parse_expression("-(1/2 + y1 + 2*x1*sin(t))").unwrap();
        let layout = Layout::new(["t", "x1", "y1"]);
        let prog = ast.compile(&layout).unwrap();
        let v = prog.eval(&[0.3, 0.9, -0.2]).unwrap();
        let w = ast.eval(&[("t", 0.3), ("x1", 0.9), ("y1", -0.2)]).unwrap();
        assert_eq!(v.to_bits(), w.to_bits());
    }

    #[test]
    fn unknown_name_fails_at_compile() {
        let ast = parse_expression("x + q").unwrap();
        let err = ast.compile(&Layout::new(["x"])).unwrap_err();
        assert_eq!(err, EvalError::UnboundVariable("q".into()));
    }

    #[test]
    fn constants_fold() {
        let ast = parse_expression("alpha*x").unwrap();
        let mut c = BTreeMap::new();
        c.insert("alpha".to_string(), 0.5);
        let prog = ast.compile(&Layout::new(["x"]).with_constants(&c)).unwrap();
        assert_eq!(prog.eval(&[4.0]).unwrap(), 2.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let srcs = [
            "sin(x)*y^2 - exp(x/3)",
            "atan2(y, x) + sqrt(x*x + y*y)",
            "pow(x, 3) - abs(y - x)*log(2 + x)",
            "tan(x/4)/(1 + y^2) - -x^y",
        ];
        let layout = Layout::new(["x", "y"]);
        for src in srcs {
            let prog = parse_expression(src).unwrap().compile(&layout).unwrap();
            let p = [1.3, 0.7];
            let mut g = [0.0; 2];
            prog.eval_grad(&p, &mut g).unwrap();
            for i in 0..2 {
                let h = 1e-6;
                let mut a = p;
                let mut b = p;
                a[i] += h;
                b[i] -= h;
                let fd = (prog.eval(&a).unwrap() - prog.eval(&b).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-7 * (1.0 + fd.abs()), "{src} d{i}: {fd} vs {}", g[i]);
            }
        }
    }
}
