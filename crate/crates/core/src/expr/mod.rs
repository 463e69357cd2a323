//! Scalar math expressions over named variables.

mod ast;
mod compiled;
mod eval;
mod parser;

pub use ast::{BinOp, Constant, ExprAst, Func, Node};
pub use compiled::{Layout, Program};
pub use eval::{Env, EvalError};
pub use parser::{parse_expression, ParseError, ParseErrorKind};
