//! Parse, print, evaluate and compile a scalar expression.

use harmonic::expr::{parse_expression, Layout};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ast = parse_expression("-x1 + 0.1*sin(t)^2 - 2^-y1^2")?;
    println!("printed:   {ast}");
    println!("variables: {:?}", ast.variables());
    let v = ast.eval(&[("t", 1.0), ("x1", 0.5), ("y1", 0.3)])?;
    println!("tree walk: {v}");
    let program = ast.compile(&Layout::new(["t", "x1", "y1"]))?;
    println!("compiled:  {}", program.eval(&[1.0, 0.5, 0.3])?);
    if let Err(e) = parse_expression("sin(x") {
        println!("error:     {e}");
    }
    Ok(())
}
