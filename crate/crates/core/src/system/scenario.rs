//! Scenario documents (JSON) to and from [`PerturbedCoupledSystem`].

use super::{builtin, variable_names, Chart, PerturbedCoupledSystem};
use crate::error::{Error, Result};
use crate::expr::{parse_expression, ExprAst, Func};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;

const CHART_TOL: f64 = 1e-10;
const PROBES: usize = 64;

/// Parse and validate a scenario document.
pub fn load_scenario(text: &str) -> Result<PerturbedCoupledSystem> {
    load_scenario_with(text, &BTreeMap::new())
}

/// Like [`load_scenario`] with constant overrides applied on top of the
/// document's `defaults`. Overriding an undeclared constant is an error.
pub fn load_scenario_with(text: &str, overrides: &BTreeMap<String, f64>) -> Result<PerturbedCoupledSystem> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::scenario(".", e.to_string()))?;
    from_value(&doc, overrides)
}

pub fn load_scenario_file(path: &Path) -> Result<PerturbedCoupledSystem> {
    load_scenario(&std::fs::read_to_string(path)?)
}

/// Built-in name or file path, plus an optional config file of constant
/// overrides (`{"kappa": 3}` or `{"defaults": {"kappa": 3}}`).
pub fn resolve_scenario(name_or_path: &str, config: Option<&Path>) -> Result<PerturbedCoupledSystem> {
    let overrides = match config {
        Some(p) => read_overrides(p)?,
        None => BTreeMap::new(),
    };
    resolve_scenario_with(name_or_path, &overrides)
}

/// Built-in name or file path with explicit constant overrides.
pub fn resolve_scenario_with(name_or_path: &str, overrides: &BTreeMap<String, f64>) -> Result<PerturbedCoupledSystem> {
    let text = match builtin::builtin_source(name_or_path) {
        Some(src) => src.to_string(),
        None => {
            let path = Path::new(name_or_path);
            if !path.exists() {
                return Err(Error::Invalid(format!(
                    "`{name_or_path}` is neither a built-in scenario ({}) nor a file",
                    builtin::builtin_names().join(", ")
                )));
            }
            std::fs::read_to_string(path)?
        }
    };
    load_scenario_with(&text, overrides)
}

fn read_overrides(path: &Path) -> Result<BTreeMap<String, f64>> {
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let obj = match doc.get("defaults") {
        Some(v) => v,
        None => &doc,
    };
    let obj = obj
        .as_object()
        .ok_or_else(|| Error::scenario("config", "expected an object of constants"))?;
    obj.iter()
        .map(|(k, v)| {
            let x = v
                .as_f64()
                .ok_or_else(|| Error::scenario(format!("config.{k}"), "expected a number"))?;
            Ok((k.clone(), x))
        })
        .collect()
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::scenario(format!("{path}.{key}"), "missing field"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array()
        .ok_or_else(|| Error::scenario(path, "expected an array"))
}

fn as_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| Error::scenario(path, "expected a non-negative integer"))
}

fn parse_at(src: &str, path: &str) -> Result<ExprAst> {
    parse_expression(src).map_err(|source| Error::Parse {
        path: path.to_string(),
        source,
    })
}

fn expr(v: &Value, path: &str) -> Result<ExprAst> {
    match v {
        Value::String(s) => parse_at(s, path),
        Value::Number(n) => parse_at(&n.to_string(), path),
        _ => Err(Error::scenario(path, "expected an expression string")),
    }
}

fn expr_list(v: &Value, len: usize, path: &str) -> Result<Vec<ExprAst>> {
    let arr = as_array(v, path)?;
    if arr.len() != len {
        return Err(Error::scenario(path, format!("expected {len} entries, found {}", arr.len())));
    }
    arr.iter()
        .enumerate()
        .map(|(i, e)| expr(e, &format!("{path}[{i}]")))
        .collect()
}

/// A number, the literal `"2pi"`, or a constant expression.
fn number(v: &Value, constants: &BTreeMap<String, f64>, path: &str) -> Result<(f64, bool)> {
    match v {
        Value::Number(n) => Ok((n.as_f64().unwrap_or(f64::NAN), false)),
        Value::String(s) if s.trim() == "2pi" => Ok((2.0 * PI, true)),
        Value::String(s) => {
            let ast = parse_at(s, path)?;
            let val = ast
                .eval(constants)
                .map_err(|e| Error::scenario(path, e.to_string()))?;
            Ok((val, false))
        }
        _ => Err(Error::scenario(path, "expected a number or \"2pi\"")),
    }
}

fn check_vars(ast: &ExprAst, allowed: &BTreeSet<String>, constants: &BTreeMap<String, f64>, path: &str) -> Result<()> {
    for v in ast.variables() {
        if !allowed.contains(v) && !constants.contains_key(v) {
            return Err(Error::scenario(path, format!("variable `{v}` is not allowed here")));
        }
    }
    Ok(())
}

fn from_value(doc: &Value, overrides: &BTreeMap<String, f64>) -> Result<PerturbedCoupledSystem> {
    let root = doc
        .as_object()
        .ok_or_else(|| Error::scenario(".", "expected a JSON object"))?;

    let name = field(root, "name", "")?
        .as_str()
        .ok_or_else(|| Error::scenario(".name", "expected a string"))?
        .to_string();
    let description = root.get("description").and_then(Value::as_str).map(str::to_string);
    let region = match root.get("region") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(Error::scenario(".region", "expected a string")),
    };

    let k = as_usize(field(root, "k", "")?, ".k")?;
    let s = as_usize(field(root, "s", "")?, ".s")?;
    if k == 0 {
        return Err(Error::scenario(".k", "must be at least 1"));
    }
    if s == 0 {
        return Err(Error::scenario(".s", "must be at least 1"));
    }

    // constants first: everything else may refer to them
    let var_names = variable_names(k, s);
    let mut constants = BTreeMap::new();
    if let Some(d) = root.get("defaults") {
        let obj = d
            .as_object()
            .ok_or_else(|| Error::scenario(".defaults", "expected an object"))?;
        for (key, v) in obj {
            let path = format!(".defaults.{key}");
            if var_names.contains(key) || key == "pi" || key == "e" || Func::from_name(key).is_some() {
                return Err(Error::scenario(path, "name clashes with a variable or builtin"));
            }
            let (val, _) = number(v, &constants, &path)?;
            constants.insert(key.clone(), val);
        }
    }
    for (key, v) in overrides {
        if !constants.contains_key(key) {
            return Err(Error::scenario(
                format!(".defaults.{key}"),
                "override names a constant the scenario does not declare",
            ));
        }
        constants.insert(key.clone(), *v);
    }

    let (period, two_pi) = number(field(root, "T", "")?, &constants, ".T")?;
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::scenario(".T", "period must be positive"));
    }

    let t_only: BTreeSet<String> = ["t".to_string()].into();
    let all: BTreeSet<String> = var_names.iter().cloned().collect();
    let y_only: BTreeSet<String> = (1..=s).map(|i| format!("y{i}")).collect();
    let lambda_only: BTreeSet<String> = ["lambda".to_string()].into();

    let a_rows = as_array(field(root, "A", "")?, ".A")?;
    if a_rows.len() != k {
        return Err(Error::scenario(".A", format!("expected {k} rows, found {}", a_rows.len())));
    }
    let mut a = Vec::with_capacity(k);
    for (i, row) in a_rows.iter().enumerate() {
        let row = expr_list(row, k, &format!(".A[{i}]"))?;
        for (j, e) in row.iter().enumerate() {
            check_vars(e, &t_only, &constants, &format!(".A[{i}][{j}]"))?;
        }
        a.push(row);
    }
    let c = expr_list(field(root, "c", "")?, k, ".c")?;
    for (i, e) in c.iter().enumerate() {
        check_vars(e, &t_only, &constants, &format!(".c[{i}]"))?;
    }
    let f1 = expr_list(field(root, "f1", "")?, k, ".f1")?;
    for (i, e) in f1.iter().enumerate() {
        check_vars(e, &all, &constants, &format!(".f1[{i}]"))?;
    }
    let f2 = expr_list(field(root, "f2", "")?, s, ".f2")?;
    for (i, e) in f2.iter().enumerate() {
        check_vars(e, &all, &constants, &format!(".f2[{i}]"))?;
    }

    let constraints = match root.get("constraints") {
        None | Some(Value::Null) => Vec::new(),
        Some(v) => {
            let n = as_array(v, ".constraints")?.len();
            expr_list(v, n, ".constraints")?
        }
    };
    if constraints.len() >= s {
        return Err(Error::scenario(".constraints", "need fewer constraints than s"));
    }
    for (i, e) in constraints.iter().enumerate() {
        check_vars(e, &y_only, &constants, &format!(".constraints[{i}]"))?;
    }
    let d = s - constraints.len();

    let mut charts = Vec::new();
    if let Some(v) = root.get("charts") {
        for (ci, ch) in as_array(v, ".charts")?.iter().enumerate() {
            let path = format!(".charts[{ci}]");
            let obj = ch
                .as_object()
                .ok_or_else(|| Error::scenario(&path, "expected an object"))?;
            let params: Vec<String> = as_array(field(obj, "params", &path)?, &format!("{path}.params"))?
                .iter()
                .map(|p| {
                    p.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| Error::scenario(format!("{path}.params"), "expected strings"))
                })
                .collect::<Result<_>>()?;
            if params.len() != d {
                return Err(Error::scenario(
                    format!("{path}.params"),
                    format!("manifold has dimension {d}, chart has {} parameters", params.len()),
                ));
            }
            let chart_name = match obj.get("name") {
                Some(Value::String(n)) => n.clone(),
                Some(_) => return Err(Error::scenario(format!("{path}.name"), "expected a string")),
                None => params.join("_"),
            };
            let map = expr_list(field(obj, "map", &path)?, s, &format!("{path}.map"))?;
            let allowed: BTreeSet<String> = params.iter().cloned().collect();
            for (i, e) in map.iter().enumerate() {
                check_vars(e, &allowed, &constants, &format!("{path}.map[{i}]"))?;
            }
            let dom = as_array(field(obj, "domain", &path)?, &format!("{path}.domain"))?;
            if dom.len() != d {
                return Err(Error::scenario(format!("{path}.domain"), format!("expected {d} intervals")));
            }
            let mut domain = Vec::with_capacity(d);
            for (i, iv) in dom.iter().enumerate() {
                let ipath = format!("{path}.domain[{i}]");
                let pair = as_array(iv, &ipath)?;
                if pair.len() != 2 {
                    return Err(Error::scenario(&ipath, "expected [lo, hi]"));
                }
                let lo = number(&pair[0], &constants, &format!("{ipath}[0]"))?.0;
                let hi = number(&pair[1], &constants, &format!("{ipath}[1]"))?.0;
                if !(lo < hi) {
                    return Err(Error::scenario(&ipath, "empty interval"));
                }
                domain.push((lo, hi));
            }
            charts.push(Chart::new(chart_name, params, map, domain));
        }
    }

    let mut derived = Vec::new();
    if let Some(v) = root.get("derived") {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::scenario(".derived", "expected an object"))?;
        for (key, e) in obj {
            let path = format!(".derived.{key}");
            let ast = expr(e, &path)?;
            check_vars(&ast, &lambda_only, &constants, &path)?;
            derived.push((key.clone(), ast));
        }
    }

    let sys = PerturbedCoupledSystem::assemble(
        name,
        description,
        period,
        two_pi,
        a,
        c,
        f1,
        f2,
        constraints,
        charts,
        constants,
        derived,
        region,
    )?;
    validate_manifold(&sys)?;
    Ok(sys)
}

fn validate_manifold(sys: &PerturbedCoupledSystem) -> Result<()> {
    if !sys.is_constrained() {
        return Ok(());
    }
    let m = sys.constraints.len();
    for (ci, chart) in sys.charts.iter().enumerate() {
        let path = format!(".charts[{ci}]");
        let per_axis: usize = if chart.dim() == 1 { 32 } else { 8 };
        let total = per_axis.pow(chart.dim() as u32);
        let mut theta = vec![0.0; chart.dim()];
        for idx in 0..total {
            let mut rem = idx;
            for (j, (lo, hi)) in chart.domain.iter().enumerate() {
                let i = rem % per_axis;
                rem /= per_axis;
                theta[j] = lo + (hi - lo) * (i as f64 + 0.5) / per_axis as f64;
            }
            let y = chart.eval(&theta).map_err(|e| Error::scenario(&path, e.to_string()))?;
            let viol = sys.constraint_violation(&y)?;
            if viol >= CHART_TOL {
                return Err(Error::scenario(
                    format!("{path}.map"),
                    format!("image of {theta:?} violates the constraints by {viol:e}"),
                ));
            }
            let jac = chart.jacobian(&theta)?;
            let sv = jac.singular_values();
            let rank = sv.iter().filter(|v| **v > 1e-8 * sv.amax().max(1.0)).count();
            if rank != chart.dim() {
                return Err(Error::scenario(format!("{path}.map"), format!("chart is singular at {theta:?}")));
            }
        }
    }
    let probes = sys
        .probe_points(PROBES)
        .map_err(|e| Error::scenario(".constraints", e.to_string()))?;
    for q in probes {
        if sys.constraint_rank(&q)? != m {
            return Err(Error::scenario(
                ".constraints",
                format!("constraint Jacobian is rank-deficient at {q:?}"),
            ));
        }
    }
    Ok(())
}

fn format_number(v: f64) -> Value {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

/// Serialize a system back to its scenario document.
pub fn emit_scenario(sys: &PerturbedCoupledSystem) -> Value {
    let strs = |v: &[ExprAst]| Value::Array(v.iter().map(|e| Value::String(e.to_string())).collect());
    let mut root = Map::new();
    root.insert("name".into(), Value::String(sys.name.clone()));
    if let Some(d) = &sys.description {
        root.insert("description".into(), Value::String(d.clone()));
    }
    root.insert(
        "T".into(),
        if sys.period_is_two_pi {
            Value::String("2pi".into())
        } else {
            format_number(sys.period)
        },
    );
    root.insert("k".into(), Value::from(sys.k));
    root.insert("s".into(), Value::from(sys.s));
    root.insert("A".into(), Value::Array(sys.a.iter().map(|r| strs(r)).collect()));
    root.insert("c".into(), strs(&sys.c));
    root.insert("f1".into(), strs(&sys.f1));
    root.insert("f2".into(), strs(&sys.f2));
    if !sys.constraints.is_empty() {
        root.insert("constraints".into(), strs(&sys.constraints));
    }
    if !sys.charts.is_empty() {
        let charts = sys
            .charts
            .iter()
            .map(|ch| {
                let mut o = Map::new();
                o.insert("name".into(), Value::String(ch.name.clone()));
                o.insert(
                    "params".into(),
                    Value::Array(ch.params.iter().map(|p| Value::String(p.clone())).collect()),
                );
                o.insert("map".into(), strs(&ch.map));
                o.insert(
                    "domain".into(),
                    Value::Array(
                        ch.domain
                            .iter()
                            .map(|(lo, hi)| Value::Array(vec![format_number(*lo), format_number(*hi)]))
                            .collect(),
                    ),
                );
                Value::Object(o)
            })
            .collect();
        root.insert("charts".into(), Value::Array(charts));
    }
    if !sys.constants.is_empty() {
        let defaults = sys
            .constants
            .iter()
            .map(|(k, v)| (k.clone(), format_number(*v)))
            .collect();
        root.insert("defaults".into(), Value::Object(defaults));
    }
    if !sys.derived.is_empty() {
        let derived = sys
            .derived
            .iter()
            .map(|(k, e)| (k.clone(), Value::String(e.to_string())))
            .collect();
        root.insert("derived".into(), Value::Object(derived));
    }
    if let Some(r) = &sys.region {
        root.insert("region".into(), Value::String(r.clone()));
    }
    Value::Object(root)
}

/// SHA-256 of the canonical emitted document, hex encoded.
pub fn scenario_hash(sys: &PerturbedCoupledSystem) -> String {
    let text = serde_json::to_string(&emit_scenario(sys)).expect("scenario serializes");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "m", "T": "2pi", "k": 1, "s": 1,
        "A": [["-1"]], "c": ["cos(t)"], "f1": ["0"], "f2": ["-y1"]
    }"#;

    #[test]
    fn missing_period_names_path() {
        let doc = MINIMAL.replace(r#""T": "2pi","#, "");
        let err = load_scenario(&doc).unwrap_err();
        assert!(err.to_string().contains(".T"), "{err}");
    }

    #[test]
    fn a_may_only_use_t() {
        let doc = MINIMAL.replace(r#"[["-1"]]"#, r#"[["-x1"]]"#);
        let err = load_scenario(&doc).unwrap_err();
        assert!(err.to_string().contains(".A[0][0]"), "{err}");
    }

    #[test]
    fn parse_error_carries_field() {
        let doc = MINIMAL.replace(r#""f2": ["-y1"]"#, r#""f2": ["-y1 +"]"#);
        let err = load_scenario(&doc).unwrap_err();
        assert!(err.to_string().contains(".f2[0]"), "{err}");
    }

    #[test]
    fn wrong_lengths_rejected() {
        let doc = MINIMAL.replace(r#""c": ["cos(t)"]"#, r#""c": ["cos(t)", "0"]"#);
        assert!(load_scenario(&doc).unwrap_err().to_string().contains(".c"));
    }

    #[test]
    fn constants_and_overrides() {
        let doc = MINIMAL
            .replace(r#""f2": ["-y1"]"#, r#""f2": ["-a*y1"], "defaults": {"a": 2}"#);
        let sys = load_scenario(&doc).unwrap();
        assert_eq!(sys.constants["a"], 2.0);
        let over = BTreeMap::from([("a".to_string(), 5.0)]);
        let sys = load_scenario_with(&doc, &over).unwrap();
        let mut out = [0.0];
        sys.eval_part(super::super::Part::F2, 0.0, &[0.0], &[1.0], 0.0, &mut out).unwrap();
        assert_eq!(out[0], -5.0);
        let bad = BTreeMap::from([("zz".to_string(), 1.0)]);
        assert!(load_scenario_with(&doc, &bad).is_err());
    }

    #[test]
    fn chart_off_manifold_rejected() {
        let doc = r#"{
            "name": "c", "T": "2pi", "k": 1, "s": 2,
            "A": [["-1"]], "c": ["0"], "f1": ["0"], "f2": ["y2", "-y1"],
            "constraints": ["y1^2 + y2^2 - 1"],
            "charts": [{"params": ["a"], "map": ["2*cos(a)", "sin(a)"], "domain": [[0, "2*pi"]]}]
        }"#;
        let err = load_scenario(doc).unwrap_err();
        assert!(err.to_string().contains(".charts[0].map"), "{err}");
    }

    #[test]
    fn rank_deficient_constraint_rejected() {
        let doc = r#"{
            "name": "c", "T": "2pi", "k": 1, "s": 3,
            "A": [["-1"]], "c": ["0"], "f1": ["0"], "f2": ["0", "0", "0"],
            "constraints": ["y1^2 + y2^2 + y3^2 - 1", "2*(y1^2 + y2^2 + y3^2 - 1)"]
        }"#;
        assert!(load_scenario(doc).is_err());
    }
}
