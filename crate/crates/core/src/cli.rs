//! Command-line front end. [`run_command`] parses argv, runs one command and
//! returns the exit code: 0 on success, 2 when a hypothesis is not met
//! (resonant `A`, zero degree), 1 on any other error.

use crate::average::{averaged_field, brouwer_degree, find_zeros, AveragedField, Region};
use crate::branch::{continue_all, continue_branch, lift_starting_triple, seed_branches, ContinuationOptions, Termination};
use crate::error::{Error, Result};
use crate::io::{fmt_sig, read_manifest, render_svg, sha256_hex, atomic_write, write_manifest, PlotSpec, Table};
use crate::linear::{fundamental_matrix, periodic_solution_linear, require_nonresonant, Monodromy, PeriodicTrajectory};
use crate::poincare::{check_jacobian, flow, index_formula_check, IndexOptions, Model};
use crate::system::{
    builtin_names, builtin_scenario, check_tangency, emit_scenario, resolve_scenario, resolve_scenario_with, scenario_hash,
    PerturbedCoupledSystem,
};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

const RESONANCE_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "harmonic", version, about = "Periodic solutions of perturbed coupled ODEs on manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Built-in scenario name or path to a scenario JSON file.
    #[arg(long)]
    scenario: Option<String>,
    /// JSON object of constant overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Machine-readable summary on stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List or show scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Monodromy, non-resonance and the periodic solution x̂.
    Linear {
        #[command(flatten)]
        common: Common,
        /// Time samples over one period.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Averaged field w sampled over a region, with its zeros.
    Average {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        region: Option<String>,
        /// Samples per axis.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Brouwer degree of w on a region.
    Degree {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        region: Option<String>,
        /// Cells per axis of the zero search.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Fixed point index of the translation operator against the degree of w.
    Index {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        lambda: Vec<f64>,
        #[arg(long = "U", allow_hyphen_values = true)]
        u: String,
        #[arg(long = "V", allow_hyphen_values = true)]
        v: Option<String>,
    },
    /// Trace branches of periodic solutions from the zeros of w.
    Branch {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        region: Option<String>,
        #[arg(long)]
        lambda_max: f64,
        #[arg(long)]
        step0: Option<f64>,
    },
    /// Lift branch points to sampled periodic orbits.
    Triples {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Time samples per orbit.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// SVG plot of two columns of a CSV table.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Run every invariant check on a scenario.
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Subcommand)]
enum ScenarioAction {
    List {
        #[arg(long)]
        json: bool,
    },
    Show {
        name: Option<String>,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

impl Command {
    fn json(&self) -> bool {
        match self {
            Command::Scenario { action } => match action {
                ScenarioAction::List { json } | ScenarioAction::Show { json, .. } => *json,
            },
            Command::Linear { common, .. }
            | Command::Average { common, .. }
            | Command::Degree { common, .. }
            | Command::Index { common, .. }
            | Command::Branch { common, .. }
            | Command::Triples { common, .. }
            | Command::Verify { common } => common.json,
            Command::Plot { json, .. } => *json,
        }
    }
}

/// Lines for the terminal, a JSON summary, and the exit code.
#[derive(Debug, Default)]
struct Report {
    lines: Vec<String>,
    json: Map<String, Value>,
    code: i32,
    notice: Option<String>,
}

impl Report {
    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    fn set(&mut self, key: &str, v: impl Into<Value>) {
        self.json.insert(key.to_string(), v.into());
    }

    /// Mark a hypothesis failure without discarding the output.
    fn hypothesis(&mut self, msg: String) {
        self.code = 2;
        self.notice = Some(msg);
    }
}

struct Ctx {
    command: &'static str,
    argv: Vec<String>,
}

/// Parse `args` (program name first), run, print to stdout/stderr.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run_command`] with explicit output streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let text = e.render().to_string();
            if ok {
                let _ = write!(out, "{text}");
                return 0;
            }
            let _ = write!(err, "{text}");
            return 1;
        }
    };
    let json = cli.command.json();
    let ctx = Ctx {
        command: "",
        argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
    };
    match dispatch(cli.command, ctx) {
        Ok(report) => {
            if json {
                let mut obj = report.json;
                obj.insert("exit_code".into(), report.code.into());
                if let Some(n) = &report.notice {
                    obj.insert("notice".into(), n.clone().into());
                }
                let _ = writeln!(out, "{}", Value::Object(obj));
            } else {
                for l in &report.lines {
                    let _ = writeln!(out, "{l}");
                }
            }
            if let Some(n) = &report.notice {
                let _ = writeln!(err, "hypothesis not met: {n}");
            }
            report.code
        }
        Err(e) => {
            let code = if e.is_hypothesis_failure() { 2 } else { 1 };
            if json {
                let _ = writeln!(out, "{}", json!({"error": e.to_string(), "exit_code": code}));
            }
            let _ = writeln!(err, "error: {e}");
            code
        }
    }
}

fn dispatch(cmd: Command, mut ctx: Ctx) -> Result<Report> {
    match cmd {
        Command::Scenario { action } => {
            ctx.command = "scenario";
            scenario_cmd(action, &ctx)
        }
        Command::Linear { common, grid } => {
            ctx.command = "linear";
            linear_cmd(&common, grid, &ctx)
        }
        Command::Average { common, region, grid } => {
            ctx.command = "average";
            average_cmd(&common, region.as_deref(), grid, &ctx)
        }
        Command::Degree { common, region, grid } => {
            ctx.command = "degree";
            degree_cmd(&common, region.as_deref(), grid, &ctx)
        }
        Command::Index { common, lambda, u, v } => {
            ctx.command = "index";
            index_cmd(&common, &lambda, &u, v.as_deref(), &ctx)
        }
        Command::Branch {
            common,
            region,
            lambda_max,
            step0,
        } => {
            ctx.command = "branch";
            branch_cmd(&common, region.as_deref(), lambda_max, step0, &ctx)
        }
        Command::Triples {
            common,
            input,
            stride,
            grid,
        } => {
            ctx.command = "triples";
            triples_cmd(&common, &input, stride, grid, &ctx)
        }
        Command::Plot {
            input,
            x,
            y,
            out,
            title,
            ..
        } => {
            ctx.command = "plot";
            plot_cmd(&input, &x, &y, &out, title, &ctx)
        }
        Command::Verify { common } => {
            ctx.command = "verify";
            verify_cmd(&common)
        }
    }
}

/// Loaded scenario plus how it was named, for manifests.
struct Loaded {
    sys: PerturbedCoupledSystem,
    source: String,
}

fn load(common: &Common) -> Result<Loaded> {
    let source = common
        .scenario
        .clone()
        .ok_or_else(|| Error::Invalid("--scenario is required".into()))?;
    let sys = resolve_scenario(&source, common.config.as_deref())?;
    Ok(Loaded { sys, source })
}

fn scenario_json(l: &Loaded) -> Value {
    json!({
        "source": l.source,
        "name": l.sys.name,
        "sha256": scenario_hash(&l.sys),
        "constants": l.sys.constants,
    })
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn manifest(ctx: &Ctx, scenario: Option<Value>, options: Value, tolerances: Value, out: &Path, sha: &str) -> Value {
    json!({
        "tool": "harmonic",
        "version": env!("CARGO_PKG_VERSION"),
        "command": ctx.command,
        "argv": ctx.argv[1..],
        "scenario": scenario,
        "options": options,
        "tolerances": tolerances,
        "output": {
            "file": out.file_name().map(|n| n.to_string_lossy().into_owned()),
            "sha256": sha,
        },
        "created_unix": unix_now(),
    })
}

fn emit_table(
    ctx: &Ctx,
    table: &Table,
    out: &Path,
    scenario: Option<Value>,
    options: Value,
    tolerances: Value,
    report: &mut Report,
) -> Result<()> {
    let sha = table.write(out)?;
    write_manifest(out, &manifest(ctx, scenario, options, tolerances, out, &sha))?;
    report.line(format!("wrote {} ({} rows)", out.display(), table.rows.len()));
    report.set("output", out.display().to_string());
    Ok(())
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| fmt_sig(*x)).collect();
    format!("[{}]", parts.join(", "))
}

fn region_for(sys: &PerturbedCoupledSystem, region: Option<&str>) -> Result<Region> {
    match region.or(sys.region.as_deref()) {
        Some(r) => r.parse(),
        None => Err(Error::Invalid(format!(
            "scenario `{}` has no default region; pass --region",
            sys.name
        ))),
    }
}

fn linear_stage(sys: &PerturbedCoupledSystem, tol: f64) -> Result<(Monodromy, PeriodicTrajectory)> {
    let m = fundamental_matrix(sys, tol)?;
    require_nonresonant(&m, RESONANCE_THRESHOLD)?;
    let xhat = periodic_solution_linear(sys, &m, tol)?;
    Ok((m, xhat))
}

fn scenario_cmd(action: ScenarioAction, ctx: &Ctx) -> Result<Report> {
    let mut r = Report::default();
    match action {
        ScenarioAction::List { .. } => {
            let mut list = Vec::new();
            for name in builtin_names() {
                let sys = builtin_scenario(name)?;
                let desc = sys.description.clone().unwrap_or_default();
                r.line(format!("{name:<14} k={} s={} d={}  {desc}", sys.k, sys.s, sys.manifold_dim()));
                list.push(json!({"name": name, "k": sys.k, "s": sys.s, "d": sys.manifold_dim(), "description": desc}));
            }
            r.set("scenarios", list);
        }
        ScenarioAction::Show {
            name,
            scenario,
            config,
            out,
            ..
        } => {
            let source = name
                .or(scenario)
                .ok_or_else(|| Error::Invalid("scenario show needs a name".into()))?;
            let loaded = Loaded {
                sys: resolve_scenario(&source, config.as_deref())?,
                source,
            };
            let doc = emit_scenario(&loaded.sys);
            let text = serde_json::to_string_pretty(&doc)? + "\n";
            if let Some(out) = out {
                atomic_write(&out, text.as_bytes())?;
                let sha = sha256_hex(text.as_bytes());
                write_manifest(
                    &out,
                    &manifest(ctx, Some(scenario_json(&loaded)), json!({}), json!({}), &out, &sha),
                )?;
                r.line(format!("wrote {}", out.display()));
            } else {
                r.lines.extend(text.lines().map(str::to_string));
            }
            r.set("scenario", doc);
            r.set("sha256", scenario_hash(&loaded.sys));
        }
    }
    Ok(r)
}

fn linear_cmd(common: &Common, grid: Option<usize>, ctx: &Ctx) -> Result<Report> {
    let loaded = load(common)?;
    let sys = &loaded.sys;
    let tol = common.tol.unwrap_or(1e-12);
    let mut r = Report::default();
    let m = fundamental_matrix(sys, tol)?;
    r.line(format!(
        "linear: det(I - Phi(T)) = {}, det Phi(T) = {}, liouville residual = {:.3e}",
        fmt_sig(m.det_i_minus_phi_t),
        fmt_sig(m.det_phi_t()),
        m.liouville_residual()
    ));
    r.set("det_i_minus_phi_t", m.det_i_minus_phi_t);
    r.set("liouville_residual", m.liouville_residual());
    require_nonresonant(&m, RESONANCE_THRESHOLD)?;
    let xhat = periodic_solution_linear(sys, &m, tol)?;
    r.line(format!(
        "periodic solution: x̂(0) = {}, periodicity residual = {:.3e}",
        fmt_vec(xhat.initial_value()),
        xhat.residual
    ));
    r.set("xhat0", xhat.initial_value().to_vec());
    r.set("residual", xhat.residual);
    if let Some(out) = &common.out {
        let n = grid.unwrap_or(200).max(1);
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=sys.k).map(|i| format!("x{i}")));
        let mut table = Table::new(cols);
        for (t, x) in xhat.sample_uniform(n) {
            let mut row = vec![t];
            row.extend(x);
            table.push(row);
        }
        emit_table(
            ctx,
            &table,
            out,
            Some(scenario_json(&loaded)),
            json!({"grid": n}),
            json!({"integrator": tol, "resonance_threshold": RESONANCE_THRESHOLD}),
            &mut r,
        )?;
    }
    Ok(r)
}

fn zeros_lines(r: &mut Report, zeros: &[crate::average::ZeroRecord]) {
    for z in zeros {
        r.line(format!(
            "  zero at q = {} (coords {}), sign {:+}, |w| = {:.1e}",
            fmt_vec(&z.location),
            fmt_vec(&z.coords),
            z.sign,
            z.residual
        ));
    }
    r.set(
        "zeros",
        zeros
            .iter()
            .map(|z| json!({"q": z.location, "coords": z.coords, "sign": z.sign, "residual": z.residual}))
            .collect::<Vec<_>>(),
    );
}

fn sample_axes(region: &Region, n: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![Vec::new()];
    for (a, b) in region.lo().iter().zip(region.hi()) {
        let vals: Vec<f64> = (0..n)
            .map(|i| if n == 1 { 0.5 * (a + b) } else { a + (b - a) * i as f64 / (n - 1) as f64 })
            .collect();
        pts = pts
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    pts
}

fn average_cmd(common: &Common, region: Option<&str>, grid: Option<usize>, ctx: &Ctx) -> Result<Report> {
    let loaded = load(common)?;
    let sys = &loaded.sys;
    let tol = common.tol.unwrap_or(1e-12);
    let mut r = Report::default();
    let (_, xhat) = linear_stage(sys, tol.max(1e-12))?;
    let w = averaged_field(sys, &xhat, 16)?;
    let region = region_for(sys, region)?;
    r.line(format!(
        "average: {} quadrature nodes, max normal component {:.1e}",
        w.nodes(),
        w.max_normal_component(64)?
    ));
    r.set("nodes", w.nodes());
    match find_zeros(&w, &region, None, tol) {
        Ok(zeros) => {
            r.line(format!("zeros in {region}: {}", zeros.len()));
            zeros_lines(&mut r, &zeros);
        }
        Err(e @ Error::DegenerateZero { .. }) => r.line(format!("zeros in {region}: not isolated ({e})")),
        Err(e) => return Err(e),
    }
    if let Some(out) = &common.out {
        let n = grid.unwrap_or(if region.dim() == 1 { 101 } else { 21 }).max(1);
        let table = field_table(sys, &w, &region, n)?;
        emit_table(
            ctx,
            &table,
            out,
            Some(scenario_json(&loaded)),
            json!({"region": region.to_string(), "grid": n}),
            json!({"integrator": tol, "zero_newton": tol}),
            &mut r,
        )?;
    }
    Ok(r)
}

fn field_table(sys: &PerturbedCoupledSystem, w: &AveragedField<'_>, region: &Region, n: usize) -> Result<Table> {
    let mut cols: Vec<String> = Vec::new();
    let chart = match region {
        Region::Chart { name, .. } => {
            let c = sys
                .chart(name)
                .ok_or_else(|| Error::Invalid(format!("no chart `{name}`")))?;
            cols.extend(c.params.iter().cloned());
            Some(c)
        }
        Region::Box { .. } => None,
    };
    cols.extend((1..=sys.s).map(|i| format!("q{i}")));
    cols.extend((1..=sys.s).map(|i| format!("w{i}")));
    let mut table = Table::new(cols);
    for u in sample_axes(region, n) {
        let q = match chart {
            Some(c) => c.eval(&u)?,
            None => u.clone(),
        };
        let mut row = if chart.is_some() { u } else { Vec::new() };
        let wq = w.eval(&q)?;
        row.extend(q);
        row.extend(wq);
        table.push(row);
    }
    Ok(table)
}

fn degree_cmd(common: &Common, region: Option<&str>, grid: Option<usize>, ctx: &Ctx) -> Result<Report> {
    let loaded = load(common)?;
    let sys = &loaded.sys;
    let tol = common.tol.unwrap_or(1e-12);
    let mut r = Report::default();
    let (_, xhat) = linear_stage(sys, 1e-12)?;
    let w = averaged_field(sys, &xhat, 16)?;
    let region = region_for(sys, region)?;
    let res = match brouwer_degree(&w, &region, grid, tol) {
        Err(Error::DegenerateZero { location, margin }) => {
            return Err(Error::Hypothesis(format!(
                "w has a degenerate zero near {} (|det| = {margin:.1e}); its zeros are not isolated and the degree is undefined",
                fmt_vec(&location)
            )))
        }
        other => other?,
    };
    r.line(format!("degree = {}", res.value));
    let oracle = match res.oracle {
        Some((m, v)) => format!(", {} = {v}", m.name()),
        None => String::new(),
    };
    r.line(format!(
        "  region {region}: sign-sum over {} zeros{oracle}",
        res.zeros.len()
    ));
    zeros_lines(&mut r, &res.zeros);
    r.set("degree", res.value);
    r.set("region", region.to_string());
    if let Some((m, v)) = res.oracle {
        r.set("oracle", json!({"method": m.name(), "value": v}));
    }
    if let Some(out) = &common.out {
        if res.zeros.is_empty() {
            r.line("no zeros: nothing written");
        } else {
            let d = res.zeros[0].coords.len();
            let mut cols: Vec<String> = (1..=d).map(|i| format!("u{i}")).collect();
            cols.extend((1..=sys.s).map(|i| format!("q{i}")));
            cols.push("sign".into());
            let mut table = Table::new(cols);
            for z in &res.zeros {
                let mut row = z.coords.clone();
                row.extend(&z.location);
                row.push(z.sign as f64);
                table.push(row);
            }
            emit_table(
                ctx,
                &table,
                out,
                Some(scenario_json(&loaded)),
                json!({"region": region.to_string(), "grid": grid}),
                json!({"zero_newton": tol}),
                &mut r,
            )?;
        }
    }
    if res.value == 0 {
        r.hypothesis(format!("deg(w, {region}) = 0, no branch is guaranteed"));
    }
    Ok(r)
}

fn index_cmd(common: &Common, lambdas: &[f64], u: &str, v: Option<&str>, ctx: &Ctx) -> Result<Report> {
    let loaded = load(common)?;
    let sys = &loaded.sys;
    let mut r = Report::default();
    let u_region: Region = u.parse()?;
    let Region::Box { lo, hi } = &u_region else {
        return Err(Error::Invalid("--U must be a box".into()));
    };
    let v = region_for(sys, v)?;
    let mut opts = IndexOptions::default();
    if let Some(t) = common.tol {
        opts.fixed.tol = t;
    }
    if sys.manifold_dim() > 1 {
        opts.seeds_v = 5;
    }
    if sys.k > 1 {
        opts.seeds_u = 3;
    }
    let rep = index_formula_check(sys, lo, hi, &v, lambdas, &opts)?;
    r.line(format!(
        "x̂(0) = {} ({} U), deg(w, V) = {}",
        fmt_vec(&rep.xhat0),
        if rep.xhat0_in_u { "in" } else { "not in" },
        rep.degree
    ));
    let mut table = Table::new(["lambda", "fixed_points", "index_sum", "lhs", "rhs", "holds"]);
    let mut rows = Vec::new();
    for row in &rep.rows {
        r.line(format!(
            "lambda = {}: |sum ind| = {} over {} fixed points, 1_U(x̂(0)) |deg(w, V)| = {}  {}",
            fmt_sig(row.lambda),
            row.lhs,
            row.fixed_points.len(),
            row.rhs,
            if row.holds { "ok" } else { "MISMATCH" }
        ));
        table.push(vec![
            row.lambda,
            row.fixed_points.len() as f64,
            row.index_sum as f64,
            row.lhs as f64,
            row.rhs as f64,
            if row.holds { 1.0 } else { 0.0 },
        ]);
        rows.push(json!({"lambda": row.lambda, "lhs": row.lhs, "rhs": row.rhs, "index_sum": row.index_sum,
            "fixed_points": row.fixed_points.len(), "holds": row.holds}));
    }
    r.set("degree", rep.degree);
    r.set("xhat0", rep.xhat0.clone());
    r.set("rows", rows);
    if let Some(out) = &common.out {
        emit_table(
            ctx,
            &table,
            out,
            Some(scenario_json(&loaded)),
            json!({"lambda": lambdas, "U": u_region.to_string(), "V": v.to_string(),
                "seeds_u": opts.seeds_u, "seeds_v": opts.seeds_v}),
            json!({"fixed_point": opts.fixed.tol, "flow": opts.fixed.flow_tol}),
            &mut r,
        )?;
    }
    if !rep.holds() {
        r.code = 1;
        r.line("index identity fails");
    }
    Ok(r)
}

fn branch_cmd(common: &Common, region: Option<&str>, lambda_max: f64, step0: Option<f64>, ctx: &Ctx) -> Result<Report> {
    let loaded = load(common)?;
    let sys = &loaded.sys;
    let mut r = Report::default();
    let (_, xhat) = linear_stage(sys, 1e-12)?;
    let w = averaged_field(sys, &xhat, 16)?;
    let region = region_for(sys, region)?;
    let set = seed_branches(sys, &region, &xhat, &w)?;
    let deg = set.degree.map_or("undefined".to_string(), |d| d.to_string());
    r.line(format!("seeds: {} in {region} (deg(w) = {deg})", set.seeds.len()));
    for wmsg in &set.warnings {
        r.line(format!("  warning: {wmsg}"));
    }
    if set.seeds.is_empty() {
        return Err(Error::Hypothesis(format!("no regular zero of w in {region}")));
    }
    let mut opts = ContinuationOptions {
        lambda_max,
        region: Some(region.clone()),
        ..Default::default()
    };
    if let Some(h) = step0 {
        opts.step0 = h;
        opts.step_max = opts.step_max.max(h);
    }
    if let Some(t) = common.tol {
        opts.tol = t;
    }
    let branches = continue_all(sys, &set.seeds, &opts)?;
    let mut cols = vec!["seed_id".to_string(), "point_index".into(), "lambda".into()];
    cols.extend((1..=sys.k).map(|i| format!("p{i}")));
    cols.extend((1..=sys.s).map(|i| format!("q{i}")));
    cols.push("residual".into());
    cols.push("index".into());
    let derived_names: Vec<String> = sys.derived_values(0.0)?.into_iter().map(|(n, _)| n).collect();
    cols.extend(derived_names.iter().cloned());
    let mut table = Table::new(cols);
    let mut summaries = Vec::new();
    for b in &branches {
        let (lo, hi) = b.lambda_range();
        r.line(format!(
            "branch {}: {} points, lambda in [{}, {}], {}, max residual {:.1e}, max rk4 residual {:.1e}",
            b.seed.id,
            b.points.len(),
            fmt_sig(lo),
            fmt_sig(hi),
            b.termination,
            b.max_residual(),
            b.max_rk4_residual()
        ));
        if let Some(end) = &b.trivial_end {
            r.line(format!("  returned to lambda = 0 at p = {}, q = {}", fmt_vec(&end.p), fmt_vec(&end.q)));
        }
        if b.termination == Termination::ClosedLoop {
            r.line("  warning: closed loop");
        }
        for (i, pt) in b.points.iter().enumerate() {
            let rec = &pt.record;
            let mut row = vec![b.seed.id as f64, i as f64, rec.lambda];
            row.extend(&rec.p);
            row.extend(&rec.q);
            row.push(rec.residual);
            row.push(rec.index.unwrap_or(0) as f64);
            row.extend(sys.derived_values(rec.lambda)?.into_iter().map(|(_, v)| v));
            table.push(row);
        }
        summaries.push(json!({
            "seed_id": b.seed.id, "seed_q": b.seed.q, "points": b.points.len(),
            "termination": b.termination.name(), "lambda_min": lo, "lambda_max": hi,
            "max_residual": b.max_residual(), "max_rk4_residual": b.max_rk4_residual(),
            "arclength": b.arclength,
        }));
    }
    r.set("degree", set.degree);
    r.set("branches", summaries);
    if let Some(out) = &common.out {
        emit_table(
            ctx,
            &table,
            out,
            Some(scenario_json(&loaded)),
            json!({"region": region.to_string(), "lambda_max": opts.lambda_max, "step0": opts.step0,
                "step_min": opts.step_min, "step_max": opts.step_max, "max_points": opts.max_points}),
            json!({"corrector": opts.tol, "flow": opts.flow_tol, "rk4_accept": crate::branch::RK4_ACCEPT}),
            &mut r,
        )?;
    }
    if set.guarantee_void {
        r.hypothesis(format!("deg(w, {region}) is {deg}; branches are not guaranteed"));
    }
    Ok(r)
}

fn scenario_from_manifest(input: &Path) -> Result<Loaded> {
    let m = read_manifest(input)?.ok_or_else(|| {
        Error::Invalid(format!("{} has no manifest; pass --scenario", input.display()))
    })?;
    let sc = &m["scenario"];
    let source = sc["source"]
        .as_str()
        .ok_or_else(|| Error::Invalid("manifest lacks scenario.source".into()))?
        .to_string();
    let mut overrides = BTreeMap::new();
    if let Some(obj) = sc["constants"].as_object() {
        for (k, v) in obj {
            if let Some(x) = v.as_f64() {
                overrides.insert(k.clone(), x);
            }
        }
    }
    let sys = resolve_scenario_with(&source, &overrides)?;
    if let Some(h) = sc["sha256"].as_str() {
        if h != scenario_hash(&sys) {
            return Err(Error::Invalid(format!(
                "scenario `{source}` changed since {} was written",
                input.display()
            )));
        }
    }
    Ok(Loaded { sys, source })
}

fn triples_cmd(common: &Common, input: &Path, stride: usize, grid: Option<usize>, ctx: &Ctx) -> Result<Report> {
    if stride == 0 {
        return Err(Error::Invalid("--stride must be positive".into()));
    }
    let loaded = match &common.scenario {
        Some(_) => load(common)?,
        None => scenario_from_manifest(input)?,
    };
    let sys = &loaded.sys;
    let tol = common.tol.unwrap_or(1e-12);
    let table = Table::read(input)?;
    let seed_ids = table.column("seed_id")?;
    let idx = table.column("point_index")?;
    let lambdas = table.column("lambda")?;
    let ps: Vec<Vec<f64>> = (1..=sys.k).map(|i| table.column(&format!("p{i}"))).collect::<Result<_>>()?;
    let qs: Vec<Vec<f64>> = (1..=sys.s).map(|i| table.column(&format!("q{i}"))).collect::<Result<_>>()?;
    let n = grid.unwrap_or(200).max(1);
    let mut cols = vec!["seed_id".to_string(), "point_index".into(), "lambda".into(), "t".into()];
    cols.extend((1..=sys.k).map(|i| format!("x{i}")));
    cols.extend((1..=sys.s).map(|i| format!("y{i}")));
    let mut out = Table::new(cols);
    let mut r = Report::default();
    let (mut count, mut worst, mut drift) = (0usize, 0.0f64, 0.0f64);
    for row in 0..table.rows.len() {
        if (idx[row] as usize) % stride != 0 {
            continue;
        }
        let p: Vec<f64> = ps.iter().map(|c| c[row]).collect();
        let q: Vec<f64> = qs.iter().map(|c| c[row]).collect();
        let tr = lift_starting_triple(sys, lambdas[row], &p, &q, tol)?;
        worst = worst.max(tr.residual);
        drift = drift.max(tr.max_constraint_violation);
        count += 1;
        for (t, z) in tr.sample(n) {
            let mut line = vec![seed_ids[row], idx[row], lambdas[row], t];
            line.extend(z);
            out.push(line);
        }
    }
    r.line(format!(
        "triples: {count} orbits, max periodicity residual {worst:.1e}, max constraint violation {drift:.1e}"
    ));
    r.set("orbits", count);
    r.set("max_residual", worst);
    r.set("max_constraint_violation", drift);
    if let Some(o) = &common.out {
        emit_table(
            ctx,
            &out,
            o,
            Some(scenario_json(&loaded)),
            json!({"input": input.display().to_string(), "stride": stride, "grid": n}),
            json!({"integrator": tol}),
            &mut r,
        )?;
    }
    Ok(r)
}

fn plot_cmd(input: &Path, x: &str, y: &str, out: &Path, title: Option<String>, ctx: &Ctx) -> Result<Report> {
    let table = Table::read(input)?;
    let mut spec = PlotSpec::new(x, y);
    spec.title = title;
    spec.group = if table.column_index("t").is_some() && table.column_index("point_index").is_some() {
        Some("point_index".into())
    } else if table.column_index("seed_id").is_some() {
        Some("seed_id".into())
    } else {
        None
    };
    let svg = render_svg(&table, &spec)?;
    atomic_write(out, svg.as_bytes())?;
    let sha = sha256_hex(svg.as_bytes());
    let scenario = read_manifest(input)?.map(|m| m["scenario"].clone());
    write_manifest(
        out,
        &manifest(
            ctx,
            scenario,
            json!({"input": input.display().to_string(), "x": x, "y": y}),
            json!({}),
            out,
            &sha,
        ),
    )?;
    let mut r = Report::default();
    r.line(format!("wrote {} ({} points, {x} against {y})", out.display(), table.rows.len()));
    r.set("output", out.display().to_string());
    Ok(r)
}

/// One line of `verify`.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub skipped: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            pass,
            skipped: false,
            detail,
        }
    }

    fn skip(name: &str, detail: String) -> Self {
        Check {
            name: name.into(),
            pass: true,
            skipped: true,
            detail,
        }
    }
}

/// The invariant suite for one scenario, module by module. Checks that do
/// not apply (no isolated zeros, zero degree) are reported as skipped.
pub fn verify_scenario(sys: &PerturbedCoupledSystem) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let tan = check_tangency(sys, 200, 1e-8)?;
    checks.push(Check::new(
        "tangency",
        tan.pass,
        format!("max normal component of f2 {:.1e} over {} samples", tan.max_normal_component, tan.samples),
    ));
    let m = fundamental_matrix(sys, 1e-12)?;
    let nonres = m.det_i_minus_phi_t.abs() >= RESONANCE_THRESHOLD;
    checks.push(Check::new(
        "non-resonance",
        nonres,
        format!("|det(I - Phi(T))| = {:.3e}", m.det_i_minus_phi_t.abs()),
    ));
    if !nonres {
        return Err(Error::Resonance(m.det_i_minus_phi_t.abs()));
    }
    checks.push(Check::new(
        "liouville",
        m.liouville_residual() < 1e-6,
        format!("|det Phi(T) - exp(int tr A)| = {:.1e}", m.liouville_residual()),
    ));
    let xhat = periodic_solution_linear(sys, &m, 1e-12)?;
    checks.push(Check::new(
        "periodic solution",
        xhat.residual < 1e-8,
        format!("|x̂(T) - x̂(0)| = {:.1e}", xhat.residual),
    ));
    let w = averaged_field(sys, &xhat, 16)?;
    let normal = w.max_normal_component(64)?;
    checks.push(Check::new(
        "averaged field tangent",
        normal < 1e-8,
        format!("max normal component {normal:.1e}"),
    ));

    let region = sys.region.as_deref().map(str::parse::<Region>).transpose()?;
    let degree = match &region {
        None => {
            checks.push(Check::skip("degree", "no default region".into()));
            None
        }
        Some(reg) => match brouwer_degree(&w, reg, None, 1e-12) {
            Ok(res) => {
                let oracle = res.oracle.map(|(_, v)| v);
                checks.push(Check::new(
                    "degree",
                    oracle.is_none_or(|o| o == res.value),
                    format!("deg(w, {reg}) = {} (oracle {:?}, {} zeros)", res.value, oracle, res.zeros.len()),
                ));
                Some(res)
            }
            Err(Error::DegenerateZero { location, .. }) => {
                checks.push(Check::skip(
                    "degree",
                    format!("zeros of w are not isolated (degenerate zero near {})", fmt_vec(&location)),
                ));
                None
            }
            Err(e) => return Err(e),
        },
    };

    let p0 = xhat.initial_value().to_vec();
    let q0 = match degree.as_ref().and_then(|d| d.zeros.first()) {
        Some(z) => z.location.clone(),
        None => sys.probe_points(1)?.remove(0),
    };
    let triv = flow(sys, 0.0, &p0, &q0, sys.period, 1e-12)?;
    let back = triv
        .final_state
        .iter()
        .zip(p0.iter().chain(&q0))
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    checks.push(Check::new(
        "trivial triple",
        back < 1e-8,
        format!("|P^0(x̂(0), q) - (x̂(0), q)| = {back:.1e}"),
    ));
    let mut worst = 0.0f64;
    for lambda in [0.0, 0.05] {
        worst = worst.max(check_jacobian(Model::Full(sys), lambda, &p0, &q0, 1e-12)?.discrepancy);
    }
    checks.push(Check::new(
        "jacobian",
        worst < 1e-5,
        format!("variational vs finite differences, worst relative {worst:.1e} at lambda in {{0, 0.05}}"),
    ));

    match (&region, &degree) {
        (Some(v), Some(res)) if res.value != 0 => {
            let lo: Vec<f64> = p0.iter().map(|x| x - 1.0).collect();
            let hi: Vec<f64> = p0.iter().map(|x| x + 1.0).collect();
            let opts = IndexOptions {
                seeds_u: if sys.k > 1 { 2 } else { 3 },
                seeds_v: if sys.manifold_dim() > 1 { 3 } else { 5 },
                ..Default::default()
            };
            let rep = index_formula_check(sys, &lo, &hi, v, &[0.01], &opts)?;
            let row = &rep.rows[0];
            checks.push(Check::new(
                "index identity",
                rep.holds(),
                format!("lambda = 0.01: |sum ind| = {}, 1_U(x̂(0)) |deg(w, V)| = {}", row.lhs, row.rhs),
            ));
            let xhat_w = w;
            let set = seed_branches(sys, v, &xhat, &xhat_w)?;
            let opts = ContinuationOptions {
                lambda_max: 0.05,
                max_points: 200,
                region: Some(v.clone()),
                ..Default::default()
            };
            let mut ok = true;
            let mut detail = Vec::new();
            for seed in &set.seeds {
                let b = continue_branch(sys, seed, &opts)?;
                let first = b.points.get(1).map(|pt| {
                    let r = &pt.record;
                    (r.lambda.powi(2)
                        + r.p.iter().zip(&seed.p).chain(r.q.iter().zip(&seed.q)).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                    .sqrt()
                });
                let good = b.termination == Termination::LambdaMaxReached
                    && b.max_residual() < 1e-8
                    && b.max_rk4_residual() < 1e-6
                    && first.is_some_and(|d| d < 2.0 * opts.step0);
                ok &= good;
                let last = &b.points.last().unwrap().record;
                let tr = lift_starting_triple(sys, last.lambda, &last.p, &last.q, 1e-12)?;
                ok &= tr.residual < 1e-8 && tr.max_constraint_violation < 1e-8;
                detail.push(format!(
                    "seed {}: {} points, {}, residual {:.1e}, rk4 {:.1e}, orbit residual {:.1e}",
                    seed.id,
                    b.points.len(),
                    b.termination,
                    b.max_residual(),
                    b.max_rk4_residual(),
                    tr.residual
                ));
            }
            checks.push(Check::new("branch", ok && !set.seeds.is_empty(), detail.join("; ")));
        }
        _ => {
            checks.push(Check::skip("index identity", "degree undefined or zero".into()));
            checks.push(Check::skip("branch", "no regular zeros to seed from".into()));
        }
    }
    Ok(checks)
}

fn verify_cmd(common: &Common) -> Result<Report> {
    let loaded = load(common)?;
    let checks = verify_scenario(&loaded.sys)?;
    let mut r = Report::default();
    let mut all = true;
    for c in &checks {
        let tag = if c.skipped {
            "skip"
        } else if c.pass {
            "ok"
        } else {
            "FAIL"
        };
        all &= c.pass;
        r.line(format!("{tag:<4} {:<24} {}", c.name, c.detail));
    }
    r.line(format!(
        "verify {}: {}",
        loaded.sys.name,
        if all { "all checks pass" } else { "FAILED" }
    ));
    r.set(
        "checks",
        checks
            .iter()
            .map(|c| json!({"name": c.name, "pass": c.pass, "skipped": c.skipped, "detail": c.detail}))
            .collect::<Vec<_>>(),
    );
    r.set("pass", all);
    if !all {
        r.code = 1;
    }
    Ok(r)
}
