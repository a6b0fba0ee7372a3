//! Command-line front end.
//!
//! Every command prints one JSON document with sorted keys, floats written
//! as `%.12g`, and a `schema_version` field. Exit codes: `0` success, `2`
//! bad input or unsupported request, `3` numerical failure (including a
//! primal/dual gap above tolerance), `4` empty envelope or intersection.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::algebra::{self, BoundMeasure, MeasureExpr};
use crate::aversity;
use crate::error::{Error, Result};
use crate::geometry::{self, HullLimits};
use crate::selftest;
use crate::space::Scenarios;
use crate::uncertainty::{self, AffineFamily, UncertaintySet};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TOL: f64 = 1e-7;
const AVERSITY_TRIALS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Eval,
    Envelope,
    CheckAversity,
    UncertaintySet,
    Algebra,
    Selftest,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "riskenv", version, about = "Coherent risk measures and their risk envelopes")]
pub struct RunConfig {
    /// Scenario file (.json or .csv).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Measure spec, inline JSON or a file path.
    #[arg(long)]
    pub measure: Option<String>,
    /// Measure expression, inline JSON or a file path.
    #[arg(long)]
    pub expr: Option<String>,
    #[arg(long, value_enum)]
    pub command: Command,
    /// Write the JSON document here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Primal/dual agreement tolerance.
    #[arg(long, env = "RISKENV_TOL", default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Also emit facets of the uncertainty set (at most 3 basis variables).
    #[arg(long)]
    pub hrep: bool,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::EmptyIntersection | Error::EmptyEnvelope => 4,
        Error::Numerical(_) | Error::Infeasible => 3,
        _ => 2,
    }
}

/// Parses arguments, runs, writes output, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (code, doc) = match run(&config) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            (
                exit_code(&e),
                json!({"error": e.to_string(), "schema_version": SCHEMA_VERSION}),
            )
        }
    };
    let text = render(&doc);
    let written = match &config.output {
        Some(path) => std::fs::write(path, &text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    };
    match written {
        Ok(()) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a command; the exit code is nonzero only for gap failures and
/// failed self checks, which still produce a document.
pub fn run(config: &RunConfig) -> Result<(i32, Value)> {
    if !(config.tol.is_finite() && config.tol > 0.0) {
        return Err(Error::InvalidSpec(format!("tolerance {} must be positive", config.tol)));
    }
    let (code, mut doc) = match config.command {
        Command::Eval => eval(config)?,
        Command::Envelope => envelope(config)?,
        Command::CheckAversity => check_aversity(config)?,
        Command::UncertaintySet => uncertainty_set(config)?,
        Command::Algebra => algebra_cmd(config)?,
        Command::Selftest => {
            let report = selftest::run(config.seed);
            (if report.passed { 0 } else { 3 }, to_value(&report)?)
        }
    };
    if let Value::Object(map) = &mut doc {
        map.insert("schema_version".into(), json!(SCHEMA_VERSION));
        let name = config.command.to_possible_value().expect("visible variant");
        map.insert("command".into(), json!(name.get_name()));
    }
    Ok((code, doc))
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn scenarios(config: &RunConfig) -> Result<Scenarios> {
    let path = config
        .input
        .as_ref()
        .ok_or_else(|| Error::Schema("--input is required for this command".into()))?;
    Scenarios::from_path(path)
}

fn json_arg(text: &str) -> Result<String> {
    if text.trim_start().starts_with('{') {
        Ok(text.to_string())
    } else {
        Ok(std::fs::read_to_string(Path::new(text))?)
    }
}

/// The `--expr` expression, or `--measure` as a leaf.
fn expression(config: &RunConfig) -> Result<MeasureExpr> {
    match (&config.expr, &config.measure) {
        (Some(e), _) => Ok(serde_json::from_str(&json_arg(e)?)?),
        (None, Some(m)) => Ok(MeasureExpr::Leaf(serde_json::from_str(&json_arg(m)?)?)),
        (None, None) => Err(Error::Schema("--measure or --expr is required".into())),
    }
}

fn eval(config: &RunConfig) -> Result<(i32, Value)> {
    let sc = scenarios(config)?;
    let expr = expression(config)?;
    let measure = BoundMeasure::new(expr.clone(), &sc.space)?;
    let env = measure.envelope(HullLimits::enumeration())?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, x) in &sc.variables {
        let primal = algebra::eval(&expr, &sc.space, x)?;
        let dual = env.support(x)?.value;
        let gap = (primal - dual).abs();
        worst = worst.max(gap);
        rows.push(json!({"variable": name, "primal": primal, "dual": dual, "gap": gap}));
    }
    let ok = worst <= config.tol;
    if !ok {
        eprintln!("error: primal/dual gap {worst:e} exceeds tolerance {:e}", config.tol);
    }
    Ok((
        if ok { 0 } else { 3 },
        json!({
            "measure": expr,
            "results": rows,
            "tolerance": config.tol,
            "max_gap": worst,
            "passed": ok,
        }),
    ))
}

fn envelope(config: &RunConfig) -> Result<(i32, Value)> {
    let sc = scenarios(config)?;
    let expr = expression(config)?;
    let mut env = algebra::envelope(&expr, &sc.space, HullLimits::enumeration())?;
    if config.hrep {
        env = env.to_constraint_rep(HullLimits::enumeration())?;
    }
    Ok((0, json!({"measure": expr, "envelope": env})))
}

fn check_aversity(config: &RunConfig) -> Result<(i32, Value)> {
    let sc = scenarios(config)?;
    let expr = expression(config)?;
    let measure = BoundMeasure::new(expr.clone(), &sc.space)?;
    let env = measure.envelope(HullLimits::enumeration())?;
    let report = aversity::is_averse_with(&measure, &env, HullLimits::enumeration(), AVERSITY_TRIALS, config.seed)?;
    Ok((0, json!({"measure": expr, "report": report})))
}

fn uncertainty_set(config: &RunConfig) -> Result<(i32, Value)> {
    let sc = scenarios(config)?;
    let expr = expression(config)?;
    let names: Vec<&str> = sc.variables.iter().map(|(n, _)| n.as_str()).collect();
    let fam = AffineFamily::new(&sc.space, sc.variables.iter().map(|(_, x)| x.clone()).collect())?;
    let lim = HullLimits::enumeration();
    let u = uncertainty::canonical_uncertainty_set(&expr, &fam, lim)?;
    let UncertaintySet::Vertices { points, .. } = &u else {
        unreachable!("image sets are point lists");
    };
    let mut doc = json!({"measure": expr, "basis": names, "vertices": points});
    if config.hrep {
        if fam.dim() > 3 {
            return Err(Error::RepresentationUnsupported(format!(
                "facets are emitted for at most 3 basis variables, got {}",
                fam.dim()
            )));
        }
        let h = geometry::facets_of_points(points, fam.dim(), lim)?;
        doc["equalities"] = to_value(&h.equalities)?;
        doc["inequalities"] = to_value(&h.inequalities)?;
    }
    Ok((0, doc))
}

fn algebra_cmd(config: &RunConfig) -> Result<(i32, Value)> {
    let sc = scenarios(config)?;
    let expr = expression(config)?;
    expr.validate(&sc.space)?;
    let mut rows = Vec::new();
    for (name, x) in &sc.variables {
        let value = algebra::eval(&expr, &sc.space, x)?;
        rows.push(json!({"variable": name, "value": value}));
    }
    Ok((0, json!({"expr": expr, "results": rows})))
}

/// `%.12g`.
pub fn format_g12(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Indented JSON with sorted keys and `%.12g` floats, newline-terminated.
pub fn render(v: &Value) -> String {
    let mut out = String::new();
    render_into(v, 0, &mut out);
    out.push('\n');
    out
}

fn render_into(v: &Value, depth: usize, out: &mut String) {
    let pad = |d: usize| "  ".repeat(d);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_g12(n.as_f64().expect("f64")));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
            } else if items.iter().all(|i| !i.is_array() && !i.is_object()) {
                out.push('[');
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    render_into(item, depth, out);
                }
                out.push(']');
            } else {
                out.push_str("[\n");
                for (k, item) in items.iter().enumerate() {
                    out.push_str(&pad(depth + 1));
                    render_into(item, depth + 1, out);
                    out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
                }
                out.push_str(&pad(depth));
                out.push(']');
            }
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (k, key) in keys.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                out.push_str(&serde_json::to_string(key).expect("key"));
                out.push_str(": ");
                render_into(&map[*key], depth + 1, out);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push('}');
        }
    }
}
