//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 solver failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::complex::{assemble_operators, exactness_check, OperatorBundle};
use crate::constants::{compute_constants_with, ConstantsReport};
use crate::domain::{enumerate_dofs, make_box, make_rect, parse_domain, DomainKind, DomainSpec};
use crate::eigensolve::{smallest_eigenpairs_with, EigenOptions, DEFAULT_SEED, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::verify::{
    duality_2d_check, lower_bound_check, orders_from_reports, verify_chain, DEFAULT_CHAIN_TOL,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Significant digits of every serialized real.
pub const SIG_DIGITS: usize = 12;

#[derive(Debug, Parser)]
#[command(name = "maxconst", version, about = "Poincaré, Friedrichs and Maxwell constants of box domains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the four constants and write a JSON report.
    Compute(ComputeArgs),
    /// Compute (or load) a report and check the inequality chain.
    Verify(VerifyArgs),
    /// Tabulate constants over resolutions and box aspect ratios.
    Sweep(SweepArgs),
    /// Smallest eigenvalues of one operator.
    Spectrum(SpectrumArgs),
    /// Check the exact discrete complex identities.
    CheckOps(CheckOpsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OperatorName {
    /// Dirichlet node Laplacian.
    Ld,
    /// Neumann cell Laplacian (constants deflated).
    Ln,
    /// Tangential Maxwell operator.
    At,
    /// Normal Maxwell operator.
    An,
}

#[derive(Debug, Args)]
pub struct DomainArgs {
    /// `box:a,b,c`, `rect:a,b` or `union:file.json`.
    #[arg(long)]
    pub domain: String,
    /// Grid spacing.
    #[arg(long)]
    pub h: f64,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Eigensolver residual tolerance.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

impl SolverArgs {
    fn options(&self, k: usize) -> EigenOptions {
        EigenOptions {
            k,
            tol: self.tol,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct ComputeArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Directory for Matrix Market dumps of the assembled operators.
    #[arg(long)]
    pub dump_ops: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, required_unless_present = "report")]
    pub domain: Option<String>,
    #[arg(long, required_unless_present = "report")]
    pub h: Option<f64>,
    /// Verify an existing JSON report instead of computing one.
    #[arg(long, conflicts_with_all = ["domain", "h"])]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Relative tolerance of the chain checks.
    #[arg(long, default_value_t = DEFAULT_CHAIN_TOL)]
    pub chain_tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub domain: String,
    /// Comma-separated grid spacings, coarse to fine.
    #[arg(long, value_delimiter = ',')]
    pub h_list: Vec<f64>,
    /// Comma-separated factors applied to the first side of a box.
    #[arg(long, value_delimiter = ',')]
    pub aspects: Vec<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = DEFAULT_CHAIN_TOL)]
    pub chain_tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long, value_enum)]
    pub operator: OperatorName,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CheckOpsArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dump_ops: Option<PathBuf>,
}

/// Rounds to `SIG_DIGITS` significant digits.
pub fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{:.*e}", SIG_DIGITS - 1, v).parse().unwrap_or(v)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(f) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round_sig(f)) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every real rounded to fixed precision.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    if e.is_config_error() {
        EXIT_CONFIG
    } else {
        EXIT_SOLVER
    }
}

/// Parses arguments and runs one command against the process streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{e}")
            } else {
                write!(stdout, "{e}")
            };
            return code;
        }
    };
    configure_threads();
    match execute(&cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("MAXCONST_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // Fails harmlessly when a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn execute(cmd: &Command, stdout: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Compute(a) => cmd_compute(a, stdout),
        Command::Verify(a) => cmd_verify(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
        Command::Spectrum(a) => cmd_spectrum(a, stdout),
        Command::CheckOps(a) => cmd_check_ops(a, stdout),
    }
}

fn dump_operators(bundle: &OperatorBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let ops = [
        ("G_hat", &bundle.g_hat),
        ("C_t", &bundle.c_t),
        ("W_n", &bundle.w_n),
        ("D_act", &bundle.d_act),
        ("A_t", &bundle.a_t),
        ("A_n", &bundle.a_n),
        ("L_D", &bundle.l_d),
        ("L_N", &bundle.l_n),
    ];
    for (name, op) in ops {
        op.write_matrix_market(&dir.join(format!("{name}.mtx")))?;
    }
    Ok(())
}

const CSV_HEADER: [&str; 14] = [
    "domain",
    "h",
    "cp0",
    "cmt",
    "cmn",
    "cp",
    "diam_over_pi",
    "margin_cmt_cp0",
    "margin_cmn_cmt",
    "chain_pass",
    "order_lambda1",
    "order_mu2",
    "order_nu_t",
    "order_nu_n",
];

fn fmt_num(v: f64) -> String {
    format!("{}", round_sig(v))
}

fn csv_row(r: &ConstantsReport, chain_tol: f64, orders: Option<[f64; 4]>) -> Vec<String> {
    let c = &r.constants;
    let mut row = vec![
        r.domain.clone(),
        r.h.map(fmt_num).unwrap_or_default(),
        fmt_num(c.cp0),
        fmt_num(c.cmt),
        fmt_num(c.cmn),
        fmt_num(c.cp),
        fmt_num(r.diam_over_pi),
        fmt_num(c.cmt - c.cp0),
        fmt_num(c.cmn - c.cmt),
        verify_chain(r, chain_tol).pass.to_string(),
    ];
    match orders {
        Some(o) => row.extend(o.iter().map(|&v| fmt_num(v))),
        None => row.extend(std::iter::repeat(String::new()).take(4)),
    }
    row
}

fn write_csv(rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn cmd_compute(a: &ComputeArgs, stdout: &mut dyn Write) -> Result<i32> {
    let spec = parse_domain(&a.domain.domain, a.domain.h)?;
    if let Some(dir) = &a.dump_ops {
        dump_operators(&assemble_operators(&enumerate_dofs(&spec)?)?, dir)?;
    }
    let (report, _) = compute_constants_with(&spec, &a.solver.options(1))?;
    let text = match a.format {
        Format::Json => to_json(&report)?,
        Format::Csv => write_csv(&[csv_row(&report, DEFAULT_CHAIN_TOL, None)])?,
    };
    emit(&text, a.out.as_deref(), stdout)?;
    Ok(EXIT_OK)
}

/// Verdict document for a report: the chain, plus lower bounds on
/// nonconvex domains.
pub fn verification(report: &ConstantsReport, chain_tol: f64) -> (Value, bool) {
    let chain = verify_chain(report, chain_tol);
    let mut pass = chain.pass;
    let mut doc = json!({ "chain_tol": chain_tol, "chain": chain });
    if !report.convex {
        let lower = lower_bound_check(report, chain_tol);
        pass &= lower.pass;
        doc["lower_bounds"] = serde_json::to_value(&lower).unwrap_or(Value::Null);
    }
    doc["pass"] = Value::Bool(pass);
    (doc, pass)
}

fn cmd_verify(a: &VerifyArgs, stdout: &mut dyn Write) -> Result<i32> {
    let report: ConstantsReport = match &a.report {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => {
            let domain = a.domain.as_deref().unwrap_or_default();
            let h = a.h.unwrap_or_default();
            let spec = parse_domain(domain, h)?;
            compute_constants_with(&spec, &a.solver.options(1))?.0
        }
    };
    let (doc, pass) = verification(&report, a.chain_tol);
    let mut out = serde_json::to_value(&report)?;
    out["verification"] = doc;
    emit(&to_json(&out)?, a.out.as_deref(), stdout)?;
    Ok(if pass { EXIT_OK } else { EXIT_VERIFY })
}

fn cmd_sweep(a: &SweepArgs, stdout: &mut dyn Write) -> Result<i32> {
    if a.h_list.is_empty() {
        return Err(Error::InvalidArgument("empty h-list".into()));
    }
    let base = parse_domain(&a.domain, a.h_list[0])?;
    let domains: Vec<DomainSpec> = if a.aspects.is_empty() {
        vec![base]
    } else {
        let sides = match (base.kind, base.box_sides()) {
            (DomainKind::Box3, Some(s)) => s,
            _ => return Err(Error::InvalidArgument("aspect sweeps need a box domain".into())),
        };
        a.aspects
            .iter()
            .map(|&f| make_box([sides[0] * f, sides[1], sides[2]], a.h_list[0]))
            .collect::<Result<_>>()?
    };
    let opts = a.solver.options(1);
    let mut rows = Vec::new();
    let mut reports_json = Vec::new();
    for d in &domains {
        let mut reports = Vec::with_capacity(a.h_list.len());
        for &h in &a.h_list {
            reports.push(compute_constants_with(&d.with_h(h)?, &opts)?.0);
        }
        let orders = if reports.len() >= 2 && reports.iter().all(|r| r.analytic.is_some()) {
            orders_from_reports(&reports)?
        } else {
            Vec::new()
        };
        for (i, r) in reports.iter().enumerate() {
            let o = if i == 0 {
                None
            } else {
                orders.get(i - 1).map(|o| [o.lambda1, o.mu2, o.nu_t, o.nu_n])
            };
            rows.push(csv_row(r, a.chain_tol, o));
        }
        reports_json.push(json!({ "reports": reports, "orders": orders }));
    }
    let text = match a.format {
        Format::Csv => write_csv(&rows)?,
        Format::Json => to_json(&reports_json)?,
    };
    emit(&text, a.out.as_deref(), stdout)?;
    Ok(EXIT_OK)
}

fn cmd_spectrum(a: &SpectrumArgs, stdout: &mut dyn Write) -> Result<i32> {
    if a.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let spec = parse_domain(&a.domain.domain, a.domain.h)?;
    let bundle = assemble_operators(&enumerate_dofs(&spec)?)?;
    let opts = a.solver.options(a.k);
    let (op, deflation) = match a.operator {
        OperatorName::Ld => (&bundle.l_d, vec![]),
        OperatorName::Ln => (&bundle.l_n, vec![vec![1.0; bundle.l_n.rows()]]),
        OperatorName::At => (&bundle.a_t, vec![]),
        OperatorName::An => (&bundle.a_n, vec![]),
    };
    let result = smallest_eigenpairs_with(op, &deflation, &opts)?;
    let name = format!("{:?}", a.operator).to_lowercase();
    let text = match a.format {
        Format::Json => to_json(&json!({
            "domain": spec.to_string(),
            "h": spec.h,
            "operator": name,
            "k": a.k,
            "tol": a.solver.tol,
            "eigenvalues": result.eigenvalues,
            "residuals": result.residuals,
            "converged": result.converged,
            "solver": {
                "method": result.method,
                "seed": result.seed,
                "matvecs": result.matvecs,
            },
        }))?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["index", "eigenvalue", "residual"])?;
            for (i, (l, r)) in result.eigenvalues.iter().zip(&result.residuals).enumerate() {
                w.write_record([i.to_string(), fmt_num(*l), fmt_num(*r)])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            String::from_utf8_lossy(&bytes).into_owned()
        }
    };
    emit(&text, a.out.as_deref(), stdout)?;
    Ok(EXIT_OK)
}

/// Runs the exactness and duality checks. `tamper` may modify the assembled
/// operators before checking, for fault injection.
pub fn check_ops(
    spec: &DomainSpec,
    tamper: Option<&dyn Fn(&mut OperatorBundle)>,
    dump: Option<&Path>,
) -> Result<(Value, bool)> {
    let mut doc = json!({ "domain": spec.to_string(), "h": spec.h });
    let mut pass = true;
    let rect = if spec.dim() == 3 {
        let mut bundle = assemble_operators(&enumerate_dofs(spec)?)?;
        if let Some(t) = tamper {
            t(&mut bundle);
        }
        if let Some(dir) = dump {
            dump_operators(&bundle, dir)?;
        }
        match exactness_check(&bundle) {
            Ok(r) => doc["exactness"] = serde_json::to_value(r)?,
            Err(Error::ExactnessViolation { identity, max_abs }) => {
                pass = false;
                doc["exactness"] = json!({ "violation": identity, "max_abs": max_abs });
            }
            Err(e) => return Err(e),
        }
        // Duality on the rectangle spanned by the first two axes.
        let s = spec.boxes[0].sides;
        make_rect([s[0], s[1]], spec.h)?
    } else {
        spec.clone()
    };
    let duality = duality_2d_check(&rect)?;
    pass &= duality.pass;
    doc["duality_2d"] = serde_json::to_value(&duality)?;
    doc["pass"] = Value::Bool(pass);
    Ok((doc, pass))
}

fn cmd_check_ops(a: &CheckOpsArgs, stdout: &mut dyn Write) -> Result<i32> {
    let spec = parse_domain(&a.domain.domain, a.domain.h)?;
    let (doc, pass) = check_ops(&spec, None, a.dump_ops.as_deref())?;
    emit(&to_json(&doc)?, a.out.as_deref(), stdout)?;
    Ok(if pass { EXIT_OK } else { EXIT_VERIFY })
}

/// Exit code of a check-ops outcome.
pub fn check_ops_exit(result: &Result<(Value, bool)>) -> i32 {
    match result {
        Ok((_, true)) => EXIT_OK,
        Ok((_, false)) => EXIT_VERIFY,
        Err(e) => exit_code(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["maxconst"];
        full.extend_from_slice(args);
        let code = run_with(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_sig(24.0), 24.0);
        assert_eq!(round_sig(0.0), 0.0);
        assert_eq!(round_sig(-2.0 / 3.0e-9), -666666666.667);
    }

    #[test]
    fn config_errors_exit_two() {
        let (code, _, err) = run_capture(&["compute", "--domain", "box:1,1,1", "--h", "1"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("resolution too coarse"));
        let (code, _, err) = run_capture(&["compute", "--domain", "box:1,1,1", "--h", "0.3"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("not a multiple of h"));
        let (code, _, _) = run_capture(&["compute", "--domain", "box:1,1,1"]);
        assert_eq!(code, EXIT_CONFIG);
    }

    #[test]
    fn fault_injected_check_ops_fails() {
        let spec = make_box([1.0; 3], 0.25).unwrap();
        let tamper = |b: &mut OperatorBundle| {
            let (r, c, v) = b.g_hat.triplets().next().unwrap();
            b.g_hat.set_coeff(r, c, v + 2);
        };
        let res = check_ops(&spec, Some(&tamper), None);
        assert_eq!(check_ops_exit(&res), EXIT_VERIFY);
        assert_eq!(check_ops_exit(&check_ops(&spec, None, None)), EXIT_OK);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("check-ops"));
    }
}
