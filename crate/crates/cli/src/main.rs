use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use valfun_core::coderiv::{Flavor, DEFAULT_BRANCH_CAP};
use valfun_core::firstorder::{first_order, SubdiffEstimate};
use valfun_core::hessian::{hessian, CaseHint, HessianEstimate, HessianOptions, HessianQuery};
use valfun_core::hypothesis::{HypothesisLog, Status};
use valfun_core::kernel::solve_value;
use valfun_core::report::{analyze, verify, Analysis, Body, CheckStatus, Report, Verification};
use valfun_core::{parse_problem, Error, ParametricProblem, PolySet, Result, Tolerances};

/// Exit code for command-line misuse (BSD `EX_USAGE`).
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "valfun", version, about = "Generalized derivative estimates of optimal value functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Eq)]
enum Command {
    /// Value, minimizers, multipliers, index partition and constraint qualifications.
    Analyze(#[command(flatten)] Args),
    /// First-order subdifferential estimate.
    FirstOrder(#[command(flatten)] Args),
    /// Second-order (generalized Hessian) estimate at (xbar, xund) applied to xstar.
    Hessian(#[command(flatten)] Args),
    /// Compare the Hessian estimate against the finite-difference and vertex oracles.
    Verify(#[command(flatten)] Args),
    /// Run every command on every point of the problem file.
    Report(#[command(flatten)] Args),
}

#[derive(clap::Args, Debug, Clone, PartialEq, Eq)]
struct Args {
    /// Problem file (JSON).
    #[arg(long)]
    problem: PathBuf,
    /// Named point from the problem file.
    #[arg(long)]
    point: Option<String>,
    /// Parameter x-bar, comma separated.
    #[arg(long, value_parser = parse_csv, allow_hyphen_values = true)]
    xbar: Option<Csv>,
    /// Subgradient x-underbar, comma separated.
    #[arg(long, value_parser = parse_csv, allow_hyphen_values = true)]
    xund: Option<Csv>,
    /// Covector x-star, comma separated.
    #[arg(long, value_parser = parse_csv, allow_hyphen_values = true)]
    xstar: Option<Csv>,
    /// Theorem hint: auto, unperturbed, single-single, single-s, single-lambda, lp-lhs, lp-lhs-rhs.
    #[arg(long)]
    case: Option<String>,
    #[arg(long, value_enum, default_value_t = FlavorArg::M)]
    flavor: FlavorArg,
    /// Largest number of degenerate indices expanded into branches.
    #[arg(long, default_value_t = DEFAULT_BRANCH_CAP)]
    branch_cap: usize,
    /// Exact rational arithmetic for LP subproblems.
    #[arg(long)]
    rational: bool,
    /// Write the JSON report here ("-" for stdout).
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    tol_act: Option<String>,
    #[arg(long)]
    tol_kkt: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Csv(Vec<String>);

impl Csv {
    fn values(&self) -> Vec<f64> {
        self.0.iter().map(|s| s.parse().expect("validated by parse_csv")).collect()
    }
}

fn parse_csv(s: &str) -> std::result::Result<Csv, String> {
    let parts: Vec<String> = s.split(',').map(|p| p.trim().to_string()).collect();
    for p in &parts {
        p.parse::<f64>().map_err(|_| format!("`{}` is not a number", p))?;
    }
    Ok(Csv(parts))
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum FlavorArg {
    #[value(name = "M", alias = "m")]
    M,
    #[value(name = "C", alias = "c")]
    C,
}

impl Command {
    fn split(&self) -> (&'static str, &Args) {
        match self {
            Command::Analyze(a) => ("analyze", a),
            Command::FirstOrder(a) => ("first-order", a),
            Command::Hessian(a) => ("hessian", a),
            Command::Verify(a) => ("verify", a),
            Command::Report(a) => ("report", a),
        }
    }
}

/// Everything a command needs once the arguments are validated.
struct RunConfig {
    command: &'static str,
    problem: ParametricProblem,
    points: Vec<Option<String>>,
    overrides: Overrides,
    opts: HessianOptions,
    json: Option<PathBuf>,
}

#[derive(Default)]
struct Overrides {
    xbar: Option<Vec<f64>>,
    xund: Option<Vec<f64>>,
    xstar: Option<Vec<f64>>,
    case: Option<CaseHint>,
}

fn parse_tol(name: &str, raw: &Option<String>, default: f64) -> Result<f64> {
    match raw {
        None => Ok(default),
        Some(s) => match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
            _ => Err(Error::Usage(format!("--{} expects a positive number, got `{}`", name, s))),
        },
    }
}

fn configure(command: &'static str, args: &Args) -> Result<RunConfig> {
    let text = std::fs::read_to_string(&args.problem)
        .map_err(|e| Error::Usage(format!("cannot read {}: {}", args.problem.display(), e)))?;
    let problem = parse_problem(&text)?;
    let defaults = Tolerances::default();
    let tol = Tolerances {
        act: parse_tol("tol-act", &args.tol_act, defaults.act)?,
        kkt: parse_tol("tol-kkt", &args.tol_kkt, defaults.kkt)?,
    };
    let mut opts = HessianOptions {
        flavor: match args.flavor {
            FlavorArg::M => Flavor::M,
            FlavorArg::C => Flavor::C,
        },
        cap: args.branch_cap,
        tol,
        ..HessianOptions::default()
    };
    opts.solve.tol = tol;
    opts.solve.rational = args.rational;

    if let Some(p) = &args.point {
        if !problem.points.contains_key(p) {
            return Err(Error::Usage(format!("problem `{}` has no point named `{}`", problem.name, p)));
        }
    }
    let points: Vec<Option<String>> = match (&args.point, command) {
        (Some(p), _) => vec![Some(p.clone())],
        (None, "report") if args.xbar.is_none() => {
            if problem.points.is_empty() {
                return Err(Error::Usage("report needs --xbar or a problem file with named points".into()));
            }
            problem.points.keys().cloned().map(Some).collect()
        }
        _ => vec![None],
    };
    let case = match &args.case {
        Some(s) => Some(s.parse::<CaseHint>().map_err(Error::Usage)?),
        None => None,
    };
    let overrides = Overrides {
        xbar: args.xbar.as_ref().map(Csv::values),
        xund: args.xund.as_ref().map(Csv::values),
        xstar: args.xstar.as_ref().map(Csv::values),
        case,
    };
    for (name, v) in [("xbar", &overrides.xbar), ("xund", &overrides.xund), ("xstar", &overrides.xstar)] {
        if let Some(v) = v {
            if v.len() != problem.n {
                return Err(Error::Usage(format!("--{} has {} entries, the problem has n = {}", name, v.len(), problem.n)));
            }
        }
    }
    Ok(RunConfig {
        command,
        problem,
        points,
        overrides,
        opts,
        json: args.json.clone(),
    })
}

impl RunConfig {
    fn xbar(&self, point: Option<&str>) -> Result<Vec<f64>> {
        if let Some(x) = &self.overrides.xbar {
            return Ok(x.clone());
        }
        match point {
            Some(p) => Ok(self.problem.points[p].x.clone()),
            None => Err(Error::Usage("give --xbar or --point".into())),
        }
    }

    /// Assembles the Hessian query; command-line covectors override the
    /// point's. A missing x-underbar is filled in only when the first-order
    /// estimate is a singleton.
    fn query(&self, point: Option<&str>) -> Result<HessianQuery> {
        let spec = point.map(|p| &self.problem.points[p]);
        let xbar = self.xbar(point)?;
        let xstar = self
            .overrides
            .xstar
            .clone()
            .or_else(|| spec.and_then(|s| s.xstar.clone()))
            .ok_or_else(|| Error::Usage("x* is required: pass --xstar or a point that defines xstar".into()))?;
        let xund = match self.overrides.xund.clone().or_else(|| spec.and_then(|s| s.xund.clone())) {
            Some(v) => v,
            None => {
                let mut so = self.opts.solve.clone();
                so.pinned = spec.and_then(|s| s.minimizers.clone());
                let sol = solve_value(&self.problem, &xbar, &so)?;
                let fo = first_order(&self.problem, &sol, &self.opts.tol)?;
                fo.set.singleton_value(1e-9).ok_or_else(|| {
                    Error::Usage("the first-order estimate is not a singleton; pass --xund".into())
                })?
            }
        };
        let case = match (self.overrides.case, spec.and_then(|s| s.case.as_deref())) {
            (Some(c), _) => c,
            (None, Some(s)) => s.parse::<CaseHint>().map_err(Error::Usage)?,
            (None, None) => CaseHint::Auto,
        };
        Ok(HessianQuery { xbar, xund, xstar, case })
    }

    fn options_for(&self, point: Option<&str>) -> HessianOptions {
        let mut o = self.opts.clone();
        if let Some(p) = point {
            o.solve.pinned = self.problem.points[p].minimizers.clone();
        }
        o
    }

    fn run_one(&self, command: &str, point: Option<&str>) -> Result<Body> {
        let opts = self.options_for(point);
        match command {
            "analyze" => Ok(Body::Analyze(analyze(&self.problem, &self.xbar(point)?, &opts)?)),
            "first-order" => {
                let sol = solve_value(&self.problem, &self.xbar(point)?, &opts.solve)?;
                Ok(Body::FirstOrder(first_order(&self.problem, &sol, &opts.tol)?))
            }
            "hessian" => Ok(Body::Hessian(hessian(&self.problem, &self.query(point)?, &opts)?)),
            "verify" => Ok(Body::Verify(verify(&self.problem, &self.query(point)?, &opts)?)),
            other => unreachable!("unknown command {}", other),
        }
    }
}

fn exit_code_of(body: &Body) -> u8 {
    match body {
        Body::Hessian(h) if h.is_empty() => 1,
        Body::Verify(v) if !v.passed => 1,
        _ => 0,
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{:.6}", if *x == 0.0 { 0.0 } else { *x })).collect();
    format!("({})", parts.join(", "))
}

fn print_log(log: &HypothesisLog) {
    if log.0.is_empty() {
        return;
    }
    println!("  hypotheses:");
    for e in &log.0 {
        let s = match e.status {
            Status::Verified => "verified",
            Status::Asserted => "asserted",
            Status::Failed => "FAILED",
        };
        println!("    {:<9} {:<24} {}", s, e.name, e.detail);
    }
}

fn print_polyset(set: &PolySet) {
    if set.pieces.is_empty() {
        println!("  result: empty set");
        return;
    }
    println!("  result: {} piece(s) in R^{}", set.pieces.len(), set.dim);
    for (i, piece) in set.pieces.iter().enumerate() {
        println!("    [{}] {}", i, piece.provenance);
        match piece.poly.vertices() {
            Ok(v) => {
                let mut pts: Vec<String> = v.vertices.iter().map(|z| fmt_vec(&piece.map.apply(z))).collect();
                pts.sort();
                pts.dedup();
                println!("        points: {}", pts.join(" "));
                let dirs: Vec<String> = v
                    .rays
                    .iter()
                    .map(|r| format!("+{}", fmt_vec(&piece.map.apply_linear(r))))
                    .chain(v.lineality.iter().map(|r| format!("+-{}", fmt_vec(&piece.map.apply_linear(r)))))
                    .collect();
                if !dirs.is_empty() {
                    println!("        directions: {}", dirs.join(" "));
                }
            }
            Err(e) => println!("        (vertex enumeration failed: {})", e),
        }
    }
}

fn print_analysis(a: &Analysis) {
    println!("  phi(x) = {}{}", a.value, a.exact_value.as_ref().map(|s| format!(" (exact {})", s)).unwrap_or_default());
    println!("  certificate: {:?}, singleton: {}", a.certificate, a.singleton);
    println!("  {:<28} {:<22} {:<16} {:<6} {:<6}", "y", "multipliers", "eta/theta/nu", "LICQ", "MFCQ");
    for m in &a.minimizers {
        let mult: Vec<String> = m.multiplier_vertices.iter().map(|u| fmt_vec(u)).collect();
        let part = m
            .partition
            .as_ref()
            .map(|p| format!("{:?}/{:?}/{:?}", p.eta, p.theta, p.nu))
            .unwrap_or_else(|| "-".into());
        println!(
            "  {:<28} {:<22} {:<16} {:<6} {:<6}",
            fmt_vec(&m.y),
            mult.join(" "),
            part,
            m.licq.holds,
            m.mfcq.holds
        );
    }
    print_log(&a.hypotheses);
}

fn print_first_order(s: &SubdiffEstimate) {
    println!("  formula: {:?}, hull: {:?}", s.formula, s.hull);
    for g in &s.generators {
        println!("    generator {}  from y = {}", fmt_vec(&g.value), fmt_vec(&g.y));
    }
    print_polyset(&s.set);
    print_log(&s.hypotheses);
}

fn print_hessian(h: &HessianEstimate) {
    println!("  theorem: {:?} ({:?})", h.theorem, h.form);
    print_polyset(&h.result);
    if let Some(d) = &h.diagnostic {
        println!("  diagnostic: {}", d);
    }
    print_log(&h.hypotheses);
}

fn print_verify(v: &Verification) {
    println!("  theorem: {:?} ({:?})", v.theorem, v.form);
    for c in &v.checks {
        let s = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "skip",
        };
        println!("    {:<4} {:<32} {}", s, c.name, c.detail);
    }
    println!("  overall: {}", if v.passed { "PASS" } else { "FAIL" });
    print_log(&v.hypotheses);
}

fn print_report(r: &Report) {
    let at = r.point.as_deref().map(|p| format!(" at point `{}`", p)).unwrap_or_default();
    println!("== {} on `{}`{}", r.command, r.problem, at);
    match &r.body {
        Body::Analyze(a) => print_analysis(a),
        Body::FirstOrder(s) => print_first_order(s),
        Body::Hessian(h) => print_hessian(h),
        Body::Verify(v) => print_verify(v),
    }
}

fn write_json(path: &PathBuf, text: &str) -> Result<()> {
    if path.as_os_str() == "-" {
        print!("{}", text);
        return Ok(());
    }
    std::fs::write(path, text).map_err(|e| Error::Usage(format!("cannot write {}: {}", path.display(), e)))
}

fn run(cfg: &RunConfig) -> Result<u8> {
    let to_stdout = cfg.json.as_ref().is_some_and(|p| p.as_os_str() == "-");
    if cfg.command != "report" {
        let point = cfg.points[0].as_deref();
        let body = cfg.run_one(cfg.command, point)?;
        let code = exit_code_of(&body);
        let report = Report::new(cfg.command, &cfg.problem, point, &cfg.opts.tol, body);
        if !to_stdout {
            print_report(&report);
        }
        if let Some(path) = &cfg.json {
            write_json(path, &report.to_json())?;
        }
        return Ok(code);
    }

    // Points run in parallel; the reports are assembled in point order.
    let commands = ["analyze", "first-order", "hessian", "verify"];
    let per_point: Vec<Vec<Result<Report>>> = cfg
        .points
        .par_iter()
        .map(|point| {
            let point = point.as_deref();
            commands
                .iter()
                // Points without an x* have no second-order query.
                .filter(|c| matches!(**c, "analyze" | "first-order") || !matches!(cfg.query(point), Err(Error::Usage(_))))
                .map(|c| {
                    cfg.run_one(c, point)
                        .map(|body| Report::new(c, &cfg.problem, point, &cfg.opts.tol, body))
                })
                .collect()
        })
        .collect();
    let mut reports = Vec::new();
    let mut code = 0u8;
    for (point, results) in cfg.points.iter().zip(per_point) {
        for r in results {
            match r {
                Ok(r) => {
                    code = code.max(exit_code_of(&r.body));
                    if !to_stdout {
                        print_report(&r);
                    }
                    reports.push(r);
                }
                Err(e) => {
                    eprintln!("error at point {:?}: {}", point.as_deref().unwrap_or("-"), e);
                    code = code.max(e.exit_code() as u8);
                }
            }
        }
    }
    if let Some(path) = &cfg.json {
        let mut text = serde_json::to_string_pretty(&reports).expect("reports serialize");
        text.push('\n');
        write_json(path, &text)?;
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, args) = cli.command.split();
    let result = configure(name, args).and_then(|cfg| run(&cfg));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
