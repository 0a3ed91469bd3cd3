//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use clap::CommandFactory;
use nalgebra::{DMatrix, DVector};
use snscp::baselines::{export_bip, DEFAULT_BIG_M};
use snscp::geometry::{partition, snap_to_zero, step_norm};
use snscp::problem::make_norm_opt;
use snscp::solver::{write_trace_csv, SolveStatus};
use snscp::stationarity::{check_bkkt, check_kkt, check_tau_stationary, StationarityReport};
use snscp::statistics::{
    dkw_sample_size, feasibility_confidence, feasibility_sample_size, s_lower_bound,
};
use snscp::{solve, Error, PrimalDualPoint, Problem};

use crate::settings::{Instance, InstanceSource, Settings};
use crate::{BenchArgs, BoundsArgs, CheckArgs, Cli, CliError, Command, ExportArgs, SolveArgs};

/// Header of the CSV written by `bench`.
pub const BENCH_HEADER: &str =
    "sweep_var,value,median_objective,median_time_s,median_iters,converged_frac";

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Check(args) => cmd_check(&args),
        Command::Bounds(args) => cmd_bounds(&args),
        Command::Bench(args) => cmd_bench(&args),
        Command::ExportBip(args) => cmd_export_bip(&args),
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

/// Short human-readable number: fixed point in a moderate range, else scientific.
fn num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v:?}");
    }
    let a = v.abs();
    if (1e-3..1e6).contains(&a) {
        let mut s = format!("{v:.6}");
        while s.ends_with('0') && !s.ends_with(".0") {
            s.pop();
        }
        s
    } else {
        format!("{v:.3e}")
    }
}

fn solver_abort(e: Error) -> CliError {
    CliError::Abort(e.to_string())
}

fn write_point(path: &Path, point: &PrimalDualPoint) -> Result<(), CliError> {
    let mut text = String::from("# x\n");
    let join = |it: &mut dyn Iterator<Item = f64>| {
        it.map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
    };
    let _ = writeln!(text, "{}", join(&mut point.x.iter().copied()));
    let _ = writeln!(text, "# W");
    for row in point.w.row_iter() {
        let _ = writeln!(text, "{}", join(&mut row.iter().copied()));
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Reads `x` from the first data line and, if present, `W` from the rest.
fn read_point(
    path: &Path,
    k: usize,
    m: usize,
    n: usize,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| io_error(path, format!("line {}: {e}", idx + 1)))?;
        rows.push(values);
    }
    let (first, rest) = rows
        .split_first()
        .ok_or_else(|| io_error(path, "no point found"))?;
    if first.len() != k {
        return Err(io_error(
            path,
            format!("x has {} entries, the instance has K = {k}", first.len()),
        ));
    }
    let x = DVector::from_column_slice(first);
    if rest.is_empty() {
        return Ok((x, None));
    }
    if rest.len() != m || rest.iter().any(|r| r.len() != n) {
        return Err(io_error(
            path,
            format!("W must have {m} rows of {n} values"),
        ));
    }
    let w = DMatrix::from_fn(m, n, |i, j| rest[i][j]);
    Ok((x, Some(w)))
}

fn cmd_solve(args: &SolveArgs) -> Result<(), CliError> {
    let (settings, file) = Settings::resolve(&args.instance, &args.solver)?;
    let trace_path = file.pick(args.trace.clone(), "trace")?;
    let point_path = file.pick(args.point.clone(), "point")?;
    let instance = settings.build_instance()?;
    let problem = instance.problem();
    let dims = problem.dims();
    let cfg = settings.solver_config(dims)?;

    let start = Instant::now();
    let result = solve(problem, &cfg, PrimalDualPoint::zeros(dims)).map_err(solver_abort)?;
    let elapsed = start.elapsed().as_secs_f64();

    if let Some(path) = &trace_path {
        let file = File::create(path).map_err(|e| io_error(path, e))?;
        let mut out = BufWriter::new(file);
        write_trace_csv(&result.trace, &mut out).map_err(|e| io_error(path, e))?;
        out.flush().map_err(|e| io_error(path, e))?;
    }
    if let Some(path) = &point_path {
        write_point(path, &result.point)?;
    }

    let g = problem.constraints(&result.point.x);
    println!("status: {}", result.status);
    println!("objective: {:?}", problem.objective(&result.point.x));
    println!(
        "violations: {} (s = {})",
        step_norm(&snap_to_zero(&g, result.tol)),
        cfg.s
    );
    println!("violations_strict: {}", step_norm(&g));
    println!(
        "residual: {:e} (tol {:e})",
        result.final_residual(),
        result.tol
    );
    println!("tau_stationary: {}", result.final_report.satisfied);
    println!("iterations: {}", result.iterations());
    println!("time_s: {elapsed:.6}");
    Ok(())
}

fn verdict(name: &str, report: &StationarityReport) -> String {
    let state = if report.satisfied {
        "satisfied"
    } else {
        "violated"
    };
    let mut line = format!("{name}: {state} (residual {})", num(report.residual));
    // Tolerance failures are already visible in the residual.
    if let (false, Some(reason)) = (report.satisfied, &report.reason) {
        if !reason.starts_with("residual") {
            let _ = write!(line, ": {reason}");
        }
    }
    line
}

fn cmd_check(args: &CheckArgs) -> Result<(), CliError> {
    let (settings, _) = Settings::resolve(&args.instance, &args.solver)?;
    let instance = settings.build_instance()?;
    let problem = instance.problem();
    let dims = problem.dims();
    let cfg = settings.solver_config(dims)?;
    let tol = cfg.tolerance(dims);
    let (x, w) = read_point(&args.point_file, dims.k, dims.m, dims.n)?;

    let kkt = check_kkt(problem, &x, cfg.s, tol).map_err(solver_abort)?;
    println!("{}", verdict("KKT", &kkt));

    let w = w
        .or_else(|| kkt.witness_w.clone())
        .unwrap_or_else(|| DMatrix::zeros(dims.m, dims.n));
    let point = PrimalDualPoint::new(x.clone(), w)?;
    let tau_report = check_tau_stationary(problem, &point, cfg.tau, cfg.s, tol);
    println!(
        "{}",
        verdict(
            &format!("tau-stationary (tau = {})", num(cfg.tau)),
            &tau_report
        )
    );
    if let Some(ts) = tau_report.tau_star {
        println!("tau*: {}", num(ts));
    }

    // Enforce every column that is not violated.
    let part = partition(&snap_to_zero(&problem.constraints(&x), tol));
    let y: Vec<bool> = (0..dims.n).map(|n| !part.gamma_plus.contains(&n)).collect();
    match check_bkkt(problem, &x, &y, cfg.s, tol) {
        Ok(report) => println!("{}", verdict("BKKT", &report)),
        Err(Error::Infeasible(msg)) => println!("BKKT: violated (infeasible: {msg})"),
        Err(e) => return Err(solver_abort(e)),
    }
    Ok(())
}

fn confidence_text(c: f64) -> String {
    if c < 0.0 {
        format!("{} vacuous (<0)", num(c))
    } else {
        num(c)
    }
}

fn cmd_bounds(args: &BoundsArgs) -> Result<(), CliError> {
    let mut printed = false;
    if let (Some(eps), Some(beta)) = (args.epsilon, args.beta) {
        println!(
            "dkw_sample_size(epsilon = {eps}, beta = {beta}): {}",
            dkw_sample_size(eps, beta)?
        );
        printed = true;
    }
    if let (Some(alpha), Some(s), Some(beta)) = (args.alpha, args.s, args.beta) {
        let simple = feasibility_sample_size(alpha, s, beta, false)?;
        let exact = feasibility_sample_size(alpha, s, beta, true)?;
        println!("feasibility_sample_size(alpha = {alpha}, s = {s}, beta = {beta}): simplified {simple}, exact {exact}");
        printed = true;
    }
    if let (Some(alpha), Some(s), Some(n)) = (args.alpha, args.s, args.n) {
        let c = feasibility_confidence(alpha, s, n)?;
        println!(
            "feasibility_confidence(alpha = {alpha}, s = {s}, N = {n}): {}",
            confidence_text(c)
        );
        printed = true;
    }
    if let (Some(nu), Some(alpha_star), Some(n)) = (args.nu, args.alpha_star, args.n) {
        let (bound, c) = s_lower_bound(nu, alpha_star, n)?;
        println!(
            "s_lower_bound(nu = {nu}, alpha* = {alpha_star}, N = {n}): s >= {}, confidence {}",
            num(bound),
            confidence_text(c)
        );
        printed = true;
    }
    if !printed {
        let mut cmd = Cli::command();
        let sub = cmd
            .find_subcommand_mut("bounds")
            .expect("bounds subcommand is registered");
        sub.print_help()
            .map_err(|e| CliError::Config(e.to_string()))?;
        println!();
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum SweepVar {
    K,
    M,
    N,
    Alpha,
    Tau,
}

impl SweepVar {
    fn name(self) -> &'static str {
        match self {
            Self::K => "K",
            Self::M => "M",
            Self::N => "N",
            Self::Alpha => "alpha",
            Self::Tau => "tau",
        }
    }
}

fn parse_sweep(spec: &str) -> Result<(SweepVar, Vec<f64>), CliError> {
    let bad = || {
        CliError::Config(format!(
            "sweep `{spec}`: expected VAR=v1,v2,... with VAR in k, m, n, alpha, tau"
        ))
    };
    let (var, values) = spec.split_once('=').ok_or_else(bad)?;
    let var = match var.trim().to_ascii_lowercase().as_str() {
        "k" => SweepVar::K,
        "m" => SweepVar::M,
        "n" => SweepVar::N,
        "alpha" => SweepVar::Alpha,
        "tau" => SweepVar::Tau,
        _ => return Err(bad()),
    };
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(bad());
    }
    if matches!(var, SweepVar::K | SweepVar::M | SweepVar::N)
        && values.iter().any(|v| !(v.fract() == 0.0 && *v >= 1.0))
    {
        return Err(CliError::Config(format!(
            "sweep `{spec}`: dimensions must be positive integers"
        )));
    }
    Ok((var, values))
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

struct Trial {
    objective: f64,
    time_s: f64,
    iterations: f64,
    converged: bool,
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let (settings, file) = Settings::resolve(&args.instance, &args.solver)?;
    let (params, seed) = match &settings.source {
        InstanceSource::Generated { params, seed } => (*params, *seed),
        _ => {
            return Err(CliError::Config(
                "bench runs on generated norm-optimization instances only".into(),
            ))
        }
    };
    let sweep = file
        .pick(args.sweep.clone(), "sweep")?
        .ok_or_else(|| CliError::Config("bench needs --sweep VAR=v1,v2,...".into()))?;
    let (var, values) = parse_sweep(&sweep)?;
    let trials: usize = file.pick(args.trials, "trials")?.unwrap_or(20);
    if trials == 0 {
        return Err(CliError::Config("trials must be positive".into()));
    }
    let out_path = file.pick(args.out.clone(), "out")?;

    let mut csv = format!("{BENCH_HEADER}\n");
    for &value in &values {
        let mut point_settings = settings.clone();
        let mut p = params;
        match var {
            SweepVar::K => p.k = value as usize,
            SweepVar::M => p.m = value as usize,
            SweepVar::N => p.n = value as usize,
            SweepVar::Alpha => point_settings.alpha = value,
            SweepVar::Tau => point_settings.solver.tau = Some(value),
        }
        let mut results = Vec::with_capacity(trials);
        for t in 0..trials {
            let instance = make_norm_opt(p, seed.wrapping_add(t as u64))?;
            let cfg = point_settings.solver_config(instance.dims())?;
            let start = Instant::now();
            match solve(&instance, &cfg, PrimalDualPoint::zeros(instance.dims())) {
                Ok(r) => results.push(Trial {
                    objective: instance.objective(&r.point.x),
                    time_s: start.elapsed().as_secs_f64(),
                    iterations: r.iterations() as f64,
                    converged: r.status == SolveStatus::Converged,
                }),
                Err(e) => eprintln!("{}={value} trial {t}: aborted: {e}", var.name()),
            }
        }
        let mut objectives: Vec<f64> = results.iter().map(|r| r.objective).collect();
        let mut times: Vec<f64> = results.iter().map(|r| r.time_s).collect();
        let mut iters: Vec<f64> = results.iter().map(|r| r.iterations).collect();
        let converged = results.iter().filter(|r| r.converged).count();
        let _ = writeln!(
            csv,
            "{},{:?},{:?},{:?},{:?},{:?}",
            var.name(),
            value,
            median(&mut objectives),
            median(&mut times),
            median(&mut iters),
            converged as f64 / trials as f64
        );
    }

    match out_path {
        Some(path) => fs::write(&path, csv).map_err(|e| io_error(&path, e))?,
        None => io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| CliError::Config(e.to_string()))?,
    }
    Ok(())
}

fn cmd_export_bip(args: &ExportArgs) -> Result<(), CliError> {
    let (settings, file) = Settings::resolve(&args.instance, &Default::default())?;
    let instance = match settings.build_instance()? {
        Instance::NormOpt(p) => p,
        Instance::Counterexample(_) => {
            return Err(CliError::Config(
                "export-bip needs a norm-optimization instance".into(),
            ))
        }
    };
    let s = settings.solver_config(instance.dims())?.s;
    let big_m = file.pick(args.big_m, "big-m")?.unwrap_or(DEFAULT_BIG_M);
    let path = file
        .pick(args.out.clone(), "out")?
        .ok_or_else(|| CliError::Config("export-bip needs --out PATH".into()))?;
    let text = export_bip(&instance, s, big_m)?;
    fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    println!(
        "wrote {} (K = {}, M = {}, N = {}, s = {s}, big_M = {big_m})",
        path.display(),
        instance.dims().k,
        instance.dims().m,
        instance.dims().n
    );
    Ok(())
}
