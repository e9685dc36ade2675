//! Command-line front end behind the `spectrum-tier` binary.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or validation
//! error, 3 numeric failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{coefficients, solve_equilibrium, SolveMethod};
use crate::error::Error;
use crate::market::{
    validate, EquilibriumSolution, GridSpec, MarketParams, Model, Regime, Scenario, Scheme,
    SweepSpec, SweepVar, ValidatedInstance,
};
use crate::oracle::{compare, deviation_check, grid_solve, DEFAULT_CELLS, DEFAULT_REL_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "SPECTRUM_TIER_THREADS";

/// Closed-form vs numerical agreement required at the default tolerance.
const SELF_CONSISTENCY: f64 = 1e-6;

pub const CSV_HEADER: [&str; 13] = [
    "var",
    "value",
    "scheme",
    "model",
    "regime",
    "c_w",
    "w",
    "c_p",
    "t",
    "v_p",
    "v_a",
    "u_user",
    "throughput",
];

#[derive(Debug, Parser)]
#[command(
    name = "spectrum-tier",
    version,
    about = "Equilibria of a three-tier spectrum market"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance and print the equilibrium as JSON.
    Solve(SolveArgs),
    /// Solve a one-parameter family and write CSV.
    Sweep(SweepArgs),
    /// Check the analytic solution against the brute-force oracle.
    Verify(VerifyArgs),
    /// Print the six-row solution table for every scenario.
    Table(TableArgs),
}

#[derive(Debug, Clone, Default, Args)]
struct ParamArgs {
    /// JSON file with market constants, either bare or as `{"params": .., "scenario": ..}`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long = "L")]
    l: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    tbar: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    wbar: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Debug, Clone, Args)]
struct ScenarioArgs {
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    model: Option<Model>,
    #[arg(long)]
    regime: Option<Regime>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Closed,
    Numerical,
    Both,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value = "closed")]
    method: MethodArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Flat,
    Power,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Fig1,
    Fig2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepMethod {
    Closed,
    Numerical,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    model: Option<Model>,
    #[arg(long)]
    regime: Option<Regime>,
    /// `var=start:stop:steps`, var one of n, tbar, L, h, sigma2.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, value_enum, default_value = "closed")]
    method: SweepMethod,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Points per grid axis.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Sub-steps per coarse cell in the refinement pass.
    #[arg(long)]
    refine: Option<usize>,
    #[arg(long)]
    cw_max: Option<f64>,
    #[arg(long)]
    w_max: Option<f64>,
    #[arg(long)]
    cp_max: Option<f64>,
    /// Relative tolerance; the grid-cell allowance scales with it (two cells at 0.02).
    #[arg(long, default_value_t = DEFAULT_REL_TOL)]
    tol: f64,
}

#[derive(Debug, Args)]
struct TableArgs {
    #[command(flatten)]
    params: ParamArgs,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParam { .. } => EXIT_USAGE,
            _ => EXIT_NUMERIC,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

pub fn fmt12(x: f64) -> String {
    round12(x).to_string()
}

fn rounded(s: &EquilibriumSolution) -> EquilibriumSolution {
    EquilibriumSolution {
        c_w: round12(s.c_w),
        w: round12(s.w),
        c_p: round12(s.c_p),
        t: round12(s.t),
        v_p: round12(s.v_p),
        v_a: round12(s.v_a),
        u_user: round12(s.u_user),
        throughput: round12(s.throughput),
        snr: round12(s.snr),
        method: s.method,
    }
}

#[derive(Default)]
struct FileConfig {
    params: Option<MarketParams>,
    scenario: Option<Scenario>,
}

fn read_config(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| usage(format!("{}: {e}", path.display()));
    if let Some(params) = value.get("params") {
        let scenario = match value.get("scenario") {
            Some(s) => Some(serde_json::from_value(s.clone()).map_err(bad)?),
            None => None,
        };
        Ok(FileConfig {
            params: Some(serde_json::from_value(params.clone()).map_err(bad)?),
            scenario,
        })
    } else {
        Ok(FileConfig {
            params: Some(serde_json::from_value(value).map_err(bad)?),
            scenario: None,
        })
    }
}

impl ParamArgs {
    /// Merges config file and flags; flags win. `base` fills whatever neither sets.
    fn resolve(&self, base: Option<MarketParams>) -> CliResult<(MarketParams, Option<Scenario>)> {
        let file = match &self.config {
            Some(path) => read_config(path)?,
            None => FileConfig::default(),
        };
        let start = file.params.or(base);
        let missing = |flag: &str| usage(format!("missing required flag --{flag}"));
        let pick = |flag: Option<f64>, from: Option<f64>, name: &str| {
            flag.or(from).ok_or_else(|| missing(name))
        };
        let mut p = MarketParams::new(
            self.n.or(start.map(|p| p.n)).ok_or_else(|| missing("n"))?,
            pick(self.l, start.map(|p| p.l), "L")?,
            pick(self.h, start.map(|p| p.h), "h")?,
            pick(self.tbar, start.map(|p| p.t_bar), "tbar")?,
            pick(self.sigma2, start.map(|p| p.sigma2), "sigma2")?,
        );
        if let Some(s) = start {
            p.w_bar = s.w_bar;
            p.epsilon = s.epsilon;
        }
        if let Some(w) = self.wbar {
            p.w_bar = w;
        }
        if let Some(e) = self.epsilon {
            p.epsilon = e;
        }
        Ok((p, file.scenario))
    }
}

impl ScenarioArgs {
    fn resolve(&self, from_file: Option<Scenario>) -> CliResult<Scenario> {
        let missing = |flag: &str| usage(format!("missing required flag --{flag}"));
        Ok(Scenario::new(
            self.scheme
                .or(from_file.map(|s| s.scheme))
                .ok_or_else(|| missing("scheme"))?,
            self.model
                .or(from_file.map(|s| s.model))
                .ok_or_else(|| missing("model"))?,
            self.regime
                .or(from_file.map(|s| s.regime))
                .ok_or_else(|| missing("regime"))?,
        ))
    }
}

fn instance(params: &ParamArgs, scenario: &ScenarioArgs) -> CliResult<ValidatedInstance> {
    let (p, file_scenario) = params.resolve(None)?;
    let sc = scenario.resolve(file_scenario)?;
    Ok(validate(p, sc)?)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

#[derive(Serialize)]
struct BothOutput {
    closed_form: EquilibriumSolution,
    numerical: EquilibriumSolution,
    max_rel_discrepancy: f64,
}

fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> CliResult<()> {
    let inst = instance(&args.params, &args.scenario)?;
    let text = match args.method {
        MethodArg::Closed => to_json(&rounded(&solve_equilibrium(
            &inst,
            SolveMethod::ClosedForm,
        )?)),
        MethodArg::Numerical => {
            to_json(&rounded(&solve_equilibrium(&inst, SolveMethod::Numerical)?))
        }
        MethodArg::Both => {
            let cf = solve_equilibrium(&inst, SolveMethod::ClosedForm)?;
            let nu = solve_equilibrium(&inst, SolveMethod::Numerical)?;
            to_json(&BothOutput {
                closed_form: rounded(&cf),
                numerical: rounded(&nu),
                max_rel_discrepancy: round12(cf.max_rel_discrepancy(&nu)),
            })
        }
    };
    writeln!(out, "{text}").map_err(io_failure)?;
    Ok(())
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_NUMERIC,
        message: format!("write failed: {e}"),
    }
}

struct SweepPlan {
    base: MarketParams,
    spec: SweepSpec,
    schemes: Vec<Scheme>,
    model: Model,
    regime: Regime,
}

fn preset_plan(preset: Preset) -> (MarketParams, SweepSpec) {
    match preset {
        Preset::Fig1 => (
            MarketParams::new(2, 400.0, 1.0, 0.5, 10.0),
            SweepSpec {
                variable: SweepVar::N,
                start: 2.0,
                stop: 100.0,
                steps: 99,
            },
        ),
        Preset::Fig2 => (
            MarketParams::new(40, 400.0, 1.0, 0.5, 10.0),
            SweepSpec {
                variable: SweepVar::TBar,
                start: 0.05,
                stop: 2.0,
                steps: 40,
            },
        ),
    }
}

fn sweep_plan(args: &SweepArgs) -> CliResult<SweepPlan> {
    let (base_default, preset_spec) = match args.preset {
        Some(p) => {
            let (b, s) = preset_plan(p);
            (Some(b), Some(s))
        }
        None => (None, None),
    };
    let spec = match (&args.sweep, preset_spec) {
        (Some(text), _) => text.parse::<SweepSpec>()?,
        (None, Some(s)) => s,
        (None, None) => return Err(usage("either --sweep or --preset is required")),
    };
    spec.validate()?;
    let mut params = args.params.clone();
    // the swept variable need not be given as a flag
    let first = spec.points()[0];
    match spec.variable {
        SweepVar::N if params.n.is_none() => params.n = Some(first as u32),
        SweepVar::TBar if params.tbar.is_none() => params.tbar = Some(first),
        SweepVar::L if params.l.is_none() => params.l = Some(first),
        SweepVar::H if params.h.is_none() => params.h = Some(first),
        SweepVar::Sigma2 if params.sigma2.is_none() => params.sigma2 = Some(first),
        _ => {}
    }
    let (base, _) = params.resolve(base_default)?;
    let schemes = match args.scheme {
        Some(SchemeArg::Flat) => vec![Scheme::FlatRate],
        Some(SchemeArg::Power) => vec![Scheme::PowerBased],
        Some(SchemeArg::Both) => vec![Scheme::FlatRate, Scheme::PowerBased],
        None if args.preset.is_some() => vec![Scheme::FlatRate, Scheme::PowerBased],
        None => return Err(usage("missing required flag --scheme")),
    };
    let model = match (args.model, args.preset) {
        (Some(m), _) => m,
        (None, Some(_)) => Model::Interference,
        (None, None) => return Err(usage("missing required flag --model")),
    };
    let regime = match (args.regime, args.preset) {
        (Some(r), _) => r,
        (None, Some(_)) => Regime::General,
        (None, None) => return Err(usage("missing required flag --regime")),
    };
    Ok(SweepPlan {
        base,
        spec,
        schemes,
        model,
        regime,
    })
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> CliResult<()> {
    let plan = sweep_plan(args)?;
    let method = match args.method {
        SweepMethod::Closed => SolveMethod::ClosedForm,
        SweepMethod::Numerical => SolveMethod::Numerical,
    };
    let jobs: Vec<(f64, Scheme)> = plan
        .spec
        .points()
        .into_iter()
        .flat_map(|v| plan.schemes.iter().map(move |&s| (v, s)))
        .collect();
    // all instances are validated before any solving starts
    let instances: Vec<(f64, ValidatedInstance)> = jobs
        .iter()
        .map(|&(v, scheme)| {
            let p = plan.spec.variable.apply(&plan.base, v);
            validate(p, Scenario::new(scheme, plan.model, plan.regime)).map(|i| (v, i))
        })
        .collect::<crate::error::Result<_>>()?;
    let solved: Vec<EquilibriumSolution> = instances
        .par_iter()
        .map(|(_, inst)| solve_equilibrium(inst, method))
        .collect::<crate::error::Result<_>>()?;

    let csv_err = |e: csv::Error| Failure {
        code: EXIT_NUMERIC,
        message: format!("csv output failed: {e}"),
    };
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for ((v, inst), s) in instances.iter().zip(&solved) {
            let sc = inst.scenario();
            let mut row = vec![
                plan.spec.variable.token().to_string(),
                fmt12(*v),
                sc.scheme.token().to_string(),
                sc.model.token().to_string(),
                sc.regime.token().to_string(),
            ];
            row.extend(
                [s.c_w, s.w, s.c_p, s.t, s.v_p, s.v_a, s.u_user, s.throughput]
                    .iter()
                    .map(|x| fmt12(*x)),
            );
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(io_failure)?;
    }
    match &args.out {
        Some(path) => std::fs::write(path, &buf).map_err(|e| Failure {
            code: EXIT_NUMERIC,
            message: format!("cannot write {}: {e}", path.display()),
        })?,
        None => out.write_all(&buf).map_err(io_failure)?,
    }
    Ok(())
}

fn grid_for(args: &VerifyArgs, inst: &ValidatedInstance, cw_hint: f64) -> CliResult<GridSpec> {
    let mut g = GridSpec::for_instance(inst, Some(cw_hint));
    if let Some(pts) = args.grid_points {
        g = g.with_points(pts);
    }
    if let Some(r) = args.refine {
        g = g.with_refine(r);
    }
    if let Some(v) = args.cw_max {
        g.cw_max = v;
    }
    if let Some(v) = args.w_max {
        g.w_max = v;
    }
    if let Some(v) = args.cp_max {
        g.cp_max = v;
    }
    g.validate()?;
    Ok(g)
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> CliResult<bool> {
    if !(args.tol >= 0.0) {
        return Err(usage("--tol must be >= 0"));
    }
    let inst = instance(&args.params, &args.scenario)?;
    let cf = solve_equilibrium(&inst, SolveMethod::ClosedForm)?;
    let nu = solve_equilibrium(&inst, SolveMethod::Numerical)?;
    let grid = grid_for(args, &inst, cf.c_w)?;
    let oracle = grid_solve(&inst, &grid)?;
    let scale = args.tol / DEFAULT_REL_TOL;
    let checks = compare(&oracle, &cf, &inst, &grid, args.tol, DEFAULT_CELLS * scale);
    let self_tol = SELF_CONSISTENCY * scale;

    let mut text = String::new();
    let _ = writeln!(text, "scenario {}", inst.scenario());
    let _ = writeln!(
        text,
        "{:<6} {:>16} {:>16} {:>16} {:>12} {:>12} {:>10} {:>6}",
        "comp", "oracle", "closed", "numerical", "|o-c|", "tol", "|n-c|/c", "status"
    );
    let mut all = true;
    for (check, (_, n)) in checks.iter().zip(nu.components()) {
        let self_gap = crate::market::rel_diff(n, check.reference);
        let pass = check.pass && self_gap <= self_tol;
        all &= pass;
        let _ = writeln!(
            text,
            "{:<6} {:>16} {:>16} {:>16} {:>12.3e} {:>12.3e} {:>10.2e} {:>6}",
            check.name,
            fmt12(check.oracle),
            fmt12(check.reference),
            fmt12(n),
            (check.oracle - check.reference).abs(),
            check.tolerance,
            self_gap,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    let dev = deviation_check(&cf, &inst, &grid);
    let user_ok = dev.user_gain <= dev.user_tolerance * scale;
    let provider_ok = dev.provider_gain <= dev.provider_tolerance * scale;
    all &= user_ok && provider_ok;
    let _ = writeln!(
        text,
        "user deviation gain {:.3e} (tol {:.3e}) {}",
        dev.user_gain,
        dev.user_tolerance * scale,
        if user_ok { "PASS" } else { "FAIL" }
    );
    let _ = writeln!(
        text,
        "provider deviation gain {:.3e} (tol {:.3e}) {}",
        dev.provider_gain,
        dev.provider_tolerance * scale,
        if provider_ok { "PASS" } else { "FAIL" }
    );
    let _ = writeln!(text, "{}", if all { "PASS" } else { "FAIL" });
    out.write_all(text.as_bytes()).map_err(io_failure)?;
    Ok(all)
}

fn cmd_table(args: &TableArgs, out: &mut dyn Write) -> CliResult<()> {
    let (p, _) = args.params.resolve(Some(MarketParams::default()))?;
    // surface invalid constants before the per-scenario loop hides them
    validate(
        p,
        Scenario::new(Scheme::PowerBased, Model::InterferenceFree, Regime::General),
    )?;
    let columns: Vec<(
        Scenario,
        Option<EquilibriumSolution>,
        Option<ValidatedInstance>,
    )> = Scenario::all()
        .iter()
        .map(|&sc| match validate(p, sc) {
            Ok(inst) => (
                sc,
                solve_equilibrium(&inst, SolveMethod::ClosedForm).ok(),
                Some(inst),
            ),
            Err(_) => (sc, None, None),
        })
        .collect();
    let mut text = String::new();
    let _ = writeln!(
        text,
        "n={} L={} h={} tbar={} sigma2={} wbar={} epsilon={}",
        p.n, p.l, p.h, p.t_bar, p.sigma2, p.w_bar, p.epsilon
    );
    let _ = writeln!(
        text,
        "coefficients: W, v_P, v_A per nLhT/s2; C_P per LhT/s2 (flat) or Lh/s2 (power); T per T"
    );
    let header = |text: &mut String| {
        let _ = write!(text, "{:<6}", "");
        for (sc, _, _) in &columns {
            let _ = write!(text, " {:>22}", sc.to_string());
        }
        let _ = writeln!(text);
    };
    let names = ["C_W", "W", "C_P", "T", "v_P", "v_A"];
    header(&mut text);
    for (row, name) in names.iter().enumerate() {
        let _ = write!(text, "{name:<6}");
        for (_, sol, inst) in &columns {
            let cell = match (sol, inst) {
                (Some(s), Some(i)) => {
                    let k = coefficients(s, i);
                    let v = [k.c_w, k.w, k.c_p, k.t, k.v_p, k.v_a][row];
                    format!("{v:.4}")
                }
                _ => "n/a".to_string(),
            };
            let _ = write!(text, " {cell:>22}");
        }
        let _ = writeln!(text);
    }
    let _ = writeln!(text, "values:");
    header(&mut text);
    for (row, name) in names.iter().enumerate() {
        let _ = write!(text, "{name:<6}");
        for (_, sol, _) in &columns {
            let cell = match sol {
                Some(s) => fmt12(s.components()[row].1),
                None => "n/a".to_string(),
            };
            let _ = write!(text, " {cell:>22}");
        }
        let _ = writeln!(text);
    }
    out.write_all(text.as_bytes()).map_err(io_failure)?;
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|t| *t >= 1).ok_or_else(|| {
        usage(format!(
            "{THREADS_ENV} must be a positive integer, got `{raw}`"
        ))
    })?;
    // a pool configured earlier in the process stays in place
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Solve(a) => cmd_solve(a, &mut out).map(|_| EXIT_OK),
        Command::Sweep(a) => cmd_sweep(a, &mut out).map(|_| EXIT_OK),
        Command::Verify(a) => {
            cmd_verify(a, &mut out).map(|ok| if ok { EXIT_OK } else { EXIT_VERIFY })
        }
        Command::Table(a) => cmd_table(a, &mut out).map(|_| EXIT_OK),
    });
    let _ = out.flush();
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
