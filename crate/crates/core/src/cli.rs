//! Command-line front end. [`run`] returns the process exit code:
//! `0` converged, `1` input error, `2` not converged (or, for `oracle`,
//! a discrepancy above `1e-5`).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::SolveError;
use crate::graph::{check_feasibility, cut_balance_metric, max_norm, min_cut, CutBalance};
use crate::io::{self, GraphFormat, InputError, Problem, SweepRow};
use crate::objective::PNorm;
use crate::oracle::{oracle_general_p, oracle_p2};
use crate::solver::{solve, SolverOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Largest solver/oracle difference accepted by `oracle`.
pub const ORACLE_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "pnorm-flow", version, about = "Congestion-minimizing routing by p-norm minimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for one exponent and write the flows and the outer trace.
    Solve(SolveArgs),
    /// Solve for several exponents and report min-cut load balance.
    Sweep(SweepArgs),
    /// Compare the solver against the reference oracles.
    Oracle(SolveArgs),
    /// Print the minimum cut-set separating the sources from the destination.
    Mincut(MincutArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Edgelist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Graph file.
    #[arg(long, value_name = "PATH")]
    pub graph: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
    /// Traffic sidecar for the edge-list format, one value per line.
    #[arg(long, value_name = "PATH")]
    pub traffic: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub out_format: OutFormat,
}

#[derive(Debug, Args)]
pub struct TuningArgs {
    #[arg(long)]
    pub inner_tol: Option<f64>,
    #[arg(long)]
    pub outer_tol: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Reserved; the solver is deterministic. Echoed in reports.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated exponents, at least two.
    #[arg(long, value_name = "CSV", value_delimiter = ',', required = true)]
    pub p_list: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Args)]
pub struct MincutArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Flows file (as written by `solve`) to evaluate on the cut.
    #[arg(long, value_name = "PATH")]
    pub flows: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub out_format: OutFormat,
}

/// Everything that ends a command with exit code 1.
#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load(input: &InputArgs) -> Result<Problem, Failure> {
    let format = match input.format {
        FormatArg::Json => GraphFormat::Json,
        FormatArg::Edgelist => GraphFormat::EdgeList,
    };
    Ok(io::load_problem(&input.graph, format, input.traffic.as_deref())?)
}

fn exponent(p: f64) -> Result<PNorm, Failure> {
    PNorm::new(p).map_err(|e| Failure::Usage(format!("--p: {e}")))
}

fn options(p: PNorm, tuning: &TuningArgs) -> Result<SolverOptions, Failure> {
    let mut opts = SolverOptions::new(p);
    if let Some(v) = tuning.inner_tol {
        opts.inner_tol = v;
    }
    if let Some(v) = tuning.outer_tol {
        opts.outer_tol = v;
    }
    if let Some(v) = tuning.max_outer {
        opts.outer_max_iters = v;
    }
    opts.validate()?;
    Ok(opts)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|source| Failure::Write {
        path: path.display().to_string(),
        source,
    })
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(path) => write_file(path, text),
        None => stdout.write_all(text.as_bytes()).map_err(|source| Failure::Write {
            path: "<stdout>".into(),
            source,
        }),
    }
}

/// `flows.csv` -> `flows.trace.csv`; `flows` -> `flows.trace`.
pub fn trace_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.trace.{}", ext.to_string_lossy()),
        None => format!("{stem}.trace"),
    };
    out.with_file_name(name)
}

fn seed_note(seed: Option<u64>) -> String {
    seed.map(|s| format!(", seed {s}")).unwrap_or_default()
}

fn cmd_solve(args: &SolveArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    let problem = load(&args.input)?;
    let p = exponent(args.p)?;
    let opts = options(p, &args.tuning)?;
    let report = solve(&problem.graph, &problem.traffic, &opts)?;
    let (flows, trace) = match args.output.out_format {
        OutFormat::Csv => (
            io::flows_csv(&problem.graph, &report.flows),
            io::trace_csv(&report.trace),
        ),
        OutFormat::Json => (
            io::flows_json(&problem.graph, &report, args.p, args.tuning.seed),
            io::trace_json(&report.trace, args.tuning.seed),
        ),
    };
    emit(args.output.out.as_deref(), &flows, stdout)?;
    if let Some(out) = &args.output.out {
        write_file(&trace_path(out), &trace)?;
    }
    let _ = writeln!(
        stderr,
        "{} after {} outer iterations, cost {}, feasibility residual {:e}{}",
        report.termination.as_str(),
        report.trace.len(),
        report.cost,
        report.feasibility_residual,
        seed_note(args.tuning.seed)
    );
    Ok(if report.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    let problem = load(&args.input)?;
    if args.p_list.len() < 2 {
        return Err(Failure::Usage("--p-list needs at least two exponents".into()));
    }
    let exponents = args
        .p_list
        .iter()
        .map(|&p| exponent(p))
        .collect::<Result<Vec<_>, _>>()?;
    let cut = min_cut(&problem.graph, &problem.traffic).map_err(SolveError::from)?;
    let mut rows = Vec::with_capacity(exponents.len());
    for p in exponents {
        let opts = options(p, &args.tuning)?;
        let report = solve(&problem.graph, &problem.traffic, &opts)?;
        let balance = cut_balance_metric(&report.flows, &cut).map_err(SolveError::from)?;
        rows.push(SweepRow {
            p: p.value(),
            cost: report.cost,
            cut_max: balance.max,
            cut_min: balance.min,
            cut_cv: balance.cv,
            converged: report.converged,
        });
    }
    let text = match args.output.out_format {
        OutFormat::Csv => io::sweep_csv(&rows),
        OutFormat::Json => io::sweep_json(&rows, args.tuning.seed),
    };
    emit(args.output.out.as_deref(), &text, stdout)?;
    let failed = rows.iter().filter(|r| !r.converged).count();
    let _ = writeln!(
        stderr,
        "{} exponents, {failed} not converged, cut {cut}{}",
        rows.len(),
        seed_note(args.tuning.seed)
    );
    Ok(if failed == 0 { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

#[derive(Serialize)]
struct OracleRow {
    edge_index: usize,
    r: usize,
    s: usize,
    solver: f64,
    oracle: f64,
    laplacian: Option<f64>,
}

fn cmd_oracle(args: &SolveArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    let problem = load(&args.input)?;
    let p = exponent(args.p)?;
    let opts = options(p, &args.tuning)?;
    let report = solve(&problem.graph, &problem.traffic, &opts)?;
    let general = oracle_general_p(&problem.graph, &problem.traffic, p, 1e-13)?;
    let laplacian = if p.value() == 2.0 {
        Some(oracle_p2(&problem.graph, &problem.traffic)?)
    } else {
        None
    };
    let solver = report.flows.as_slice();
    let mut discrepancy = max_norm(&difference(solver, general.flows.as_slice()));
    if let Some(exact) = &laplacian {
        discrepancy = discrepancy.max(max_norm(&difference(solver, exact.flows.as_slice())));
    }
    let rows: Vec<OracleRow> = problem
        .graph
        .edges()
        .iter()
        .enumerate()
        .map(|(m, &(r, s))| OracleRow {
            edge_index: m + 1,
            r: r + 1,
            s: s + 1,
            solver: solver[m],
            oracle: general.flows[m],
            laplacian: laplacian.as_ref().map(|l| l.flows[m]),
        })
        .collect();

    let text = match args.output.out_format {
        OutFormat::Csv => {
            let mut text = String::from("edge_index,r,s,solver,oracle");
            text.push_str(if laplacian.is_some() { ",laplacian\n" } else { "\n" });
            for row in &rows {
                text.push_str(&format!(
                    "{},{},{},{},{}",
                    row.edge_index,
                    row.r,
                    row.s,
                    io::fixed(row.solver),
                    io::fixed(row.oracle)
                ));
                if let Some(v) = row.laplacian {
                    text.push(',');
                    text.push_str(&io::fixed(v));
                }
                text.push('\n');
            }
            text.push_str(&format!("# max discrepancy {discrepancy:e}\n"));
            text
        }
        OutFormat::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                p: f64,
                seed: Option<u64>,
                solver_termination: &'a str,
                oracle_converged: bool,
                discrepancy: f64,
                tolerance: f64,
                rows: Vec<OracleRow>,
            }
            let doc = Doc {
                p: p.value(),
                seed: args.tuning.seed,
                solver_termination: report.termination.as_str(),
                oracle_converged: general.converged,
                discrepancy,
                tolerance: ORACLE_TOLERANCE,
                rows,
            };
            serde_json::to_string_pretty(&doc).expect("oracle report serializes") + "\n"
        }
    };
    emit(args.output.out.as_deref(), &text, stdout)?;
    let agree = discrepancy <= ORACLE_TOLERANCE;
    let _ = writeln!(
        stderr,
        "max discrepancy {discrepancy:e} ({}){}",
        if agree { "agree" } else { "disagree" },
        seed_note(args.tuning.seed)
    );
    Ok(if agree { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn difference(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn cmd_mincut(args: &MincutArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let problem = load(&args.input)?;
    let cut = min_cut(&problem.graph, &problem.traffic).map_err(SolveError::from)?;
    let balance = match &args.flows {
        Some(path) => {
            let flows = io::load_flows(path, &problem.graph)?;
            let feasible = check_feasibility(&problem.graph, &flows, &problem.traffic, 1e-6)
                .map_err(SolveError::from)?;
            if !feasible.feasible {
                return Err(Failure::Usage(format!(
                    "{}: flows violate conservation by {:e}",
                    path.display(),
                    feasible.max_residual
                )));
            }
            Some(cut_balance_metric(&flows, &cut).map_err(SolveError::from)?)
        }
        None => None,
    };
    let members: Vec<String> = cut
        .edge_indices
        .iter()
        .map(|&m| {
            let (r, s) = problem.graph.edge(m);
            format!("e{} ({}, {})", m + 1, r + 1, s + 1)
        })
        .collect();
    let text = match args.out_format {
        OutFormat::Csv => {
            let mut text = format!("cardinality: {}\nedges: {}\n", cut.cardinality(), members.join(", "));
            if let Some(CutBalance { max, min, cv }) = balance {
                text.push_str(&format!(
                    "cut_max: {}\ncut_min: {}\ncut_cv: {}\n",
                    io::fixed(max),
                    io::fixed(min),
                    io::fixed(cv)
                ));
            }
            text
        }
        OutFormat::Json => {
            #[derive(Serialize)]
            struct Doc {
                cardinality: usize,
                edges: Vec<usize>,
                cut_max: Option<f64>,
                cut_min: Option<f64>,
                cut_cv: Option<f64>,
            }
            let doc = Doc {
                cardinality: cut.cardinality(),
                edges: cut.edge_indices.iter().map(|m| m + 1).collect(),
                cut_max: balance.map(|b| b.max),
                cut_min: balance.map(|b| b.min),
                cut_cv: balance.map(|b| b.cv),
            };
            serde_json::to_string_pretty(&doc).expect("cut report serializes") + "\n"
        }
    };
    emit(None, &text, stdout)?;
    Ok(EXIT_OK)
}

/// Runs a parsed command; diagnostics go to `stderr`.
pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Solve(args) => cmd_solve(args, stdout, stderr),
        Command::Sweep(args) => cmd_sweep(args, stdout, stderr),
        Command::Oracle(args) => cmd_oracle(args, stdout, stderr),
        Command::Mincut(args) => cmd_mincut(args, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_INPUT
        }
    }
}

/// Parses `argv` and runs it. Usage errors exit with code 1; `--help` and
/// `--version` with 0.
pub fn main_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(argv) {
        Ok(cli) => run(&cli, stdout, stderr),
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
                EXIT_INPUT
            } else {
                let _ = stdout.write_all(text.as_bytes());
                EXIT_OK
            }
        }
    }
}
