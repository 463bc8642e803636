use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use indcert::ast::{parse, Int};
use indcert::backend::SolverConfig;
use indcert::bench;
use indcert::certificate::{check, deserialize};
use indcert::engine::{solve, EngineError, EngineOptions, UnknownReason, Verdict};
use indcert::fragment::{decompose, FragmentProblem};
use indcert::modeleval::{EvalError, Evaluator};

const EXIT_NEGATIVE: i32 = 1;
const EXIT_UNKNOWN: i32 = 2;
const EXIT_USAGE: i32 = 3;
const EXIT_BACKEND: i32 = 4;

#[derive(Parser)]
#[command(
    name = "indcert",
    about = "Certifying satisfiability checker for ground arithmetic plus one \
             quantified linear conjunct over unary integer functions",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct SolverArgs {
    /// SMT solver command; defaults to $INDCERT_SOLVER, then ./solver/indcert-z3
    #[arg(long, value_name = "PATH", global = true)]
    solver: Option<PathBuf>,
    /// Per-reply solver budget in milliseconds
    #[arg(long, value_name = "N", global = true)]
    timeout_ms: Option<u64>,
}

#[derive(Args)]
struct EngineArgs {
    /// Widening budget: one iteration grows the base interval once
    #[arg(long, value_name = "N")]
    max_iters: Option<u64>,
    /// Start from the span of the ground argument literals
    #[arg(long)]
    seed_from_ground: bool,
    /// Starting interval endpoints
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_hyphen_values = true)]
    init: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decide a problem file; prints sat, unsat, or unknown on the first line
    Solve {
        file: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        engine: EngineArgs,
        /// Write the certificate here on a sat verdict
        #[arg(long, value_name = "PATH")]
        emit_cert: Option<PathBuf>,
    },
    /// Verify a certificate file against its problem
    CheckCert {
        problem: PathBuf,
        cert: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Print the value of fsym(n) in the model a certificate denotes
    Eval {
        problem: PathBuf,
        cert: PathBuf,
        fsym: String,
        #[arg(allow_hyphen_values = true)]
        n: String,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run every corpus template across the guard variants and emit CSV
    Bench {
        corpus: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        engine: EngineArgs,
        /// Write rows here instead of stdout
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
        /// Worker threads
        #[arg(long, value_name = "N", default_value_t = 1)]
        jobs: usize,
        /// External solver command to race on the generated scripts
        #[arg(long, value_name = "CMD")]
        baseline: Option<String>,
    },
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match cli.cmd {
        Cmd::Solve { file, solver, engine, emit_cert } => {
            cmd_solve(&file, &solver, &engine, emit_cert.as_deref())
        }
        Cmd::CheckCert { problem, cert, solver } => cmd_check_cert(&problem, &cert, &solver),
        Cmd::Eval { problem, cert, fsym, n, solver } => {
            cmd_eval(&problem, &cert, &fsym, &n, &solver)
        }
        Cmd::Bench { corpus, solver, engine, csv, jobs, baseline } => {
            cmd_bench(&corpus, &solver, &engine, csv.as_deref(), jobs, baseline.as_deref())
        }
    }
}

fn fail(msg: impl std::fmt::Display, code: i32) -> i32 {
    eprintln!("indcert: {msg}");
    code
}

fn solver_config(args: &SolverArgs) -> Result<SolverConfig, String> {
    let mut cfg = if let Some(path) = &args.solver {
        SolverConfig::new(path)
    } else if let Some(cfg) = SolverConfig::from_env() {
        cfg
    } else {
        let fallback = Path::new("solver").join("indcert-z3");
        if fallback.exists() {
            SolverConfig::new(fallback)
        } else {
            return Err(
                "no solver configured: pass --solver, set INDCERT_SOLVER, or provide \
                 ./solver/indcert-z3"
                    .to_string(),
            );
        }
    };
    if let Some(ms) = args.timeout_ms {
        cfg.timeout = Duration::from_millis(ms);
    }
    Ok(cfg)
}

fn engine_options(args: &EngineArgs) -> Result<EngineOptions, String> {
    let mut opts = EngineOptions::default();
    if let Some(n) = args.max_iters {
        opts.max_iterations = n;
    }
    opts.seed_from_ground = args.seed_from_ground;
    if let Some(ends) = &args.init {
        let parse_end = |s: &String| {
            s.parse::<Int>().map_err(|_| format!("--init expects integers, got '{s}'"))
        };
        let (lo, hi) = (parse_end(&ends[0])?, parse_end(&ends[1])?);
        if lo > hi {
            return Err(format!("--init {lo} {hi} is an empty interval"));
        }
        opts.init = Some((lo, hi));
    }
    Ok(opts)
}

fn load_problem(path: &Path) -> Result<FragmentProblem, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let phi = parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    decompose(&phi).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_solve(
    file: &Path,
    solver: &SolverArgs,
    engine: &EngineArgs,
    emit_cert: Option<&Path>,
) -> i32 {
    let p = match load_problem(file) {
        Ok(p) => p,
        Err(e) => return fail(e, EXIT_USAGE),
    };
    let cfg = match solver_config(solver) {
        Ok(c) => c,
        Err(e) => return fail(e, EXIT_USAGE),
    };
    let opts = match engine_options(engine) {
        Ok(o) => o,
        Err(e) => return fail(e, EXIT_USAGE),
    };
    let outcome = match solve(&p, &opts, &cfg) {
        Ok(o) => o,
        Err(EngineError::Fragment(e)) => return fail(e, EXIT_USAGE),
        Err(e) => return fail(e, EXIT_BACKEND),
    };
    match outcome.verdict {
        Verdict::Sat(cert) => {
            if let Some(path) = emit_cert {
                if let Err(e) = fs::write(path, format!("{cert}\n")) {
                    return fail(format!("{}: {e}", path.display()), EXIT_USAGE);
                }
            }
            println!("sat");
            0
        }
        Verdict::Unsat { refuted } => {
            println!("unsat");
            eprintln!("refuted: the conjunction of these {} formulas", refuted.len());
            for f in &refuted {
                eprintln!("  {f}");
            }
            EXIT_NEGATIVE
        }
        Verdict::Unknown(reason) => {
            println!("unknown");
            let detail = match reason {
                UnknownReason::Budget => "iteration budget exhausted",
                UnknownReason::SolverUnknown => "solver answered unknown",
                UnknownReason::UnsupportedObligation => {
                    "an obligation could not be decided"
                }
            };
            eprintln!("indcert: {detail} after {} iterations", outcome.stats.iterations);
            EXIT_UNKNOWN
        }
    }
}

fn cmd_check_cert(problem: &Path, cert_path: &Path, solver: &SolverArgs) -> i32 {
    let p = match load_problem(problem) {
        Ok(p) => p,
        Err(e) => return fail(e, EXIT_USAGE),
    };
    let text = match fs::read_to_string(cert_path) {
        Ok(t) => t,
        Err(e) => return fail(format!("{}: {e}", cert_path.display()), EXIT_USAGE),
    };
    let cert = match deserialize(&text) {
        Ok(c) => c,
        Err(e) => return fail(format!("{}: {e}", cert_path.display()), EXIT_USAGE),
    };
    let cfg = match solver_config(solver) {
        Ok(c) => c,
        Err(e) => return fail(e, EXIT_USAGE),
    };
    match check(&p, &cert, &cfg) {
        Ok(report) if report.accepted() => {
            println!("accepted");
            0
        }
        Ok(report) => {
            println!("rejected");
            for f in &report.failures {
                println!("{f}");
            }
            EXIT_NEGATIVE
        }
        Err(e) => fail(e, EXIT_BACKEND),
    }
}

fn cmd_eval(problem: &Path, cert_path: &Path, fsym: &str, n: &str, solver: &SolverArgs) -> i32 {
    let p = match load_problem(problem) {
        Ok(p) => p,
        Err(e) => return fail(e, EXIT_USAGE),
    };
    let text = match fs::read_to_string(cert_path) {
        Ok(t) => t,
        Err(e) => return fail(format!("{}: {e}", cert_path.display()), EXIT_USAGE),
    };
    let cert = match deserialize(&text) {
        Ok(c) => c,
        Err(e) => return fail(format!("{}: {e}", cert_path.display()), EXIT_USAGE),
    };
    let Ok(n) = n.parse::<Int>() else {
        return fail(format!("'{n}' is not an integer"), EXIT_USAGE);
    };
    let cfg = match solver_config(solver) {
        Ok(c) => c,
        Err(e) => return fail(e, EXIT_USAGE),
    };
    let mut ev = match Evaluator::new(&p, &cert, &cfg) {
        Ok(ev) => ev,
        Err(EvalError::Backend(e)) => return fail(e, EXIT_BACKEND),
        Err(e) => return fail(e, EXIT_USAGE),
    };
    match ev.value(fsym, &n) {
        Ok(v) => {
            println!("{v}");
            0
        }
        Err(EvalError::Backend(e)) => fail(e, EXIT_BACKEND),
        Err(e) => fail(e, EXIT_USAGE),
    }
}

fn cmd_bench(
    corpus: &Path,
    solver: &SolverArgs,
    engine: &EngineArgs,
    csv: Option<&Path>,
    jobs: usize,
    baseline: Option<&str>,
) -> i32 {
    let cfg = match solver_config(solver) {
        Ok(c) => c,
        Err(e) => return fail(e, EXIT_USAGE),
    };
    let opts = match engine_options(engine) {
        Ok(o) => o,
        Err(e) => return fail(e, EXIT_USAGE),
    };
    let scripts = std::env::temp_dir().join(format!("indcert-bench-{}", std::process::id()));
    let cases = match bench::generate(corpus, &scripts) {
        Ok(cases) => cases,
        Err(e) => return fail(e, EXIT_USAGE),
    };
    let rows = bench::run_suite(&cases, &cfg, &opts, jobs, baseline, BASELINE_BUDGET);
    let result = write_rows(&rows, csv, baseline.is_some());
    for line in bench::compare_expected(&cases, &rows) {
        eprintln!("mismatch: {line}");
    }
    let _ = fs::remove_dir_all(&scripts);
    match result {
        Ok(()) => 0,
        Err(e) => fail(e, EXIT_USAGE),
    }
}

// Generous: a baseline solver is expected to time out on the hard variants.
const BASELINE_BUDGET: Duration = Duration::from_secs(600);

fn write_rows(rows: &[bench::BenchRow], csv: Option<&Path>, with_baseline: bool) -> Result<(), String> {
    let text = bench::to_csv(rows, with_baseline).map_err(|e| e.to_string())?;
    match csv {
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
