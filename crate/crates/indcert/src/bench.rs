//! Corpus harness: materializes guard variants of each template, runs the
//! engine over them, compares verdicts against a golden table, renders CSV,
//! and optionally races a plain SMT solver on the same files.

use crate::ast::{self, Formula, Int, Rel, Term};
use crate::engine::{self, EngineOptions};
use crate::backend::SolverConfig;
use crate::fragment;
use num_traits::pow::Pow;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Guard variants applied to every template, in run order.
pub const VARIANTS: [&str; 7] = [
    "unbounded",
    "lower-guard",
    "bounded-c1",
    "bounded-c2",
    "bounded-c3",
    "bounded-c4",
    "bounded-c5",
];

#[derive(Debug, Clone)]
pub struct BenchCase {
    pub template: String,
    pub variant: String,
    pub path: PathBuf,
    pub expected: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub template: String,
    pub variant: String,
    pub verdict: String,
    pub iterations: u64,
    pub obligations: u64,
    pub blocked: u64,
    pub ms: u128,
    pub baseline_verdict: Option<String>,
    pub baseline_ms: Option<u128>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {detail}")]
    BadTemplate { path: PathBuf, detail: String },
    #[error("unknown variant '{0}'")]
    UnknownVariant(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.to_path_buf(), source }
}

/// Rewrites a template's quantified conjunct for one guard variant.
pub fn variant_formula(phi: &Formula, variant: &str) -> Result<Formula, BenchError> {
    let guard_for = |var: &str| -> Result<Option<Formula>, BenchError> {
        let lower = Formula::atom(Rel::Le, Term::int(0), Term::var(var));
        match variant {
            "unbounded" => Ok(None),
            "lower-guard" => Ok(Some(lower)),
            _ => match variant.strip_prefix("bounded-c").and_then(|k| k.parse::<u32>().ok()) {
                Some(k) if (1..=9).contains(&k) => {
                    let hi = Int::from(10).pow(k);
                    Ok(Some(Formula::And(vec![
                        lower,
                        Formula::atom(Rel::Le, Term::var(var), Term::Int(hi)),
                    ])))
                }
                _ => Err(BenchError::UnknownVariant(variant.to_string())),
            },
        }
    };
    let conjuncts = phi.conjuncts();
    let mut out = Vec::with_capacity(conjuncts.len());
    for c in conjuncts {
        match c {
            Formula::Forall(v, body) => match guard_for(v)? {
                None => out.push(c.clone()),
                Some(g) => {
                    out.push(Formula::forall(v.clone(), Formula::implies(g, (**body).clone())))
                }
            },
            other => {
                // Still fail fast on bad variant names even when a template
                // has no quantified conjunct.
                guard_for("x")?;
                out.push(other.clone());
            }
        }
    }
    Ok(Formula::and(out))
}

/// Prints a formula back as a standalone solvable script.
pub fn render_script(phi: &Formula) -> String {
    let syms = ast::symbols(phi);
    let mut out = String::from("(set-logic UFLIA)\n");
    for c in &syms.consts {
        let _ = writeln!(out, "(declare-const {c} Int)");
    }
    for f in &syms.funs {
        let _ = writeln!(out, "(declare-fun {f} (Int) Int)");
    }
    for c in phi.conjuncts() {
        let _ = writeln!(out, "(assert {c})");
    }
    out.push_str("(check-sat)\n");
    out
}

fn load_expected(corpus: &Path) -> Result<BTreeMap<String, String>, BenchError> {
    let path = corpus.join("expected.txt");
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(key), Some(verdict), None) => {
                out.insert(key.to_string(), verdict.to_string());
            }
            _ => {
                return Err(BenchError::BadTemplate {
                    path: path.clone(),
                    detail: format!("bad golden line: {line}"),
                })
            }
        }
    }
    Ok(out)
}

/// Reads every template in `corpus`, writes all guard variants into `out`,
/// and returns the cases in deterministic order.
pub fn generate(corpus: &Path, out: &Path) -> Result<Vec<BenchCase>, BenchError> {
    let expected = load_expected(corpus)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut templates: Vec<PathBuf> = fs::read_dir(corpus)
        .map_err(io_err(corpus))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "smt2"))
        .collect();
    templates.sort();
    let mut cases = Vec::new();
    for tpl in &templates {
        let name = tpl
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| BenchError::BadTemplate {
                path: tpl.clone(),
                detail: "unusable file name".into(),
            })?
            .to_string();
        let text = fs::read_to_string(tpl).map_err(io_err(tpl))?;
        let phi = ast::parse(&text).map_err(|e| BenchError::BadTemplate {
            path: tpl.clone(),
            detail: e.to_string(),
        })?;
        for variant in VARIANTS {
            let formula = variant_formula(&phi, variant)?;
            let path = out.join(format!("{name}-{variant}.smt2"));
            fs::write(&path, render_script(&formula)).map_err(io_err(&path))?;
            cases.push(BenchCase {
                template: name.clone(),
                variant: variant.to_string(),
                expected: expected.get(&format!("{name}:{variant}")).cloned(),
                path,
            });
        }
    }
    Ok(cases)
}

/// Runs one case end to end. Input or fragment trouble shows up as the
/// `error` verdict rather than aborting the suite.
pub fn run_case(case: &BenchCase, cfg: &SolverConfig, opts: &EngineOptions) -> BenchRow {
    let started = Instant::now();
    let mut row = BenchRow {
        template: case.template.clone(),
        variant: case.variant.clone(),
        verdict: "error".into(),
        iterations: 0,
        obligations: 0,
        blocked: 0,
        ms: 0,
        baseline_verdict: None,
        baseline_ms: None,
    };
    let outcome = fs::read_to_string(&case.path)
        .map_err(|e| e.to_string())
        .and_then(|text| ast::parse(&text).map_err(|e| e.to_string()))
        .and_then(|phi| fragment::decompose(&phi).map_err(|e| e.to_string()))
        .and_then(|p| engine::solve(&p, opts, cfg).map_err(|e| e.to_string()));
    row.ms = started.elapsed().as_millis();
    match outcome {
        Ok(outcome) => {
            row.verdict = outcome.verdict.label().to_string();
            row.iterations = outcome.stats.iterations;
            row.obligations = outcome.stats.obligation_checks;
            row.blocked = outcome.stats.blocked_patterns;
        }
        Err(_) => {}
    }
    row
}

/// Runs a plain solver on the same file, killing it at the deadline.
/// Returns the verdict string and elapsed milliseconds.
pub fn run_baseline(cmd: &str, file: &Path, timeout: Duration) -> (String, u128) {
    let started = Instant::now();
    let mut parts = cmd.split_whitespace();
    let Some(exe) = parts.next() else { return ("error".into(), 0) };
    let spawned = Command::new(exe)
        .args(parts)
        .arg(file)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn();
    let mut child = match spawned {
        Ok(c) => c,
        Err(_) => return ("error".into(), started.elapsed().as_millis()),
    };
    let mut timed_out = false;
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) => {
                if started.elapsed() >= timeout {
                    let _ = child.kill();
                    let _ = child.wait();
                    timed_out = true;
                    break;
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(_) => break,
        }
    }
    let ms = started.elapsed().as_millis();
    if timed_out {
        return ("timeout".into(), ms);
    }
    let mut text = String::new();
    if let Some(mut out) = child.stdout.take() {
        let _ = out.read_to_string(&mut text);
    }
    let verdict = match text.split_whitespace().next() {
        Some(v @ ("sat" | "unsat" | "unknown")) => v.to_string(),
        _ => "error".into(),
    };
    (verdict, ms)
}

/// Runs the whole suite with `jobs` worker threads, preserving case order in
/// the output.
pub fn run_suite(
    cases: &[BenchCase],
    cfg: &SolverConfig,
    opts: &EngineOptions,
    jobs: usize,
    baseline: Option<&str>,
    baseline_timeout: Duration,
) -> Vec<BenchRow> {
    let jobs = jobs.max(1).min(cases.len().max(1));
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<BenchRow>>> = Mutex::new(vec![None; cases.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(case) = cases.get(i) else { break };
                let mut row = run_case(case, cfg, opts);
                if let Some(cmd) = baseline {
                    let (verdict, ms) = run_baseline(cmd, &case.path, baseline_timeout);
                    row.baseline_verdict = Some(verdict);
                    row.baseline_ms = Some(ms);
                }
                rows.lock().expect("bench rows").get_mut(i).map(|slot| *slot = Some(row));
            });
        }
    });
    rows.into_inner().expect("bench rows").into_iter().map(|r| r.expect("all cases ran")).collect()
}

/// Renders rows as CSV. The baseline columns appear only when requested, so
/// default output is byte-stable apart from the timing column.
pub fn to_csv(rows: &[BenchRow], with_baseline: bool) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header =
        vec!["template", "variant", "verdict", "iterations", "obligations", "blocked", "ms"];
    if with_baseline {
        header.extend(["baseline_verdict", "baseline_ms"]);
    }
    w.write_record(&header)?;
    for r in rows {
        let mut record = vec![
            r.template.clone(),
            r.variant.clone(),
            r.verdict.clone(),
            r.iterations.to_string(),
            r.obligations.to_string(),
            r.blocked.to_string(),
            r.ms.to_string(),
        ];
        if with_baseline {
            record.push(r.baseline_verdict.clone().unwrap_or_default());
            record.push(r.baseline_ms.map(|h| h.to_string()).unwrap_or_default());
        }
        w.write_record(&record)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Lines describing every disagreement with the golden table.
pub fn compare_expected(cases: &[BenchCase], rows: &[BenchRow]) -> Vec<String> {
    cases
        .iter()
        .zip(rows)
        .filter_map(|(case, row)| {
            let want = case.expected.as_deref()?;
            if want == row.verdict {
                None
            } else {
                Some(format!(
                    "{}:{} expected {want}, got {}",
                    case.template, case.variant, row.verdict
                ))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Formula {
        ast::parse(
            "(declare-fun f (Int) Int)\
             (assert (= (f 4) 7))\
             (assert (forall ((x Int)) (= (f (+ x 1)) (+ (f x) 1))))",
        )
        .unwrap()
    }

    #[test]
    fn unbounded_variant_is_identity() {
        let phi = chain();
        assert_eq!(variant_formula(&phi, "unbounded").unwrap(), phi);
    }

    #[test]
    fn guard_variants_wrap_the_quantified_body() {
        let phi = chain();
        let lower = variant_formula(&phi, "lower-guard").unwrap();
        assert!(lower.to_string().contains("(=> (<= 0 x)"));
        let bounded = variant_formula(&phi, "bounded-c3").unwrap();
        assert!(bounded.to_string().contains("(and (<= 0 x) (<= x 1000))"));
        assert!(variant_formula(&phi, "bounded-c0").is_err());
        assert!(variant_formula(&phi, "squished").is_err());
    }

    #[test]
    fn rendered_scripts_parse_back_to_the_same_formula() {
        let phi = variant_formula(&chain(), "bounded-c2").unwrap();
        let script = render_script(&phi);
        assert_eq!(ast::parse(&script).unwrap(), phi);
    }

    #[test]
    fn csv_has_stable_columns() {
        let rows = vec![BenchRow {
            template: "t".into(),
            variant: "unbounded".into(),
            verdict: "sat".into(),
            iterations: 5,
            obligations: 2,
            blocked: 0,
            ms: 12,
            baseline_verdict: None,
            baseline_ms: None,
        }];
        let csv = to_csv(&rows, false).unwrap();
        assert_eq!(
            csv,
            "template,variant,verdict,iterations,obligations,blocked,ms\n\
             t,unbounded,sat,5,2,0,12\n"
        );
    }

    #[test]
    fn golden_comparison_reports_only_disagreements() {
        let case = |e: Option<&str>| BenchCase {
            template: "t".into(),
            variant: "unbounded".into(),
            path: PathBuf::from("x"),
            expected: e.map(str::to_string),
        };
        let row = BenchRow {
            template: "t".into(),
            variant: "unbounded".into(),
            verdict: "sat".into(),
            iterations: 1,
            obligations: 0,
            blocked: 0,
            ms: 1,
            baseline_verdict: None,
            baseline_ms: None,
        };
        assert!(compare_expected(&[case(Some("sat"))], &[row.clone()]).is_empty());
        assert!(compare_expected(&[case(None)], &[row.clone()]).is_empty());
        assert_eq!(compare_expected(&[case(Some("unsat"))], &[row]).len(), 1);
    }
}
