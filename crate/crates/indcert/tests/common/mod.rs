use indcert::ast;
use indcert::backend::{SolverConfig, SOLVER_ENV};
use indcert::fragment::{self, FragmentProblem};
use std::path::PathBuf;
use std::time::Duration;

/// Repository root, two levels above this crate.
pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)
        .expect("crate lives two levels below the repository root")
        .to_path_buf()
}

/// Locates the solver: `INDCERT_SOLVER` if set, the bundled shim otherwise.
/// Tests run every satisfiable query's model back through the evaluator.
pub fn solver_config() -> SolverConfig {
    let path = std::env::var(SOLVER_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|_| repo_root().join("solver").join("indcert-z3"));
    assert!(
        path.exists(),
        "no solver at {}; set {SOLVER_ENV} or run `npm install` inside solver/",
        path.display()
    );
    let mut cfg = SolverConfig::new(path);
    cfg.timeout = Duration::from_secs(120);
    cfg.model_check = true;
    cfg
}

#[allow(dead_code)]
pub fn problem(src: &str) -> FragmentProblem {
    fragment::decompose(&ast::parse(src).expect("test input parses")).expect("test input splits")
}

#[allow(dead_code)]
pub fn counter_chain() -> FragmentProblem {
    problem(
        "(declare-fun f (Int) Int)\
         (assert (= (f 4) 7))\
         (assert (forall ((x Int)) (= (f (+ x 1)) (+ (f x) 1))))",
    )
}
