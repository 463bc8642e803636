//! Child-process SMT solver driver.
//!
//! The session speaks a deliberately small slice of SMT-LIB v2 over the
//! child's stdin/stdout: `set-option`, `set-logic`, `declare-const`,
//! `declare-fun`, `assert`, `push`, `pop`, `check-sat`, `get-value`, `exit`.
//! Symbols are declared automatically the first time an assertion mentions
//! them, tracked per push level so redeclaration after a pop works.

use crate::ast::{
    self, eval_formula, CellInterpretation, Formula, Int, Symbol, SymbolSet, Term,
};
use crate::sexp::{self, Sexp};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

/// Environment variable naming the solver executable.
pub const SOLVER_ENV: &str = "INDCERT_SOLVER";

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub command: PathBuf,
    pub args: Vec<String>,
    /// Budget for each reply, not for a whole session.
    pub timeout: Duration,
    /// Re-evaluate the model of every satisfiable quantifier-free query and
    /// fail loudly on disagreement. Meant for tests.
    pub model_check: bool,
}

impl SolverConfig {
    pub fn new(command: impl Into<PathBuf>) -> SolverConfig {
        SolverConfig {
            command: command.into(),
            args: Vec::new(),
            timeout: Duration::from_secs(30),
            model_check: false,
        }
    }

    /// Reads the command from `INDCERT_SOLVER`.
    pub fn from_env() -> Option<SolverConfig> {
        std::env::var(SOLVER_ENV).ok().filter(|s| !s.is_empty()).map(SolverConfig::new)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Logic {
    Uflia,
    Lia,
}

impl Logic {
    fn name(self) -> &'static str {
        match self {
            Logic::Uflia => "UFLIA",
            Logic::Lia => "LIA",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Invalid,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Int(Int),
    Bool(bool),
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("failed to start solver '{command}': {source}")]
    Spawn { command: String, source: std::io::Error },
    #[error("solver gave no reply within {0:?}")]
    Timeout(Duration),
    #[error("solver exited unexpectedly{0}")]
    Crashed(String),
    #[error("solver reported an error: {0}")]
    Solver(String),
    #[error("malformed solver reply: {0}")]
    Protocol(String),
    #[error("solver model disagrees with its own assertions: {0}")]
    ModelCheck(String),
    #[error("i/o error talking to the solver: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Default)]
struct Declarations {
    consts: BTreeSet<Symbol>,
    funs: BTreeSet<Symbol>,
    bools: BTreeSet<Symbol>,
}

pub struct Session {
    child: Child,
    stdin: ChildStdin,
    replies: Receiver<String>,
    stderr: Arc<Mutex<String>>,
    timeout: Duration,
    model_check: bool,
    declared: Vec<Declarations>,
    asserted: Vec<Vec<Formula>>,
    dead: bool,
}

fn balanced(text: &str) -> bool {
    let mut depth: i64 = 0;
    let mut in_string = false;
    for c in text.chars() {
        match c {
            '"' => in_string = !in_string,
            '(' if !in_string => depth += 1,
            ')' if !in_string => depth -= 1,
            _ => {}
        }
    }
    depth <= 0 && !in_string
}

impl Session {
    pub fn new(cfg: &SolverConfig, logic: Logic) -> Result<Session, BackendError> {
        let mut child = Command::new(&cfg.command)
            .args(&cfg.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| BackendError::Spawn {
                command: cfg.command.display().to_string(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let child_stderr = child.stderr.take().expect("piped stderr");

        let (tx, replies) = mpsc::channel();
        thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                match line {
                    Ok(l) => {
                        if tx.send(l).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let stderr_clone = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut buf = String::new();
            let mut reader = BufReader::new(child_stderr);
            let _ = reader.read_to_string(&mut buf);
            if let Ok(mut s) = stderr_clone.lock() {
                *s = buf;
            }
        });

        let mut s = Session {
            child,
            stdin,
            replies,
            stderr,
            timeout: cfg.timeout,
            model_check: cfg.model_check,
            declared: vec![Declarations::default()],
            asserted: vec![Vec::new()],
            dead: false,
        };
        s.send("(set-option :produce-models true)")?;
        s.send(&format!("(set-logic {})", logic.name()))?;
        Ok(s)
    }

    fn send(&mut self, cmd: &str) -> Result<(), BackendError> {
        if self.dead {
            return Err(BackendError::Crashed(" (session already closed)".into()));
        }
        if let Err(e) = writeln!(self.stdin, "{cmd}").and_then(|_| self.stdin.flush()) {
            self.dead = true;
            return Err(BackendError::Crashed(format!(": {e}{}", self.stderr_tail())));
        }
        Ok(())
    }

    fn stderr_tail(&self) -> String {
        let s = self.stderr.lock().map(|s| s.clone()).unwrap_or_default();
        let tail = s.trim();
        if tail.is_empty() {
            String::new()
        } else {
            format!(" (stderr: {})", tail.chars().take(400).collect::<String>())
        }
    }

    fn read_reply(&mut self) -> Result<String, BackendError> {
        let deadline = Instant::now() + self.timeout;
        let mut buf = String::new();
        loop {
            let now = Instant::now();
            if now >= deadline {
                self.dead = true;
                let _ = self.child.kill();
                return Err(BackendError::Timeout(self.timeout));
            }
            match self.replies.recv_timeout(deadline - now) {
                Ok(line) => {
                    if buf.is_empty() && line.trim().is_empty() {
                        continue;
                    }
                    if !buf.is_empty() {
                        buf.push('\n');
                    }
                    buf.push_str(&line);
                    if !buf.trim().is_empty() && balanced(&buf) {
                        return Ok(buf.trim().to_string());
                    }
                }
                Err(RecvTimeoutError::Timeout) => {
                    self.dead = true;
                    let _ = self.child.kill();
                    return Err(BackendError::Timeout(self.timeout));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    self.dead = true;
                    let _ = self.child.kill();
                    return Err(BackendError::Crashed(self.stderr_tail()));
                }
            }
        }
    }

    fn is_declared(&self, kind: fn(&Declarations) -> &BTreeSet<Symbol>, name: &str) -> bool {
        self.declared.iter().any(|d| kind(d).contains(name))
    }

    /// Emits declarations for any symbol in `syms` this session has not seen
    /// at the current push level or below.
    pub fn ensure_declared(&mut self, syms: &SymbolSet) -> Result<(), BackendError> {
        debug_assert!(syms.vars.is_empty(), "free variables reached the solver: {:?}", syms.vars);
        let consts: Vec<Symbol> = syms
            .consts
            .iter()
            .filter(|c| !self.is_declared(|d| &d.consts, c))
            .cloned()
            .collect();
        let funs: Vec<Symbol> =
            syms.funs.iter().filter(|f| !self.is_declared(|d| &d.funs, f)).cloned().collect();
        let bools: Vec<Symbol> =
            syms.bools.iter().filter(|b| !self.is_declared(|d| &d.bools, b)).cloned().collect();
        for c in &consts {
            self.send(&format!("(declare-const {c} Int)"))?;
        }
        for f in &funs {
            self.send(&format!("(declare-fun {f} (Int) Int)"))?;
        }
        for b in &bools {
            self.send(&format!("(declare-const {b} Bool)"))?;
        }
        let top = self.declared.last_mut().expect("declaration stack");
        top.consts.extend(consts);
        top.funs.extend(funs);
        top.bools.extend(bools);
        Ok(())
    }

    pub fn assert_formula(&mut self, f: &Formula) -> Result<(), BackendError> {
        self.ensure_declared(&ast::symbols(f))?;
        self.send(&format!("(assert {f})"))?;
        self.asserted.last_mut().expect("assertion stack").push(f.clone());
        Ok(())
    }

    pub fn push(&mut self) -> Result<(), BackendError> {
        self.send("(push 1)")?;
        self.declared.push(Declarations::default());
        self.asserted.push(Vec::new());
        Ok(())
    }

    pub fn pop(&mut self) -> Result<(), BackendError> {
        debug_assert!(self.declared.len() > 1, "pop below the base level");
        self.send("(pop 1)")?;
        self.declared.pop();
        self.asserted.pop();
        Ok(())
    }

    pub fn check_sat(&mut self) -> Result<Status, BackendError> {
        self.check_sat_cmd("(check-sat)")
    }

    fn check_sat_cmd(&mut self, cmd: &str) -> Result<Status, BackendError> {
        self.send(cmd)?;
        let reply = self.read_reply()?;
        let status = match reply.as_str() {
            "sat" => Status::Sat,
            "unsat" => Status::Unsat,
            "unknown" => Status::Unknown,
            other => {
                if other.starts_with("(error") {
                    return Err(BackendError::Solver(other.to_string()));
                }
                return Err(BackendError::Protocol(format!("unexpected check-sat reply: {other}")));
            }
        };
        if status == Status::Sat && self.model_check {
            self.verify_model()?;
        }
        Ok(status)
    }

    /// Values of raw printed expressions, keyed by the solver's echo of each
    /// expression (whitespace-normalized).
    pub fn get_values(
        &mut self,
        exprs: &[String],
    ) -> Result<BTreeMap<String, Value>, BackendError> {
        if exprs.is_empty() {
            return Ok(BTreeMap::new());
        }
        self.send(&format!("(get-value ({}))", exprs.join(" ")))?;
        let reply = self.read_reply()?;
        if reply.starts_with("(error") {
            return Err(BackendError::Solver(reply));
        }
        let parsed = sexp::parse_one(&reply)
            .map_err(|e| BackendError::Protocol(format!("get-value reply: {e}")))?;
        let pairs = parsed
            .list()
            .ok_or_else(|| BackendError::Protocol(format!("get-value reply: {reply}")))?;
        let mut out = BTreeMap::new();
        for pair in pairs {
            let items = pair
                .list()
                .filter(|l| l.len() == 2)
                .ok_or_else(|| BackendError::Protocol(format!("value pair: {pair}")))?;
            out.insert(items[0].to_string(), parse_value(&items[1])?);
        }
        Ok(out)
    }

    /// Convenience wrapper: integer values of ground terms.
    pub fn get_int_values(
        &mut self,
        terms: &[Term],
    ) -> Result<BTreeMap<String, Int>, BackendError> {
        let exprs: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
        let vals = self.get_values(&exprs)?;
        let mut out = BTreeMap::new();
        for e in &exprs {
            match vals.get(e) {
                Some(Value::Int(n)) => {
                    out.insert(e.clone(), n.clone());
                }
                Some(Value::Bool(_)) => {
                    return Err(BackendError::Protocol(format!("boolean value for term {e}")))
                }
                None => {
                    return Err(BackendError::Protocol(format!("model omitted value for {e}")))
                }
            }
        }
        Ok(out)
    }

    /// Decides validity of a closed formula inside a fresh frame: pushes,
    /// asserts the negation, checks, pops. The check runs quantifier
    /// elimination before the solver core: the default strategy is free to
    /// give up on alternating quantifiers over linear arithmetic, and its
    /// answer also turns out to depend on what the session saw earlier, so
    /// an eliminating tactic is the only reply that is stable across
    /// sessions.
    pub fn check_validity(&mut self, phi: &Formula) -> Result<Validity, BackendError> {
        self.push()?;
        self.assert_formula(&Formula::not(phi.clone()))?;
        let status = self.check_sat_cmd("(check-sat-using (then qe smt))")?;
        self.pop()?;
        Ok(match status {
            Status::Sat => Validity::Invalid,
            Status::Unsat => Validity::Valid,
            Status::Unknown => Validity::Unknown,
        })
    }

    fn all_assertions(&self) -> impl Iterator<Item = &Formula> {
        self.asserted.iter().flatten()
    }

    // Re-evaluates the current model against every asserted formula. Skipped
    // when any assertion carries a quantifier, since the ground evaluator
    // cannot weigh in there.
    fn verify_model(&mut self) -> Result<(), BackendError> {
        let formulas: Vec<Formula> = self.all_assertions().cloned().collect();
        let mut syms = SymbolSet::default();
        for f in &formulas {
            if contains_quantifier(f) {
                return Ok(());
            }
            syms = syms.union(ast::symbols(f));
        }
        let mut names: Vec<String> = syms.consts.iter().cloned().collect();
        names.extend(syms.bools.iter().cloned());
        let vals = self.get_values(&names)?;
        let mut env = CellInterpretation::default();
        let mut bools: BTreeMap<Symbol, bool> = BTreeMap::new();
        for c in &syms.consts {
            if let Some(Value::Int(n)) = vals.get(c) {
                env.consts.insert(c.clone(), n.clone());
            }
        }
        for b in &syms.bools {
            if let Some(Value::Bool(v)) = vals.get(b) {
                bools.insert(b.clone(), *v);
            }
        }
        let mut cell_terms: BTreeSet<String> = BTreeSet::new();
        for f in &formulas {
            collect_ground_cells(f, &env, &mut cell_terms);
        }
        let cell_exprs: Vec<String> = cell_terms.into_iter().collect();
        let cell_vals = self.get_values(&cell_exprs)?;
        for (expr, v) in &cell_vals {
            if let (Ok(Sexp::List(items, _)), Value::Int(n)) = (sexp::parse_one(expr), v) {
                if let [Sexp::Atom(f, _), arg] = items.as_slice() {
                    if let Ok(m) = parse_int_sexp(arg) {
                        env.cells.insert((f.clone(), m), n.clone());
                    }
                }
            }
        }
        for f in &formulas {
            let grounded = subst_bools(f, &bools);
            if eval_formula(&grounded, &env) == Some(false) {
                return Err(BackendError::ModelCheck(format!("assertion {f}")));
            }
        }
        Ok(())
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = writeln!(self.stdin, "(exit)");
        let _ = self.stdin.flush();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn contains_quantifier(f: &Formula) -> bool {
    match f {
        Formula::True | Formula::False | Formula::Atom(..) | Formula::BoolVar(_) => false,
        Formula::Not(g) => contains_quantifier(g),
        Formula::And(fs) | Formula::Or(fs) => fs.iter().any(contains_quantifier),
        Formula::Implies(a, b) => contains_quantifier(a) || contains_quantifier(b),
        Formula::Forall(..) | Formula::Exists(..) => true,
    }
}

fn subst_bools(f: &Formula, bools: &BTreeMap<Symbol, bool>) -> Formula {
    match f {
        Formula::BoolVar(b) => match bools.get(b) {
            Some(true) => Formula::True,
            Some(false) => Formula::False,
            None => f.clone(),
        },
        Formula::True | Formula::False | Formula::Atom(..) => f.clone(),
        Formula::Not(g) => Formula::not(subst_bools(g, bools)),
        Formula::And(fs) => Formula::And(fs.iter().map(|g| subst_bools(g, bools)).collect()),
        Formula::Or(fs) => Formula::Or(fs.iter().map(|g| subst_bools(g, bools)).collect()),
        Formula::Implies(a, b) => {
            Formula::implies(subst_bools(a, bools), subst_bools(b, bools))
        }
        Formula::Forall(v, body) => Formula::forall(v.clone(), subst_bools(body, bools)),
        Formula::Exists(v, body) => Formula::exists(v.clone(), subst_bools(body, bools)),
    }
}

// Printed forms of applications whose argument evaluates under `env`.
fn collect_ground_cells(f: &Formula, env: &CellInterpretation, out: &mut BTreeSet<String>) {
    fn term(t: &Term, env: &CellInterpretation, out: &mut BTreeSet<String>) {
        match t {
            Term::Int(_) | Term::Const(_) | Term::Var(_) => {}
            Term::Add(a, b) => {
                term(a, env, out);
                term(b, env, out);
            }
            Term::Mul(_, u) | Term::Neg(u) => term(u, env, out),
            Term::App(fsym, arg) => {
                if let Some(n) = ast::eval_term(arg, env) {
                    out.insert(Term::app(fsym.clone(), Term::Int(n)).to_string());
                }
                term(arg, env, out);
            }
        }
    }
    match f {
        Formula::True | Formula::False | Formula::BoolVar(_) => {}
        Formula::Atom(_, a, b) => {
            term(a, env, out);
            term(b, env, out);
        }
        Formula::Not(g) => collect_ground_cells(g, env, out),
        Formula::And(fs) | Formula::Or(fs) => {
            for g in fs {
                collect_ground_cells(g, env, out);
            }
        }
        Formula::Implies(a, b) => {
            collect_ground_cells(a, env, out);
            collect_ground_cells(b, env, out);
        }
        Formula::Forall(_, body) | Formula::Exists(_, body) => {
            collect_ground_cells(body, env, out)
        }
    }
}

fn parse_int_sexp(s: &Sexp) -> Result<Int, BackendError> {
    match s {
        Sexp::Atom(a, _) => {
            a.parse::<Int>().map_err(|_| BackendError::Protocol(format!("expected integer: {a}")))
        }
        Sexp::List(items, _) => match items.as_slice() {
            [Sexp::Atom(minus, _), inner] if minus == "-" => Ok(-parse_int_sexp(inner)?),
            _ => Err(BackendError::Protocol(format!("expected integer: {s}"))),
        },
    }
}

fn parse_value(s: &Sexp) -> Result<Value, BackendError> {
    if let Some(a) = s.atom() {
        match a {
            "true" => return Ok(Value::Bool(true)),
            "false" => return Ok(Value::Bool(false)),
            _ => {}
        }
    }
    parse_int_sexp(s).map(Value::Int)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balance_ignores_strings() {
        assert!(balanced("((a 1) (b 2))"));
        assert!(!balanced("((a 1)"));
        assert!(balanced("(error \"unmatched ( inside\")"));
    }

    #[test]
    fn parses_values() {
        let v = sexp::parse_one("(- 4)").unwrap();
        assert_eq!(parse_value(&v).unwrap(), Value::Int(Int::from(-4)));
        let v = sexp::parse_one("17").unwrap();
        assert_eq!(parse_value(&v).unwrap(), Value::Int(Int::from(17)));
        let v = sexp::parse_one("true").unwrap();
        assert_eq!(parse_value(&v).unwrap(), Value::Bool(true));
    }

    #[test]
    fn boolean_substitution_reaches_leaves() {
        let f = Formula::implies(
            Formula::BoolVar("p".into()),
            Formula::And(vec![Formula::BoolVar("q".into()), Formula::True]),
        );
        let mut bools = BTreeMap::new();
        bools.insert("p".to_string(), true);
        bools.insert("q".to_string(), false);
        let g = subst_bools(&f, &bools);
        assert_eq!(eval_formula(&g, &CellInterpretation::default()), Some(false));
    }
}
