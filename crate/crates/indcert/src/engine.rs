//! The certification engine: grows a base interval, instantiates the
//! quantified conjunct over it, and searches for pivot selections whose
//! obligations the solver can discharge. Satisfiable runs return a
//! certificate; unsatisfiable runs return the finite refuted conjunction.

use crate::ast::{eval_term, CellInterpretation, Formula, Int, Symbol, SymbolSet, Term};
use crate::backend::{
    BackendError, Logic, Session, SolverConfig, Status, Validity, Value,
};
use crate::certificate::Certificate;
use crate::encoder::{
    blocking_clause, pattern_of_assignment, propagability, psi_selector, SelectorVar,
    SubsetPattern,
};
use crate::fragment::{Direction, FragmentError, FragmentProblem, GuardKind, Interval};
use num_traits::Zero;
use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct EngineOptions {
    /// Outer iterations: each one widens the base interval once.
    pub max_iterations: u64,
    /// Starting interval; for guarded problems only the upper end is used,
    /// the lower end stays pinned to the guard.
    pub init: Option<(Int, Int)>,
    /// Start from the span of the integer literals used as function
    /// arguments in the ground part, instead of a single point.
    pub seed_from_ground: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { max_iterations: 64, init: None, seed_from_ground: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnknownReason {
    /// Iteration budget exhausted.
    Budget,
    /// The solver answered `unknown` on a base or selector query.
    SolverUnknown,
    /// Some propagability obligation came back undecided, so a selection
    /// that might exist could not be confirmed.
    UnsupportedObligation,
}

#[derive(Debug)]
pub enum Verdict {
    Sat(Box<Certificate>),
    /// The listed finite conjunction is already unsatisfiable.
    Unsat { refuted: Vec<Formula> },
    Unknown(UnknownReason),
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Sat(_) => "sat",
            Verdict::Unsat { .. } => "unsat",
            Verdict::Unknown(_) => "unknown",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    pub iterations: u64,
    pub base_checks: u64,
    pub selector_checks: u64,
    pub obligation_checks: u64,
    pub memo_hits: u64,
    pub blocked_patterns: u64,
    pub wall: Duration,
}

#[derive(Debug)]
pub struct SatOutcome {
    pub verdict: Verdict,
    pub stats: SolveStats,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Fragment(#[from] FragmentError),
    #[error("solver model omitted required values: {0}")]
    IncompleteModel(String),
}

// Widest ground literal used as a function argument, for seeding.
fn ground_arg_span(p: &FragmentProblem) -> Option<(Int, Int)> {
    let empty = CellInterpretation::default();
    let mut lo: Option<Int> = None;
    let mut hi: Option<Int> = None;
    for info in p.funcs.values() {
        for a in &info.f_args {
            if let Some(n) = eval_term(a, &empty) {
                lo = Some(lo.map_or(n.clone(), |l: Int| l.min(n.clone())));
                hi = Some(hi.map_or(n.clone(), |h: Int| h.max(n)));
            }
        }
    }
    Some((lo?, hi?))
}

fn initial_interval(p: &FragmentProblem, opts: &EngineOptions) -> Interval {
    let hint = opts.init.clone().or_else(|| {
        if opts.seed_from_ground {
            ground_arg_span(p).map(|(lo, hi)| (lo.min(Int::zero()), hi.max(Int::zero())))
        } else {
            None
        }
    });
    match &p.guard {
        GuardKind::Unbounded => match hint {
            Some((lo, hi)) => Interval { lo: lo.clone(), hi: hi.max(lo) },
            None => Interval::point(0),
        },
        GuardKind::LowerBounded(lo) => {
            let hi = hint.map(|(_, h)| h).unwrap_or_else(|| lo.clone());
            Interval { lo: lo.clone(), hi: hi.max(lo.clone()) }
        }
        GuardKind::DoublyBounded(lo, hi) => {
            let want = hint.map(|(_, h)| h).unwrap_or_else(|| lo.clone());
            Interval { lo: lo.clone(), hi: want.max(lo.clone()).min(hi.clone()) }
        }
    }
}

fn widen(guard: &GuardKind, b: &Interval) -> Interval {
    let one = Int::from(1);
    match guard {
        GuardKind::Unbounded => Interval { lo: &b.lo - &one, hi: &b.hi + &one },
        GuardKind::LowerBounded(_) => Interval { lo: b.lo.clone(), hi: &b.hi + &one },
        GuardKind::DoublyBounded(_, hi) => {
            Interval { lo: b.lo.clone(), hi: (&b.hi + &one).min(hi.clone()) }
        }
    }
}

struct Search<'a> {
    p: &'a FragmentProblem,
    cfg: &'a SolverConfig,
    ground: Session,
    /// Lazily started pure-arithmetic session for obligations.
    oracle: Option<Session>,
    refuted: Vec<Formula>,
    asserted: Option<Interval>,
    blocked: Vec<(Direction, Formula)>,
    memo: BTreeMap<(Direction, BTreeSet<String>), Validity>,
    saw_undecided_obligation: bool,
    stats: SolveStats,
    started: Instant,
}

impl<'a> Search<'a> {
    fn outcome(mut self, verdict: Verdict) -> SatOutcome {
        self.stats.wall = self.started.elapsed();
        SatOutcome { verdict, stats: self.stats }
    }

    fn extend_base(&mut self, b: &Interval) -> Result<(), EngineError> {
        if !self.p.has_quantifier() {
            return Ok(());
        }
        let Some(cur) = self.p.guard.clamp(b) else { return Ok(()) };
        for z in cur.iter() {
            if self.asserted.as_ref().is_some_and(|prev| prev.contains(&z)) {
                continue;
            }
            let inst = self.p.q_at(&z);
            self.ground.assert_formula(&inst)?;
            self.refuted.push(inst);
        }
        self.asserted = Some(cur);
        Ok(())
    }

    fn check_obligation(&mut self, pat: &SubsetPattern) -> Result<Validity, EngineError> {
        let key = (pat.direction, pat.selected.clone());
        if let Some(v) = self.memo.get(&key) {
            self.stats.memo_hits += 1;
            return Ok(*v);
        }
        let sess = match self.oracle.as_mut() {
            Some(s) => s,
            None => self.oracle.insert(Session::new(self.cfg, Logic::Lia)?),
        };
        self.stats.obligation_checks += 1;
        let v = sess.check_validity(&propagability(self.p, pat))?;
        self.memo.insert(key, v);
        Ok(v)
    }

    // Reads the explicit part of the certificate out of the current model.
    fn assemble(
        &mut self,
        b: &Interval,
        patterns: &[SubsetPattern],
    ) -> Result<Certificate, EngineError> {
        let mut decls = SymbolSet::default();
        decls.consts = self.p.consts.clone();
        decls.funs = self.p.funcs.keys().cloned().collect();
        self.ground.ensure_declared(&decls)?;

        let const_names: Vec<String> = self.p.consts.iter().cloned().collect();
        let vals = self.ground.get_values(&const_names)?;
        let mut consts: BTreeMap<Symbol, Int> = BTreeMap::new();
        for c in &self.p.consts {
            match vals.get(c) {
                Some(Value::Int(n)) => {
                    consts.insert(c.clone(), n.clone());
                }
                _ => return Err(EngineError::IncompleteModel(format!("constant {c}"))),
            }
        }

        let cenv = CellInterpretation { consts: consts.clone(), cells: BTreeMap::new() };
        let mut keys: BTreeSet<(Symbol, Int)> = BTreeSet::new();
        for (fsym, info) in &self.p.funcs {
            for a in &info.f_args {
                let n = eval_term(a, &cenv).ok_or_else(|| {
                    EngineError::IncompleteModel(format!("argument {a} of {fsym}"))
                })?;
                keys.insert((fsym.clone(), n));
            }
        }
        if self.p.has_quantifier() {
            if let Some(range) = self.p.guard.clamp(b) {
                for z in range.iter() {
                    for t in self.p.qterms() {
                        let cell = t.cell_at(&z, &consts).ok_or_else(|| {
                            EngineError::IncompleteModel(format!("offset of {}", t.id()))
                        })?;
                        keys.insert(cell);
                    }
                }
            }
        }
        let terms: Vec<Term> = keys
            .iter()
            .map(|(f, n)| Term::app(f.clone(), Term::Int(n.clone())))
            .collect();
        let cell_vals = self.ground.get_int_values(&terms)?;
        let mut cells = BTreeMap::new();
        for ((f, n), t) in keys.iter().zip(&terms) {
            let v = cell_vals.get(&t.to_string()).ok_or_else(|| {
                EngineError::IncompleteModel(format!("cell {t}"))
            })?;
            cells.insert((f.clone(), n.clone()), v.clone());
        }

        let select = |dir: Direction| -> Option<Vec<String>> {
            patterns
                .iter()
                .find(|pat| pat.direction == dir)
                .map(|pat| pat.selected.iter().cloned().collect())
        };
        Ok(Certificate {
            interval: b.clone(),
            guard: self.p.guard.clone(),
            consts,
            cells,
            sel_up: select(Direction::Up),
            sel_down: select(Direction::Down),
            verified_by: Some(self.cfg.command.display().to_string()),
        })
    }
}

/// Decides satisfiability of a validated problem.
pub fn solve(
    p: &FragmentProblem,
    opts: &EngineOptions,
    cfg: &SolverConfig,
) -> Result<SatOutcome, EngineError> {
    p.validate()?;
    let mut search = Search {
        p,
        cfg,
        ground: Session::new(cfg, Logic::Uflia)?,
        oracle: None,
        refuted: vec![p.f.clone()],
        asserted: None,
        blocked: Vec::new(),
        memo: BTreeMap::new(),
        saw_undecided_obligation: false,
        stats: SolveStats::default(),
        started: Instant::now(),
    };
    search.ground.assert_formula(&p.f)?;

    let dirs: &[Direction] = if p.has_quantifier() { p.guard.directions() } else { &[] };
    let mut b = initial_interval(p, opts);

    for iteration in 1..=opts.max_iterations {
        search.stats.iterations = iteration;
        search.extend_base(&b)?;
        search.stats.base_checks += 1;
        match search.ground.check_sat()? {
            Status::Unsat => {
                let refuted = std::mem::take(&mut search.refuted);
                return Ok(search.outcome(Verdict::Unsat { refuted }));
            }
            Status::Unknown => {
                return Ok(search.outcome(Verdict::Unknown(UnknownReason::SolverUnknown)))
            }
            Status::Sat => {}
        }

        // Base interval alone settles it: no quantifier, or the guard region
        // is finite and fully instantiated.
        let covered = match &p.guard {
            _ if !p.has_quantifier() => true,
            GuardKind::DoublyBounded(lo, hi) => b.lo <= *lo && b.hi >= *hi,
            _ => false,
        };
        if covered {
            let cert = search.assemble(&b, &[])?;
            return Ok(search.outcome(Verdict::Sat(Box::new(cert))));
        }

        search.ground.push()?;
        let mut selectors: Vec<(Direction, Vec<SelectorVar>)> = Vec::new();
        for &dir in dirs {
            let (formula, vars) = psi_selector(p, dir, &b);
            let mut decls = SymbolSet::default();
            decls.bools = vars.iter().map(|v| v.name.clone()).collect();
            search.ground.ensure_declared(&decls)?;
            search.ground.assert_formula(&formula)?;
            selectors.push((dir, vars));
        }
        let clauses: Vec<Formula> = search.blocked.iter().map(|(_, c)| c.clone()).collect();
        for clause in clauses {
            search.ground.assert_formula(&clause)?;
        }

        'candidates: loop {
            search.stats.selector_checks += 1;
            match search.ground.check_sat()? {
                Status::Unsat => break 'candidates,
                Status::Unknown => {
                    return Ok(search.outcome(Verdict::Unknown(UnknownReason::SolverUnknown)))
                }
                Status::Sat => {}
            }
            let names: Vec<String> =
                selectors.iter().flat_map(|(_, vars)| vars.iter().map(|v| v.name.clone())).collect();
            let model = search.ground.get_values(&names)?;
            let mut patterns = Vec::new();
            for (dir, vars) in &selectors {
                for v in vars {
                    if !model.contains_key(&v.name) {
                        return Err(EngineError::IncompleteModel(format!(
                            "selector {}",
                            v.name
                        )));
                    }
                }
                patterns.push(pattern_of_assignment(*dir, vars, &|n| {
                    model.get(n) == Some(&Value::Bool(true))
                }));
            }

            let mut all_valid = true;
            for pat in &patterns {
                match search.check_obligation(pat)? {
                    Validity::Valid => continue,
                    Validity::Unknown => search.saw_undecided_obligation = true,
                    Validity::Invalid => {}
                }
                all_valid = false;
                let vars = &selectors
                    .iter()
                    .find(|(d, _)| *d == pat.direction)
                    .expect("selector direction")
                    .1;
                let clause = blocking_clause(vars, pat);
                search.ground.assert_formula(&clause)?;
                search.blocked.push((pat.direction, clause));
                search.stats.blocked_patterns += 1;
            }
            if all_valid {
                // The model that produced these patterns is still current.
                let cert = search.assemble(&b, &patterns)?;
                return Ok(search.outcome(Verdict::Sat(Box::new(cert))));
            }
        }
        search.ground.pop()?;
        b = widen(&p.guard, &b);
    }

    let reason = if search.saw_undecided_obligation {
        UnknownReason::UnsupportedObligation
    } else {
        UnknownReason::Budget
    };
    Ok(search.outcome(Verdict::Unknown(reason)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::parse;
    use crate::fragment::decompose;

    fn problem(src: &str) -> FragmentProblem {
        decompose(&parse(src).unwrap()).unwrap()
    }

    #[test]
    fn initial_interval_defaults_to_a_point_at_zero() {
        let p = problem(
            "(declare-fun f (Int) Int)(assert (forall ((x Int)) (= (f x) (f (+ x 1)))))",
        );
        assert_eq!(initial_interval(&p, &EngineOptions::default()), Interval::point(0));
    }

    #[test]
    fn seeding_spans_the_ground_arguments() {
        let p = problem(
            "(declare-fun f (Int) Int)\
             (assert (and (= (f 4) 7) (= (f (- 2)) 1)))\
             (assert (forall ((x Int)) (= (f x) (f (+ x 1)))))",
        );
        let opts = EngineOptions { seed_from_ground: true, ..EngineOptions::default() };
        assert_eq!(initial_interval(&p, &opts), Interval::new(-2, 4));
    }

    #[test]
    fn guarded_intervals_pin_the_lower_end() {
        let p = problem(
            "(declare-fun f (Int) Int)\
             (assert (forall ((x Int)) (=> (<= 2 x) (= (f x) (f (+ x 1))))))",
        );
        let opts = EngineOptions {
            init: Some((Int::from(-9), Int::from(6))),
            ..EngineOptions::default()
        };
        assert_eq!(initial_interval(&p, &opts), Interval::new(2, 6));
        assert_eq!(initial_interval(&p, &EngineOptions::default()), Interval::point(2));
    }

    #[test]
    fn widening_respects_the_guard() {
        let unb = GuardKind::Unbounded;
        assert_eq!(widen(&unb, &Interval::point(0)), Interval::new(-1, 1));
        let low = GuardKind::LowerBounded(Int::zero());
        assert_eq!(widen(&low, &Interval::new(0, 2)), Interval::new(0, 3));
        let both = GuardKind::DoublyBounded(Int::zero(), Int::from(3));
        assert_eq!(widen(&both, &Interval::new(0, 2)), Interval::new(0, 3));
        assert_eq!(widen(&both, &Interval::new(0, 3)), Interval::new(0, 3));
    }
}
