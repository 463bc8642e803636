//! Satisfiability certificates: a finite interval of explicit cell values
//! plus pivot selections that extend the interval to the whole line, written
//! as a single-line s-expression. The checker re-derives every obligation
//! from the problem and the certificate alone; it shares no state with the
//! engine that produced the artifact.

use crate::ast::{eval_formula, CellInterpretation, Int, Symbol};
use crate::backend::{BackendError, Logic, Session, SolverConfig, Validity};
use crate::encoder;
use crate::fragment::{Direction, FragmentProblem, GuardKind, Interval, QTerm};
use crate::sexp::{self, Sexp};
use num_traits::Zero;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub interval: Interval,
    pub guard: GuardKind,
    pub consts: BTreeMap<Symbol, Int>,
    pub cells: BTreeMap<(Symbol, Int), Int>,
    /// Canonical ids of the upward pivot set; absent when the upward
    /// direction carries no obligation.
    pub sel_up: Option<Vec<String>>,
    pub sel_down: Option<Vec<String>>,
    /// Free-form note naming the solver that produced the artifact.
    pub verified_by: Option<String>,
}

impl Certificate {
    /// The explicit part as an evaluation environment.
    pub fn env(&self) -> CellInterpretation {
        CellInterpretation { consts: self.consts.clone(), cells: self.cells.clone() }
    }

    pub fn selection(&self, dir: Direction) -> Option<&[String]> {
        match dir {
            Direction::Up => self.sel_up.as_deref(),
            Direction::Down => self.sel_down.as_deref(),
        }
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(certificate (interval {} {})", self.interval.lo, self.interval.hi)?;
        match &self.guard {
            GuardKind::Unbounded => write!(f, " (guard none)")?,
            GuardKind::LowerBounded(lo) => write!(f, " (guard (lower {lo}))")?,
            GuardKind::DoublyBounded(lo, hi) => write!(f, " (guard (bounded {lo} {hi}))")?,
        }
        write!(f, " (consts")?;
        for (c, v) in &self.consts {
            write!(f, " ({c} {v})")?;
        }
        write!(f, ") (cells")?;
        for ((g, n), v) in &self.cells {
            write!(f, " (({g} {n}) {v})")?;
        }
        write!(f, ")")?;
        for (label, sel) in [("select-up", &self.sel_up), ("select-down", &self.sel_down)] {
            if let Some(ids) = sel {
                write!(f, " ({label}")?;
                for id in ids {
                    write!(f, " {id}")?;
                }
                write!(f, ")")?;
            }
        }
        if let Some(note) = &self.verified_by {
            let clean: String = note.chars().filter(|c| *c != '"').collect();
            write!(f, " (verified-by \"{clean}\")")?;
        }
        write!(f, " )")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bad certificate: {0}")]
pub struct CertFormatError(pub String);

fn int_atom(s: &Sexp) -> Result<Int, CertFormatError> {
    let a = s.atom().ok_or_else(|| CertFormatError(format!("expected an integer, got {s}")))?;
    let digits = a.strip_prefix('-').unwrap_or(a);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(CertFormatError(format!("expected an integer, got {a}")));
    }
    Ok(a.parse::<Int>().unwrap())
}

fn sym_atom(s: &Sexp) -> Result<Symbol, CertFormatError> {
    s.atom()
        .filter(|a| !a.starts_with('"'))
        .map(str::to_string)
        .ok_or_else(|| CertFormatError(format!("expected a symbol, got {s}")))
}

/// Parses the single-line certificate format produced by [`Certificate`]'s
/// `Display`. Field order is fixed; selections and the note are optional.
pub fn deserialize(input: &str) -> Result<Certificate, CertFormatError> {
    let top = sexp::parse_one(input).map_err(|e| CertFormatError(e.to_string()))?;
    let items =
        top.list().ok_or_else(|| CertFormatError("expected (certificate ...)".into()))?;
    if items.first().and_then(Sexp::atom) != Some("certificate") {
        return Err(CertFormatError("expected (certificate ...)".into()));
    }
    let mut interval = None;
    let mut guard = None;
    let mut consts: Option<BTreeMap<Symbol, Int>> = None;
    let mut cells: Option<BTreeMap<(Symbol, Int), Int>> = None;
    let mut sel_up = None;
    let mut sel_down = None;
    let mut verified_by = None;
    for field in &items[1..] {
        let parts = field
            .list()
            .ok_or_else(|| CertFormatError(format!("expected a field, got {field}")))?;
        let head = parts
            .first()
            .and_then(Sexp::atom)
            .ok_or_else(|| CertFormatError(format!("expected a field, got {field}")))?;
        let body = &parts[1..];
        let dup = |name: &str| CertFormatError(format!("duplicate field '{name}'"));
        match head {
            "interval" => {
                if body.len() != 2 {
                    return Err(CertFormatError("interval takes two integers".into()));
                }
                let iv = Interval { lo: int_atom(&body[0])?, hi: int_atom(&body[1])? };
                if interval.replace(iv).is_some() {
                    return Err(dup("interval"));
                }
            }
            "guard" => {
                if body.len() != 1 {
                    return Err(CertFormatError("guard takes one form".into()));
                }
                let g = match &body[0] {
                    Sexp::Atom(a, _) if a == "none" => GuardKind::Unbounded,
                    Sexp::List(inner, _) => match inner.as_slice() {
                        [Sexp::Atom(k, _), lo] if k == "lower" => {
                            GuardKind::LowerBounded(int_atom(lo)?)
                        }
                        [Sexp::Atom(k, _), lo, hi] if k == "bounded" => {
                            GuardKind::DoublyBounded(int_atom(lo)?, int_atom(hi)?)
                        }
                        _ => return Err(CertFormatError(format!("bad guard: {}", body[0]))),
                    },
                    other => return Err(CertFormatError(format!("bad guard: {other}"))),
                };
                if guard.replace(g).is_some() {
                    return Err(dup("guard"));
                }
            }
            "consts" => {
                let mut map = BTreeMap::new();
                for pair in body {
                    let kv = pair
                        .list()
                        .filter(|l| l.len() == 2)
                        .ok_or_else(|| CertFormatError(format!("bad const pair: {pair}")))?;
                    map.insert(sym_atom(&kv[0])?, int_atom(&kv[1])?);
                }
                if consts.replace(map).is_some() {
                    return Err(dup("consts"));
                }
            }
            "cells" => {
                let mut map = BTreeMap::new();
                for pair in body {
                    let kv = pair
                        .list()
                        .filter(|l| l.len() == 2)
                        .ok_or_else(|| CertFormatError(format!("bad cell pair: {pair}")))?;
                    let key = kv[0]
                        .list()
                        .filter(|l| l.len() == 2)
                        .ok_or_else(|| CertFormatError(format!("bad cell key: {}", kv[0])))?;
                    map.insert((sym_atom(&key[0])?, int_atom(&key[1])?), int_atom(&kv[1])?);
                }
                if cells.replace(map).is_some() {
                    return Err(dup("cells"));
                }
            }
            "select-up" | "select-down" => {
                let ids: Vec<String> = body.iter().map(|s| s.to_string()).collect();
                let slot = if head == "select-up" { &mut sel_up } else { &mut sel_down };
                if slot.replace(ids).is_some() {
                    return Err(dup(head));
                }
            }
            "verified-by" => {
                let note = body
                    .first()
                    .and_then(Sexp::atom)
                    .filter(|a| body.len() == 1 && a.starts_with('"') && a.ends_with('"'))
                    .ok_or_else(|| CertFormatError("verified-by takes one string".into()))?;
                if verified_by.replace(note.trim_matches('"').to_string()).is_some() {
                    return Err(dup("verified-by"));
                }
            }
            other => return Err(CertFormatError(format!("unknown field '{other}'"))),
        }
    }
    Ok(Certificate {
        interval: interval.ok_or_else(|| CertFormatError("missing interval".into()))?,
        guard: guard.ok_or_else(|| CertFormatError("missing guard".into()))?,
        consts: consts.ok_or_else(|| CertFormatError("missing consts".into()))?,
        cells: cells.ok_or_else(|| CertFormatError("missing cells".into()))?,
        sel_up,
        sel_down,
        verified_by,
    })
}

// ---------------------------------------------------------------------------
// Checking
// ---------------------------------------------------------------------------

/// Which certificate obligation a failure belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObligationId {
    Base,
    ExtremalUp,
    ExtremalDown,
    ClashUp,
    ClashDown,
    PropUp,
    PropDown,
    Coverage,
    Reference,
}

impl ObligationId {
    fn extremal(dir: Direction) -> ObligationId {
        match dir {
            Direction::Up => ObligationId::ExtremalUp,
            Direction::Down => ObligationId::ExtremalDown,
        }
    }

    fn clash(dir: Direction) -> ObligationId {
        match dir {
            Direction::Up => ObligationId::ClashUp,
            Direction::Down => ObligationId::ClashDown,
        }
    }

    fn prop(dir: Direction) -> ObligationId {
        match dir {
            Direction::Up => ObligationId::PropUp,
            Direction::Down => ObligationId::PropDown,
        }
    }
}

impl fmt::Display for ObligationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ObligationId::Base => "base",
            ObligationId::ExtremalUp => "extremal-up",
            ObligationId::ExtremalDown => "extremal-down",
            ObligationId::ClashUp => "clash-up",
            ObligationId::ClashDown => "clash-down",
            ObligationId::PropUp => "prop-up",
            ObligationId::PropDown => "prop-down",
            ObligationId::Coverage => "coverage",
            ObligationId::Reference => "reference",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckFailure {
    pub obligation: ObligationId,
    pub detail: String,
}

impl fmt::Display for CheckFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.obligation, self.detail)
    }
}

/// Outcome of checking one certificate. Every violated obligation is
/// reported, not just the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckReport {
    pub failures: Vec<CheckFailure>,
}

impl CheckReport {
    pub fn accepted(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Resolves a selection entry against the problem's occurrence table. Exact
/// canonical ids match directly; otherwise the argument is re-normalized, so
/// a hand-edited `(f (+ 1 x))` still finds `(f (+ x 1))`.
pub fn resolve_id<'a>(p: &'a FragmentProblem, id: &str) -> Option<&'a QTerm> {
    if let Some(t) = p.qterm_by_id(id) {
        return Some(t);
    }
    let parsed = sexp::parse_one(id).ok()?;
    let items = parsed.list()?;
    let [Sexp::Atom(fsym, _), arg] = items else { return None };
    let consts = p.consts.clone();
    let funs: std::collections::BTreeSet<Symbol> = p.funcs.keys().cloned().collect();
    let arg_term = crate::ast::parse_term_str(&arg.to_string(), &consts, &funs, &["x"]).ok()?;
    let arg_term = crate::ast::subst_term(&arg_term, "x", &crate::ast::Term::var(&p.var));
    p.qterm_of_arg(fsym, &arg_term)
}

/// Verifies a certificate against a validated problem. The ground
/// obligations are evaluated directly; the propagability obligations go to
/// the solver, and anything short of a definite yes counts as a failure.
pub fn check(
    p: &FragmentProblem,
    cert: &Certificate,
    cfg: &SolverConfig,
) -> Result<CheckReport, BackendError> {
    let mut failures = Vec::new();
    let mut fail = |obligation: ObligationId, detail: String| {
        failures.push(CheckFailure { obligation, detail });
    };

    if cert.guard != p.guard {
        fail(ObligationId::Coverage, "guard does not match the problem".into());
    }
    if cert.interval.is_empty() {
        fail(ObligationId::Coverage, format!("empty interval {}", cert.interval));
    }

    // Selections: resolve ids and check direction availability.
    let mut patterns: BTreeMap<Direction, encoder::SubsetPattern> = BTreeMap::new();
    for dir in [Direction::Up, Direction::Down] {
        let Some(ids) = cert.selection(dir) else { continue };
        let mut resolved = Vec::new();
        let mut broken = false;
        for id in ids {
            match resolve_id(p, id) {
                Some(t) => resolved.push(t.id()),
                None => {
                    fail(
                        ObligationId::Reference,
                        format!("unknown occurrence {id} in select-{}", dir.label()),
                    );
                    broken = true;
                }
            }
        }
        if !broken {
            patterns.insert(dir, encoder::SubsetPattern::new(dir, resolved));
        }
    }

    // Base: the explicit cells satisfy the ground part and every guarded
    // instance inside the interval.
    let env = cert.env();
    match eval_formula(&p.f, &env) {
        Some(true) => {}
        Some(false) => fail(ObligationId::Base, "ground part is false".into()),
        None => fail(ObligationId::Base, "ground part depends on missing cells".into()),
    }
    if p.has_quantifier() {
        if let Some(range) = p.guard.clamp(&cert.interval) {
            for z in range.iter() {
                match eval_formula(&p.q_at(&z), &env) {
                    Some(true) => {}
                    Some(false) => {
                        fail(ObligationId::Base, format!("instance at {z} is false"));
                        break;
                    }
                    None => {
                        fail(
                            ObligationId::Base,
                            format!("instance at {z} depends on missing cells"),
                        );
                        break;
                    }
                }
            }
        }
    }

    // Per-direction obligations on the resolved selections.
    let consts_env =
        CellInterpretation { consts: cert.consts.clone(), cells: BTreeMap::new() };
    let mut solver: Option<Session> = None;
    for (dir, pat) in &patterns {
        if let Some(t) = p.qterms().find(|t| pat.contains(t) && t.coeff.is_zero()) {
            fail(
                ObligationId::extremal(*dir),
                format!("selected occurrence {} does not move with the variable", t.id()),
            );
            continue;
        }
        match eval_formula(&encoder::extremal(p, pat), &consts_env) {
            Some(true) => {}
            Some(false) => {
                fail(ObligationId::extremal(*dir), "offsets violate the extremal order".into())
            }
            None => fail(
                ObligationId::extremal(*dir),
                "extremal condition depends on missing constants".into(),
            ),
        }
        match eval_formula(&encoder::clash(p, pat, &cert.interval), &consts_env) {
            Some(true) => {}
            Some(false) => fail(
                ObligationId::clash(*dir),
                "a ground occurrence collides with the propagated cells".into(),
            ),
            None => fail(
                ObligationId::clash(*dir),
                "clash condition depends on missing constants".into(),
            ),
        }
        let obligation = encoder::propagability(p, pat);
        let sess = match solver.as_mut() {
            Some(s) => s,
            None => solver.insert(Session::new(cfg, Logic::Lia)?),
        };
        match sess.check_validity(&obligation)? {
            Validity::Valid => {}
            Validity::Invalid => {
                fail(ObligationId::prop(*dir), "selected set is not propagable".into())
            }
            Validity::Unknown => fail(
                ObligationId::prop(*dir),
                "solver could not decide propagability".into(),
            ),
        }
    }

    // Coverage: the selections present must extend the interval across the
    // whole guard region.
    let b = &cert.interval;
    match (&p.guard, p.has_quantifier()) {
        (_, false) => {
            if cert.sel_up.is_some() || cert.sel_down.is_some() {
                fail(ObligationId::Coverage, "selection without a quantified conjunct".into());
            }
        }
        (GuardKind::Unbounded, true) => {
            if cert.sel_up.is_none() || cert.sel_down.is_none() {
                fail(
                    ObligationId::Coverage,
                    "unbounded quantifier needs selections in both directions".into(),
                );
            }
        }
        (GuardKind::LowerBounded(lo), true) => {
            if b.lo != *lo {
                fail(ObligationId::Coverage, format!("interval must start at the bound {lo}"));
            }
            if cert.sel_up.is_none() {
                fail(ObligationId::Coverage, "missing upward selection".into());
            }
            if cert.sel_down.is_some() {
                fail(
                    ObligationId::Coverage,
                    "downward selection is meaningless under a lower bound".into(),
                );
            }
        }
        (GuardKind::DoublyBounded(lo, hi), true) => {
            if b.lo > *lo || (b.hi < *hi && cert.sel_up.is_none()) {
                fail(
                    ObligationId::Coverage,
                    format!("interval {b} plus selections does not cover [{lo}, {hi}]"),
                );
            }
            if cert.sel_down.is_some() {
                fail(
                    ObligationId::Coverage,
                    "downward selection is meaningless under a bounded guard".into(),
                );
            }
        }
    }

    Ok(CheckReport { failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Certificate {
        let mut consts = BTreeMap::new();
        consts.insert("c".to_string(), Int::from(5));
        let mut cells = BTreeMap::new();
        for n in -1..=5 {
            cells.insert(("f".to_string(), Int::from(n)), Int::from(n + 3));
        }
        Certificate {
            interval: Interval::new(0, 4),
            guard: GuardKind::LowerBounded(Int::zero()),
            consts,
            cells,
            sel_up: Some(vec!["(f (+ x 1))".to_string()]),
            sel_down: None,
            verified_by: Some("solverd".to_string()),
        }
    }

    #[test]
    fn serializes_on_one_line_with_spaced_terminator() {
        let s = sample().to_string();
        assert!(!s.contains('\n'));
        assert!(s.ends_with(" )"));
        assert!(s.starts_with("(certificate (interval 0 4) (guard (lower 0)) (consts (c 5)) "));
        assert!(s.contains("(cells ((f -1) 2) ((f 0) 3)"));
        assert!(s.contains("(select-up (f (+ x 1)))"));
        assert!(s.contains("(verified-by \"solverd\")"));
    }

    #[test]
    fn round_trips_through_the_text_form() {
        let c = sample();
        let back = deserialize(&c.to_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_string(), c.to_string());
    }

    #[test]
    fn round_trips_without_optional_fields() {
        let mut c = sample();
        c.sel_up = Some(Vec::new());
        c.verified_by = None;
        c.guard = GuardKind::Unbounded;
        let s = c.to_string();
        assert!(s.contains(" (select-up) "));
        assert!(s.contains("(guard none)"));
        assert_eq!(deserialize(&s).unwrap(), c);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(deserialize("(certs)").is_err());
        assert!(deserialize("(certificate (interval 0))").is_err());
        assert!(deserialize("(certificate (interval 0 4) (guard nope) (consts) (cells))").is_err());
        assert!(deserialize(
            "(certificate (interval 0 4) (guard none) (consts) (cells) (extra 1))"
        )
        .is_err());
        assert!(deserialize("(certificate (guard none) (consts) (cells))").is_err());
        let dup = "(certificate (interval 0 4) (interval 0 4) (guard none) (consts) (cells))";
        assert!(deserialize(dup).is_err());
    }

    #[test]
    fn negative_integers_use_plain_atoms() {
        let mut c = sample();
        c.interval = Interval::new(-4, 4);
        let s = c.to_string();
        assert!(s.contains("(interval -4 4)"));
        assert_eq!(deserialize(&s).unwrap().interval, Interval::new(-4, 4));
    }
}
