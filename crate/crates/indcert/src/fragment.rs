//! Decomposition of an input formula into a ground part `F` and a single
//! universally quantified conjunct `Q`, plus the bookkeeping the rest of the
//! pipeline relies on: guard recognition, the per-symbol table of quantified
//! occurrence terms, fragment validation, and relevant-cell computation.

use crate::ast::{
    eval_term, Cell, CellInterpretation, Formula, Int, Rel, Symbol, Term,
};
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Closed integer interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub lo: Int,
    pub hi: Int,
}

impl Interval {
    pub fn new(lo: impl Into<Int>, hi: impl Into<Int>) -> Interval {
        Interval { lo: lo.into(), hi: hi.into() }
    }

    pub fn point(z: impl Into<Int>) -> Interval {
        let z = z.into();
        Interval { lo: z.clone(), hi: z }
    }

    pub fn contains(&self, z: &Int) -> bool {
        self.lo <= *z && *z <= self.hi
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn iter(&self) -> IntervalIter {
        IntervalIter { next: self.lo.clone(), hi: self.hi.clone() }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

pub struct IntervalIter {
    next: Int,
    hi: Int,
}

impl Iterator for IntervalIter {
    type Item = Int;

    fn next(&mut self) -> Option<Int> {
        if self.next > self.hi {
            return None;
        }
        let z = self.next.clone();
        self.next += 1;
        Some(z)
    }
}

/// Propagation direction along the integer line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    /// The interval endpoint values propagate away from.
    pub fn pivot_bound<'a>(&self, b: &'a Interval) -> &'a Int {
        match self {
            Direction::Up => &b.hi,
            Direction::Down => &b.lo,
        }
    }

    /// The strict comparison for this direction composed with the sign of a
    /// symbol's coefficient: cells of an occurrence with positive coefficient
    /// move the same way as the quantified variable, negative ones move the
    /// opposite way.
    pub fn composed_rel(&self, coeff: &Int) -> Rel {
        let positive = !coeff.is_negative();
        match (self, positive) {
            (Direction::Up, true) | (Direction::Down, false) => Rel::Lt,
            (Direction::Up, false) | (Direction::Down, true) => Rel::Gt,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

/// Guard on the quantified variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GuardKind {
    Unbounded,
    LowerBounded(Int),
    DoublyBounded(Int, Int),
}

impl GuardKind {
    pub fn contains(&self, z: &Int) -> bool {
        match self {
            GuardKind::Unbounded => true,
            GuardKind::LowerBounded(lo) => z >= lo,
            GuardKind::DoublyBounded(lo, hi) => z >= lo && z <= hi,
        }
    }

    /// Intersection with an interval, `None` when empty.
    pub fn clamp(&self, b: &Interval) -> Option<Interval> {
        let (lo, hi) = match self {
            GuardKind::Unbounded => (b.lo.clone(), b.hi.clone()),
            GuardKind::LowerBounded(g) => (b.lo.clone().max(g.clone()), b.hi.clone()),
            GuardKind::DoublyBounded(g, h) => {
                (b.lo.clone().max(g.clone()), b.hi.clone().min(h.clone()))
            }
        };
        if lo > hi {
            None
        } else {
            Some(Interval { lo, hi })
        }
    }

    /// The guard as a formula over `var`, `None` for the unbounded guard.
    pub fn formula(&self, var: &str) -> Option<Formula> {
        match self {
            GuardKind::Unbounded => None,
            GuardKind::LowerBounded(lo) => {
                Some(Formula::atom(Rel::Le, Term::Int(lo.clone()), Term::var(var)))
            }
            GuardKind::DoublyBounded(lo, hi) => Some(Formula::And(vec![
                Formula::atom(Rel::Le, Term::Int(lo.clone()), Term::var(var)),
                Formula::atom(Rel::Le, Term::var(var), Term::Int(hi.clone())),
            ])),
        }
    }

    /// Directions along which the guard leaves room to propagate.
    pub fn directions(&self) -> &'static [Direction] {
        match self {
            GuardKind::Unbounded => &[Direction::Up, Direction::Down],
            GuardKind::LowerBounded(_) | GuardKind::DoublyBounded(..) => &[Direction::Up],
        }
    }
}

/// A function occurrence inside the quantified body, normalized to
/// `f(coeff * x + offset)` where the offset is a linear combination of
/// declared constants and a numeral.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct QTerm {
    pub fsym: Symbol,
    pub coeff: Int,
    pub offset: LinOffset,
}

/// Ground linear offset: `sum(coeff_c * c) + numeral`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct LinOffset {
    pub consts: BTreeMap<Symbol, Int>,
    pub numeral: Int,
}

impl LinOffset {
    pub fn numeral(n: impl Into<Int>) -> LinOffset {
        LinOffset { consts: BTreeMap::new(), numeral: n.into() }
    }

    pub fn is_zero(&self) -> bool {
        self.consts.is_empty() && self.numeral.is_zero()
    }

    /// Canonical term form: constants in symbol order, numeral last, folded
    /// with nested binary additions.
    pub fn to_term(&self) -> Term {
        let mut parts: Vec<Term> = Vec::new();
        for (c, k) in &self.consts {
            parts.push(if k.is_one() {
                Term::cnst(c.clone())
            } else if (-k.clone()).is_one() {
                Term::neg(Term::cnst(c.clone()))
            } else {
                Term::mul(k.clone(), Term::cnst(c.clone()))
            });
        }
        if !self.numeral.is_zero() || parts.is_empty() {
            parts.push(Term::Int(self.numeral.clone()));
        }
        let mut out = parts.pop().unwrap();
        while let Some(p) = parts.pop() {
            out = Term::add(p, out);
        }
        out
    }

    /// Value under an assignment to the constants.
    pub fn value(&self, consts: &BTreeMap<Symbol, Int>) -> Option<Int> {
        let mut v = self.numeral.clone();
        for (c, k) in &self.consts {
            v += k * consts.get(c)?;
        }
        Some(v)
    }
}

impl QTerm {
    /// Canonical argument term over the literal variable name `x`.
    pub fn canonical_arg(&self) -> Term {
        let var = Term::var("x");
        let head = if self.coeff.is_zero() {
            return self.offset.to_term();
        } else if self.coeff.is_one() {
            var
        } else if (-self.coeff.clone()).is_one() {
            Term::neg(var)
        } else {
            Term::mul(self.coeff.clone(), var)
        };
        if self.offset.is_zero() {
            head
        } else {
            Term::add(head, self.offset.to_term())
        }
    }

    /// Canonical identifier, e.g. `(f (+ x 1))`.
    pub fn id(&self) -> String {
        format!("({} {})", self.fsym, self.canonical_arg())
    }

    /// The concrete cell this occurrence reads at `x := z`.
    pub fn cell_at(&self, z: &Int, consts: &BTreeMap<Symbol, Int>) -> Option<Cell> {
        let n = &self.coeff * z + self.offset.value(consts)?;
        Some((self.fsym.clone(), n))
    }

    /// The argument with `x := bound` substituted, as a ground term.
    pub fn arg_at_bound(&self, bound: &Int) -> Term {
        let mut off = self.offset.clone();
        off.numeral += &self.coeff * bound;
        off.to_term()
    }
}

/// Everything known about one function symbol.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FuncInfo {
    /// Occurrences in the quantified body, deduplicated, in source order.
    pub qterms: Vec<QTerm>,
    /// Ground argument terms of this symbol in `F`, deduplicated, in source
    /// order.
    pub f_args: Vec<Term>,
}

impl FuncInfo {
    /// The shared coefficient of this symbol's occurrences. Zero when the
    /// symbol only occurs in `F` or only with coefficient zero; meaningless
    /// until the problem has been validated.
    pub fn coeff(&self) -> Int {
        self.qterms.first().map(|t| t.coeff.clone()).unwrap_or_else(Int::zero)
    }
}

/// A decomposed problem: `F ∧ ∀x. guard(x) ⇒ Q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentProblem {
    /// Ground conjunction.
    pub f: Formula,
    /// Body of the quantified conjunct with the guard stripped; `True` when
    /// the input had no quantified conjunct.
    pub q: Formula,
    /// Name of the quantified variable.
    pub var: Symbol,
    pub guard: GuardKind,
    pub funcs: BTreeMap<Symbol, FuncInfo>,
    /// Declared integer constants actually mentioned.
    pub consts: BTreeSet<Symbol>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FragmentError {
    #[error("more than one universally quantified conjunct")]
    MultipleQuantifiedConjuncts,
    #[error("quantifier below the top level of a conjunct")]
    QuantifierNotTopLevel,
    #[error("unsupported guard: {0}")]
    UnsupportedGuard(String),
    #[error("occurrences of '{fsym}' use different coefficients on the quantified variable")]
    NonUniformCoefficient { fsym: Symbol },
    #[error("function applied to an argument containing a function application: {arg}")]
    NestedFunctionArgument { arg: String },
    #[error("free variable '{0}' outside the quantified conjunct")]
    VariableOutsideQuantifier(Symbol),
    #[error("offset of '{fsym}' mentions constant '{cname}' with no interpretation")]
    UndefinedOffset { fsym: Symbol, cname: Symbol },
}

// Linear view of a function argument: coeff * var + offset.
fn linearize(t: &Term, var: &str) -> Result<(Int, LinOffset), FragmentError> {
    fn go(
        t: &Term,
        var: &str,
        mult: &Int,
        coeff: &mut Int,
        off: &mut LinOffset,
    ) -> Result<(), FragmentError> {
        match t {
            Term::Int(n) => {
                off.numeral += mult * n;
            }
            Term::Const(c) => {
                let e = off.consts.entry(c.clone()).or_insert_with(Int::zero);
                *e += mult;
            }
            Term::Var(v) => {
                debug_assert_eq!(v, var, "foreign variable in argument");
                let _ = var;
                *coeff += mult;
            }
            Term::Add(a, b) => {
                go(a, var, mult, coeff, off)?;
                go(b, var, mult, coeff, off)?;
            }
            Term::Mul(k, u) => go(u, var, &(mult * k), coeff, off)?,
            Term::Neg(u) => go(u, var, &(-mult), coeff, off)?,
            Term::App(..) => {
                return Err(FragmentError::NestedFunctionArgument { arg: t.to_string() })
            }
        }
        Ok(())
    }
    let mut coeff = Int::zero();
    let mut off = LinOffset::default();
    go(t, var, &Int::one(), &mut coeff, &mut off)?;
    off.consts.retain(|_, k| !k.is_zero());
    Ok((coeff, off))
}

fn guard_atom(f: &Formula, var: &str) -> Option<(Option<Int>, Option<Int>)> {
    // Returns (lower, upper) contributed by one comparison atom.
    match f {
        Formula::Atom(Rel::Le, Term::Int(lo), Term::Var(v)) if v == var => {
            Some((Some(lo.clone()), None))
        }
        Formula::Atom(Rel::Ge, Term::Var(v), Term::Int(lo)) if v == var => {
            Some((Some(lo.clone()), None))
        }
        Formula::Atom(Rel::Le, Term::Var(v), Term::Int(hi)) if v == var => {
            Some((None, Some(hi.clone())))
        }
        Formula::Atom(Rel::Ge, Term::Int(hi), Term::Var(v)) if v == var => {
            Some((None, Some(hi.clone())))
        }
        _ => None,
    }
}

fn strip_guard(body: &Formula, var: &str) -> Result<(GuardKind, Formula), FragmentError> {
    let Formula::Implies(ante, rest) = body else {
        return Ok((GuardKind::Unbounded, body.clone()));
    };
    let atoms: Vec<&Formula> = ante.conjuncts();
    let mut lower: Option<Int> = None;
    let mut upper: Option<Int> = None;
    for a in atoms {
        let Some((lo, hi)) = guard_atom(a, var) else {
            return Err(FragmentError::UnsupportedGuard(format!(
                "unrecognized bound '{a}' on '{var}'"
            )));
        };
        if let Some(lo) = lo {
            if lower.replace(lo).is_some() {
                return Err(FragmentError::UnsupportedGuard("two lower bounds".into()));
            }
        }
        if let Some(hi) = hi {
            if upper.replace(hi).is_some() {
                return Err(FragmentError::UnsupportedGuard("two upper bounds".into()));
            }
        }
    }
    let guard = match (lower, upper) {
        (Some(lo), None) => GuardKind::LowerBounded(lo),
        (Some(lo), Some(hi)) => {
            if lo > hi {
                return Err(FragmentError::UnsupportedGuard(format!(
                    "empty bounded range [{lo}, {hi}]"
                )));
            }
            GuardKind::DoublyBounded(lo, hi)
        }
        (None, Some(_)) => {
            return Err(FragmentError::UnsupportedGuard("upper bound without a lower bound".into()))
        }
        (None, None) => {
            return Err(FragmentError::UnsupportedGuard("implication without bounds".into()))
        }
    };
    Ok((guard, (**rest).clone()))
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

fn collect_apps<'a>(f: &'a Formula, out: &mut Vec<(&'a Symbol, &'a Term)>) {
    fn term<'a>(t: &'a Term, out: &mut Vec<(&'a Symbol, &'a Term)>) {
        match t {
            Term::Int(_) | Term::Const(_) | Term::Var(_) => {}
            Term::Add(a, b) => {
                term(a, out);
                term(b, out);
            }
            Term::Mul(_, u) | Term::Neg(u) => term(u, out),
            Term::App(f, arg) => {
                out.push((f, arg));
                term(arg, out);
            }
        }
    }
    match f {
        Formula::True | Formula::False | Formula::BoolVar(_) => {}
        Formula::Atom(_, a, b) => {
            term(a, out);
            term(b, out);
        }
        Formula::Not(g) => collect_apps(g, out),
        Formula::And(fs) | Formula::Or(fs) => {
            for g in fs {
                collect_apps(g, out);
            }
        }
        Formula::Implies(a, b) => {
            collect_apps(a, out);
            collect_apps(b, out);
        }
        Formula::Forall(_, body) | Formula::Exists(_, body) => collect_apps(body, out),
    }
}

/// Splits a conjunction into its ground part and the single quantified
/// conjunct, strips the guard, and tabulates function occurrences.
pub fn decompose(phi: &Formula) -> Result<FragmentProblem, FragmentError> {
    let mut ground: Vec<Formula> = Vec::new();
    let mut quantified: Option<(Symbol, Formula)> = None;
    for c in phi.conjuncts() {
        match c {
            Formula::Forall(v, body) => {
                if quantified.is_some() {
                    return Err(FragmentError::MultipleQuantifiedConjuncts);
                }
                quantified = Some((v.clone(), (**body).clone()));
            }
            g => {
                if contains_quantifier(g) {
                    return Err(FragmentError::QuantifierNotTopLevel);
                }
                ground.push(g.clone());
            }
        }
    }
    let f = Formula::and(ground);
    let (var, guard, q) = match quantified {
        None => ("x".to_string(), GuardKind::Unbounded, Formula::True),
        Some((v, body)) => {
            if contains_quantifier(&body) {
                return Err(FragmentError::QuantifierNotTopLevel);
            }
            let (guard, q) = strip_guard(&body, &v)?;
            (v, guard, q)
        }
    };

    let mut funcs: BTreeMap<Symbol, FuncInfo> = BTreeMap::new();
    let mut apps = Vec::new();
    collect_apps(&q, &mut apps);
    for (fsym, arg) in apps {
        let Ok((coeff, offset)) = linearize(arg, &var) else {
            // Nested application; validation reports it.
            funcs.entry(fsym.clone()).or_default();
            continue;
        };
        let info = funcs.entry(fsym.clone()).or_default();
        let qt = QTerm { fsym: fsym.clone(), coeff, offset };
        if !info.qterms.contains(&qt) {
            info.qterms.push(qt);
        }
    }
    let mut fapps = Vec::new();
    collect_apps(&f, &mut fapps);
    for (fsym, arg) in fapps {
        let info = funcs.entry(fsym.clone()).or_default();
        if !info.f_args.contains(arg) {
            info.f_args.push(arg.clone());
        }
    }

    let consts = crate::ast::symbols(phi).consts;
    Ok(FragmentProblem { f, q, var, guard, funcs, consts })
}

impl FragmentProblem {
    /// All quantified occurrence terms in symbol order, then source order.
    pub fn qterms(&self) -> impl Iterator<Item = &QTerm> {
        self.funcs.values().flat_map(|info| info.qterms.iter())
    }

    /// Looks an occurrence up by its canonical identifier.
    pub fn qterm_by_id(&self, id: &str) -> Option<&QTerm> {
        self.qterms().find(|t| t.id() == id)
    }

    /// Finds the table entry matching a raw argument term as written in the
    /// quantified body.
    pub fn qterm_of_arg(&self, fsym: &str, arg: &Term) -> Option<&QTerm> {
        let (coeff, offset) = linearize(arg, &self.var).ok()?;
        self.funcs.get(fsym)?.qterms.iter().find(|t| t.coeff == coeff && t.offset == offset)
    }

    /// Whether the input had a quantified conjunct with actual content.
    pub fn has_quantifier(&self) -> bool {
        self.q != Formula::True
    }

    /// The quantified body instantiated at `x := z`.
    pub fn q_at(&self, z: &Int) -> Formula {
        crate::ast::subst_formula(&self.q, &self.var, &Term::Int(z.clone()))
    }

    /// Checks the structural restrictions the certification procedure needs.
    pub fn validate(&self) -> Result<(), FragmentError> {
        let mut fapps = Vec::new();
        collect_apps(&self.f, &mut fapps);
        let mut qapps = Vec::new();
        collect_apps(&self.q, &mut qapps);
        for (_, arg) in fapps.iter().chain(qapps.iter()) {
            if !crate::ast::term_symbols(arg).funs.is_empty() {
                return Err(FragmentError::NestedFunctionArgument { arg: arg.to_string() });
            }
        }
        let fsyms = crate::ast::symbols(&self.f);
        if let Some(v) = fsyms.vars.iter().next() {
            return Err(FragmentError::VariableOutsideQuantifier(v.clone()));
        }
        let qsyms = crate::ast::symbols(&self.q);
        if let Some(v) = qsyms.vars.iter().find(|v| **v != self.var) {
            return Err(FragmentError::VariableOutsideQuantifier(v.clone()));
        }
        for (fsym, info) in &self.funcs {
            if let Some(first) = info.qterms.first() {
                if info.qterms.iter().any(|t| t.coeff != first.coeff) {
                    return Err(FragmentError::NonUniformCoefficient { fsym: fsym.clone() });
                }
            }
        }
        Ok(())
    }

    /// The cells the quantified body reads at `x := z`, under the constant
    /// part of `env`.
    pub fn relevant_cells(
        &self,
        env: &CellInterpretation,
        z: &Int,
    ) -> Result<BTreeSet<Cell>, FragmentError> {
        let mut out = BTreeSet::new();
        for t in self.qterms() {
            match t.cell_at(z, &env.consts) {
                Some(cell) => {
                    out.insert(cell);
                }
                None => {
                    let missing = t
                        .offset
                        .consts
                        .keys()
                        .find(|c| !env.consts.contains_key(*c))
                        .cloned()
                        .unwrap_or_default();
                    return Err(FragmentError::UndefinedOffset {
                        fsym: t.fsym.clone(),
                        cname: missing,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Values of the ground argument terms of `fsym` in `F`.
    pub fn f_arg_values(
        &self,
        fsym: &str,
        consts: &BTreeMap<Symbol, Int>,
    ) -> Option<Vec<Int>> {
        let env = CellInterpretation { consts: consts.clone(), cells: BTreeMap::new() };
        let info = self.funcs.get(fsym)?;
        info.f_args.iter().map(|a| eval_term(a, &env)).collect()
    }
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use crate::ast::{parse, CellInterpretation};
    use proptest::prelude::*;

    proptest! {
        // The canonical spelling of an occurrence is a fixpoint: reading it
        // back yields the same coefficient and offset.
        #[test]
        fn canonical_argument_relinearizes_to_itself(
            coeff in -4i64..=4,
            kc in -3i64..=3,
            kd in -3i64..=3,
            num in -9i64..=9,
        ) {
            let mut consts = BTreeMap::new();
            if kc != 0 {
                consts.insert("c".to_string(), Int::from(kc));
            }
            if kd != 0 {
                consts.insert("d".to_string(), Int::from(kd));
            }
            let t = QTerm {
                fsym: "f".to_string(),
                coeff: Int::from(coeff),
                offset: LinOffset { consts, numeral: Int::from(num) },
            };
            let (c, off) = linearize(&t.canonical_arg(), "x").unwrap();
            prop_assert_eq!(c, t.coeff);
            prop_assert_eq!(off, t.offset);
        }

        #[test]
        fn relevant_cells_track_distinct_occurrences(
            a in -5i64..=5,
            b in -5i64..=5,
            c in -5i64..=5,
            z in -8i64..=8,
        ) {
            let (a_s, b_s, c_s) =
                (Term::int(a).to_string(), Term::int(b).to_string(), Term::int(c).to_string());
            let src = format!(
                "(declare-fun f (Int) Int)(declare-fun g (Int) Int)\
                 (assert (= (f 0) 0))\
                 (assert (forall ((x Int)) (= (f (+ x {a_s})) (+ (g (+ x {b_s})) (f (+ x {c_s}))))))"
            );
            let p = decompose(&parse(&src).unwrap()).unwrap();
            let cells = p.relevant_cells(&CellInterpretation::default(), &Int::from(z)).unwrap();
            let expect = if a == c { 2 } else { 3 };
            prop_assert_eq!(p.qterms().count(), expect);
            prop_assert_eq!(cells.len(), expect);
        }
    }
}
