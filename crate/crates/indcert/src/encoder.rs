//! Formula construction for pivot selection: the extremal condition, the
//! propagability obligation, the clash constraints against ground
//! occurrences, and the boolean selector encoding the engine searches over.

use crate::ast::{Formula, Rel, Symbol, Term};
use crate::fragment::{Direction, FragmentProblem, Interval, QTerm};
use num_traits::Zero;
use std::collections::BTreeSet;

/// One boolean selector, standing for "this occurrence is part of the pivot
/// set".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectorVar {
    pub name: Symbol,
    pub qterm: QTerm,
}

/// A candidate pivot set for one direction, identified by canonical
/// occurrence ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SubsetPattern {
    pub direction: Direction,
    pub selected: BTreeSet<String>,
}

impl SubsetPattern {
    pub fn new(direction: Direction, selected: impl IntoIterator<Item = String>) -> Self {
        SubsetPattern { direction, selected: selected.into_iter().collect() }
    }

    pub fn contains(&self, qt: &QTerm) -> bool {
        self.selected.contains(&qt.id())
    }
}

fn offset_term(qt: &QTerm) -> Term {
    qt.offset.to_term()
}

/// The extremal condition for a pivot set: selected occurrences of one symbol
/// share an offset, and every unselected occurrence of that symbol sits
/// strictly on the trailing side.
pub fn extremal(p: &FragmentProblem, pat: &SubsetPattern) -> Formula {
    let mut clauses = Vec::new();
    for info in p.funcs.values() {
        let rel = pat.direction.composed_rel(&info.coeff());
        let sel: Vec<&QTerm> = info.qterms.iter().filter(|t| pat.contains(t)).collect();
        let unsel: Vec<&QTerm> = info.qterms.iter().filter(|t| !pat.contains(t)).collect();
        for (i, t) in sel.iter().enumerate() {
            for t2 in &sel[i + 1..] {
                clauses.push(Formula::atom(Rel::Eq, offset_term(t), offset_term(t2)));
            }
        }
        for t in &sel {
            for t2 in &unsel {
                clauses.push(Formula::atom(rel, offset_term(t2), offset_term(t)));
            }
        }
    }
    Formula::and(clauses)
}

fn universal_name(i: usize) -> Symbol {
    format!("_u{i}")
}

fn existential_name(i: usize) -> Symbol {
    format!("_v{i}")
}

fn selector_name(dir: Direction, i: usize) -> Symbol {
    format!("_sel_{}_{i}", dir.label())
}

// Rewrites every function application in the body to the variable standing
// for its occurrence.
fn abstract_cells(f: &Formula, p: &FragmentProblem, name_of: &dyn Fn(&QTerm) -> Symbol) -> Formula {
    fn term(t: &Term, p: &FragmentProblem, name_of: &dyn Fn(&QTerm) -> Symbol) -> Term {
        match t {
            Term::Int(_) | Term::Const(_) | Term::Var(_) => t.clone(),
            Term::Add(a, b) => Term::add(term(a, p, name_of), term(b, p, name_of)),
            Term::Mul(k, u) => Term::Mul(k.clone(), Box::new(term(u, p, name_of))),
            Term::Neg(u) => Term::neg(term(u, p, name_of)),
            Term::App(fsym, arg) => {
                let qt = p
                    .qterm_of_arg(fsym, arg)
                    .expect("occurrence missing from the function table");
                Term::var(name_of(qt))
            }
        }
    }
    fn go(f: &Formula, p: &FragmentProblem, name_of: &dyn Fn(&QTerm) -> Symbol) -> Formula {
        match f {
            Formula::True | Formula::False | Formula::BoolVar(_) => f.clone(),
            Formula::Atom(rel, a, b) => {
                Formula::Atom(*rel, term(a, p, name_of), term(b, p, name_of))
            }
            Formula::Not(g) => Formula::not(go(g, p, name_of)),
            Formula::And(fs) => Formula::And(fs.iter().map(|g| go(g, p, name_of)).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|g| go(g, p, name_of)).collect()),
            Formula::Implies(a, b) => Formula::implies(go(a, p, name_of), go(b, p, name_of)),
            Formula::Forall(..) | Formula::Exists(..) => {
                unreachable!("quantifier inside the quantified body")
            }
        }
    }
    go(f, p, name_of)
}

/// The propagability obligation for a pivot set: with unselected occurrences
/// held arbitrary, values for the selected ones can always be found.
/// Selected occurrences become existential variables, unselected ones
/// universal, and the quantified variable stays universal under its guard.
pub fn propagability(p: &FragmentProblem, pat: &SubsetPattern) -> Formula {
    let qterms: Vec<&QTerm> = p.qterms().collect();
    let name_of = |qt: &QTerm| -> Symbol {
        let i = qterms.iter().position(|c| *c == qt).expect("occurrence not in table");
        if pat.contains(qt) {
            existential_name(i)
        } else {
            universal_name(i)
        }
    };
    let body = abstract_cells(&p.q, p, &name_of);
    let body = match p.guard.formula(&p.var) {
        Some(g) => Formula::implies(g, body),
        None => body,
    };
    let mut out = body;
    for (i, qt) in qterms.iter().enumerate().rev() {
        if pat.contains(qt) {
            out = Formula::exists(existential_name(i), out);
        }
    }
    for (i, qt) in qterms.iter().enumerate().rev() {
        if !pat.contains(qt) {
            out = Formula::forall(universal_name(i), out);
        }
    }
    Formula::forall(p.var.clone(), out)
}

/// The clash constraints: every ground occurrence of a selected symbol must
/// lie strictly on the trailing side of the selected occurrence's cell at the
/// pivot boundary of `b`.
pub fn clash(p: &FragmentProblem, pat: &SubsetPattern, b: &Interval) -> Formula {
    let bound = pat.direction.pivot_bound(b);
    let mut clauses = Vec::new();
    for info in p.funcs.values() {
        let rel = pat.direction.composed_rel(&info.coeff());
        for t in info.qterms.iter().filter(|t| pat.contains(t)) {
            let pivot_arg = t.arg_at_bound(bound);
            for a in &info.f_args {
                clauses.push(Formula::atom(rel, a.clone(), pivot_arg.clone()));
            }
        }
    }
    Formula::and(clauses)
}

/// The full pivot condition for a concrete set: extremal, propagable, and
/// clash-free. Selecting an occurrence whose argument does not move with the
/// quantified variable can never produce fresh cells, so such sets are
/// rejected outright.
pub fn psi(p: &FragmentProblem, pat: &SubsetPattern, b: &Interval) -> Formula {
    let has_zero_coeff =
        p.qterms().any(|t| pat.contains(t) && t.coeff.is_zero());
    if has_zero_coeff {
        return Formula::False;
    }
    Formula::and(vec![extremal(p, pat), propagability(p, pat), clash(p, pat, b)])
}

/// The boolean selector encoding for one direction over interval `b`:
/// a conjunction of clauses over fresh selector variables such that a model
/// picks out a set satisfying the extremal and clash conditions, with
/// zero-coefficient occurrences excluded. Propagability is not encoded; the
/// engine discharges it per extracted set.
pub fn psi_selector(
    p: &FragmentProblem,
    dir: Direction,
    b: &Interval,
) -> (Formula, Vec<SelectorVar>) {
    let qterms: Vec<&QTerm> = p.qterms().collect();
    let vars: Vec<SelectorVar> = qterms
        .iter()
        .enumerate()
        .map(|(i, qt)| SelectorVar { name: selector_name(dir, i), qterm: (*qt).clone() })
        .collect();
    let lit = |i: usize| Formula::BoolVar(vars[i].name.clone());
    let bound = dir.pivot_bound(b);
    let mut clauses = Vec::new();
    for (i, qt) in qterms.iter().enumerate() {
        if qt.coeff.is_zero() {
            clauses.push(Formula::not(lit(i)));
        }
    }
    for (i, t) in qterms.iter().enumerate() {
        let info = &p.funcs[&t.fsym];
        let rel = dir.composed_rel(&info.coeff());
        for (j, t2) in qterms.iter().enumerate() {
            if t.fsym != t2.fsym || i == j {
                continue;
            }
            if i < j {
                clauses.push(Formula::implies(
                    Formula::And(vec![lit(i), lit(j)]),
                    Formula::atom(Rel::Eq, offset_term(t), offset_term(t2)),
                ));
            }
            clauses.push(Formula::implies(
                Formula::And(vec![lit(i), Formula::not(lit(j))]),
                Formula::atom(rel, offset_term(t2), offset_term(t)),
            ));
        }
        for a in &info.f_args {
            clauses.push(Formula::implies(
                lit(i),
                Formula::atom(rel, a.clone(), t.arg_at_bound(bound)),
            ));
        }
    }
    (Formula::and(clauses), vars)
}

/// Clause forbidding one already-refuted pattern.
pub fn blocking_clause(vars: &[SelectorVar], pat: &SubsetPattern) -> Formula {
    Formula::or(
        vars.iter()
            .map(|v| {
                let lit = Formula::BoolVar(v.name.clone());
                if pat.contains(&v.qterm) {
                    Formula::not(lit)
                } else {
                    lit
                }
            })
            .collect(),
    )
}

/// Reads a pattern back out of a boolean assignment to the selector names.
pub fn pattern_of_assignment(
    dir: Direction,
    vars: &[SelectorVar],
    truth: &dyn Fn(&str) -> bool,
) -> SubsetPattern {
    SubsetPattern::new(
        dir,
        vars.iter().filter(|v| truth(&v.name)).map(|v| v.qterm.id()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{parse, Int};
    use crate::fragment::decompose;

    fn counter_chain() -> FragmentProblem {
        let phi = parse(
            "(declare-fun f (Int) Int)\
             (assert (= (f 4) 7))\
             (assert (forall ((x Int)) (= (f (+ x 1)) (+ (f x) 1))))",
        )
        .unwrap();
        decompose(&phi).unwrap()
    }

    fn up(ids: &[&str]) -> SubsetPattern {
        SubsetPattern::new(Direction::Up, ids.iter().map(|s| s.to_string()))
    }

    #[test]
    fn extremal_compares_offsets_of_unselected_occurrences() {
        let p = counter_chain();
        let pat = up(&["(f (+ x 1))"]);
        assert_eq!(extremal(&p, &pat).to_string(), "(< 0 1)");
        let pat = up(&["(f x)"]);
        assert_eq!(extremal(&p, &pat).to_string(), "(< 1 0)");
        let both = up(&["(f (+ x 1))", "(f x)"]);
        assert_eq!(extremal(&p, &both).to_string(), "(= 1 0)");
    }

    #[test]
    fn extremal_direction_flips_the_comparison() {
        let p = counter_chain();
        let pat = SubsetPattern::new(Direction::Down, vec!["(f x)".to_string()]);
        assert_eq!(extremal(&p, &pat).to_string(), "(> 1 0)");
    }

    #[test]
    fn propagability_quantifies_selected_existentially() {
        let p = counter_chain();
        let pat = up(&["(f (+ x 1))"]);
        assert_eq!(
            propagability(&p, &pat).to_string(),
            "(forall ((x Int)) (forall ((_u1 Int)) (exists ((_v0 Int)) (= _v0 (+ _u1 1)))))"
        );
    }

    #[test]
    fn propagability_keeps_the_guard_as_antecedent() {
        let phi = parse(
            "(declare-fun f (Int) Int)\
             (assert (forall ((x Int)) (=> (<= 0 x) (= (f (+ x 1)) (+ (f x) 1)))))",
        )
        .unwrap();
        let p = decompose(&phi).unwrap();
        let pat = up(&["(f (+ x 1))"]);
        assert_eq!(
            propagability(&p, &pat).to_string(),
            "(forall ((x Int)) (forall ((_u1 Int)) (exists ((_v0 Int)) \
             (=> (<= 0 x) (= _v0 (+ _u1 1))))))"
        );
    }

    #[test]
    fn clash_substitutes_the_pivot_bound() {
        let p = counter_chain();
        let pat = up(&["(f (+ x 1))"]);
        let b = Interval::new(0, 4);
        assert_eq!(clash(&p, &pat, &b).to_string(), "(< 4 5)");
        let down = SubsetPattern::new(Direction::Down, vec!["(f x)".to_string()]);
        assert_eq!(clash(&p, &down, &b).to_string(), "(> 4 0)");
    }

    #[test]
    fn psi_is_false_for_zero_coefficient_selection() {
        let phi = parse(
            "(declare-fun f (Int) Int)(declare-const b Int)\
             (assert (forall ((x Int)) (= (f x) (+ (f b) 1))))",
        )
        .unwrap();
        let p = decompose(&phi).unwrap();
        let pat = up(&["(f b)"]);
        assert_eq!(psi(&p, &pat, &Interval::new(0, 0)), Formula::False);
    }

    #[test]
    fn selector_encoding_matches_the_pairwise_clauses() {
        let p = counter_chain();
        let (f, vars) = psi_selector(&p, Direction::Up, &Interval::new(0, 4));
        assert_eq!(vars.len(), 2);
        assert_eq!(vars[0].name, "_sel_up_0");
        assert_eq!(vars[0].qterm.id(), "(f (+ x 1))");
        assert_eq!(
            f.to_string(),
            "(and \
             (=> (and _sel_up_0 _sel_up_1) (= 1 0)) \
             (=> (and _sel_up_0 (not _sel_up_1)) (< 0 1)) \
             (=> _sel_up_0 (< 4 5)) \
             (=> (and _sel_up_1 (not _sel_up_0)) (< 1 0)) \
             (=> _sel_up_1 (< 4 4)))"
        );
    }

    #[test]
    fn selector_encoding_forces_zero_coefficient_off() {
        let phi = parse(
            "(declare-fun f (Int) Int)(declare-const b Int)\
             (assert (forall ((x Int)) (= (f x) (f b))))",
        )
        .unwrap();
        let p = decompose(&phi).unwrap();
        let (f, vars) = psi_selector(&p, Direction::Down, &Interval::point(0));
        assert_eq!(vars[1].qterm.coeff, Int::zero());
        assert!(f.to_string().contains("(not _sel_down_1)"));
    }

    #[test]
    fn blocking_clause_negates_the_chosen_literals() {
        let p = counter_chain();
        let (_, vars) = psi_selector(&p, Direction::Up, &Interval::new(0, 4));
        let pat = up(&["(f (+ x 1))"]);
        assert_eq!(
            blocking_clause(&vars, &pat).to_string(),
            "(or (not _sel_up_0) _sel_up_1)"
        );
    }

    #[test]
    fn pattern_extraction_reads_true_literals() {
        let p = counter_chain();
        let (_, vars) = psi_selector(&p, Direction::Up, &Interval::new(0, 4));
        let pat = pattern_of_assignment(Direction::Up, &vars, &|n| n == "_sel_up_0");
        assert_eq!(pat, up(&["(f (+ x 1))"]));
    }
}
