mod common;

use common::{counter_chain, problem, solver_config};
use indcert::ast::Int;
use indcert::certificate::{check, Certificate, ObligationId};
use indcert::fragment::{FragmentProblem, GuardKind, Interval};
use std::collections::BTreeMap;

// f(n) = n + 3 satisfies the recursive chain and pins f(4) = 7.
fn chain_cert() -> Certificate {
    let mut cells = BTreeMap::new();
    for n in -4..=5 {
        cells.insert(("f".to_string(), Int::from(n)), Int::from(n + 3));
    }
    Certificate {
        interval: Interval::new(-4, 4),
        guard: GuardKind::Unbounded,
        consts: BTreeMap::new(),
        cells,
        sel_up: Some(vec!["(f (+ x 1))".to_string()]),
        sel_down: Some(vec!["(f x)".to_string()]),
        verified_by: None,
    }
}

fn failed(p: &FragmentProblem, cert: &Certificate) -> Vec<ObligationId> {
    let report = check(p, cert, &solver_config()).unwrap();
    report.failures.iter().map(|f| f.obligation).collect()
}

#[test]
fn hand_built_certificate_is_accepted() {
    let p = counter_chain();
    assert_eq!(failed(&p, &chain_cert()), vec![]);
}

#[test]
fn selection_ids_are_renormalized_before_lookup() {
    let p = counter_chain();
    let mut cert = chain_cert();
    cert.sel_up = Some(vec!["(f (+ 1 x))".to_string()]);
    assert_eq!(failed(&p, &cert), vec![]);
}

#[test]
fn corrupted_cell_breaks_the_base_obligation() {
    let p = counter_chain();
    let mut cert = chain_cert();
    cert.cells.insert(("f".to_string(), Int::from(0)), Int::from(99));
    assert_eq!(failed(&p, &cert), vec![ObligationId::Base]);
}

#[test]
fn wrong_ground_value_breaks_the_base_obligation() {
    let p = counter_chain();
    let mut cert = chain_cert();
    for n in -4..=5 {
        cert.cells.insert(("f".to_string(), Int::from(n)), Int::from(n + 2));
    }
    // Every instance still holds; only f(4) = 7 is off.
    assert_eq!(failed(&p, &cert), vec![ObligationId::Base]);
}

#[test]
fn missing_cell_breaks_the_base_obligation() {
    let p = counter_chain();
    let mut cert = chain_cert();
    cert.cells.remove(&("f".to_string(), Int::from(5)));
    assert_eq!(failed(&p, &cert), vec![ObligationId::Base]);
}

#[test]
fn non_extremal_selection_is_rejected() {
    let p = counter_chain();
    let mut cert = chain_cert();
    // f(x) sits below f(x+1), so it cannot be the upward pivot; the ground
    // argument 4 also lands on its propagated cells.
    cert.sel_up = Some(vec!["(f x)".to_string()]);
    assert_eq!(failed(&p, &cert), vec![ObligationId::ExtremalUp, ObligationId::ClashUp]);
}

#[test]
fn interval_stopping_short_of_a_ground_argument_clashes() {
    let p = counter_chain();
    let mut cert = chain_cert();
    cert.interval = Interval::new(-4, 3);
    assert_eq!(failed(&p, &cert), vec![ObligationId::ClashUp]);
}

#[test]
fn non_propagable_selection_is_rejected() {
    // Mixed strides:formally well-shaped selections whose obligation the
    // solver refutes.
    let p = problem(
        "(declare-fun f (Int) Int)\
         (assert (= (f 0) 0))\
         (assert (forall ((x Int))\
            (and (= (f (+ x 2)) (+ (f x) 1)) (>= (f (+ x 1)) (f x)))))",
    );
    let mut cells = BTreeMap::new();
    for (n, v) in [(-1, -1), (0, 0), (1, 0), (2, 1)] {
        cells.insert(("f".to_string(), Int::from(n)), Int::from(v));
    }
    let cert = Certificate {
        interval: Interval::new(-1, 0),
        guard: GuardKind::Unbounded,
        consts: BTreeMap::new(),
        cells,
        sel_up: Some(vec!["(f (+ x 2))".to_string()]),
        sel_down: Some(vec!["(f x)".to_string()]),
        verified_by: None,
    };
    assert_eq!(failed(&p, &cert), vec![ObligationId::PropUp, ObligationId::PropDown]);
}

#[test]
fn unknown_occurrence_is_a_reference_failure() {
    let p = counter_chain();
    let mut cert = chain_cert();
    cert.sel_up = Some(vec!["(f (+ x 7))".to_string()]);
    let ids = failed(&p, &cert);
    assert!(ids.contains(&ObligationId::Reference), "got {ids:?}");
}

#[test]
fn coverage_requires_both_directions_without_a_guard() {
    let p = counter_chain();
    let mut cert = chain_cert();
    cert.sel_down = None;
    assert_eq!(failed(&p, &cert), vec![ObligationId::Coverage]);
}

#[test]
fn coverage_rejects_a_mismatched_guard() {
    let p = counter_chain();
    let mut cert = chain_cert();
    cert.guard = GuardKind::LowerBounded(Int::from(-4));
    cert.sel_down = None;
    let ids = failed(&p, &cert);
    assert!(ids.contains(&ObligationId::Coverage), "got {ids:?}");
}

#[test]
fn guarded_interval_must_start_at_the_bound() {
    let p = problem(
        "(declare-fun f (Int) Int)\
         (assert (= (f 5) 9))\
         (assert (forall ((x Int)) (=> (<= 2 x) (= (f (+ x 1)) (+ (f x) 1)))))",
    );
    let mut cells = BTreeMap::new();
    for n in 3..=6 {
        cells.insert(("f".to_string(), Int::from(n)), Int::from(n + 4));
    }
    let cert = Certificate {
        interval: Interval::new(3, 5),
        guard: GuardKind::LowerBounded(Int::from(2)),
        consts: BTreeMap::new(),
        cells,
        sel_up: Some(vec!["(f (+ x 1))".to_string()]),
        sel_down: None,
        verified_by: None,
    };
    let ids = failed(&p, &cert);
    assert!(ids.contains(&ObligationId::Coverage), "got {ids:?}");
}

#[test]
fn short_interval_under_a_bounded_guard_needs_an_upward_selection() {
    let p = problem(
        "(declare-fun f (Int) Int)\
         (assert (= (f 4) 7))\
         (assert (forall ((x Int)) (=> (and (<= 0 x) (<= x 50))\
            (= (f (+ x 1)) (+ (f x) 1)))))",
    );
    let mut cells = BTreeMap::new();
    for n in 0..=5 {
        cells.insert(("f".to_string(), Int::from(n)), Int::from(n + 3));
    }
    let mut cert = Certificate {
        interval: Interval::new(0, 4),
        guard: GuardKind::DoublyBounded(Int::from(0), Int::from(50)),
        consts: BTreeMap::new(),
        cells,
        sel_up: Some(vec!["(f (+ x 1))".to_string()]),
        sel_down: None,
        verified_by: None,
    };
    assert_eq!(failed(&p, &cert), vec![]);

    cert.sel_up = None;
    assert_eq!(failed(&p, &cert), vec![ObligationId::Coverage]);
}
