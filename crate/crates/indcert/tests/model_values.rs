mod common;

use common::{counter_chain, problem, solver_config};
use indcert::ast::Int;
use indcert::certificate::Certificate;
use indcert::engine::{solve, EngineOptions, Verdict};
use indcert::fragment::{Direction, GuardKind, Interval};
use indcert::modeleval::{EvalError, Evaluator};
use std::collections::BTreeMap;

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

#[test]
fn explicit_cells_are_read_off_without_propagation() {
    let cfg = solver_config();
    let p = counter_chain();
    let cert = chain_cert();
    let mut ev = Evaluator::new(&p, &cert, &cfg).unwrap();
    assert_eq!(ev.value("f", &Int::from(0)).unwrap(), Int::from(3));
    assert_eq!(ev.value("f", &Int::from(-4)).unwrap(), Int::from(-1));
    assert_eq!(ev.stats.propagations, 0);
}

#[test]
fn values_beyond_the_interval_follow_the_closed_form() {
    let cfg = solver_config();
    let p = counter_chain();
    let cert = chain_cert();
    let mut ev = Evaluator::new(&p, &cert, &cfg).unwrap();
    // The certificate denotes the single model f(n) = n + 3.
    for n in -20..=20 {
        assert_eq!(ev.value("f", &Int::from(n)).unwrap(), Int::from(n + 3), "at {n}");
    }
}

#[test]
fn propagation_counts_one_instance_per_new_cell() {
    let cfg = solver_config();
    let p = counter_chain();
    let cert = chain_cert();
    let mut ev = Evaluator::new(&p, &cert, &cfg).unwrap();
    assert_eq!(ev.value("f", &Int::from(7)).unwrap(), Int::from(10));
    assert_eq!(ev.stats.propagations, 2);
    // A second read hits the remembered cell.
    assert_eq!(ev.value("f", &Int::from(7)).unwrap(), Int::from(10));
    assert_eq!(ev.stats.propagations, 2);
}

#[test]
fn instance_lookup_reports_the_covering_point() {
    let cfg = solver_config();
    let p = counter_chain();
    let cert = chain_cert();
    let ev = Evaluator::new(&p, &cert, &cfg).unwrap();
    assert_eq!(
        ev.instance_of(&("f".to_string(), Int::from(7))),
        Some((Int::from(6), Direction::Up))
    );
    assert_eq!(
        ev.instance_of(&("f".to_string(), Int::from(-9))),
        Some((Int::from(-9), Direction::Down))
    );
    assert_eq!(ev.instance_of(&("f".to_string(), Int::from(2))), None);
}

#[test]
fn unknown_symbols_are_rejected() {
    let cfg = solver_config();
    let p = counter_chain();
    let cert = chain_cert();
    let mut ev = Evaluator::new(&p, &cert, &cfg).unwrap();
    match ev.value("g", &Int::from(0)) {
        Err(EvalError::UnknownSymbol(s)) => assert_eq!(s, "g"),
        other => panic!("expected an unknown-symbol error, got {other:?}"),
    }
}

#[test]
fn unreachable_cells_default_to_zero() {
    let cfg = solver_config();
    // No selections: nothing propagates beyond the explicit interval.
    let p = problem(
        "(declare-fun f (Int) Int)\
         (assert (= (f 0) 10))\
         (assert (forall ((x Int)) (=> (and (<= 0 x) (<= x 2))\
            (= (f (+ x 1)) (+ (f x) 1)))))",
    );
    let mut cells = BTreeMap::new();
    for n in 0..=3 {
        cells.insert(("f".to_string(), Int::from(n)), Int::from(n + 10));
    }
    let cert = Certificate {
        interval: Interval::new(0, 2),
        guard: GuardKind::DoublyBounded(Int::from(0), Int::from(2)),
        consts: BTreeMap::new(),
        cells,
        sel_up: None,
        sel_down: None,
        verified_by: None,
    };
    let mut ev = Evaluator::new(&p, &cert, &cfg).unwrap();
    assert_eq!(ev.value("f", &Int::from(1)).unwrap(), Int::from(11));
    assert_eq!(ev.value("f", &Int::from(99)).unwrap(), Int::from(0));
    assert_eq!(ev.value("f", &Int::from(-1)).unwrap(), Int::from(0));
    assert_eq!(ev.stats.propagations, 0);
}

#[test]
fn contradictory_propagation_fails_loudly() {
    let cfg = solver_config();
    // The upward selection is not actually propagable; a certificate that
    // claims it anyway breaks down once the ceiling is reached.
    let p = problem(
        "(declare-fun f (Int) Int)\
         (assert (= (f 0) 0))\
         (assert (forall ((x Int))\
            (and (= (f (+ x 1)) (+ (f x) 1)) (<= (f (+ x 1)) 5))))",
    );
    let mut cells = BTreeMap::new();
    cells.insert(("f".to_string(), Int::from(0)), Int::from(0));
    cells.insert(("f".to_string(), Int::from(1)), Int::from(1));
    let cert = Certificate {
        interval: Interval::new(0, 0),
        guard: GuardKind::Unbounded,
        consts: BTreeMap::new(),
        cells,
        sel_up: Some(vec!["(f (+ x 1))".to_string()]),
        sel_down: None,
        verified_by: None,
    };
    let mut ev = Evaluator::new(&p, &cert, &cfg).unwrap();
    match ev.value("f", &Int::from(6)) {
        Err(EvalError::PropagatorFailed { z }) => assert_eq!(z, Int::from(5)),
        other => panic!("expected a failed propagation, got {other:?}"),
    }
}

#[test]
fn engine_output_feeds_the_evaluator_directly() {
    let cfg = solver_config();
    let p = counter_chain();
    let out = solve(&p, &EngineOptions::default(), &cfg).unwrap();
    let Verdict::Sat(cert) = out.verdict else {
        panic!("expected sat, got {}", out.verdict.label())
    };
    let mut ev = Evaluator::new(&p, &cert, &cfg).unwrap();
    for n in [-12, -1, 0, 4, 9, 30] {
        assert_eq!(ev.value("f", &Int::from(n)).unwrap(), Int::from(n + 3), "at {n}");
    }
}
