mod common;

use common::{counter_chain, problem, solver_config};
use indcert::backend::{Logic, Session, Status};
use indcert::certificate;
use indcert::engine::{solve, EngineOptions, UnknownReason, Verdict};
use indcert::fragment::Interval;

#[test]
fn recursive_chain_is_certified_by_induction() {
    let cfg = solver_config();
    let p = counter_chain();
    let out = solve(&p, &EngineOptions::default(), &cfg).unwrap();
    let Verdict::Sat(cert) = out.verdict else {
        panic!("expected sat, got {}", out.verdict.label())
    };

    // Point start at 0, widened by one each round until the ground argument
    // 4 clears the propagated frontier.
    assert_eq!(out.stats.iterations, 5);
    assert_eq!(cert.interval, Interval::new(-4, 4));
    assert_eq!(cert.sel_up.as_deref(), Some(&["(f (+ x 1))".to_string()][..]));
    assert_eq!(cert.sel_down.as_deref(), Some(&["(f x)".to_string()][..]));
    assert!(cert.verified_by.is_some());

    // Explicit cells: arguments -4..=5 from the instantiated occurrences.
    assert_eq!(cert.cells.len(), 10);
    assert_eq!(cert.cells[&("f".to_string(), 4.into())], 7.into());

    let report = certificate::check(&p, &cert, &cfg).unwrap();
    assert!(report.accepted(), "checker rejected: {:?}", report.failures);

    // The emitted artifact survives a round trip through its text form.
    let again = certificate::deserialize(&cert.to_string()).unwrap();
    assert_eq!(again, *cert);
}

#[test]
fn seeding_from_ground_arguments_saves_iterations() {
    let cfg = solver_config();
    let p = counter_chain();
    let opts = EngineOptions { seed_from_ground: true, ..EngineOptions::default() };
    let out = solve(&p, &opts, &cfg).unwrap();
    let Verdict::Sat(cert) = out.verdict else {
        panic!("expected sat, got {}", out.verdict.label())
    };
    assert_eq!(out.stats.iterations, 1);
    assert_eq!(cert.interval, Interval::new(0, 4));
    assert!(certificate::check(&p, &cert, &cfg).unwrap().accepted());
}

#[test]
fn conflicting_step_is_refuted_by_a_finite_conjunction() {
    let cfg = solver_config();
    let p = problem(
        "(declare-fun f (Int) Int)\
         (assert (and (= (f 0) 0) (= (f 3) 5)))\
         (assert (forall ((x Int)) (= (f (+ x 1)) (+ (f x) 2))))",
    );
    let out = solve(&p, &EngineOptions::default(), &cfg).unwrap();
    let Verdict::Unsat { refuted } = out.verdict else {
        panic!("expected unsat, got {}", out.verdict.label())
    };
    // The chain from 0 reaches f(3) once the interval spans [-2, 2].
    assert_eq!(out.stats.iterations, 3);
    assert_eq!(refuted.len(), 6);

    // Second route: the reported conjunction alone convinces a fresh session.
    let mut fresh = Session::new(&cfg, Logic::Uflia).unwrap();
    for f in &refuted {
        fresh.assert_formula(f).unwrap();
    }
    assert_eq!(fresh.check_sat().unwrap(), Status::Unsat);
}

#[test]
fn ground_only_problems_need_no_selection() {
    let cfg = solver_config();
    let p = problem(
        "(declare-const c Int)(declare-fun f (Int) Int)\
         (assert (and (= (f 1) c) (< c 0)))",
    );
    let out = solve(&p, &EngineOptions::default(), &cfg).unwrap();
    let Verdict::Sat(cert) = out.verdict else {
        panic!("expected sat, got {}", out.verdict.label())
    };
    assert_eq!(out.stats.iterations, 1);
    assert!(cert.sel_up.is_none() && cert.sel_down.is_none());
    assert_eq!(cert.cells.len(), 1);
    let c = &cert.consts["c"];
    assert!(c < &0.into());
    assert_eq!(cert.cells[&("f".to_string(), 1.into())], c.clone());
    assert!(certificate::check(&p, &cert, &cfg).unwrap().accepted());
}

#[test]
fn narrow_finite_guard_is_covered_by_instantiation() {
    let cfg = solver_config();
    // No pivot selection works here, but the guard region is tiny, so plain
    // widening covers it.
    let p = problem(
        "(declare-fun f (Int) Int)\
         (assert (= (f 0) 0))\
         (assert (forall ((x Int)) (=> (and (<= 0 x) (<= x 2))\
            (and (= (f (+ x 2)) (+ (f x) 1)) (>= (f (+ x 1)) (f x))))))",
    );
    let out = solve(&p, &EngineOptions::default(), &cfg).unwrap();
    let Verdict::Sat(cert) = out.verdict else {
        panic!("expected sat, got {}", out.verdict.label())
    };
    assert_eq!(out.stats.iterations, 3);
    assert_eq!(cert.interval, Interval::new(0, 2));
    assert!(cert.sel_up.is_none() && cert.sel_down.is_none());
    assert!(out.stats.blocked_patterns > 0);
    assert!(certificate::check(&p, &cert, &cfg).unwrap().accepted());
}

#[test]
fn wide_finite_guard_is_certified_without_walking_it() {
    let cfg = solver_config();
    let p = problem(
        "(declare-fun f (Int) Int)\
         (assert (= (f 4) 7))\
         (assert (forall ((x Int)) (=> (and (<= 0 x) (<= x 1000000))\
            (= (f (+ x 1)) (+ (f x) 1)))))",
    );
    let out = solve(&p, &EngineOptions::default(), &cfg).unwrap();
    let Verdict::Sat(cert) = out.verdict else {
        panic!("expected sat, got {}", out.verdict.label())
    };
    // The interval stays tiny: induction takes over long before the bound.
    assert_eq!(out.stats.iterations, 5);
    assert_eq!(cert.interval, Interval::new(0, 4));
    assert!(cert.sel_up.is_some());
    assert!(cert.sel_down.is_none());
    assert!(certificate::check(&p, &cert, &cfg).unwrap().accepted());
}

#[test]
fn lower_guard_pins_the_interval_bottom() {
    let cfg = solver_config();
    let p = problem(
        "(declare-fun f (Int) Int)\
         (assert (= (f 5) 9))\
         (assert (forall ((x Int)) (=> (<= 2 x) (= (f (+ x 1)) (+ (f x) 1)))))",
    );
    let out = solve(&p, &EngineOptions::default(), &cfg).unwrap();
    let Verdict::Sat(cert) = out.verdict else {
        panic!("expected sat, got {}", out.verdict.label())
    };
    assert_eq!(out.stats.iterations, 4);
    assert_eq!(cert.interval, Interval::new(2, 5));
    assert!(cert.sel_up.is_some());
    assert!(cert.sel_down.is_none());
    assert!(certificate::check(&p, &cert, &cfg).unwrap().accepted());
}

#[test]
fn exhausted_budget_reports_unknown() {
    let cfg = solver_config();
    // Mixed strides: no single occurrence set is propagable in either
    // direction, and the unbounded region can never be covered.
    let p = problem(
        "(declare-fun f (Int) Int)\
         (assert (= (f 0) 0))\
         (assert (forall ((x Int))\
            (and (= (f (+ x 2)) (+ (f x) 1)) (>= (f (+ x 1)) (f x)))))",
    );
    let opts = EngineOptions { max_iterations: 3, ..EngineOptions::default() };
    let out = solve(&p, &opts, &cfg).unwrap();
    match out.verdict {
        Verdict::Unknown(UnknownReason::Budget) => {}
        other => panic!("expected a budget verdict, got {}", other.label()),
    }
    assert_eq!(out.stats.iterations, 3);
    assert!(out.stats.blocked_patterns >= 2);
}
