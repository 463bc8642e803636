//! Evaluation of arbitrary cells under an accepted certificate. Cells inside
//! the explicit interval are read off directly; cells beyond it are computed
//! by replaying the selected propagators toward the interval; cells no
//! propagator reaches take the default value zero.

use crate::ast::{self, Cell, CellInterpretation, Formula, Int, Symbol, Term};
use crate::backend::{BackendError, Logic, Session, SolverConfig, Status, Value};
use crate::certificate::{resolve_id, Certificate};
use crate::fragment::{Direction, FragmentError, FragmentProblem, Interval, QTerm};
use num_bigint::Sign;
use num_integer::Integer;
use num_traits::{Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};

// Recursion never legitimately needs more than this many propagation steps
// on inputs this tool is for; beyond it we fail loudly instead of spinning.
const HARD_DEPTH_CAP: u64 = 20_000;

#[derive(Debug, Clone, Default)]
pub struct EvalStats {
    /// Ground instances solved.
    pub propagations: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("unknown function '{0}'")]
    UnknownSymbol(String),
    #[error("selection references unknown occurrence {0}")]
    Reference(String),
    #[error("instance at {z} has no solution for the propagated cells")]
    PropagatorFailed { z: Int },
    #[error("solver could not decide the instance at {z}")]
    Undecided { z: Int },
    #[error("recursion depth exhausted at cell ({0} {1})")]
    DepthExceeded(Symbol, Int),
    #[error("propagation distance failed to shrink below cell ({0} {1})")]
    NotMonotone(Symbol, Int),
    #[error(transparent)]
    Fragment(#[from] FragmentError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

pub struct Evaluator<'a> {
    p: &'a FragmentProblem,
    b: Interval,
    env: CellInterpretation,
    sel: BTreeMap<Direction, Vec<QTerm>>,
    sess: Session,
    pub stats: EvalStats,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        p: &'a FragmentProblem,
        cert: &Certificate,
        cfg: &SolverConfig,
    ) -> Result<Evaluator<'a>, EvalError> {
        let mut sel = BTreeMap::new();
        for dir in [Direction::Up, Direction::Down] {
            let Some(ids) = cert.selection(dir) else { continue };
            let mut terms = Vec::new();
            for id in ids {
                let t = resolve_id(p, id).ok_or_else(|| EvalError::Reference(id.clone()))?;
                terms.push(t.clone());
            }
            sel.insert(dir, terms);
        }
        Ok(Evaluator {
            p,
            b: cert.interval.clone(),
            env: cert.env(),
            sel,
            sess: Session::new(cfg, Logic::Lia)?,
            stats: EvalStats::default(),
        })
    }

    /// The propagator instance covering a cell, if any: the guard point `z`
    /// beyond the interval at which some selected occurrence reads this cell.
    pub fn instance_of(&self, cell: &Cell) -> Option<(Int, Direction)> {
        let (fsym, n) = cell;
        for dir in [Direction::Up, Direction::Down] {
            for t in self.sel.get(&dir).into_iter().flatten() {
                if t.fsym != *fsym || t.coeff.is_zero() {
                    continue;
                }
                let off = t.offset.value(&self.env.consts)?;
                let (z, rem) = (n - off).div_rem(&t.coeff);
                if !rem.is_zero() {
                    continue;
                }
                let outside = match dir {
                    Direction::Up => z > self.b.hi,
                    Direction::Down => z < self.b.lo,
                };
                if outside && self.p.guard.contains(&z) {
                    return Some((z, dir));
                }
            }
        }
        None
    }

    /// Value of `fsym(n)` in the model the certificate denotes.
    pub fn value(&mut self, fsym: &str, n: &Int) -> Result<Int, EvalError> {
        if !self.p.funcs.contains_key(fsym) {
            return Err(EvalError::UnknownSymbol(fsym.to_string()));
        }
        let cap = self.depth_cap(n);
        self.val(&(fsym.to_string(), n.clone()), cap, None)
    }

    pub fn const_value(&self, c: &str) -> Option<&Int> {
        self.env.consts.get(c)
    }

    fn depth_cap(&self, n: &Int) -> u64 {
        let into_u64 = |v: Int| -> u64 {
            if v.sign() == Sign::Minus {
                0
            } else {
                u64::try_from(v.magnitude().clone()).unwrap_or(HARD_DEPTH_CAP)
            }
        };
        let span = into_u64(&self.b.hi - &self.b.lo + 1);
        let maxc = self
            .p
            .funcs
            .values()
            .map(|info| into_u64(info.coeff().abs()))
            .max()
            .unwrap_or(1)
            .max(1);
        let base = into_u64(n.abs()).saturating_mul(maxc).saturating_add(span).saturating_add(1);
        base.saturating_mul(4).saturating_add(64).min(HARD_DEPTH_CAP)
    }

    fn val(&mut self, cell: &Cell, depth: u64, prev: Option<&Int>) -> Result<Int, EvalError> {
        if let Some(v) = self.env.cells.get(cell) {
            return Ok(v.clone());
        }
        let Some((z, dir)) = self.instance_of(cell) else {
            return Ok(Int::zero());
        };
        let dist = match dir {
            Direction::Up => &z - &self.b.hi,
            Direction::Down => &self.b.lo - &z,
        };
        if let Some(p) = prev {
            if dist >= *p {
                return Err(EvalError::NotMonotone(cell.0.clone(), cell.1.clone()));
            }
        }
        if depth == 0 {
            return Err(EvalError::DepthExceeded(cell.0.clone(), cell.1.clone()));
        }

        let propagated: BTreeSet<Cell> = self
            .sel
            .get(&dir)
            .into_iter()
            .flatten()
            .filter(|t| !t.coeff.is_zero())
            .filter_map(|t| t.cell_at(&z, &self.env.consts))
            .collect();
        let gamma = self.p.relevant_cells(&self.env, &z)?;
        for w in &gamma {
            if propagated.contains(w) || self.env.cells.contains_key(w) {
                continue;
            }
            let v = self.val(w, depth - 1, Some(&dist))?;
            // Defaulted cells are pinned so the instance below sees the same
            // value every reader will.
            self.env.cells.entry(w.clone()).or_insert(v);
        }

        let fresh: BTreeMap<Cell, Symbol> = propagated
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), format!("_w{i}")))
            .collect();
        let grounded = self.ground_instance(&z, &fresh)?;
        self.sess.push()?;
        self.sess.assert_formula(&grounded)?;
        let status = self.sess.check_sat();
        let status = match status {
            Ok(s) => s,
            Err(e) => {
                let _ = self.sess.pop();
                return Err(e.into());
            }
        };
        match status {
            Status::Sat => {}
            Status::Unsat => {
                self.sess.pop()?;
                return Err(EvalError::PropagatorFailed { z });
            }
            Status::Unknown => {
                self.sess.pop()?;
                return Err(EvalError::Undecided { z });
            }
        }
        let names: Vec<String> = fresh.values().cloned().collect();
        let vals = self.sess.get_values(&names)?;
        for (c, name) in &fresh {
            match vals.get(name) {
                Some(Value::Int(v)) => {
                    self.env.cells.insert(c.clone(), v.clone());
                }
                _ => {
                    self.sess.pop()?;
                    return Err(EvalError::Backend(BackendError::Protocol(format!(
                        "missing value for {name}"
                    ))));
                }
            }
        }
        self.sess.pop()?;
        self.stats.propagations += 1;

        Ok(self
            .env
            .cells
            .get(cell)
            .expect("propagated instance covers the requested cell")
            .clone())
    }

    // The instance at z with every application replaced by its value, except
    // the propagated cells, which become the given fresh unknowns.
    fn ground_instance(
        &self,
        z: &Int,
        fresh: &BTreeMap<Cell, Symbol>,
    ) -> Result<Formula, EvalError> {
        let consts_env =
            CellInterpretation { consts: self.env.consts.clone(), cells: BTreeMap::new() };
        let inst = self.p.q_at(z);
        fn term(
            t: &Term,
            ev: &Evaluator,
            consts_env: &CellInterpretation,
            fresh: &BTreeMap<Cell, Symbol>,
        ) -> Term {
            match t {
                Term::Int(_) | Term::Var(_) => t.clone(),
                Term::Const(c) => Term::Int(
                    ev.env.consts.get(c).expect("certificate constants are total").clone(),
                ),
                Term::Add(a, b) => Term::add(
                    term(a, ev, consts_env, fresh),
                    term(b, ev, consts_env, fresh),
                ),
                Term::Mul(k, u) => {
                    Term::Mul(k.clone(), Box::new(term(u, ev, consts_env, fresh)))
                }
                Term::Neg(u) => Term::neg(term(u, ev, consts_env, fresh)),
                Term::App(fsym, arg) => {
                    let n = ast::eval_term(arg, consts_env)
                        .expect("instance arguments are ground");
                    let cell = (fsym.clone(), n);
                    if let Some(name) = fresh.get(&cell) {
                        Term::cnst(name.clone())
                    } else {
                        Term::Int(
                            ev.env
                                .cells
                                .get(&cell)
                                .cloned()
                                .unwrap_or_else(Int::zero),
                        )
                    }
                }
            }
        }
        fn go(
            f: &Formula,
            ev: &Evaluator,
            consts_env: &CellInterpretation,
            fresh: &BTreeMap<Cell, Symbol>,
        ) -> Formula {
            match f {
                Formula::True | Formula::False | Formula::BoolVar(_) => f.clone(),
                Formula::Atom(rel, a, b) => Formula::Atom(
                    *rel,
                    term(a, ev, consts_env, fresh),
                    term(b, ev, consts_env, fresh),
                ),
                Formula::Not(g) => Formula::not(go(g, ev, consts_env, fresh)),
                Formula::And(fs) => {
                    Formula::And(fs.iter().map(|g| go(g, ev, consts_env, fresh)).collect())
                }
                Formula::Or(fs) => {
                    Formula::Or(fs.iter().map(|g| go(g, ev, consts_env, fresh)).collect())
                }
                Formula::Implies(a, b) => Formula::implies(
                    go(a, ev, consts_env, fresh),
                    go(b, ev, consts_env, fresh),
                ),
                Formula::Forall(..) | Formula::Exists(..) => {
                    unreachable!("instances are quantifier-free")
                }
            }
        }
        Ok(go(&inst, self, &consts_env, fresh))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_cap_is_finite_and_generous() {
        // Pure arithmetic on the cap formula, no solver involved.
        let into = |v: i64| Int::from(v);
        let span = &into(4) - &into(-4) + 1;
        assert_eq!(span, into(9));
        assert!(HARD_DEPTH_CAP >= 10_000);
    }
}
