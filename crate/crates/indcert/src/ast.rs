//! Terms and formulas of linear integer arithmetic with unary uninterpreted
//! functions, plus a parser for the SMT-LIB subset we accept, a printer, and
//! ground evaluation against a partial cell interpretation.
//!
//! Every integer is a [`num_bigint::BigInt`]; nothing in this crate assumes
//! machine-width arithmetic.

use crate::sexp::{self, Pos, Sexp};
use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub type Symbol = String;
pub type Int = BigInt;

/// A function cell: the symbol together with a concrete integer argument.
/// Constants are handled separately since they take no argument.
pub type Cell = (Symbol, Int);

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Int(Int),
    /// Declared integer constant.
    Const(Symbol),
    /// Bound variable.
    Var(Symbol),
    Add(Box<Term>, Box<Term>),
    /// Multiplication by an integer literal; the linear fragment admits
    /// nothing stronger.
    Mul(Int, Box<Term>),
    Neg(Box<Term>),
    /// Application of a unary uninterpreted function.
    App(Symbol, Box<Term>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Eq,
    Le,
    Lt,
    Ge,
    Gt,
    Ne,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Atom(Rel, Term, Term),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Forall(Symbol, Box<Formula>),
    Exists(Symbol, Box<Formula>),
    /// Free boolean variable. Never produced by the parser; the encoder uses
    /// these for selector literals.
    BoolVar(Symbol),
}

impl Term {
    pub fn int(n: impl Into<Int>) -> Term {
        Term::Int(n.into())
    }

    pub fn add(a: Term, b: Term) -> Term {
        Term::Add(Box::new(a), Box::new(b))
    }

    pub fn mul(k: impl Into<Int>, t: Term) -> Term {
        Term::Mul(k.into(), Box::new(t))
    }

    pub fn neg(t: Term) -> Term {
        Term::Neg(Box::new(t))
    }

    pub fn app(f: impl Into<Symbol>, arg: Term) -> Term {
        Term::App(f.into(), Box::new(arg))
    }

    pub fn var(v: impl Into<Symbol>) -> Term {
        Term::Var(v.into())
    }

    pub fn cnst(c: impl Into<Symbol>) -> Term {
        Term::Const(c.into())
    }
}

impl Formula {
    pub fn atom(rel: Rel, lhs: Term, rhs: Term) -> Formula {
        Formula::Atom(rel, lhs, rhs)
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn forall(v: impl Into<Symbol>, body: Formula) -> Formula {
        Formula::Forall(v.into(), Box::new(body))
    }

    pub fn exists(v: impl Into<Symbol>, body: Formula) -> Formula {
        Formula::Exists(v.into(), Box::new(body))
    }

    /// Conjunction that collapses the empty and singleton cases.
    pub fn and(mut fs: Vec<Formula>) -> Formula {
        match fs.len() {
            0 => Formula::True,
            1 => fs.pop().unwrap(),
            _ => Formula::And(fs),
        }
    }

    /// Disjunction that collapses the empty and singleton cases.
    pub fn or(mut fs: Vec<Formula>) -> Formula {
        match fs.len() {
            0 => Formula::False,
            1 => fs.pop().unwrap(),
            _ => Formula::Or(fs),
        }
    }

    /// The conjuncts of a top-level `and`, or the formula itself.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        match self {
            Formula::And(fs) => fs.iter().collect(),
            f => vec![f],
        }
    }
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Int(n) => {
                if n.is_negative() {
                    write!(f, "(- {})", n.magnitude())
                } else {
                    write!(f, "{n}")
                }
            }
            Term::Const(c) | Term::Var(c) => write!(f, "{c}"),
            Term::Add(a, b) => write!(f, "(+ {a} {b})"),
            Term::Mul(k, t) => write!(f, "(* {} {t})", Term::Int(k.clone())),
            Term::Neg(t) => write!(f, "(- {t})"),
            Term::App(g, arg) => write!(f, "({g} {arg})"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(Rel::Ne, a, b) => write!(f, "(not (= {a} {b}))"),
            Formula::Atom(rel, a, b) => {
                let op = match rel {
                    Rel::Eq => "=",
                    Rel::Le => "<=",
                    Rel::Lt => "<",
                    Rel::Ge => ">=",
                    Rel::Gt => ">",
                    Rel::Ne => unreachable!(),
                };
                write!(f, "({op} {a} {b})")
            }
            Formula::Not(g) => write!(f, "(not {g})"),
            Formula::And(fs) => {
                write!(f, "(and")?;
                for g in fs {
                    write!(f, " {g}")?;
                }
                write!(f, ")")
            }
            Formula::Or(fs) => {
                write!(f, "(or")?;
                for g in fs {
                    write!(f, " {g}")?;
                }
                write!(f, ")")
            }
            Formula::Implies(a, b) => write!(f, "(=> {a} {b})"),
            Formula::Forall(v, body) => write!(f, "(forall (({v} Int)) {body})"),
            Formula::Exists(v, body) => write!(f, "(exists (({v} Int)) {body})"),
            Formula::BoolVar(b) => write!(f, "{b}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("unsupported construct at {pos}: {what}")]
    Unsupported { pos: Pos, what: String },
}

impl From<sexp::SexpError> for ParseError {
    fn from(e: sexp::SexpError) -> Self {
        ParseError::Syntax { pos: e.pos, msg: e.msg }
    }
}

fn syntax(pos: Pos, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { pos, msg: msg.into() }
}

fn unsupported(pos: Pos, what: impl Into<String>) -> ParseError {
    ParseError::Unsupported { pos, what: what.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Decl {
    IntConst,
    UnaryFun,
}

struct Parser {
    decls: BTreeMap<Symbol, Decl>,
    bound: Vec<Symbol>,
}

fn is_numeral(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

// Leading underscores are reserved for generated names (selector literals
// and obligation variables), so declared symbols must start with a letter.
fn is_symbol_name(s: &str) -> bool {
    let mut bytes = s.bytes();
    match bytes.next() {
        Some(b) if b.is_ascii_alphabetic() => {}
        _ => return false,
    }
    bytes.all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || b == b'-')
}

impl Parser {
    fn new() -> Self {
        Parser { decls: BTreeMap::new(), bound: Vec::new() }
    }

    fn term(&self, s: &Sexp) -> Result<Term, ParseError> {
        match s {
            Sexp::Atom(a, pos) => {
                if is_numeral(a) {
                    return Ok(Term::Int(a.parse::<BigInt>().unwrap()));
                }
                if self.bound.iter().any(|v| v == a) {
                    return Ok(Term::Var(a.clone()));
                }
                match self.decls.get(a) {
                    Some(Decl::IntConst) => Ok(Term::Const(a.clone())),
                    Some(Decl::UnaryFun) => {
                        Err(syntax(*pos, format!("'{a}' is a function, not a constant")))
                    }
                    None => Err(syntax(*pos, format!("undeclared symbol '{a}'"))),
                }
            }
            Sexp::List(items, pos) => {
                let head = items
                    .first()
                    .and_then(Sexp::atom)
                    .ok_or_else(|| syntax(*pos, "expected operator"))?;
                let args = &items[1..];
                match head {
                    "+" => {
                        if args.len() < 2 {
                            return Err(syntax(*pos, "'+' needs at least two arguments"));
                        }
                        let mut t = self.term(&args[0])?;
                        for a in &args[1..] {
                            t = Term::add(t, self.term(a)?);
                        }
                        Ok(t)
                    }
                    "-" => match args {
                        [one] => {
                            if let Some(a) = one.atom() {
                                if is_numeral(a) {
                                    return Ok(Term::Int(-a.parse::<BigInt>().unwrap()));
                                }
                            }
                            Ok(Term::neg(self.term(one)?))
                        }
                        [first, rest @ ..] if !rest.is_empty() => {
                            let mut t = self.term(first)?;
                            for a in rest {
                                t = Term::add(t, Term::neg(self.term(a)?));
                            }
                            Ok(t)
                        }
                        _ => Err(syntax(*pos, "'-' needs at least one argument")),
                    },
                    "*" => {
                        if args.len() < 2 {
                            return Err(syntax(*pos, "'*' needs at least two arguments"));
                        }
                        let mut coeff = BigInt::from(1);
                        let mut other: Option<Term> = None;
                        for a in args {
                            let t = self.term(a)?;
                            if let Term::Int(n) = t {
                                coeff *= n;
                            } else if other.is_none() {
                                other = Some(t);
                            } else {
                                return Err(unsupported(*pos, "nonlinear multiplication"));
                            }
                        }
                        Ok(match other {
                            None => Term::Int(coeff),
                            Some(t) => Term::Mul(coeff, Box::new(t)),
                        })
                    }
                    name if self.decls.get(name) == Some(&Decl::UnaryFun) => {
                        if args.len() != 1 {
                            return Err(syntax(*pos, format!("'{name}' takes one argument")));
                        }
                        Ok(Term::app(name, self.term(&args[0])?))
                    }
                    other => Err(unsupported(*pos, format!("term operator '{other}'"))),
                }
            }
        }
    }

    fn formula(&mut self, s: &Sexp) -> Result<Formula, ParseError> {
        match s {
            Sexp::Atom(a, pos) => match a.as_str() {
                "true" => Ok(Formula::True),
                "false" => Ok(Formula::False),
                other => Err(syntax(*pos, format!("expected a formula, found '{other}'"))),
            },
            Sexp::List(items, pos) => {
                let head = items
                    .first()
                    .and_then(Sexp::atom)
                    .ok_or_else(|| syntax(*pos, "expected operator"))?;
                let args = &items[1..];
                let rel = |r: Rel| -> Result<Formula, ParseError> {
                    if args.len() != 2 {
                        return Err(unsupported(*pos, format!("non-binary '{head}'")));
                    }
                    Ok(Formula::Atom(r, self.term(&args[0])?, self.term(&args[1])?))
                };
                match head {
                    "=" => rel(Rel::Eq),
                    "<=" => rel(Rel::Le),
                    "<" => rel(Rel::Lt),
                    ">=" => rel(Rel::Ge),
                    ">" => rel(Rel::Gt),
                    "distinct" => rel(Rel::Ne),
                    "not" => {
                        if args.len() != 1 {
                            return Err(syntax(*pos, "'not' takes one argument"));
                        }
                        Ok(Formula::not(self.formula(&args[0])?))
                    }
                    "and" => Ok(Formula::and(
                        args.iter().map(|a| self.formula(a)).collect::<Result<_, _>>()?,
                    )),
                    "or" => Ok(Formula::or(
                        args.iter().map(|a| self.formula(a)).collect::<Result<_, _>>()?,
                    )),
                    "=>" => {
                        if args.len() < 2 {
                            return Err(syntax(*pos, "'=>' needs at least two arguments"));
                        }
                        let mut fs: Vec<Formula> =
                            args.iter().map(|a| self.formula(a)).collect::<Result<_, _>>()?;
                        let mut out = fs.pop().unwrap();
                        while let Some(f) = fs.pop() {
                            out = Formula::implies(f, out);
                        }
                        Ok(out)
                    }
                    "forall" | "exists" => {
                        if args.len() != 2 {
                            return Err(syntax(*pos, format!("'{head}' takes bindings and a body")));
                        }
                        let binds = args[0]
                            .list()
                            .ok_or_else(|| syntax(args[0].pos(), "expected binding list"))?;
                        if binds.len() != 1 {
                            return Err(unsupported(
                                *pos,
                                format!("'{head}' with {} bound variables", binds.len()),
                            ));
                        }
                        let b = binds[0]
                            .list()
                            .ok_or_else(|| syntax(binds[0].pos(), "expected (name Int)"))?;
                        match b {
                            [Sexp::Atom(v, vpos), Sexp::Atom(sort, spos)] => {
                                if sort != "Int" {
                                    return Err(unsupported(*spos, format!("sort '{sort}'")));
                                }
                                if !is_symbol_name(v) {
                                    return Err(syntax(*vpos, format!("bad variable name '{v}'")));
                                }
                                self.bound.push(v.clone());
                                let body = self.formula(&args[1]);
                                self.bound.pop();
                                let body = body?;
                                Ok(if head == "forall" {
                                    Formula::forall(v.clone(), body)
                                } else {
                                    Formula::exists(v.clone(), body)
                                })
                            }
                            _ => Err(syntax(binds[0].pos(), "expected (name Int)")),
                        }
                    }
                    other => Err(unsupported(*pos, format!("formula operator '{other}'"))),
                }
            }
        }
    }

    fn declare(&mut self, name: &str, decl: Decl, pos: Pos) -> Result<(), ParseError> {
        if !is_symbol_name(name) {
            return Err(syntax(pos, format!("bad symbol name '{name}'")));
        }
        if self.decls.insert(name.to_string(), decl).is_some() {
            return Err(syntax(pos, format!("'{name}' declared twice")));
        }
        Ok(())
    }

    fn command(&mut self, s: &Sexp, asserts: &mut Vec<Formula>) -> Result<(), ParseError> {
        let pos = s.pos();
        let items = s.list().ok_or_else(|| syntax(pos, "expected a command"))?;
        let head =
            items.first().and_then(Sexp::atom).ok_or_else(|| syntax(pos, "expected a command"))?;
        let args = &items[1..];
        match head {
            "set-logic" | "set-info" | "set-option" | "check-sat" | "exit" => Ok(()),
            "declare-const" => match args {
                [Sexp::Atom(name, npos), Sexp::Atom(sort, spos)] => {
                    if sort != "Int" {
                        return Err(unsupported(*spos, format!("sort '{sort}'")));
                    }
                    self.declare(name, Decl::IntConst, *npos)
                }
                _ => Err(syntax(pos, "expected (declare-const name Int)")),
            },
            "declare-fun" => match args {
                [Sexp::Atom(name, npos), doms, Sexp::Atom(sort, spos)] => {
                    if sort != "Int" {
                        return Err(unsupported(*spos, format!("sort '{sort}'")));
                    }
                    let doms =
                        doms.list().ok_or_else(|| syntax(doms.pos(), "expected a sort list"))?;
                    match doms {
                        [] => self.declare(name, Decl::IntConst, *npos),
                        [Sexp::Atom(d, dpos)] => {
                            if d != "Int" {
                                return Err(unsupported(*dpos, format!("sort '{d}'")));
                            }
                            self.declare(name, Decl::UnaryFun, *npos)
                        }
                        _ => Err(unsupported(*npos, format!("function '{name}' of arity > 1"))),
                    }
                }
                _ => Err(syntax(pos, "expected (declare-fun name (sorts) Int)")),
            },
            "assert" => {
                if args.len() != 1 {
                    return Err(syntax(pos, "'assert' takes one argument"));
                }
                asserts.push(self.formula(&args[0])?);
                Ok(())
            }
            other => Err(unsupported(pos, format!("command '{other}'"))),
        }
    }
}

/// Parses an SMT-LIB script into the conjunction of its assertions.
///
/// Accepted commands: `set-logic`, `set-info`, `set-option`, `declare-const`,
/// `declare-fun` (arity 0 or 1, all sorts `Int`), `assert`, `check-sat`,
/// `exit`. Anything else is rejected.
pub fn parse(input: &str) -> Result<Formula, ParseError> {
    let sexps = sexp::parse_all(input)?;
    let mut p = Parser::new();
    let mut asserts = Vec::new();
    for s in &sexps {
        p.command(s, &mut asserts)?;
    }
    Ok(Formula::and(asserts))
}

/// Parses a single formula given known constant and function symbols.
/// Used by tests and by the certificate checker's helpers.
pub fn parse_formula(
    input: &str,
    consts: &BTreeSet<Symbol>,
    funs: &BTreeSet<Symbol>,
) -> Result<Formula, ParseError> {
    let s = sexp::parse_one(input)?;
    let mut p = Parser::new();
    for c in consts {
        p.decls.insert(c.clone(), Decl::IntConst);
    }
    for f in funs {
        p.decls.insert(f.clone(), Decl::UnaryFun);
    }
    p.formula(&s)
}

/// Parses a single term with the given constants, unary functions, and bound
/// variable names in scope.
pub fn parse_term_str(
    input: &str,
    consts: &BTreeSet<Symbol>,
    funs: &BTreeSet<Symbol>,
    bound: &[&str],
) -> Result<Term, ParseError> {
    let s = sexp::parse_one(input)?;
    let mut p = Parser::new();
    for c in consts {
        p.decls.insert(c.clone(), Decl::IntConst);
    }
    for f in funs {
        p.decls.insert(f.clone(), Decl::UnaryFun);
    }
    p.bound = bound.iter().map(|s| s.to_string()).collect();
    p.term(&s)
}

// ---------------------------------------------------------------------------
// Substitution and traversal
// ---------------------------------------------------------------------------

/// Replaces every free occurrence of variable `v` in `t` with `r`.
pub fn subst_term(t: &Term, v: &str, r: &Term) -> Term {
    match t {
        Term::Int(_) | Term::Const(_) => t.clone(),
        Term::Var(w) => {
            if w == v {
                r.clone()
            } else {
                t.clone()
            }
        }
        Term::Add(a, b) => Term::add(subst_term(a, v, r), subst_term(b, v, r)),
        Term::Mul(k, u) => Term::Mul(k.clone(), Box::new(subst_term(u, v, r))),
        Term::Neg(u) => Term::neg(subst_term(u, v, r)),
        Term::App(f, u) => Term::app(f.clone(), subst_term(u, v, r)),
    }
}

/// Replaces every free occurrence of variable `v` in `f` with `r`.
/// Quantifiers that rebind `v` shadow the substitution.
pub fn subst_formula(f: &Formula, v: &str, r: &Term) -> Formula {
    match f {
        Formula::True | Formula::False | Formula::BoolVar(_) => f.clone(),
        Formula::Atom(rel, a, b) => Formula::Atom(*rel, subst_term(a, v, r), subst_term(b, v, r)),
        Formula::Not(g) => Formula::not(subst_formula(g, v, r)),
        Formula::And(fs) => Formula::And(fs.iter().map(|g| subst_formula(g, v, r)).collect()),
        Formula::Or(fs) => Formula::Or(fs.iter().map(|g| subst_formula(g, v, r)).collect()),
        Formula::Implies(a, b) => {
            Formula::implies(subst_formula(a, v, r), subst_formula(b, v, r))
        }
        Formula::Forall(w, body) => {
            if w == v {
                f.clone()
            } else {
                Formula::forall(w.clone(), subst_formula(body, v, r))
            }
        }
        Formula::Exists(w, body) => {
            if w == v {
                f.clone()
            } else {
                Formula::exists(w.clone(), subst_formula(body, v, r))
            }
        }
    }
}

/// The symbols a formula mentions, split by kind. Bound variables are not
/// included; genuinely free variables land in `vars`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolSet {
    pub consts: BTreeSet<Symbol>,
    pub funs: BTreeSet<Symbol>,
    pub bools: BTreeSet<Symbol>,
    pub vars: BTreeSet<Symbol>,
}

impl SymbolSet {
    pub fn union(mut self, other: SymbolSet) -> SymbolSet {
        self.consts.extend(other.consts);
        self.funs.extend(other.funs);
        self.bools.extend(other.bools);
        self.vars.extend(other.vars);
        self
    }
}

fn collect_term(t: &Term, bound: &mut Vec<Symbol>, out: &mut SymbolSet) {
    match t {
        Term::Int(_) => {}
        Term::Const(c) => {
            out.consts.insert(c.clone());
        }
        Term::Var(v) => {
            if !bound.iter().any(|b| b == v) {
                out.vars.insert(v.clone());
            }
        }
        Term::Add(a, b) => {
            collect_term(a, bound, out);
            collect_term(b, bound, out);
        }
        Term::Mul(_, u) | Term::Neg(u) => collect_term(u, bound, out),
        Term::App(f, u) => {
            out.funs.insert(f.clone());
            collect_term(u, bound, out);
        }
    }
}

fn collect_formula(f: &Formula, bound: &mut Vec<Symbol>, out: &mut SymbolSet) {
    match f {
        Formula::True | Formula::False => {}
        Formula::Atom(_, a, b) => {
            collect_term(a, bound, out);
            collect_term(b, bound, out);
        }
        Formula::Not(g) => collect_formula(g, bound, out),
        Formula::And(fs) | Formula::Or(fs) => {
            for g in fs {
                collect_formula(g, bound, out);
            }
        }
        Formula::Implies(a, b) => {
            collect_formula(a, bound, out);
            collect_formula(b, bound, out);
        }
        Formula::Forall(v, body) | Formula::Exists(v, body) => {
            bound.push(v.clone());
            collect_formula(body, bound, out);
            bound.pop();
        }
        Formula::BoolVar(b) => {
            out.bools.insert(b.clone());
        }
    }
}

/// Collects the symbols of a formula.
pub fn symbols(f: &Formula) -> SymbolSet {
    let mut out = SymbolSet::default();
    collect_formula(f, &mut Vec::new(), &mut out);
    out
}

/// Collects the symbols of a term.
pub fn term_symbols(t: &Term) -> SymbolSet {
    let mut out = SymbolSet::default();
    collect_term(t, &mut Vec::new(), &mut out);
    out
}

// ---------------------------------------------------------------------------
// Cell interpretations and ground evaluation
// ---------------------------------------------------------------------------

/// Finite partial map from constants and function cells to integers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CellInterpretation {
    pub consts: BTreeMap<Symbol, Int>,
    pub cells: BTreeMap<Cell, Int>,
}

impl CellInterpretation {
    pub fn get_const(&self, c: &str) -> Option<&Int> {
        self.consts.get(c)
    }

    pub fn get_cell(&self, f: &str, n: &Int) -> Option<&Int> {
        self.cells.get(&(f.to_string(), n.clone()))
    }

    pub fn set_const(&mut self, c: impl Into<Symbol>, v: impl Into<Int>) {
        self.consts.insert(c.into(), v.into());
    }

    pub fn set_cell(&mut self, f: impl Into<Symbol>, n: impl Into<Int>, v: impl Into<Int>) {
        self.cells.insert((f.into(), n.into()), v.into());
    }
}

/// A term as a linear combination of unresolved atoms plus a constant.
/// Unresolved atoms with coefficient zero are dropped as they arise, so two
/// occurrences of the same undefined cell cancel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct LinComb {
    constant: Int,
    atoms: BTreeMap<String, Int>,
}

impl LinComb {
    fn constant(n: Int) -> LinComb {
        LinComb { constant: n, atoms: BTreeMap::new() }
    }

    fn atom(key: String) -> LinComb {
        let mut atoms = BTreeMap::new();
        atoms.insert(key, Int::from(1));
        LinComb { constant: Int::zero(), atoms }
    }

    fn add_assign(&mut self, other: LinComb) {
        self.constant += other.constant;
        for (k, c) in other.atoms {
            *self.atoms.entry(k).or_insert_with(Int::zero) += c;
        }
        self.atoms.retain(|_, c| !c.is_zero());
    }

    fn scale(&mut self, k: &Int) {
        if k.is_zero() {
            self.constant = Int::zero();
            self.atoms.clear();
            return;
        }
        self.constant *= k;
        for c in self.atoms.values_mut() {
            *c *= k;
        }
    }

    fn as_int(&self) -> Option<&Int> {
        if self.atoms.is_empty() {
            Some(&self.constant)
        } else {
            None
        }
    }
}

fn lin_term(t: &Term, env: &CellInterpretation) -> LinComb {
    match t {
        Term::Int(n) => LinComb::constant(n.clone()),
        Term::Const(c) => match env.get_const(c) {
            Some(v) => LinComb::constant(v.clone()),
            None => LinComb::atom(format!("c:{c}")),
        },
        Term::Var(v) => LinComb::atom(format!("v:{v}")),
        Term::Add(a, b) => {
            let mut l = lin_term(a, env);
            l.add_assign(lin_term(b, env));
            l
        }
        Term::Mul(k, u) => {
            let mut l = lin_term(u, env);
            l.scale(k);
            l
        }
        Term::Neg(u) => {
            let mut l = lin_term(u, env);
            l.scale(&Int::from(-1));
            l
        }
        Term::App(f, arg) => {
            let sub = lin_term(arg, env);
            match sub.as_int() {
                Some(n) => match env.get_cell(f, n) {
                    Some(v) => LinComb::constant(v.clone()),
                    None => LinComb::atom(format!("f:{f}:{n}")),
                },
                // Opaque application: key it by the canonical shape of the
                // unresolved argument so equal arguments still cancel.
                None => LinComb::atom(format!("o:{f}:{}:{:?}", sub.constant, sub.atoms)),
            }
        }
    }
}

/// Evaluates a ground term under a partial interpretation. Returns `None`
/// when the value depends on an undefined cell; a cell whose contributions
/// cancel linearly does not count as a dependency.
pub fn eval_term(t: &Term, env: &CellInterpretation) -> Option<Int> {
    lin_term(t, env).as_int().cloned()
}

/// Three-valued evaluation of a quantifier-free ground formula. `None` means
/// the truth value depends on undefined cells (or on a quantifier, which this
/// evaluator does not attempt).
pub fn eval_formula(f: &Formula, env: &CellInterpretation) -> Option<bool> {
    match f {
        Formula::True => Some(true),
        Formula::False => Some(false),
        Formula::Atom(rel, a, b) => {
            let mut d = lin_term(a, env);
            let mut neg = lin_term(b, env);
            neg.scale(&Int::from(-1));
            d.add_assign(neg);
            let v = d.as_int()?;
            Some(match rel {
                Rel::Eq => v.is_zero(),
                Rel::Le => !v.is_positive(),
                Rel::Lt => v.is_negative(),
                Rel::Ge => !v.is_negative(),
                Rel::Gt => v.is_positive(),
                Rel::Ne => !v.is_zero(),
            })
        }
        Formula::Not(g) => eval_formula(g, env).map(|b| !b),
        Formula::And(fs) => {
            let mut unknown = false;
            for g in fs {
                match eval_formula(g, env) {
                    Some(false) => return Some(false),
                    Some(true) => {}
                    None => unknown = true,
                }
            }
            if unknown {
                None
            } else {
                Some(true)
            }
        }
        Formula::Or(fs) => {
            let mut unknown = false;
            for g in fs {
                match eval_formula(g, env) {
                    Some(true) => return Some(true),
                    Some(false) => {}
                    None => unknown = true,
                }
            }
            if unknown {
                None
            } else {
                Some(false)
            }
        }
        Formula::Implies(a, b) => match (eval_formula(a, env), eval_formula(b, env)) {
            (Some(false), _) | (_, Some(true)) => Some(true),
            (Some(true), Some(false)) => Some(false),
            _ => None,
        },
        Formula::Forall(..) | Formula::Exists(..) | Formula::BoolVar(_) => None,
    }
}
