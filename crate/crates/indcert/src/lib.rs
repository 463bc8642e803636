//! Satisfiability certifier for ground linear integer arithmetic combined
//! with a single universally quantified conjunct over unary uninterpreted
//! functions.
//!
//! The pipeline: [`ast::parse`] reads the SMT-LIB subset,
//! [`fragment::decompose`] splits the input into a ground part and the
//! quantified conjunct, [`engine::solve`] grows a base interval and searches
//! for pivot selections whose obligations an SMT solver discharges, and a
//! successful run yields a [`certificate::Certificate`] that
//! [`certificate::check`] verifies independently. [`modeleval::Evaluator`]
//! turns an accepted certificate into concrete function values anywhere on
//! the line, and [`bench`] runs the bundled corpus.

pub mod ast;
pub mod backend;
pub mod bench;
pub mod certificate;
pub mod encoder;
pub mod engine;
pub mod fragment;
pub mod modeleval;
pub mod sexp;
