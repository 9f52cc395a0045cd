//! Decision procedure and certificate generator for constraint satisfaction
//! problems over finite domains whose variables and constraints are
//! orbit-finite definable sets over the ordered rational atoms (Q, <).
//!
//! The pipeline: a definable instance ([`csp_model::DefinableInstance`])
//! reduces to a finite CSP over its orbits ([`orbit_solver::reduce`]), which
//! is decided by a DPLL SAT solver on the T/S/C propositional encoding
//! ([`finite_solver`]). SAT answers come back as definable solutions constant
//! on orbits; UNSAT answers can be backed by finite grounded certificates
//! checked by an independent exhaustive oracle ([`certificates`]).
//! Register machines over equality atoms compile into definable
//! configuration graphs ([`machines`]); the instance DSL lives in
//! [`parser`].

pub mod atoms;
pub mod certificates;
pub mod csp_model;
pub mod defsets;
pub mod finite_solver;
pub mod formulas;
pub mod machines;
pub mod orbit_solver;
pub mod parser;
