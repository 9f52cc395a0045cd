//! Definable (orbit-finite) sets: named disjoint unions of guarded
//! set-builder expressions, with orbit enumeration, membership and grounding.

use std::fmt;

use thiserror::Error;

use crate::atoms::{type_of, Atom, ParameterContext, TupleType};
use crate::formulas::{satisfying_types, Formula, FormulaError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DefSetError {
    #[error("unknown builder `{0}`")]
    UnknownBuilder(String),
    #[error("tuple arity {got} does not match builder `{builder}` of dimension {expected}")]
    ArityMismatch {
        builder: String,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// A guarded set-builder expression `{x : guard(x)}` of a fixed dimension.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetBuilder {
    pub name: String,
    pub dimension: usize,
    pub guard: Formula,
}

/// A definable set presented as a named disjoint union of builders; members
/// are (builder, tuple) pairs.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DefinableSet {
    pub builders: Vec<SetBuilder>,
}

impl DefinableSet {
    pub fn builder(&self, name: &str) -> Option<&SetBuilder> {
        self.builders.iter().find(|b| b.name == name)
    }
}

/// One orbit of a definable set: a builder together with a guard-satisfying
/// tuple type.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Orbit {
    pub builder: String,
    pub otype: TupleType,
}

impl fmt::Display for Orbit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} : {}", self.builder, self.otype)
    }
}

/// The orbit decomposition: one orbit per (builder, satisfying type) pair,
/// builders in declaration order, types in canonical order.
pub fn orbits(ds: &DefinableSet, ctx: &ParameterContext) -> Result<Vec<Orbit>, DefSetError> {
    let mut out = Vec::new();
    for b in &ds.builders {
        for t in satisfying_types(&b.guard, b.dimension, ctx)? {
            out.push(Orbit {
                builder: b.name.clone(),
                otype: t,
            });
        }
    }
    Ok(out)
}

/// The orbit containing `(builder, tuple)`, or `None` when the guard fails.
pub fn orbit_of(
    ds: &DefinableSet,
    builder: &str,
    tuple: &[Atom],
    ctx: &ParameterContext,
) -> Result<Option<Orbit>, DefSetError> {
    let b = ds
        .builder(builder)
        .ok_or_else(|| DefSetError::UnknownBuilder(builder.to_string()))?;
    if tuple.len() != b.dimension {
        return Err(DefSetError::ArityMismatch {
            builder: builder.to_string(),
            expected: b.dimension,
            got: tuple.len(),
        });
    }
    let t = type_of(tuple, ctx);
    if b.guard.eval_under_type(&t)? {
        Ok(Some(Orbit {
            builder: builder.to_string(),
            otype: t,
        }))
    } else {
        Ok(None)
    }
}

/// All tuples over `pool` whose type matches the orbit, in lexicographic
/// order of the sorted pool.
pub fn sample(
    ds: &DefinableSet,
    orbit: &Orbit,
    pool: &[Atom],
    ctx: &ParameterContext,
) -> Result<Vec<Vec<Atom>>, DefSetError> {
    let b = ds
        .builder(&orbit.builder)
        .ok_or_else(|| DefSetError::UnknownBuilder(orbit.builder.clone()))?;
    let mut sorted: Vec<Atom> = pool.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut out = Vec::new();
    for tuple in tuples_over(&sorted, b.dimension) {
        if type_of(&tuple, ctx) == orbit.otype {
            out.push(tuple);
        }
    }
    Ok(out)
}

/// All length-`dim` tuples over `pool` in lexicographic order.
pub fn tuples_over(pool: &[Atom], dim: usize) -> Vec<Vec<Atom>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(out.len() * pool.len());
        for t in &out {
            for a in pool {
                let mut t2 = t.clone();
                t2.push(a.clone());
                next.push(t2);
            }
        }
        out = next;
    }
    out
}
