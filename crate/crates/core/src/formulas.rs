//! Quantifier-free guard formulas over tuple positions and parameters,
//! evaluated either on a ground tuple or symbolically on a [`TupleType`].

use std::fmt;

use thiserror::Error;

use crate::atoms::{enumerate_types, type_of, Atom, ParameterContext, TupleType};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormulaError {
    #[error("position index {index} out of range for arity {arity}")]
    PositionOutOfRange { index: usize, arity: usize },
    #[error("parameter index {index} out of range ({count} parameters)")]
    ParamOutOfRange { index: usize, count: usize },
}

/// One side of a comparison: a tuple position or a context parameter,
/// both 0-based internally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Operand {
    Pos(usize),
    Param(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn apply(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }

    /// True for the comparators available over pure-equality atoms.
    pub fn is_equality_op(self) -> bool {
        matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Cmp(Operand, CmpOp, Operand),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    /// Conjunction of a list; empty list is TRUE.
    pub fn and_all<I: IntoIterator<Item = Formula>>(fs: I) -> Formula {
        let mut it = fs.into_iter();
        match it.next() {
            None => Formula::True,
            Some(first) => it.fold(first, Formula::and),
        }
    }

    /// Disjunction of a list; empty list is FALSE.
    pub fn or_all<I: IntoIterator<Item = Formula>>(fs: I) -> Formula {
        let mut it = fs.into_iter();
        match it.next() {
            None => Formula::False,
            Some(first) => it.fold(first, Formula::or),
        }
    }

    pub fn cmp(a: Operand, op: CmpOp, b: Operand) -> Formula {
        Formula::Cmp(a, op, b)
    }

    /// Checks that every position is below `arity` and every parameter below
    /// `num_params`.
    pub fn check_scope(&self, arity: usize, num_params: usize) -> Result<(), FormulaError> {
        let check = |o: Operand| match o {
            Operand::Pos(i) if i >= arity => {
                Err(FormulaError::PositionOutOfRange { index: i, arity })
            }
            Operand::Param(k) if k >= num_params => Err(FormulaError::ParamOutOfRange {
                index: k,
                count: num_params,
            }),
            _ => Ok(()),
        };
        match self {
            Formula::True | Formula::False => Ok(()),
            Formula::Cmp(a, _, b) => {
                check(*a)?;
                check(*b)
            }
            Formula::Not(f) => f.check_scope(arity, num_params),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.check_scope(arity, num_params)?;
                b.check_scope(arity, num_params)
            }
        }
    }

    /// Truth value on the orbit `t`: equals the truth value on any (hence
    /// every) ground representative of `t`.
    pub fn eval_under_type(&self, t: &TupleType) -> Result<bool, FormulaError> {
        let rank = |o: Operand| -> Result<usize, FormulaError> {
            match o {
                Operand::Pos(i) => t.rank_of_position(i).map_err(|_| {
                    FormulaError::PositionOutOfRange {
                        index: i,
                        arity: t.arity(),
                    }
                }),
                Operand::Param(k) => t.rank_of_param(k).ok_or(FormulaError::ParamOutOfRange {
                    index: k,
                    count: t.num_params(),
                }),
            }
        };
        match self {
            Formula::True => Ok(true),
            Formula::False => Ok(false),
            Formula::Cmp(a, op, b) => Ok(op.apply(rank(*a)?.cmp(&rank(*b)?))),
            Formula::Not(f) => Ok(!f.eval_under_type(t)?),
            Formula::And(a, b) => Ok(a.eval_under_type(t)? && b.eval_under_type(t)?),
            Formula::Or(a, b) => Ok(a.eval_under_type(t)? || b.eval_under_type(t)?),
        }
    }

    /// Direct ground evaluation; agrees with `eval_under_type` composed with
    /// `type_of` (a tested property).
    pub fn eval_ground(&self, tuple: &[Atom], ctx: &ParameterContext) -> Result<bool, FormulaError> {
        let value = |o: Operand| -> Result<&Atom, FormulaError> {
            match o {
                Operand::Pos(i) => tuple.get(i).ok_or(FormulaError::PositionOutOfRange {
                    index: i,
                    arity: tuple.len(),
                }),
                Operand::Param(k) => ctx.get(k).ok_or(FormulaError::ParamOutOfRange {
                    index: k,
                    count: ctx.len(),
                }),
            }
        };
        match self {
            Formula::True => Ok(true),
            Formula::False => Ok(false),
            Formula::Cmp(a, op, b) => Ok(op.apply(value(*a)?.cmp(value(*b)?))),
            Formula::Not(f) => Ok(!f.eval_ground(tuple, ctx)?),
            Formula::And(a, b) => Ok(a.eval_ground(tuple, ctx)? && b.eval_ground(tuple, ctx)?),
            Formula::Or(a, b) => Ok(a.eval_ground(tuple, ctx)? || b.eval_ground(tuple, ctx)?),
        }
    }
}

/// The orbit decomposition of a guard: exactly the enumerated types on which
/// the formula holds, in canonical order.
pub fn satisfying_types(
    f: &Formula,
    arity: usize,
    ctx: &ParameterContext,
) -> Result<Vec<TupleType>, FormulaError> {
    f.check_scope(arity, ctx.len())?;
    let mut out = Vec::new();
    for t in enumerate_types(arity, ctx) {
        if f.eval_under_type(&t)? {
            out.push(t);
        }
    }
    Ok(out)
}

/// Convenience used by tests and by grounding: ground evaluation through the
/// type route.
pub fn eval_via_type(
    f: &Formula,
    tuple: &[Atom],
    ctx: &ParameterContext,
) -> Result<bool, FormulaError> {
    f.eval_under_type(&type_of(tuple, ctx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(ns: &[i64]) -> Vec<Atom> {
        ns.iter().map(|&n| Atom::from_int(n)).collect()
    }

    fn sample_formulas() -> Vec<Formula> {
        use CmpOp::*;
        use Operand::*;
        vec![
            Formula::True,
            Formula::False,
            Formula::cmp(Pos(0), Lt, Pos(1)),
            Formula::cmp(Pos(0), Eq, Param(0)),
            Formula::not(Formula::cmp(Pos(1), Ge, Param(0))),
            Formula::and(
                Formula::cmp(Pos(0), Ne, Pos(1)),
                Formula::cmp(Pos(1), Le, Param(0)),
            ),
            Formula::or(
                Formula::cmp(Pos(0), Gt, Pos(1)),
                Formula::cmp(Pos(0), Eq, Pos(1)),
            ),
        ]
    }

    #[test]
    fn type_evaluation_matches_ground_evaluation() {
        let ctx = ParameterContext::new(ints(&[2])).unwrap();
        let pool = ints(&[1, 2, 3]);
        for f in sample_formulas() {
            for a in &pool {
                for b in &pool {
                    let tuple = vec![a.clone(), b.clone()];
                    assert_eq!(
                        f.eval_ground(&tuple, &ctx).unwrap(),
                        eval_via_type(&f, &tuple, &ctx).unwrap(),
                        "formula {f:?} on {tuple:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn satisfying_type_counts() {
        let ctx = ParameterContext::empty();
        use CmpOp::*;
        use Operand::*;
        let lt = Formula::cmp(Pos(0), Lt, Pos(1));
        assert_eq!(satisfying_types(&lt, 2, &ctx).unwrap().len(), 1);
        let ne = Formula::cmp(Pos(0), Ne, Pos(1));
        assert_eq!(satisfying_types(&ne, 2, &ctx).unwrap().len(), 2);
        assert_eq!(satisfying_types(&Formula::True, 2, &ctx).unwrap().len(), 3);
        assert_eq!(satisfying_types(&Formula::False, 2, &ctx).unwrap().len(), 0);
    }

    #[test]
    fn scope_checking() {
        use CmpOp::*;
        use Operand::*;
        let f = Formula::cmp(Pos(2), Eq, Param(0));
        assert_eq!(
            f.check_scope(2, 1),
            Err(FormulaError::PositionOutOfRange { index: 2, arity: 2 })
        );
        assert_eq!(
            f.check_scope(3, 0),
            Err(FormulaError::ParamOutOfRange { index: 0, count: 0 })
        );
        assert!(f.check_scope(3, 1).is_ok());
    }

    #[test]
    fn satisfying_types_requires_well_scoped_formula() {
        let ctx = ParameterContext::empty();
        let f = Formula::cmp(Operand::Pos(5), CmpOp::Eq, Operand::Pos(0));
        assert!(satisfying_types(&f, 2, &ctx).is_err());
    }
}
