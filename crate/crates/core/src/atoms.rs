//! Atom kernel: exact rational atoms ordered as in (Q, <), finite parameter
//! contexts, and complete order/equality types of tuples.
//!
//! A [`TupleType`] is a weak order on the tuple positions together with the
//! context parameters; it indexes the orbit of a tuple under all
//! order-automorphisms of Q fixing the parameters pointwise.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AtomError {
    #[error("denominator must be nonzero")]
    ZeroDenominator,
    #[error("parameters must be strictly increasing (offending index {0})")]
    ParametersNotIncreasing(usize),
    #[error("position index {index} out of range for arity {arity}")]
    PositionOutOfRange { index: usize, arity: usize },
}

/// An atom of the structure (Q, <): an exact rational, always in lowest terms.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom(BigRational);

impl Atom {
    pub fn from_int(n: i64) -> Self {
        Atom(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn new(numer: i64, denom: i64) -> Result<Self, AtomError> {
        if denom == 0 {
            return Err(AtomError::ZeroDenominator);
        }
        Ok(Atom(BigRational::new(BigInt::from(numer), BigInt::from(denom))))
    }

    pub fn from_rational(r: BigRational) -> Self {
        Atom(r)
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    /// Parses "3", "-3" or "3/2".
    pub fn parse(text: &str) -> Option<Self> {
        let (numer, denom) = match text.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (text.trim(), "1"),
        };
        let n: BigInt = numer.parse().ok()?;
        let d: BigInt = denom.parse().ok()?;
        if d.is_zero() {
            return None;
        }
        Some(Atom(BigRational::new(n, d)))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else if self.0.denom().is_negative() {
            // num-rational keeps the denominator positive; defensive only.
            write!(f, "{}/{}", -self.0.numer(), -self.0.denom())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// The instance support: a strictly increasing finite sequence of atoms.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct ParameterContext {
    params: Vec<Atom>,
}

impl ParameterContext {
    pub fn empty() -> Self {
        ParameterContext { params: Vec::new() }
    }

    pub fn new(params: Vec<Atom>) -> Result<Self, AtomError> {
        for i in 1..params.len() {
            if params[i - 1] >= params[i] {
                return Err(AtomError::ParametersNotIncreasing(i));
            }
        }
        Ok(ParameterContext { params })
    }

    /// Builds a context from an arbitrary collection, sorting and deduplicating.
    pub fn from_atoms<I: IntoIterator<Item = Atom>>(atoms: I) -> Self {
        let set: BTreeSet<Atom> = atoms.into_iter().collect();
        ParameterContext {
            params: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[Atom] {
        &self.params
    }

    pub fn get(&self, index: usize) -> Option<&Atom> {
        self.params.get(index)
    }
}

/// One cell of a weak order: a block of mutually equal items. Holds at most
/// one parameter (parameters are pairwise distinct) and any set of positions.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Cell {
    pub param: Option<usize>,
    pub positions: BTreeSet<usize>,
}

/// A complete order/equality type of an atom tuple relative to a parameter
/// context. Cells are listed in strictly increasing value order; equality of
/// two types is equality of orbits.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TupleType {
    arity: usize,
    num_params: usize,
    cells: Vec<Cell>,
}

impl TupleType {
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Index of the cell holding position `pos`.
    pub fn rank_of_position(&self, pos: usize) -> Result<usize, AtomError> {
        self.cells
            .iter()
            .position(|c| c.positions.contains(&pos))
            .ok_or(AtomError::PositionOutOfRange {
                index: pos,
                arity: self.arity,
            })
    }

    /// Index of the cell holding parameter `param`.
    pub fn rank_of_param(&self, param: usize) -> Option<usize> {
        self.cells.iter().position(|c| c.param == Some(param))
    }

    /// The type of the sub-tuple selected by `positions`; entry `j` of the
    /// result corresponds to position `positions[j]` of `self`.
    pub fn restrict(&self, positions: &[usize]) -> Result<TupleType, AtomError> {
        for &p in positions {
            if p >= self.arity {
                return Err(AtomError::PositionOutOfRange {
                    index: p,
                    arity: self.arity,
                });
            }
        }
        let mut cells = Vec::new();
        for cell in &self.cells {
            let selected: BTreeSet<usize> = positions
                .iter()
                .enumerate()
                .filter(|(_, old)| cell.positions.contains(old))
                .map(|(new, _)| new)
                .collect();
            if cell.param.is_some() || !selected.is_empty() {
                cells.push(Cell {
                    param: cell.param,
                    positions: selected,
                });
            }
        }
        Ok(TupleType {
            arity: positions.len(),
            num_params: self.num_params,
            cells,
        })
    }
}

impl fmt::Display for TupleType {
    /// Canonical text form, e.g. `p1 < #1 = p2 < p3`: positions are `pN`
    /// (1-based), parameters `#K` (1-based), `=` joins one cell, `<` separates
    /// cells in increasing order. The empty type prints as `()`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.cells.is_empty() {
            return write!(f, "()");
        }
        let mut first_cell = true;
        for cell in &self.cells {
            if !first_cell {
                write!(f, " < ")?;
            }
            first_cell = false;
            let mut first_item = true;
            if let Some(p) = cell.param {
                write!(f, "#{}", p + 1)?;
                first_item = false;
            }
            for pos in &cell.positions {
                if !first_item {
                    write!(f, " = ")?;
                }
                write!(f, "p{}", pos + 1)?;
                first_item = false;
            }
        }
        Ok(())
    }
}

/// Enumerates every weak order of `arity` positions together with the
/// parameters of `ctx` (whose relative order is fixed), each exactly once, in
/// canonical (sorted) order.
pub fn enumerate_types(arity: usize, ctx: &ParameterContext) -> Vec<TupleType> {
    let k = ctx.len();
    let base: Vec<Cell> = (0..k)
        .map(|p| Cell {
            param: Some(p),
            positions: BTreeSet::new(),
        })
        .collect();
    let mut configs = vec![base];
    for pos in 0..arity {
        let mut next = Vec::new();
        for cfg in &configs {
            for i in 0..cfg.len() {
                let mut c = cfg.clone();
                c[i].positions.insert(pos);
                next.push(c);
            }
            for i in 0..=cfg.len() {
                let mut c = cfg.clone();
                c.insert(
                    i,
                    Cell {
                        param: None,
                        positions: BTreeSet::from([pos]),
                    },
                );
                next.push(c);
            }
        }
        configs = next;
    }
    let mut out: Vec<TupleType> = configs
        .into_iter()
        .map(|cells| TupleType {
            arity,
            num_params: k,
            cells,
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

/// The canonical type of a ground tuple relative to `ctx`. Constant on
/// orbits: any order-automorphism of Q fixing `ctx` pointwise maps a tuple to
/// one of the same type.
pub fn type_of(tuple: &[Atom], ctx: &ParameterContext) -> TupleType {
    #[derive(PartialEq, Eq, PartialOrd, Ord)]
    enum Item {
        Param(usize),
        Pos(usize),
    }
    let mut items: Vec<(&Atom, Item)> = Vec::with_capacity(tuple.len() + ctx.len());
    for (i, a) in tuple.iter().enumerate() {
        items.push((a, Item::Pos(i)));
    }
    for (j, a) in ctx.params().iter().enumerate() {
        items.push((a, Item::Param(j)));
    }
    items.sort_by(|x, y| x.0.cmp(y.0).then_with(|| x.1.cmp(&y.1)));
    let mut cells: Vec<Cell> = Vec::new();
    let mut current_value: Option<&Atom> = None;
    for (a, item) in items {
        if current_value != Some(a) {
            cells.push(Cell {
                param: None,
                positions: BTreeSet::new(),
            });
            current_value = Some(a);
        }
        let cell = cells.last_mut().unwrap();
        match item {
            Item::Param(j) => cell.param = Some(j),
            Item::Pos(i) => {
                cell.positions.insert(i);
            }
        }
    }
    TupleType {
        arity: tuple.len(),
        num_params: ctx.len(),
        cells,
    }
}

/// A deterministic ground representative of a type: parameter cells take the
/// parameter value, free runs between anchors take rational midpoints, free
/// runs outside the anchors take unit offsets.
pub fn representative(t: &TupleType, ctx: &ParameterContext) -> Vec<Atom> {
    let n_cells = t.cells.len();
    let mut values: Vec<Option<BigRational>> = vec![None; n_cells];
    for (i, cell) in t.cells.iter().enumerate() {
        if let Some(p) = cell.param {
            values[i] = Some(ctx.get(p).expect("parameter index in range").as_rational().clone());
        }
    }
    let anchors: Vec<usize> = (0..n_cells).filter(|&i| values[i].is_some()).collect();
    if anchors.is_empty() {
        for (i, v) in values.iter_mut().enumerate() {
            *v = Some(BigRational::from_integer(BigInt::from(i as i64)));
        }
    } else {
        let first = anchors[0];
        for i in 0..first {
            let a = values[first].clone().unwrap();
            values[i] = Some(a - BigRational::from_integer(BigInt::from((first - i) as i64)));
        }
        let last = *anchors.last().unwrap();
        for i in last + 1..n_cells {
            let a = values[last].clone().unwrap();
            values[i] = Some(a + BigRational::from_integer(BigInt::from((i - last) as i64)));
        }
        for w in anchors.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let a = values[lo].clone().unwrap();
            let b = values[hi].clone().unwrap();
            let m = (hi - lo) as i64; // gap length m-1 free cells plus hi itself
            for (step, i) in (lo + 1..hi).enumerate() {
                let frac = BigRational::new(BigInt::from(step as i64 + 1), BigInt::from(m));
                values[i] = Some(a.clone() + (b.clone() - a.clone()) * frac);
            }
        }
    }
    let mut tuple = vec![Atom::from_int(0); t.arity];
    for (i, cell) in t.cells.iter().enumerate() {
        for &pos in &cell.positions {
            tuple[pos] = Atom::from_rational(values[i].clone().unwrap());
        }
    }
    tuple
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(ns: &[i64]) -> Vec<Atom> {
        ns.iter().map(|&n| Atom::from_int(n)).collect()
    }

    #[test]
    fn parse_display_round_trip() {
        for text in ["0", "3", "-3", "3/2", "-7/3"] {
            let a = Atom::parse(text).unwrap();
            assert_eq!(a.to_string(), text);
        }
        assert_eq!(Atom::parse("4/6").unwrap().to_string(), "2/3");
        assert!(Atom::parse("1/0").is_none());
        assert!(Atom::parse("x").is_none());
    }

    #[test]
    fn context_requires_strictly_increasing() {
        assert!(ParameterContext::new(ints(&[1, 2, 5])).is_ok());
        assert_eq!(
            ParameterContext::new(ints(&[1, 1])),
            Err(AtomError::ParametersNotIncreasing(1))
        );
        assert_eq!(
            ParameterContext::new(ints(&[2, 1])),
            Err(AtomError::ParametersNotIncreasing(1))
        );
        let c = ParameterContext::from_atoms(ints(&[3, 1, 3, 2]));
        assert_eq!(c.params(), &ints(&[1, 2, 3])[..]);
    }

    /// Independent weak-order enumerator: distinct types realized by tuples
    /// over n distinct atoms (every weak order on n positions is realizable
    /// with at most n values).
    fn weak_orders_by_enumeration(n: usize) -> usize {
        let ctx = ParameterContext::empty();
        let pool: Vec<Atom> = (1..=n as i64).map(Atom::from_int).collect();
        let mut tuples = vec![Vec::new()];
        for _ in 0..n {
            let mut next = Vec::new();
            for t in &tuples {
                for a in &pool {
                    let mut t2 = t.clone();
                    t2.push(a.clone());
                    next.push(t2);
                }
            }
            tuples = next;
        }
        let types: BTreeSet<TupleType> = tuples.iter().map(|t| type_of(t, &ctx)).collect();
        types.len()
    }

    #[test]
    fn ordered_bell_counts() {
        let expected = [1usize, 1, 3, 13, 75];
        let ctx = ParameterContext::empty();
        for (n, &want) in expected.iter().enumerate() {
            assert_eq!(enumerate_types(n, &ctx).len(), want, "arity {n}");
            if n > 0 {
                assert_eq!(weak_orders_by_enumeration(n), want, "oracle arity {n}");
            }
        }
    }

    #[test]
    fn enumeration_with_params_counts() {
        // arity 1, one parameter: below, equal, above
        let ctx = ParameterContext::new(ints(&[0])).unwrap();
        assert_eq!(enumerate_types(1, &ctx).len(), 3);
        // arity 0: only the parameter chain itself
        assert_eq!(enumerate_types(0, &ctx).len(), 1);
        // arity 1, two parameters: 5 slots
        let ctx2 = ParameterContext::new(ints(&[0, 10])).unwrap();
        assert_eq!(enumerate_types(1, &ctx2).len(), 5);
    }

    #[test]
    fn types_partition_all_tuples() {
        let ctx = ParameterContext::new(ints(&[2])).unwrap();
        let pool = ints(&[1, 2, 3, 4, 5]);
        for arity in 0..=3usize {
            let all = enumerate_types(arity, &ctx);
            let mut tuples = vec![Vec::new()];
            for _ in 0..arity {
                let mut next = Vec::new();
                for t in &tuples {
                    for a in &pool {
                        let mut t2 = t.clone();
                        t2.push(a.clone());
                        next.push(t2);
                    }
                }
                tuples = next;
            }
            for t in &tuples {
                let ty = type_of(t, &ctx);
                assert_eq!(
                    all.iter().filter(|&u| *u == ty).count(),
                    1,
                    "tuple {t:?} arity {arity}"
                );
            }
        }
    }

    #[test]
    fn restriction_commutes_with_type_of() {
        let ctx = ParameterContext::new(ints(&[2])).unwrap();
        let tuple = ints(&[3, 1, 2, 3]);
        let full = type_of(&tuple, &ctx);
        for positions in [vec![], vec![0], vec![2, 0], vec![3, 0, 1], vec![1, 1]] {
            let sub: Vec<Atom> = positions.iter().map(|&p| tuple[p].clone()).collect();
            assert_eq!(
                full.restrict(&positions).unwrap(),
                type_of(&sub, &ctx),
                "positions {positions:?}"
            );
        }
        assert!(full.restrict(&[4]).is_err());
    }

    #[test]
    fn representative_round_trip() {
        for ctx in [
            ParameterContext::empty(),
            ParameterContext::new(ints(&[1, 3])).unwrap(),
        ] {
            for arity in 0..=3usize {
                for t in enumerate_types(arity, &ctx) {
                    let tuple = representative(&t, &ctx);
                    assert_eq!(type_of(&tuple, &ctx), t, "type {t}");
                }
            }
        }
    }

    #[test]
    fn type_display_canonical() {
        let ctx = ParameterContext::new(ints(&[3])).unwrap();
        let t = type_of(&ints(&[2, 1, 2]), &ctx);
        assert_eq!(t.to_string(), "p2 < p1 = p3 < #1");
        let empty = type_of(&[], &ParameterContext::empty());
        assert_eq!(empty.to_string(), "()");
    }
}
