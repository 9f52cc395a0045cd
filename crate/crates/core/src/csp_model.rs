//! The CSP data model: a relational signature, a finite explicit domain
//! structure, a definable variable set, definable constraint families, and
//! grounding to finite subinstances.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::atoms::{Atom, ParameterContext};
use crate::defsets::{tuples_over, DefinableSet};
use crate::formulas::Formula;

/// Relation names with arities.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Signature {
    pub relations: Vec<(String, usize)>,
}

impl Signature {
    pub fn arity_of(&self, name: &str) -> Option<usize> {
        self.relations
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, k)| *k)
    }
}

/// A finite explicit structure: named elements and, per signature relation,
/// the set of element-index tuples in its interpretation. Carries no atoms.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FiniteDomain {
    pub elements: Vec<String>,
    pub relations: BTreeMap<String, BTreeSet<Vec<usize>>>,
}

impl FiniteDomain {
    pub fn size(&self) -> usize {
        self.elements.len()
    }

    pub fn element_index(&self, name: &str) -> Option<usize> {
        self.elements.iter().position(|e| e == name)
    }

    pub fn holds(&self, relation: &str, tuple: &[usize]) -> bool {
        self.relations
            .get(relation)
            .map(|set| set.contains(tuple))
            .unwrap_or(false)
    }
}

/// A definable family of constraints: a relation imposed on every tuple of
/// scope elements whose concatenated atom tuple satisfies the guard.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintFamily {
    pub relation: String,
    /// Builder names of the scope, in order; the guard is over the
    /// concatenation of the scope tuples.
    pub scope: Vec<String>,
    pub guard: Formula,
}

/// A definable CSP over a finite domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DefinableInstance {
    pub signature: Signature,
    pub domain: FiniteDomain,
    pub variables: DefinableSet,
    pub families: Vec<ConstraintFamily>,
    pub ctx: ParameterContext,
}

/// A finite grounded subinstance: explicit vertices and constraints over an
/// atom pool.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundInstance {
    pub vertices: Vec<(String, Vec<Atom>)>,
    pub constraints: Vec<(String, Vec<usize>)>,
    pub pool: Vec<Atom>,
}

impl DefinableInstance {
    /// Checks all structural invariants; returns one diagnostic per violation.
    pub fn validate(&self) -> Vec<String> {
        let mut diags = Vec::new();
        let mut seen = BTreeSet::new();
        for (name, k) in &self.signature.relations {
            if !seen.insert(name.clone()) {
                diags.push(format!("duplicate relation `{name}` in signature"));
            }
            if *k == 0 {
                diags.push(format!("relation `{name}` has arity 0"));
            }
        }
        let mut elems = BTreeSet::new();
        for e in &self.domain.elements {
            if !elems.insert(e.clone()) {
                diags.push(format!("duplicate domain element `{e}`"));
            }
        }
        for (rel, tuples) in &self.domain.relations {
            match self.signature.arity_of(rel) {
                None => diags.push(format!("domain interprets unknown relation `{rel}`")),
                Some(k) => {
                    for t in tuples {
                        if t.len() != k {
                            diags.push(format!(
                                "relation `{rel}` tuple of length {} (arity {k})",
                                t.len()
                            ));
                        }
                        if t.iter().any(|&e| e >= self.domain.size()) {
                            diags.push(format!("relation `{rel}` tuple references unknown element"));
                        }
                    }
                }
            }
        }
        let mut builder_names = BTreeSet::new();
        for b in &self.variables.builders {
            if !builder_names.insert(b.name.clone()) {
                diags.push(format!("duplicate builder `{}`", b.name));
            }
            if let Err(e) = b.guard.check_scope(b.dimension, self.ctx.len()) {
                diags.push(format!("builder `{}`: {e}", b.name));
            }
        }
        for (i, fam) in self.families.iter().enumerate() {
            match self.signature.arity_of(&fam.relation) {
                None => diags.push(format!(
                    "constraint family {i}: unknown relation `{}`",
                    fam.relation
                )),
                Some(k) => {
                    if k != fam.scope.len() {
                        diags.push(format!(
                            "constraint family {i}: relation `{}` has arity {k} but scope has {} bindings",
                            fam.relation,
                            fam.scope.len()
                        ));
                    }
                }
            }
            let mut concat = 0usize;
            let mut scope_ok = true;
            for bname in &fam.scope {
                match self.variables.builder(bname) {
                    None => {
                        diags.push(format!("constraint family {i}: unknown builder `{bname}`"));
                        scope_ok = false;
                    }
                    Some(b) => concat += b.dimension,
                }
            }
            if scope_ok {
                if let Err(e) = fam.guard.check_scope(concat, self.ctx.len()) {
                    diags.push(format!("constraint family {i}: {e}"));
                }
            }
        }
        diags
    }

    /// Grounds the instance over a finite atom pool: all guard-satisfying
    /// variable tuples become vertices, all guard-satisfying scope
    /// combinations become constraints. Deterministic order.
    pub fn ground(&self, pool: &[Atom]) -> GroundInstance {
        let mut sorted: Vec<Atom> = pool.to_vec();
        sorted.sort();
        sorted.dedup();

        let mut vertices: Vec<(String, Vec<Atom>)> = Vec::new();
        // vertex indices per builder, in vertex order
        let mut by_builder: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for b in &self.variables.builders {
            for tuple in tuples_over(&sorted, b.dimension) {
                if b.guard.eval_ground(&tuple, &self.ctx).unwrap_or(false) {
                    by_builder
                        .entry(b.name.clone())
                        .or_default()
                        .push(vertices.len());
                    vertices.push((b.name.clone(), tuple));
                }
            }
            by_builder.entry(b.name.clone()).or_default();
        }

        let mut constraints: BTreeSet<(String, Vec<usize>)> = BTreeSet::new();
        for fam in &self.families {
            let slots: Vec<&Vec<usize>> = fam
                .scope
                .iter()
                .map(|bname| by_builder.get(bname).expect("validated scope"))
                .collect();
            if slots.iter().any(|s| s.is_empty()) {
                continue;
            }
            let total: usize = slots.iter().map(|s| s.len()).product();
            for combo in 0..total {
                let mut n = combo;
                let mut idxs = vec![0usize; slots.len()];
                for (pos, s) in slots.iter().enumerate().rev() {
                    idxs[pos] = s[n % s.len()];
                    n /= s.len();
                }
                let concat: Vec<Atom> = idxs
                    .iter()
                    .flat_map(|&v| vertices[v].1.iter().cloned())
                    .collect();
                if fam.guard.eval_ground(&concat, &self.ctx).unwrap_or(false) {
                    constraints.insert((fam.relation.clone(), idxs));
                }
            }
        }

        GroundInstance {
            vertices,
            constraints: constraints.into_iter().collect(),
            pool: sorted,
        }
    }

    /// The sorted set of parameter atoms actually occurring in some guard.
    pub fn instance_support(&self) -> ParameterContext {
        let mut used: BTreeSet<usize> = BTreeSet::new();
        for b in &self.variables.builders {
            collect_params(&b.guard, &mut used);
        }
        for fam in &self.families {
            collect_params(&fam.guard, &mut used);
        }
        ParameterContext::from_atoms(
            used.into_iter()
                .filter_map(|k| self.ctx.get(k).cloned()),
        )
    }
}

fn collect_params(f: &Formula, out: &mut BTreeSet<usize>) {
    use crate::formulas::Operand;
    match f {
        Formula::True | Formula::False => {}
        Formula::Cmp(a, _, b) => {
            for o in [a, b] {
                if let Operand::Param(k) = o {
                    out.insert(*k);
                }
            }
        }
        Formula::Not(g) => collect_params(g, out),
        Formula::And(a, b) | Formula::Or(a, b) => {
            collect_params(a, out);
            collect_params(b, out);
        }
    }
}

impl GroundInstance {
    /// DOT rendering: every vertex, plus one arc per binary constraint.
    /// Constraints of other arities are listed as comments.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph grounding {\n");
        for (i, (builder, tuple)) in self.vertices.iter().enumerate() {
            let label: Vec<String> = tuple.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(s, "  v{i} [label=\"{builder}({})\"];", label.join(","));
        }
        for (rel, idxs) in &self.constraints {
            if idxs.len() == 2 {
                let _ = writeln!(s, "  v{} -> v{} [label=\"{rel}\"];", idxs[0], idxs[1]);
            } else {
                let refs: Vec<String> = idxs.iter().map(|v| format!("v{v}")).collect();
                let _ = writeln!(s, "  // {rel}({})", refs.join(","));
            }
        }
        s.push_str("}\n");
        s
    }
}
