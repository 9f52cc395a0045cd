//! Finite-memory register machines over equality atoms and their compilation
//! into definable configuration graphs.
//!
//! A configuration is a control state plus a partial register valuation; the
//! compiled graph has one builder per (state, defined-register pattern) and
//! quantifier-free edge formulas obtained by case-splitting the input atom's
//! equality type against the current registers.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::atoms::{Atom, ParameterContext};
use crate::defsets::{tuples_over, DefinableSet, SetBuilder};
use crate::formulas::{CmpOp, Formula, Operand};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MachineError {
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("duplicate register `{0}`")]
    DuplicateRegister(String),
    #[error("transition {0}: unknown state `{1}`")]
    UnknownState(usize, String),
    #[error("transition {0}: unknown register `{1}`")]
    UnknownRegister(usize, String),
    #[error("transition {0}: register `{1}` assigned twice")]
    DuplicateAssignment(usize, String),
}

/// A comparison of the input atom against one register.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegLiteral {
    pub register: String,
    /// true for `x = R`, false for `x != R`
    pub equal: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AssignRhs {
    /// register := input atom
    Input,
    /// register := erased (a value outside the input alphabet)
    Erase,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub from: String,
    pub to: String,
    /// Conjunction of input-vs-register literals; empty means TRUE.
    pub guard: Vec<RegLiteral>,
    pub assigns: Vec<(String, AssignRhs)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterMachine {
    pub name: String,
    pub states: Vec<String>,
    pub registers: Vec<String>,
    pub transitions: Vec<Transition>,
}

impl RegisterMachine {
    pub fn validate(&self) -> Result<(), MachineError> {
        let mut seen = BTreeSet::new();
        for s in &self.states {
            if !seen.insert(s) {
                return Err(MachineError::DuplicateState(s.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for r in &self.registers {
            if !seen.insert(r) {
                return Err(MachineError::DuplicateRegister(r.clone()));
            }
        }
        for (i, t) in self.transitions.iter().enumerate() {
            for s in [&t.from, &t.to] {
                if !self.states.contains(s) {
                    return Err(MachineError::UnknownState(i, s.clone()));
                }
            }
            for lit in &t.guard {
                if !self.registers.contains(&lit.register) {
                    return Err(MachineError::UnknownRegister(i, lit.register.clone()));
                }
            }
            let mut assigned = BTreeSet::new();
            for (r, _) in &t.assigns {
                if !self.registers.contains(r) {
                    return Err(MachineError::UnknownRegister(i, r.clone()));
                }
                if !assigned.insert(r) {
                    return Err(MachineError::DuplicateAssignment(i, r.clone()));
                }
            }
        }
        Ok(())
    }
}

/// One builder of the compiled graph: a control state with a fixed pattern
/// of defined registers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigBuilder {
    pub builder: String,
    pub state: String,
    /// per declared register: is it defined in this pattern?
    pub pattern: Vec<bool>,
}

/// A definable edge family between two configuration builders.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeFamily {
    pub pre: String,
    pub post: String,
    /// over the concatenation (pre tuple, post tuple)
    pub guard: Formula,
}

/// The compiled configuration graph of a register machine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigurationGraph {
    pub machine: String,
    pub vertices: DefinableSet,
    pub builders: Vec<ConfigBuilder>,
    pub edges: Vec<EdgeFamily>,
}

fn builder_name(machine: &str, state: &str, registers: &[String], pattern: &[bool]) -> String {
    let mut name = format!("{machine}_{state}");
    for (r, &defined) in registers.iter().zip(pattern) {
        if defined {
            name.push('_');
            name.push_str(r);
        }
    }
    name
}

/// Tuple position of each defined register (declaration order), or None.
fn positions(pattern: &[bool]) -> Vec<Option<usize>> {
    let mut next = 0;
    pattern
        .iter()
        .map(|&defined| {
            if defined {
                next += 1;
                Some(next - 1)
            } else {
                None
            }
        })
        .collect()
}

/// The input atom's equality type relative to the pre configuration: equal
/// to the value at one pre tuple position, or fresh (distinct from all).
#[derive(Clone, Copy)]
enum InputCase {
    EqualsPre(usize),
    Fresh,
}

/// Compiles the machine into its definable configuration graph. An edge
/// exists between two configurations when some input atom triggers a
/// transition between them; the input is eliminated by case analysis.
pub fn compile(m: &RegisterMachine) -> Result<ConfigurationGraph, MachineError> {
    m.validate()?;
    let nregs = m.registers.len();
    let mut builders = Vec::new();
    for state in &m.states {
        for mask in 0..(1usize << nregs) {
            let pattern: Vec<bool> = (0..nregs).map(|i| mask & (1 << i) != 0).collect();
            builders.push(ConfigBuilder {
                builder: builder_name(&m.name, state, &m.registers, &pattern),
                state: state.clone(),
                pattern,
            });
        }
    }

    let mut edge_formulas: BTreeMap<(String, String), Vec<Formula>> = BTreeMap::new();
    for t in &m.transitions {
        for pre in builders.iter().filter(|b| b.state == t.from) {
            let pre_pos = positions(&pre.pattern);
            let pre_dim: usize = pre.pattern.iter().filter(|&&d| d).count();

            // Target pattern: assigned-input registers become defined,
            // erased ones undefined, the rest carry over.
            let mut post_pattern = pre.pattern.clone();
            for (r, rhs) in &t.assigns {
                let ri = m.registers.iter().position(|x| x == r).unwrap();
                post_pattern[ri] = matches!(rhs, AssignRhs::Input);
            }
            let post = builders
                .iter()
                .find(|b| b.state == t.to && b.pattern == post_pattern)
                .unwrap();
            let post_pos = positions(&post.pattern);

            let mut cases: Vec<InputCase> = (0..pre_dim).map(InputCase::EqualsPre).collect();
            cases.push(InputCase::Fresh);

            'case_loop: for case in cases {
                let mut conjuncts: Vec<Formula> = Vec::new();
                // guard literals under this input case
                for lit in &t.guard {
                    let ri = m.registers.iter().position(|x| x == &lit.register).unwrap();
                    match (pre_pos[ri], case) {
                        (Some(q), InputCase::EqualsPre(p)) => {
                            let op = if lit.equal { CmpOp::Eq } else { CmpOp::Ne };
                            conjuncts.push(Formula::cmp(Operand::Pos(q), op, Operand::Pos(p)));
                        }
                        // erased register never equals an input atom;
                        // a fresh input differs from every defined register
                        (None, _) | (Some(_), InputCase::Fresh) => {
                            if lit.equal {
                                continue 'case_loop;
                            }
                        }
                    }
                }
                // post-configuration constraints
                let mut stored: Vec<usize> = Vec::new(); // post positions holding the input
                for ri in 0..nregs {
                    let Some(qpost) = post_pos[ri] else { continue };
                    let assigned = t.assigns.iter().find(|(r, _)| r == &m.registers[ri]);
                    match assigned {
                        Some((_, AssignRhs::Input)) => stored.push(pre_dim + qpost),
                        Some((_, AssignRhs::Erase)) => unreachable!("erased is undefined"),
                        None => {
                            // carried register keeps its value
                            let qpre = pre_pos[ri].expect("defined in both patterns");
                            conjuncts.push(Formula::cmp(
                                Operand::Pos(pre_dim + qpost),
                                CmpOp::Eq,
                                Operand::Pos(qpre),
                            ));
                        }
                    }
                }
                match case {
                    InputCase::EqualsPre(p) => {
                        for &s in &stored {
                            conjuncts.push(Formula::cmp(Operand::Pos(s), CmpOp::Eq, Operand::Pos(p)));
                        }
                    }
                    InputCase::Fresh => {
                        for &s in &stored {
                            for q in 0..pre_dim {
                                conjuncts.push(Formula::cmp(
                                    Operand::Pos(s),
                                    CmpOp::Ne,
                                    Operand::Pos(q),
                                ));
                            }
                        }
                        for w in stored.windows(2) {
                            conjuncts.push(Formula::cmp(
                                Operand::Pos(w[0]),
                                CmpOp::Eq,
                                Operand::Pos(w[1]),
                            ));
                        }
                    }
                }
                edge_formulas
                    .entry((pre.builder.clone(), post.builder.clone()))
                    .or_default()
                    .push(Formula::and_all(conjuncts));
            }
        }
    }

    let vertices = DefinableSet {
        builders: builders
            .iter()
            .map(|b| SetBuilder {
                name: b.builder.clone(),
                dimension: b.pattern.iter().filter(|&&d| d).count(),
                guard: Formula::True,
            })
            .collect(),
    };
    let edges = edge_formulas
        .into_iter()
        .map(|((pre, post), fs)| EdgeFamily {
            pre,
            post,
            guard: Formula::or_all(fs),
        })
        .collect();
    Ok(ConfigurationGraph {
        machine: m.name.clone(),
        vertices,
        builders,
        edges,
    })
}

/// An explicit finite configuration graph in canonical form: vertices sorted
/// by (state, register valuation), edges as index pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimGraph {
    pub vertices: Vec<(String, Vec<Option<Atom>>)>,
    pub edges: BTreeSet<(usize, usize)>,
}

fn canonical_graph(
    mut raw: Vec<(String, Vec<Option<Atom>>)>,
    raw_edges: Vec<((String, Vec<Option<Atom>>), (String, Vec<Option<Atom>>))>,
) -> SimGraph {
    raw.sort();
    raw.dedup();
    let index: BTreeMap<&(String, Vec<Option<Atom>>), usize> = raw.iter().zip(0..).collect();
    let edges = raw_edges
        .iter()
        .map(|(a, b)| (index[a], index[b]))
        .collect();
    SimGraph {
        vertices: raw.clone(),
        edges,
    }
}

impl ConfigurationGraph {
    fn config_of(&self, builder: &ConfigBuilder, tuple: &[Atom]) -> (String, Vec<Option<Atom>>) {
        let pos = positions(&builder.pattern);
        let values = pos
            .iter()
            .map(|p| p.map(|q| tuple[q].clone()))
            .collect();
        (builder.state.clone(), values)
    }

    /// Grounds the compiled graph over a finite pool, in the same canonical
    /// labeling as [`simulate_ground`].
    pub fn ground(&self, pool: &[Atom]) -> SimGraph {
        let ctx = ParameterContext::empty();
        let mut sorted: Vec<Atom> = pool.to_vec();
        sorted.sort();
        sorted.dedup();
        let mut raw = Vec::new();
        let mut tuples: BTreeMap<String, Vec<Vec<Atom>>> = BTreeMap::new();
        for b in &self.builders {
            let dim = b.pattern.iter().filter(|&&d| d).count();
            let ts = tuples_over(&sorted, dim);
            for t in &ts {
                raw.push(self.config_of(b, t));
            }
            tuples.insert(b.builder.clone(), ts);
        }
        let mut raw_edges = Vec::new();
        for e in &self.edges {
            let pre_b = self.builders.iter().find(|b| b.builder == e.pre).unwrap();
            let post_b = self.builders.iter().find(|b| b.builder == e.post).unwrap();
            for pre_t in &tuples[&e.pre] {
                for post_t in &tuples[&e.post] {
                    let mut concat = pre_t.clone();
                    concat.extend(post_t.iter().cloned());
                    if e.guard.eval_ground(&concat, &ctx) == Ok(true) {
                        raw_edges.push((self.config_of(pre_b, pre_t), self.config_of(post_b, post_t)));
                    }
                }
            }
        }
        canonical_graph(raw, raw_edges)
    }
}

/// Independent oracle: the explicit configuration graph over register
/// valuations drawn from `pool`. Inputs range over `pool` plus one fresh
/// atom outside it, realizing the infinite input alphabet; successors whose
/// registers leave the pool are dropped (they are not vertices).
pub fn simulate_ground(m: &RegisterMachine, pool: &[Atom]) -> Result<SimGraph, MachineError> {
    m.validate()?;
    let mut sorted: Vec<Atom> = pool.to_vec();
    sorted.sort();
    sorted.dedup();
    let fresh = {
        let mut n = 1i64;
        while sorted.contains(&Atom::from_int(n)) {
            n += 1;
        }
        Atom::from_int(n)
    };
    let mut inputs = sorted.clone();
    inputs.push(fresh);

    // all register valuations: each register None or a pool atom
    let mut valuations: Vec<Vec<Option<Atom>>> = vec![Vec::new()];
    for _ in &m.registers {
        let mut next = Vec::new();
        for v in &valuations {
            let mut v2 = v.clone();
            v2.push(None);
            next.push(v2);
            for a in &sorted {
                let mut v2 = v.clone();
                v2.push(Some(a.clone()));
                next.push(v2);
            }
        }
        valuations = next;
    }

    let mut raw = Vec::new();
    for state in &m.states {
        for v in &valuations {
            raw.push((state.clone(), v.clone()));
        }
    }

    let mut raw_edges = Vec::new();
    for (state, vals) in &raw.clone() {
        for t in m.transitions.iter().filter(|t| &t.from == state) {
            for x in &inputs {
                let guard_ok = t.guard.iter().all(|lit| {
                    let ri = m.registers.iter().position(|r| r == &lit.register).unwrap();
                    match &vals[ri] {
                        Some(v) => (v == x) == lit.equal,
                        None => !lit.equal,
                    }
                });
                if !guard_ok {
                    continue;
                }
                let mut succ = vals.clone();
                for (r, rhs) in &t.assigns {
                    let ri = m.registers.iter().position(|x| x == r).unwrap();
                    succ[ri] = match rhs {
                        AssignRhs::Input => Some(x.clone()),
                        AssignRhs::Erase => None,
                    };
                }
                if succ
                    .iter()
                    .flatten()
                    .all(|a| sorted.contains(a))
                {
                    raw_edges.push(((state.clone(), vals.clone()), (t.to.clone(), succ)));
                }
            }
        }
    }
    Ok(canonical_graph(raw, raw_edges))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn ints(ns: &[i64]) -> Vec<Atom> {
        ns.iter().map(|&n| Atom::from_int(n)).collect()
    }

    /// Two states, no registers, one loop edge each way.
    pub(crate) fn toggle_machine() -> RegisterMachine {
        RegisterMachine {
            name: "toggle".into(),
            states: vec!["Off".into(), "On".into()],
            registers: vec![],
            transitions: vec![
                Transition {
                    from: "Off".into(),
                    to: "On".into(),
                    guard: vec![],
                    assigns: vec![],
                },
                Transition {
                    from: "On".into(),
                    to: "Off".into(),
                    guard: vec![],
                    assigns: vec![],
                },
            ],
        }
    }

    /// One register: store the first input, loop while inputs repeat it,
    /// reset on a mismatch.
    pub(crate) fn latch_machine() -> RegisterMachine {
        RegisterMachine {
            name: "latch".into(),
            states: vec!["Wait".into(), "Hold".into()],
            registers: vec!["R".into()],
            transitions: vec![
                Transition {
                    from: "Wait".into(),
                    to: "Hold".into(),
                    guard: vec![],
                    assigns: vec![("R".into(), AssignRhs::Input)],
                },
                Transition {
                    from: "Hold".into(),
                    to: "Hold".into(),
                    guard: vec![RegLiteral {
                        register: "R".into(),
                        equal: true,
                    }],
                    assigns: vec![],
                },
                Transition {
                    from: "Hold".into(),
                    to: "Wait".into(),
                    guard: vec![RegLiteral {
                        register: "R".into(),
                        equal: false,
                    }],
                    assigns: vec![("R".into(), AssignRhs::Erase)],
                },
            ],
        }
    }

    #[test]
    fn validation_errors() {
        let mut m = toggle_machine();
        m.states.push("Off".into());
        assert_eq!(m.validate(), Err(MachineError::DuplicateState("Off".into())));
        let mut m = toggle_machine();
        m.transitions[0].to = "Nowhere".into();
        assert_eq!(
            m.validate(),
            Err(MachineError::UnknownState(0, "Nowhere".into()))
        );
        let mut m = latch_machine();
        m.transitions[0]
            .assigns
            .push(("R".into(), AssignRhs::Erase));
        assert_eq!(
            m.validate(),
            Err(MachineError::DuplicateAssignment(0, "R".into()))
        );
    }

    #[test]
    fn zero_register_machine_graph_is_the_state_diagram() {
        let m = toggle_machine();
        let graph = compile(&m).unwrap();
        assert_eq!(graph.builders.len(), 2);
        let g = graph.ground(&[]);
        assert_eq!(
            g.vertices,
            vec![("Off".to_string(), vec![]), ("On".to_string(), vec![])]
        );
        assert_eq!(g.edges, BTreeSet::from([(0, 1), (1, 0)]));
    }

    #[test]
    fn compiled_guards_are_well_scoped() {
        for m in [toggle_machine(), latch_machine()] {
            let graph = compile(&m).unwrap();
            let ctx = ParameterContext::empty();
            for e in &graph.edges {
                let pre = graph.vertices.builder(&e.pre).unwrap();
                let post = graph.vertices.builder(&e.post).unwrap();
                assert!(e
                    .guard
                    .check_scope(pre.dimension + post.dimension, ctx.len())
                    .is_ok());
            }
        }
    }

    #[test]
    fn compiled_grounding_matches_simulation() {
        for m in [toggle_machine(), latch_machine()] {
            let graph = compile(&m).unwrap();
            for pool in [ints(&[]), ints(&[1]), ints(&[1, 2]), ints(&[1, 2, 3])] {
                assert_eq!(
                    graph.ground(&pool),
                    simulate_ground(&m, &pool).unwrap(),
                    "machine {} pool {pool:?}",
                    m.name
                );
            }
        }
    }

    #[test]
    fn latch_edges_concrete() {
        let m = latch_machine();
        let g = simulate_ground(&m, &ints(&[1, 2])).unwrap();
        let idx = |state: &str, val: Option<i64>| {
            let v = val.map(Atom::from_int);
            g.vertices
                .iter()
                .position(|(s, t)| s == state && t[0] == v)
                .unwrap()
        };
        // storing: Wait(r) -> Hold(x) for any input x in the pool
        assert!(g.edges.contains(&(idx("Wait", None), idx("Hold", Some(1)))));
        assert!(g.edges.contains(&(idx("Wait", Some(2)), idx("Hold", Some(1)))));
        // matching input loops
        assert!(g.edges.contains(&(idx("Hold", Some(1)), idx("Hold", Some(1)))));
        // mismatching input resets and erases
        assert!(g.edges.contains(&(idx("Hold", Some(1)), idx("Wait", None))));
        // no spontaneous register change while holding
        assert!(!g.edges.contains(&(idx("Hold", Some(1)), idx("Hold", Some(2)))));
    }
}
