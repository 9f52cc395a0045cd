//! Finite CSP engine: the T/S/C propositional encoding, a DPLL SAT solver
//! with unit propagation, an exhaustive backtracking oracle, DIMACS export,
//! and the Boolean-algebra prime-ideal construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::csp_model::{FiniteDomain, GroundInstance};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolverError {
    #[error("search budget of {0} explored nodes exceeded")]
    BudgetExceeded(u64),
    #[error("valuation does not select exactly one value for vertex {0}")]
    MalformedValuation(usize),
    #[error("trivial Boolean algebra (0 = 1)")]
    TrivialAlgebra,
    #[error("Boolean algebra law violated: {0}")]
    AlgebraLaw(String),
    #[error("internal: encoded CNF unsatisfiable but instance verified satisfiable")]
    Inconsistent,
}

/// A finite CSP presented explicitly: `num_vertices` variables ranging over
/// the domain elements, plus relational constraints on vertex tuples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteCsp {
    pub num_vertices: usize,
    pub domain: FiniteDomain,
    pub constraints: Vec<(String, Vec<usize>)>,
}

impl FiniteCsp {
    pub fn from_ground(g: &GroundInstance, domain: &FiniteDomain) -> FiniteCsp {
        FiniteCsp {
            num_vertices: g.vertices.len(),
            domain: domain.clone(),
            constraints: g.constraints.clone(),
        }
    }

    /// Does the total assignment (vertex -> element index) satisfy every
    /// constraint?
    pub fn check_assignment(&self, assignment: &[usize]) -> bool {
        if assignment.len() != self.num_vertices {
            return false;
        }
        self.constraints.iter().all(|(rel, idxs)| {
            let tuple: Vec<usize> = idxs.iter().map(|&v| assignment[v]).collect();
            self.domain.holds(rel, &tuple)
        })
    }
}

/// CNF over positive variable indices 1..=num_vars; literals are signed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnfFormula {
    pub num_vars: usize,
    pub clauses: Vec<Vec<i64>>,
}

/// The T/S/C encoding: variables are (vertex, value) pairs; T forces
/// totality (one clause per vertex), S single-valuedness (one clause per
/// vertex and unordered value pair), C excludes every domain tuple violating
/// the constrained relation.
pub fn encode_tsc(csp: &FiniteCsp) -> CnfFormula {
    let d = csp.domain.size();
    let var = |v: usize, val: usize| -> i64 { (v * d + val + 1) as i64 };
    let mut clauses = Vec::new();
    // T: <v,0> v <v,1> v ... v <v,D-1>
    for v in 0..csp.num_vertices {
        clauses.push((0..d).map(|val| var(v, val)).collect());
    }
    // S: !(<v,n> & <v,m>) for unordered pairs n < m
    for v in 0..csp.num_vertices {
        for n in 0..d {
            for m in n + 1..d {
                clauses.push(vec![-var(v, n), -var(v, m)]);
            }
        }
    }
    // C: for each constraint and each violating domain tuple,
    // !(<x1,d1> & ... & <xk,dk>)
    for (rel, idxs) in &csp.constraints {
        let k = idxs.len();
        let total = d.checked_pow(k as u32).expect("domain tuple count overflow");
        for combo in 0..total {
            let mut n = combo;
            let mut tuple = vec![0usize; k];
            for pos in (0..k).rev() {
                tuple[pos] = n % d;
                n /= d;
            }
            if !csp.domain.holds(rel, &tuple) {
                clauses.push(
                    idxs.iter()
                        .zip(&tuple)
                        .map(|(&v, &val)| -var(v, val))
                        .collect(),
                );
            }
        }
    }
    CnfFormula {
        num_vars: csp.num_vertices * d,
        clauses,
    }
}

/// DPLL with unit propagation; branches on the first unassigned variable,
/// trying true before false. Deterministic.
pub fn dpll(cnf: &CnfFormula) -> Option<Vec<bool>> {
    let mut assignment: Vec<Option<bool>> = vec![None; cnf.num_vars];
    if dpll_rec(cnf, &mut assignment) {
        Some(assignment.into_iter().map(|a| a.unwrap_or(false)).collect())
    } else {
        None
    }
}

fn lit_value(assignment: &[Option<bool>], lit: i64) -> Option<bool> {
    let v = (lit.unsigned_abs() as usize) - 1;
    assignment[v].map(|b| if lit > 0 { b } else { !b })
}

/// Unit propagation to fixpoint. Returns false on conflict; records the
/// trail so the caller can undo.
fn propagate(cnf: &CnfFormula, assignment: &mut [Option<bool>], trail: &mut Vec<usize>) -> bool {
    loop {
        let mut changed = false;
        for clause in &cnf.clauses {
            let mut unassigned: Option<i64> = None;
            let mut n_unassigned = 0;
            let mut satisfied = false;
            for &lit in clause {
                match lit_value(assignment, lit) {
                    Some(true) => {
                        satisfied = true;
                        break;
                    }
                    Some(false) => {}
                    None => {
                        n_unassigned += 1;
                        unassigned = Some(lit);
                    }
                }
            }
            if satisfied {
                continue;
            }
            match n_unassigned {
                0 => return false,
                1 => {
                    let lit = unassigned.unwrap();
                    let v = (lit.unsigned_abs() as usize) - 1;
                    assignment[v] = Some(lit > 0);
                    trail.push(v);
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            return true;
        }
    }
}

fn dpll_rec(cnf: &CnfFormula, assignment: &mut Vec<Option<bool>>) -> bool {
    let mut trail = Vec::new();
    if !propagate(cnf, assignment, &mut trail) {
        for v in trail {
            assignment[v] = None;
        }
        return false;
    }
    let branch = assignment.iter().position(|a| a.is_none());
    let result = match branch {
        None => true,
        Some(v) => {
            let mut found = false;
            for value in [true, false] {
                assignment[v] = Some(value);
                if dpll_rec(cnf, assignment) {
                    found = true;
                    break;
                }
                assignment[v] = None;
            }
            found
        }
    };
    if !result {
        for v in trail {
            assignment[v] = None;
        }
    }
    result
}

/// Reads off the homomorphism from a satisfying valuation: T makes it total,
/// S single-valued.
pub fn decode(valuation: &[bool], csp: &FiniteCsp) -> Result<Vec<usize>, SolverError> {
    let d = csp.domain.size();
    let mut out = Vec::with_capacity(csp.num_vertices);
    for v in 0..csp.num_vertices {
        let values: Vec<usize> = (0..d).filter(|val| valuation[v * d + val]).collect();
        if values.len() != 1 {
            return Err(SolverError::MalformedValuation(v));
        }
        out.push(values[0]);
    }
    Ok(out)
}

/// Solves via the T/S/C encoding and DPLL, re-verifying any SAT answer by
/// direct constraint checking before returning it.
pub fn solve(csp: &FiniteCsp) -> Result<Option<Vec<usize>>, SolverError> {
    if csp.domain.size() == 0 {
        return Ok(if csp.num_vertices == 0 {
            Some(Vec::new())
        } else {
            None
        });
    }
    let cnf = encode_tsc(csp);
    match dpll(&cnf) {
        None => Ok(None),
        Some(valuation) => {
            let assignment = decode(&valuation, csp)?;
            if !csp.check_assignment(&assignment) {
                return Err(SolverError::Inconsistent);
            }
            Ok(Some(assignment))
        }
    }
}

/// Independent exhaustive oracle: depth-first search over vertices in order,
/// domain values in declaration order, pruning only on already-violated
/// constraints. `budget` bounds the number of explored nodes.
pub fn brute_force(csp: &FiniteCsp, budget: u64) -> Result<Option<Vec<usize>>, SolverError> {
    brute_force_parts(&csp.domain, csp.num_vertices, &csp.constraints, budget)
}

/// [`brute_force`] on borrowed parts, avoiding a [`FiniteCsp`] construction;
/// useful when many subinstances of one grounding are refuted in a loop.
pub fn brute_force_parts(
    domain: &FiniteDomain,
    num_vertices: usize,
    constraints: &[(String, Vec<usize>)],
    budget: u64,
) -> Result<Option<Vec<usize>>, SolverError> {
    // constraints checkable once vertex v is assigned
    let mut by_last: Vec<Vec<usize>> = vec![Vec::new(); num_vertices];
    for (i, (_, idxs)) in constraints.iter().enumerate() {
        if let Some(&last) = idxs.iter().max() {
            by_last[last].push(i);
        }
    }
    if num_vertices > 0 && domain.size() == 0 {
        return Ok(None);
    }
    struct Search<'a> {
        domain: &'a FiniteDomain,
        num_vertices: usize,
        constraints: &'a [(String, Vec<usize>)],
        by_last: Vec<Vec<usize>>,
        nodes: u64,
        budget: u64,
    }
    impl Search<'_> {
        fn rec(&mut self, assignment: &mut Vec<usize>, depth: usize) -> Result<bool, SolverError> {
            if depth == self.num_vertices {
                return Ok(true);
            }
            for val in 0..self.domain.size() {
                self.nodes += 1;
                if self.nodes > self.budget {
                    return Err(SolverError::BudgetExceeded(self.budget));
                }
                assignment[depth] = val;
                let ok = self.by_last[depth].iter().all(|&ci| {
                    let (rel, idxs) = &self.constraints[ci];
                    let tuple: Vec<usize> = idxs.iter().map(|&v| assignment[v]).collect();
                    self.domain.holds(rel, &tuple)
                });
                if ok && self.rec(assignment, depth + 1)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
    let mut search = Search {
        domain,
        num_vertices,
        constraints,
        by_last,
        nodes: 0,
        budget,
    };
    let mut assignment = vec![0usize; num_vertices];
    if search.rec(&mut assignment, 0)? {
        Ok(Some(assignment))
    } else {
        Ok(None)
    }
}

/// DIMACS CNF serialization with a comment block mapping variable indices to
/// (vertex, value) pairs.
pub fn to_dimacs(cnf: &CnfFormula, g: &GroundInstance, domain: &FiniteDomain) -> String {
    let d = domain.size();
    let mut s = String::new();
    for v in 0..g.vertices.len() {
        for val in 0..d {
            let (builder, tuple) = &g.vertices[v];
            let atoms: Vec<String> = tuple.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(
                s,
                "c var {} = {}({}) := {}",
                v * d + val + 1,
                builder,
                atoms.join(","),
                domain.elements[val]
            );
        }
    }
    let _ = writeln!(s, "p cnf {} {}", cnf.num_vars, cnf.clauses.len());
    for clause in &cnf.clauses {
        let lits: Vec<String> = clause.iter().map(|l| l.to_string()).collect();
        let _ = writeln!(s, "{} 0", lits.join(" "));
    }
    s
}

/// A finite Boolean algebra given by operation tables over element indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BooleanAlgebra {
    pub elements: Vec<String>,
    pub top: usize,
    pub and: Vec<Vec<usize>>,
    pub not: Vec<usize>,
}

impl BooleanAlgebra {
    pub fn bottom(&self) -> usize {
        self.not[self.top]
    }

    /// Checks the algebra laws: the order defined by `a <= b iff a = a & b`
    /// is a partial order with binary meets given by `&` and greatest
    /// element 1; negation is an involution with `a & !a = 0`.
    pub fn check_laws(&self) -> Result<(), SolverError> {
        let n = self.elements.len();
        if self.and.len() != n
            || self.and.iter().any(|row| row.len() != n)
            || self.not.len() != n
            || self.top >= n
        {
            return Err(SolverError::AlgebraLaw("malformed operation tables".into()));
        }
        if self.and.iter().flatten().any(|&x| x >= n) || self.not.iter().any(|&x| x >= n) {
            return Err(SolverError::AlgebraLaw("table entry out of range".into()));
        }
        let leq = |a: usize, b: usize| self.and[a][b] == a;
        for a in 0..n {
            if self.and[a][a] != a {
                return Err(SolverError::AlgebraLaw(format!("meet not idempotent at {a}")));
            }
            if self.not[self.not[a]] != a {
                return Err(SolverError::AlgebraLaw(format!("negation not involutive at {a}")));
            }
            if !leq(a, self.top) {
                return Err(SolverError::AlgebraLaw(format!("{a} not below top")));
            }
            if self.and[a][self.not[a]] != self.bottom() {
                return Err(SolverError::AlgebraLaw(format!("a & !a != 0 at {a}")));
            }
            for b in 0..n {
                if self.and[a][b] != self.and[b][a] {
                    return Err(SolverError::AlgebraLaw(format!(
                        "meet not commutative at ({a},{b})"
                    )));
                }
                if leq(a, b) && leq(b, a) && a != b {
                    return Err(SolverError::AlgebraLaw(format!(
                        "order not antisymmetric at ({a},{b})"
                    )));
                }
                let m = self.and[a][b];
                if !leq(m, a) || !leq(m, b) {
                    return Err(SolverError::AlgebraLaw(format!(
                        "meet not a lower bound at ({a},{b})"
                    )));
                }
                for c in 0..n {
                    if self.and[self.and[a][b]][c] != self.and[a][self.and[b][c]] {
                        return Err(SolverError::AlgebraLaw(format!(
                            "meet not associative at ({a},{b},{c})"
                        )));
                    }
                    if leq(c, a) && leq(c, b) && !leq(c, m) {
                        return Err(SolverError::AlgebraLaw(format!(
                            "meet not greatest lower bound at ({a},{b},{c})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Is `h` (element index -> 0/1) a homomorphism onto the two-element
    /// algebra?
    pub fn is_two_valued_homomorphism(&self, h: &[usize]) -> bool {
        let n = self.elements.len();
        if h.len() != n || h.iter().any(|&b| b > 1) {
            return false;
        }
        if h[self.top] != 1 {
            return false;
        }
        for a in 0..n {
            if h[self.not[a]] != 1 - h[a] {
                return false;
            }
            for b in 0..n {
                if h[self.and[a][b]] != h[a] & h[b] {
                    return false;
                }
            }
        }
        true
    }

    /// The relational presentation of the algebra as a finite CSP over the
    /// two-element domain: unary `top`, ternary `and`, binary `not`.
    pub fn to_csp(&self) -> FiniteCsp {
        let n = self.elements.len();
        let mut relations: BTreeMap<String, BTreeSet<Vec<usize>>> = BTreeMap::new();
        relations.insert("top".into(), BTreeSet::from([vec![1]]));
        let mut and_rel = BTreeSet::new();
        for x in 0..2usize {
            for y in 0..2usize {
                and_rel.insert(vec![x, y, x & y]);
            }
        }
        relations.insert("and".into(), and_rel);
        relations.insert("not".into(), BTreeSet::from([vec![0, 1], vec![1, 0]]));
        let domain = FiniteDomain {
            elements: vec!["0".into(), "1".into()],
            relations,
        };
        let mut constraints = Vec::new();
        constraints.push(("top".to_string(), vec![self.top]));
        for a in 0..n {
            constraints.push(("not".to_string(), vec![a, self.not[a]]));
            for b in 0..n {
                constraints.push(("and".to_string(), vec![a, b, self.and[a][b]]));
            }
        }
        FiniteCsp {
            num_vertices: n,
            domain,
            constraints,
        }
    }
}

/// A prime ideal of a non-trivial finite Boolean algebra, realized as a
/// homomorphism onto 2 found by encoding the relational presentation and
/// solving. The algebra laws are checked first.
pub fn prime_ideal(ba: &BooleanAlgebra) -> Result<Vec<usize>, SolverError> {
    ba.check_laws()?;
    if ba.top == ba.bottom() {
        return Err(SolverError::TrivialAlgebra);
    }
    let csp = ba.to_csp();
    match solve(&csp)? {
        Some(h) => {
            debug_assert!(ba.is_two_valued_homomorphism(&h));
            Ok(h)
        }
        // BPIT: a non-trivial finite Boolean algebra always has one.
        None => Err(SolverError::Inconsistent),
    }
}

/// The free Boolean algebra on `generators` generators, presented as the
/// powerset of the 2^generators truth assignments; element index i is the
/// set of assignments with bit i set.
pub fn free_boolean_algebra(generators: u32) -> BooleanAlgebra {
    let points = 1usize << generators; // truth assignments
    let n = 1usize << points; // subsets of assignments
    let full = n - 1;
    let mut and = vec![vec![0usize; n]; n];
    let mut not = vec![0usize; n];
    for (a, row) in and.iter_mut().enumerate() {
        not[a] = full & !a;
        for (b, cell) in row.iter_mut().enumerate() {
            *cell = a & b;
        }
    }
    let elements = (0..n).map(|a| format!("e{a}")).collect();
    BooleanAlgebra {
        elements,
        top: full,
        and,
        not,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_different_domain(k: usize) -> FiniteDomain {
        let mut neq = BTreeSet::new();
        for x in 0..k {
            for y in 0..k {
                if x != y {
                    neq.insert(vec![x, y]);
                }
            }
        }
        FiniteDomain {
            elements: (0..k).map(|c| format!("c{c}")).collect(),
            relations: BTreeMap::from([("neq".to_string(), neq)]),
        }
    }

    fn coloring_csp(n: usize, colors: usize, edges: &[(usize, usize)]) -> FiniteCsp {
        FiniteCsp {
            num_vertices: n,
            domain: all_different_domain(colors),
            constraints: edges
                .iter()
                .map(|&(a, b)| ("neq".to_string(), vec![a, b]))
                .collect(),
        }
    }

    #[test]
    fn triangle_three_colorable_k4_not() {
        let triangle = coloring_csp(3, 3, &[(0, 1), (1, 2), (0, 2)]);
        let sol = solve(&triangle).unwrap().unwrap();
        assert!(triangle.check_assignment(&sol));
        let k4 = coloring_csp(4, 3, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert_eq!(solve(&k4).unwrap(), None);
        assert_eq!(brute_force(&k4, 1_000_000).unwrap(), None);
    }

    #[test]
    fn pigeonhole_unsat() {
        // 4 pigeons, 3 holes, all pairwise different
        let mut edges = Vec::new();
        for a in 0..4 {
            for b in a + 1..4 {
                edges.push((a, b));
            }
        }
        let csp = coloring_csp(4, 3, &edges);
        assert_eq!(solve(&csp).unwrap(), None);
    }

    #[test]
    fn encoding_counts_match_closed_forms() {
        let csp = coloring_csp(5, 4, &[(0, 1), (2, 3)]);
        let cnf = encode_tsc(&csp);
        let v0 = csp.num_vertices;
        let d = csp.domain.size();
        let t_clauses = cnf.clauses.iter().filter(|c| c.iter().all(|&l| l > 0)).count();
        let s_clauses = cnf
            .clauses
            .iter()
            .filter(|c| c.len() == 2 && c.iter().all(|&l| l < 0))
            .filter(|c| {
                // same vertex on both literals
                let v1 = ((-c[0] - 1) as usize) / d;
                let v2 = ((-c[1] - 1) as usize) / d;
                v1 == v2
            })
            .count();
        assert_eq!(t_clauses, v0);
        assert_eq!(s_clauses, v0 * d * (d - 1) / 2);
        assert_eq!(cnf.num_vars, v0 * d);
    }

    pub(crate) fn random_csp(rng: &mut ChaCha8Rng) -> FiniteCsp {
        let n = rng.gen_range(1..=6);
        let d: usize = rng.gen_range(1..=3);
        let mut relations = BTreeMap::new();
        let n_rels = rng.gen_range(1..=2);
        let mut rel_arities = Vec::new();
        for r in 0..n_rels {
            let k: usize = rng.gen_range(1..=2);
            let mut tuples = BTreeSet::new();
            let total = d.pow(k as u32);
            for combo in 0..total {
                if rng.gen_bool(0.6) {
                    let mut t = Vec::new();
                    let mut c = combo;
                    for _ in 0..k {
                        t.push(c % d);
                        c /= d;
                    }
                    tuples.insert(t);
                }
            }
            relations.insert(format!("r{r}"), tuples);
            rel_arities.push((format!("r{r}"), k));
        }
        let domain = FiniteDomain {
            elements: (0..d).map(|e| format!("e{e}")).collect(),
            relations,
        };
        let mut constraints = Vec::new();
        for _ in 0..rng.gen_range(0..=8) {
            let (rel, k) = rel_arities[rng.gen_range(0..rel_arities.len())].clone();
            let idxs = (0..k).map(|_| rng.gen_range(0..n)).collect();
            constraints.push((rel, idxs));
        }
        FiniteCsp {
            num_vertices: n,
            domain,
            constraints,
        }
    }

    #[test]
    fn dpll_agrees_with_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC5B0);
        for i in 0..100 {
            let csp = random_csp(&mut rng);
            let fast = solve(&csp).unwrap();
            let slow = brute_force(&csp, 10_000_000).unwrap();
            assert_eq!(fast.is_some(), slow.is_some(), "instance {i}: {csp:?}");
            if let Some(sol) = fast {
                assert!(csp.check_assignment(&sol), "instance {i}");
            }
        }
    }

    #[test]
    fn brute_force_budget() {
        let csp = coloring_csp(4, 3, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert_eq!(
            brute_force(&csp, 2),
            Err(SolverError::BudgetExceeded(2))
        );
    }

    #[test]
    fn dimacs_header_matches_body() {
        let csp = coloring_csp(3, 3, &[(0, 1), (1, 2), (0, 2)]);
        let cnf = encode_tsc(&csp);
        let g = GroundInstance {
            vertices: (0..3)
                .map(|i| ("V".to_string(), vec![crate::atoms::Atom::from_int(i)]))
                .collect(),
            constraints: csp.constraints.clone(),
            pool: vec![],
        };
        let text = to_dimacs(&cnf, &g, &csp.domain);
        let header: Vec<&str> = text
            .lines()
            .find(|l| l.starts_with("p cnf"))
            .unwrap()
            .split_whitespace()
            .collect();
        let n_vars: usize = header[2].parse().unwrap();
        let n_clauses: usize = header[3].parse().unwrap();
        assert_eq!(n_vars, cnf.num_vars);
        let body: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('c') && !l.starts_with("p "))
            .collect();
        assert_eq!(body.len(), n_clauses);
        for line in body {
            assert!(line.ends_with(" 0"));
            for tok in line.split_whitespace() {
                let lit: i64 = tok.parse().unwrap();
                assert!(lit.unsigned_abs() as usize <= n_vars);
            }
        }
        // comment block names every propositional variable
        assert_eq!(text.lines().filter(|l| l.starts_with("c var ")).count(), n_vars);
    }

    #[test]
    fn free_algebra_laws_and_prime_ideals() {
        for g in [1u32, 2] {
            let ba = free_boolean_algebra(g);
            ba.check_laws().unwrap();
            let h = prime_ideal(&ba).unwrap();
            assert!(ba.is_two_valued_homomorphism(&h));
            // count all homomorphisms to 2 exhaustively
            let n = ba.elements.len();
            let mut count = 0;
            for mask in 0..(1usize << n) {
                let h: Vec<usize> = (0..n).map(|i| (mask >> i) & 1).collect();
                if ba.is_two_valued_homomorphism(&h) {
                    count += 1;
                }
            }
            assert_eq!(count, 1usize << g, "free algebra on {g} generators");
        }
    }

    #[test]
    fn trivial_algebra_rejected() {
        let ba = BooleanAlgebra {
            elements: vec!["x".into()],
            top: 0,
            and: vec![vec![0]],
            not: vec![0],
        };
        assert_eq!(prime_ideal(&ba), Err(SolverError::TrivialAlgebra));
    }

    #[test]
    fn broken_algebra_rejected() {
        let mut ba = free_boolean_algebra(1);
        ba.not[0] = 0; // negation no longer involutive / complement law broken
        assert!(matches!(ba.check_laws(), Err(SolverError::AlgebraLaw(_))));
    }
}
